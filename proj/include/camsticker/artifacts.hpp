#pragma once

#include <string>

#include <json.hpp>

#include "camsticker/attack.hpp"
#include "camsticker/calib.hpp"
#include "camsticker/eval.hpp"

namespace camsticker {

inline constexpr const char* kToolVersion = "0.1.0";

// Schema ids of the structured-text artifact family.
inline constexpr const char* kSchemaCalibration = "camsticker/calibration@1";
inline constexpr const char* kSchemaThreatModel = "camsticker/threat-model@1";
inline constexpr const char* kSchemaAttack = "camsticker/attack@1";
inline constexpr const char* kSchemaReport = "camsticker/report@1";
inline constexpr const char* kSchemaSweep = "camsticker/sweep@1";

// nlohmann ADL hooks for the domain types.
void to_json(nlohmann::json& j, const DotParams& d);
void from_json(const nlohmann::json& j, DotParams& d);
void to_json(nlohmann::json& j, const StickerPattern& p);
void from_json(const nlohmann::json& j, StickerPattern& p);
void to_json(nlohmann::json& j, const SharedDotShape& s);
void from_json(const nlohmann::json& j, SharedDotShape& s);
void to_json(nlohmann::json& j, const GridSpec& g);
void from_json(const nlohmann::json& j, GridSpec& g);
void to_json(nlohmann::json& j, const ThreatModel& t);
void from_json(const nlohmann::json& j, ThreatModel& t);
void to_json(nlohmann::json& j, const ColorCalibration& c);
void from_json(const nlohmann::json& j, ColorCalibration& c);
void to_json(nlohmann::json& j, const FoolingReport& r);
void from_json(const nlohmann::json& j, FoolingReport& r);

nlohmann::json attack_result_to_json(const AttackResult& r);
AttackResult attack_result_from_json(const nlohmann::json& j);

/// Writes an artifact: dump(2) plus a trailing newline, no timestamps, so a
/// rerun with identical inputs is byte-identical.
void save_artifact(const std::string& path, const nlohmann::json& body);

/// Loads an artifact, verifying its schema id when one is expected.
nlohmann::json load_artifact(const std::string& path,
                             const std::string& expected_schema = "");

/// Canonical content hash of an artifact body.
std::string artifact_hash(const nlohmann::json& body);

/// Plain-text report table (clean row vs attack row).
std::string report_to_text(const FoolingReport& clean,
                           const FoolingReport& attacked,
                           const std::string& attack_name);

}  // namespace camsticker
