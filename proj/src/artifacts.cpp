#include "camsticker/artifacts.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "camsticker/sha256.hpp"

namespace camsticker {

void to_json(nlohmann::json& j, const DotParams& d) {
  j = {{"color", d.color},     {"center", {d.center_i, d.center_j}},
       {"radius", d.radius},   {"alpha_max", d.alpha_max},
       {"beta", d.beta}};
}

void from_json(const nlohmann::json& j, DotParams& d) {
  j.at("color").get_to(d.color);
  d.center_i = j.at("center").at(0);
  d.center_j = j.at("center").at(1);
  d.radius = j.at("radius");
  d.alpha_max = j.at("alpha_max");
  d.beta = j.at("beta");
}

void to_json(nlohmann::json& j, const StickerPattern& p) {
  j = {{"dots", p.dots}};
}

void from_json(const nlohmann::json& j, StickerPattern& p) {
  j.at("dots").get_to(p.dots);
}

void to_json(nlohmann::json& j, const SharedDotShape& s) {
  j = {{"radius", s.radius}, {"alpha_max", s.alpha_max}, {"beta", s.beta}};
}

void from_json(const nlohmann::json& j, SharedDotShape& s) {
  s.radius = j.at("radius");
  s.alpha_max = j.at("alpha_max");
  s.beta = j.at("beta");
}

void to_json(nlohmann::json& j, const GridSpec& g) {
  j = {{"rows", g.rows}, {"cols", g.cols}, {"spacing", g.spacing}};
}

void from_json(const nlohmann::json& j, GridSpec& g) {
  g.rows = j.at("rows");
  g.cols = j.at("cols");
  g.spacing = j.at("spacing");
}

void to_json(nlohmann::json& j, const ThreatModel& t) {
  j = {{"shape", t.shape},
       {"palette", t.palette},
       {"grid", t.grid},
       {"max_dots", t.max_dots}};
}

void from_json(const nlohmann::json& j, ThreatModel& t) {
  j.at("shape").get_to(t.shape);
  j.at("palette").get_to(t.palette);
  j.at("grid").get_to(t.grid);
  t.max_dots = j.at("max_dots");
}

void to_json(nlohmann::json& j, const ColorCalibration& c) {
  j = {{"k", c.k}, {"b", c.b}};
}

void from_json(const nlohmann::json& j, ColorCalibration& c) {
  j.at("k").get_to(c.k);
  j.at("b").get_to(c.b);
}

void to_json(nlohmann::json& j, const FoolingReport& r) {
  j = {{"n_images", r.n_images},
       {"n_failed", r.n_failed},
       {"fraction_correct", r.fraction_correct},
       {"fraction_target", r.fraction_target},
       {"fraction_other", r.fraction_other},
       {"predictions", r.predictions}};
}

void from_json(const nlohmann::json& j, FoolingReport& r) {
  r.n_images = j.at("n_images");
  r.n_failed = j.at("n_failed");
  r.fraction_correct = j.at("fraction_correct");
  r.fraction_target = j.at("fraction_target");
  r.fraction_other = j.at("fraction_other");
  j.at("predictions").get_to(r.predictions);
}

nlohmann::json attack_result_to_json(const AttackResult& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const LossTracePoint& p : r.loss_trace) {
    trace.push_back({{"sweep", p.sweep}, {"loss", p.loss}, {"phase", p.phase}});
  }
  auto stage = [](const StageSummary& s) {
    return nlohmann::json{{"loss", s.loss},
                          {"fraction_correct", s.fraction_correct},
                          {"fraction_target", s.fraction_target},
                          {"fraction_other", s.fraction_other}};
  };
  return nlohmann::json{{"pattern", r.pattern},
                        {"assigned_cell", r.assigned_cell},
                        {"assigned_color", r.assigned_color},
                        {"loss_trace", trace},
                        {"post_greedy", stage(r.post_greedy)},
                        {"post_fine_tune", stage(r.post_fine_tune)},
                        {"fine_tuned", r.fine_tuned},
                        {"seed", r.seed}};
}

AttackResult attack_result_from_json(const nlohmann::json& j) {
  AttackResult r;
  j.at("pattern").get_to(r.pattern);
  j.at("assigned_cell").get_to(r.assigned_cell);
  j.at("assigned_color").get_to(r.assigned_color);
  for (const auto& p : j.at("loss_trace")) {
    r.loss_trace.push_back({p.at("sweep"), p.at("loss"), p.at("phase")});
  }
  auto stage = [](const nlohmann::json& s) {
    StageSummary out;
    out.loss = s.at("loss");
    out.fraction_correct = s.at("fraction_correct");
    out.fraction_target = s.at("fraction_target");
    out.fraction_other = s.at("fraction_other");
    return out;
  };
  r.post_greedy = stage(j.at("post_greedy"));
  r.post_fine_tune = stage(j.at("post_fine_tune"));
  r.fine_tuned = j.at("fine_tuned");
  r.seed = j.at("seed");
  return r;
}

void save_artifact(const std::string& path, const nlohmann::json& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write artifact: " + path);
  out << body.dump(2) << "\n";
  if (!out) throw std::runtime_error("failed writing artifact: " + path);
}

nlohmann::json load_artifact(const std::string& path,
                             const std::string& expected_schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open artifact: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed artifact " + path + ": " + e.what());
  }
  if (!expected_schema.empty()) {
    std::string got = j.value("schema", "");
    if (got != expected_schema) {
      throw std::runtime_error("artifact " + path + " has schema '" + got +
                               "', expected '" + expected_schema + "'");
    }
  }
  return j;
}

std::string artifact_hash(const nlohmann::json& body) {
  return sha256_hex(body.dump());
}

std::string report_to_text(const FoolingReport& clean,
                           const FoolingReport& attacked,
                           const std::string& attack_name) {
  char buf[256];
  std::string out;
  out += "Class                     Attack   Correct   Target    Other\n";
  std::snprintf(buf, sizeof(buf), "%-25s %-8s %6.1f%%   %5.1f%%   %5.1f%%\n",
                attack_name.c_str(), "No", 100.0 * clean.fraction_correct,
                100.0 * clean.fraction_target, 100.0 * clean.fraction_other);
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-25s %-8s %6.1f%%   %5.1f%%   %5.1f%%\n",
                attack_name.c_str(), "Yes", 100.0 * attacked.fraction_correct,
                100.0 * attacked.fraction_target,
                100.0 * attacked.fraction_other);
  out += buf;
  return out;
}

}  // namespace camsticker
