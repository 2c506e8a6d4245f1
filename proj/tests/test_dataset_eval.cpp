#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "camsticker/dataset.hpp"
#include "camsticker/eval.hpp"
#include "camsticker/rng.hpp"
#include "test_util.hpp"

using namespace camsticker;
using namespace testutil;

namespace fs = std::filesystem;

namespace {

class FixedBackend : public ClassifierBackend {
 public:
  FixedBackend(int classes, int winner) : classes_(classes), winner_(winner) {}
  int num_classes() const override { return classes_; }
  bool concurrent_safe() const override { return true; }
  std::vector<Logits> forward(const std::vector<Image>& images) const override {
    std::vector<Logits> out(images.size(), Logits(classes_, 0.0));
    for (auto& z : out) z[winner_] = 1.0;
    return out;
  }

 private:
  int classes_, winner_;
};

// Fails on images whose top-left red channel exceeds a threshold.
class FlakyBackend : public ClassifierBackend {
 public:
  int num_classes() const override { return 3; }
  bool concurrent_safe() const override { return true; }
  std::vector<Logits> forward(const std::vector<Image>& images) const override {
    std::vector<Logits> out;
    for (const Image& img : images) {
      if (img.at(0, 0, 0) > 0.5) {
        throw std::runtime_error("synthetic backend failure");
      }
      out.push_back(Logits{1.0, 0.0, 0.0});
    }
    return out;
  }
};

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("shapes dataset is byte-identical across generations") {
  LabeledDataset a = synth_shapes_dataset(31337, 6, 0.5);
  LabeledDataset b = synth_shapes_dataset(31337, 6, 0.5);
  REQUIRE(a.items.size() == b.items.size());
  for (std::size_t k = 0; k < a.items.size(); ++k) {
    CHECK(a.items[k].image.data == b.items[k].image.data);
    CHECK(a.items[k].split == b.items[k].split);
  }
  LabeledDataset c = synth_shapes_dataset(31338, 6, 0.5);
  CHECK(a.items[0].image.data != c.items[0].image.data);
}

TEST_CASE("shapes dataset has exact class balance and split sizes") {
  LabeledDataset ds = synth_shapes_dataset(5, 10, 0.6);
  CHECK(ds.items.size() == 30);
  CHECK(ds.num_classes == 3);
  for (int cls = 0; cls < 3; ++cls) {
    CHECK(ds.count_of(cls) == 10);
    CHECK(ds.count_of(cls, kSplitTrainAttack) == 6);
    CHECK(ds.count_of(cls, kSplitTest) == 4);
  }
  for (const auto& item : ds.items) {
    for (double v : item.image.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("materialized dataset round-trips through the manifest") {
  TempDir tmp("camsticker-ds-roundtrip");
  LabeledDataset ds = synth_shapes_dataset(99, 4, 0.5);
  std::string manifest = materialize_dataset(ds, tmp.path.string());
  LabeledDataset loaded = load_dataset_manifest(manifest);
  REQUIRE(loaded.items.size() == ds.items.size());
  CHECK(loaded.num_classes == 3);
  for (std::size_t k = 0; k < ds.items.size(); ++k) {
    CHECK(loaded.items[k].label == ds.items[k].label);
    CHECK(loaded.items[k].split == ds.items[k].split);
    // PNG round-trip quantizes to 8 bits.
    CHECK(max_abs_diff(loaded.items[k].image, ds.items[k].image) <= 0.5 / 255.0 + 1e-9);
  }
}

TEST_CASE("manifest with a missing file is rejected by name") {
  TempDir tmp("camsticker-ds-missing");
  std::ofstream out(tmp.path / "dataset.json");
  out << R"({"items":[{"path":"nope/void.png","class":0,"split":"test"}]})";
  out.close();
  try {
    load_dataset_manifest((tmp.path / "dataset.json").string());
    FAIL("expected rejection");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("void.png") != std::string::npos);
  }
}

TEST_CASE("empty pattern under an always-correct classifier scores (1,0,0)") {
  Rng rng(601);
  std::vector<Image> images;
  for (int m = 0; m < 7; ++m) images.push_back(random_image(16, 16, rng));
  FixedBackend backend(3, 0);
  FoolingReport rep = evaluate_fooling({}, images, 0, 2, backend);
  CHECK(rep.n_images == 7);
  CHECK(rep.n_failed == 0);
  CHECK(rep.fraction_correct == 1.0);
  CHECK(rep.fraction_target == 0.0);
  CHECK(rep.fraction_other == 0.0);
}

TEST_CASE("constant-target classifier scores (0,1,0)") {
  Rng rng(603);
  std::vector<Image> images = {random_image(16, 16, rng),
                               random_image(16, 16, rng)};
  FixedBackend backend(3, 2);
  FoolingReport rep = evaluate_fooling({}, images, 0, 2, backend);
  CHECK(rep.fraction_correct == 0.0);
  CHECK(rep.fraction_target == 1.0);
  CHECK(rep.fraction_other == 0.0);
}

TEST_CASE("report fractions always partition to one") {
  Rng rng(607);
  LinearBackend net(12, 12, 4, 5);
  std::vector<Image> images;
  for (int m = 0; m < 11; ++m) images.push_back(random_image(12, 12, rng));
  FoolingReport rep = evaluate_fooling({}, images, 0, 1, net);
  CHECK(rep.fraction_correct + rep.fraction_target + rep.fraction_other ==
        doctest::Approx(1.0).epsilon(1e-9));
  // Purity: a second run is identical.
  FoolingReport rep2 = evaluate_fooling({}, images, 0, 1, net);
  CHECK(rep.predictions == rep2.predictions);
}

TEST_CASE("failed classifications are excluded and counted") {
  std::vector<Image> images = {Image(12, 12, 0.2), Image(12, 12, 0.9),
                               Image(12, 12, 0.3), Image(12, 12, 0.8)};
  FlakyBackend backend;
  FoolingReport rep = evaluate_fooling({}, images, 0, 1, backend);
  CHECK(rep.n_failed == 2);
  CHECK(rep.predictions[1] == -1);
  CHECK(rep.predictions[3] == -1);
  CHECK(rep.fraction_correct == 1.0);  // both surviving items predict class 0
  CHECK(rep.fraction_correct + rep.fraction_target + rep.fraction_other ==
        doctest::Approx(1.0));
}

TEST_CASE("sweep rows reproduce as independent runs with the row seed") {
  LabeledDataset ds = synth_shapes_dataset(71, 8, 0.5);
  auto backend = std::make_shared<LinearBackend>(64, 64, 3, 17);

  ThreatModel tm;
  tm.shape = {5.0, 0.35, 1.0};
  tm.palette = {{1, 0, 0}, {0, 0, 1}};
  tm.grid = GridSpec{5, 5, 10.0};
  tm.max_dots = 10;

  AttackConfig base;
  base.victim_class = 0;
  base.target_class = 1;
  base.threat_model = tm;
  base.options.seed = 12345;
  base.options.max_sweeps = 2;
  base.options.fine_tune_steps = 10;

  auto rows = dot_count_sweep(base, ds, {2}, *backend);
  REQUIRE(rows.size() == 1);
  CHECK_FALSE(rows[0].failed);

  // Independent single run with the row-derived seed.
  std::vector<Image> attack_images = ds.images_of(0, kSplitTrainAttack);
  AttackConfig cfg = base;
  cfg.num_dots = 2;
  cfg.images = &attack_images;
  cfg.options.seed = sweep_row_seed(base.options.seed, 2);
  AttackResult res = greedy_coordinate_descent(cfg, *backend);
  res = fine_tune_positions(res, cfg, *backend);
  FoolingReport rep = evaluate_fooling(res.pattern, ds, kSplitTest, 0, 1,
                                       *backend);
  CHECK(rows[0].targeted_rate == rep.fraction_target);
  CHECK(rows[0].correct_rate == rep.fraction_correct);
}

TEST_CASE("a failing sweep row is marked and the sweep continues") {
  LabeledDataset ds = synth_shapes_dataset(73, 4, 0.5);
  auto backend = std::make_shared<LinearBackend>(64, 64, 3, 19);
  ThreatModel tm;
  tm.shape = {5.0, 0.35, 1.0};
  tm.palette = {{1, 0, 0}};
  tm.grid = GridSpec{3, 3, 16.0};
  tm.max_dots = 4;
  AttackConfig base;
  base.victim_class = 0;
  base.target_class = 2;
  base.threat_model = tm;
  base.options.max_sweeps = 1;
  base.options.fine_tune_steps = 5;

  auto rows = dot_count_sweep(base, ds, {7, 1}, *backend);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].failed);
  CHECK(!rows[0].error.empty());
  CHECK_FALSE(rows[1].failed);
}
