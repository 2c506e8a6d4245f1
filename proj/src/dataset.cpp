#include "camsticker/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "camsticker/image_io.hpp"
#include "camsticker/rng.hpp"

namespace fs = std::filesystem;

namespace camsticker {

std::vector<Image> LabeledDataset::images_of(int label,
                                             const std::string& split) const {
  std::vector<Image> out;
  for (const DatasetItem& item : items) {
    if (item.label == label && (split.empty() || item.split == split)) {
      out.push_back(item.image);
    }
  }
  return out;
}

std::size_t LabeledDataset::count_of(int label,
                                     const std::string& split) const {
  std::size_t n = 0;
  for (const DatasetItem& item : items) {
    if (item.label == label && (split.empty() || item.split == split)) ++n;
  }
  return n;
}

LabeledDataset load_dataset_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) {
    throw std::runtime_error("cannot open dataset manifest: " + manifest_path);
  }
  nlohmann::json j;
  in >> j;

  const fs::path base = fs::path(manifest_path).parent_path();
  LabeledDataset ds;
  for (const auto& e : j.at("items")) {
    DatasetItem item;
    item.path = e.at("path").get<std::string>();
    item.label = e.at("class").get<int>();
    item.split = e.value("split", std::string(kSplitTest));
    fs::path p = item.path;
    if (p.is_relative()) p = base / p;
    if (!fs::exists(p)) {
      throw std::runtime_error("dataset manifest references missing file: " +
                               p.string());
    }
    item.path = p.string();
    ds.num_classes = std::max(ds.num_classes, item.label + 1);
    ds.items.push_back(std::move(item));
  }

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < ds.items.size(); ++k) {
    ds.items[k].image = load_image(ds.items[k].path);
  }
  return ds;
}

namespace {

Color hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  double c = v * s;
  double hp = h * 6.0;
  double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  double m = v - c;
  return {r + m, g + m, b + m};
}

// Signed distance (pixels, positive outside) to the class shape.
double shape_sdf(int cls, double di, double dj, double size) {
  switch (cls) {
    case 0:  // disk
      return std::sqrt(di * di + dj * dj) - size;
    case 1:  // axis-aligned square, half-side = size
      return std::max(std::fabs(di), std::fabs(dj)) - size;
    default: {  // equilateral triangle pointing up, circumradius = size
      // Vertices: apex (-size, 0), base (+size/2, -+size*sqrt(3)/2).
      const double s3 = std::sqrt(3.0);
      // Max of signed distances to the three outward edge lines.
      double e0 = (di - size / 2.0);                                // base
      double e1 = (-di / 2.0 - s3 / 2.0 * dj - size / 2.0);         // left
      double e2 = (-di / 2.0 + s3 / 2.0 * dj - size / 2.0);         // right
      return std::max({e0, e1, e2});
    }
  }
}

Image render_shape(int cls, Rng& rng) {
  const int side = 64;
  Image img(side, side);

  Color bg = {rng.uniform(0.35, 0.55), rng.uniform(0.35, 0.55),
              rng.uniform(0.35, 0.55)};
  Color fg = hsv_to_rgb(rng.uniform(), rng.uniform(0.8, 1.0),
                        rng.uniform(0.8, 1.0));
  double ci = rng.uniform(24.0, 40.0);
  double cj = rng.uniform(24.0, 40.0);
  double size = rng.uniform(11.0, 18.0);

  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      double cov = clamp01(0.5 - shape_sdf(cls, i - ci, j - cj, size));
      for (int c = 0; c < 3; ++c) {
        double noise = rng.uniform(-0.04, 0.04);
        double v = bg[c] + noise;
        v += cov * (fg[c] - v);
        img.at(i, j, c) = clamp01(v);
      }
    }
  }
  return img;
}

}  // namespace

LabeledDataset synth_shapes_dataset(std::uint64_t seed, int n_per_class,
                                    double train_fraction) {
  if (n_per_class < 1) {
    throw std::invalid_argument("synth_shapes_dataset: n_per_class must be >= 1");
  }
  LabeledDataset ds;
  ds.num_classes = 3;
  const int n_train = static_cast<int>(std::lround(n_per_class * train_fraction));
  for (int cls = 0; cls < 3; ++cls) {
    for (int k = 0; k < n_per_class; ++k) {
      Rng rng(seed, static_cast<std::uint64_t>(cls),
              static_cast<std::uint64_t>(k));
      DatasetItem item;
      item.label = cls;
      item.split = k < n_train ? kSplitTrainAttack : kSplitTest;
      item.path = "synth://shapes/" + std::to_string(cls) + "/" +
                  std::to_string(k) + ".png";
      item.image = render_shape(cls, rng);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

std::string materialize_dataset(const LabeledDataset& dataset,
                                const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t k = 0; k < dataset.items.size(); ++k) {
    const DatasetItem& item = dataset.items[k];
    std::string rel = item.split + "/" + std::to_string(item.label) + "_" +
                      std::to_string(k) + ".png";
    fs::path p = fs::path(dir) / rel;
    fs::create_directories(p.parent_path());
    save_image(item.image, p.string());
    items.push_back({{"path", rel}, {"class", item.label}, {"split", item.split}});
  }
  nlohmann::json j;
  j["schema"] = "camsticker/dataset@1";
  j["items"] = items;
  fs::path mp = fs::path(dir) / "dataset.json";
  std::ofstream out(mp);
  out << j.dump(2) << "\n";
  return mp.string();
}

}  // namespace camsticker
