#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "camsticker/classifier.hpp"
#include "camsticker/image.hpp"
#include "camsticker/perturb.hpp"

namespace camsticker {

/// Clean/dotted photo pair of the same rigid scene.
struct CapturePair {
  Image clean;   // view without the dot
  Image dotted;  // same scene with the printed dot in front of the lens
  double hint_i = 0.0;  // approximate dot center, row
  double hint_j = 0.0;  // approximate dot center, column
  Color printed_color{0.0, 0.0, 0.0};  // RGB sent to the printer
};

/// Per-channel affine map from printed to observed color:
/// observed = k * printed + b, clamped to [0,1] when applied.
struct ColorCalibration {
  Color k{1.0, 1.0, 1.0};
  Color b{0.0, 0.0, 0.0};

  Color apply(const Color& printed) const {
    return {clamp01(k[0] * printed[0] + b[0]),
            clamp01(k[1] * printed[1] + b[1]),
            clamp01(k[2] * printed[2] + b[2])};
  }
};

struct ColorFit {
  ColorCalibration calibration;
  Color residual_rms{0.0, 0.0, 0.0};
};

/// Per-channel least squares of observed = k * printed + b over
/// (printed, observed) pairs. Needs >= 2 pairs and a non-constant printed
/// value in every channel; a degenerate channel is rejected by name.
ColorFit fit_color_transform(
    const std::vector<std::pair<Color, Color>>& pairs);

/// Dot shape shared by every physical dot: what the camera optics impose.
struct SharedDotShape {
  double radius = 40.0;
  double alpha_max = 0.3;
  double beta = 1.0;
};

/// Uniform square grid of candidate dot centers, centered on the frame.
struct GridSpec {
  int rows = 45;
  int cols = 45;
  double spacing = 5.0;  // pixels between adjacent centers
};

/// Default grid for a frame: 45x45 with spacing round(min_side / 45)
/// (5 px on a 224x224 frame, leaving the classic 2 px margin).
GridSpec default_grid(int height, int width);

/// Centers of the grid cells in row-major order for a given frame.
std::vector<std::pair<double, double>> grid_points(const GridSpec& grid,
                                                   int height, int width);

/// The fitted threat model: everything the attacker is allowed to use.
struct ThreatModel {
  SharedDotShape shape;
  std::vector<Color> palette;
  GridSpec grid;
  int max_dots = 10;
};

/// Block-coordinate-descent schedule shared by the fitting routines.
struct FitOptions {
  int inner_steps = 50;      // gradient steps per block
  int max_sweeps = 20;       // outer passes over the blocks
  double sweep_tol = 1e-5;   // SSIM improvement ending the outer loop
  double inner_tol = 1e-7;   // SSIM improvement ending a block early
  double step0 = 1.0;        // initial line-search step, natural units
  double armijo_c = 1e-4;
  int max_halvings = 30;
};

struct SingleDotFit {
  DotParams dot;
  double ssim = 0.0;
  /// False when the full schedule failed to improve on the initialization
  /// (a warning, not an error).
  bool improved = true;
};

/// Maximizes SSIM(apply_dot(clean, theta), dotted) by projected block
/// coordinate descent over (center; color; alpha_max; beta; radius).
/// Initialization: center from the hint, color from the calibrated printed
/// color, shape from shape_init.
SingleDotFit fit_single_dot(const CapturePair& pair,
                            const SharedDotShape& shape_init,
                            const ColorCalibration& calibration,
                            const FitOptions& opts = {});

struct SharedShapeFit {
  SharedDotShape shape;
  struct PairFit {
    double center_i = 0.0;
    double center_j = 0.0;
    Color color{0.0, 0.0, 0.0};
    double ssim = 0.0;
  };
  std::vector<PairFit> pairs;
  double mean_ssim = 0.0;
};

/// Alternating fit of one shape across many capture pairs: per-pair
/// center/color blocks with the shape frozen, then shared-shape blocks by
/// gradient ascent on the mean SSIM over all pairs.
SharedShapeFit fit_shared_shape(const std::vector<CapturePair>& pairs,
                                const SharedDotShape& shape_init,
                                const ColorCalibration& calibration,
                                const FitOptions& opts = {});

struct PaletteOptions {
  int trials_per_color = 20;
  int palette_size = 10;
  std::uint64_t seed = 0;
};

struct PaletteSelection {
  std::vector<Color> palette;            // winners, best first
  std::vector<double> palette_scores;    // misclassification rates, aligned
  std::vector<double> candidate_scores;  // rate per input candidate
};

/// Scores each candidate color by how often a single dot of that color at a
/// uniformly random grid location flips the classifier's clean prediction,
/// then keeps the palette_size best (ties broken by candidate order).
/// Placement uses a deterministic per-(color, trial) seed, so results do not
/// depend on scheduling.
PaletteSelection select_palette(const std::vector<Color>& candidates,
                                const ClassifierBackend& classifier,
                                const std::vector<Image>& images,
                                const SharedDotShape& shape,
                                const GridSpec& grid,
                                const PaletteOptions& opts);

/// Shipped candidate pool: a 5x5x5 uniform RGB lattice pushed through the
/// color calibration (out-of-gamut entries clamp).
std::vector<Color> default_color_candidates(const ColorCalibration& calib);

}  // namespace camsticker
