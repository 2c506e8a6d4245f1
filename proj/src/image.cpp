#include "camsticker/image.hpp"

#include <cmath>
#include <stdexcept>

namespace camsticker {

double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("max_abs_diff: image shapes differ");
  }
  double m = 0.0;
  for (std::size_t n = 0; n < a.data.size(); ++n) {
    double d = std::fabs(a.data[n] - b.data[n]);
    if (d > m) m = d;
  }
  return m;
}

bool all_finite(const Image& x) {
  for (double v : x.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace camsticker
