#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "apl/common.hpp"

namespace apl {

// Dense CHW tensor, double precision. Masks, saliency maps and weight maps use c == 1.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill_value = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill_value) {}

  static Tensor map2d(int h, int w, double fill_value = 0.0) { return Tensor(1, h, w, fill_value); }

  long size() const { return static_cast<long>(c) * h * w; }
  long plane() const { return static_cast<long>(h) * w; }

  double& at(int ci, int y, int x) { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }
  double at(int ci, int y, int x) const { return v[(static_cast<size_t>(ci) * h + y) * w + x]; }

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }

  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  double sum() const {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  double mean() const { return v.empty() ? 0.0 : sum() / static_cast<double>(v.size()); }

  double min_value() const { return *std::min_element(v.begin(), v.end()); }
  double max_value() const { return *std::max_element(v.begin(), v.end()); }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.c) + "x" +
                     std::to_string(a.h) + "x" + std::to_string(a.w) + " vs " + std::to_string(b.c) +
                     "x" + std::to_string(b.h) + "x" + std::to_string(b.w) + ")");
}

}  // namespace apl
