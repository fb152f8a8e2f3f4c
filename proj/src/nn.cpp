#include "apl/nn.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <cmath>

namespace apl {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void zero_grads(const ParamGroup& params) {
  for (Param* p : params) p->zero_grad();
}

size_t param_count(const ParamGroup& params) {
  size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

bool grads_all_zero(const ParamGroup& params) {
  for (const Param* p : params)
    for (double g : p->grad)
      if (g != 0.0) return false;
  return true;
}

void he_normal_init(Param& p, int fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& w : p.value) w = normal(rng, 0.0, stddev);
}

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(std::string name, int in_c_, int out_c_, int ksize, int stride_, int pad_, int dilation)
    : weight(name + ".weight", static_cast<size_t>(out_c_) * in_c_ * ksize * ksize),
      bias(name + ".bias", static_cast<size_t>(out_c_)),
      in_c(in_c_),
      out_c(out_c_),
      k(ksize),
      stride(stride_),
      pad(pad_),
      dil(dilation) {}

void Conv2d::init(Rng& rng) {
  he_normal_init(weight, in_c * k * k, rng);
}

int Conv2d::out_extent(int in) const {
  return (in + 2 * pad - dil * (k - 1) - 1) / stride + 1;
}

void Conv2d::im2col(const Tensor& x, int oh, int ow) {
  const long kk = static_cast<long>(in_c) * k * k;
  const long positions = static_cast<long>(oh) * ow;
  cols_.assign(static_cast<size_t>(kk) * positions, 0.0);
  for (int ci = 0; ci < in_c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const long row = (static_cast<long>(ci) * k + ky) * k + kx;
        double* dst = cols_.data() + row * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky * dil;
          if (iy < 0 || iy >= x.h) {
            dst += ow;
            continue;
          }
          const double* src = &x.v[(static_cast<size_t>(ci) * x.h + iy) * x.w];
          for (int ox = 0; ox < ow; ++ox, ++dst) {
            const int ix = ox * stride - pad + kx * dil;
            if (ix >= 0 && ix < x.w) *dst = src[ix];
          }
        }
      }
    }
  }
}

Tensor Conv2d::forward(const Tensor& x) {
  if (x.c != in_c) throw ShapeError(weight.name + ": expected " + std::to_string(in_c) + " input channels, got " + std::to_string(x.c));
  const int oh = out_extent(x.h);
  const int ow = out_extent(x.w);
  if (oh <= 0 || ow <= 0) throw ShapeError(weight.name + ": input too small for kernel");
  x_ = x;
  im2col(x, oh, ow);

  Tensor y(out_c, oh, ow);
  const long kk = static_cast<long>(in_c) * k * k;
  const long positions = static_cast<long>(oh) * ow;
  ConstMapMat wm(weight.value.data(), out_c, kk);
  ConstMapMat cm(cols_.data(), kk, positions);
  MapMat ym(y.v.data(), out_c, positions);
  ym.noalias() = wm * cm;
  for (int oc = 0; oc < out_c; ++oc) ym.row(oc).array() += bias.value[oc];
  return y;
}

Tensor Conv2d::backward(const Tensor& dy, bool param_grads) {
  const int oh = dy.h, ow = dy.w;
  const long kk = static_cast<long>(in_c) * k * k;
  const long positions = static_cast<long>(oh) * ow;
  im2col(x_, oh, ow);  // rebuild scratch; forward of another image may have clobbered it

  ConstMapMat dym(dy.v.data(), out_c, positions);
  if (param_grads) {
    ConstMapMat cm(cols_.data(), kk, positions);
    MapMat dwm(weight.grad.data(), out_c, kk);
    dwm.noalias() += dym * cm.transpose();
    for (int oc = 0; oc < out_c; ++oc) bias.grad[oc] += dym.row(oc).sum();
  }

  // dcols = W^T * dy, then scatter back to the input grid.
  std::vector<double> dcols(static_cast<size_t>(kk) * positions);
  ConstMapMat wm(weight.value.data(), out_c, kk);
  MapMat dcm(dcols.data(), kk, positions);
  dcm.noalias() = wm.transpose() * dym;

  Tensor dx(x_.c, x_.h, x_.w, 0.0);
  for (int ci = 0; ci < in_c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const long row = (static_cast<long>(ci) * k + ky) * k + kx;
        const double* src = dcols.data() + row * positions;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky * dil;
          if (iy < 0 || iy >= dx.h) {
            src += ow;
            continue;
          }
          double* dst = &dx.v[(static_cast<size_t>(ci) * dx.h + iy) * dx.w];
          for (int ox = 0; ox < ow; ++ox, ++src) {
            const int ix = ox * stride - pad + kx * dil;
            if (ix >= 0 && ix < dx.w) dst[ix] += *src;
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor LeakyRelu::forward(const Tensor& x) {
  x_ = x;
  Tensor y = x;
  for (double& v : y.v)
    if (v < 0.0) v *= slope_;
  return y;
}

Tensor LeakyRelu::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (long i = 0; i < dx.size(); ++i)
    if (x_.v[i] < 0.0) dx.v[i] *= slope_;
  return dx;
}

Tensor SigmoidLayer::forward(const Tensor& x) {
  y_ = x;
  for (double& v : y_.v) v = 1.0 / (1.0 + std::exp(-v));
  return y_;
}

Tensor SigmoidLayer::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (long i = 0; i < dx.size(); ++i) {
    const double s = y_.v[i];
    dx.v[i] *= s * (1.0 - s);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Upsample
// ---------------------------------------------------------------------------

namespace {

// Half-pixel source coordinates for bilinear resampling by an integer factor.
struct LerpIndex {
  int i0, i1;
  double w0, w1;
};

std::vector<LerpIndex> bilinear_table(int out_n, int in_n, int factor) {
  std::vector<LerpIndex> t(out_n);
  for (int o = 0; o < out_n; ++o) {
    double src = (o + 0.5) / factor - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_n - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_n - 1);
    const double w1 = src - i0;
    t[o] = {i0, i1, 1.0 - w1, w1};
  }
  return t;
}

}  // namespace

Tensor Upsample::forward(const Tensor& x) {
  in_c_ = x.c;
  in_h_ = x.h;
  in_w_ = x.w;
  const int oh = x.h * factor_, ow = x.w * factor_;
  Tensor y(x.c, oh, ow);
  if (mode_ == Mode::nearest) {
    for (int ci = 0; ci < x.c; ++ci)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          y.at(ci, oy, ox) = x.at(ci, oy / factor_, ox / factor_);
    return y;
  }
  const auto ty = bilinear_table(oh, x.h, factor_);
  const auto tx = bilinear_table(ow, x.w, factor_);
  for (int ci = 0; ci < x.c; ++ci)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const auto& a = ty[oy];
        const auto& b = tx[ox];
        y.at(ci, oy, ox) = a.w0 * (b.w0 * x.at(ci, a.i0, b.i0) + b.w1 * x.at(ci, a.i0, b.i1)) +
                           a.w1 * (b.w0 * x.at(ci, a.i1, b.i0) + b.w1 * x.at(ci, a.i1, b.i1));
      }
  return y;
}

Tensor Upsample::backward(const Tensor& dy) const {
  Tensor dx(in_c_, in_h_, in_w_, 0.0);
  if (mode_ == Mode::nearest) {
    for (int ci = 0; ci < dy.c; ++ci)
      for (int oy = 0; oy < dy.h; ++oy)
        for (int ox = 0; ox < dy.w; ++ox)
          dx.at(ci, oy / factor_, ox / factor_) += dy.at(ci, oy, ox);
    return dx;
  }
  const auto ty = bilinear_table(dy.h, in_h_, factor_);
  const auto tx = bilinear_table(dy.w, in_w_, factor_);
  for (int ci = 0; ci < dy.c; ++ci)
    for (int oy = 0; oy < dy.h; ++oy)
      for (int ox = 0; ox < dy.w; ++ox) {
        const auto& a = ty[oy];
        const auto& b = tx[ox];
        const double g = dy.at(ci, oy, ox);
        dx.at(ci, a.i0, b.i0) += a.w0 * b.w0 * g;
        dx.at(ci, a.i0, b.i1) += a.w0 * b.w1 * g;
        dx.at(ci, a.i1, b.i0) += a.w1 * b.w0 * g;
        dx.at(ci, a.i1, b.i1) += a.w1 * b.w1 * g;
      }
  return dx;
}

// ---------------------------------------------------------------------------
// Linear / pooling / concat
// ---------------------------------------------------------------------------

Linear::Linear(std::string name, int in_dim_, int out_dim_)
    : weight(name + ".weight", static_cast<size_t>(out_dim_) * in_dim_),
      bias(name + ".bias", static_cast<size_t>(out_dim_)),
      in_dim(in_dim_),
      out_dim(out_dim_) {}

void Linear::init(Rng& rng) {
  he_normal_init(weight, in_dim, rng);
}

std::vector<double> Linear::forward(const std::vector<double>& x) {
  if (static_cast<int>(x.size()) != in_dim) throw ShapeError(weight.name + ": bad input size");
  x_ = x;
  std::vector<double> y(out_dim);
  for (int o = 0; o < out_dim; ++o) {
    double s = bias.value[o];
    const double* w = weight.value.data() + static_cast<size_t>(o) * in_dim;
    for (int i = 0; i < in_dim; ++i) s += w[i] * x[i];
    y[o] = s;
  }
  return y;
}

std::vector<double> Linear::backward(const std::vector<double>& dy, bool param_grads) {
  std::vector<double> dx(in_dim, 0.0);
  for (int o = 0; o < out_dim; ++o) {
    const double g = dy[o];
    const double* w = weight.value.data() + static_cast<size_t>(o) * in_dim;
    if (param_grads) {
      double* dw = weight.grad.data() + static_cast<size_t>(o) * in_dim;
      for (int i = 0; i < in_dim; ++i) dw[i] += g * x_[i];
      bias.grad[o] += g;
    }
    for (int i = 0; i < in_dim; ++i) dx[i] += w[i] * g;
  }
  return dx;
}

std::vector<double> GlobalSumPool::forward(const Tensor& x) {
  c_ = x.c;
  h_ = x.h;
  w_ = x.w;
  std::vector<double> y(x.c, 0.0);
  for (int ci = 0; ci < x.c; ++ci) {
    const double* p = x.v.data() + static_cast<size_t>(ci) * x.plane();
    double s = 0.0;
    for (long i = 0; i < x.plane(); ++i) s += p[i];
    y[ci] = s;
  }
  return y;
}

Tensor GlobalSumPool::backward(const std::vector<double>& dy) const {
  Tensor dx(c_, h_, w_);
  for (int ci = 0; ci < c_; ++ci) {
    double* p = dx.v.data() + static_cast<size_t>(ci) * dx.plane();
    for (long i = 0; i < dx.plane(); ++i) p[i] = dy[ci];
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w) throw ShapeError("concat_channels: spatial mismatch");
  Tensor y(a.c + b.c, a.h, a.w);
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + a.v.size());
  return y;
}

void split_channels(const Tensor& dy, int c_a, Tensor* da, Tensor* db) {
  const size_t na = static_cast<size_t>(c_a) * dy.plane();
  if (da) {
    *da = Tensor(c_a, dy.h, dy.w);
    std::copy(dy.v.begin(), dy.v.begin() + na, da->v.begin());
  }
  if (db) {
    *db = Tensor(dy.c - c_a, dy.h, dy.w);
    std::copy(dy.v.begin() + na, dy.v.end(), db->v.begin());
  }
}

}  // namespace apl
