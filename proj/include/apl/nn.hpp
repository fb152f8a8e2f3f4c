#pragma once

#include <string>
#include <vector>

#include "apl/tensor.hpp"

namespace apl {

// Learnable parameter block with its gradient accumulator.
struct Param {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, size_t sz) : name(std::move(n)), value(sz, 0.0), grad(sz, 0.0) {}
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
  size_t size() const { return value.size(); }
};

using ParamGroup = std::vector<Param*>;

void zero_grads(const ParamGroup& params);
size_t param_count(const ParamGroup& params);
bool grads_all_zero(const ParamGroup& params);

// He-style normal init for weights feeding rectified units; biases stay zero.
void he_normal_init(Param& p, int fan_in, Rng& rng);

// 2D convolution over a single CHW image, im2col + GEMM backed.
// Weight layout: [out_c][in_c][k][k].
class Conv2d {
 public:
  Conv2d(std::string name, int in_c, int out_c, int ksize, int stride, int pad, int dilation = 1);

  void init(Rng& rng);
  Tensor forward(const Tensor& x);
  // dy -> dx. Accumulates weight/bias gradients unless param_grads is false
  // (used when a frozen net is only a conduit for input gradients).
  Tensor backward(const Tensor& dy, bool param_grads = true);

  int out_extent(int in) const;

  Param weight, bias;
  int in_c, out_c, k, stride, pad, dil;

 private:
  Tensor x_;                   // cached input from the last forward
  std::vector<double> cols_;   // im2col scratch, reused between passes
  void im2col(const Tensor& x, int oh, int ow);
};

// Leaky rectifier; slope 0 gives plain ReLU.
class LeakyRelu {
 public:
  explicit LeakyRelu(double slope = 0.0) : slope_(slope) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;
  double slope() const { return slope_; }

 private:
  double slope_;
  Tensor x_;
};

class SigmoidLayer {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor y_;
};

// Integer-factor spatial upsampling.
class Upsample {
 public:
  enum class Mode { nearest, bilinear };
  Upsample(Mode mode, int factor) : mode_(mode), factor_(factor) {}
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dy) const;
  int factor() const { return factor_; }

 private:
  Mode mode_;
  int factor_;
  int in_h_ = 0, in_w_ = 0, in_c_ = 0;
};

// Fully connected layer on flat vectors.
class Linear {
 public:
  Linear(std::string name, int in_dim, int out_dim);
  void init(Rng& rng);
  std::vector<double> forward(const std::vector<double>& x);
  std::vector<double> backward(const std::vector<double>& dy, bool param_grads = true);

  Param weight, bias;  // weight layout [out][in]
  int in_dim, out_dim;

 private:
  std::vector<double> x_;
};

// Sums each channel plane to a scalar.
class GlobalSumPool {
 public:
  std::vector<double> forward(const Tensor& x);
  Tensor backward(const std::vector<double>& dy) const;

 private:
  int c_ = 0, h_ = 0, w_ = 0;
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
// Splits a gradient of concat_channels output back into the two inputs.
// Either destination may be null to discard that part.
void split_channels(const Tensor& dy, int c_a, Tensor* da, Tensor* db);

}  // namespace apl
