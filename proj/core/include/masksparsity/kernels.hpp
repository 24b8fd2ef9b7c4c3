#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "masksparsity/tensor.hpp"

namespace masksparsity {

/// Kernel-level parallelism. 1 (the default) runs everything inline on the
/// calling thread; conv and batchnorm results are bitwise identical for any
/// thread count.
void set_kernel_threads(int n);
int kernel_threads();

/// Output spatial extent of a convolution (floor convention). Throws if the
/// result would be non-positive.
int64_t conv_output_extent(int64_t in, int kernel, int stride, int pad);

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weight, int stride, int pad);

template <typename T>
struct Conv2dGrads {
  TensorT<T> grad_input;
  TensorT<T> grad_weight;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                               const TensorT<T>& weight, int stride, int pad,
                               bool need_input_grad = true);

/// Per-channel affine normalization state of one BN layer.
template <typename T>
struct BatchNormStateT {
  TensorT<T> gamma;
  TensorT<T> beta;
  TensorT<T> running_mean;
  TensorT<T> running_var;
  T momentum{static_cast<T>(0.1)};
  T epsilon{static_cast<T>(1e-5)};

  static BatchNormStateT identity(int64_t channels);
  int64_t channels() const { return gamma.numel(); }
};

using BatchNormState = BatchNormStateT<float>;

/// Saved by a training-mode forward pass; required by batchnorm_backward.
template <typename T>
struct BatchNormCacheT {
  bool training{false};
  TensorT<T> input;
  TensorT<T> mean;     // batch mean per channel
  TensorT<T> inv_std;  // 1/sqrt(batch var + eps) per channel
  TensorT<T> gamma;
};

/// Training mode normalizes by batch statistics over (N,H,W) per channel and
/// updates the running statistics in place; eval mode uses the running
/// statistics and leaves the state untouched.
template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormStateT<T>& state, bool training,
                             BatchNormCacheT<T>* cache = nullptr);

template <typename T>
TensorT<T> batchnorm_forward_eval(const TensorT<T>& input, const BatchNormStateT<T>& state);

template <typename T>
struct BatchNormGrads {
  TensorT<T> grad_input;
  TensorT<T> grad_gamma;
  TensorT<T> grad_beta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const TensorT<T>& grad_out, const BatchNormCacheT<T>& cache);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& input);

/// y = x W^T + b for row-major x of shape B x in and weight of shape out x in.
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias);

template <typename T>
struct LinearGrads {
  TensorT<T> grad_input;
  TensorT<T> grad_weight;
  TensorT<T> grad_bias;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                               const TensorT<T>& weight);

/// NCHW -> N x C per-channel spatial mean.
template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> global_avgpool_backward(const TensorT<T>& grad_out,
                                   const std::vector<int64_t>& input_shape);

template <typename T>
struct SoftmaxLossT {
  double loss{0};
  TensorT<T> grad_logits;
};

/// Mean over the batch of -log softmax(logits)[label]; the gradient is
/// (softmax - onehot) / B.
template <typename T>
SoftmaxLossT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels);

template <typename T>
double top1_accuracy(const TensorT<T>& logits, const std::vector<int>& labels);

}  // namespace masksparsity
