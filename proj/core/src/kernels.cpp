#include "masksparsity/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <functional>
#include <thread>

namespace masksparsity {

namespace {

std::atomic<int> g_kernel_threads{1};

/// Static block partition over [0, n); each index is handled by exactly one
/// worker, so disjoint writes are bitwise identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  const int threads = std::min<int64_t>(g_kernel_threads.load(), n);
  if (threads <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(threads));
  const int64_t chunk = (n + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    const int64_t lo = t * chunk;
    const int64_t hi = std::min<int64_t>(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

// C[M x N] (+)= A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_nn(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C, bool accumulate) {
  for (int64_t m = 0; m < M; ++m) {
    T* crow = C + m * N;
    if (!accumulate) std::fill(crow, crow + N, T(0));
    const T* arow = A + m * K;
    for (int64_t k = 0; k < K; ++k) {
      const T a = arow[k];
      const T* brow = B + k * N;
      for (int64_t n = 0; n < N; ++n) crow[n] += a * brow[n];
    }
  }
}

// C[M x N] += A[M x K] * B[N x K]^T (rows of B are dotted with rows of A).
template <typename T>
void gemm_nt_acc(int64_t M, int64_t N, int64_t K, const T* A, const T* B, T* C) {
  for (int64_t m = 0; m < M; ++m) {
    const T* arow = A + m * K;
    T* crow = C + m * N;
    for (int64_t n = 0; n < N; ++n) {
      const T* brow = B + n * K;
      T acc = 0;
      for (int64_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
      crow[n] += acc;
    }
  }
}

// cols is (C*k*k) x (OH*OW) for one image.
template <typename T>
void im2col(const T* img, int64_t C, int64_t H, int64_t W, int k, int stride, int pad, int64_t OH,
            int64_t OW, T* cols) {
  for (int64_t c = 0; c < C; ++c) {
    const T* plane = img + c * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * (OH * OW);
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(row + oy * OW, row + (oy + 1) * OW, T(0));
            continue;
          }
          const T* src = plane + iy * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            row[oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_acc(const T* cols, int64_t C, int64_t H, int64_t W, int k, int stride, int pad,
                int64_t OH, int64_t OW, T* img) {
  for (int64_t c = 0; c < C; ++c) {
    T* plane = img + c * H * W;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * (OH * OW);
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          T* dst = plane + iy * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_args(const TensorT<T>& input, const TensorT<T>& weight, int stride, int pad) {
  if (input.rank() != 4 || weight.rank() != 4) {
    throw InvariantError("conv2d: expected rank-4 input and weight, got input " +
                         shape_to_string(input.shape()) + " and weight " +
                         shape_to_string(weight.shape()));
  }
  if (input.dim(1) != weight.dim(1)) {
    throw InvariantError("conv2d: input channels of " + shape_to_string(input.shape()) +
                         " do not match weight " + shape_to_string(weight.shape()));
  }
  if (weight.dim(2) != weight.dim(3)) {
    throw InvariantError("conv2d: only square kernels are supported, got " +
                         shape_to_string(weight.shape()));
  }
  if (stride < 1) throw InvariantError("conv2d: stride must be >= 1");
  if (pad < 0) throw InvariantError("conv2d: pad must be >= 0");
}

}  // namespace

void set_kernel_threads(int n) { g_kernel_threads.store(std::max(1, n)); }
int kernel_threads() { return g_kernel_threads.load(); }

int64_t conv_output_extent(int64_t in, int kernel, int stride, int pad) {
  const int64_t span = in + 2 * pad - kernel;
  if (span < 0 || span / stride + 1 <= 0) {
    throw InvariantError("conv2d: kernel " + std::to_string(kernel) + " with stride " +
                         std::to_string(stride) + " and pad " + std::to_string(pad) +
                         " does not fit input extent " + std::to_string(in));
  }
  return span / stride + 1;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weight, int stride, int pad) {
  check_conv_args(input, weight, stride, pad);
  const int64_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t N = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  const int64_t OH = conv_output_extent(H, k, stride, pad);
  const int64_t OW = conv_output_extent(W, k, stride, pad);
  const int64_t ckk = C * k * k;

  TensorT<T> out({B, N, OH, OW});
  parallel_for(B, [&](int64_t lo, int64_t hi) {
    std::vector<T> cols(static_cast<size_t>(ckk * OH * OW));
    for (int64_t b = lo; b < hi; ++b) {
      im2col(input.data() + b * C * H * W, C, H, W, k, stride, pad, OH, OW, cols.data());
      gemm_nn(N, OH * OW, ckk, weight.data(), cols.data(), out.data() + b * N * OH * OW, false);
    }
  });
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                               const TensorT<T>& weight, int stride, int pad,
                               bool need_input_grad) {
  check_conv_args(input, weight, stride, pad);
  const int64_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t N = weight.dim(0);
  const int k = static_cast<int>(weight.dim(2));
  const int64_t OH = conv_output_extent(H, k, stride, pad);
  const int64_t OW = conv_output_extent(W, k, stride, pad);
  if (grad_out.shape() != std::vector<int64_t>{B, N, OH, OW}) {
    throw InvariantError("conv2d_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match forward output " +
                         shape_to_string({B, N, OH, OW}));
  }
  const int64_t ckk = C * k * k;
  const int64_t map = OH * OW;

  Conv2dGrads<T> grads;
  grads.grad_weight = TensorT<T>(weight.shape());
  if (need_input_grad) grads.grad_input = TensorT<T>(input.shape());

  // W^T laid out ckk x N for the grad_input GEMM.
  std::vector<T> wt(static_cast<size_t>(ckk * N));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t r = 0; r < ckk; ++r) wt[r * N + n] = weight.data()[n * ckk + r];

  // Per-image weight-gradient partials, reduced in batch order afterwards so
  // the sum order is independent of the thread count.
  std::vector<std::vector<T>> partials(static_cast<size_t>(B));

  parallel_for(B, [&](int64_t lo, int64_t hi) {
    std::vector<T> cols(static_cast<size_t>(ckk * map));
    std::vector<T> colgrad;
    if (need_input_grad) colgrad.resize(static_cast<size_t>(ckk * map));
    for (int64_t b = lo; b < hi; ++b) {
      im2col(input.data() + b * C * H * W, C, H, W, k, stride, pad, OH, OW, cols.data());
      auto& part = partials[static_cast<size_t>(b)];
      part.assign(static_cast<size_t>(N * ckk), T(0));
      gemm_nt_acc(N, ckk, map, grad_out.data() + b * N * map, cols.data(), part.data());
      if (need_input_grad) {
        gemm_nn(ckk, map, N, wt.data(), grad_out.data() + b * N * map, colgrad.data(), false);
        col2im_acc(colgrad.data(), C, H, W, k, stride, pad, OH, OW,
                   grads.grad_input.data() + b * C * H * W);
      }
    }
  });

  T* gw = grads.grad_weight.data();
  for (int64_t b = 0; b < B; ++b) {
    const T* part = partials[static_cast<size_t>(b)].data();
    for (int64_t i = 0; i < N * ckk; ++i) gw[i] += part[i];
  }
  return grads;
}

template <typename T>
BatchNormStateT<T> BatchNormStateT<T>::identity(int64_t channels) {
  BatchNormStateT<T> s;
  s.gamma = TensorT<T>::full({channels}, T(1));
  s.beta = TensorT<T>({channels});
  s.running_mean = TensorT<T>({channels});
  s.running_var = TensorT<T>::full({channels}, T(1));
  return s;
}

namespace {

template <typename T>
void check_bn_args(const TensorT<T>& input, const BatchNormStateT<T>& state) {
  if (input.rank() != 4) {
    throw InvariantError("batchnorm: expected rank-4 NCHW input, got " +
                         shape_to_string(input.shape()));
  }
  const int64_t C = input.dim(1);
  if (state.gamma.numel() != C || state.beta.numel() != C || state.running_mean.numel() != C ||
      state.running_var.numel() != C) {
    throw InvariantError("batchnorm: input " + shape_to_string(input.shape()) +
                         " does not match state with " + std::to_string(state.gamma.numel()) +
                         " channels");
  }
  if (!(state.epsilon > T(0))) throw InvariantError("batchnorm: epsilon must be positive");
}

}  // namespace

template <typename T>
TensorT<T> batchnorm_forward_eval(const TensorT<T>& input, const BatchNormStateT<T>& state) {
  check_bn_args(input, state);
  const int64_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t hw = H * W;
  TensorT<T> out(input.shape());
  parallel_for(C, [&](int64_t lo, int64_t hi) {
    for (int64_t c = lo; c < hi; ++c) {
      const T scale =
          state.gamma[c] / std::sqrt(state.running_var[c] + state.epsilon);
      const T shift = state.beta[c] - state.running_mean[c] * scale;
      for (int64_t b = 0; b < B; ++b) {
        const T* src = input.data() + (b * C + c) * hw;
        T* dst = out.data() + (b * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
      }
    }
  });
  return out;
}

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormStateT<T>& state, bool training,
                             BatchNormCacheT<T>* cache) {
  if (!training) {
    if (cache) {
      *cache = {};
      cache->training = false;
    }
    return batchnorm_forward_eval(input, state);
  }
  check_bn_args(input, state);
  const int64_t B = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int64_t hw = H * W;
  const int64_t m = B * hw;
  if (m < 2) {
    throw InvariantError(
        "batchnorm: training-mode variance is undefined for a single value per channel (input " +
        shape_to_string(input.shape()) + ")");
  }

  TensorT<T> mean({C}), inv_std({C});
  TensorT<T> out(input.shape());
  parallel_for(C, [&](int64_t lo, int64_t hi) {
    for (int64_t c = lo; c < hi; ++c) {
      double sum = 0, sq = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* src = input.data() + (b * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum += src[i];
          sq += static_cast<double>(src[i]) * src[i];
        }
      }
      const double mu = sum / static_cast<double>(m);
      const double var = std::max(0.0, sq / static_cast<double>(m) - mu * mu);
      mean[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(state.epsilon)));

      const T scale = state.gamma[c] * inv_std[c];
      const T shift = state.beta[c] - static_cast<T>(mu) * scale;
      for (int64_t b = 0; b < B; ++b) {
        const T* src = input.data() + (b * C + c) * hw;
        T* dst = out.data() + (b * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
      }

      // EMA update; running variance uses the unbiased estimate.
      const double unbiased = var * static_cast<double>(m) / static_cast<double>(m - 1);
      state.running_mean[c] =
          static_cast<T>((1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu);
      state.running_var[c] = static_cast<T>((1.0 - state.momentum) * state.running_var[c] +
                                            state.momentum * unbiased);
    }
  });

  if (cache) {
    cache->training = true;
    cache->input = input;
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
    cache->gamma = state.gamma;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const TensorT<T>& grad_out, const BatchNormCacheT<T>& cache) {
  if (!cache.training) {
    throw InvariantError("batchnorm_backward: cache must come from a training-mode forward");
  }
  const TensorT<T>& x = cache.input;
  if (grad_out.shape() != x.shape()) {
    throw InvariantError("batchnorm_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match input " + shape_to_string(x.shape()));
  }
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t hw = H * W;
  const double m = static_cast<double>(B * hw);

  BatchNormGrads<T> grads;
  grads.grad_input = TensorT<T>(x.shape());
  grads.grad_gamma = TensorT<T>({C});
  grads.grad_beta = TensorT<T>({C});

  parallel_for(C, [&](int64_t lo, int64_t hi) {
    for (int64_t c = lo; c < hi; ++c) {
      const T mu = cache.mean[c];
      const T istd = cache.inv_std[c];
      double sum_g = 0, sum_gx = 0;
      for (int64_t b = 0; b < B; ++b) {
        const T* g = grad_out.data() + (b * C + c) * hw;
        const T* xs = x.data() + (b * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_g += g[i];
          sum_gx += static_cast<double>(g[i]) * ((xs[i] - mu) * istd);
        }
      }
      grads.grad_beta[c] = static_cast<T>(sum_g);
      grads.grad_gamma[c] = static_cast<T>(sum_gx);

      const T k_g = static_cast<T>(sum_g / m);
      const T k_gx = static_cast<T>(sum_gx / m);
      const T scale = cache.gamma[c] * istd;
      for (int64_t b = 0; b < B; ++b) {
        const T* g = grad_out.data() + (b * C + c) * hw;
        const T* xs = x.data() + (b * C + c) * hw;
        T* gi = grads.grad_input.data() + (b * C + c) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const T xhat = (xs[i] - mu) * istd;
          gi[i] = scale * (g[i] - k_g - xhat * k_gx);
        }
      }
    }
  });
  return grads;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  const T* src = input.data();
  T* dst = out.data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& input) {
  if (grad_out.shape() != input.shape()) {
    throw InvariantError("relu_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match input " + shape_to_string(input.shape()));
  }
  TensorT<T> out(input.shape());
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = input[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
    throw InvariantError("linear: input " + shape_to_string(input.shape()) +
                         " does not match weight " + shape_to_string(weight.shape()));
  }
  const int64_t B = input.dim(0), in = input.dim(1), out_f = weight.dim(0);
  if (bias.numel() != out_f) {
    throw InvariantError("linear: bias " + shape_to_string(bias.shape()) +
                         " does not match weight " + shape_to_string(weight.shape()));
  }
  TensorT<T> out({B, out_f});
  for (int64_t b = 0; b < B; ++b) {
    const T* x = input.data() + b * in;
    for (int64_t o = 0; o < out_f; ++o) {
      const T* w = weight.data() + o * in;
      T acc = bias[o];
      for (int64_t i = 0; i < in; ++i) acc += x[i] * w[i];
      out(b, o) = acc;
    }
  }
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& grad_out, const TensorT<T>& input,
                               const TensorT<T>& weight) {
  const int64_t B = input.dim(0), in = input.dim(1), out_f = weight.dim(0);
  if (grad_out.shape() != std::vector<int64_t>{B, out_f}) {
    throw InvariantError("linear_backward: grad_out " + shape_to_string(grad_out.shape()) +
                         " does not match output shape " + shape_to_string({B, out_f}));
  }
  LinearGrads<T> grads;
  grads.grad_input = TensorT<T>({B, in});
  grads.grad_weight = TensorT<T>(weight.shape());
  grads.grad_bias = TensorT<T>({out_f});
  for (int64_t b = 0; b < B; ++b) {
    const T* g = grad_out.data() + b * out_f;
    const T* x = input.data() + b * in;
    T* gi = grads.grad_input.data() + b * in;
    for (int64_t o = 0; o < out_f; ++o) {
      const T go = g[o];
      grads.grad_bias[o] += go;
      const T* w = weight.data() + o * in;
      T* gw = grads.grad_weight.data() + o * in;
      for (int64_t i = 0; i < in; ++i) {
        gi[i] += go * w[i];
        gw[i] += go * x[i];
      }
    }
  }
  return grads;
}

template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& input) {
  if (input.rank() != 4) {
    throw InvariantError("global_avgpool: expected rank-4 input, got " +
                         shape_to_string(input.shape()));
  }
  const int64_t B = input.dim(0), C = input.dim(1), hw = input.dim(2) * input.dim(3);
  TensorT<T> out({B, C});
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      const T* src = input.data() + (b * C + c) * hw;
      double acc = 0;
      for (int64_t i = 0; i < hw; ++i) acc += src[i];
      out(b, c) = static_cast<T>(acc / static_cast<double>(hw));
    }
  }
  return out;
}

template <typename T>
TensorT<T> global_avgpool_backward(const TensorT<T>& grad_out,
                                   const std::vector<int64_t>& input_shape) {
  if (input_shape.size() != 4 || grad_out.rank() != 2 || grad_out.dim(0) != input_shape[0] ||
      grad_out.dim(1) != input_shape[1]) {
    throw InvariantError("global_avgpool_backward: grad_out " +
                         shape_to_string(grad_out.shape()) + " does not match input " +
                         shape_to_string(input_shape));
  }
  const int64_t B = input_shape[0], C = input_shape[1], hw = input_shape[2] * input_shape[3];
  TensorT<T> out(input_shape);
  const T inv = T(1) / static_cast<T>(hw);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t c = 0; c < C; ++c) {
      const T g = grad_out(b, c) * inv;
      T* dst = out.data() + (b * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = g;
    }
  }
  return out;
}

template <typename T>
SoftmaxLossT<T> softmax_cross_entropy(const TensorT<T>& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2 || static_cast<int64_t>(labels.size()) != logits.dim(0)) {
    throw InvariantError("softmax_cross_entropy: logits " + shape_to_string(logits.shape()) +
                         " do not match " + std::to_string(labels.size()) + " labels");
  }
  const int64_t B = logits.dim(0), K = logits.dim(1);
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= K) {
      throw InvariantError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                           " at index " + std::to_string(i) + " is outside [0, " +
                           std::to_string(K) + ")");
    }
  }
  SoftmaxLossT<T> result;
  result.grad_logits = TensorT<T>({B, K});
  double loss = 0;
  for (int64_t b = 0; b < B; ++b) {
    const T* row = logits.data() + b * K;
    T mx = row[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
    double denom = 0;
    for (int64_t j = 0; j < K; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    const double log_denom = std::log(denom);
    loss += log_denom - static_cast<double>(row[labels[static_cast<size_t>(b)]] - mx);
    T* g = result.grad_logits.data() + b * K;
    for (int64_t j = 0; j < K; ++j) {
      double p = std::exp(static_cast<double>(row[j] - mx)) / denom;
      g[j] = static_cast<T>(p / static_cast<double>(B));
    }
    g[labels[static_cast<size_t>(b)]] -= static_cast<T>(1.0 / static_cast<double>(B));
  }
  result.loss = loss / static_cast<double>(B);
  return result;
}

template <typename T>
double top1_accuracy(const TensorT<T>& logits, const std::vector<int>& labels) {
  const int64_t B = logits.dim(0), K = logits.dim(1);
  int64_t correct = 0;
  for (int64_t b = 0; b < B; ++b) {
    const T* row = logits.data() + b * K;
    int64_t arg = 0;
    for (int64_t j = 1; j < K; ++j)
      if (row[j] > row[arg]) arg = j;
    if (arg == labels[static_cast<size_t>(b)]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(B);
}

#define MSP_INSTANTIATE_KERNELS(T)                                                              \
  template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const TensorT<T>&, int, int);        \
  template Conv2dGrads<T> conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,              \
                                             const TensorT<T>&, int, int, bool);                \
  template struct BatchNormStateT<T>;                                                           \
  template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, BatchNormStateT<T>&, bool,        \
                                           BatchNormCacheT<T>*);                                \
  template TensorT<T> batchnorm_forward_eval<T>(const TensorT<T>&, const BatchNormStateT<T>&);  \
  template BatchNormGrads<T> batchnorm_backward<T>(const TensorT<T>&,                           \
                                                   const BatchNormCacheT<T>&);                  \
  template TensorT<T> relu_forward<T>(const TensorT<T>&);                                       \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> linear_forward<T>(const TensorT<T>&, const TensorT<T>&,                   \
                                        const TensorT<T>&);                                     \
  template LinearGrads<T> linear_backward<T>(const TensorT<T>&, const TensorT<T>&,              \
                                             const TensorT<T>&);                                \
  template TensorT<T> global_avgpool_forward<T>(const TensorT<T>&);                             \
  template TensorT<T> global_avgpool_backward<T>(const TensorT<T>&,                             \
                                                 const std::vector<int64_t>&);                  \
  template SoftmaxLossT<T> softmax_cross_entropy<T>(const TensorT<T>&, const std::vector<int>&); \
  template double top1_accuracy<T>(const TensorT<T>&, const std::vector<int>&);

MSP_INSTANTIATE_KERNELS(float)
MSP_INSTANTIATE_KERNELS(double)

#undef MSP_INSTANTIATE_KERNELS

}  // namespace masksparsity
