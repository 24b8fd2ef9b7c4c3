#pragma once

#include <vector>

#include "masksparsity/tensor.hpp"

namespace masksparsity {

struct SgdOptions {
  double lr{0.1};
  double momentum{0.0};
  double weight_decay{0.0};
  double dampening{0.0};
  bool nesterov{false};
};

/// SGD with momentum. Weight decay is added to the raw gradient before the
/// momentum update (plain L2 coupling, not decoupled decay). The momentum
/// buffer is seeded with the first decayed gradient.
template <typename T>
class SgdOptimizer {
 public:
  explicit SgdOptimizer(SgdOptions opts);

  void set_lr(double lr);
  double lr() const { return opts_.lr; }
  const SgdOptions& options() const { return opts_; }

  /// Applies one update; params and grads are parallel lists and must keep
  /// the same order and shapes across steps.
  void step(const std::vector<TensorT<T>*>& params, const std::vector<const TensorT<T>*>& grads);

  const std::vector<TensorT<T>>& momentum_buffers() const { return buffers_; }

 private:
  SgdOptions opts_;
  std::vector<TensorT<T>> buffers_;
};

using Sgd = SgdOptimizer<float>;

}  // namespace masksparsity
