#include "masksparsity/sgd.hpp"

namespace masksparsity {

template <typename T>
SgdOptimizer<T>::SgdOptimizer(SgdOptions opts) : opts_(opts) {
  if (!(opts_.lr > 0)) throw InvariantError("sgd: learning rate must be positive");
  if (opts_.momentum < 0 || opts_.momentum >= 1)
    throw InvariantError("sgd: momentum must be in [0, 1)");
  if (opts_.weight_decay < 0) throw InvariantError("sgd: weight decay must be non-negative");
  if (opts_.dampening < 0 || opts_.dampening >= 1)
    throw InvariantError("sgd: dampening must be in [0, 1)");
  if (opts_.nesterov && opts_.dampening != 0) {
    throw InvariantError("sgd: nesterov momentum requires zero dampening");
  }
}

template <typename T>
void SgdOptimizer<T>::set_lr(double lr) {
  if (!(lr > 0)) throw InvariantError("sgd: learning rate must be positive");
  opts_.lr = lr;
}

template <typename T>
void SgdOptimizer<T>::step(const std::vector<TensorT<T>*>& params,
                           const std::vector<const TensorT<T>*>& grads) {
  if (params.size() != grads.size()) {
    throw InvariantError("sgd: " + std::to_string(params.size()) + " parameters vs " +
                         std::to_string(grads.size()) + " gradients");
  }
  if (buffers_.empty()) buffers_.resize(params.size());
  if (buffers_.size() != params.size()) {
    throw InvariantError("sgd: parameter list size changed between steps");
  }

  const T lr = static_cast<T>(opts_.lr);
  const T mu = static_cast<T>(opts_.momentum);
  const T wd = static_cast<T>(opts_.weight_decay);
  const T damp = static_cast<T>(opts_.dampening);

  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<T>& p = *params[i];
    const TensorT<T>& g = *grads[i];
    if (!p.same_shape(g)) {
      throw InvariantError("sgd: parameter " + shape_to_string(p.shape()) +
                           " does not match gradient " + shape_to_string(g.shape()));
    }
    const int64_t n = p.numel();
    if (mu != T(0)) {
      TensorT<T>& buf = buffers_[i];
      const bool first = buf.empty();
      if (first) buf = TensorT<T>(p.shape());
      if (!buf.same_shape(p)) {
        throw InvariantError("sgd: momentum buffer " + shape_to_string(buf.shape()) +
                             " does not match parameter " + shape_to_string(p.shape()));
      }
      for (int64_t j = 0; j < n; ++j) {
        const T d = g[j] + wd * p[j];
        buf[j] = first ? d : mu * buf[j] + (T(1) - damp) * d;
        p[j] -= lr * (opts_.nesterov ? d + mu * buf[j] : buf[j]);
      }
    } else {
      for (int64_t j = 0; j < n; ++j) p[j] -= lr * (g[j] + wd * p[j]);
    }
  }
}

template class SgdOptimizer<float>;
template class SgdOptimizer<double>;

}  // namespace masksparsity
