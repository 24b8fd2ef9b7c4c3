#include "masksparsity/sparsity.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace masksparsity {

using json = nlohmann::ordered_json;

const char* sparsity_mode_name(SparsityMode m) {
  switch (m) {
    case SparsityMode::off: return "off";
    case SparsityMode::global: return "global";
    case SparsityMode::masked: return "masked";
    case SparsityMode::group_lasso: return "group_lasso";
  }
  return "?";
}

SparsityMode sparsity_mode_from_name(const std::string& s) {
  if (s == "off") return SparsityMode::off;
  if (s == "global") return SparsityMode::global;
  if (s == "masked") return SparsityMode::masked;
  if (s == "group_lasso") return SparsityMode::group_lasso;
  throw ConfigError("unknown sparsity mode '" + s + "'");
}

const char* penalty_norm_name(PenaltyNorm n) { return n == PenaltyNorm::l1 ? "l1" : "l2"; }

PenaltyNorm penalty_norm_from_name(const std::string& s) {
  if (s == "l1") return PenaltyNorm::l1;
  if (s == "l2") return PenaltyNorm::l2;
  throw ConfigError("unknown penalty norm '" + s + "'");
}

void validate_sparsity_config(const SparsityConfig& config) {
  if (config.lambda < 0) throw InvariantError("sparsity: lambda must be non-negative");
}

namespace {

template <typename T>
void accumulate_channel(PenaltyNorm norm, double lambda, T gamma, double& loss, T& grad) {
  const double g = static_cast<double>(gamma);
  if (norm == PenaltyNorm::l1) {
    loss += lambda * std::abs(g);
    grad += static_cast<T>(g > 0 ? lambda : (g < 0 ? -lambda : 0.0));
  } else {
    loss += lambda * g * g;
    grad += static_cast<T>(2.0 * lambda * g);
  }
}

}  // namespace

template <typename T>
GammaPenaltyT<T> global_penalty(const ModelGraphT<T>& graph, double lambda, PenaltyNorm norm) {
  if (lambda < 0) throw InvariantError("global_penalty: lambda must be non-negative");
  const auto bns = graph.bn_layers();
  if (bns.empty()) throw InvariantError("global_penalty: model has no bn layers");
  GammaPenaltyT<T> penalty;
  penalty.grads.resize(graph.layers.size());
  for (int idx : bns) {
    const auto& gamma = graph.bn_states[static_cast<size_t>(idx)].gamma;
    TensorT<T> grad(gamma.shape());
    for (int64_t c = 0; c < gamma.numel(); ++c) {
      accumulate_channel(norm, lambda, gamma[c], penalty.loss, grad[c]);
    }
    penalty.grads[static_cast<size_t>(idx)] = std::move(grad);
  }
  return penalty;
}

template <typename T>
GammaPenaltyT<T> masked_penalty(const ModelGraphT<T>& graph, const ChannelMask& mask,
                                double lambda, PenaltyNorm norm) {
  if (lambda < 0) throw InvariantError("masked_penalty: lambda must be non-negative");
  const auto bns = graph.bn_layers();
  if (mask.prune.size() != bns.size()) {
    throw InvariantError("masked_penalty: mask covers " + std::to_string(mask.prune.size()) +
                         " layers, model has " + std::to_string(bns.size()) + " bn layers");
  }
  GammaPenaltyT<T> penalty;
  penalty.grads.resize(graph.layers.size());
  for (size_t r = 0; r < bns.size(); ++r) {
    const int idx = bns[r];
    const auto& gamma = graph.bn_states[static_cast<size_t>(idx)].gamma;
    if (static_cast<int64_t>(mask.prune[r].size()) != gamma.numel()) {
      throw InvariantError("masked_penalty: layer '" +
                           graph.layers[static_cast<size_t>(idx)].name + "' has " +
                           std::to_string(gamma.numel()) + " channels, mask row has " +
                           std::to_string(mask.prune[r].size()));
    }
    TensorT<T> grad(gamma.shape());
    for (int64_t c = 0; c < gamma.numel(); ++c) {
      if (mask.prune[r][static_cast<size_t>(c)]) {
        accumulate_channel(norm, lambda, gamma[c], penalty.loss, grad[c]);
      }
    }
    penalty.grads[static_cast<size_t>(idx)] = std::move(grad);
  }
  return penalty;
}

template <typename T>
WeightPenaltyT<T> group_lasso_penalty(const ModelGraphT<T>& graph, double lambda) {
  if (lambda < 0) throw InvariantError("group_lasso_penalty: lambda must be non-negative");
  WeightPenaltyT<T> penalty;
  penalty.grads.resize(graph.layers.size());
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    if (graph.layers[i].kind != LayerKind::conv) continue;
    const auto& w = graph.weights[i];
    const int64_t filters = w.dim(0);
    const int64_t span = w.numel() / filters;
    TensorT<T> grad(w.shape());
    for (int64_t f = 0; f < filters; ++f) {
      const T* wf = w.data() + f * span;
      double sq = 0;
      for (int64_t j = 0; j < span; ++j) sq += static_cast<double>(wf[j]) * wf[j];
      const double nrm = std::sqrt(sq);
      penalty.loss += lambda * nrm;
      if (nrm > 0) {
        T* gf = grad.data() + f * span;
        for (int64_t j = 0; j < span; ++j) {
          gf[j] = static_cast<T>(lambda * static_cast<double>(wf[j]) / nrm);
        }
      }
    }
    penalty.grads[i] = std::move(grad);
  }
  return penalty;
}

GammaSnapshot take_gamma_snapshot(const ModelGraph& graph, const std::string& stage, int epoch) {
  GammaSnapshot snap;
  snap.stage = stage;
  snap.epoch = epoch;
  for (int idx : graph.bn_layers()) {
    snap.layer_names.push_back(graph.layers[static_cast<size_t>(idx)].name);
    const auto& gamma = graph.bn_states[static_cast<size_t>(idx)].gamma;
    std::vector<float> abs(static_cast<size_t>(gamma.numel()));
    for (int64_t c = 0; c < gamma.numel(); ++c) abs[static_cast<size_t>(c)] = std::abs(gamma[c]);
    snap.abs_gamma.push_back(std::move(abs));
  }
  return snap;
}

int64_t GammaHistogram::total() const {
  int64_t n = 0;
  for (int64_t c : counts) n += c;
  return n;
}

GammaHistogram gamma_histogram(const GammaSnapshot& snapshot, int num_bins, double lo, double hi) {
  if (num_bins < 1) throw InvariantError("gamma_histogram: num_bins must be >= 1");
  if (!(hi > lo)) throw InvariantError("gamma_histogram: empty bin range");
  GammaHistogram hist;
  hist.lo = lo;
  hist.hi = hi;
  hist.counts.assign(static_cast<size_t>(num_bins) + 1, 0);
  const double width = (hi - lo) / num_bins;
  for (const auto& layer : snapshot.abs_gamma) {
    for (float v : layer) {
      if (v >= hi) {
        ++hist.counts.back();
      } else {
        const auto bin = static_cast<int64_t>(std::max(0.0, (static_cast<double>(v) - lo) / width));
        ++hist.counts[static_cast<size_t>(std::min<int64_t>(bin, num_bins - 1))];
      }
    }
  }
  return hist;
}

std::string snapshot_to_jsonl(const GammaSnapshot& snapshot) {
  std::ostringstream out;
  for (size_t r = 0; r < snapshot.layer_names.size(); ++r) {
    json j;
    j["stage"] = snapshot.stage;
    j["epoch"] = snapshot.epoch;
    j["layer"] = snapshot.layer_names[r];
    j["values"] = snapshot.abs_gamma[r];
    out << j.dump() << '\n';
  }
  return out.str();
}

std::string histogram_to_jsonl(const GammaSnapshot& snapshot, const GammaHistogram& hist) {
  json j;
  j["stage"] = snapshot.stage;
  j["epoch"] = snapshot.epoch;
  j["lo"] = hist.lo;
  j["hi"] = hist.hi;
  j["bins"] = hist.counts;
  return j.dump() + "\n";
}

GradientNormLog::GradientNormLog(const ModelGraph& graph,
                                 const std::vector<std::pair<std::string, int>>& channels,
                                 size_t window)
    : window_(window == 0 ? 1 : window) {
  for (const auto& [name, channel] : channels) {
    const int idx = graph.find_layer(name);
    if (idx < 0 || graph.layers[static_cast<size_t>(idx)].kind != LayerKind::bn) {
      throw InvariantError("gradient_norm_log: '" + name + "' is not a bn layer");
    }
    const int64_t c = graph.bn_states[static_cast<size_t>(idx)].channels();
    if (channel < 0 || channel >= c) {
      throw InvariantError("gradient_norm_log: channel " + std::to_string(channel) +
                           " is outside '" + name + "' with " + std::to_string(c) + " channels");
    }
    slots_.emplace_back(idx, channel);
    names_.emplace_back(name, channel);
    series_.emplace_back();
  }
}

void GradientNormLog::observe(const std::vector<Tensor>& gamma_grads) {
  for (size_t t = 0; t < slots_.size(); ++t) {
    const auto [layer, channel] = slots_[t];
    if (static_cast<size_t>(layer) >= gamma_grads.size() ||
        gamma_grads[static_cast<size_t>(layer)].empty()) {
      throw InvariantError("gradient_norm_log: no gamma gradient for tracked layer");
    }
    series_[t].push_back(std::abs(gamma_grads[static_cast<size_t>(layer)][channel]));
    if (series_[t].size() > window_) series_[t].pop_front();
  }
  ++iterations_;
}

std::string GradientNormLog::to_jsonl() const {
  std::ostringstream out;
  for (size_t t = 0; t < slots_.size(); ++t) {
    json j;
    j["layer"] = names_[t].first;
    j["channel"] = names_[t].second;
    j["abs_grad"] = std::vector<float>(series_[t].begin(), series_[t].end());
    out << j.dump() << '\n';
  }
  return out.str();
}

#define MSP_INSTANTIATE_SPARSITY(T)                                                        \
  template GammaPenaltyT<T> global_penalty<T>(const ModelGraphT<T>&, double, PenaltyNorm); \
  template GammaPenaltyT<T> masked_penalty<T>(const ModelGraphT<T>&, const ChannelMask&,   \
                                              double, PenaltyNorm);                        \
  template WeightPenaltyT<T> group_lasso_penalty<T>(const ModelGraphT<T>&, double);

MSP_INSTANTIATE_SPARSITY(float)
MSP_INSTANTIATE_SPARSITY(double)

#undef MSP_INSTANTIATE_SPARSITY

}  // namespace masksparsity
