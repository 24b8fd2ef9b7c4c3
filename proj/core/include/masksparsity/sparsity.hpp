#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "masksparsity/graph.hpp"
#include "masksparsity/mask.hpp"

namespace masksparsity {

enum class SparsityMode { off, global, masked, group_lasso };
enum class PenaltyNorm { l1, l2 };

const char* sparsity_mode_name(SparsityMode m);
SparsityMode sparsity_mode_from_name(const std::string& s);
const char* penalty_norm_name(PenaltyNorm n);
PenaltyNorm penalty_norm_from_name(const std::string& s);

struct SparsityConfig {
  SparsityMode mode{SparsityMode::off};
  PenaltyNorm norm{PenaltyNorm::l1};
  double lambda{0};
};

void validate_sparsity_config(const SparsityConfig& config);

/// Penalty value and per-gamma subgradients (rows parallel to graph.layers;
/// non-bn rows stay empty).
template <typename T>
struct GammaPenaltyT {
  double loss{0};
  std::vector<TensorT<T>> grads;
};

using GammaPenalty = GammaPenaltyT<float>;

/// lambda * sum over every bn channel of |gamma| (L1, sign(0) = 0) or
/// gamma^2 (L2, gradient 2*lambda*gamma).
template <typename T>
GammaPenaltyT<T> global_penalty(const ModelGraphT<T>& graph, double lambda, PenaltyNorm norm);

/// Same, restricted to channels with mask bit 1; mask-0 channels receive
/// exactly zero gradient.
template <typename T>
GammaPenaltyT<T> masked_penalty(const ModelGraphT<T>& graph, const ChannelMask& mask,
                                double lambda, PenaltyNorm norm);

/// lambda * sum of per-filter Euclidean norms of every conv weight; the
/// gradient of an all-zero filter is zero.
template <typename T>
struct WeightPenaltyT {
  double loss{0};
  std::vector<TensorT<T>> grads;
};

template <typename T>
WeightPenaltyT<T> group_lasso_penalty(const ModelGraphT<T>& graph, double lambda);

/// |gamma| values of every bn layer at one training point.
struct GammaSnapshot {
  std::string stage;
  int epoch{0};
  std::vector<std::string> layer_names;
  std::vector<std::vector<float>> abs_gamma;
};

GammaSnapshot take_gamma_snapshot(const ModelGraph& graph, const std::string& stage, int epoch);

/// Fixed-width bins over [lo, hi) plus one overflow bin; the counts always
/// sum to the total channel count.
struct GammaHistogram {
  double lo{0};
  double hi{1};
  std::vector<int64_t> counts;  // num_bins + 1 entries, last is overflow
  int64_t total() const;
};

GammaHistogram gamma_histogram(const GammaSnapshot& snapshot, int num_bins = 100, double lo = 0.0,
                               double hi = 1.0);

/// One JSON object per bn layer, one line each: {stage, epoch, layer, values}.
std::string snapshot_to_jsonl(const GammaSnapshot& snapshot);
/// Single JSON line: {stage, epoch, lo, hi, bins}.
std::string histogram_to_jsonl(const GammaSnapshot& snapshot, const GammaHistogram& hist);

/// Per-channel |d loss / d gamma| time series for a tracked set of channels,
/// bounded by a window of most recent iterations.
class GradientNormLog {
 public:
  GradientNormLog(const ModelGraph& graph,
                  const std::vector<std::pair<std::string, int>>& channels, size_t window);

  /// gamma_grads must be parallel to graph.layers (as produced by backward()
  /// after any penalty terms were added in).
  void observe(const std::vector<Tensor>& gamma_grads);

  size_t tracked_count() const { return slots_.size(); }
  const std::deque<float>& series(size_t tracked) const { return series_[tracked]; }
  const std::pair<std::string, int>& channel(size_t tracked) const { return names_[tracked]; }
  size_t iterations() const { return iterations_; }

  std::string to_jsonl() const;

 private:
  std::vector<std::pair<int, int>> slots_;  // (layer index, channel)
  std::vector<std::pair<std::string, int>> names_;
  std::vector<std::deque<float>> series_;
  size_t window_;
  size_t iterations_{0};
};

}  // namespace masksparsity
