#pragma once

#include <string>
#include <utility>
#include <vector>

#include "masksparsity/graph.hpp"
#include "masksparsity/mask.hpp"

namespace masksparsity {

/// Physically removes the masked channels: rows of the producing conv,
/// entries of the bn state, input slices of every consumer, and linear-head
/// columns. The mask is validated before anything is touched.
ModelGraph apply_surgery(const ModelGraph& graph, const ChannelMask& mask);

/// Copy of the graph with gamma (and optionally beta) of every pruned channel
/// set to zero; the surgery reference used by equivalence_check.
ModelGraph zero_pruned_channels(const ModelGraph& graph, const ChannelMask& mask, bool zero_beta);

/// Max absolute eval-mode logit difference between the zeroed reference and
/// the surgically pruned model over the probe inputs. A zeroed-gamma,
/// zeroed-beta channel contributes exactly nothing downstream, so the
/// difference stays below 1e-5.
double equivalence_check(const ModelGraph& graph, const ChannelMask& mask,
                         const std::vector<Tensor>& probes);

struct PruneReport {
  long long flops_before{0};
  long long flops_after{0};
  long long params_before{0};
  long long params_after{0};
  struct LayerChannels {
    std::string name;
    int64_t kept{0};
    int64_t total{0};
  };
  std::vector<LayerChannels> per_layer;

  double flops_reduction_pct() const;
  double params_reduction_pct() const;
};

PruneReport prune_report(const ModelGraph& before, const ModelGraph& after,
                         std::pair<int, int> input_hw);

std::string report_to_json(const PruneReport& report);
PruneReport report_from_json(const std::string& text);
std::string report_table(const PruneReport& report);

/// Fixed two-decimal percentage formatting ("54.88").
std::string format_pct(double value);

}  // namespace masksparsity
