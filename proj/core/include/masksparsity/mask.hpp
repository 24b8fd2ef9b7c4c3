#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "masksparsity/graph.hpp"

namespace masksparsity {

/// Per-bn-layer binary vectors, 1 = prune this channel, 0 = keep. Rows follow
/// the graph's bn layer order. Inside a coupling group all member rows are
/// identical and every layer keeps at least one channel.
struct ChannelMask {
  enum class Provenance { threshold, uniform, imported };

  std::vector<std::string> layer_names;
  std::vector<std::vector<uint8_t>> prune;
  Provenance provenance{Provenance::imported};
  double theta_or_ratio{0};
  std::vector<std::string> warnings;  // transient; not serialized

  int64_t total_channels() const;
  int64_t pruned_channels() const;
  bool same_selection(const ChannelMask& other) const;
};

const char* provenance_name(ChannelMask::Provenance p);

/// All-keep mask with the graph's bn layout.
ChannelMask empty_mask(const ModelGraph& graph);

/// Raw indicator |gamma| < theta with no constraint resolution applied.
ChannelMask threshold_mask_raw(const ModelGraph& graph, double theta);

/// The raw indicator followed by resolve_constraints.
ChannelMask threshold_mask(const ModelGraph& graph, double theta);

/// Per layer, the floor(ratio * N) smallest-|gamma| channels (ties broken by
/// lower channel index), followed by resolve_constraints.
ChannelMask uniform_mask(const ModelGraph& graph, double ratio);

/// Within each coupling group a channel stays prunable only if every member
/// marked it (elementwise AND); afterwards any fully-pruned layer gets its
/// largest-|gamma| channel back and a warning is recorded. Idempotent and
/// never turns a kept channel into a pruned one.
ChannelMask resolve_constraints(const ChannelMask& mask, const ModelGraph& graph);

/// Checks the ChannelMask invariants against a graph; the error message lists
/// every mismatching layer.
void validate_mask(const ChannelMask& mask, const ModelGraph& graph);

/// Digest of the bn layer table (names and channel counts).
std::string model_fingerprint(const ModelGraph& graph);

/// The two-argument form writes an empty fingerprint; pass the graph to
/// stamp the file with model_fingerprint(graph).
void save_mask(const ChannelMask& mask, const std::filesystem::path& path);
void save_mask(const ChannelMask& mask, const ModelGraph& graph,
               const std::filesystem::path& path);
ChannelMask load_mask(const std::filesystem::path& path, const ModelGraph& graph);

std::string mask_to_json(const ChannelMask& mask, const std::string& fingerprint);

}  // namespace masksparsity
