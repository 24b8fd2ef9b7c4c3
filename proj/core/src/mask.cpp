#include "masksparsity/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "json.hpp"
#include "masksparsity/checkpoint.hpp"

namespace masksparsity {

using json = nlohmann::ordered_json;

int64_t ChannelMask::total_channels() const {
  int64_t n = 0;
  for (const auto& row : prune) n += static_cast<int64_t>(row.size());
  return n;
}

int64_t ChannelMask::pruned_channels() const {
  int64_t n = 0;
  for (const auto& row : prune)
    for (uint8_t v : row) n += v;
  return n;
}

bool ChannelMask::same_selection(const ChannelMask& other) const {
  return layer_names == other.layer_names && prune == other.prune;
}

const char* provenance_name(ChannelMask::Provenance p) {
  switch (p) {
    case ChannelMask::Provenance::threshold: return "threshold";
    case ChannelMask::Provenance::uniform: return "uniform";
    case ChannelMask::Provenance::imported: return "imported";
  }
  return "?";
}

ChannelMask empty_mask(const ModelGraph& graph) {
  ChannelMask mask;
  for (int idx : graph.bn_layers()) {
    mask.layer_names.push_back(graph.layers[static_cast<size_t>(idx)].name);
    mask.prune.emplace_back(
        static_cast<size_t>(graph.bn_states[static_cast<size_t>(idx)].channels()), 0);
  }
  return mask;
}

ChannelMask threshold_mask_raw(const ModelGraph& graph, double theta) {
  if (!(theta > 0)) throw InvariantError("threshold_mask: theta must be positive");
  ChannelMask mask = empty_mask(graph);
  mask.provenance = ChannelMask::Provenance::threshold;
  mask.theta_or_ratio = theta;
  const auto bns = graph.bn_layers();
  for (size_t r = 0; r < bns.size(); ++r) {
    const auto& gamma = graph.bn_states[static_cast<size_t>(bns[r])].gamma;
    for (int64_t c = 0; c < gamma.numel(); ++c) {
      if (std::abs(static_cast<double>(gamma[c])) < theta) mask.prune[r][static_cast<size_t>(c)] = 1;
    }
  }
  return mask;
}

ChannelMask threshold_mask(const ModelGraph& graph, double theta) {
  return resolve_constraints(threshold_mask_raw(graph, theta), graph);
}

ChannelMask uniform_mask(const ModelGraph& graph, double ratio) {
  if (ratio < 0 || ratio >= 1) throw InvariantError("uniform_mask: ratio must be in [0, 1)");
  ChannelMask mask = empty_mask(graph);
  mask.provenance = ChannelMask::Provenance::uniform;
  mask.theta_or_ratio = ratio;
  const auto bns = graph.bn_layers();
  for (size_t r = 0; r < bns.size(); ++r) {
    const auto& gamma = graph.bn_states[static_cast<size_t>(bns[r])].gamma;
    const int64_t n = gamma.numel();
    const int64_t k = static_cast<int64_t>(ratio * static_cast<double>(n));
    std::vector<int64_t> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
      return std::abs(gamma[a]) < std::abs(gamma[b]);
    });
    for (int64_t i = 0; i < k; ++i) mask.prune[r][static_cast<size_t>(idx[static_cast<size_t>(i)])] = 1;
  }
  return resolve_constraints(mask, graph);
}

ChannelMask resolve_constraints(const ChannelMask& mask, const ModelGraph& graph) {
  const auto bns = graph.bn_layers();
  if (mask.prune.size() != bns.size()) {
    throw InvariantError("resolve_constraints: mask has " + std::to_string(mask.prune.size()) +
                         " layers, model has " + std::to_string(bns.size()) + " bn layers");
  }
  ChannelMask out = mask;
  out.warnings.clear();

  std::map<int, size_t> row_of;  // bn layer index -> mask row
  for (size_t r = 0; r < bns.size(); ++r) row_of[bns[r]] = r;

  // Intersection of prune decisions inside each coupling group.
  for (const auto& group : graph.coupling_groups) {
    if (group.empty()) continue;
    std::vector<uint8_t> shared = out.prune[row_of.at(group[0])];
    for (int member : group) {
      const auto& row = out.prune[row_of.at(member)];
      if (row.size() != shared.size()) {
        throw InvariantError("resolve_constraints: coupling group mixes channel counts");
      }
      for (size_t c = 0; c < shared.size(); ++c) shared[c] &= row[c];
    }
    for (int member : group) out.prune[row_of.at(member)] = shared;
  }

  // Keep at least one channel per layer; grouped layers are fixed together so
  // the rows stay identical. The survivor is the largest-|gamma| channel
  // (maximum across group members).
  auto fix_rows = [&](const std::vector<int>& members) {
    const auto& first = out.prune[row_of.at(members[0])];
    if (std::find(first.begin(), first.end(), 0) != first.end()) return;
    std::vector<double> score(first.size(), 0.0);
    for (int member : members) {
      const auto& gamma = graph.bn_states[static_cast<size_t>(member)].gamma;
      for (size_t c = 0; c < score.size(); ++c) {
        score[c] = std::max(score[c], std::abs(static_cast<double>(gamma[static_cast<int64_t>(c)])));
      }
    }
    const size_t keep = static_cast<size_t>(
        std::max_element(score.begin(), score.end()) - score.begin());
    for (int member : members) out.prune[row_of.at(member)][keep] = 0;
    out.warnings.push_back("layer '" + graph.layers[static_cast<size_t>(members[0])].name +
                           "'" + (members.size() > 1 ? " (and its coupling group)" : "") +
                           " had every channel below the threshold; kept channel " +
                           std::to_string(keep));
  };

  std::vector<bool> grouped(bns.size(), false);
  for (const auto& group : graph.coupling_groups) {
    fix_rows(group);
    for (int member : group) grouped[row_of.at(member)] = true;
  }
  for (size_t r = 0; r < bns.size(); ++r) {
    if (!grouped[r]) fix_rows({bns[r]});
  }
  return out;
}

void validate_mask(const ChannelMask& mask, const ModelGraph& graph) {
  const auto bns = graph.bn_layers();
  std::vector<std::string> problems;
  if (mask.layer_names.size() != mask.prune.size()) {
    problems.push_back("mask has " + std::to_string(mask.layer_names.size()) + " names for " +
                       std::to_string(mask.prune.size()) + " rows");
  }
  if (mask.prune.size() != bns.size()) {
    problems.push_back("mask covers " + std::to_string(mask.prune.size()) +
                       " layers, model has " + std::to_string(bns.size()));
  }
  const size_t rows = std::min(mask.prune.size(), bns.size());
  for (size_t r = 0; r < rows; ++r) {
    const auto& l = graph.layers[static_cast<size_t>(bns[r])];
    const int64_t channels = graph.bn_states[static_cast<size_t>(bns[r])].channels();
    if (r < mask.layer_names.size() && mask.layer_names[r] != l.name) {
      problems.push_back("row " + std::to_string(r) + " is '" + mask.layer_names[r] +
                         "', model has '" + l.name + "'");
    }
    if (static_cast<int64_t>(mask.prune[r].size()) != channels) {
      problems.push_back("layer '" + l.name + "' has " + std::to_string(mask.prune[r].size()) +
                         " mask entries for " + std::to_string(channels) + " channels");
    } else if (std::find(mask.prune[r].begin(), mask.prune[r].end(), 0) == mask.prune[r].end()) {
      problems.push_back("layer '" + l.name + "' would lose every channel");
    }
  }
  std::map<int, size_t> row_of;
  for (size_t r = 0; r < rows; ++r) row_of[bns[r]] = r;
  for (const auto& group : graph.coupling_groups) {
    for (size_t m = 1; m < group.size(); ++m) {
      auto a = row_of.find(group[0]);
      auto b = row_of.find(group[m]);
      if (a == row_of.end() || b == row_of.end()) continue;
      if (mask.prune[a->second] != mask.prune[b->second]) {
        problems.push_back("coupled layers '" +
                           graph.layers[static_cast<size_t>(group[0])].name + "' and '" +
                           graph.layers[static_cast<size_t>(group[m])].name +
                           "' have diverging masks");
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "mask does not fit the model:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw InvariantError(msg);
  }
}

std::string model_fingerprint(const ModelGraph& graph) {
  std::string table;
  for (int idx : graph.bn_layers()) {
    table += graph.layers[static_cast<size_t>(idx)].name;
    table += ':';
    table += std::to_string(graph.bn_states[static_cast<size_t>(idx)].channels());
    table += '\n';
  }
  return sha256_hex(table);
}

std::string mask_to_json(const ChannelMask& mask, const std::string& fingerprint) {
  json j;
  j["format_version"] = 1;
  j["model_fingerprint"] = fingerprint;
  j["provenance"] = provenance_name(mask.provenance);
  j["theta_or_ratio"] = mask.theta_or_ratio;
  json layers = json::array();
  for (size_t r = 0; r < mask.prune.size(); ++r) {
    json row;
    row["name"] = mask.layer_names[r];
    row["total"] = mask.prune[r].size();
    std::vector<int64_t> indices;
    for (size_t c = 0; c < mask.prune[r].size(); ++c) {
      if (mask.prune[r][c]) indices.push_back(static_cast<int64_t>(c));
    }
    row["prune"] = indices;  // strictly increasing by construction
    layers.push_back(std::move(row));
  }
  j["layers"] = std::move(layers);
  return j.dump(2);
}

namespace {

void write_mask_file(const ChannelMask& mask, const std::string& fp,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("mask: cannot write " + path.string());
  out << mask_to_json(mask, fp) << '\n';
  if (!out) throw IoError("mask: failed writing " + path.string());
}

}  // namespace

void save_mask(const ChannelMask& mask, const std::filesystem::path& path) {
  write_mask_file(mask, "", path);
}

void save_mask(const ChannelMask& mask, const ModelGraph& graph,
               const std::filesystem::path& path) {
  write_mask_file(mask, model_fingerprint(graph), path);
}

ChannelMask load_mask(const std::filesystem::path& path, const ModelGraph& graph) {
  std::ifstream in(path);
  if (!in) throw IoError("mask: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw IoError("mask: bad JSON in " + path.string() + ": " + e.what());
  }
  if (j.value("format_version", -1) != 1) {
    throw IoError("mask: unsupported format_version in " + path.string());
  }

  ChannelMask mask;
  mask.provenance = ChannelMask::Provenance::imported;
  mask.theta_or_ratio = j.value("theta_or_ratio", 0.0);
  for (const auto& row : j.at("layers")) {
    mask.layer_names.push_back(row.at("name").get<std::string>());
    std::vector<uint8_t> bits(row.at("total").get<size_t>(), 0);
    int64_t prev = -1;
    for (const auto& idx : row.at("prune")) {
      const int64_t c = idx.get<int64_t>();
      if (c <= prev || c < 0 || c >= static_cast<int64_t>(bits.size())) {
        throw IoError("mask: layer '" + mask.layer_names.back() +
                      "' has invalid prune indices in " + path.string());
      }
      bits[static_cast<size_t>(c)] = 1;
      prev = c;
    }
    mask.prune.push_back(std::move(bits));
  }

  const std::string fp = j.value("model_fingerprint", "");
  if (!fp.empty() && fp != model_fingerprint(graph)) {
    // Name/count validation below produces the per-layer diff.
    validate_mask(mask, graph);
    throw InvariantError("mask: fingerprint in " + path.string() +
                         " does not match the model");
  }
  validate_mask(mask, graph);
  return mask;
}

}  // namespace masksparsity
