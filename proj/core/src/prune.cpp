#include "masksparsity/prune.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "json.hpp"

namespace masksparsity {

using json = nlohmann::ordered_json;

namespace {

/// Kept (original) channel indices of each layer's output.
std::vector<std::vector<int64_t>> kept_channels(const ModelGraph& graph, const ChannelMask& mask) {
  const auto bns = graph.bn_layers();
  std::map<int, size_t> row_of;
  for (size_t r = 0; r < bns.size(); ++r) row_of[bns[r]] = r;

  // conv -> its consuming bn
  std::map<int, int> bn_of_conv;
  for (int b : bns) bn_of_conv[graph.layers[static_cast<size_t>(b)].inputs[0]] = b;

  std::vector<std::vector<int64_t>> kept(graph.layers.size());
  auto kept_of_input = [&](int idx, int64_t fallback_channels) -> std::vector<int64_t> {
    if (idx == kNetworkInput) {
      std::vector<int64_t> all(static_cast<size_t>(fallback_channels));
      for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
      return all;
    }
    return kept[static_cast<size_t>(idx)];
  };

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const int bn = bn_of_conv.at(static_cast<int>(i));
        const auto& row = mask.prune[row_of.at(bn)];
        for (size_t c = 0; c < row.size(); ++c) {
          if (!row[c]) kept[i].push_back(static_cast<int64_t>(c));
        }
        break;
      }
      case LayerKind::linear: {
        for (int64_t o = 0; o < l.out_features; ++o) kept[i].push_back(o);
        break;
      }
      default:
        kept[i] = kept_of_input(l.inputs[0], graph.input_channels);
        break;
    }
  }
  return kept;
}

}  // namespace

ModelGraph apply_surgery(const ModelGraph& graph, const ChannelMask& mask) {
  validate_mask(mask, graph);
  const auto kept = kept_channels(graph, mask);

  ModelGraph out;
  out.layers = graph.layers;
  out.coupling_groups = graph.coupling_groups;
  out.input_channels = graph.input_channels;
  out.weights.resize(graph.layers.size());
  out.biases.resize(graph.layers.size());
  out.bn_states.resize(graph.layers.size());

  auto input_kept = [&](int idx) -> std::vector<int64_t> {
    if (idx == kNetworkInput) {
      std::vector<int64_t> all(static_cast<size_t>(graph.input_channels));
      for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int64_t>(i);
      return all;
    }
    return kept[static_cast<size_t>(idx)];
  };

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    LayerSpec& l = out.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const auto in_keep = input_kept(l.inputs[0]);
        const auto& out_keep = kept[i];
        const auto& w = graph.weights[i];
        const int64_t k = w.dim(2);
        Tensor nw({static_cast<int64_t>(out_keep.size()), static_cast<int64_t>(in_keep.size()),
                   k, k});
        for (size_t no = 0; no < out_keep.size(); ++no) {
          for (size_t ni = 0; ni < in_keep.size(); ++ni) {
            for (int64_t y = 0; y < k; ++y) {
              for (int64_t x = 0; x < k; ++x) {
                nw(static_cast<int64_t>(no), static_cast<int64_t>(ni), y, x) =
                    w(out_keep[no], in_keep[ni], y, x);
              }
            }
          }
        }
        out.weights[i] = std::move(nw);
        l.in_channels = static_cast<int>(in_keep.size());
        l.out_channels = static_cast<int>(out_keep.size());
        break;
      }
      case LayerKind::bn: {
        const auto& keep = kept[i];
        const auto& s = graph.bn_states[i];
        auto pick = [&](const Tensor& v) {
          Tensor nv({static_cast<int64_t>(keep.size())});
          for (size_t c = 0; c < keep.size(); ++c) nv[static_cast<int64_t>(c)] = v[keep[c]];
          return nv;
        };
        BatchNormState ns;
        ns.gamma = pick(s.gamma);
        ns.beta = pick(s.beta);
        ns.running_mean = pick(s.running_mean);
        ns.running_var = pick(s.running_var);
        ns.momentum = s.momentum;
        ns.epsilon = s.epsilon;
        out.bn_states[i] = std::move(ns);
        break;
      }
      case LayerKind::linear: {
        const auto in_keep = input_kept(l.inputs[0]);
        const auto& w = graph.weights[i];
        Tensor nw({l.out_features, static_cast<int64_t>(in_keep.size())});
        for (int64_t o = 0; o < l.out_features; ++o) {
          for (size_t ni = 0; ni < in_keep.size(); ++ni) {
            nw(o, static_cast<int64_t>(ni)) = w(o, in_keep[ni]);
          }
        }
        out.weights[i] = std::move(nw);
        out.biases[i] = graph.biases[i];
        l.in_features = static_cast<int>(in_keep.size());
        break;
      }
      default: break;
    }
  }
  validate_graph(out);
  return out;
}

ModelGraph zero_pruned_channels(const ModelGraph& graph, const ChannelMask& mask,
                                bool zero_beta) {
  validate_mask(mask, graph);
  ModelGraph out = graph;
  const auto bns = graph.bn_layers();
  for (size_t r = 0; r < bns.size(); ++r) {
    auto& s = out.bn_states[static_cast<size_t>(bns[r])];
    for (size_t c = 0; c < mask.prune[r].size(); ++c) {
      if (!mask.prune[r][c]) continue;
      s.gamma[static_cast<int64_t>(c)] = 0.0f;
      if (zero_beta) s.beta[static_cast<int64_t>(c)] = 0.0f;
    }
  }
  return out;
}

double equivalence_check(const ModelGraph& graph, const ChannelMask& mask,
                         const std::vector<Tensor>& probes) {
  const ModelGraph reference = zero_pruned_channels(graph, mask, true);
  const ModelGraph pruned = apply_surgery(graph, mask);
  double max_abs = 0;
  for (const auto& probe : probes) {
    const Tensor a = forward_eval(reference, probe);
    const Tensor b = forward_eval(pruned, probe);
    for (int64_t j = 0; j < a.numel(); ++j) {
      max_abs = std::max(max_abs, std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j])));
    }
  }
  return max_abs;
}

double PruneReport::flops_reduction_pct() const {
  return flops_before == 0
             ? 0.0
             : 100.0 * static_cast<double>(flops_before - flops_after) /
                   static_cast<double>(flops_before);
}

double PruneReport::params_reduction_pct() const {
  return params_before == 0
             ? 0.0
             : 100.0 * static_cast<double>(params_before - params_after) /
                   static_cast<double>(params_before);
}

PruneReport prune_report(const ModelGraph& before, const ModelGraph& after,
                         std::pair<int, int> input_hw) {
  PruneReport report;
  report.flops_before = flops_count(before, input_hw);
  report.flops_after = flops_count(after, input_hw);
  report.params_before = param_count(before);
  report.params_after = param_count(after);
  if (report.flops_after > report.flops_before || report.params_after > report.params_before) {
    throw InvariantError("prune_report: pruned model is larger than the original");
  }
  std::map<std::string, int64_t> after_channels;
  for (int idx : after.bn_layers()) {
    after_channels[after.layers[static_cast<size_t>(idx)].name] =
        after.bn_states[static_cast<size_t>(idx)].channels();
  }
  for (int idx : before.bn_layers()) {
    const std::string& name = before.layers[static_cast<size_t>(idx)].name;
    auto it = after_channels.find(name);
    if (it == after_channels.end()) {
      throw InvariantError("prune_report: layer '" + name + "' is missing from the pruned model");
    }
    report.per_layer.push_back(
        {name, it->second, before.bn_states[static_cast<size_t>(idx)].channels()});
  }
  return report;
}

std::string format_pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string report_to_json(const PruneReport& report) {
  json j;
  j["format_version"] = 1;
  j["flops_before"] = report.flops_before;
  j["flops_after"] = report.flops_after;
  j["flops_reduction_pct"] = format_pct(report.flops_reduction_pct());
  j["params_before"] = report.params_before;
  j["params_after"] = report.params_after;
  j["params_reduction_pct"] = format_pct(report.params_reduction_pct());
  json layers = json::array();
  for (const auto& l : report.per_layer) {
    json row;
    row["name"] = l.name;
    row["kept"] = l.kept;
    row["total"] = l.total;
    layers.push_back(std::move(row));
  }
  j["per_layer"] = std::move(layers);
  return j.dump(2);
}

PruneReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(std::string("report: bad JSON: ") + e.what());
  }
  PruneReport report;
  report.flops_before = j.at("flops_before").get<long long>();
  report.flops_after = j.at("flops_after").get<long long>();
  report.params_before = j.at("params_before").get<long long>();
  report.params_after = j.at("params_after").get<long long>();
  for (const auto& row : j.at("per_layer")) {
    report.per_layer.push_back({row.at("name").get<std::string>(), row.at("kept").get<int64_t>(),
                                row.at("total").get<int64_t>()});
  }
  return report;
}

std::string report_table(const PruneReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %14s %14s %9s\n", "metric", "before", "after",
                "drop%");
  out += line;
  std::snprintf(line, sizeof(line), "%-24s %14lld %14lld %9s\n", "flops (MACs)",
                report.flops_before, report.flops_after,
                format_pct(report.flops_reduction_pct()).c_str());
  out += line;
  std::snprintf(line, sizeof(line), "%-24s %14lld %14lld %9s\n", "parameters",
                report.params_before, report.params_after,
                format_pct(report.params_reduction_pct()).c_str());
  out += line;
  for (const auto& l : report.per_layer) {
    std::snprintf(line, sizeof(line), "%-24s %7lld / %-7lld channels kept\n", l.name.c_str(),
                  static_cast<long long>(l.kept), static_cast<long long>(l.total));
    out += line;
  }
  return out;
}

}  // namespace masksparsity
