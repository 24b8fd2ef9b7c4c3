#include "masksparsity/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "masksparsity/rng.hpp"

namespace masksparsity {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::bn: return "bn";
    case LayerKind::relu: return "relu";
    case LayerKind::avgpool: return "avgpool";
    case LayerKind::linear: return "linear";
    case LayerKind::add: return "add";
  }
  return "?";
}

LayerKind layer_kind_from_name(const std::string& name) {
  if (name == "conv") return LayerKind::conv;
  if (name == "bn") return LayerKind::bn;
  if (name == "relu") return LayerKind::relu;
  if (name == "avgpool") return LayerKind::avgpool;
  if (name == "linear") return LayerKind::linear;
  if (name == "add") return LayerKind::add;
  throw InvariantError("unknown layer kind '" + name + "'");
}

template <typename T>
std::vector<int> ModelGraphT<T>::bn_layers() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::bn) out.push_back(static_cast<int>(i));
  return out;
}

template <typename T>
int ModelGraphT<T>::find_layer(const std::string& name) const {
  for (size_t i = 0; i < layers.size(); ++i)
    if (layers[i].name == name) return static_cast<int>(i);
  return -1;
}

namespace {

/// Channel count of each layer's output (features for avgpool/linear).
template <typename T>
std::vector<int64_t> channel_counts(const ModelGraphT<T>& graph) {
  std::vector<int64_t> ch(graph.layers.size(), 0);
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    auto input_ch = [&](int idx) {
      return idx == kNetworkInput ? graph.input_channels : ch[static_cast<size_t>(idx)];
    };
    switch (l.kind) {
      case LayerKind::conv: ch[i] = l.out_channels; break;
      case LayerKind::linear: ch[i] = l.out_features; break;
      default: ch[i] = l.inputs.empty() ? 0 : input_ch(l.inputs[0]); break;
    }
  }
  return ch;
}

}  // namespace

template <typename T>
void validate_graph(const ModelGraphT<T>& graph) {
  const size_t n = graph.layers.size();
  if (n == 0) throw InvariantError("graph: empty layer list");
  if (graph.weights.size() != n || graph.biases.size() != n || graph.bn_states.size() != n) {
    throw InvariantError("graph: parameter tables do not match the layer count");
  }

  // consumer table and topological-order input references
  std::vector<std::vector<int>> consumers(n);
  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = graph.layers[i];
    const size_t want_inputs = l.kind == LayerKind::add ? 2 : 1;
    if (l.inputs.size() != want_inputs) {
      throw InvariantError("graph: layer '" + l.name + "' needs " + std::to_string(want_inputs) +
                           " inputs, has " + std::to_string(l.inputs.size()));
    }
    for (int in : l.inputs) {
      if (in != kNetworkInput && (in < 0 || in >= static_cast<int>(i))) {
        throw InvariantError("graph: layer '" + l.name +
                             "' references a non-preceding producer " + std::to_string(in));
      }
      if (in != kNetworkInput) consumers[static_cast<size_t>(in)].push_back(static_cast<int>(i));
    }
  }

  const auto ch = channel_counts(graph);
  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = graph.layers[i];
    auto input_ch = [&](int idx) {
      return idx == kNetworkInput ? graph.input_channels : ch[static_cast<size_t>(idx)];
    };
    switch (l.kind) {
      case LayerKind::conv: {
        if (l.in_channels != input_ch(l.inputs[0])) {
          throw InvariantError("graph: conv '" + l.name + "' expects " +
                               std::to_string(l.in_channels) + " input channels, producer has " +
                               std::to_string(input_ch(l.inputs[0])));
        }
        const auto& w = graph.weights[i];
        const std::vector<int64_t> want{l.out_channels, l.in_channels, l.kernel, l.kernel};
        if (w.shape() != want) {
          throw InvariantError("graph: conv '" + l.name + "' weight " +
                               shape_to_string(w.shape()) + " does not match " +
                               shape_to_string(want));
        }
        if (consumers[i].size() != 1 ||
            graph.layers[static_cast<size_t>(consumers[i][0])].kind != LayerKind::bn) {
          throw InvariantError("graph: conv '" + l.name +
                               "' must feed exactly one bn layer");
        }
        break;
      }
      case LayerKind::bn: {
        const int64_t c = input_ch(l.inputs[0]);
        const auto& s = graph.bn_states[i];
        if (s.gamma.numel() != c || s.beta.numel() != c || s.running_mean.numel() != c ||
            s.running_var.numel() != c) {
          throw InvariantError("graph: bn '" + l.name + "' state does not cover " +
                               std::to_string(c) + " channels");
        }
        for (int64_t j = 0; j < s.running_var.numel(); ++j) {
          if (s.running_var[j] < T(0)) {
            throw InvariantError("graph: bn '" + l.name + "' has negative running variance");
          }
        }
        if (graph.layers[static_cast<size_t>(l.inputs[0])].kind != LayerKind::conv) {
          throw InvariantError("graph: bn '" + l.name + "' must consume a conv layer");
        }
        break;
      }
      case LayerKind::add: {
        if (input_ch(l.inputs[0]) != input_ch(l.inputs[1])) {
          throw InvariantError("graph: add '" + l.name + "' merges unequal channel counts " +
                               std::to_string(input_ch(l.inputs[0])) + " and " +
                               std::to_string(input_ch(l.inputs[1])));
        }
        break;
      }
      case LayerKind::linear: {
        if (l.in_features != input_ch(l.inputs[0])) {
          throw InvariantError("graph: linear '" + l.name + "' expects " +
                               std::to_string(l.in_features) + " features, producer has " +
                               std::to_string(input_ch(l.inputs[0])));
        }
        const auto& w = graph.weights[i];
        const std::vector<int64_t> want{l.out_features, l.in_features};
        if (w.shape() != want || graph.biases[i].numel() != l.out_features) {
          throw InvariantError("graph: linear '" + l.name + "' parameters do not match " +
                               shape_to_string(want));
        }
        break;
      }
      default: break;
    }
  }

  // coupling groups: bn members only, disjoint, equal channel counts
  std::set<int> seen;
  for (const auto& group : graph.coupling_groups) {
    int64_t c = -1;
    for (int idx : group) {
      if (idx < 0 || idx >= static_cast<int>(n) ||
          graph.layers[static_cast<size_t>(idx)].kind != LayerKind::bn) {
        throw InvariantError("graph: coupling group member " + std::to_string(idx) +
                             " is not a bn layer");
      }
      if (!seen.insert(idx).second) {
        throw InvariantError("graph: bn layer '" +
                             graph.layers[static_cast<size_t>(idx)].name +
                             "' appears in more than one coupling group");
      }
      const int64_t cc = ch[static_cast<size_t>(idx)];
      if (c == -1) c = cc;
      if (cc != c) {
        throw InvariantError("graph: coupling group mixes channel counts " + std::to_string(c) +
                             " and " + std::to_string(cc));
      }
    }
  }
}

template <typename T>
std::vector<std::vector<int>> derive_coupling_groups(const ModelGraphT<T>& graph) {
  const int n = static_cast<int>(graph.layers.size());
  std::vector<int> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<size_t>(x)] != x) {
      parent[static_cast<size_t>(x)] = parent[static_cast<size_t>(parent[static_cast<size_t>(x)])];
      x = parent[static_cast<size_t>(x)];
    }
    return x;
  };
  auto unite = [&](int a, int b) { parent[static_cast<size_t>(find(a))] = find(b); };

  // bn layers feeding `idx` through channel-preserving ops
  std::function<void(int, std::vector<int>&)> sources = [&](int idx, std::vector<int>& out) {
    if (idx == kNetworkInput) return;
    const LayerSpec& l = graph.layers[static_cast<size_t>(idx)];
    switch (l.kind) {
      case LayerKind::bn: out.push_back(idx); break;
      case LayerKind::relu: sources(l.inputs[0], out); break;
      case LayerKind::add:
        sources(l.inputs[0], out);
        sources(l.inputs[1], out);
        break;
      default: break;  // conv/linear/pool start a fresh channel dimension
    }
  };

  for (int i = 0; i < n; ++i) {
    if (graph.layers[static_cast<size_t>(i)].kind != LayerKind::add) continue;
    std::vector<int> srcs;
    sources(i, srcs);
    for (size_t j = 1; j < srcs.size(); ++j) unite(srcs[0], srcs[j]);
  }

  std::map<int, std::vector<int>> by_root;
  for (int i = 0; i < n; ++i) {
    if (graph.layers[static_cast<size_t>(i)].kind != LayerKind::bn) continue;
    by_root[find(i)].push_back(i);
  }
  std::vector<std::vector<int>> groups;
  for (auto& [root, members] : by_root) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end());
    groups.push_back(std::move(members));
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

namespace {

struct GraphBuilder {
  ModelGraph graph;

  int add_layer(LayerSpec spec) {
    graph.layers.push_back(std::move(spec));
    graph.weights.emplace_back();
    graph.biases.emplace_back();
    graph.bn_states.emplace_back();
    return static_cast<int>(graph.layers.size()) - 1;
  }

  int conv(const std::string& name, int input, int in_ch, int out_ch, int k, int stride,
           int pad) {
    LayerSpec s;
    s.kind = LayerKind::conv;
    s.name = name;
    s.inputs = {input};
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = k;
    s.stride = stride;
    s.pad = pad;
    const int idx = add_layer(std::move(s));
    graph.weights[static_cast<size_t>(idx)] = Tensor({out_ch, in_ch, k, k});
    return idx;
  }

  int bn(const std::string& name, int input, int channels) {
    LayerSpec s;
    s.kind = LayerKind::bn;
    s.name = name;
    s.inputs = {input};
    const int idx = add_layer(std::move(s));
    graph.bn_states[static_cast<size_t>(idx)] = BatchNormState::identity(channels);
    return idx;
  }

  int relu(const std::string& name, int input) {
    LayerSpec s;
    s.kind = LayerKind::relu;
    s.name = name;
    s.inputs = {input};
    return add_layer(std::move(s));
  }

  int add(const std::string& name, int a, int b) {
    LayerSpec s;
    s.kind = LayerKind::add;
    s.name = name;
    s.inputs = {a, b};
    return add_layer(std::move(s));
  }

  int avgpool(const std::string& name, int input) {
    LayerSpec s;
    s.kind = LayerKind::avgpool;
    s.name = name;
    s.inputs = {input};
    return add_layer(std::move(s));
  }

  int linear(const std::string& name, int input, int in_f, int out_f) {
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.name = name;
    s.inputs = {input};
    s.in_features = in_f;
    s.out_features = out_f;
    const int idx = add_layer(std::move(s));
    graph.weights[static_cast<size_t>(idx)] = Tensor({out_f, in_f});
    graph.biases[static_cast<size_t>(idx)] = Tensor({out_f});
    return idx;
  }
};

}  // namespace

ModelGraph build_resnet_cifar(int n_per_stage, int num_classes, uint64_t seed) {
  if (n_per_stage < 1) throw InvariantError("build_resnet_cifar: n_per_stage must be >= 1");
  if (num_classes < 2) throw InvariantError("build_resnet_cifar: num_classes must be >= 2");

  GraphBuilder b;
  const int widths[3] = {16, 32, 64};

  int stem_conv = b.conv("stem.conv", kNetworkInput, 3, 16, 3, 1, 1);
  int stream = b.bn("stem.bn", stem_conv, 16);
  std::vector<int> stage_group{stream};
  stream = b.relu("stem.relu", stream);

  int in_ch = 16;
  for (int s = 0; s < 3; ++s) {
    const int width = widths[s];
    if (s > 0) stage_group.clear();
    for (int blk = 0; blk < n_per_stage; ++blk) {
      const std::string prefix = "s" + std::to_string(s + 1) + ".b" + std::to_string(blk) + ".";
      const int stride = (s > 0 && blk == 0) ? 2 : 1;

      int c1 = b.conv(prefix + "conv1", stream, in_ch, width, 3, stride, 1);
      int bn1 = b.bn(prefix + "bn1", c1, width);
      int r1 = b.relu(prefix + "relu1", bn1);
      int c2 = b.conv(prefix + "conv2", r1, width, width, 3, 1, 1);
      int bn2 = b.bn(prefix + "bn2", c2, width);

      int shortcut = stream;
      if (stride != 1 || in_ch != width) {
        int pc = b.conv(prefix + "down.conv", stream, in_ch, width, 1, stride, 0);
        shortcut = b.bn(prefix + "down.bn", pc, width);
        stage_group.push_back(shortcut);
      }
      int sum = b.add(prefix + "add", bn2, shortcut);
      stage_group.push_back(bn2);
      stream = b.relu(prefix + "relu2", sum);
      in_ch = width;
    }
    std::sort(stage_group.begin(), stage_group.end());
    b.graph.coupling_groups.push_back(stage_group);
  }

  int pool = b.avgpool("head.pool", stream);
  b.linear("head.fc", pool, in_ch, num_classes);

  init_parameters(b.graph, seed);
  validate_graph(b.graph);
  return b.graph;
}

ModelGraph build_plain_cnn(const std::vector<int>& widths, int num_classes, uint64_t seed,
                           int in_channels) {
  if (widths.empty()) throw InvariantError("build_plain_cnn: widths must be non-empty");
  for (int w : widths)
    if (w < 1) throw InvariantError("build_plain_cnn: widths must be positive");
  if (num_classes < 2) throw InvariantError("build_plain_cnn: num_classes must be >= 2");

  GraphBuilder b;
  b.graph.input_channels = in_channels;
  int stream = kNetworkInput;
  int in_ch = in_channels;
  for (size_t i = 0; i < widths.size(); ++i) {
    const std::string prefix = "features." + std::to_string(i) + ".";
    const int stride = (i % 2 == 1) ? 2 : 1;
    int c = b.conv(prefix + "conv", stream, in_ch, widths[i], 3, stride, 1);
    int n = b.bn(prefix + "bn", c, widths[i]);
    stream = b.relu(prefix + "relu", n);
    in_ch = widths[i];
  }
  int pool = b.avgpool("head.pool", stream);
  b.linear("head.fc", pool, in_ch, num_classes);

  init_parameters(b.graph, seed);
  validate_graph(b.graph);
  return b.graph;
}

template <typename T>
void init_parameters(ModelGraphT<T>& graph, uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x1417));
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    switch (l.kind) {
      case LayerKind::conv: {
        const double fan_out = static_cast<double>(l.out_channels) * l.kernel * l.kernel;
        fill_normal(graph.weights[i], rng, std::sqrt(2.0 / fan_out));
        break;
      }
      case LayerKind::linear: {
        fill_normal(graph.weights[i], rng, std::sqrt(2.0 / l.in_features));
        std::fill(graph.biases[i].values().begin(), graph.biases[i].values().end(), T(0));
        break;
      }
      case LayerKind::bn: {
        auto& s = graph.bn_states[i];
        s = BatchNormStateT<T>::identity(s.channels());
        break;
      }
      default: break;
    }
  }
}

template <typename T>
std::vector<std::array<int64_t, 3>> infer_feature_shapes(const ModelGraphT<T>& graph,
                                                         std::pair<int, int> input_hw) {
  std::vector<std::array<int64_t, 3>> shapes(graph.layers.size());
  auto input_shape = [&](int idx) -> std::array<int64_t, 3> {
    if (idx == kNetworkInput)
      return {graph.input_channels, input_hw.first, input_hw.second};
    return shapes[static_cast<size_t>(idx)];
  };
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    const auto in = input_shape(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::conv:
        shapes[i] = {l.out_channels, conv_output_extent(in[1], l.kernel, l.stride, l.pad),
                     conv_output_extent(in[2], l.kernel, l.stride, l.pad)};
        break;
      case LayerKind::avgpool: shapes[i] = {in[0], 1, 1}; break;
      case LayerKind::linear: shapes[i] = {l.out_features, 1, 1}; break;
      default: shapes[i] = in; break;
    }
  }
  return shapes;
}

template <typename T>
long long flops_count(const ModelGraphT<T>& graph, std::pair<int, int> input_hw) {
  const auto shapes = infer_feature_shapes(graph, input_hw);
  long long macs = 0;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    if (l.kind == LayerKind::conv) {
      macs += static_cast<long long>(l.kernel) * l.kernel * l.in_channels * l.out_channels *
              shapes[i][1] * shapes[i][2];
    } else if (l.kind == LayerKind::linear) {
      macs += static_cast<long long>(l.in_features) * l.out_features;
    }
  }
  return macs;
}

template <typename T>
long long param_count(const ModelGraphT<T>& graph) {
  long long params = 0;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    switch (graph.layers[i].kind) {
      case LayerKind::conv: params += graph.weights[i].numel(); break;
      case LayerKind::bn: params += 2 * graph.bn_states[i].channels(); break;
      case LayerKind::linear:
        params += graph.weights[i].numel() + graph.biases[i].numel();
        break;
      default: break;
    }
  }
  return params;
}

namespace {

template <typename T>
TensorT<T> run_layers(const ModelGraphT<T>& cgraph, ModelGraphT<T>* mgraph,
                      const TensorT<T>& input, bool training, ForwardTrace<T>* trace) {
  const size_t n = cgraph.layers.size();
  if (input.rank() != 4 || input.dim(1) != cgraph.input_channels) {
    throw InvariantError("forward: input " + shape_to_string(input.shape()) +
                         " does not match stem with " + std::to_string(cgraph.input_channels) +
                         " channels");
  }

  // Last consumer of each activation; eval mode frees tensors eagerly.
  std::vector<int> last_use(n, -1);
  for (size_t i = 0; i < n; ++i)
    for (int in : cgraph.layers[i].inputs)
      if (in != kNetworkInput) last_use[static_cast<size_t>(in)] = static_cast<int>(i);

  std::vector<TensorT<T>> outputs(n);
  if (trace) {
    trace->input = input;
    trace->bn_caches.assign(n, {});
  }
  auto get = [&](int idx) -> const TensorT<T>& {
    return idx == kNetworkInput ? input : outputs[static_cast<size_t>(idx)];
  };

  for (size_t i = 0; i < n; ++i) {
    const LayerSpec& l = cgraph.layers[i];
    const TensorT<T>& x = get(l.inputs[0]);
    switch (l.kind) {
      case LayerKind::conv:
        outputs[i] = conv2d_forward(x, cgraph.weights[i], l.stride, l.pad);
        break;
      case LayerKind::bn:
        if (training) {
          outputs[i] = batchnorm_forward(x, mgraph->bn_states[i], true,
                                         trace ? &trace->bn_caches[i] : nullptr);
        } else {
          outputs[i] = batchnorm_forward_eval(x, cgraph.bn_states[i]);
        }
        break;
      case LayerKind::relu: outputs[i] = relu_forward(x); break;
      case LayerKind::avgpool: outputs[i] = global_avgpool_forward(x); break;
      case LayerKind::linear:
        outputs[i] = linear_forward(x, cgraph.weights[i], cgraph.biases[i]);
        break;
      case LayerKind::add: {
        const TensorT<T>& y = get(l.inputs[1]);
        if (!x.same_shape(y)) {
          throw InvariantError("add '" + l.name + "': shapes " + shape_to_string(x.shape()) +
                               " vs " + shape_to_string(y.shape()));
        }
        TensorT<T> sum(x.shape());
        for (int64_t j = 0; j < sum.numel(); ++j) sum[j] = x[j] + y[j];
        outputs[i] = std::move(sum);
        break;
      }
    }
    if (!trace) {
      for (int in : cgraph.layers[i].inputs) {
        if (in != kNetworkInput && last_use[static_cast<size_t>(in)] == static_cast<int>(i)) {
          outputs[static_cast<size_t>(in)] = {};
        }
      }
    }
  }
  TensorT<T> logits = std::move(outputs.back());
  if (trace) {
    outputs.back() = logits;
    trace->outputs = std::move(outputs);
  }
  return logits;
}

}  // namespace

template <typename T>
TensorT<T> forward_eval(const ModelGraphT<T>& graph, const TensorT<T>& input) {
  return run_layers(graph, nullptr, input, false, nullptr);
}

template <typename T>
TensorT<T> forward_train(ModelGraphT<T>& graph, const TensorT<T>& input, ForwardTrace<T>& trace) {
  return run_layers(graph, &graph, input, true, &trace);
}

template <typename T>
ParamGrads<T> backward(const ModelGraphT<T>& graph, const ForwardTrace<T>& trace,
                       const TensorT<T>& grad_logits) {
  const size_t n = graph.layers.size();
  if (trace.outputs.size() != n) {
    throw InvariantError("backward: trace does not match the graph");
  }
  ParamGrads<T> grads;
  grads.weight.resize(n);
  grads.bias.resize(n);
  grads.gamma.resize(n);
  grads.beta.resize(n);

  std::vector<TensorT<T>> gout(n);
  gout.back() = grad_logits;

  auto accumulate = [](TensorT<T>& dst, TensorT<T>&& src) {
    if (dst.empty()) {
      dst = std::move(src);
      return;
    }
    for (int64_t j = 0; j < dst.numel(); ++j) dst[j] += src[j];
  };
  auto send = [&](int idx, TensorT<T>&& g) {
    if (idx == kNetworkInput) return;
    accumulate(gout[static_cast<size_t>(idx)], std::move(g));
  };
  auto activation = [&](int idx) -> const TensorT<T>& {
    return idx == kNetworkInput ? trace.input : trace.outputs[static_cast<size_t>(idx)];
  };

  for (size_t ri = n; ri-- > 0;) {
    const LayerSpec& l = graph.layers[ri];
    TensorT<T>& g = gout[ri];
    if (g.empty()) continue;  // output feeds nothing on the loss path
    switch (l.kind) {
      case LayerKind::conv: {
        const bool need_input = l.inputs[0] != kNetworkInput;
        auto cg = conv2d_backward(g, activation(l.inputs[0]), graph.weights[ri], l.stride, l.pad,
                                  need_input);
        grads.weight[ri] = std::move(cg.grad_weight);
        if (need_input) send(l.inputs[0], std::move(cg.grad_input));
        break;
      }
      case LayerKind::bn: {
        auto bg = batchnorm_backward(g, trace.bn_caches[ri]);
        grads.gamma[ri] = std::move(bg.grad_gamma);
        grads.beta[ri] = std::move(bg.grad_beta);
        send(l.inputs[0], std::move(bg.grad_input));
        break;
      }
      case LayerKind::relu:
        send(l.inputs[0], relu_backward(g, activation(l.inputs[0])));
        break;
      case LayerKind::avgpool:
        send(l.inputs[0], global_avgpool_backward(g, activation(l.inputs[0]).shape()));
        break;
      case LayerKind::linear: {
        auto lg = linear_backward(g, activation(l.inputs[0]), graph.weights[ri]);
        grads.weight[ri] = std::move(lg.grad_weight);
        grads.bias[ri] = std::move(lg.grad_bias);
        send(l.inputs[0], std::move(lg.grad_input));
        break;
      }
      case LayerKind::add: {
        TensorT<T> copy = g;
        send(l.inputs[0], std::move(copy));
        send(l.inputs[1], std::move(g));
        break;
      }
    }
    gout[ri] = {};
  }
  return grads;
}

template <typename T>
std::vector<TensorT<T>*> parameters(ModelGraphT<T>& graph) {
  std::vector<TensorT<T>*> out;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    switch (graph.layers[i].kind) {
      case LayerKind::conv: out.push_back(&graph.weights[i]); break;
      case LayerKind::bn:
        out.push_back(&graph.bn_states[i].gamma);
        out.push_back(&graph.bn_states[i].beta);
        break;
      case LayerKind::linear:
        out.push_back(&graph.weights[i]);
        out.push_back(&graph.biases[i]);
        break;
      default: break;
    }
  }
  return out;
}

template <typename T>
std::vector<const TensorT<T>*> gradients(const ModelGraphT<T>& graph, ParamGrads<T>& grads) {
  std::vector<const TensorT<T>*> out;
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    switch (graph.layers[i].kind) {
      case LayerKind::conv: out.push_back(&grads.weight[i]); break;
      case LayerKind::bn:
        out.push_back(&grads.gamma[i]);
        out.push_back(&grads.beta[i]);
        break;
      case LayerKind::linear:
        out.push_back(&grads.weight[i]);
        out.push_back(&grads.bias[i]);
        break;
      default: break;
    }
  }
  return out;
}

#define MSP_INSTANTIATE_GRAPH(T)                                                          \
  template struct ModelGraphT<T>;                                                         \
  template void validate_graph<T>(const ModelGraphT<T>&);                                 \
  template std::vector<std::vector<int>> derive_coupling_groups<T>(const ModelGraphT<T>&); \
  template void init_parameters<T>(ModelGraphT<T>&, uint64_t);                            \
  template std::vector<std::array<int64_t, 3>> infer_feature_shapes<T>(                   \
      const ModelGraphT<T>&, std::pair<int, int>);                                        \
  template long long flops_count<T>(const ModelGraphT<T>&, std::pair<int, int>);          \
  template long long param_count<T>(const ModelGraphT<T>&);                               \
  template TensorT<T> forward_eval<T>(const ModelGraphT<T>&, const TensorT<T>&);          \
  template TensorT<T> forward_train<T>(ModelGraphT<T>&, const TensorT<T>&,                \
                                       ForwardTrace<T>&);                                 \
  template ParamGrads<T> backward<T>(const ModelGraphT<T>&, const ForwardTrace<T>&,       \
                                     const TensorT<T>&);                                  \
  template std::vector<TensorT<T>*> parameters<T>(ModelGraphT<T>&);                       \
  template std::vector<const TensorT<T>*> gradients<T>(const ModelGraphT<T>&,             \
                                                       ParamGrads<T>&);

MSP_INSTANTIATE_GRAPH(float)
MSP_INSTANTIATE_GRAPH(double)

#undef MSP_INSTANTIATE_GRAPH

}  // namespace masksparsity
