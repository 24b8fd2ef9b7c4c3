#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "masksparsity/kernels.hpp"
#include "masksparsity/tensor.hpp"

namespace masksparsity {

enum class LayerKind { conv, bn, relu, avgpool, linear, add };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

/// Index that a layer's `inputs` entry uses to reference the network input.
inline constexpr int kNetworkInput = -1;

struct LayerSpec {
  LayerKind kind{LayerKind::conv};
  std::string name;
  std::vector<int> inputs;  // producer layer indices, kNetworkInput for the stem

  // conv attributes
  int in_channels{0};
  int out_channels{0};
  int kernel{0};
  int stride{1};
  int pad{0};

  // linear attributes
  int in_features{0};
  int out_features{0};
};

/// Ordered layer list in topological order plus per-layer parameter state.
/// `coupling_groups` lists the sets of bn layers whose channel dimensions must
/// stay equal after pruning because their outputs merge at `add` nodes.
template <typename T>
struct ModelGraphT {
  std::vector<LayerSpec> layers;
  std::vector<TensorT<T>> weights;            // conv / linear layers
  std::vector<TensorT<T>> biases;             // linear layers
  std::vector<BatchNormStateT<T>> bn_states;  // bn layers
  std::vector<std::vector<int>> coupling_groups;
  int input_channels{3};

  std::vector<int> bn_layers() const;
  int find_layer(const std::string& name) const;  // -1 when absent
};

using ModelGraph = ModelGraphT<float>;

/// Checks the structural invariants: topological input references, every conv
/// immediately consumed by exactly one bn, add inputs with equal channel
/// counts, parameter shapes, and coupling-group consistency.
template <typename T>
void validate_graph(const ModelGraphT<T>& graph);

/// Groups bn layers that feed a common add through channel-preserving paths.
template <typename T>
std::vector<std::vector<int>> derive_coupling_groups(const ModelGraphT<T>& graph);

/// CIFAR-style residual network of depth 6n+2: three stages of widths
/// 16/32/64, stride-2 projection shortcuts at stage transitions, global
/// average pool and a linear head.
ModelGraph build_resnet_cifar(int n_per_stage, int num_classes, uint64_t seed = 0);

/// Straight conv-bn-relu chain; every second conv downsamples by 2.
ModelGraph build_plain_cnn(const std::vector<int>& widths, int num_classes, uint64_t seed = 0,
                           int in_channels = 3);

/// He-normal conv weights, gamma 1, beta 0, fresh running statistics.
template <typename T>
void init_parameters(ModelGraphT<T>& graph, uint64_t seed);

/// Multiply-accumulate count for one input of the given spatial size; conv
/// and linear layers only (1 MAC per multiply-add, bn/relu/pool excluded).
template <typename T>
long long flops_count(const ModelGraphT<T>& graph, std::pair<int, int> input_hw);

/// Learnable parameter count: conv weights, bn gamma/beta, linear weight+bias.
template <typename T>
long long param_count(const ModelGraphT<T>& graph);

/// Per-layer output shape as {C, H, W}; rank-2 outputs use H = W = 1.
template <typename T>
std::vector<std::array<int64_t, 3>> infer_feature_shapes(const ModelGraphT<T>& graph,
                                                         std::pair<int, int> input_hw);

template <typename T>
struct ForwardTrace {
  TensorT<T> input;
  std::vector<TensorT<T>> outputs;
  std::vector<BatchNormCacheT<T>> bn_caches;
};

/// Eval-mode forward; running statistics are used and never written.
template <typename T>
TensorT<T> forward_eval(const ModelGraphT<T>& graph, const TensorT<T>& input);

/// Training-mode forward; updates bn running statistics and records the
/// activations needed by backward().
template <typename T>
TensorT<T> forward_train(ModelGraphT<T>& graph, const TensorT<T>& input, ForwardTrace<T>& trace);

/// Per-layer parameter gradients, parallel to graph.layers.
template <typename T>
struct ParamGrads {
  std::vector<TensorT<T>> weight;
  std::vector<TensorT<T>> bias;
  std::vector<TensorT<T>> gamma;
  std::vector<TensorT<T>> beta;
};

template <typename T>
ParamGrads<T> backward(const ModelGraphT<T>& graph, const ForwardTrace<T>& trace,
                       const TensorT<T>& grad_logits);

/// Deterministic parameter enumeration (layer order; weight, bias, gamma,
/// beta within a layer). The two lists returned by these functions line up.
template <typename T>
std::vector<TensorT<T>*> parameters(ModelGraphT<T>& graph);

template <typename T>
std::vector<const TensorT<T>*> gradients(const ModelGraphT<T>& graph, ParamGrads<T>& grads);

template <typename U, typename T>
ModelGraphT<U> graph_cast(const ModelGraphT<T>& graph) {
  ModelGraphT<U> out;
  out.layers = graph.layers;
  out.coupling_groups = graph.coupling_groups;
  out.input_channels = graph.input_channels;
  out.weights.reserve(graph.weights.size());
  out.biases.reserve(graph.biases.size());
  out.bn_states.reserve(graph.bn_states.size());
  for (const auto& w : graph.weights) out.weights.push_back(tensor_cast<T, U>(w));
  for (const auto& b : graph.biases) out.biases.push_back(tensor_cast<T, U>(b));
  for (const auto& s : graph.bn_states) {
    BatchNormStateT<U> bs;
    bs.gamma = tensor_cast<T, U>(s.gamma);
    bs.beta = tensor_cast<T, U>(s.beta);
    bs.running_mean = tensor_cast<T, U>(s.running_mean);
    bs.running_var = tensor_cast<T, U>(s.running_var);
    bs.momentum = static_cast<U>(s.momentum);
    bs.epsilon = static_cast<U>(s.epsilon);
    out.bn_states.push_back(std::move(bs));
  }
  return out;
}

}  // namespace masksparsity
