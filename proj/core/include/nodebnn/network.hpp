#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodebnn/graph.hpp"
#include "nodebnn/rng.hpp"
#include "nodebnn/tensor.hpp"

namespace nodebnn {

enum class Activation { Identity, Relu, Tanh, Softplus };

Activation activation_from_name(const std::string& name);
const char* activation_name(Activation a);

struct LayerSpec {
  enum class Kind { Dense, Conv2d, GlobalAvgPool };
  Kind kind = Kind::Dense;
  int in = 0, out = 0;       // dense: features, conv: channels
  int kernel = 0;            // conv only
  int stride = 1;            // conv only
  Pad padding = Pad::Same;   // conv only
  Activation activation = Activation::Identity;

  bool has_params() const { return kind != Kind::GlobalAvgPool; }

  static LayerSpec dense(int in, int out, Activation act) {
    LayerSpec l;
    l.kind = Kind::Dense;
    l.in = in;
    l.out = out;
    l.activation = act;
    return l;
  }
  static LayerSpec conv2d(int in_ch, int out_ch, int kernel, int stride, Pad pad, Activation act) {
    LayerSpec l;
    l.kind = Kind::Conv2d;
    l.in = in_ch;
    l.out = out_ch;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = pad;
    l.activation = act;
    return l;
  }
  static LayerSpec global_avg_pool() {
    LayerSpec l;
    l.kind = Kind::GlobalAvgPool;
    return l;
  }
};

struct NetworkSpec {
  Shape input_shape;  // without batch axis, e.g. {1,28,28} or {784}
  int classes = 0;
  std::vector<LayerSpec> layers;

  int layer_count() const { return static_cast<int>(layers.size()); }
  /// Per-layer output shapes (without batch axis), index 0 = first layer.
  std::vector<Shape> layer_output_shapes() const;
  void validate() const;

  static NetworkSpec mlp(Shape input_shape, const std::vector<int>& hidden, int classes,
                         Activation act);
  /// 3x3 conv stack; `channels[i]` output channels with stride `strides[i]`,
  /// then a 1x1 conv to `classes` and global average pooling.
  static NetworkSpec conv_net(Shape input_shape, const std::vector<int>& channels,
                              const std::vector<int>& strides, int classes, Activation act);
};

struct Network {
  NetworkSpec spec;
  std::vector<Tensor> weights;  // empty for layers without parameters
  std::vector<Tensor> biases;

  std::int64_t parameter_count() const;
  static Network init(const NetworkSpec& spec, std::uint64_t seed);
};

/// Per-layer latent multiplier nodes for a stochastic forward pass; invalid
/// refs mean the multiplier is fixed at one.
struct LatentNodeRefs {
  std::vector<NodeRef> incoming;  // z^l, applied to the layer input
  std::vector<NodeRef> outgoing;  // s^l, applied after the bias
};

struct ForwardRefs {
  NodeRef logits;
  std::vector<NodeRef> layer_outputs;     // f^1 .. f^L
  std::vector<NodeRef> pre_activations;   // h^1 .. h^L (invalid for pooling)
};

/// Appends the network body to `graph`, batched over the leading axis of `x`.
/// When `latents` is non-null, multipliers are applied per the
/// node-stochastic recursion; invalid refs leave a multiplier fixed at one.
ForwardRefs build_forward(Graph& graph, const NetworkSpec& spec,
                          const std::vector<NodeRef>& weights, const std::vector<NodeRef>& biases,
                          NodeRef x, const LatentNodeRefs* latents);

/// One stochastic pass per draw, sharing every node that does not depend on
/// the draw (in particular the first affine when the layer has no incoming
/// multiplier). All draws must have the same multiplier structure.
std::vector<ForwardRefs> build_forward_draws(Graph& graph, const NetworkSpec& spec,
                                             const std::vector<NodeRef>& weights,
                                             const std::vector<NodeRef>& biases, NodeRef x,
                                             const std::vector<LatentNodeRefs>& draws);

/// Declares named parameter inputs w0,b0,w1,b1,... and returns their refs.
struct ParamRefs {
  std::vector<NodeRef> weights, biases;
};
ParamRefs declare_params(Graph& graph, const NetworkSpec& spec, bool requires_grad);
void bind_params(std::unordered_map<std::string, Tensor>& bindings, const Network& net);

}  // namespace nodebnn
