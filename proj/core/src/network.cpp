#include "nodebnn/network.hpp"

#include <cmath>

#include "nodebnn/errors.hpp"

namespace nodebnn {

Activation activation_from_name(const std::string& name) {
  if (name == "identity" || name == "none") return Activation::Identity;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation: " + name);
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
  }
  return "?";
}

std::vector<Shape> NetworkSpec::layer_output_shapes() const {
  std::vector<Shape> out;
  Shape cur = input_shape;
  for (const LayerSpec& l : layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        if (shape_size(cur) != l.in) {
          throw ShapeError("dense layer expects " + std::to_string(l.in) + " inputs, previous shape " +
                           shape_str(cur));
        }
        cur = {l.out};
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        if (cur.size() != 3 || cur[0] != l.in) {
          throw ShapeError("conv layer expects (C,H,W) with C=" + std::to_string(l.in) +
                           ", previous shape " + shape_str(cur));
        }
        const int h = cur[1], w = cur[2];
        int ho, wo;
        if (l.padding == Pad::Same) {
          ho = (h + l.stride - 1) / l.stride;
          wo = (w + l.stride - 1) / l.stride;
        } else {
          if (h < l.kernel || w < l.kernel) throw ShapeError("conv valid padding: input too small");
          ho = (h - l.kernel) / l.stride + 1;
          wo = (w - l.kernel) / l.stride + 1;
        }
        cur = {l.out, ho, wo};
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool: {
        if (cur.size() != 3) throw ShapeError("global_avg_pool expects (C,H,W), got " + shape_str(cur));
        cur = {cur[0]};
        break;
      }
    }
    out.push_back(cur);
  }
  return out;
}

void NetworkSpec::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  if (classes < 2) throw ShapeError("network needs at least 2 classes");
  const Shape last = layer_output_shapes().back();
  if (shape_size(last) != classes) {
    throw ShapeError("final layer produces " + shape_str(last) + ", expected " +
                     std::to_string(classes) + " logits");
  }
}

NetworkSpec NetworkSpec::mlp(Shape input_shape, const std::vector<int>& hidden, int classes,
                             Activation act) {
  NetworkSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  int in = static_cast<int>(shape_size(spec.input_shape));
  for (int h : hidden) {
    spec.layers.push_back(LayerSpec::dense(in, h, act));
    in = h;
  }
  spec.layers.push_back(LayerSpec::dense(in, classes, Activation::Identity));
  spec.validate();
  return spec;
}

NetworkSpec NetworkSpec::conv_net(Shape input_shape, const std::vector<int>& channels,
                                  const std::vector<int>& strides, int classes, Activation act) {
  if (channels.size() != strides.size()) throw ConfigError("conv_net: channels/strides length mismatch");
  NetworkSpec spec;
  spec.input_shape = std::move(input_shape);
  spec.classes = classes;
  int in = spec.input_shape.at(0);
  for (std::size_t i = 0; i < channels.size(); ++i) {
    spec.layers.push_back(LayerSpec::conv2d(in, channels[i], 3, strides[i], Pad::Same, act));
    in = channels[i];
  }
  spec.layers.push_back(LayerSpec::conv2d(in, classes, 1, 1, Pad::Same, Activation::Identity));
  spec.layers.push_back(LayerSpec::global_avg_pool());
  spec.validate();
  return spec;
}

std::int64_t Network::parameter_count() const {
  std::int64_t n = 0;
  for (const Tensor& t : weights) n += t.size();
  for (const Tensor& t : biases) n += t.size();
  return n;
}

Network Network::init(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Network net;
  net.spec = spec;
  Rng rng(combine_seed(seed, 0x7e7a11ULL));
  for (const LayerSpec& l : spec.layers) {
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        // He fan-in scaling; weights stored (in, out) so the forward pass is x @ W.
        const double std_dev = std::sqrt(2.0 / static_cast<double>(l.in));
        Tensor w(Shape{l.in, l.out});
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Tensor(Shape{l.out}));
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(l.in * l.kernel * l.kernel));
        Tensor w(Shape{l.out, l.in, l.kernel, l.kernel});
        for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Tensor(Shape{l.out}));
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool: {
        net.weights.push_back(Tensor());
        net.biases.push_back(Tensor());
        break;
      }
    }
  }
  return net;
}

ParamRefs declare_params(Graph& graph, const NetworkSpec& spec, bool requires_grad) {
  ParamRefs refs;
  const int n = spec.layer_count();
  refs.weights.assign(static_cast<std::size_t>(n), NodeRef{});
  refs.biases.assign(static_cast<std::size_t>(n), NodeRef{});
  for (int i = 0; i < n; ++i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    if (!l.has_params()) continue;
    Shape ws = l.kind == LayerSpec::Kind::Dense ? Shape{l.in, l.out}
                                                : Shape{l.out, l.in, l.kernel, l.kernel};
    refs.weights[static_cast<std::size_t>(i)] =
        graph.input("w" + std::to_string(i), std::move(ws), requires_grad);
    refs.biases[static_cast<std::size_t>(i)] =
        graph.input("b" + std::to_string(i), Shape{l.out}, requires_grad);
  }
  return refs;
}

void bind_params(std::unordered_map<std::string, Tensor>& bindings, const Network& net) {
  for (int i = 0; i < net.spec.layer_count(); ++i) {
    if (!net.spec.layers[static_cast<std::size_t>(i)].has_params()) continue;
    bindings["w" + std::to_string(i)] = net.weights[static_cast<std::size_t>(i)];
    bindings["b" + std::to_string(i)] = net.biases[static_cast<std::size_t>(i)];
  }
}

namespace {

NodeRef apply_activation(Graph& g, NodeRef h, Activation act) {
  switch (act) {
    case Activation::Identity: return h;
    case Activation::Relu: return g.relu(h);
    case Activation::Tanh: return g.tanh(h);
    case Activation::Softplus: return g.softplus(h);
  }
  return h;
}

// Multiplier m over the feature axis of value v: (B,F) or (B,C,H,W).
NodeRef apply_multiplier(Graph& g, NodeRef v, NodeRef m) {
  const Shape& vs = g.shape_of(v);
  const Shape& ms = g.shape_of(m);
  if (vs.size() == 2) {
    return g.mul(v, g.broadcast(m, vs));
  }
  // (C,) -> (C,1,1) -> (B,C,H,W)
  NodeRef per_channel = g.reshape(m, Shape{ms[0], 1, 1});
  return g.mul(v, g.broadcast(per_channel, vs));
}

}  // namespace

namespace {

void check_batched_input(const Graph& graph, const NetworkSpec& spec, NodeRef x) {
  const Shape& xs = graph.shape_of(x);
  if (static_cast<int>(xs.size()) != static_cast<int>(spec.input_shape.size()) + 1) {
    throw ShapeError("build_forward expects batched input, got " + shape_str(xs));
  }
  for (std::size_t i = 0; i < spec.input_shape.size(); ++i) {
    if (xs[i + 1] != spec.input_shape[i]) {
      throw ShapeError("input shape " + shape_str(xs) + " does not match spec " +
                       shape_str(spec.input_shape));
    }
  }
}

// The affine part of a layer: flatten if needed, apply the incoming
// multiplier, then weights and bias. Pooling layers just pool.
NodeRef layer_affine(Graph& graph, const LayerSpec& l, NodeRef w, NodeRef b, NodeRef f, int batch,
                     NodeRef z) {
  switch (l.kind) {
    case LayerSpec::Kind::Dense: {
      NodeRef in = f;
      if (graph.shape_of(in).size() != 2) {
        in = graph.reshape(in, Shape{batch, static_cast<int>(shape_size(graph.shape_of(in)) / batch)});
      }
      if (z.valid()) in = apply_multiplier(graph, in, z);
      return graph.add(graph.matmul(in, w), graph.broadcast(b, Shape{batch, l.out}));
    }
    case LayerSpec::Kind::Conv2d: {
      NodeRef in = f;
      if (z.valid()) in = apply_multiplier(graph, in, z);
      NodeRef conv = graph.conv2d(in, w, l.stride, l.padding);
      NodeRef bias = graph.reshape(b, Shape{l.out, 1, 1});
      return graph.add(conv, graph.broadcast(bias, graph.shape_of(conv)));
    }
    case LayerSpec::Kind::GlobalAvgPool:
      return graph.global_avg_pool(f);
  }
  return f;
}

}  // namespace

ForwardRefs build_forward(Graph& graph, const NetworkSpec& spec, const std::vector<NodeRef>& weights,
                          const std::vector<NodeRef>& biases, NodeRef x, const LatentNodeRefs* latents) {
  check_batched_input(graph, spec, x);
  const int batch = graph.shape_of(x)[0];

  ForwardRefs refs;
  NodeRef f = x;
  for (int i = 0; i < spec.layer_count(); ++i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    NodeRef z, s;
    if (latents) {
      z = latents->incoming[static_cast<std::size_t>(i)];
      s = latents->outgoing[static_cast<std::size_t>(i)];
    }
    NodeRef h = layer_affine(graph, l, weights[static_cast<std::size_t>(i)],
                             biases[static_cast<std::size_t>(i)], f, batch, z);
    if (s.valid()) h = apply_multiplier(graph, h, s);
    refs.pre_activations.push_back(l.has_params() ? h : NodeRef{});
    f = apply_activation(graph, h, l.activation);
    refs.layer_outputs.push_back(f);
  }
  refs.logits = f;
  if (graph.shape_of(refs.logits).size() != 2) {
    refs.logits = graph.reshape(refs.logits, Shape{batch, spec.classes});
  }
  return refs;
}

std::vector<ForwardRefs> build_forward_draws(Graph& graph, const NetworkSpec& spec,
                                             const std::vector<NodeRef>& weights,
                                             const std::vector<NodeRef>& biases, NodeRef x,
                                             const std::vector<LatentNodeRefs>& draws) {
  check_batched_input(graph, spec, x);
  const int batch = graph.shape_of(x)[0];
  const std::size_t n_draws = draws.size();
  if (n_draws == 0) throw ShapeError("build_forward_draws needs at least one draw");

  std::vector<ForwardRefs> refs(n_draws);
  // Per-draw running activation; invalid while the computation is still
  // shared across draws.
  std::vector<NodeRef> f_draw(n_draws);
  NodeRef f_shared = x;
  bool shared = true;

  for (int i = 0; i < spec.layer_count(); ++i) {
    const LayerSpec& l = spec.layers[static_cast<std::size_t>(i)];
    NodeRef w = weights[static_cast<std::size_t>(i)];
    NodeRef b = biases[static_cast<std::size_t>(i)];
    const bool has_z = draws[0].incoming[static_cast<std::size_t>(i)].valid();
    const bool has_s = draws[0].outgoing[static_cast<std::size_t>(i)].valid();

    if (shared && !has_z) {
      NodeRef h_pre = layer_affine(graph, l, w, b, f_shared, batch, NodeRef{});
      if (!has_s) {
        f_shared = apply_activation(graph, h_pre, l.activation);
        for (std::size_t d = 0; d < n_draws; ++d) {
          refs[d].pre_activations.push_back(l.has_params() ? h_pre : NodeRef{});
          refs[d].layer_outputs.push_back(f_shared);
        }
        continue;
      }
      // Outgoing multiplier forks the draws after the shared affine.
      for (std::size_t d = 0; d < n_draws; ++d) {
        NodeRef h = apply_multiplier(graph, h_pre, draws[d].outgoing[static_cast<std::size_t>(i)]);
        refs[d].pre_activations.push_back(h);
        f_draw[d] = apply_activation(graph, h, l.activation);
        refs[d].layer_outputs.push_back(f_draw[d]);
      }
      shared = false;
      continue;
    }

    for (std::size_t d = 0; d < n_draws; ++d) {
      NodeRef in = shared ? f_shared : f_draw[d];
      NodeRef z = draws[d].incoming[static_cast<std::size_t>(i)];
      NodeRef h = layer_affine(graph, l, w, b, in, batch, z);
      if (has_s) h = apply_multiplier(graph, h, draws[d].outgoing[static_cast<std::size_t>(i)]);
      refs[d].pre_activations.push_back(l.has_params() ? h : NodeRef{});
      f_draw[d] = apply_activation(graph, h, l.activation);
      refs[d].layer_outputs.push_back(f_draw[d]);
    }
    shared = false;
  }

  for (std::size_t d = 0; d < n_draws; ++d) {
    refs[d].logits = shared ? f_shared : f_draw[d];
    if (graph.shape_of(refs[d].logits).size() != 2) {
      refs[d].logits = graph.reshape(refs[d].logits, Shape{batch, spec.classes});
    }
  }
  return refs;
}

}  // namespace nodebnn
