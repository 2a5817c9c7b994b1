#include "nodebnn/model.hpp"

#include "nodebnn/errors.hpp"

namespace nodebnn {

namespace {

// (input_shape) -> (1, input_shape); batches pass through.
Tensor ensure_batched(const NetworkSpec& spec, const Tensor& x, bool& was_single) {
  was_single = x.shape() == spec.input_shape;
  if (!was_single) return x;
  Shape batched = spec.input_shape;
  batched.insert(batched.begin(), 1);
  return Tensor(batched, x.storage());
}

Tensor strip_batch(Tensor t, bool was_single) {
  if (!was_single) return t;
  Shape s(t.shape().begin() + 1, t.shape().end());
  return Tensor(s, t.storage());
}

// Declares "z"/"s" slices of a flat latent input named "latent".
LatentNodeRefs declare_latents(Graph& g, const LatentLayout& layout, const std::string& name) {
  NodeRef flat = g.input(name, Shape{layout.total_dim});
  return split_latent_nodes(g, layout, flat);
}

}  // namespace

Tensor forward_deterministic(const Network& net, const Tensor& x) {
  bool single = false;
  Tensor xb = ensure_batched(net.spec, x, single);
  Graph g;
  ParamRefs params = declare_params(g, net.spec, false);
  NodeRef input = g.input("x", xb.shape());
  ForwardRefs fwd = build_forward(g, net.spec, params.weights, params.biases, input, nullptr);
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, net);
  bindings["x"] = xb;
  g.evaluate(bindings);
  return strip_batch(g.value(fwd.logits), single);
}

Tensor forward_stochastic(const Network& net, const LatentLayout& layout, const Tensor& x,
                          const LatentSample& sample) {
  if (sample.values.size() != layout.total_dim) {
    throw ShapeError("latent sample has " + std::to_string(sample.values.size()) +
                     " coordinates, layout expects " + std::to_string(layout.total_dim));
  }
  bool single = false;
  Tensor xb = ensure_batched(net.spec, x, single);
  Graph g;
  ParamRefs params = declare_params(g, net.spec, false);
  NodeRef input = g.input("x", xb.shape());
  LatentNodeRefs latents = declare_latents(g, layout, "latent");
  ForwardRefs fwd = build_forward(g, net.spec, params.weights, params.biases, input, &latents);
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, net);
  bindings["x"] = xb;
  bindings["latent"] = sample.values;
  g.evaluate(bindings);
  return strip_batch(g.value(fwd.logits), single);
}

std::vector<Tensor> stochastic_logit_draws(const BnnModel& model, const Tensor& x, int samples,
                                           Rng& rng) {
  bool single = false;
  Tensor xb = ensure_batched(model.network.spec, x, single);
  Graph g;
  ParamRefs params = declare_params(g, model.network.spec, false);
  NodeRef input = g.input("x", xb.shape());
  LatentNodeRefs latents = declare_latents(g, model.layout, "latent");
  ForwardRefs fwd =
      build_forward(g, model.network.spec, params.weights, params.biases, input, &latents);
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, model.network);
  bindings["x"] = xb;
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    LatentSample sample = sample_latents(model.posterior, rng);
    bindings["latent"] = sample.values;
    g.evaluate(bindings);
    out.push_back(strip_batch(g.value(fwd.logits), single));
  }
  return out;
}

Tensor predictive_mean(const BnnModel& model, const Tensor& x, int samples, Rng& rng) {
  if (samples < 1) throw ConfigError("predictive_mean needs at least one sample");
  bool single = false;
  Tensor xb = ensure_batched(model.network.spec, x, single);
  Graph g;
  ParamRefs params = declare_params(g, model.network.spec, false);
  NodeRef input = g.input("x", xb.shape());
  std::vector<LatentNodeRefs> latents;
  latents.reserve(static_cast<std::size_t>(samples));
  for (int s = 0; s < samples; ++s) {
    latents.push_back(declare_latents(g, model.layout, "latent" + std::to_string(s)));
  }
  std::vector<ForwardRefs> fwd =
      build_forward_draws(g, model.network.spec, params.weights, params.biases, input, latents);
  NodeRef acc = g.softmax(fwd[0].logits);
  for (int s = 1; s < samples; ++s) acc = g.add(acc, g.softmax(fwd[static_cast<std::size_t>(s)].logits));
  NodeRef probs = g.scale(acc, 1.0 / static_cast<double>(samples));

  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, model.network);
  bindings["x"] = xb;
  for (int s = 0; s < samples; ++s) {
    bindings["latent" + std::to_string(s)] = sample_latents(model.posterior, rng).values;
  }
  g.evaluate(bindings);
  return strip_batch(g.value(probs), single);
}

Tensor layer_output(const Network& net, const Tensor& x, int ell, const LatentLayout* layout,
                    const LatentSample* sample) {
  const int layer_count = net.spec.layer_count();
  if (ell < 0 || ell > layer_count) {
    throw ShapeError("layer index " + std::to_string(ell) + " out of range [0," +
                     std::to_string(layer_count) + "]");
  }
  if (ell == 0) return x;
  bool single = false;
  Tensor xb = ensure_batched(net.spec, x, single);
  Graph g;
  ParamRefs params = declare_params(g, net.spec, false);
  NodeRef input = g.input("x", xb.shape());
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, net);
  bindings["x"] = xb;
  ForwardRefs fwd;
  if (sample) {
    if (!layout) throw ShapeError("layer_output: latent sample without a layout");
    LatentNodeRefs latents = declare_latents(g, *layout, "latent");
    fwd = build_forward(g, net.spec, params.weights, params.biases, input, &latents);
    bindings["latent"] = sample->values;
  } else {
    fwd = build_forward(g, net.spec, params.weights, params.biases, input, nullptr);
  }
  g.evaluate(bindings);
  return strip_batch(g.value(fwd.layer_outputs[static_cast<std::size_t>(ell - 1)]), single);
}

}  // namespace nodebnn
