#include "nodebnn/objective.hpp"

#include "nodebnn/errors.hpp"

namespace nodebnn {

std::vector<LatentDraw> draw_latent_noise(const MoGPosterior& posterior, int count, Rng& rng) {
  std::vector<LatentDraw> draws(static_cast<std::size_t>(count));
  for (LatentDraw& d : draws) {
    d.component = static_cast<int>(rng.integer(static_cast<std::uint64_t>(posterior.components)));
    d.eps = Tensor(Shape{posterior.dim});
    for (int i = 0; i < posterior.dim; ++i) d.eps[i] = rng.normal();
  }
  return draws;
}

NodeRef combine_objective(Graph& g, NodeRef expected_log_lik, NodeRef log_prior_theta,
                          const PosteriorTermRefs& terms, double gamma, NodeRef beta) {
  NodeRef kl_part = g.mul(beta, g.add(g.scale(terms.cross_entropy, -1.0),
                                      g.scale(terms.entropy_bound, gamma + 1.0)));
  NodeRef obj = g.add(expected_log_lik, kl_part);
  if (log_prior_theta.valid()) obj = g.add(obj, log_prior_theta);
  return obj;
}

ElboGraph::ElboGraph(const NetworkSpec& spec, const LatentLayout& layout, int components,
                     const GammaElboConfig& cfg, int batch, double prior_std)
    : cfg_(cfg), batch_(batch) {
  if (cfg.gamma < 0.0) throw ConfigError("gamma must be non-negative");
  if (cfg.train_samples < 1) throw ConfigError("train_samples must be at least 1");
  if (cfg.dataset_size < 1) throw ConfigError("dataset_size must be set");
  Graph& g = graph_;

  params_ = declare_params(g, spec, true);
  mu_ = g.input("mu", Shape{components, layout.total_dim}, true);
  rho_ = g.input("rho", Shape{components, layout.total_dim}, true);
  Shape xshape = spec.input_shape;
  xshape.insert(xshape.begin(), batch);
  x_ = g.input("x", xshape);
  y_ = g.input("y", Shape{batch});
  beta_ = g.input("beta", Shape{});

  const int s_count = cfg.train_samples;
  std::vector<LatentNodeRefs> latents;
  latents.reserve(static_cast<std::size_t>(s_count));
  eps_.reserve(static_cast<std::size_t>(s_count));
  comp_.reserve(static_cast<std::size_t>(s_count));
  for (int s = 0; s < s_count; ++s) {
    NodeRef eps = g.input("eps" + std::to_string(s), Shape{layout.total_dim});
    NodeRef comp = g.input("comp" + std::to_string(s), Shape{1});
    eps_.push_back(eps);
    comp_.push_back(comp);
    NodeRef sample = build_latent_sample(g, mu_, rho_, comp, eps, layout.total_dim);
    latents.push_back(split_latent_nodes(g, layout, sample));
  }
  std::vector<ForwardRefs> fwd = build_forward_draws(g, spec, params_.weights, params_.biases, x_, latents);

  // (N/B) sum_batch (1/S) sum_s log p(y | x, theta, Z_s) = -N * mean CE.
  NodeRef ce_acc = g.mean(g.softmax_xent(fwd[0].logits, y_));
  for (int s = 1; s < s_count; ++s) {
    ce_acc = g.add(ce_acc, g.mean(g.softmax_xent(fwd[static_cast<std::size_t>(s)].logits, y_)));
  }
  expected_ll_ = g.scale(ce_acc, -static_cast<double>(cfg.dataset_size) / s_count);

  NodeRef sq_norm;
  for (std::size_t i = 0; i < params_.weights.size(); ++i) {
    if (!params_.weights[i].valid()) continue;
    NodeRef term = g.add(g.sum(g.square(params_.weights[i])), g.sum(g.square(params_.biases[i])));
    sq_norm = sq_norm.valid() ? g.add(sq_norm, term) : term;
  }
  log_prior_theta_ = g.scale(sq_norm, -0.5 * cfg.weight_decay);

  PosteriorTermRefs terms = build_posterior_terms(g, mu_, rho_, components, layout.total_dim, prior_std);
  cross_entropy_ = terms.cross_entropy;
  entropy_bound_ = terms.entropy_bound;
  objective_ = combine_objective(g, expected_ll_, log_prior_theta_, terms, cfg.gamma, beta_);

  g.mark_output("objective", objective_);
  g.mark_output("expected_log_lik", expected_ll_);
  g.mark_output("cross_entropy", cross_entropy_);
  g.mark_output("entropy_bound", entropy_bound_);
  g.mark_output("log_prior_theta", log_prior_theta_);
}

ElboTerms ElboGraph::evaluate(const Network& net, const MoGPosterior& posterior, const Tensor& images,
                              const Tensor& labels, double beta, const std::vector<LatentDraw>& draws) {
  if (static_cast<int>(draws.size()) != cfg_.train_samples) {
    throw ShapeError("expected " + std::to_string(cfg_.train_samples) + " latent draws, got " +
                     std::to_string(draws.size()));
  }
  if (beta < 0.0 || beta > 1.0) throw ConfigError("beta must lie in [0,1]");
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, net);
  bindings["mu"] = posterior.mu;
  bindings["rho"] = posterior.rho;
  bindings["x"] = images;
  bindings["y"] = labels;
  bindings["beta"] = Tensor::scalar(beta);
  for (std::size_t s = 0; s < draws.size(); ++s) {
    bindings["eps" + std::to_string(s)] = draws[s].eps;
    bindings["comp" + std::to_string(s)] =
        Tensor(Shape{1}, {static_cast<double>(draws[s].component)});
  }
  graph_.evaluate(bindings);
  ElboTerms t;
  t.expected_log_lik = graph_.value(expected_ll_).item();
  t.cross_entropy = graph_.value(cross_entropy_).item();
  t.entropy_bound = graph_.value(entropy_bound_).item();
  t.log_prior_theta = graph_.value(log_prior_theta_).item();
  t.objective = graph_.value(objective_).item();
  return t;
}

void ElboGraph::backward() { graph_.backward(objective_); }

const Tensor& ElboGraph::weight_gradient(int layer) const {
  return graph_.gradient(params_.weights[static_cast<std::size_t>(layer)]);
}
const Tensor& ElboGraph::bias_gradient(int layer) const {
  return graph_.gradient(params_.biases[static_cast<std::size_t>(layer)]);
}
const Tensor& ElboGraph::mu_gradient() const { return graph_.gradient(mu_); }
const Tensor& ElboGraph::rho_gradient() const { return graph_.gradient(rho_); }

ElboTerms gamma_elbo(const BnnModel& model, const Tensor& images, const Tensor& labels,
                     const GammaElboConfig& cfg, double beta, Rng& rng) {
  GammaElboConfig local = cfg;
  const int batch = images.extent(0);
  if (local.dataset_size == 0) local.dataset_size = batch;
  ElboGraph graph(model.network.spec, model.layout, model.posterior.components, local, batch,
                  model.prior.std_dev);
  std::vector<LatentDraw> draws = draw_latent_noise(model.posterior, local.train_samples, rng);
  return graph.evaluate(model.network, model.posterior, images, labels, beta, draws);
}

}  // namespace nodebnn
