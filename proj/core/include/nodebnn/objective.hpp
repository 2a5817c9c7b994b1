#pragma once

#include <memory>
#include <vector>

#include "nodebnn/model.hpp"

namespace nodebnn {

struct GammaElboConfig {
  double gamma = 0.0;          // extra entropy weight, 0 recovers the classic ELBO
  int train_samples = 4;       // MC samples per step for the likelihood term
  double weight_decay = 5e-4;  // Gaussian prior on the weights
  int dataset_size = 0;        // N; likelihood is scaled to a full-dataset bound
  int batch_size = 128;
};

struct ElboTerms {
  double expected_log_lik = 0.0;  // (N/B) sum log p(batch | theta, Z), MC average
  double cross_entropy = 0.0;     // H[q, p]
  double entropy_bound = 0.0;     // lower bound on H[q]
  double log_prior_theta = 0.0;   // -wd/2 * ||theta||^2
  double objective = 0.0;
};

struct LatentDraw {
  Tensor eps;  // (dim,)
  int component = 0;
};

std::vector<LatentDraw> draw_latent_noise(const MoGPosterior& posterior, int count, Rng& rng);

/// Training graph for one batch size. Built once, evaluated with fresh
/// bindings every step; gradients flow to the weights and to (mu, rho).
class ElboGraph {
 public:
  ElboGraph(const NetworkSpec& spec, const LatentLayout& layout, int components,
            const GammaElboConfig& cfg, int batch, double prior_std);

  ElboTerms evaluate(const Network& net, const MoGPosterior& posterior, const Tensor& images,
                     const Tensor& labels, double beta, const std::vector<LatentDraw>& draws);
  void backward();

  const Tensor& weight_gradient(int layer) const;
  const Tensor& bias_gradient(int layer) const;
  const Tensor& mu_gradient() const;
  const Tensor& rho_gradient() const;

  int batch() const { return batch_; }
  int samples() const { return cfg_.train_samples; }
  Graph& graph() { return graph_; }
  NodeRef objective_node() const { return objective_; }

 private:
  GammaElboConfig cfg_;
  int batch_;
  Graph graph_;
  ParamRefs params_;
  NodeRef mu_, rho_, x_, y_, beta_;
  std::vector<NodeRef> eps_, comp_;
  NodeRef objective_, expected_ll_, cross_entropy_, entropy_bound_, log_prior_theta_;
};

/// One-shot evaluation of the objective with `cfg.train_samples` fresh draws.
ElboTerms gamma_elbo(const BnnModel& model, const Tensor& images, const Tensor& labels,
                     const GammaElboConfig& cfg, double beta, Rng& rng);

/// ell + log p(theta) + beta * (-H[q,p] + (gamma+1) * entropy bound).
/// `log_prior_theta` may be invalid when the model has no weight prior term.
NodeRef combine_objective(Graph& graph, NodeRef expected_log_lik, NodeRef log_prior_theta,
                          const PosteriorTermRefs& terms, double gamma, NodeRef beta);

}  // namespace nodebnn
