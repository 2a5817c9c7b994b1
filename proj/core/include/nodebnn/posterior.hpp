#pragma once

#include <cstdint>
#include <string>

#include "nodebnn/graph.hpp"
#include "nodebnn/network.hpp"
#include "nodebnn/rng.hpp"
#include "nodebnn/tensor.hpp"

namespace nodebnn {

enum class LatentStructure { In, Out, Both };

LatentStructure latent_structure_from_name(const std::string& name);
const char* latent_structure_name(LatentStructure s);

/// Flat coordinate layout of the latent multipliers Z = {z^l, s^l} over the
/// layers of a network. Structure "in" allocates only incoming multipliers,
/// "out" only outgoing, "both" allocates both. Layers without parameters get
/// none.
struct LatentLayout {
  struct LayerSlots {
    int z_offset = 0, z_count = 0;
    int s_offset = 0, s_count = 0;
  };
  LatentStructure structure = LatentStructure::Out;
  std::vector<LayerSlots> layers;
  int total_dim = 0;

  static LatentLayout make(const NetworkSpec& spec, LatentStructure structure);
};

/// Mixture of K equally-weighted diagonal Gaussians over the latent
/// coordinates. Standard deviations are stored as log values, sigma = exp(rho).
struct MoGPosterior {
  int components = 0;
  int dim = 0;
  Tensor mu;   // (K, dim)
  Tensor rho;  // (K, dim)

  double sigma(int k, int i) const;
};

/// N(1, s^2 I) over all latent coordinates.
struct LatentPrior {
  double std_dev = 0.30;
};

struct LatentSample {
  Tensor values;  // (dim,)
  Tensor eps;     // (dim,) the standard-normal draw
  int component = 0;
};

/// Means at 1, each sigma drawn from the positive truncation of
/// N(init_std_loc, init_std_scale).
MoGPosterior init_posterior(const LatentLayout& layout, int components, double init_std_loc,
                            double init_std_scale, std::uint64_t seed);

/// Uniform component choice, then mu_k + sigma_k * eps.
LatentSample sample_latents(const MoGPosterior& posterior, Rng& rng);

double component_entropy(const MoGPosterior& posterior, int k);
double cross_entropy_to_prior(const MoGPosterior& posterior, const LatentPrior& prior);
double bhattacharyya_coefficient(const MoGPosterior& posterior, int a, int b);
/// (1/K) sum_k H[q_k] - (1/K) sum_k log((1/K) sum_r BC(q_k, q_r)).
double mixture_entropy_lower_bound(const MoGPosterior& posterior);
/// Exact KL[q1 || prior] for a single-component posterior.
double gaussian_kl_to_prior(const MoGPosterior& posterior, const LatentPrior& prior);

/// Splits a flat latent sample node into per-layer multiplier nodes.
LatentNodeRefs split_latent_nodes(Graph& graph, const LatentLayout& layout, NodeRef flat_sample);

/// mu_row + exp(rho_row) * eps for the component selected by `component_index`
/// (a (1,) input bound with the drawn index). Gradients flow to mu/rho only.
NodeRef build_latent_sample(Graph& graph, NodeRef mu, NodeRef rho, NodeRef component_index,
                            NodeRef eps, int dim);

struct PosteriorTermRefs {
  NodeRef cross_entropy;  // H[q, p]
  NodeRef entropy_bound;  // lower bound on H[q]
};

/// Closed-form cross-entropy to the prior and the mixture-entropy lower bound
/// as graph nodes over (K, dim) mu/rho inputs.
PosteriorTermRefs build_posterior_terms(Graph& graph, NodeRef mu, NodeRef rho, int components,
                                        int dim, double prior_std);

}  // namespace nodebnn
