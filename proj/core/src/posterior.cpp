#include "nodebnn/posterior.hpp"

#include <cmath>
#include <numbers>

#include "nodebnn/errors.hpp"

namespace nodebnn {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // ln(2*pi)
}

LatentStructure latent_structure_from_name(const std::string& name) {
  if (name == "in") return LatentStructure::In;
  if (name == "out") return LatentStructure::Out;
  if (name == "both") return LatentStructure::Both;
  throw ConfigError("unknown latent structure: " + name);
}

const char* latent_structure_name(LatentStructure s) {
  switch (s) {
    case LatentStructure::In: return "in";
    case LatentStructure::Out: return "out";
    case LatentStructure::Both: return "both";
  }
  return "?";
}

LatentLayout LatentLayout::make(const NetworkSpec& spec, LatentStructure structure) {
  LatentLayout layout;
  layout.structure = structure;
  const bool want_in = structure != LatentStructure::Out;
  const bool want_out = structure != LatentStructure::In;
  int offset = 0;
  for (const LayerSpec& l : spec.layers) {
    LayerSlots slots;
    if (l.has_params()) {
      if (want_in) {
        slots.z_offset = offset;
        slots.z_count = l.in;
        offset += l.in;
      }
      if (want_out) {
        slots.s_offset = offset;
        slots.s_count = l.out;
        offset += l.out;
      }
    }
    layout.layers.push_back(slots);
  }
  layout.total_dim = offset;
  return layout;
}

double MoGPosterior::sigma(int k, int i) const {
  return std::exp(rho[static_cast<std::int64_t>(k) * dim + i]);
}

MoGPosterior init_posterior(const LatentLayout& layout, int components, double init_std_loc,
                            double init_std_scale, std::uint64_t seed) {
  if (components < 1) throw ConfigError("posterior needs at least one component");
  if (init_std_loc <= 0.0) throw ConfigError("init_std_loc must be positive");
  MoGPosterior q;
  q.components = components;
  q.dim = layout.total_dim;
  q.mu = Tensor::ones(Shape{components, layout.total_dim});
  q.rho = Tensor(Shape{components, layout.total_dim});
  Rng rng(combine_seed(seed, 0x9057e21aULL));
  for (std::int64_t i = 0; i < q.rho.size(); ++i) {
    q.rho[i] = std::log(rng.half_normal(init_std_loc, init_std_scale));
  }
  return q;
}

LatentSample sample_latents(const MoGPosterior& q, Rng& rng) {
  LatentSample s;
  s.component = static_cast<int>(rng.integer(static_cast<std::uint64_t>(q.components)));
  s.eps = Tensor(Shape{q.dim});
  s.values = Tensor(Shape{q.dim});
  const std::int64_t base = static_cast<std::int64_t>(s.component) * q.dim;
  for (int i = 0; i < q.dim; ++i) {
    s.eps[i] = rng.normal();
    s.values[i] = q.mu[base + i] + std::exp(q.rho[base + i]) * s.eps[i];
  }
  return s;
}

double component_entropy(const MoGPosterior& q, int k) {
  // sum_i 0.5*ln(2*pi*e*sigma^2) = dim*0.5*(ln(2*pi)+1) + sum_i rho_i
  double acc = 0.5 * (kLog2Pi + 1.0) * q.dim;
  const std::int64_t base = static_cast<std::int64_t>(k) * q.dim;
  for (int i = 0; i < q.dim; ++i) acc += q.rho[base + i];
  return acc;
}

double cross_entropy_to_prior(const MoGPosterior& q, const LatentPrior& prior) {
  const double s2 = prior.std_dev * prior.std_dev;
  double acc = 0.5 * std::log(2.0 * std::numbers::pi * s2) * q.dim;
  double quad = 0.0;
  for (int k = 0; k < q.components; ++k) {
    const std::int64_t base = static_cast<std::int64_t>(k) * q.dim;
    for (int i = 0; i < q.dim; ++i) {
      const double sigma = std::exp(q.rho[base + i]);
      const double dev = q.mu[base + i] - 1.0;
      quad += sigma * sigma + dev * dev;
    }
  }
  return acc + quad / (2.0 * s2 * q.components);
}

double bhattacharyya_coefficient(const MoGPosterior& q, int a, int b) {
  // Diagonal Gaussians: BC = exp(-D_B) with
  // D_B = sum_i (mu_a-mu_b)^2/(8 vbar) + 0.5*ln(vbar/sqrt(va*vb)).
  double dist = 0.0;
  const std::int64_t ba = static_cast<std::int64_t>(a) * q.dim;
  const std::int64_t bb = static_cast<std::int64_t>(b) * q.dim;
  for (int i = 0; i < q.dim; ++i) {
    const double va = std::exp(2.0 * q.rho[ba + i]);
    const double vb = std::exp(2.0 * q.rho[bb + i]);
    const double vbar = 0.5 * (va + vb);
    const double dmu = q.mu[ba + i] - q.mu[bb + i];
    dist += dmu * dmu / (8.0 * vbar) + 0.5 * (std::log(vbar) - q.rho[ba + i] - q.rho[bb + i]);
  }
  return std::exp(-dist);
}

double mixture_entropy_lower_bound(const MoGPosterior& q) {
  const int k = q.components;
  double entropy_term = 0.0;
  for (int i = 0; i < k; ++i) entropy_term += component_entropy(q, i);
  entropy_term /= k;
  double overlap_term = 0.0;
  for (int i = 0; i < k; ++i) {
    double inner = 0.0;
    for (int r = 0; r < k; ++r) inner += bhattacharyya_coefficient(q, i, r);
    overlap_term += std::log(inner / k);
  }
  overlap_term /= k;
  return entropy_term - overlap_term;
}

double gaussian_kl_to_prior(const MoGPosterior& q, const LatentPrior& prior) {
  if (q.components != 1) throw ShapeError("gaussian_kl_to_prior requires a single component");
  // KL[N(mu,sigma^2) || N(1,s^2)] summed over coordinates.
  const double s2 = prior.std_dev * prior.std_dev;
  double acc = 0.0;
  for (int i = 0; i < q.dim; ++i) {
    const double sigma = std::exp(q.rho[i]);
    const double dev = q.mu[i] - 1.0;
    acc += std::log(prior.std_dev) - q.rho[i] + (sigma * sigma + dev * dev) / (2.0 * s2) - 0.5;
  }
  return acc;
}

LatentNodeRefs split_latent_nodes(Graph& graph, const LatentLayout& layout, NodeRef flat_sample) {
  LatentNodeRefs refs;
  for (const LatentLayout::LayerSlots& slots : layout.layers) {
    NodeRef z, s;
    if (slots.z_count > 0) {
      z = graph.gather(flat_sample, graph.constant(Tensor::iota(slots.z_offset, slots.z_count)));
    }
    if (slots.s_count > 0) {
      s = graph.gather(flat_sample, graph.constant(Tensor::iota(slots.s_offset, slots.s_count)));
    }
    refs.incoming.push_back(z);
    refs.outgoing.push_back(s);
  }
  return refs;
}

NodeRef build_latent_sample(Graph& graph, NodeRef mu, NodeRef rho, NodeRef component_index,
                            NodeRef eps, int dim) {
  NodeRef mu_row = graph.reshape(graph.gather(mu, component_index), Shape{dim});
  NodeRef rho_row = graph.reshape(graph.gather(rho, component_index), Shape{dim});
  return graph.add(mu_row, graph.mul(graph.exp(rho_row), eps));
}

PosteriorTermRefs build_posterior_terms(Graph& graph, NodeRef mu, NodeRef rho, int components,
                                        int dim, double prior_std) {
  PosteriorTermRefs refs;
  const double k = components;
  const double s2 = prior_std * prior_std;

  // Cross-entropy H[q,p] = dim*0.5*ln(2*pi*s^2)
  //                        + (1/(2*K*s^2)) * sum_{k,i} (sigma^2 + (mu-1)^2).
  NodeRef sigma2 = graph.square(graph.exp(rho));
  NodeRef dev2 = graph.square(graph.sub(mu, graph.constant(Tensor::ones(Shape{components, dim}))));
  NodeRef quad = graph.scale(graph.sum(graph.add(sigma2, dev2)), 1.0 / (2.0 * k * s2));
  refs.cross_entropy =
      graph.add(quad, graph.constant(0.5 * std::log(2.0 * std::numbers::pi * s2) * dim));

  // Mean component entropy (1/K) sum_k H[q_k] = dim*0.5*(ln(2*pi)+1)
  //                                             + (1/K) sum_{k,i} rho.
  NodeRef mean_comp_entropy = graph.add(graph.scale(graph.sum(rho), 1.0 / k),
                                        graph.constant(0.5 * (kLog2Pi + 1.0) * dim));
  if (components == 1) {
    // Single Gaussian: the bound is exact and the overlap term vanishes.
    refs.entropy_bound = mean_comp_entropy;
    return refs;
  }

  // Per-component rows for the pairwise Bhattacharyya overlaps.
  std::vector<NodeRef> mu_rows(static_cast<std::size_t>(components));
  std::vector<NodeRef> rho_rows(static_cast<std::size_t>(components));
  for (int i = 0; i < components; ++i) {
    NodeRef idx = graph.constant(Tensor::iota(i, 1));
    mu_rows[static_cast<std::size_t>(i)] = graph.reshape(graph.gather(mu, idx), Shape{dim});
    rho_rows[static_cast<std::size_t>(i)] = graph.reshape(graph.gather(rho, idx), Shape{dim});
  }
  std::vector<std::vector<NodeRef>> bc(static_cast<std::size_t>(components),
                                       std::vector<NodeRef>(static_cast<std::size_t>(components)));
  for (int i = 0; i < components; ++i) {
    for (int r = i; r < components; ++r) {
      NodeRef coeff;
      if (r == i) {
        coeff = graph.constant(1.0);  // BC(q,q) = 1
      } else {
        NodeRef va = graph.exp(graph.scale(rho_rows[static_cast<std::size_t>(i)], 2.0));
        NodeRef vb = graph.exp(graph.scale(rho_rows[static_cast<std::size_t>(r)], 2.0));
        NodeRef vbar = graph.scale(graph.add(va, vb), 0.5);
        NodeRef dmu2 = graph.square(
            graph.sub(mu_rows[static_cast<std::size_t>(i)], mu_rows[static_cast<std::size_t>(r)]));
        NodeRef log_vbar = graph.log(vbar);
        // (mu_a-mu_b)^2 / (8 vbar) via exp(-log vbar)
        NodeRef quad_term =
            graph.scale(graph.sum(graph.mul(dmu2, graph.exp(graph.scale(log_vbar, -1.0)))), 1.0 / 8.0);
        NodeRef log_det_term = graph.scale(
            graph.sum(graph.sub(graph.sub(log_vbar, rho_rows[static_cast<std::size_t>(i)]),
                                rho_rows[static_cast<std::size_t>(r)])),
            0.5);
        coeff = graph.exp(graph.scale(graph.add(quad_term, log_det_term), -1.0));
      }
      bc[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)] = coeff;
      bc[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)] = coeff;
    }
  }
  NodeRef overlap;
  for (int i = 0; i < components; ++i) {
    NodeRef inner = bc[static_cast<std::size_t>(i)][0];
    for (int r = 1; r < components; ++r) {
      inner = graph.add(inner, bc[static_cast<std::size_t>(i)][static_cast<std::size_t>(r)]);
    }
    NodeRef log_mean = graph.log(graph.scale(inner, 1.0 / k));
    overlap = (i == 0) ? log_mean : graph.add(overlap, log_mean);
  }
  refs.entropy_bound = graph.sub(mean_comp_entropy, graph.scale(overlap, 1.0 / k));
  return refs;
}

}  // namespace nodebnn
