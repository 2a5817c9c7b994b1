#pragma once

#include "nodebnn/network.hpp"
#include "nodebnn/posterior.hpp"

namespace nodebnn {

/// A trained node-based BNN: point-estimated weights plus the latent
/// multiplier posterior.
struct BnnModel {
  Network network;
  LatentLayout layout;
  MoGPosterior posterior;
  LatentPrior prior;
};

/// Plain forward pass, Eqs f^0 = x, h = W f + b, f = act(h).
/// Accepts a single input (input_shape) or a batch (N, input_shape...).
Tensor forward_deterministic(const Network& net, const Tensor& x);

/// Node-stochastic pass: incoming multipliers scale the layer input,
/// outgoing multipliers scale the biased pre-activation.
Tensor forward_stochastic(const Network& net, const LatentLayout& layout, const Tensor& x,
                          const LatentSample& sample);

/// Average of softmax(stochastic logits) over `samples` posterior draws.
/// Rows sum to one. The paper's default sample count is 30.
Tensor predictive_mean(const BnnModel& model, const Tensor& x, int samples, Rng& rng);
inline Tensor predictive_mean(const BnnModel& model, const Tensor& x, Rng& rng) {
  return predictive_mean(model, x, 30, rng);
}

/// Output of layer `ell` (0 returns x, layer_count returns the final output).
/// Stochastic when a latent sample is supplied.
Tensor layer_output(const Network& net, const Tensor& x, int ell,
                    const LatentLayout* layout = nullptr, const LatentSample* sample = nullptr);

/// Draws per-draw samples from the posterior and evaluates the stochastic
/// logits for each; shared graph, one evaluation per draw.
std::vector<Tensor> stochastic_logit_draws(const BnnModel& model, const Tensor& x, int samples,
                                           Rng& rng);

}  // namespace nodebnn
