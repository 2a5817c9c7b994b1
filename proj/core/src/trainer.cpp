#include "nodebnn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>

#include "nodebnn/errors.hpp"
#include "nodebnn/metrics.hpp"

namespace nodebnn {

double beta_at_epoch(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) throw ConfigError("epoch out of range");
  if (cfg.anneal_fraction <= 0.0 || cfg.anneal_fraction > 1.0) {
    throw ConfigError("anneal_fraction must lie in (0,1]");
  }
  const int ramp = static_cast<int>(std::floor(cfg.anneal_fraction * cfg.epochs));
  if (ramp <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(epoch) / ramp);
}

double theta_lr_at_epoch(int epoch, const TrainConfig& cfg) {
  const double start = cfg.lr_decay_start * cfg.epochs;
  const double end = cfg.lr_decay_end * cfg.epochs;
  double factor = 1.0;
  if (epoch >= end) {
    factor = cfg.lr_final_scale;
  } else if (epoch > start && end > start) {
    const double t = (epoch - start) / (end - start);
    factor = 1.0 + t * (cfg.lr_final_scale - 1.0);
  }
  return cfg.lr_theta * factor;
}

TrainHistory fit(BnnModel& model, const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                 const GammaElboConfig& objective, const EpochCallback& on_epoch) {
  if (train.size() == 0) throw DataError("training set is empty");
  if (cfg.lr_theta <= 0.0 || cfg.lr_phi <= 0.0) throw ConfigError("learning rates must be positive");

  GammaElboConfig obj = objective;
  if (obj.dataset_size == 0) obj.dataset_size = train.size();
  const int n = train.size();
  const int batch_size = std::min(obj.batch_size, n);

  Network& net = model.network;
  MoGPosterior& posterior = model.posterior;

  // One graph per distinct batch size (full batches plus a possible remainder).
  std::map<int, std::unique_ptr<ElboGraph>> graphs;
  auto graph_for = [&](int b) -> ElboGraph& {
    auto it = graphs.find(b);
    if (it == graphs.end()) {
      it = graphs
               .emplace(b, std::make_unique<ElboGraph>(net.spec, model.layout, posterior.components,
                                                       obj, b, model.prior.std_dev))
               .first;
    }
    return *it->second;
  };

  std::vector<Tensor> weight_momentum, bias_momentum;
  for (const Tensor& w : net.weights) weight_momentum.push_back(w.empty() ? Tensor() : Tensor(w.shape()));
  for (const Tensor& b : net.biases) bias_momentum.push_back(b.empty() ? Tensor() : Tensor(b.shape()));

  Rng shuffle_rng(combine_seed(cfg.seed, 0x5u));
  Rng noise_rng(combine_seed(cfg.seed, 0x11u));
  Rng val_rng(combine_seed(cfg.seed, 0x17u));

  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  TrainHistory history;
  history.entropy_snapshots.push_back(mixture_entropy_lower_bound(posterior));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double beta = beta_at_epoch(epoch, cfg);
    const double lr1 = theta_lr_at_epoch(epoch, cfg);
    const double lr2 = cfg.lr_phi;
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double ll_sum = 0.0, ce_sum = 0.0, hb_sum = 0.0, obj_sum = 0.0;
    int steps = 0;
    for (int begin = 0; begin < n; begin += batch_size) {
      const int end = std::min(begin + batch_size, n);
      ElboGraph& graph = graph_for(end - begin);
      auto [xb, yb] = train.batch(order, begin, end);
      std::vector<LatentDraw> draws = draw_latent_noise(posterior, obj.train_samples, noise_rng);

      ElboTerms terms;
      try {
        terms = graph.evaluate(net, posterior, xb, yb, beta, draws);
      } catch (const NumericError& e) {
        throw NumericError("objective diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      graph.backward();

      // Ascent. Momentum on theta, plain SGD on phi.
      for (int layer = 0; layer < net.spec.layer_count(); ++layer) {
        if (!net.spec.layers[static_cast<std::size_t>(layer)].has_params()) continue;
        Tensor& w = net.weights[static_cast<std::size_t>(layer)];
        Tensor& wm = weight_momentum[static_cast<std::size_t>(layer)];
        const Tensor& gw = graph.weight_gradient(layer);
        for (std::int64_t i = 0; i < w.size(); ++i) {
          wm[i] = cfg.momentum * wm[i] + gw[i];
          w[i] += lr1 * wm[i];
        }
        Tensor& b = net.biases[static_cast<std::size_t>(layer)];
        Tensor& bm = bias_momentum[static_cast<std::size_t>(layer)];
        const Tensor& gb = graph.bias_gradient(layer);
        for (std::int64_t i = 0; i < b.size(); ++i) {
          bm[i] = cfg.momentum * bm[i] + gb[i];
          b[i] += lr1 * bm[i];
        }
      }
      const Tensor& gmu = graph.mu_gradient();
      const Tensor& grho = graph.rho_gradient();
      for (std::int64_t i = 0; i < posterior.mu.size(); ++i) {
        posterior.mu[i] += lr2 * gmu[i];
        posterior.rho[i] += lr2 * grho[i];
      }

      ll_sum += terms.expected_log_lik;
      ce_sum += terms.cross_entropy;
      hb_sum += terms.entropy_bound;
      obj_sum += terms.objective;
      ++steps;
    }

    history.expected_log_lik.push_back(ll_sum / steps);
    history.cross_entropy.push_back(ce_sum / steps);
    history.entropy_bound.push_back(hb_sum / steps);
    history.objective.push_back(obj_sum / steps);
    history.entropy_snapshots.push_back(mixture_entropy_lower_bound(posterior));

    if (val && val->size() > 0) {
      Tensor probs = predictive_mean(model, val->images, cfg.val_samples, val_rng);
      NllError m = nll_and_error(probs, val->labels);
      history.val_nll.push_back(m.nll);
      history.val_error.push_back(m.error);
    }
    if (on_epoch) on_epoch(epoch, model, history);
  }
  return history;
}

}  // namespace nodebnn
