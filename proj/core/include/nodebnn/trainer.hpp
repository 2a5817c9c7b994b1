#pragma once

#include <functional>

#include "nodebnn/dataset.hpp"
#include "nodebnn/objective.hpp"

namespace nodebnn {

struct TrainConfig {
  int epochs = 40;
  double anneal_fraction = 2.0 / 3.0;  // beta ramps to 1 over this share of epochs
  double lr_theta = 0.1;               // lambda_1, linearly decayed
  double lr_phi = 0.1;                 // lambda_2, constant
  double momentum = 0.9;               // theta updates only
  double lr_decay_start = 0.5;         // fractions of total epochs
  double lr_decay_end = 0.9;
  double lr_final_scale = 0.01;
  int val_samples = 30;
  std::uint64_t seed = 1;
};

struct TrainHistory {
  std::vector<double> expected_log_lik;  // per-epoch mean over steps
  std::vector<double> cross_entropy;
  std::vector<double> entropy_bound;
  std::vector<double> objective;
  std::vector<double> val_nll;    // empty without a validation set
  std::vector<double> val_error;
  std::vector<double> entropy_snapshots;  // epochs+1 entries, [0] at init
};

double beta_at_epoch(int epoch, const TrainConfig& cfg);
double theta_lr_at_epoch(int epoch, const TrainConfig& cfg);

using EpochCallback =
    std::function<void(int epoch, const BnnModel& model, const TrainHistory& history)>;

/// SGD ascent on the gamma-ELBO: theta uses lr_theta with momentum and linear
/// decay, (mu, rho) use constant lr_phi. Deterministic under cfg.seed.
/// Throws NumericError naming the epoch if the objective diverges.
TrainHistory fit(BnnModel& model, const Dataset& train, const Dataset* val, const TrainConfig& cfg,
                 const GammaElboConfig& objective, const EpochCallback& on_epoch = nullptr);

}  // namespace nodebnn
