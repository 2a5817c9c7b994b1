#pragma once

#include <array>

#include "nodebnn/dataset.hpp"
#include "nodebnn/model.hpp"

namespace nodebnn {

struct ExtractionConfig {
  double lambda = 0.10;        // weight on ||g||^2; larger means milder corruptions
  int steps = 200;             // gradient descent steps on the input
  double step_size = 0.05;     // inputs live in [0,1]
  int samples_per_image = 8;   // corruptions generated per test image
  int predictive_samples = 30; // frozen draws behind the mean prediction
  double clamp_lo = 0.0;
  double clamp_hi = 1.0;
};

struct CorruptionArtifact {
  Tensor source;     // x
  Tensor corrupted;  // x_c
  Tensor corruption; // g = x_c - x, exactly
  double objective_initial = 0.0;
  double objective_final = 0.0;
  double g_norm = 0.0;
  LatentSample latent;
};

/// Finds the input corruption implied by one latent sample: descends
/// L(x_c) = 1/2 ||f_Z(x) - fhat(x_c)||^2 + lambda/2 ||x_c - x||^2   starting
/// from x_c = x, where fhat uses a frozen set of latent samples so the target
/// is stationary. The corrupted image is clamped to the valid range after
/// every step.
CorruptionArtifact extract_corruption(const BnnModel& model, const Tensor& x,
                                      const LatentSample& latent, const ExtractionConfig& cfg,
                                      Rng& rng);

struct CrossTestReport {
  std::vector<double> lambdas;
  // nll[generator][evaluator][lambda index]; 0 = model A, 1 = model B.
  std::array<std::array<std::vector<double>, 2>, 2> nll;
  std::array<double, 2> clean_nll = {0.0, 0.0};
  // Mean ||g||_2 of the corruptions each model generated, per lambda.
  std::array<std::vector<double>, 2> mean_g_norm;
  int images = 0;
  int samples_per_image = 0;
};

/// Generates corruptions with each model on the subset, then scores both
/// models' predictive NLL on every corrupted set, with clean references.
CrossTestReport self_and_cross_test(const BnnModel& model_a, const BnnModel& model_b,
                                    const Dataset& subset, const std::vector<double>& lambdas,
                                    const ExtractionConfig& cfg, std::uint64_t seed);

}  // namespace nodebnn
