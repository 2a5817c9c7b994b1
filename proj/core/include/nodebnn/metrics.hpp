#pragma once

#include <vector>

#include "nodebnn/model.hpp"
#include "nodebnn/tensor.hpp"

namespace nodebnn {

struct NllError {
  double nll = 0.0;    // nats per sample
  double error = 0.0;  // top-1 error fraction
};

/// Rows of `probabilities` (N, C) must sum to one within 1e-6. Argmax ties
/// break toward the lowest class index. NLL uses compensated summation.
NllError nll_and_error(const Tensor& probabilities, const std::vector<int>& labels);

/// Expected calibration error over `bins` equal-width confidence bins;
/// empty bins contribute nothing.
double ece(const Tensor& probabilities, const std::vector<int>& labels, int bins = 15);

/// Uniform average of each model's predictive mean. The paper combines
/// 5 models from different runs.
Tensor ensemble_predict(const std::vector<const BnnModel*>& models, const Tensor& x,
                        int samples_per_model, Rng& rng);

}  // namespace nodebnn
