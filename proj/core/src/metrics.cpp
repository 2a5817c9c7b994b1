#include "nodebnn/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "nodebnn/errors.hpp"

namespace nodebnn {

NllError nll_and_error(const Tensor& probabilities, const std::vector<int>& labels) {
  if (probabilities.rank() != 2) throw ShapeError("nll_and_error expects (N,C) probabilities");
  const int n = probabilities.extent(0);
  const int c = probabilities.extent(1);
  if (static_cast<std::size_t>(n) != labels.size()) {
    throw ShapeError("probabilities/labels count mismatch");
  }
  double nll = 0.0, comp = 0.0;
  int wrong = 0;
  for (int i = 0; i < n; ++i) {
    const double* row = probabilities.data() + static_cast<std::size_t>(i) * c;
    double row_sum = 0.0;
    int arg = 0;
    for (int j = 0; j < c; ++j) {
      if (row[j] < 0.0) throw DataError("negative probability in row " + std::to_string(i));
      row_sum += row[j];
      if (row[j] > row[arg]) arg = j;
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw DataError("probability row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= c) throw DataError("label out of range");
    if (arg != y) ++wrong;
    // Kahan summation keeps the reduction order-independent in practice.
    const double term = -std::log(std::max(row[y], 1e-300));
    const double t = nll + (term - comp);
    comp = (t - nll) - (term - comp);
    nll = t;
  }
  return {nll / n, static_cast<double>(wrong) / n};
}

double ece(const Tensor& probabilities, const std::vector<int>& labels, int bins) {
  if (bins < 1) throw ConfigError("ece needs at least one bin");
  if (probabilities.rank() != 2) throw ShapeError("ece expects (N,C) probabilities");
  const int n = probabilities.extent(0);
  const int c = probabilities.extent(1);
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("ece count mismatch");

  std::vector<int> count(static_cast<std::size_t>(bins), 0);
  std::vector<int> correct(static_cast<std::size_t>(bins), 0);
  std::vector<double> confidence(static_cast<std::size_t>(bins), 0.0);
  for (int i = 0; i < n; ++i) {
    const double* row = probabilities.data() + static_cast<std::size_t>(i) * c;
    int arg = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    const double conf = row[arg];
    int b = static_cast<int>(conf * bins);
    b = std::clamp(b, 0, bins - 1);  // confidence 1.0 lands in the last bin
    ++count[static_cast<std::size_t>(b)];
    confidence[static_cast<std::size_t>(b)] += conf;
    if (arg == labels[static_cast<std::size_t>(i)]) ++correct[static_cast<std::size_t>(b)];
  }
  double out = 0.0;
  for (int b = 0; b < bins; ++b) {
    const int nb = count[static_cast<std::size_t>(b)];
    if (nb == 0) continue;
    const double acc = static_cast<double>(correct[static_cast<std::size_t>(b)]) / nb;
    const double conf = confidence[static_cast<std::size_t>(b)] / nb;
    out += (static_cast<double>(nb) / n) * std::abs(acc - conf);
  }
  return out;
}

Tensor ensemble_predict(const std::vector<const BnnModel*>& models, const Tensor& x,
                        int samples_per_model, Rng& rng) {
  if (models.empty()) throw ConfigError("ensemble_predict needs at least one model");
  Tensor acc;
  for (std::size_t m = 0; m < models.size(); ++m) {
    Tensor p = predictive_mean(*models[m], x, samples_per_model, rng);
    if (m == 0) {
      acc = std::move(p);
    } else {
      if (!acc.same_shape(p)) throw ShapeError("ensemble members disagree on output shape");
      for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  for (std::int64_t i = 0; i < acc.size(); ++i) acc[i] *= inv;
  return acc;
}

}  // namespace nodebnn
