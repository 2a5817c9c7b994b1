#include "nodebnn/extraction.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "nodebnn/errors.hpp"
#include "nodebnn/metrics.hpp"
#include "nodebnn/parallel.hpp"

namespace nodebnn {

namespace {

Tensor softmax_rows(const Tensor& logits) {
  Tensor out(logits.shape());
  const int b = logits.extent(0), c = logits.extent(1);
  for (int r = 0; r < b; ++r) {
    const double* row = logits.data() + static_cast<std::size_t>(r) * c;
    double* orow = out.data() + static_cast<std::size_t>(r) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    for (int j = 0; j < c; ++j) orow[j] /= z;
  }
  return out;
}

double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return std::sqrt(acc);
}

}  // namespace

CorruptionArtifact extract_corruption(const BnnModel& model, const Tensor& x,
                                      const LatentSample& latent, const ExtractionConfig& cfg,
                                      Rng& rng) {
  if (cfg.lambda < 0.0) throw ConfigError("lambda must be non-negative");
  if (cfg.steps < 1) throw ConfigError("extraction needs at least one step");
  const NetworkSpec& spec = model.network.spec;
  Shape batched = spec.input_shape;
  batched.insert(batched.begin(), 1);
  const Tensor xb = x.shape() == spec.input_shape ? Tensor(batched, x.storage()) : x;
  if (xb.shape() != batched) throw ShapeError("extract_corruption expects a single image");

  // Stationary descent target: f_Z(x) for the given sample.
  Tensor target = softmax_rows(forward_stochastic(model.network, model.layout, xb, latent));

  // fhat uses one frozen set of latent samples for the whole descent.
  std::vector<LatentSample> frozen;
  frozen.reserve(static_cast<std::size_t>(cfg.predictive_samples));
  for (int s = 0; s < cfg.predictive_samples; ++s) frozen.push_back(sample_latents(model.posterior, rng));

  Graph g;
  ParamRefs params = declare_params(g, spec, false);
  NodeRef xc = g.input("xc", batched, true);
  std::vector<LatentNodeRefs> latents;
  for (const LatentSample& s : frozen) {
    latents.push_back(split_latent_nodes(g, model.layout, g.constant(s.values)));
  }
  std::vector<ForwardRefs> fwd = build_forward_draws(g, spec, params.weights, params.biases, xc, latents);
  NodeRef prob_acc = g.softmax(fwd[0].logits);
  for (std::size_t s = 1; s < fwd.size(); ++s) prob_acc = g.add(prob_acc, g.softmax(fwd[s].logits));
  NodeRef fhat = g.scale(prob_acc, 1.0 / static_cast<double>(cfg.predictive_samples));
  NodeRef fit_term = g.scale(g.sum(g.square(g.sub(g.constant(target), fhat))), 0.5);
  NodeRef reg_term = g.scale(g.sum(g.square(g.sub(xc, g.constant(xb)))), cfg.lambda / 2.0);
  NodeRef objective = g.add(fit_term, reg_term);

  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, model.network);

  Tensor current = xb;
  Tensor best = xb;
  double best_objective = 0.0, initial_objective = 0.0;
  for (int step = 0; step <= cfg.steps; ++step) {
    bindings["xc"] = current;
    g.evaluate(bindings);
    const double value = g.value(objective).item();
    if (!std::isfinite(value)) throw NumericError("extraction objective diverged; reduce step size");
    if (step == 0) {
      initial_objective = value;
      best_objective = value;
    } else if (value < best_objective) {
      best_objective = value;
      best = current;
    }
    if (step == cfg.steps) break;
    g.backward(objective);
    const Tensor& grad = g.gradient(xc);
    for (std::int64_t i = 0; i < current.size(); ++i) {
      current[i] = std::clamp(current[i] - cfg.step_size * grad[i], cfg.clamp_lo, cfg.clamp_hi);
    }
  }

  CorruptionArtifact artifact;
  artifact.source = Tensor(spec.input_shape, xb.storage());
  artifact.corrupted = Tensor(spec.input_shape, best.storage());
  artifact.corruption = Tensor(spec.input_shape);
  for (std::int64_t i = 0; i < artifact.corruption.size(); ++i) {
    artifact.corruption[i] = artifact.corrupted[i] - artifact.source[i];
  }
  artifact.objective_initial = initial_objective;
  artifact.objective_final = best_objective;
  artifact.g_norm = l2_norm(artifact.corruption);
  artifact.latent = latent;
  return artifact;
}

CrossTestReport self_and_cross_test(const BnnModel& model_a, const BnnModel& model_b,
                                    const Dataset& subset, const std::vector<double>& lambdas,
                                    const ExtractionConfig& cfg, std::uint64_t seed) {
  if (model_a.network.spec.input_shape != model_b.network.spec.input_shape ||
      model_a.network.spec.classes != model_b.network.spec.classes) {
    throw ShapeError("cross test requires models with matching input/output shapes");
  }
  const int n = subset.size();
  const int spi = cfg.samples_per_image;
  const std::array<const BnnModel*, 2> models = {&model_a, &model_b};

  CrossTestReport report;
  report.lambdas = lambdas;
  report.images = n;
  report.samples_per_image = spi;

  Rng clean_rng(combine_seed(seed, 0xc1ea4ULL));
  for (int e = 0; e < 2; ++e) {
    Tensor probs = predictive_mean(*models[static_cast<std::size_t>(e)], subset.images,
                                   cfg.predictive_samples, clean_rng);
    report.clean_nll[static_cast<std::size_t>(e)] = nll_and_error(probs, subset.labels).nll;
  }

  for (int gen = 0; gen < 2; ++gen) {
    const BnnModel& generator = *models[static_cast<std::size_t>(gen)];
    for (std::size_t li = 0; li < lambdas.size(); ++li) {
      ExtractionConfig local = cfg;
      local.lambda = lambdas[li];

      // One corrupted copy per (image, draw); latent draws are keyed by
      // (seed, generator, image, draw) so the lambda sweep is paired.
      Shape corr_shape = subset.images.shape();
      corr_shape[0] = n * spi;
      Dataset corrupted;
      corrupted.classes = subset.classes;
      corrupted.images = Tensor(corr_shape);
      corrupted.labels.resize(static_cast<std::size_t>(n) * spi);
      std::vector<double> norms(static_cast<std::size_t>(n) * spi, 0.0);
      const std::int64_t stride = shape_size(subset.image_shape());

      parallel_for(n * spi, default_workers(), [&](int task) {
        const int img = task / spi;
        const int draw = task % spi;
        Rng z_rng(combine_seed(seed, 0x5a17ULL, static_cast<std::uint64_t>(gen),
                               static_cast<std::uint64_t>(img), static_cast<std::uint64_t>(draw)));
        LatentSample z = sample_latents(generator.posterior, z_rng);
        Rng frozen_rng(combine_seed(seed, 0xf40eULL, static_cast<std::uint64_t>(gen),
                                    static_cast<std::uint64_t>(img), static_cast<std::uint64_t>(draw)));
        CorruptionArtifact artifact =
            extract_corruption(generator, subset.image(img), z, local, frozen_rng);
        std::copy(artifact.corrupted.data(), artifact.corrupted.data() + stride,
                  corrupted.images.data() + static_cast<std::int64_t>(task) * stride);
        corrupted.labels[static_cast<std::size_t>(task)] =
            subset.labels[static_cast<std::size_t>(img)];
        norms[static_cast<std::size_t>(task)] = artifact.g_norm;
      });

      double mean_norm = 0.0;
      for (double v : norms) mean_norm += v;
      report.mean_g_norm[static_cast<std::size_t>(gen)].push_back(mean_norm /
                                                                  static_cast<double>(norms.size()));

      for (int e = 0; e < 2; ++e) {
        Rng eval_rng(combine_seed(seed, 0xea1ULL + static_cast<std::uint64_t>(e),
                                  static_cast<std::uint64_t>(gen), static_cast<std::uint64_t>(li)));
        Tensor probs = predictive_mean(*models[static_cast<std::size_t>(e)], corrupted.images,
                                       cfg.predictive_samples, eval_rng);
        report.nll[static_cast<std::size_t>(gen)][static_cast<std::size_t>(e)].push_back(
            nll_and_error(probs, corrupted.labels).nll);
      }
    }
  }
  return report;
}

}  // namespace nodebnn
