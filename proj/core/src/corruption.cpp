#include "nodebnn/corruption.hpp"

#include <algorithm>
#include <cmath>

#include "nodebnn/errors.hpp"
#include "nodebnn/rng.hpp"

namespace nodebnn {

namespace {

// Severity tables, index 0 = severity 1.
constexpr double kNoiseStd[5] = {0.04, 0.08, 0.12, 0.18, 0.26};
constexpr double kImpulseFraction[5] = {0.01, 0.03, 0.06, 0.10, 0.17};
constexpr double kBlurStd[5] = {0.5, 1.0, 1.5, 2.0, 2.5};
constexpr double kContrastScale[5] = {0.75, 0.6, 0.45, 0.3, 0.2};
constexpr double kBrightnessShift[5] = {0.05, 0.1, 0.15, 0.2, 0.3};

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Tensor blur(const Tensor& image, double sigma) {
  const int c = image.extent(0), h = image.extent(1), w = image.extent(2);
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    norm += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= norm;

  // Separable convolution with clamp-to-edge padding.
  Tensor tmp(image.shape()), out(image.shape());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = image.data() + static_cast<std::size_t>(ch) * h * w;
    double* mid = tmp.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] * src[y * w + xx];
        }
        mid[y * w + x] = acc;
      }
    }
    double* dst = out.data() + static_cast<std::size_t>(ch) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += kernel[static_cast<std::size_t>(i + radius)] * mid[yy * w + x];
        }
        dst[y * w + x] = clamp01(acc);
      }
    }
  }
  return out;
}

}  // namespace

CorruptionSpec::Kind corruption_kind_from_name(const std::string& name) {
  if (name == "gaussian-noise") return CorruptionSpec::Kind::GaussianNoise;
  if (name == "impulse-noise") return CorruptionSpec::Kind::ImpulseNoise;
  if (name == "gaussian-blur") return CorruptionSpec::Kind::GaussianBlur;
  if (name == "contrast") return CorruptionSpec::Kind::Contrast;
  if (name == "brightness") return CorruptionSpec::Kind::Brightness;
  throw ConfigError("unknown corruption kind: " + name);
}

const char* corruption_kind_name(CorruptionSpec::Kind kind) {
  switch (kind) {
    case CorruptionSpec::Kind::GaussianNoise: return "gaussian-noise";
    case CorruptionSpec::Kind::ImpulseNoise: return "impulse-noise";
    case CorruptionSpec::Kind::GaussianBlur: return "gaussian-blur";
    case CorruptionSpec::Kind::Contrast: return "contrast";
    case CorruptionSpec::Kind::Brightness: return "brightness";
  }
  return "?";
}

CorruptionSpec parse_corruption(const std::string& text, std::uint64_t seed) {
  const std::size_t colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("corruption must be kind:severity, got " + text);
  CorruptionSpec spec;
  spec.kind = corruption_kind_from_name(text.substr(0, colon));
  try {
    spec.severity = std::stoi(text.substr(colon + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad corruption severity in " + text);
  }
  if (spec.severity < 0 || spec.severity > 5) throw ConfigError("severity must lie in 0..5");
  spec.seed = seed;
  return spec;
}

Tensor apply_corruption(const Tensor& image, const CorruptionSpec& spec, int sample_index) {
  if (image.rank() != 3) throw ShapeError("apply_corruption expects one (C,H,W) image");
  if (spec.severity < 0 || spec.severity > 5) throw ConfigError("severity must lie in 0..5");
  if (spec.severity == 0) return image;
  const int level = spec.severity - 1;
  Rng rng(combine_seed(spec.seed, static_cast<std::uint64_t>(sample_index),
                       static_cast<std::uint64_t>(spec.kind), static_cast<std::uint64_t>(spec.severity)));

  switch (spec.kind) {
    case CorruptionSpec::Kind::GaussianNoise: {
      Tensor out(image.shape());
      const double std_dev = kNoiseStd[level];
      for (std::int64_t i = 0; i < image.size(); ++i) {
        out[i] = clamp01(image[i] + rng.normal(0.0, std_dev));
      }
      return out;
    }
    case CorruptionSpec::Kind::ImpulseNoise: {
      Tensor out = image;
      const double fraction = kImpulseFraction[level];
      for (std::int64_t i = 0; i < out.size(); ++i) {
        if (rng.uniform() < fraction) out[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
      }
      return out;
    }
    case CorruptionSpec::Kind::GaussianBlur:
      return blur(image, kBlurStd[level]);
    case CorruptionSpec::Kind::Contrast: {
      Tensor out(image.shape());
      double mean = 0.0;
      for (std::int64_t i = 0; i < image.size(); ++i) mean += image[i];
      mean /= static_cast<double>(image.size());
      const double scale = kContrastScale[level];
      for (std::int64_t i = 0; i < image.size(); ++i) {
        out[i] = clamp01(mean + scale * (image[i] - mean));
      }
      return out;
    }
    case CorruptionSpec::Kind::Brightness: {
      Tensor out(image.shape());
      const double shift = kBrightnessShift[level];
      for (std::int64_t i = 0; i < image.size(); ++i) out[i] = clamp01(image[i] + shift);
      return out;
    }
  }
  throw ConfigError("unknown corruption kind");
}

Dataset apply_corruption(const Dataset& data, const CorruptionSpec& spec) {
  Dataset out;
  out.classes = data.classes;
  out.labels = data.labels;
  out.images = Tensor(data.images.shape());
  const std::int64_t n = shape_size(data.image_shape());
  for (int i = 0; i < data.size(); ++i) {
    Tensor corrupted = apply_corruption(data.image(i), spec, i);
    std::copy(corrupted.data(), corrupted.data() + n,
              out.images.data() + static_cast<std::int64_t>(i) * n);
  }
  return out;
}

NoisySplit inject_label_noise(const Dataset& data, double fraction, int classes,
                              std::uint64_t seed) {
  if (fraction < 0.0 || fraction > 1.0) throw ConfigError("noise fraction must lie in [0,1]");
  if (fraction > 0.0 && classes < 2) throw ConfigError("label noise needs at least 2 classes");
  const int n = data.size();
  const int corrupt_count = static_cast<int>(std::floor(fraction * n));

  NoisySplit split;
  split.data = data;
  split.original_labels = data.labels;

  // Partial Fisher-Yates: the first corrupt_count entries are a uniform
  // sample without replacement.
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(combine_seed(seed, 0x1abe15ULL));
  for (int i = 0; i < corrupt_count; ++i) {
    const int j = i + static_cast<int>(rng.integer(static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  split.noisy_indices.assign(order.begin(), order.begin() + corrupt_count);
  std::sort(split.noisy_indices.begin(), split.noisy_indices.end());
  std::vector<char> noisy(static_cast<std::size_t>(n), 0);
  for (int idx : split.noisy_indices) noisy[static_cast<std::size_t>(idx)] = 1;
  for (int i = 0; i < n; ++i) {
    if (!noisy[static_cast<std::size_t>(i)]) split.clean_indices.push_back(i);
  }
  for (int idx : split.noisy_indices) {
    const int original = data.labels[static_cast<std::size_t>(idx)];
    // Uniform over the other classes-1 labels.
    int wrong = static_cast<int>(rng.integer(static_cast<std::uint64_t>(classes - 1)));
    if (wrong >= original) ++wrong;
    split.data.labels[static_cast<std::size_t>(idx)] = wrong;
  }
  return split;
}

}  // namespace nodebnn
