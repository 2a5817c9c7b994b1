#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "nodebnn/dataset.hpp"

namespace nodebnn {

/// Desk-scale corruption suite: 5 kinds with 5 severity levels each.
/// Severity 0 is the identity for every kind.
struct CorruptionSpec {
  enum class Kind { GaussianNoise, ImpulseNoise, GaussianBlur, Contrast, Brightness };
  Kind kind = Kind::GaussianNoise;
  int severity = 0;  // 0..5
  std::uint64_t seed = 0;
};

constexpr std::array<CorruptionSpec::Kind, 5> kCorruptionKinds = {
    CorruptionSpec::Kind::GaussianNoise, CorruptionSpec::Kind::ImpulseNoise,
    CorruptionSpec::Kind::GaussianBlur, CorruptionSpec::Kind::Contrast,
    CorruptionSpec::Kind::Brightness};

CorruptionSpec::Kind corruption_kind_from_name(const std::string& name);
const char* corruption_kind_name(CorruptionSpec::Kind kind);
/// "kind:severity", e.g. "gaussian-noise:3".
CorruptionSpec parse_corruption(const std::string& text, std::uint64_t seed);

/// Applies the corruption to one (C,H,W) image in [0,1]; output is clamped
/// back to [0,1]. Randomness is keyed by (seed, sample_index, kind, severity)
/// so frozen evaluation sets are reproducible sample by sample.
Tensor apply_corruption(const Tensor& image, const CorruptionSpec& spec, int sample_index = 0);

/// Whole-dataset version; sample i uses sample_index = i.
Dataset apply_corruption(const Dataset& data, const CorruptionSpec& spec);

struct NoisySplit {
  Dataset data;                    // labels mutated on the noisy subset
  std::vector<int> clean_indices;  // D1
  std::vector<int> noisy_indices;  // D2
  std::vector<int> original_labels;
};

/// Corrupts the labels of floor(fraction*N) samples chosen uniformly without
/// replacement; every new label differs from the original.
NoisySplit inject_label_noise(const Dataset& data, double fraction, int classes,
                              std::uint64_t seed);

}  // namespace nodebnn
