#pragma once

#include <cstdint>

#include "nodebnn/dataset.hpp"

namespace nodebnn {

/// Procedural MNIST-style digits: 1x28x28 glyphs rendered from a 5x7 bitmap
/// font with random placement, scale and intensity, plus light pixel noise.
/// Deterministic under seed.
Dataset make_synthetic_digits(int count, std::uint64_t seed);

}  // namespace nodebnn
