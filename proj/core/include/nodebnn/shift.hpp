#pragma once

#include "nodebnn/corruption.hpp"
#include "nodebnn/network.hpp"

namespace nodebnn {

/// g^l = f^l(x_c) - f^l(x), the exact layer-l activation shift between the
/// deterministic passes of the corrupted and clean input.
Tensor exact_shift(const Network& net, const Tensor& x, const Tensor& x_corrupted, int ell);

/// First-order propagation of an input shift through the network: linear
/// layers map the shift exactly, elementwise activations contribute their
/// diagonal Jacobian at the clean pre-activations. Returns g^1 .. g^L.
std::vector<Tensor> taylor_shift(const Network& net, const Tensor& x, const Tensor& g0);

/// (1/N) sum_n ||g^L(x_n)||^2 under the given corruption.
double mean_square_shift(const Network& net, const Dataset& data, const CorruptionSpec& corruption);

struct ShiftReport {
  std::vector<double> exact_norm;   // per layer, averaged over samples
  std::vector<double> taylor_norm;  // per layer
  std::vector<double> rel_error;    // per layer, ||taylor - exact|| / ||exact||
  double mss = 0.0;
};

ShiftReport shift_report(const Network& net, const Dataset& data, const CorruptionSpec& corruption,
                         int max_samples);

}  // namespace nodebnn
