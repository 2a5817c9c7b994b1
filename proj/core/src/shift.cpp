#include "nodebnn/shift.hpp"

#include <algorithm>
#include <cmath>

#include "nodebnn/errors.hpp"
#include "nodebnn/model.hpp"

namespace nodebnn {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Diagonal Jacobian of the activation at pre-activation h.
Tensor activation_jacobian(const Tensor& h, Activation act) {
  Tensor j(h.shape());
  switch (act) {
    case Activation::Identity:
      j.fill(1.0);
      break;
    case Activation::Relu:
      for (std::int64_t i = 0; i < h.size(); ++i) j[i] = h[i] > 0.0 ? 1.0 : 0.0;
      break;
    case Activation::Tanh:
      for (std::int64_t i = 0; i < h.size(); ++i) {
        const double t = std::tanh(h[i]);
        j[i] = 1.0 - t * t;
      }
      break;
    case Activation::Softplus:
      for (std::int64_t i = 0; i < h.size(); ++i) j[i] = sigmoid(h[i]);
      break;
  }
  return j;
}

// Clean pre-activations h^1..h^L at x (batched).
std::vector<Tensor> clean_pre_activations(const Network& net, const Tensor& xb) {
  Graph g;
  ParamRefs params = declare_params(g, net.spec, false);
  NodeRef input = g.input("x", xb.shape());
  ForwardRefs fwd = build_forward(g, net.spec, params.weights, params.biases, input, nullptr);
  std::unordered_map<std::string, Tensor> bindings;
  bind_params(bindings, net);
  bindings["x"] = xb;
  g.evaluate(bindings);
  std::vector<Tensor> out;
  for (int i = 0; i < net.spec.layer_count(); ++i) {
    NodeRef h = fwd.pre_activations[static_cast<std::size_t>(i)];
    out.push_back(h.valid() ? g.value(h) : Tensor());
  }
  return out;
}

double l2_norm(const Tensor& t) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < t.size(); ++i) acc += t[i] * t[i];
  return std::sqrt(acc);
}

}  // namespace

Tensor exact_shift(const Network& net, const Tensor& x, const Tensor& x_corrupted, int ell) {
  if (!x.same_shape(x_corrupted)) throw ShapeError("exact_shift inputs must share a shape");
  if (ell == 0) {
    Tensor g0(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) g0[i] = x_corrupted[i] - x[i];
    return g0;
  }
  Tensor clean = layer_output(net, x, ell);
  Tensor corrupted = layer_output(net, x_corrupted, ell);
  for (std::int64_t i = 0; i < clean.size(); ++i) corrupted[i] -= clean[i];
  return corrupted;
}

std::vector<Tensor> taylor_shift(const Network& net, const Tensor& x, const Tensor& g0) {
  if (!x.same_shape(g0)) throw ShapeError("taylor_shift: g0 must match the input shape");
  const bool single = x.shape() == net.spec.input_shape;
  Shape batched = net.spec.input_shape;
  batched.insert(batched.begin(), 1);
  const Tensor xb = single ? Tensor(batched, x.storage()) : x;
  const Tensor gb = single ? Tensor(batched, g0.storage()) : g0;
  const int batch = xb.extent(0);

  std::vector<Tensor> pre = clean_pre_activations(net, xb);

  // Propagate the shift through each layer's exact linear map, then apply the
  // diagonal activation Jacobian at the clean pre-activations.
  Graph g;
  NodeRef shift = g.input("g0", gb.shape());
  std::vector<NodeRef> per_layer;
  for (int i = 0; i < net.spec.layer_count(); ++i) {
    const LayerSpec& l = net.spec.layers[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        if (g.shape_of(shift).size() != 2) {
          shift = g.reshape(shift,
                            Shape{batch, static_cast<int>(shape_size(g.shape_of(shift)) / batch)});
        }
        shift = g.matmul(shift, g.constant(net.weights[static_cast<std::size_t>(i)]));
        break;
      }
      case LayerSpec::Kind::Conv2d: {
        shift = g.conv2d(shift, g.constant(net.weights[static_cast<std::size_t>(i)]), l.stride,
                         l.padding);
        break;
      }
      case LayerSpec::Kind::GlobalAvgPool: {
        shift = g.global_avg_pool(shift);
        break;
      }
    }
    if (l.has_params() && l.activation != Activation::Identity) {
      Tensor jac = activation_jacobian(pre[static_cast<std::size_t>(i)], l.activation);
      shift = g.mul(shift, g.constant(std::move(jac)));
    }
    per_layer.push_back(shift);
  }
  g.evaluate({{"g0", gb}});

  std::vector<Tensor> out;
  for (NodeRef r : per_layer) {
    Tensor t = g.value(r);
    if (single) {
      Shape s(t.shape().begin() + 1, t.shape().end());
      t = Tensor(s, t.storage());
    }
    out.push_back(std::move(t));
  }
  return out;
}

double mean_square_shift(const Network& net, const Dataset& data, const CorruptionSpec& corruption) {
  if (data.size() == 0) throw DataError("mean_square_shift on empty dataset");
  Dataset corrupted = apply_corruption(data, corruption);
  const int n = data.size();
  const int chunk = 256;
  double acc = 0.0;
  for (int begin = 0; begin < n; begin += chunk) {
    std::vector<int> idx;
    for (int i = begin; i < std::min(begin + chunk, n); ++i) idx.push_back(i);
    Tensor clean_logits = forward_deterministic(net, data.subset(idx).images);
    Tensor corr_logits = forward_deterministic(net, corrupted.subset(idx).images);
    for (std::int64_t i = 0; i < clean_logits.size(); ++i) {
      const double d = corr_logits[i] - clean_logits[i];
      acc += d * d;
    }
  }
  return acc / n;
}

ShiftReport shift_report(const Network& net, const Dataset& data, const CorruptionSpec& corruption,
                         int max_samples) {
  const int n = std::min(max_samples, data.size());
  if (n == 0) throw DataError("shift_report on empty dataset");
  const int layers = net.spec.layer_count();
  ShiftReport report;
  report.exact_norm.assign(static_cast<std::size_t>(layers), 0.0);
  report.taylor_norm.assign(static_cast<std::size_t>(layers), 0.0);
  report.rel_error.assign(static_cast<std::size_t>(layers), 0.0);

  double mss = 0.0;
  for (int i = 0; i < n; ++i) {
    const Tensor x = data.image(i);
    const Tensor xc = apply_corruption(x, corruption, i);
    const Tensor g0 = exact_shift(net, x, xc, 0);
    const std::vector<Tensor> taylor = taylor_shift(net, x, g0);
    for (int l = 0; l < layers; ++l) {
      const Tensor exact = exact_shift(net, x, xc, l + 1);
      const Tensor& approx = taylor[static_cast<std::size_t>(l)];
      const double en = l2_norm(exact);
      report.exact_norm[static_cast<std::size_t>(l)] += en;
      report.taylor_norm[static_cast<std::size_t>(l)] += l2_norm(approx);
      if (en > 0.0) {
        Tensor diff = approx;
        for (std::int64_t j = 0; j < diff.size(); ++j) diff[j] -= exact[j];
        report.rel_error[static_cast<std::size_t>(l)] += l2_norm(diff) / en;
      }
      if (l == layers - 1) mss += en * en;
    }
  }
  for (int l = 0; l < layers; ++l) {
    report.exact_norm[static_cast<std::size_t>(l)] /= n;
    report.taylor_norm[static_cast<std::size_t>(l)] /= n;
    report.rel_error[static_cast<std::size_t>(l)] /= n;
  }
  report.mss = mss / n;
  return report;
}

}  // namespace nodebnn
