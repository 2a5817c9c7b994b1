#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "nodebnn/errors.hpp"
#include "nodebnn/graph.hpp"

extern "C" void openblas_set_num_threads(int);

namespace nodebnn {
namespace {

// Task-level code owns the cores; BLAS stays single-threaded so concurrent
// graphs do not fight over the pool and runs stay reproducible.
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
           const double* b, int ldb, double beta, double* c, int ldc) {
  static const int blas_init = [] {
    openblas_set_num_threads(1);
    return 0;
  }();
  (void)blas_init;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

int checked_index(double v, int limit, const char* what) {
  const int idx = static_cast<int>(v);
  if (static_cast<double>(idx) != v || idx < 0 || idx >= limit) {
    throw ShapeError(std::string(what) + " index " + std::to_string(v) + " out of range [0," +
                     std::to_string(limit) + ")");
  }
  return idx;
}

struct ConvDims {
  int batch, cin, h, w, cout, k, stride, ho, wo, pad_top, pad_left;
};

ConvDims conv_dims(const Shape& sx, const Shape& sw, int stride, Pad pad, const Shape& sout) {
  ConvDims d;
  d.batch = sx[0];
  d.cin = sx[1];
  d.h = sx[2];
  d.w = sx[3];
  d.cout = sw[0];
  d.k = sw[2];
  d.stride = stride;
  d.ho = sout[2];
  d.wo = sout[3];
  if (pad == Pad::Same) {
    const int pad_h = std::max(0, (d.ho - 1) * stride + d.k - d.h);
    const int pad_w = std::max(0, (d.wo - 1) * stride + d.k - d.w);
    d.pad_top = pad_h / 2;
    d.pad_left = pad_w / 2;
  } else {
    d.pad_top = 0;
    d.pad_left = 0;
  }
  return d;
}

// col (Cin*k*k, Ho*Wo) from one image (Cin, H, W).
void im2col(const double* x, const ConvDims& d, double* col) {
  const int patch = d.k * d.k;
  for (int c = 0; c < d.cin; ++c) {
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        double* row = col + (static_cast<std::size_t>(c) * patch + ki * d.k + kj) *
                                (static_cast<std::size_t>(d.ho) * d.wo);
        for (int ho = 0; ho < d.ho; ++ho) {
          const int hi = ho * d.stride - d.pad_top + ki;
          for (int wo = 0; wo < d.wo; ++wo) {
            const int wi = wo * d.stride - d.pad_left + kj;
            const bool inside = hi >= 0 && hi < d.h && wi >= 0 && wi < d.w;
            row[static_cast<std::size_t>(ho) * d.wo + wo] =
                inside ? x[(static_cast<std::size_t>(c) * d.h + hi) * d.w + wi] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of col-layout gradients back into one image gradient.
void col2im_add(const double* col, const ConvDims& d, double* dx) {
  const int patch = d.k * d.k;
  for (int c = 0; c < d.cin; ++c) {
    for (int ki = 0; ki < d.k; ++ki) {
      for (int kj = 0; kj < d.k; ++kj) {
        const double* row = col + (static_cast<std::size_t>(c) * patch + ki * d.k + kj) *
                                      (static_cast<std::size_t>(d.ho) * d.wo);
        for (int ho = 0; ho < d.ho; ++ho) {
          const int hi = ho * d.stride - d.pad_top + ki;
          if (hi < 0 || hi >= d.h) continue;
          for (int wo = 0; wo < d.wo; ++wo) {
            const int wi = wo * d.stride - d.pad_left + kj;
            if (wi < 0 || wi >= d.w) continue;
            dx[(static_cast<std::size_t>(c) * d.h + hi) * d.w + wi] +=
                row[static_cast<std::size_t>(ho) * d.wo + wo];
          }
        }
      }
    }
  }
}

}  // namespace

void Graph::forward_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto parent = [&](int i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])].value;
  };
  double* out = n.value.data();
  const std::int64_t size = n.value.size();

  switch (n.op) {
    case Op::Input:
    case Op::Const:
      break;
    case Op::Add: {
      const double* a = parent(0).data();
      const double* b = parent(1).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = a[i] + b[i];
      break;
    }
    case Op::Sub: {
      const double* a = parent(0).data();
      const double* b = parent(1).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = a[i] - b[i];
      break;
    }
    case Op::Mul: {
      const double* a = parent(0).data();
      const double* b = parent(1).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = a[i] * b[i];
      break;
    }
    case Op::Scale: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = n.scale * a[i];
      break;
    }
    case Op::MatMul: {
      const Tensor& a = parent(0);
      const Tensor& b = parent(1);
      const int m = a.extent(0), k = a.extent(1), nn = b.extent(1);
      dgemm(false, false, m, nn, k, 1.0, a.data(), k, b.data(), nn, 0.0, out, nn);
      break;
    }
    case Op::Conv2d: {
      const Tensor& x = parent(0);
      const Tensor& w = parent(1);
      const ConvDims d = conv_dims(x.shape(), w.shape(), n.stride, n.pad, n.shape);
      const int cols = d.ho * d.wo;
      const int rows = d.cin * d.k * d.k;
      double* col = n.scratch.data();
      for (int b = 0; b < d.batch; ++b) {
        im2col(x.data() + static_cast<std::size_t>(b) * d.cin * d.h * d.w, d, col);
        dgemm(false, false, d.cout, cols, rows, 1.0, w.data(), rows, col, cols, 0.0,
              out + static_cast<std::size_t>(b) * d.cout * cols, cols);
      }
      break;
    }
    case Op::GlobalAvgPool: {
      const Tensor& x = parent(0);
      const int bc = x.extent(0) * x.extent(1);
      const std::int64_t hw = static_cast<std::int64_t>(x.extent(2)) * x.extent(3);
      const double inv = 1.0 / static_cast<double>(hw);
      for (int i = 0; i < bc; ++i) {
        const double* p = x.data() + static_cast<std::size_t>(i) * hw;
        double acc = 0.0;
        for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
        out[i] = acc * inv;
      }
      break;
    }
    case Op::Relu: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
      break;
    }
    case Op::Tanh: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = std::tanh(a[i]);
      break;
    }
    case Op::Softplus: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = stable_softplus(a[i]);
      break;
    }
    case Op::Exp: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = std::exp(a[i]);
      break;
    }
    case Op::Log: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = std::log(a[i]);
      break;
    }
    case Op::Sqrt: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = std::sqrt(a[i]);
      break;
    }
    case Op::Square: {
      const double* a = parent(0).data();
      for (std::int64_t i = 0; i < size; ++i) out[i] = a[i] * a[i];
      break;
    }
    case Op::Sum: {
      const Tensor& a = parent(0);
      double acc = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i];
      out[0] = acc;
      break;
    }
    case Op::Mean: {
      const Tensor& a = parent(0);
      double acc = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) acc += a[i];
      out[0] = acc / static_cast<double>(a.size());
      break;
    }
    case Op::Broadcast: {
      const Tensor& a = parent(0);
      const Shape& ts = n.shape;
      const Shape& ss = a.shape();
      const int tr = static_cast<int>(ts.size());
      const int sr = static_cast<int>(ss.size());
      // Effective source stride per target axis; 0 where replicated.
      std::vector<std::int64_t> stride(static_cast<std::size_t>(tr), 0);
      std::int64_t s = 1;
      for (int i = sr - 1; i >= 0; --i) {
        const int t_axis = tr - sr + i;
        stride[static_cast<std::size_t>(t_axis)] = (ss[static_cast<std::size_t>(i)] == 1) ? 0 : s;
        s *= ss[static_cast<std::size_t>(i)];
      }
      std::vector<int> idx(static_cast<std::size_t>(tr), 0);
      std::int64_t src_off = 0;
      for (std::int64_t i = 0; i < size; ++i) {
        out[i] = a[src_off];
        for (int ax = tr - 1; ax >= 0; --ax) {
          src_off += stride[static_cast<std::size_t>(ax)];
          if (++idx[static_cast<std::size_t>(ax)] < ts[static_cast<std::size_t>(ax)]) break;
          idx[static_cast<std::size_t>(ax)] = 0;
          src_off -= stride[static_cast<std::size_t>(ax)] * ts[static_cast<std::size_t>(ax)];
        }
      }
      break;
    }
    case Op::Reshape: {
      std::memcpy(out, parent(0).data(), static_cast<std::size_t>(size) * sizeof(double));
      break;
    }
    case Op::Softmax: {
      const Tensor& l = parent(0);
      const int b = l.extent(0), c = l.extent(1);
      for (int r = 0; r < b; ++r) {
        const double* row = l.data() + static_cast<std::size_t>(r) * c;
        double* orow = out + static_cast<std::size_t>(r) * c;
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
          orow[j] = std::exp(row[j] - mx);
          z += orow[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < c; ++j) orow[j] *= inv;
      }
      break;
    }
    case Op::SoftmaxXent: {
      const Tensor& l = parent(0);
      const Tensor& y = parent(1);
      const int b = l.extent(0), c = l.extent(1);
      double* probs = n.scratch.data();
      for (int r = 0; r < b; ++r) {
        const double* row = l.data() + static_cast<std::size_t>(r) * c;
        double* prow = probs + static_cast<std::size_t>(r) * c;
        const int label = checked_index(y[r], c, "softmax_xent label");
        double mx = row[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) {
          prow[j] = std::exp(row[j] - mx);
          z += prow[j];
        }
        const double inv = 1.0 / z;
        for (int j = 0; j < c; ++j) prow[j] *= inv;
        out[r] = std::log(z) + mx - row[label];
      }
      break;
    }
    case Op::Gather: {
      const Tensor& t = parent(0);
      const Tensor& idx = parent(1);
      const int k = t.extent(0);
      const std::int64_t row = t.size() / k;
      for (std::int64_t i = 0; i < idx.size(); ++i) {
        const int r = checked_index(idx[i], k, "gather");
        std::memcpy(out + i * row, t.data() + static_cast<std::size_t>(r) * row,
                    static_cast<std::size_t>(row) * sizeof(double));
      }
      break;
    }
  }
}

void Graph::backward_node(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  auto pnode = [&](int i) -> Node& {
    return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])];
  };
  const double* g = n.grad.data();
  const std::int64_t size = n.grad.size();

  switch (n.op) {
    case Op::Input:
    case Op::Const:
      break;
    case Op::Add: {
      for (int p = 0; p < 2; ++p) {
        Node& pn = pnode(p);
        if (!pn.needs_grad) continue;
        double* d = pn.grad.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] += g[i];
      }
      break;
    }
    case Op::Sub: {
      if (pnode(0).needs_grad) {
        double* d = pnode(0).grad.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] += g[i];
      }
      if (pnode(1).needs_grad) {
        double* d = pnode(1).grad.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] -= g[i];
      }
      break;
    }
    case Op::Mul: {
      if (pnode(0).needs_grad) {
        double* d = pnode(0).grad.data();
        const double* b = pnode(1).value.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] * b[i];
      }
      if (pnode(1).needs_grad) {
        double* d = pnode(1).grad.data();
        const double* a = pnode(0).value.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] * a[i];
      }
      break;
    }
    case Op::Scale: {
      if (pnode(0).needs_grad) {
        double* d = pnode(0).grad.data();
        for (std::int64_t i = 0; i < size; ++i) d[i] += n.scale * g[i];
      }
      break;
    }
    case Op::MatMul: {
      Node& a = pnode(0);
      Node& b = pnode(1);
      const int m = a.value.extent(0), k = a.value.extent(1), nn = b.value.extent(1);
      if (a.needs_grad) {
        // dA += dC * B^T
        dgemm(false, true, m, k, nn, 1.0, g, nn, b.value.data(), nn, 1.0, a.grad.data(), k);
      }
      if (b.needs_grad) {
        // dB += A^T * dC
        dgemm(true, false, k, nn, m, 1.0, a.value.data(), k, g, nn, 1.0, b.grad.data(), nn);
      }
      break;
    }
    case Op::Conv2d: {
      Node& x = pnode(0);
      Node& w = pnode(1);
      const ConvDims d = conv_dims(x.value.shape(), w.value.shape(), n.stride, n.pad, n.shape);
      const int cols = d.ho * d.wo;
      const int rows = d.cin * d.k * d.k;
      double* col = n.scratch.data();
      std::vector<double> dcol(x.needs_grad ? static_cast<std::size_t>(rows) * cols : 0);
      for (int b = 0; b < d.batch; ++b) {
        const double* gb = g + static_cast<std::size_t>(b) * d.cout * cols;
        if (w.needs_grad) {
          im2col(x.value.data() + static_cast<std::size_t>(b) * d.cin * d.h * d.w, d, col);
          // dW += dOut * col^T
          dgemm(false, true, d.cout, rows, cols, 1.0, gb, cols, col, cols, 1.0, w.grad.data(), rows);
        }
        if (x.needs_grad) {
          // dcol = W^T * dOut, then scatter back to image layout.
          dgemm(true, false, rows, cols, d.cout, 1.0, w.value.data(), rows, gb, cols, 0.0,
                dcol.data(), cols);
          col2im_add(dcol.data(), d, x.grad.data() + static_cast<std::size_t>(b) * d.cin * d.h * d.w);
        }
      }
      break;
    }
    case Op::GlobalAvgPool: {
      Node& x = pnode(0);
      if (!x.needs_grad) break;
      const int bc = x.value.extent(0) * x.value.extent(1);
      const std::int64_t hw = static_cast<std::int64_t>(x.value.extent(2)) * x.value.extent(3);
      const double inv = 1.0 / static_cast<double>(hw);
      for (int i = 0; i < bc; ++i) {
        double* d = x.grad.data() + static_cast<std::size_t>(i) * hw;
        const double gi = g[i] * inv;
        for (std::int64_t j = 0; j < hw; ++j) d[j] += gi;
      }
      break;
    }
    case Op::Relu: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* x = a.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += x[i] > 0.0 ? g[i] : 0.0;
      break;
    }
    case Op::Tanh: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* y = n.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] * (1.0 - y[i] * y[i]);
      break;
    }
    case Op::Softplus: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* x = a.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] * sigmoid(x[i]);
      break;
    }
    case Op::Exp: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* y = n.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] * y[i];
      break;
    }
    case Op::Log: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* x = a.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] / x[i];
      break;
    }
    case Op::Sqrt: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* y = n.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i] / (2.0 * y[i]);
      break;
    }
    case Op::Square: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double* x = a.value.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += 2.0 * g[i] * x[i];
      break;
    }
    case Op::Sum: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double gi = g[0];
      for (std::int64_t i = 0; i < a.grad.size(); ++i) d[i] += gi;
      break;
    }
    case Op::Mean: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      const double gi = g[0] / static_cast<double>(a.grad.size());
      for (std::int64_t i = 0; i < a.grad.size(); ++i) d[i] += gi;
      break;
    }
    case Op::Broadcast: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      const Shape& ts = n.shape;
      const Shape& ss = a.value.shape();
      const int tr = static_cast<int>(ts.size());
      const int sr = static_cast<int>(ss.size());
      std::vector<std::int64_t> stride(static_cast<std::size_t>(tr), 0);
      std::int64_t s = 1;
      for (int i = sr - 1; i >= 0; --i) {
        const int t_axis = tr - sr + i;
        stride[static_cast<std::size_t>(t_axis)] = (ss[static_cast<std::size_t>(i)] == 1) ? 0 : s;
        s *= ss[static_cast<std::size_t>(i)];
      }
      std::vector<int> idx(static_cast<std::size_t>(tr), 0);
      std::int64_t src_off = 0;
      double* d = a.grad.data();
      for (std::int64_t i = 0; i < size; ++i) {
        d[src_off] += g[i];
        for (int ax = tr - 1; ax >= 0; --ax) {
          src_off += stride[static_cast<std::size_t>(ax)];
          if (++idx[static_cast<std::size_t>(ax)] < ts[static_cast<std::size_t>(ax)]) break;
          idx[static_cast<std::size_t>(ax)] = 0;
          src_off -= stride[static_cast<std::size_t>(ax)] * ts[static_cast<std::size_t>(ax)];
        }
      }
      break;
    }
    case Op::Reshape: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      double* d = a.grad.data();
      for (std::int64_t i = 0; i < size; ++i) d[i] += g[i];
      break;
    }
    case Op::Softmax: {
      Node& a = pnode(0);
      if (!a.needs_grad) break;
      const int b = n.value.extent(0), c = n.value.extent(1);
      for (int r = 0; r < b; ++r) {
        const double* p = n.value.data() + static_cast<std::size_t>(r) * c;
        const double* gr = g + static_cast<std::size_t>(r) * c;
        double* d = a.grad.data() + static_cast<std::size_t>(r) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += gr[j] * p[j];
        for (int j = 0; j < c; ++j) d[j] += p[j] * (gr[j] - dot);
      }
      break;
    }
    case Op::SoftmaxXent: {
      Node& l = pnode(0);
      if (!l.needs_grad) break;
      const Tensor& y = pnode(1).value;
      const int b = l.value.extent(0), c = l.value.extent(1);
      const double* probs = n.scratch.data();
      for (int r = 0; r < b; ++r) {
        const double* prow = probs + static_cast<std::size_t>(r) * c;
        double* d = l.grad.data() + static_cast<std::size_t>(r) * c;
        const int label = static_cast<int>(y[r]);
        const double gr = g[r];
        for (int j = 0; j < c; ++j) d[j] += gr * (prow[j] - (j == label ? 1.0 : 0.0));
      }
      break;
    }
    case Op::Gather: {
      Node& t = pnode(0);
      if (!t.needs_grad) break;
      const Tensor& idx = pnode(1).value;
      const int k = t.value.extent(0);
      const std::int64_t row = t.value.size() / k;
      for (std::int64_t i = 0; i < idx.size(); ++i) {
        const int r = static_cast<int>(idx[i]);
        double* d = t.grad.data() + static_cast<std::size_t>(r) * row;
        const double* gi = g + i * row;
        for (std::int64_t j = 0; j < row; ++j) d[j] += gi[j];
      }
      (void)k;
      break;
    }
  }
}

}  // namespace nodebnn
