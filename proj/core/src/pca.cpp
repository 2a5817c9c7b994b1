#include "nodebnn/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nodebnn/errors.hpp"

namespace nodebnn {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix stored row-major.
// Small and deterministic; d stays in the hundreds here.
void jacobi_eigen(std::vector<double>& a, int d, std::vector<double>& eigenvalues,
                  std::vector<double>& eigenvectors) {
  eigenvectors.assign(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) eigenvectors[static_cast<std::size_t>(i) * d + i] = 1.0;

  auto at = [&](std::vector<double>& m, int r, int c) -> double& {
    return m[static_cast<std::size_t>(r) * d + c];
  };

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) off += at(a, p, q) * at(a, p, q);
    }
    if (off < 1e-24) break;
    for (int p = 0; p < d; ++p) {
      for (int q = p + 1; q < d; ++q) {
        const double apq = at(a, p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double app = at(a, p, p);
        const double aqq = at(a, q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < d; ++i) {
          const double aip = at(a, i, p);
          const double aiq = at(a, i, q);
          at(a, i, p) = c * aip - s * aiq;
          at(a, i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < d; ++i) {
          const double api = at(a, p, i);
          const double aqi = at(a, q, i);
          at(a, p, i) = c * api - s * aqi;
          at(a, q, i) = s * api + c * aqi;
        }
        for (int i = 0; i < d; ++i) {
          const double vip = at(eigenvectors, i, p);
          const double viq = at(eigenvectors, i, q);
          at(eigenvectors, i, p) = c * vip - s * viq;
          at(eigenvectors, i, q) = s * vip + c * viq;
        }
      }
    }
  }
  eigenvalues.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) eigenvalues[static_cast<std::size_t>(i)] = at(a, i, i);
}

}  // namespace

PcaResult pca_project(const Tensor& vectors, int components) {
  if (vectors.rank() != 2) throw ShapeError("pca_project expects (M,d)");
  const int m = vectors.extent(0);
  const int d = vectors.extent(1);
  if (m < 2) throw DataError("pca_project needs at least two rows");
  if (components < 1 || components > std::min(m, d)) {
    throw DataError("component count must lie in [1, min(M,d)]");
  }

  PcaResult result;
  result.mean.assign(static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = vectors.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) result.mean[static_cast<std::size_t>(j)] += row[j];
  }
  for (double& v : result.mean) v /= m;

  // Sample covariance of the centered rows.
  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = vectors.data() + static_cast<std::size_t>(i) * d;
    for (int a = 0; a < d; ++a) {
      const double ca = row[a] - result.mean[static_cast<std::size_t>(a)];
      for (int b = a; b < d; ++b) {
        cov[static_cast<std::size_t>(a) * d + b] += ca * (row[b] - result.mean[static_cast<std::size_t>(b)]);
      }
    }
  }
  const double norm = 1.0 / (m - 1);
  double trace = 0.0;
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      cov[static_cast<std::size_t>(a) * d + b] *= norm;
      cov[static_cast<std::size_t>(b) * d + a] = cov[static_cast<std::size_t>(a) * d + b];
    }
    trace += cov[static_cast<std::size_t>(a) * d + a];
  }

  std::vector<double> eigenvalues, eigenvectors;
  jacobi_eigen(cov, d, eigenvalues, eigenvectors);

  std::vector<int> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return eigenvalues[static_cast<std::size_t>(a)] > eigenvalues[static_cast<std::size_t>(b)]; });

  result.components = Tensor(Shape{components, d});
  result.explained_variance_ratio.resize(static_cast<std::size_t>(components));
  for (int k = 0; k < components; ++k) {
    const int col = order[static_cast<std::size_t>(k)];
    double* comp = result.components.data() + static_cast<std::size_t>(k) * d;
    int arg = 0;
    for (int j = 0; j < d; ++j) {
      comp[j] = eigenvectors[static_cast<std::size_t>(j) * d + col];
      if (std::abs(comp[j]) > std::abs(comp[arg])) arg = j;
    }
    if (comp[arg] < 0.0) {
      for (int j = 0; j < d; ++j) comp[j] = -comp[j];
    }
    result.explained_variance_ratio[static_cast<std::size_t>(k)] =
        trace > 0.0 ? std::max(0.0, eigenvalues[static_cast<std::size_t>(col)]) / trace : 0.0;
  }

  result.projections = Tensor(Shape{m, components});
  for (int i = 0; i < m; ++i) {
    const double* row = vectors.data() + static_cast<std::size_t>(i) * d;
    for (int k = 0; k < components; ++k) {
      const double* comp = result.components.data() + static_cast<std::size_t>(k) * d;
      double acc = 0.0;
      for (int j = 0; j < d; ++j) acc += (row[j] - result.mean[static_cast<std::size_t>(j)]) * comp[j];
      result.projections[static_cast<std::int64_t>(i) * components + k] = acc;
    }
  }
  return result;
}

double mahalanobis_radius2_2d(double quantile) {
  if (quantile <= 0.0 || quantile >= 1.0) throw ConfigError("quantile must lie in (0,1)");
  return -2.0 * std::log(1.0 - quantile);
}

bool Ellipse2d::contains(double x, double y) const {
  const double det = cov_xx * cov_yy - cov_xy * cov_xy;
  if (det <= 0.0) return false;
  const double dx = x - mean_x, dy = y - mean_y;
  const double m2 = (cov_yy * dx * dx - 2.0 * cov_xy * dx * dy + cov_xx * dy * dy) / det;
  return m2 <= radius2;
}

Ellipse2d fit_ellipse(const Tensor& points2d, double quantile) {
  if (points2d.rank() != 2 || points2d.extent(1) != 2) throw ShapeError("fit_ellipse expects (M,2)");
  const int m = points2d.extent(0);
  if (m < 3) throw DataError("fit_ellipse needs at least three points");
  Ellipse2d e;
  for (int i = 0; i < m; ++i) {
    e.mean_x += points2d[2 * i];
    e.mean_y += points2d[2 * i + 1];
  }
  e.mean_x /= m;
  e.mean_y /= m;
  for (int i = 0; i < m; ++i) {
    const double dx = points2d[2 * i] - e.mean_x;
    const double dy = points2d[2 * i + 1] - e.mean_y;
    e.cov_xx += dx * dx;
    e.cov_xy += dx * dy;
    e.cov_yy += dy * dy;
  }
  e.cov_xx /= (m - 1);
  e.cov_xy /= (m - 1);
  e.cov_yy /= (m - 1);
  e.radius2 = mahalanobis_radius2_2d(quantile);
  return e;
}

}  // namespace nodebnn
