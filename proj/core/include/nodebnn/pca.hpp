#pragma once

#include <vector>

#include "nodebnn/tensor.hpp"

namespace nodebnn {

struct PcaResult {
  Tensor projections;  // (M, k)
  Tensor components;   // (k, d) row-wise principal directions
  std::vector<double> mean;
  std::vector<double> explained_variance_ratio;  // eigenvalue / trace
};

/// Centers the rows of (M, d), eigendecomposes the covariance and projects
/// onto the top-k eigenvectors (descending eigenvalue). Sign convention: the
/// largest-magnitude coordinate of each component is positive.
PcaResult pca_project(const Tensor& vectors, int components);

/// Squared Mahalanobis radius containing `quantile` of a 2-D Gaussian
/// (chi-squared with 2 dof): -2 ln(1 - quantile).
double mahalanobis_radius2_2d(double quantile);

struct Ellipse2d {
  double mean_x = 0.0, mean_y = 0.0;
  double cov_xx = 0.0, cov_xy = 0.0, cov_yy = 0.0;
  double radius2 = 0.0;  // squared Mahalanobis threshold

  bool contains(double x, double y) const;
};

/// Fits the mean/covariance ellipse of 2-D points at the given quantile.
Ellipse2d fit_ellipse(const Tensor& points2d, double quantile);

}  // namespace nodebnn
