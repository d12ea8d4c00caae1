#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace hc {

double mean(std::span<const double> x);
double variance(std::span<const double> x);      // sample (n-1) variance
double stddev(std::span<const double> x);
double covariance(std::span<const double> x, std::span<const double> y);
double correlation(std::span<const double> x, std::span<const double> y);
double skewness(std::span<const double> x);
double kurtosis(std::span<const double> x);      // raw kurtosis, 3 under normality

// Type-7 (linear interpolation) quantile of unsorted data.
double quantile(std::vector<double> x, double tau);
// Same, but data already sorted ascending.
double quantile_sorted(const std::vector<double>& sorted, double tau);

double normal_cdf(double x);
double normal_inv(double p);
double normal_pdf(double x);

// Piecewise-linear interpolation; flat extrapolation beyond the grid.
double interp_linear(std::span<const double> xs, std::span<const double> ys, double x);

// Least squares of y on columns of X. Throws EstimationError on rank deficiency.
Eigen::VectorXd ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

}  // namespace hc
