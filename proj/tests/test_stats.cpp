#include "doctest.h"
#include "hc/errors.hpp"
#include "hc/stats.hpp"

#include <cmath>
#include <vector>

using namespace hc;

TEST_CASE("basic moments") {
    std::vector<double> v = {1.0, 2.0, 2.0, 3.0, 7.0};
    CHECK(mean(v) == doctest::Approx(3.0));
    CHECK(variance(v) == doctest::Approx(5.5));
    CHECK(stddev(v) == doctest::Approx(2.345207879911715));
    CHECK(skewness(v) == doctest::Approx(1.170158632255954));
    CHECK(kurtosis(v) == doctest::Approx(2.8305785123966936));
}

TEST_CASE("covariance and correlation") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    std::vector<double> y = {2.0, 4.0, 6.0, 8.0};
    CHECK(covariance(x, y) == doctest::Approx(2.0 * variance(x)));
    CHECK(correlation(x, y) == doctest::Approx(1.0));
    std::vector<double> z = {4.0, 3.0, 2.0, 1.0};
    CHECK(correlation(x, z) == doctest::Approx(-1.0));
}

TEST_CASE("type-7 quantiles") {
    std::vector<double> x = {3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0};
    CHECK(quantile(x, 0.25) == doctest::Approx(1.75));
    CHECK(quantile(x, 0.5) == doctest::Approx(3.5));
    CHECK(quantile(x, 0.9) == doctest::Approx(6.9));
    CHECK(quantile(x, 0.0) == doctest::Approx(1.0));
    CHECK(quantile(x, 1.0) == doctest::Approx(9.0));
}

TEST_CASE("normal distribution helpers") {
    CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975));
    CHECK(normal_inv(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-9));
    CHECK(normal_inv(0.01) == doctest::Approx(-2.3263478740408408).epsilon(1e-9));
    CHECK(normal_inv(0.5) == doctest::Approx(0.0));
    CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
    // Round trip.
    for (double p : {0.001, 0.1, 0.3, 0.7, 0.999})
        CHECK(normal_cdf(normal_inv(p)) == doctest::Approx(p).epsilon(1e-10));
}

TEST_CASE("linear interpolation with flat extrapolation") {
    std::vector<double> xs = {0.0, 1.0, 3.0};
    std::vector<double> ys = {0.0, 2.0, 2.0};
    CHECK(interp_linear(xs, ys, 0.5) == doctest::Approx(1.0));
    CHECK(interp_linear(xs, ys, 2.0) == doctest::Approx(2.0));
    CHECK(interp_linear(xs, ys, -1.0) == doctest::Approx(0.0));
    CHECK(interp_linear(xs, ys, 10.0) == doctest::Approx(2.0));
}

TEST_CASE("ols recovers exact coefficients and flags rank deficiency") {
    Eigen::MatrixXd X(4, 2);
    X << 1, 1, 1, 2, 1, 3, 1, 4;
    Eigen::VectorXd y = 2.0 * X.col(0) + 0.5 * X.col(1);
    const Eigen::VectorXd b = ols(X, y);
    CHECK(b(0) == doctest::Approx(2.0));
    CHECK(b(1) == doctest::Approx(0.5));

    Eigen::MatrixXd Xs(4, 2);
    Xs << 1, 2, 1, 2, 1, 2, 1, 2;  // duplicated direction
    CHECK_THROWS_AS(ols(Xs, y), EstimationError);
}
