#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hc/health_dynamics.hpp"
#include "hc/panel.hpp"

namespace hc {

// Log hourly wage: quadratic age profile plus a piecewise-linear health
// profile (knots at the 20/30/50th health percentiles) plus an AR(1)
// persistent component and transitory measurement error.
struct EarningsProcess {
    // Deterministic part: [1, age-50, (age-50)^2, h, (h-k1)+, (h-k2)+, (h-k3)+].
    std::vector<double> coef;       // 7 coefficients
    std::vector<double> h_knots;    // k1 < k2 < k3
    double rho_e = 0.896;
    double sig2_nu_e = 0.034;
    double sig2_ups = 0.226;        // measurement error, excluded from model state
    double sig2_0_e = 0.148;

    // Discrete persistent component (5 points per the solver's state space).
    std::vector<double> theta_grid;
    Eigen::MatrixXd theta_trans;

    double deterministic(double h, double age) const;  // omega_e(h, age)
    void validate() const;
    void build_theta_chain(int n = 5);  // analytic equal-probability discretization
};

// Least squares for the deterministic part on workers' log wages; the
// stochastic part via the canonical minimum-distance machinery on the
// residuals. `health` is the continuous index aligned with panel.records.
EarningsProcess estimate_earnings_process(const Panel& panel,
                                          const std::vector<std::optional<double>>& health,
                                          int wave_years = 2);

// Hourly wage offer; zero from age 70 (no work allowed afterward).
double wage_offer(const EarningsProcess& process, double h, double age, double theta);

struct WagePaths {
    std::vector<std::vector<int>> theta_idx;  // [path][period]
    std::vector<std::vector<double>> wage;    // offers along the health paths
};

WagePaths simulate_earnings(const EarningsProcess& process,
                            const std::vector<std::vector<double>>& health_paths,
                            int first_age, std::uint64_t seed);

void save_earnings_process(const EarningsProcess& p, const std::string& path);  // earn_v1
EarningsProcess load_earnings_process(const std::string& path);

}  // namespace hc
