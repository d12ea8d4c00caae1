#pragma once

// Small model instances shared across the test files.

#include <cmath>

#include "hc/solver.hpp"
#include "hc/stats.hpp"

namespace hc::test {

// Annual discrete health process with age-invariant grids and transitions.
inline DiscreteHealthProcess small_health(int first_age, int last_age, int n_eta = 3,
                                          int n_eps = 2, double rho = 0.9,
                                          double sig = 0.25, double eps_sd = 0.37) {
    DiscreteHealthProcess d;
    d.biennial = false;
    std::vector<double> grid;
    Eigen::MatrixXd P;
    discretize_ar1(rho, sig, sig / std::sqrt(1.0 - rho * rho), n_eta, grid, P);
    for (int a = first_age; a <= last_age; ++a) {
        d.ages.push_back(a);
        d.eta_grids.push_back(grid);
        d.offsets.push_back(0.0);
        if (a < last_age) {
            d.transitions.push_back(P);
            d.repaired_rows.push_back(0);
        }
    }
    for (int i = 0; i < n_eps; ++i) {
        d.eps_grid.push_back(eps_sd * normal_inv((i + 0.5) / n_eps));
        d.eps_weights.push_back(1.0 / n_eps);
    }
    return d;
}

inline EarningsProcess small_earnings(int n_theta = 3) {
    EarningsProcess e;
    e.coef = {2.3, -0.01, -2e-4, 0.06, 0.02, -0.01, 0.03};
    e.h_knots = {-0.8, -0.3, 0.4};
    e.build_theta_chain(n_theta);
    return e;
}

inline DeathProbFn gompertz_death(double base = 0.004, double slope = 0.08,
                                  double h_grad = 0.5) {
    return [=](int age, double h) {
        return std::min(1.0, base * std::exp(slope * (age - 50) - h_grad * h));
    };
}

inline SolverInputs small_inputs(int first_age = 50, int last_age = 85,
                                 int n_assets = 12, int n_pension = 3,
                                 int n_theta = 3, int n_eta = 3, int n_eps = 2) {
    SolverInputs in;
    in.grid = StateGrid::standard(n_assets, n_pension, 300000.0, 20000.0);
    in.grid.first_age = first_age;
    in.grid.last_age = last_age;
    in.health = small_health(first_age, last_age, n_eta, n_eps);
    in.earnings = small_earnings(n_theta);
    in.death = gompertz_death();
    return in;
}

}  // namespace hc::test
