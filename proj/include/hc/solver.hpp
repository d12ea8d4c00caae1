#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hc/earnings.hpp"
#include "hc/health_dynamics.hpp"

namespace hc {

// Piecewise-linear tax on labor+pension income plus a flat rate on capital
// income. thresholds are bracket lower bounds (above zero); rates has one
// more entry than thresholds.
struct TaxSchedule {
    std::vector<double> thresholds = {12570.0};
    std::vector<double> rates = {0.0, 0.20};
    double capital_rate = 0.0;

    double on_income(double y) const;
    void validate() const;
};

struct ModelParams {
    // Calibrated.
    double L = 4880.0;     // annual time endowment, hours
    double cbar = 1660.0;  // consumption floor
    double nu = 4.0;       // relative risk aversion
    double r_p = 0.0378;   // pension annuity rate
    double c_p = 0.06;     // pension contribution rate
    double beta = 0.9756;  // discount factor
    double r = 0.02;       // real interest rate
    // Estimated.
    double gamma = 0.378;  // consumption weight
    double phi_B = 0.042;  // bequest intensity
    double K = 533219.0;   // bequest curvature shifter
    // Time-cost spline: knot positions (h_min, p20, p30, p50, h_max) and
    // values, with phi_h(h_max) = 0.
    std::vector<double> h_knots = {-3.0, -0.633, -0.170, 0.340, 2.5};
    std::vector<double> phi_h_vals = {4879.0, 2312.5, 1409.0, 1401.9, 0.0};
    double phi_w1 = 3585.0, phi_w2 = 32.8, phi_w3 = 2.8;  // cost of work
    TaxSchedule tax;

    void validate() const;
};

double utility(double c, double l, double gamma, double nu);
double bequest(double a, double phi_B, double K, double nu, double gamma);
double time_cost(double h, const ModelParams& params, bool* clamped = nullptr);
double work_cost(double s, double age, const ModelParams& params);

struct NetResources {
    double resources = 0.0;  // gross - tax + tr (before work cost and savings)
    double tax = 0.0;
    double tr = 0.0;
    double gross = 0.0;
};
NetResources net_resources(double a, double s, double wage, double p, double age,
                           const ModelParams& params);

struct StateGrid {
    std::vector<double> assets;   // 30 points, min 0
    std::vector<double> pension;  // 6 points
    std::vector<double> hours = {0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0};
    int first_age = 50, last_age = 85;

    void validate() const;
    static StateGrid standard(int n_assets = 30, int n_pension = 6,
                              double asset_max = 700000.0, double pension_max = 40000.0);
};

struct SolverInputs {
    ModelParams params;
    StateGrid grid;
    DiscreteHealthProcess health;  // annual, covering first..last age
    EarningsProcess earnings;
    DeathProbFn death;             // annual death probability (age, h)

    // Channel pinning for decompositions: when set, the primitive is
    // evaluated at the given per-age health value (indexed age - first_age)
    // instead of the realized h.
    std::optional<std::vector<double>> pin_mortality_h;
    std::optional<std::vector<double>> pin_timecost_h;
    std::optional<std::vector<double>> pin_wage_h;

    double h_for_mortality(int t, double h) const {
        return pin_mortality_h ? (*pin_mortality_h)[t] : h;
    }
    double h_for_timecost(int t, double h) const {
        return pin_timecost_h ? (*pin_timecost_h)[t] : h;
    }
    double h_for_wage(int t, double h) const {
        return pin_wage_h ? (*pin_wage_h)[t] : h;
    }

    void validate() const;
};

// Per-age tables over (assets x pension x theta x eta x eps), flat
// row-major in that order.
struct Solution {
    std::vector<int> ages;
    int na = 0, np = 0, nth = 0, neta = 0, neps = 0;
    std::vector<std::vector<double>> V;
    std::vector<std::vector<int>> pol_a;  // chosen asset-grid index
    std::vector<std::vector<int>> pol_s;  // chosen hours-grid index
    std::vector<std::vector<double>> pol_c;

    std::size_t index(int ia, int ip, int ith, int ieta, int ieps) const {
        return (((static_cast<std::size_t>(ia) * np + ip) * nth + ith) * neta + ieta) *
                   neps + ieps;
    }
    int age_index(int age) const;
};

Solution solve(const SolverInputs& in);

struct PolicyChoice {
    double a_next = 0.0, s = 0.0, c = 0.0, tax = 0.0, tr = 0.0, wage = 0.0;
};

// Policy at a continuous (assets, pension) point: next assets interpolated
// bilinearly, hours from the nearest node, consumption backed out from the
// budget identity.
PolicyChoice policy_eval(const Solution& sol, const SolverInputs& in, int age,
                         double a, double p, int ith, int ieta, int ieps,
                         bool* clamped = nullptr);

// Value at a continuous asset/pension point (multilinear).
double value_eval(const Solution& sol, const SolverInputs& in, int age, double a,
                  double p, int ith, int ieta, int ieps);

void save_params(const ModelParams& p, const std::string& path);  // params_v1
ModelParams load_params(const std::string& path);
void save_solution(const Solution& sol, const std::string& dir);  // sol_v1
Solution load_solution(const std::string& dir);

}  // namespace hc
