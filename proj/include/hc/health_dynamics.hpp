#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hc {

// ---------------------------------------------------------------------------
// Canonical AR(1) process
// ---------------------------------------------------------------------------

struct CanonicalParams {
    double rho = 0.953;
    double sig2_nu = 0.084;
    double sig2_eps = 0.137;
    double sig2_0 = 0.450;
    void validate() const;
};

// A variance formula sometimes quoted for this model divides by
// (1 + rho^2); standard AR(1) algebra divides by (1 - rho^2). Both are
// available so the discrepancy can be demonstrated against a Monte Carlo
// oracle.
enum class VarianceFormula { AsPrinted, Standard };

struct TheoreticalMoments {
    std::vector<int> times;        // years since the first wave (0, 2, 4, ...)
    std::vector<double> variances; // Var(h_t), aligned with times
    struct Cov {
        int t;    // years
        int lag;  // years
        double value;
    };
    std::vector<Cov> covariances;
};

// Variances and autocovariances of observed residuals h_t = eta_t + eps_t
// for an annual AR(1) sampled at biennial waves. Lags default to multiples
// of the wave spacing up to 8 years.
TheoreticalMoments canonical_moments(const CanonicalParams& params, int n_waves,
                                     int wave_years = 2,
                                     std::vector<int> lags = {},
                                     VarianceFormula formula = VarianceFormula::Standard);

// Residual panel: one series per person, indexed by wave; missing waves allowed.
using ResidualPanel = std::vector<std::vector<std::optional<double>>>;

struct CanonicalFit {
    CanonicalParams params;
    double objective = 0.0;
    TheoreticalMoments fitted;
    TheoreticalMoments empirical;
    int evaluations = 0;
};

// Equally-weighted minimum-distance fit of the four parameters to the
// empirical variances and covariances.
CanonicalFit estimate_canonical(const ResidualPanel& panel, int wave_years = 2,
                                VarianceFormula formula = VarianceFormula::Standard);

// ---------------------------------------------------------------------------
// Nonlinear quantile representation
// ---------------------------------------------------------------------------

struct QuantileTable {
    std::vector<int> ages;  // previous-period ages; {-1} = age-invariant table
    std::vector<double> eta_grid;
    std::vector<double> tau_grid;
    // Q[a][i][k]: tau_grid[k]-quantile of next-period eta given
    // eta_grid[i] at ages[a].
    std::vector<std::vector<std::vector<double>>> Q;
    std::vector<double> initial_marginal;  // marginal eta quantiles at tau_grid
    std::vector<std::vector<bool>> inherited;  // thin bins filled from neighbors

    int age_index(int age) const;
    // Bilinear interpolation in (eta, tau); flat beyond the grids.
    double eval(int age, double eta, double tau) const;
    void validate() const;
};

struct EtaTransition {
    int age = -1;  // age at the previous period
    double eta_prev = 0.0;
    double eta_next = 0.0;
};

// Binned conditional quantiles: observations are assigned to the nearest
// eta grid point and empirical tau-quantiles of the next-period value are
// taken within each bin, with monotone rearrangement across tau.
QuantileTable estimate_quantile_table(const std::vector<EtaTransition>& obs,
                                      const std::vector<double>& eta_grid,
                                      const std::vector<double>& tau_grid,
                                      bool by_age = false, int min_bin_count = 30);

struct EtaPaths {
    int first_age = 50;
    int step_years = 2;
    std::vector<std::vector<double>> paths;  // [path][period]
    long clamped = 0;  // boundary clamps during simulation
};

EtaPaths simulate_nonlinear(const QuantileTable& table, int n_paths, int horizon,
                            std::uint64_t seed, int first_age = 50);

struct Persistence {
    double value = 0.0;
    bool one_sided = false;  // boundary eta
};

// Finite-difference derivative of Q in eta at rank tau; the step is the
// local grid spacing.
Persistence persistence(const QuantileTable& table, int age, double eta, double tau);

// ---------------------------------------------------------------------------
// Discretization and biennial reconciliation
// ---------------------------------------------------------------------------

struct DiscreteHealthProcess {
    bool biennial = true;
    std::vector<int> ages;                       // transitions[i]: ages[i] -> ages[i+1]
    std::vector<std::vector<double>> eta_grids;  // per age
    std::vector<double> eps_grid;
    std::vector<double> eps_weights;
    std::vector<Eigen::MatrixXd> transitions;
    std::vector<double> offsets;                 // mortality-correction shifts per age
    std::vector<int> repaired_rows;              // per transition, zero-mass rows copied

    int age_index(int age) const;
    void validate() const;  // row-stochasticity, sorted grids
};

// Per-age equal-probability grids and bin-transition counting on simulated
// biennial paths. Requires at least 10 * n_eta^2 transitions per age.
DiscreteHealthProcess discretize(const EtaPaths& eta_paths,
                                 const std::vector<double>& eps_sample, int n_eta,
                                 int n_eps);

// Biennial process -> annual process: the within-block first step is the
// identity, the second step is the estimated biennial matrix.
DiscreteHealthProcess annualize(const DiscreteHealthProcess& process);

// Annual death probability as a function of (age, health level).
using DeathProbFn = std::function<double(int age, double h)>;

struct MortalityCorrectionResult {
    DiscreteHealthProcess process;
    bool converged = false;
    int iterations = 0;
    double worst_gap = 0.0;  // max |survivor median - target| at exit
};

// Median of simulated health conditional on survival, per age.
std::vector<double> survivor_medians(const DiscreteHealthProcess& process,
                                     const DeathProbFn& death_prob,
                                     int n_paths = 20000, std::uint64_t seed = 7);

// Iterative additive per-age location adjustment so that the median of
// simulated health conditional on survival matches the target at every age.
MortalityCorrectionResult mortality_bias_correction(
    const DiscreteHealthProcess& process, const DeathProbFn& death_prob,
    const std::vector<double>& target_medians_by_age, std::uint64_t seed = 7,
    int n_paths = 20000, int max_iter = 50, double tol = 1e-3);

// ---------------------------------------------------------------------------
// Shock-moment diagnostics
// ---------------------------------------------------------------------------

struct ShockMomentCell {
    std::string band;
    int decile = 0;  // previous-health decile, 0..9
    int count = 0;
    std::optional<double> variance, skewness, kurtosis;
};

struct AgeHealthObs {
    int age = 0;
    double h = 0.0;
};

// Moments of Delta h = h_t - h_{t-2} by age band x previous-health decile.
std::vector<ShockMomentCell> shock_moments(
    const std::vector<std::vector<AgeHealthObs>>& persons, int min_cell_count = 30);

// ---------------------------------------------------------------------------
// Analytic AR(1) discretizer (equal-probability bins); used for the wage
// persistent component and as a test oracle for the simulate-then-bin path.
// ---------------------------------------------------------------------------

void discretize_ar1(double rho, double sig_innov, double sig_level, int n,
                    std::vector<double>& grid, Eigen::MatrixXd& trans);

// Serialization.
void save_quantile_table(const QuantileTable& t, const std::string& path);   // qtab_v1
QuantileTable load_quantile_table(const std::string& path);
void save_health_process(const DiscreteHealthProcess& p, const std::string& path);  // dhp_v1
DiscreteHealthProcess load_health_process(const std::string& path);

}  // namespace hc
