#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hc/solver.hpp"

namespace hc {

// Forced persistent-health assignments: eta rank at age 51 (marginal) and
// the conditional shock rank at age 52. Unset means the unconstrained
// stochastic transition.
struct ShockSpec {
    std::optional<double> tau_init;
    std::optional<double> tau_shock;
};

struct InitialConditions {
    std::vector<double> assets_pool = {10000.0};  // sampled with replacement
    double pension0 = 0.0;
    std::optional<int> eta_idx0;    // default: uniform over equal-probability bins
    std::optional<int> theta_idx0;  // default: uniform
};

struct History {
    int first_age = 50;
    int death_age = -1;  // first age not reached alive; -1 = survived throughout
    std::vector<int> eta_idx, eps_idx, th_idx;
    std::vector<double> h, wage, s, c, a, p, tax, tr;

    int periods() const { return static_cast<int>(a.size()); }
};

struct Histories {
    int first_age = 50, last_age = 85;
    std::vector<History> items;
};

// Forward simulation under the solved policies; deterministic by seed with
// one stream per history. Arms that differ only in the ShockSpec consume
// identical draws (common random numbers).
Histories simulate_histories(const Solution& sol, const SolverInputs& in,
                             const InitialConditions& init, int n,
                             std::uint64_t seed, const ShockSpec& shock = {});

// The 135 targeted moments: 35 mean assets (ages 50..84), 20 mean hours
// conditional on working (50..69), 80 participation by age x health
// quartile (50..69, cutoffs at the 20/30/50th percentiles of age-specific
// health).
struct Moment {
    std::string kind;  // "assets", "hours", "participation"
    int age = 0;
    int quartile = -1;
    std::optional<double> value;
    int count = 0;
};

std::vector<Moment> compute_moments(const Histories& histories);

struct ShockExperiment {
    double tau_init = 0.5;
    double tau_shock = 0.5;
    double assets0 = 10000.0;
    int n_histories = 15000;
    std::uint64_t seed = 1;
};

struct DiffProfiles {
    std::vector<int> ages;
    // Arm minus the tau_shock=0.5 median arm, common random numbers.
    std::vector<double> d_health, d_assets, d_participation, d_hours;
    // Raw arm levels for reference.
    std::vector<double> health, assets, participation, hours;
    std::vector<double> cov_assets, cov_assets_median;  // per-age CoV, both arms
};

DiffProfiles counterfactual_shock(const ShockExperiment& exp, const Solution& sol,
                                  const SolverInputs& in);

// Channel decomposition: pin the listed channels at the given percentile of
// the age-specific health distribution, re-solve, re-simulate.
enum class Channel { Mortality, TimeCost, Wages };

struct OutcomeRow {
    std::string label;
    double assets = 0.0;        // mean assets, ages 50..84
    double income = 0.0;        // mean disposable income
    double employment = 0.0;    // participation, ages 50..69
    double hours = 0.0;         // mean hours | working, ages 50..69
    double pct_assets = 0.0, pct_income = 0.0, pct_employment = 0.0, pct_hours = 0.0;
};

OutcomeRow decompose_channels(const std::set<Channel>& channels_off,
                              double percentile, const SolverInputs& base,
                              const InitialConditions& init, int n_histories,
                              std::uint64_t seed,
                              const OutcomeRow* baseline = nullptr);

// Asset transfer at age 51 making the individual indifferent between the
// imposed age-52 shock and the comparison arm (default: unconstrained
// transition). Bisection to within one currency unit.
double willingness_to_pay(const Solution& sol, const SolverInputs& in,
                          double tau_init, std::optional<double> tau_shock,
                          std::optional<double> tau_shock_comparison, double a0,
                          double p0 = 0.0);

struct InequalityTable {
    std::optional<double> assets_8020;  // lifetime-averaged assets
    double assets_sd = 0.0;
    std::optional<double> earn65_8020;  // cumulated earnings at 65
    std::optional<double> earn65_sdlog;  // zeros excluded
    double earn65_zero_share = 0.0;
    std::vector<int> ages;
    std::vector<double> cov_assets;  // per-age coefficient of variation
};

InequalityTable inequality_metrics(const Histories& histories);

// Tidy CSV outputs.
void save_moments(const std::vector<Moment>& m, const std::string& path);
void save_diff_profiles(const DiffProfiles& d, const std::string& arm_label,
                        const std::string& path);
void save_outcomes(const std::vector<OutcomeRow>& rows, const std::string& path);
void save_inequality(const InequalityTable& t, const std::string& path);

}  // namespace hc
