#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hc {

// One person-wave row. Wave spacing is two years (biennial survey);
// annual model periods are constructed downstream.
struct PanelRecord {
    int person_id = 0;
    int wave = 0;
    double age = 0.0;
    int birth_year = 0;
    int education = 0;      // 3-level categorical: 0 low, 1 mid, 2 high
    bool has_partner = false;
    std::vector<double> indicators;  // objective health indicators Z
    bool self_reported_good = false;
    std::optional<double> hourly_wage;  // missing when not working
    double hours_annual = 0.0;
    double wealth_total = 0.0;
    double housing_wealth = 0.0;
    bool dead_by_next_wave = false;
    double unemployment_rate = 0.0;

    bool working() const { return hours_annual > 0.0; }
};

// Ground truth retained by the generator, keyed by (person_id, wave).
struct TruthRecord {
    int person_id = 0;
    int wave = 0;
    double latent = 0.0;   // latent index behind the binary self-report
    double h_true = 0.0;   // continuous health index incl. demographics
    double eta = 0.0;      // persistent health component
    double eps = 0.0;      // transitory health component
    double theta = 0.0;    // persistent wage component
};

struct Panel {
    std::vector<std::string> indicator_names;
    std::vector<PanelRecord> records;
    std::vector<TruthRecord> truth;  // empty for loaded real data
};

enum class HealthGenerator { Canonical, Kinked };

struct SynthConfig {
    int n_persons = 20000;
    int n_waves = 7;
    std::uint64_t seed = 1;

    // Latent-index model: probit coefficients on [1, Z].
    std::vector<double> alpha;       // empty = defaults sized to indicators
    double reporting_noise_sd = 1.0;
    int n_indicators = 12;
    int n_binary_indicators = 0;     // first k indicators reported as 0/1
    double indicator_noise_sd = 0.6;

    // Health residual process (annual AR(1) observed biennially).
    HealthGenerator health_generator = HealthGenerator::Canonical;
    double rho = 0.953;
    double sig2_nu = 0.084;
    double sig2_eps = 0.137;
    double sig2_0 = 0.450;
    // Left-skew of the transitory shock (0 = Gaussian). Matches the
    // left-skewed index distribution in the data.
    double eps_skew = 0.75;
    // Kinked variant (biennial steps): persistence depends on the sign of
    // eta and the shock rank.
    double kink_rho_bad = 0.95;    // low eta, low rank
    double kink_rho_good = 0.60;   // low eta, high rank
    double kink_rho_high = 0.80;   // high eta, any rank
    double kink_sigma = 0.25;

    // Deterministic health profile and demographic effects.
    double health_age1 = -0.030, health_age2 = -5e-4, health_age3 = -1e-5;
    double health_birth_year = 0.004;   // per year relative to 1945
    double health_education = 0.15;     // per level
    double health_partner = 0.10;

    // Employment and hours (hours decline faster past the pension age).
    double work_b0 = 0.48, work_b_age = -0.205, work_b_health = 0.25;
    double hours_base = 1926.0, hours_age_slope = -33.0, hours_age_slope2 = -40.0;
    double hours_sd = 250.0;
    double hours_min = 100.0;

    // Hourly wages (log): deterministic part + persistent AR(1) + noise;
    // extra decline past the pension age.
    double earn0 = 2.042, earn_age = -0.014, earn_age2 = -0.08, earn_h = 0.05;
    double rho_e = 0.896;
    double sig2_nu_e = 0.034;
    double sig2_ups = 0.226;
    double sig2_0_e = 0.148;

    // Wealth (pounds): quadratic age profile + cohort + fixed effects.
    double wealth_a0 = 93342.0, wealth_a1 = 6964.0, wealth_a2 = -120.4;
    double wealth_cohort_per_decade = 15000.0;  // later cohorts richer
    double wealth_pi_u = -300000.0;             // pounds per unit unemployment
    double wealth_fe_sd = 50000.0;
    double wealth_noise_sd = 20000.0;

    // Mortality: Gompertz annual hazard scaled per health quartile
    // (quartiles of the age-specific health residual, 20/30/50 cutoffs).
    double mort_p50 = 0.005, mort_gompertz = 0.085;
    double mort_quartile_mult[4] = {1.0, 1.0, 1.0, 1.0};

    // Aggregate unemployment rate per wave (recycled if short).
    std::vector<double> unemployment_by_wave =
        {0.051, 0.048, 0.047, 0.053, 0.056, 0.076, 0.079};

    void validate() const;  // throws ConfigError
};

Panel generate_panel(const SynthConfig& config);

Panel load_panel(const std::string& path);                 // panel_v1 schema
void save_panel(const Panel& panel, const std::string& path);
void save_truth(const Panel& panel, const std::string& path);   // truth_v1
void load_truth(Panel& panel, const std::string& path);

struct SummaryBand {
    std::string label;
    double age_lo = 0.0, age_hi = 0.0;
    double pct_working = 0.0;
    std::optional<double> mean_hours;     // conditional on working
    std::optional<double> mean_earnings;  // annual, conditional on working
    double mean_wealth = 0.0;
    int n_obs = 0;
};

// Per age-band descriptives in the 50-59 / 60-69 / 70-90 layout.
std::vector<SummaryBand> panel_summary(const Panel& panel);

}  // namespace hc
