#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "hc/panel.hpp"

namespace hc {

// Age-specific quartile cutoffs of the health index at the 20/30/50th
// percentiles; quartile weights are 0.2 / 0.1 / 0.2 / 0.5 by construction.
struct HealthCutoffs {
    std::vector<int> ages;
    std::vector<std::array<double, 3>> cutoffs;  // per age: p20, p30, p50

    int quartile(int age, double h) const;  // 0..3, nearest covered age
};

inline constexpr std::array<double, 4> kQuartileWeights = {0.2, 0.1, 0.2, 0.5};

// Empirical annual death hazards per 2-year age band x health quartile.
struct RawRates {
    std::vector<int> band_lo;  // band = [band_lo, band_lo + 1]
    std::vector<std::array<std::optional<double>, 4>> annual;
    std::vector<std::array<int, 4>> counts;
    int empty_cells = 0;
};

// Biennial death frequencies from the panel death flags, converted to
// annual hazards via (1 - p_annual)^2 = 1 - p_biennial. `health` is the
// continuous index aligned with panel.records.
RawRates estimate_mortality(const Panel& panel,
                            const std::vector<std::optional<double>>& health,
                            const HealthCutoffs& cutoffs);

struct MortalityTable {
    std::vector<int> ages;  // model ages 50..T
    std::vector<std::array<double, 4>> death;  // annual prob per quartile
    std::vector<double> lifetable;
    HealthCutoffs cutoffs;
    std::vector<double> factors;  // rescaling factor per age
    int clipped = 0;              // rates clipped at 1 during rescaling

    double prob(int age, double h) const;
    void validate() const;  // weighted-average identity to 1e-10
};

// One multiplicative factor per age so the quartile-weighted death rate
// matches the life table exactly; rates clipped at 1 with a warning count.
MortalityTable rescale_to_lifetable(const RawRates& raw,
                                    const std::vector<int>& lifetable_ages,
                                    const std::vector<double>& lifetable_rates,
                                    const HealthCutoffs& cutoffs,
                                    int first_age = 50, int last_age = 85);

// Cumulative survival along a health path starting at table.ages.front().
std::vector<double> survival_curve(const MortalityTable& table,
                                   const std::vector<double>& health_path);

// Life-table CSV: columns (age, annual_death_rate).
void load_lifetable(const std::string& path, std::vector<int>& ages,
                    std::vector<double>& rates);
void save_mortality_table(const MortalityTable& t, const std::string& path);  // mort_v1
MortalityTable load_mortality_table(const std::string& path);

}  // namespace hc
