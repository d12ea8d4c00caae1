#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hc/panel.hpp"

namespace hc {

// House-price index by calendar year; normalized so index(reference)=1.
// Housing wealth is deflated to reference-year prices and then grown at
// the real return, removing house-price movements in excess of it.
void deflate_housing(Panel& panel, const std::map<int, double>& price_index,
                     int reference_year = 2004, double real_return = 0.02,
                     int base_year = 2002, int wave_years = 2);

struct WealthProfileModel {
    std::vector<double> pi;            // age polynomial (age-50)^1..S, S=3
    std::optional<double> pi_u;        // unemployment coefficient; missing if collinear
    double intercept = 0.0;            // grand mean absorbed by the within transform
    std::vector<int> person_ids;
    std::vector<double> fe;            // f-hat per person
    std::vector<std::string> cohorts;  // ten-year cohort label per person
    std::map<std::string, double> cohort_mean;  // E[f-hat | cohort]
    int dropped_single_wave = 0;

    double age_part(double age) const;
    static std::string cohort_label(int birth_year);  // e.g. "1946-1955"
};

// Within (fixed-effects) estimation of the age polynomial and unemployment
// coefficient; recovered fixed effects regressed on ten-year cohort dummies.
WealthProfileModel fit_wealth_profile(const Panel& panel);

struct AgeProfilePoint {
    int age;
    double mean_wealth;
};

// Mean wealth by age with every person's fixed effect re-centered on the
// requested cohort: f~ = f-hat - E[f|own cohort] + E[f|cohort].
std::vector<AgeProfilePoint> simulate_profile(const WealthProfileModel& model,
                                              const std::string& cohort = "1946-1955",
                                              double unemployment = 0.049,
                                              int first_age = 50, int last_age = 85);

void load_price_index(const std::string& path, std::map<int, double>& index);
void save_age_profile(const std::vector<AgeProfilePoint>& profile,
                      const std::string& path);

}  // namespace hc
