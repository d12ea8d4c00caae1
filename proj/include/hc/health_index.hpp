#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hc/panel.hpp"

namespace hc {

enum class IndexLink { Probit, Logit };

struct HealthIndexModel {
    std::vector<std::string> indicator_names;
    std::vector<double> alpha;      // intercept first, then one per indicator
    double standard_mean = 0.0;
    double standard_sd = 1.0;
    IndexLink link = IndexLink::Probit;
    // Fit diagnostics.
    int iterations = 0;
    double log_likelihood = 0.0;
    bool converged = false;
};

// Binary-response fit of the self-report on the objective indicators.
// The fitted linear index is standardized to mean 0, sd 1 over the
// estimation sample.
HealthIndexModel fit_latent_index(const Panel& panel, IndexLink link = IndexLink::Probit);

// Standardized Z'alpha per record; missing indicators give a missing value.
std::vector<std::optional<double>> predict_index(const HealthIndexModel& model,
                                                 const Panel& panel);

struct ResidualSeries {
    std::vector<std::optional<double>> values;  // aligned with panel records
    std::vector<double> coefficients;  // [1, age, age^2, age^3, birth_year, edu1, edu2, partner]
};

// Residuals from least squares of the index on a cubic age polynomial,
// birth year, education dummies, and partner indicator.
ResidualSeries residualize(const std::vector<std::optional<double>>& index,
                           const Panel& panel);

void save_index_model(const HealthIndexModel& model, const std::string& path);  // hindex_v1
HealthIndexModel load_index_model(const std::string& path);

}  // namespace hc
