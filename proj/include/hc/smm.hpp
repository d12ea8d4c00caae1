#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hc/optim.hpp"
#include "hc/simulation.hpp"

namespace hc {

// Free parameters: gamma, phi_B, K, phi_h_0..phi_h_3 (knot values, the top
// knot is fixed at 0), phi_w1, phi_w2, phi_w3.
struct SmmParamSpec {
    std::string name;
    double lo = 0.0, hi = 1.0, start = 0.5;
};

struct SmmConfig {
    std::vector<SmmParamSpec> free_params;
    int n_histories = 15000;
    std::uint64_t sim_seed = 99;       // common random numbers
    bool magnitude_weights = false;    // scale by 1/max(|m_data|,1)^2
    AnnealOptions anneal;
    SimplexOptions simplex;
    int max_cycles = 10;
    double restart_tol = 1e-4;  // fixed-point test on the parameter vector
    int n_starts = 5;           // Latin-hypercube starting points
    std::uint64_t start_seed = 17;

    void validate() const;
};

// Sum of weighted squared moment gaps; cells missing on either side are
// skipped with the count reported.
double smm_loss(const std::vector<Moment>& sim, const std::vector<Moment>& data,
                const std::vector<double>& weights, int* skipped = nullptr);

std::vector<double> smm_weights(const std::vector<Moment>& data, bool magnitude);

// Apply named free parameters to a parameter set.
ModelParams apply_free_params(const ModelParams& base,
                              const std::vector<SmmParamSpec>& specs,
                              const std::vector<double>& x);

struct SmmResult {
    ModelParams params;
    std::vector<double> x;
    double loss = 0.0;
    int evaluations = 0;
    int cycles = 0;
    bool converged = false;
    // Trace rows: iteration, params..., incumbent loss.
    std::vector<std::vector<double>> trace;
};

// Hybrid simulated annealing + simplex polish, restarted from the incumbent
// until a full cycle returns its own starting vector.
SmmResult smm_estimate(const SmmConfig& cfg, const std::vector<Moment>& data,
                       const SolverInputs& base, const InitialConditions& init);

void save_trace(const SmmResult& res, const std::vector<SmmParamSpec>& specs,
                const std::string& path);

}  // namespace hc
