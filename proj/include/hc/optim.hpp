#pragma once

#include <cstdint>
#include <functional>
#include <vector>

namespace hc {

using Objective = std::function<double(const std::vector<double>&)>;

struct SimplexResult {
    std::vector<double> x;
    double fval = 0.0;
    int evaluations = 0;
    bool converged = false;
};

struct SimplexOptions {
    double xtol = 1e-6;
    double ftol = 1e-10;
    int max_iter = 2000;
    double initial_step = 0.1;  // relative simplex size (absolute if x0 component is 0)
};

// Nelder-Mead downhill simplex.
SimplexResult nelder_mead(const Objective& f, std::vector<double> x0,
                          const SimplexOptions& opts = {});

struct AnnealOptions {
    double initial_temperature = 1.0;
    double cooling = 0.9;
    int steps_per_temperature = 20;
    int temperature_levels = 25;
    double proposal_scale = 0.05;  // fraction of bound width
    std::uint64_t seed = 0;
};

struct AnnealResult {
    std::vector<double> x;
    double fval = 0.0;
    int evaluations = 0;
};

// Simulated annealing over a box. Proposals outside the box are rejected.
AnnealResult simulated_annealing(const Objective& f, std::vector<double> x0,
                                 const std::vector<double>& lo,
                                 const std::vector<double>& hi,
                                 const AnnealOptions& opts = {});

}  // namespace hc
