#include "hc/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hc/rng.hpp"

namespace hc {

SimplexResult nelder_mead(const Objective& f, std::vector<double> x0,
                          const SimplexOptions& opts) {
    const std::size_t n = x0.size();
    const double alpha = 1.0, gamma = 2.0, rho = 0.5, sigma = 0.5;

    std::vector<std::vector<double>> simplex(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i) {
        double step = opts.initial_step * std::abs(x0[i]);
        if (step == 0.0) step = opts.initial_step;
        simplex[i + 1][i] += step;
    }

    SimplexResult res;
    std::vector<double> fv(n + 1);
    for (std::size_t i = 0; i <= n; ++i) {
        fv[i] = f(simplex[i]);
        ++res.evaluations;
    }

    std::vector<std::size_t> order(n + 1);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        std::iota(order.begin(), order.end(), 0u);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        const std::size_t best = order[0], worst = order[n], second = order[n - 1];

        double xspread = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            xspread = std::max(xspread, std::abs(simplex[worst][i] - simplex[best][i]));
        if (xspread < opts.xtol && std::abs(fv[worst] - fv[best]) < opts.ftol) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t k = 0; k <= n; ++k) {
            if (k == worst) continue;
            for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[k][i] / n;
        }

        auto point = [&](double coef) {
            std::vector<double> p(n);
            for (std::size_t i = 0; i < n; ++i)
                p[i] = centroid[i] + coef * (centroid[i] - simplex[worst][i]);
            return p;
        };

        auto xr = point(alpha);
        const double fr = f(xr);
        ++res.evaluations;
        if (fr < fv[order[0]]) {
            auto xe = point(gamma);
            const double fe = f(xe);
            ++res.evaluations;
            if (fe < fr) {
                simplex[worst] = std::move(xe);
                fv[worst] = fe;
            } else {
                simplex[worst] = std::move(xr);
                fv[worst] = fr;
            }
        } else if (fr < fv[second]) {
            simplex[worst] = std::move(xr);
            fv[worst] = fr;
        } else {
            auto xc = point(fr < fv[worst] ? rho : -rho);
            const double fc = f(xc);
            ++res.evaluations;
            if (fc < std::min(fr, fv[worst])) {
                simplex[worst] = std::move(xc);
                fv[worst] = fc;
            } else {
                for (std::size_t k = 0; k <= n; ++k) {  // shrink toward best
                    if (k == best) continue;
                    for (std::size_t i = 0; i < n; ++i)
                        simplex[k][i] = simplex[best][i] + sigma * (simplex[k][i] - simplex[best][i]);
                    fv[k] = f(simplex[k]);
                    ++res.evaluations;
                }
            }
        }
    }

    const std::size_t best =
        static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    res.x = simplex[best];
    res.fval = fv[best];
    return res;
}

AnnealResult simulated_annealing(const Objective& f, std::vector<double> x0,
                                 const std::vector<double>& lo,
                                 const std::vector<double>& hi,
                                 const AnnealOptions& opts) {
    const std::size_t n = x0.size();
    Rng rng(opts.seed, 0xa11ea1);

    AnnealResult res;
    std::vector<double> x = std::move(x0);
    double fx = f(x);
    ++res.evaluations;
    res.x = x;
    res.fval = fx;

    double temp = opts.initial_temperature;
    for (int level = 0; level < opts.temperature_levels; ++level) {
        for (int step = 0; step < opts.steps_per_temperature; ++step) {
            std::vector<double> cand = x;
            const std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
            cand[i] += rng.normal() * opts.proposal_scale * (hi[i] - lo[i]) * std::sqrt(temp);
            if (cand[i] < lo[i] || cand[i] > hi[i]) continue;  // barrier
            const double fc = f(cand);
            ++res.evaluations;
            if (fc < fx || rng.uniform() < std::exp(-(fc - fx) / std::max(temp, 1e-300))) {
                x = std::move(cand);
                fx = fc;
                if (fx < res.fval) {
                    res.fval = fx;
                    res.x = x;
                }
            }
        }
        temp *= opts.cooling;
    }
    return res;
}

}  // namespace hc
