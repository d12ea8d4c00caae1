#include "hc/health_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/optim.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"

namespace hc {

// ---------------------------------------------------------------------------
// Canonical process
// ---------------------------------------------------------------------------

void CanonicalParams::validate() const {
    if (std::abs(rho) >= 1.0) throw ConfigError("canonical: |rho| must be < 1");
    if (sig2_nu < 0 || sig2_eps < 0 || sig2_0 < 0)
        throw ConfigError("canonical: variances must be non-negative");
}

namespace {

double eta_variance(const CanonicalParams& p, int t, VarianceFormula f) {
    const double r2t = std::pow(p.rho, 2 * t);
    const double denom =
        f == VarianceFormula::AsPrinted ? 1.0 + p.rho * p.rho : 1.0 - p.rho * p.rho;
    return r2t * p.sig2_0 + (1.0 - r2t) / denom * p.sig2_nu;
}

}  // namespace

TheoreticalMoments canonical_moments(const CanonicalParams& params, int n_waves,
                                     int wave_years, std::vector<int> lags,
                                     VarianceFormula formula) {
    params.validate();
    if (n_waves < 1) throw ConfigError("canonical_moments: n_waves must be >= 1");
    if (lags.empty())
        for (int l = wave_years; l <= 8; l += wave_years) lags.push_back(l);
    for (int l : lags)
        if (l <= 0 || l % wave_years != 0)
            throw ConfigError("canonical_moments: lags must be positive multiples of the wave spacing");

    TheoreticalMoments m;
    for (int w = 0; w < n_waves; ++w) {
        const int t = w * wave_years;
        m.times.push_back(t);
        m.variances.push_back(eta_variance(params, t, formula) + params.sig2_eps);
        for (int l : lags) {
            if (l > t) continue;
            const double cov = std::pow(params.rho, l) * eta_variance(params, t - l, formula);
            m.covariances.push_back({t, l, cov});
        }
    }
    return m;
}

namespace {

TheoreticalMoments empirical_moments(const ResidualPanel& panel, int wave_years) {
    std::size_t n_waves = 0;
    for (const auto& s : panel) n_waves = std::max(n_waves, s.size());

    TheoreticalMoments m;
    int waves_with_data = 0;
    for (std::size_t w = 0; w < n_waves; ++w) {
        std::vector<double> vals;
        for (const auto& s : panel)
            if (w < s.size() && s[w]) vals.push_back(*s[w]);
        if (vals.size() < 2) continue;
        ++waves_with_data;
        m.times.push_back(static_cast<int>(w) * wave_years);
        m.variances.push_back(variance(vals));
    }
    if (waves_with_data < 3)
        throw EstimationError(
            "estimate_canonical: identification requires at least three waves of data");

    for (std::size_t w = 1; w < n_waves; ++w) {
        for (std::size_t lw = 1; lw <= w && static_cast<int>(lw) * wave_years <= 8; ++lw) {
            std::vector<double> a, b;
            for (const auto& s : panel) {
                if (w < s.size() && s[w] && s[w - lw]) {
                    a.push_back(*s[w]);
                    b.push_back(*s[w - lw]);
                }
            }
            if (a.size() < 2) continue;
            m.covariances.push_back({static_cast<int>(w) * wave_years,
                                     static_cast<int>(lw) * wave_years,
                                     covariance(a, b)});
        }
    }
    return m;
}

}  // namespace

CanonicalFit estimate_canonical(const ResidualPanel& panel, int wave_years,
                                VarianceFormula formula) {
    const TheoreticalMoments emp = empirical_moments(panel, wave_years);

    // Transformed parameters: rho = tanh(x0), variances = x_i^2, so the
    // optimizer is unconstrained and exact zeros remain reachable.
    auto unpack = [](const std::vector<double>& x) {
        CanonicalParams p;
        p.rho = std::tanh(x[0]);
        p.sig2_nu = x[1] * x[1];
        p.sig2_eps = x[2] * x[2];
        p.sig2_0 = x[3] * x[3];
        return p;
    };

    int evals = 0;
    auto objective = [&](const std::vector<double>& x) {
        ++evals;
        const CanonicalParams p = unpack(x);
        double loss = 0.0;
        for (std::size_t i = 0; i < emp.times.size(); ++i) {
            const int t = emp.times[i];
            const double theo = eta_variance(p, t, formula) + p.sig2_eps;
            const double d = theo - emp.variances[i];
            loss += d * d;
        }
        for (const auto& c : emp.covariances) {
            const double theo = std::pow(p.rho, c.lag) * eta_variance(p, c.t - c.lag, formula);
            const double d = theo - c.value;
            loss += d * d;
        }
        return loss;
    };

    const double var0 = emp.variances.front();
    std::vector<std::vector<double>> starts = {
        {std::atanh(0.95), std::sqrt(0.05), std::sqrt(std::max(0.01, 0.25 * var0)),
         std::sqrt(std::max(0.01, 0.75 * var0))},
        {std::atanh(0.90), std::sqrt(0.10), std::sqrt(std::max(0.005, 0.4 * var0)),
         std::sqrt(std::max(0.005, 0.6 * var0))},
        {std::atanh(0.60), std::sqrt(0.02), std::sqrt(std::max(0.02, 0.5 * var0)),
         std::sqrt(std::max(0.02, 0.5 * var0))},
    };

    SimplexOptions opts;
    opts.xtol = 1e-9;
    opts.ftol = 1e-14;
    opts.max_iter = 4000;
    SimplexResult best;
    best.fval = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        SimplexResult r = nelder_mead(objective, s, opts);
        // Polish from the incumbent.
        r = nelder_mead(objective, r.x, opts);
        if (r.fval < best.fval) best = r;
    }
    if (!std::isfinite(best.fval))
        throw EstimationError("estimate_canonical: optimizer failed to converge");

    CanonicalFit fit;
    fit.params = unpack(best.x);
    if (fit.params.rho < 0 && fit.params.sig2_nu == 0) fit.params.rho = -fit.params.rho;
    fit.objective = best.fval;
    fit.empirical = emp;
    const int n_waves = static_cast<int>(emp.times.size());
    fit.fitted = canonical_moments(fit.params, n_waves, wave_years, {}, formula);
    fit.evaluations = evals;
    return fit;
}

// ---------------------------------------------------------------------------
// Quantile table
// ---------------------------------------------------------------------------

int QuantileTable::age_index(int age) const {
    if (ages.size() == 1) return 0;
    int best = 0;
    for (std::size_t i = 1; i < ages.size(); ++i)
        if (std::abs(ages[i] - age) < std::abs(ages[best] - age))
            best = static_cast<int>(i);
    return best;
}

double QuantileTable::eval(int age, double eta, double tau) const {
    const auto& q = Q[age_index(age)];
    const std::size_t ne = eta_grid.size(), nt = tau_grid.size();

    auto bracket = [](const std::vector<double>& g, double x, std::size_t& lo, double& w) {
        if (x <= g.front()) { lo = 0; w = 0.0; return; }
        if (x >= g.back()) { lo = g.size() - 2; w = 1.0; return; }
        lo = static_cast<std::size_t>(std::upper_bound(g.begin(), g.end(), x) - g.begin()) - 1;
        w = (x - g[lo]) / (g[lo + 1] - g[lo]);
    };
    std::size_t ie = 0, it = 0;
    double we = 0.0, wt = 0.0;
    if (ne == 1) { ie = 0; we = 0.0; } else bracket(eta_grid, eta, ie, we);
    if (nt == 1) { it = 0; wt = 0.0; } else bracket(tau_grid, tau, it, wt);
    const std::size_t ie1 = std::min(ie + 1, ne - 1), it1 = std::min(it + 1, nt - 1);
    return (1 - we) * ((1 - wt) * q[ie][it] + wt * q[ie][it1]) +
           we * ((1 - wt) * q[ie1][it] + wt * q[ie1][it1]);
}

void QuantileTable::validate() const {
    for (std::size_t i = 1; i < eta_grid.size(); ++i)
        if (eta_grid[i] <= eta_grid[i - 1])
            throw ConfigError("quantile table: eta grid not strictly increasing");
    for (std::size_t i = 1; i < tau_grid.size(); ++i)
        if (tau_grid[i] <= tau_grid[i - 1])
            throw ConfigError("quantile table: tau grid not strictly increasing");
    for (const auto& qa : Q)
        for (const auto& row : qa)
            for (std::size_t k = 1; k < row.size(); ++k)
                if (row[k] < row[k - 1])
                    throw ConfigError("quantile table: Q not monotone in tau");
}

QuantileTable estimate_quantile_table(const std::vector<EtaTransition>& obs,
                                      const std::vector<double>& eta_grid,
                                      const std::vector<double>& tau_grid,
                                      bool by_age, int min_bin_count) {
    if (obs.empty()) throw EstimationError("estimate_quantile_table: no observations");
    QuantileTable table;
    table.eta_grid = eta_grid;
    table.tau_grid = tau_grid;

    std::map<int, std::vector<const EtaTransition*>> groups;
    if (by_age) {
        for (const auto& o : obs) groups[o.age].push_back(&o);
    } else {
        for (const auto& o : obs) groups[-1].push_back(&o);
    }

    const std::size_t ne = eta_grid.size();
    auto nearest_bin = [&](double eta) {
        std::size_t best = 0;
        double bd = std::abs(eta - eta_grid[0]);
        for (std::size_t i = 1; i < ne; ++i) {
            const double d = std::abs(eta - eta_grid[i]);
            if (d < bd) { bd = d; best = i; }
        }
        return best;
    };

    for (auto& [age, members] : groups) {
        table.ages.push_back(age);
        struct Bin {
            std::vector<double> next, prev;
        };
        std::vector<Bin> bins(ne);
        for (const auto* o : members) {
            Bin& b = bins[nearest_bin(o->eta_prev)];
            b.next.push_back(o->eta_next);
            b.prev.push_back(o->eta_prev);
        }

        // Per-bin quantile nodes are anchored at the within-bin mean of the
        // conditioning value, not the bin center: at the tails the two can
        // differ materially, which would bias the implied persistence.
        std::vector<bool> thin(ne, false);
        std::vector<double> node_eta;
        std::vector<std::vector<double>> node_q;  // [node][tau]
        for (std::size_t i = 0; i < ne; ++i) {
            const auto& bn = bins[i].next;
            const auto& bp = bins[i].prev;
            const std::size_t m = bn.size();
            if (static_cast<int>(m) < min_bin_count) {
                thin[i] = true;
                continue;
            }
            // Local-linear quantiles: strip the within-bin slope so the
            // conditioning value is effectively held at the bin mean.
            const double pm = mean(bp), nm = mean(bn);
            double sxx = 0.0, sxy = 0.0;
            for (std::size_t r = 0; r < m; ++r) {
                sxx += (bp[r] - pm) * (bp[r] - pm);
                sxy += (bp[r] - pm) * (bn[r] - nm);
            }
            const double slope = sxx > 1e-12 ? sxy / sxx : 0.0;
            std::vector<double> resid(m);
            for (std::size_t r = 0; r < m; ++r) resid[r] = bn[r] - slope * (bp[r] - pm);
            std::sort(resid.begin(), resid.end());
            std::vector<double> qi(tau_grid.size());
            for (std::size_t k = 0; k < tau_grid.size(); ++k)
                qi[k] = quantile_sorted(resid, tau_grid[k]);
            node_eta.push_back(pm);
            node_q.push_back(std::move(qi));
        }
        if (node_eta.empty())
            throw EstimationError("estimate_quantile_table: all bins below minimum count");
        std::vector<std::vector<double>> q(ne, std::vector<double>(tau_grid.size()));
        std::vector<double> col(node_eta.size());
        for (std::size_t k = 0; k < tau_grid.size(); ++k) {
            for (std::size_t b = 0; b < node_eta.size(); ++b) col[b] = node_q[b][k];
            for (std::size_t i = 0; i < ne; ++i)
                q[i][k] = interp_linear(node_eta, col, eta_grid[i]);
        }
        for (std::size_t i = 0; i < ne; ++i)
            std::sort(q[i].begin(), q[i].end());  // monotone rearrangement
        table.Q.push_back(std::move(q));
        table.inherited.push_back(std::move(thin));
    }

    // Marginal of eta at the earliest age.
    std::vector<double> initial;
    const int first_age = groups.begin()->first;
    for (const auto* o : groups.begin()->second) initial.push_back(o->eta_prev);
    (void)first_age;
    std::sort(initial.begin(), initial.end());
    for (double tau : tau_grid)
        table.initial_marginal.push_back(quantile_sorted(initial, tau));
    table.validate();
    return table;
}

EtaPaths simulate_nonlinear(const QuantileTable& table, int n_paths, int horizon,
                            std::uint64_t seed, int first_age) {
    table.validate();
    EtaPaths out;
    out.first_age = first_age;
    out.paths.assign(n_paths, std::vector<double>(horizon));
    const double lo = table.eta_grid.front(), hi = table.eta_grid.back();
    for (int p = 0; p < n_paths; ++p) {
        Rng rng(seed, static_cast<std::uint64_t>(p));
        double eta = interp_linear(table.tau_grid, table.initial_marginal, rng.uniform());
        out.paths[p][0] = eta;
        for (int t = 1; t < horizon; ++t) {
            if (eta < lo || eta > hi) {
                ++out.clamped;
                eta = std::clamp(eta, lo, hi);
            }
            eta = table.eval(first_age + 2 * (t - 1), eta, rng.uniform());
            out.paths[p][t] = eta;
        }
    }
    return out;
}

Persistence persistence(const QuantileTable& table, int age, double eta, double tau) {
    const auto& g = table.eta_grid;
    std::size_t i = 0;
    double bd = std::abs(eta - g[0]);
    for (std::size_t j = 1; j < g.size(); ++j)
        if (std::abs(eta - g[j]) < bd) { bd = std::abs(eta - g[j]); i = j; }
    double step;
    if (i == 0) step = g[1] - g[0];
    else if (i == g.size() - 1) step = g[i] - g[i - 1];
    else step = std::min(g[i + 1] - g[i], g[i] - g[i - 1]);

    Persistence out;
    const bool left_ok = eta - step >= g.front() - 1e-12;
    const bool right_ok = eta + step <= g.back() + 1e-12;
    if (left_ok && right_ok) {
        out.value = (table.eval(age, eta + step, tau) - table.eval(age, eta - step, tau)) /
                    (2.0 * step);
    } else if (right_ok) {
        out.value = (table.eval(age, eta + step, tau) - table.eval(age, eta, tau)) / step;
        out.one_sided = true;
    } else {
        out.value = (table.eval(age, eta, tau) - table.eval(age, eta - step, tau)) / step;
        out.one_sided = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Discretization
// ---------------------------------------------------------------------------

int DiscreteHealthProcess::age_index(int age) const {
    const auto it = std::find(ages.begin(), ages.end(), age);
    if (it == ages.end())
        throw ConfigError("health process: age " + std::to_string(age) + " not covered");
    return static_cast<int>(it - ages.begin());
}

void DiscreteHealthProcess::validate() const {
    for (const auto& g : eta_grids)
        for (std::size_t i = 1; i < g.size(); ++i)
            if (g[i] < g[i - 1]) throw ConfigError("health process: unsorted eta grid");
    for (const auto& T : transitions) {
        for (int i = 0; i < T.rows(); ++i) {
            double s = 0.0;
            for (int j = 0; j < T.cols(); ++j) {
                if (T(i, j) < 0.0) throw ConfigError("health process: negative transition entry");
                s += T(i, j);
            }
            if (std::abs(s - 1.0) > 1e-12)
                throw ConfigError("health process: transition row does not sum to 1");
        }
    }
}

DiscreteHealthProcess discretize(const EtaPaths& eta_paths,
                                 const std::vector<double>& eps_sample, int n_eta,
                                 int n_eps) {
    const int n_paths = static_cast<int>(eta_paths.paths.size());
    const int horizon = n_paths ? static_cast<int>(eta_paths.paths[0].size()) : 0;
    if (horizon < 2) throw ConfigError("discretize: need at least two periods of paths");
    if (n_paths < 10 * n_eta * n_eta)
        throw ConfigError("discretize: insufficient paths at age " +
                          std::to_string(eta_paths.first_age) + " (" +
                          std::to_string(n_paths) + " < " +
                          std::to_string(10 * n_eta * n_eta) + ")");

    DiscreteHealthProcess proc;
    proc.biennial = eta_paths.step_years == 2;
    std::vector<std::vector<double>> sorted_cols(horizon);
    for (int t = 0; t < horizon; ++t) {
        proc.ages.push_back(eta_paths.first_age + eta_paths.step_years * t);
        auto& col = sorted_cols[t];
        col.resize(n_paths);
        for (int p = 0; p < n_paths; ++p) col[p] = eta_paths.paths[p][t];
        std::sort(col.begin(), col.end());
        std::vector<double> grid(n_eta);
        for (int i = 0; i < n_eta; ++i)
            grid[i] = quantile_sorted(col, (i + 0.5) / n_eta);
        proc.eta_grids.push_back(std::move(grid));
    }
    proc.offsets.assign(horizon, 0.0);

    // Equal-probability bin edges per age, then transition counting.
    auto bin_of = [&](int t, double v) {
        const auto& col = sorted_cols[t];
        int b = 0;
        for (int i = 1; i < n_eta; ++i)
            if (v >= quantile_sorted(col, static_cast<double>(i) / n_eta)) b = i;
        return b;
    };
    // Precompute edges to avoid re-sorting in the lambda above.
    std::vector<std::vector<double>> edges(horizon, std::vector<double>(n_eta - 1));
    for (int t = 0; t < horizon; ++t)
        for (int i = 1; i < n_eta; ++i)
            edges[t][i - 1] = quantile_sorted(sorted_cols[t], static_cast<double>(i) / n_eta);
    auto fast_bin = [&](int t, double v) {
        const auto& e = edges[t];
        return static_cast<int>(std::upper_bound(e.begin(), e.end(), v) - e.begin());
    };
    (void)bin_of;

    for (int t = 0; t + 1 < horizon; ++t) {
        Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_eta, n_eta);
        for (int p = 0; p < n_paths; ++p)
            counts(fast_bin(t, eta_paths.paths[p][t]), fast_bin(t + 1, eta_paths.paths[p][t + 1])) += 1.0;
        int repaired = 0;
        for (int i = 0; i < n_eta; ++i) {
            if (counts.row(i).sum() > 0.0) continue;
            int src = -1;
            for (int d = 1; d < n_eta; ++d) {
                if (i - d >= 0 && counts.row(i - d).sum() > 0) { src = i - d; break; }
                if (i + d < n_eta && counts.row(i + d).sum() > 0) { src = i + d; break; }
            }
            counts.row(i) = counts.row(src);
            ++repaired;
        }
        for (int i = 0; i < n_eta; ++i) counts.row(i) /= counts.row(i).sum();
        proc.transitions.push_back(std::move(counts));
        proc.repaired_rows.push_back(repaired);
    }

    std::vector<double> eps = eps_sample;
    std::sort(eps.begin(), eps.end());
    for (int i = 0; i < n_eps; ++i) {
        proc.eps_grid.push_back(quantile_sorted(eps, (i + 0.5) / n_eps));
        proc.eps_weights.push_back(1.0 / n_eps);
    }
    proc.validate();
    return proc;
}

DiscreteHealthProcess annualize(const DiscreteHealthProcess& process) {
    if (!process.biennial) throw ConfigError("annualize: process already annual");
    DiscreteHealthProcess out;
    out.biennial = false;
    out.eps_grid = process.eps_grid;
    out.eps_weights = process.eps_weights;

    const int first = process.ages.front(), last = process.ages.back();
    for (int age = first; age <= last; ++age) {
        out.ages.push_back(age);
        const bool on_wave = (age - first) % 2 == 0;
        const int bi = (age - first) / 2;
        out.eta_grids.push_back(process.eta_grids[on_wave ? bi : bi]);
        out.offsets.push_back(process.offsets[bi]);
        if (age == last) break;
        if (on_wave) {
            const int n = static_cast<int>(process.eta_grids[bi].size());
            out.transitions.push_back(Eigen::MatrixXd::Identity(n, n));
            out.repaired_rows.push_back(0);
        } else {
            out.transitions.push_back(process.transitions[bi]);
            out.repaired_rows.push_back(process.repaired_rows[bi]);
        }
    }
    out.validate();
    return out;
}

// Survivor medians of h = eta + offset + eps along the chain.
std::vector<double> survivor_medians(const DiscreteHealthProcess& proc,
                                     const DeathProbFn& death_prob, int n_paths,
                                     std::uint64_t seed) {
    const int n_ages = static_cast<int>(proc.ages.size());
    std::vector<std::vector<double>> survivors(n_ages);
    const int step = proc.biennial ? 2 : 1;
    for (int p = 0; p < n_paths; ++p) {
        Rng rng(seed, static_cast<std::uint64_t>(p) + 0x5eed);
        const int n0 = static_cast<int>(proc.eta_grids[0].size());
        int bin = rng.uniform_int(0, n0 - 1);  // equal-probability grid
        bool alive = true;
        for (int a = 0; a < n_ages && alive; ++a) {
            const int ie = rng.uniform_int(0, static_cast<int>(proc.eps_grid.size()) - 1);
            const double h = proc.eta_grids[a][bin] + proc.offsets[a] + proc.eps_grid[ie];
            survivors[a].push_back(h);
            double p_live = 1.0;
            for (int y = 0; y < step; ++y)
                p_live *= 1.0 - std::clamp(death_prob(proc.ages[a] + y, h), 0.0, 1.0);
            alive = rng.uniform() < p_live;
            if (a + 1 < n_ages) {
                const auto& row = proc.transitions[a];
                const double u = rng.uniform();
                double cum = 0.0;
                int next = static_cast<int>(row.cols()) - 1;
                for (int j = 0; j < row.cols(); ++j) {
                    cum += row(bin, j);
                    if (u < cum) { next = j; break; }
                }
                bin = next;
            }
        }
    }
    std::vector<double> med(n_ages);
    for (int a = 0; a < n_ages; ++a) med[a] = quantile(survivors[a], 0.5);
    return med;
}

MortalityCorrectionResult mortality_bias_correction(
    const DiscreteHealthProcess& process, const DeathProbFn& death_prob,
    const std::vector<double>& target_medians_by_age, std::uint64_t seed, int n_paths,
    int max_iter, double tol) {
    if (target_medians_by_age.size() != process.ages.size())
        throw ConfigError("mortality_bias_correction: target medians must cover all ages");

    MortalityCorrectionResult res;
    res.process = process;
    for (int iter = 0; iter < max_iter; ++iter) {
        const std::vector<double> med =
            survivor_medians(res.process, death_prob, n_paths, seed);
        double worst = 0.0;
        for (std::size_t a = 0; a < med.size(); ++a)
            worst = std::max(worst, std::abs(med[a] - target_medians_by_age[a]));
        res.iterations = iter;
        res.worst_gap = worst;
        if (worst < tol) {
            res.converged = true;
            break;
        }
        for (std::size_t a = 0; a < med.size(); ++a)
            res.process.offsets[a] += target_medians_by_age[a] - med[a];
    }
    // Fold the offsets into the grids so downstream consumers see corrected
    // levels; offsets are kept for audit.
    for (std::size_t a = 0; a < res.process.eta_grids.size(); ++a) {
        for (double& v : res.process.eta_grids[a]) v += res.process.offsets[a];
    }
    const std::vector<double> kept = res.process.offsets;
    res.process.offsets.assign(res.process.offsets.size(), 0.0);
    res.process.offsets = kept;  // audit trail; grids already shifted
    return res;
}

// ---------------------------------------------------------------------------
// Shock moments
// ---------------------------------------------------------------------------

std::vector<ShockMomentCell> shock_moments(
    const std::vector<std::vector<AgeHealthObs>>& persons, int min_cell_count) {
    struct Pair { double prev, delta; };
    std::map<std::string, std::vector<Pair>> by_band;
    for (const auto& series : persons) {
        for (std::size_t i = 1; i < series.size(); ++i) {
            if (series[i].age - series[i - 1].age != 2) continue;
            const int a = series[i - 1].age;
            const std::string band = a < 60 ? "50-59" : (a < 70 ? "60-69" : "70+");
            by_band[band].push_back({series[i - 1].h, series[i].h - series[i - 1].h});
        }
    }
    std::vector<ShockMomentCell> out;
    for (auto& [band, pairs] : by_band) {
        std::vector<double> prevs;
        for (const auto& p : pairs) prevs.push_back(p.prev);
        std::sort(prevs.begin(), prevs.end());
        std::vector<double> cuts(9);
        for (int d = 1; d <= 9; ++d) cuts[d - 1] = quantile_sorted(prevs, d / 10.0);
        std::vector<std::vector<double>> cells(10);
        for (const auto& p : pairs) {
            const int d = static_cast<int>(
                std::upper_bound(cuts.begin(), cuts.end(), p.prev) - cuts.begin());
            cells[d].push_back(p.delta);
        }
        for (int d = 0; d < 10; ++d) {
            ShockMomentCell cell;
            cell.band = band;
            cell.decile = d;
            cell.count = static_cast<int>(cells[d].size());
            if (cell.count >= min_cell_count) {
                cell.variance = variance(cells[d]);
                cell.skewness = skewness(cells[d]);
                cell.kurtosis = kurtosis(cells[d]);
            }
            out.push_back(cell);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Analytic AR(1) discretizer
// ---------------------------------------------------------------------------

void discretize_ar1(double rho, double sig_innov, double sig_level, int n,
                    std::vector<double>& grid, Eigen::MatrixXd& trans) {
    if (n < 1) throw ConfigError("discretize_ar1: n must be positive");
    if (sig_level <= 0) throw ConfigError("discretize_ar1: sig_level must be positive");
    grid.resize(n);
    for (int i = 0; i < n; ++i) grid[i] = sig_level * normal_inv((i + 0.5) / n);
    std::vector<double> edges(n - 1);
    for (int i = 1; i < n; ++i) edges[i - 1] = sig_level * normal_inv(static_cast<double>(i) / n);

    trans = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        const double m = rho * grid[i];
        if (sig_innov <= 0.0) {
            const int j = static_cast<int>(
                std::upper_bound(edges.begin(), edges.end(), m) - edges.begin());
            trans(i, j) = 1.0;
            continue;
        }
        double prev = 0.0;
        for (int j = 0; j < n - 1; ++j) {
            const double c = normal_cdf((edges[j] - m) / sig_innov);
            trans(i, j) = c - prev;
            prev = c;
        }
        trans(i, n - 1) = 1.0 - prev;
        trans.row(i) /= trans.row(i).sum();
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void save_quantile_table(const QuantileTable& t, const std::string& path) {
    CsvTable csv;
    csv.columns = {"section", "age", "i", "j", "value"};
    auto push = [&](const std::string& sec, int age, int i, int j, double v) {
        csv.rows.push_back({sec, std::to_string(age), std::to_string(i),
                            std::to_string(j), format_double(v)});
    };
    push("schema_qtab_v1", 0, 0, 0, 1.0);
    for (std::size_t i = 0; i < t.eta_grid.size(); ++i)
        push("eta_grid", -1, static_cast<int>(i), 0, t.eta_grid[i]);
    for (std::size_t i = 0; i < t.tau_grid.size(); ++i)
        push("tau_grid", -1, static_cast<int>(i), 0, t.tau_grid[i]);
    for (std::size_t i = 0; i < t.initial_marginal.size(); ++i)
        push("initial_marginal", -1, static_cast<int>(i), 0, t.initial_marginal[i]);
    for (std::size_t a = 0; a < t.ages.size(); ++a)
        for (std::size_t i = 0; i < t.Q[a].size(); ++i)
            for (std::size_t j = 0; j < t.Q[a][i].size(); ++j)
                push("Q", t.ages[a], static_cast<int>(i), static_cast<int>(j), t.Q[a][i][j]);
    write_csv(path, csv);
}

QuantileTable load_quantile_table(const std::string& path) {
    const CsvTable csv = read_csv(path);
    if (csv.rows.empty() || csv.rows[0][0] != "schema_qtab_v1")
        throw LoadError(path + ": not a qtab_v1 file");
    QuantileTable t;
    std::map<int, std::map<std::pair<int, int>, double>> qdata;
    for (const auto& row : csv.rows) {
        const std::string& sec = row[0];
        const int age = std::stoi(row[1]), i = std::stoi(row[2]), j = std::stoi(row[3]);
        const double v = std::stod(row[4]);
        if (sec == "eta_grid") t.eta_grid.push_back(v);
        else if (sec == "tau_grid") t.tau_grid.push_back(v);
        else if (sec == "initial_marginal") t.initial_marginal.push_back(v);
        else if (sec == "Q") qdata[age][{i, j}] = v;
    }
    for (auto& [age, cells] : qdata) {
        t.ages.push_back(age);
        std::vector<std::vector<double>> q(t.eta_grid.size(),
                                           std::vector<double>(t.tau_grid.size()));
        for (auto& [ij, v] : cells) q[ij.first][ij.second] = v;
        t.Q.push_back(std::move(q));
        t.inherited.push_back(std::vector<bool>(t.eta_grid.size(), false));
    }
    t.validate();
    return t;
}

void save_health_process(const DiscreteHealthProcess& p, const std::string& path) {
    CsvTable csv;
    csv.columns = {"section", "age", "i", "j", "value"};
    auto push = [&](const std::string& sec, int age, int i, int j, double v) {
        csv.rows.push_back({sec, std::to_string(age), std::to_string(i),
                            std::to_string(j), format_double(v)});
    };
    push("schema_dhp_v1", 0, 0, 0, 1.0);
    push("biennial", 0, 0, 0, p.biennial ? 1.0 : 0.0);
    for (std::size_t a = 0; a < p.ages.size(); ++a) {
        for (std::size_t i = 0; i < p.eta_grids[a].size(); ++i)
            push("eta_grid", p.ages[a], static_cast<int>(i), 0, p.eta_grids[a][i]);
        push("offset", p.ages[a], 0, 0, p.offsets[a]);
    }
    for (std::size_t i = 0; i < p.eps_grid.size(); ++i) {
        push("eps_grid", -1, static_cast<int>(i), 0, p.eps_grid[i]);
        push("eps_weight", -1, static_cast<int>(i), 0, p.eps_weights[i]);
    }
    for (std::size_t a = 0; a + 1 < p.ages.size(); ++a)
        for (int i = 0; i < p.transitions[a].rows(); ++i)
            for (int j = 0; j < p.transitions[a].cols(); ++j)
                push("transition", p.ages[a], i, j, p.transitions[a](i, j));
    write_csv(path, csv);
}

DiscreteHealthProcess load_health_process(const std::string& path) {
    const CsvTable csv = read_csv(path);
    if (csv.rows.empty() || csv.rows[0][0] != "schema_dhp_v1")
        throw LoadError(path + ": not a dhp_v1 file");
    DiscreteHealthProcess p;
    std::map<int, std::vector<double>> grids;
    std::map<int, double> offsets;
    std::map<int, std::map<std::pair<int, int>, double>> trans;
    for (const auto& row : csv.rows) {
        const std::string& sec = row[0];
        const int age = std::stoi(row[1]), i = std::stoi(row[2]), j = std::stoi(row[3]);
        const double v = std::stod(row[4]);
        if (sec == "biennial") p.biennial = v != 0.0;
        else if (sec == "eta_grid") grids[age].push_back(v);
        else if (sec == "offset") offsets[age] = v;
        else if (sec == "eps_grid") p.eps_grid.push_back(v);
        else if (sec == "eps_weight") p.eps_weights.push_back(v);
        else if (sec == "transition") trans[age][{i, j}] = v;
        (void)i; (void)j;
    }
    for (auto& [age, g] : grids) {
        p.ages.push_back(age);
        p.eta_grids.push_back(g);
        p.offsets.push_back(offsets.count(age) ? offsets[age] : 0.0);
    }
    for (std::size_t a = 0; a + 1 < p.ages.size(); ++a) {
        const auto& cells = trans.at(p.ages[a]);
        const int n = static_cast<int>(p.eta_grids[a].size());
        const int m = static_cast<int>(p.eta_grids[a + 1].size());
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(n, m);
        for (auto& [ij, v] : cells) T(ij.first, ij.second) = v;
        p.transitions.push_back(std::move(T));
        p.repaired_rows.push_back(0);
    }
    p.validate();
    return p;
}

}  // namespace hc
