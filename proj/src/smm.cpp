#include "hc/smm.hpp"

#include <algorithm>
#include <cmath>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/rng.hpp"

namespace hc {

void SmmConfig::validate() const {
    if (free_params.empty()) throw ConfigError("smm: no free parameters");
    for (const auto& p : free_params) {
        if (!(p.lo < p.hi)) throw ConfigError("smm: empty bounds for " + p.name);
        if (p.start < p.lo || p.start > p.hi)
            throw ConfigError("smm: start outside bounds for " + p.name);
    }
    if (n_histories <= 0) throw ConfigError("smm: n_histories must be positive");
}

double smm_loss(const std::vector<Moment>& sim, const std::vector<Moment>& data,
                const std::vector<double>& weights, int* skipped) {
    if (sim.size() != data.size() || weights.size() != data.size())
        throw ConfigError("smm_loss: moment sets misaligned");
    double loss = 0.0;
    int skip = 0;
    bool any = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (sim[i].kind != data[i].kind || sim[i].age != data[i].age ||
            sim[i].quartile != data[i].quartile)
            throw ConfigError("smm_loss: moment ids do not match at index " +
                              std::to_string(i));
        if (!sim[i].value || !data[i].value) {
            ++skip;
            continue;
        }
        any = true;
        const double d = *sim[i].value - *data[i].value;
        loss += weights[i] * d * d;
    }
    if (!any) throw EstimationError("smm_loss: no overlapping moments");
    if (skipped) *skipped = skip;
    return loss;
}

std::vector<double> smm_weights(const std::vector<Moment>& data, bool magnitude) {
    std::vector<double> w(data.size(), 1.0);
    if (magnitude)
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double m = data[i].value ? std::abs(*data[i].value) : 1.0;
            w[i] = 1.0 / std::max(1.0, m * m);
        }
    return w;
}

ModelParams apply_free_params(const ModelParams& base,
                              const std::vector<SmmParamSpec>& specs,
                              const std::vector<double>& x) {
    if (specs.size() != x.size())
        throw ConfigError("apply_free_params: size mismatch");
    ModelParams p = base;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const std::string& n = specs[i].name;
        const double v = x[i];
        if (n == "gamma") p.gamma = v;
        else if (n == "phi_B") p.phi_B = v;
        else if (n == "K") p.K = v;
        else if (n == "phi_w1") p.phi_w1 = v;
        else if (n == "phi_w2") p.phi_w2 = v;
        else if (n == "phi_w3") p.phi_w3 = v;
        else if (n.rfind("phi_h_", 0) == 0) {
            const std::size_t j = std::stoul(n.substr(6));
            if (j + 1 >= p.phi_h_vals.size())
                throw ConfigError("apply_free_params: bad knot index in " + n);
            p.phi_h_vals[j] = v;
        } else throw ConfigError("apply_free_params: unknown parameter " + n);
    }
    return p;
}

SmmResult smm_estimate(const SmmConfig& cfg, const std::vector<Moment>& data,
                       const SolverInputs& base, const InitialConditions& init) {
    cfg.validate();
    const std::vector<double> w = smm_weights(data, cfg.magnitude_weights);
    const int k = static_cast<int>(cfg.free_params.size());

    SmmResult res;
    res.loss = std::numeric_limits<double>::infinity();
    int evals = 0;

    auto objective = [&](const std::vector<double>& x) {
        ++evals;
        for (int i = 0; i < k; ++i)
            if (x[i] < cfg.free_params[i].lo || x[i] > cfg.free_params[i].hi)
                return 1e12;
        SolverInputs in = base;
        try {
            in.params = apply_free_params(base.params, cfg.free_params, x);
            in.params.validate();
        } catch (const ConfigError&) {
            return 1e12;
        }
        try {
            const Solution sol = solve(in);
            const Histories hs = simulate_histories(sol, in, init, cfg.n_histories,
                                                    cfg.sim_seed);
            return smm_loss(compute_moments(hs), data, w);
        } catch (const std::exception&) {
            return 1e12;
        }
    };

    std::vector<double> lo(k), hi(k);
    for (int i = 0; i < k; ++i) {
        lo[i] = cfg.free_params[i].lo;
        hi[i] = cfg.free_params[i].hi;
    }

    // Latin-hypercube starts: one stratum per start and dimension.
    std::vector<std::vector<double>> starts;
    {
        Rng rng(cfg.start_seed, 0);
        std::vector<std::vector<int>> strata(k);
        for (int i = 0; i < k; ++i) {
            for (int s = 0; s < cfg.n_starts; ++s) strata[i].push_back(s);
            for (int s = cfg.n_starts - 1; s > 0; --s)
                std::swap(strata[i][s], strata[i][rng.uniform_int(0, s)]);
        }
        std::vector<double> first(k);
        for (int i = 0; i < k; ++i) first[i] = cfg.free_params[i].start;
        starts.push_back(first);
        for (int s = 1; s < cfg.n_starts; ++s) {
            std::vector<double> x(k);
            for (int i = 0; i < k; ++i)
                x[i] = lo[i] + (hi[i] - lo[i]) * (strata[i][s] + rng.uniform()) /
                                   cfg.n_starts;
            starts.push_back(x);
        }
    }

    for (std::size_t si = 0; si < starts.size(); ++si) {
        std::vector<double> x = starts[si];
        AnnealOptions ao = cfg.anneal;
        ao.seed = cfg.start_seed + 1 + si;
        bool converged = false;
        int cycle = 0;
        for (; cycle < cfg.max_cycles; ++cycle) {
            const std::vector<double> x_before = x;
            const AnnealResult ar = simulated_annealing(objective, x, lo, hi, ao);
            SimplexResult sr = nelder_mead(objective, ar.x, cfg.simplex);
            x = sr.x;
            for (int i = 0; i < k; ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
            {
                std::vector<double> row = {static_cast<double>(res.trace.size())};
                row.insert(row.end(), x.begin(), x.end());
                row.push_back(std::min(sr.fval, res.loss));
                res.trace.push_back(row);
            }
            if (sr.fval < res.loss) {
                res.loss = sr.fval;
                res.x = x;
            }
            double dx = 0.0;
            for (int i = 0; i < k; ++i)
                dx = std::max(dx, std::abs(x[i] - x_before[i]) /
                                      std::max(1.0, std::abs(x_before[i])));
            if (dx < cfg.restart_tol) {
                converged = true;
                break;
            }
        }
        res.cycles += cycle + 1;
        res.converged = res.converged || converged;
    }
    res.evaluations = evals;
    res.params = apply_free_params(base.params, cfg.free_params, res.x);
    return res;
}

void save_trace(const SmmResult& res, const std::vector<SmmParamSpec>& specs,
                const std::string& path) {
    CsvTable t;
    t.columns = {"iteration"};
    for (const auto& s : specs) t.columns.push_back(s.name);
    t.columns.push_back("loss");
    for (const auto& row : res.trace) {
        std::vector<std::string> r;
        r.push_back(std::to_string(static_cast<long>(row[0])));
        for (std::size_t i = 1; i < row.size(); ++i) r.push_back(format_double(row[i]));
        t.rows.push_back(r);
    }
    write_csv(path, t);
}

}  // namespace hc
