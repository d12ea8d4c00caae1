#include "hc/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"

namespace hc {

namespace {

int cdf_invert(const Eigen::MatrixXd& trans, int row, double u) {
    double cum = 0.0;
    for (int j = 0; j < trans.cols(); ++j) {
        cum += trans(row, j);
        if (u < cum) return j;
    }
    return static_cast<int>(trans.cols()) - 1;
}

int weights_invert(const std::vector<double>& w, double u) {
    double cum = 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
        cum += w[j];
        if (u < cum) return static_cast<int>(j);
    }
    return static_cast<int>(w.size()) - 1;
}

int marginal_bin(double tau, int n) {
    return std::clamp(static_cast<int>(std::lround(tau * n - 0.5)), 0, n - 1);
}

}  // namespace

Histories simulate_histories(const Solution& sol, const SolverInputs& in,
                             const InitialConditions& init, int n,
                             std::uint64_t seed, const ShockSpec& shock) {
    if (sol.ages.front() != in.grid.first_age || sol.ages.back() != in.grid.last_age)
        throw ConfigError("simulate_histories: solution/grid ages misaligned");
    if (init.assets_pool.empty())
        throw ConfigError("simulate_histories: empty initial asset pool");
    if (init.eta_idx0 && (*init.eta_idx0 < 0 || *init.eta_idx0 >= sol.neta))
        throw ConfigError("simulate_histories: eta_idx0 out of range");
    if (init.theta_idx0 && (*init.theta_idx0 < 0 || *init.theta_idx0 >= sol.nth))
        throw ConfigError("simulate_histories: theta_idx0 out of range");
    const int neta = sol.neta, nth = sol.nth;
    const int first = in.grid.first_age, last = in.grid.last_age;

    Histories out;
    out.first_age = first;
    out.last_age = last;
    out.items.resize(n);
    for (int hid = 0; hid < n; ++hid) {
        Rng rng(seed, static_cast<std::uint64_t>(hid));
        History& hist = out.items[hid];
        hist.first_age = first;
        double a = init.assets_pool[rng.uniform_int(
            0, static_cast<int>(init.assets_pool.size()) - 1)];
        double p = init.pension0;
        int ieta = init.eta_idx0 ? *init.eta_idx0 : rng.uniform_int(0, neta - 1);
        int ith = init.theta_idx0 ? *init.theta_idx0 : rng.uniform_int(0, nth - 1);

        for (int age = first; age <= last; ++age) {
            const int t = age - first;
            const int ieps = weights_invert(in.health.eps_weights, rng.uniform());
            const PolicyChoice pc = policy_eval(sol, in, age, a, p, ith, ieta, ieps);
            const double h =
                in.health.eta_grids[in.health.age_index(age)][ieta] +
                in.health.eps_grid[ieps];
            hist.eta_idx.push_back(ieta);
            hist.eps_idx.push_back(ieps);
            hist.th_idx.push_back(ith);
            hist.h.push_back(h);
            hist.wage.push_back(pc.wage);
            hist.s.push_back(pc.s);
            hist.c.push_back(pc.c);
            hist.a.push_back(a);
            hist.p.push_back(p);
            hist.tax.push_back(pc.tax);
            hist.tr.push_back(pc.tr);

            // Fixed draw order so shock arms share randomness.
            const double u_death = rng.uniform();
            const double u_eta = rng.uniform();
            const double u_theta = rng.uniform();
            if (age == last) break;
            const double pdie =
                std::clamp(in.death(age, in.h_for_mortality(t, h)), 0.0, 1.0);
            if (u_death < pdie) {
                hist.death_age = age + 1;
                break;
            }
            const Eigen::MatrixXd& Peta =
                in.health.transitions[in.health.age_index(age)];
            if (age + 1 == 51 && shock.tau_init) {
                ieta = marginal_bin(*shock.tau_init, neta);
            } else if (age + 1 == 52 && shock.tau_shock) {
                ieta = cdf_invert(Peta, ieta, *shock.tau_shock);
            } else {
                ieta = cdf_invert(Peta, ieta, u_eta);
            }
            ith = cdf_invert(in.earnings.theta_trans, ith, u_theta);
            p = age < 65 ? p + in.params.c_p * pc.s * pc.wage : p;
            a = pc.a_next;
        }
    }
    return out;
}

std::vector<Moment> compute_moments(const Histories& hs) {
    if (hs.items.empty()) throw ConfigError("compute_moments: no histories");
    const int first = hs.first_age;

    // Per-age pools of (h, assets, hours) over the alive set.
    const int n_ages = hs.last_age - hs.first_age + 1;
    std::vector<std::vector<double>> h_pool(n_ages), a_pool(n_ages), s_pool(n_ages);
    for (const auto& hist : hs.items)
        for (int t = 0; t < hist.periods(); ++t) {
            h_pool[t].push_back(hist.h[t]);
            a_pool[t].push_back(hist.a[t]);
            s_pool[t].push_back(hist.s[t]);
        }

    std::vector<Moment> out;
    for (int age = 50; age <= 84; ++age) {
        const int t = age - first;
        Moment m{"assets", age, -1, std::nullopt, 0};
        if (t >= 0 && t < n_ages && !a_pool[t].empty()) {
            m.value = mean(a_pool[t]);
            m.count = static_cast<int>(a_pool[t].size());
        }
        out.push_back(m);
    }
    for (int age = 50; age <= 69; ++age) {
        const int t = age - first;
        Moment m{"hours", age, -1, std::nullopt, 0};
        if (t >= 0 && t < n_ages) {
            std::vector<double> w;
            for (double s : s_pool[t])
                if (s > 0.0) w.push_back(s);
            if (!w.empty()) {
                m.value = mean(w);
                m.count = static_cast<int>(w.size());
            }
        }
        out.push_back(m);
    }
    for (int age = 50; age <= 69; ++age) {
        const int t = age - first;
        std::array<double, 3> cuts{0.0, 0.0, 0.0};
        bool has = t >= 0 && t < n_ages && h_pool[t].size() >= 4;
        if (has) {
            std::vector<double> sorted = h_pool[t];
            std::sort(sorted.begin(), sorted.end());
            cuts = {quantile_sorted(sorted, 0.20), quantile_sorted(sorted, 0.30),
                    quantile_sorted(sorted, 0.50)};
        }
        for (int q = 0; q < 4; ++q) {
            Moment m{"participation", age, q, std::nullopt, 0};
            if (has) {
                int n_q = 0, n_work = 0;
                for (std::size_t i = 0; i < h_pool[t].size(); ++i) {
                    const double h = h_pool[t][i];
                    const int qi = h < cuts[0] ? 0 : (h < cuts[1] ? 1 : (h < cuts[2] ? 2 : 3));
                    if (qi != q) continue;
                    ++n_q;
                    if (s_pool[t][i] > 0.0) ++n_work;
                }
                if (n_q > 0) {
                    m.value = static_cast<double>(n_work) / n_q;
                    m.count = n_q;
                }
            }
            out.push_back(m);
        }
    }
    if (out.size() != 135)
        throw NumericalError("compute_moments: expected 135 moments");
    return out;
}

namespace {

struct Profiles {
    std::vector<double> health, assets, participation, hours, cov_assets;
};

Profiles profiles_of(const Histories& hs) {
    const int n_ages = hs.last_age - hs.first_age + 1;
    Profiles p;
    for (int t = 0; t < n_ages; ++t) {
        std::vector<double> h, a, s;
        for (const auto& hist : hs.items)
            if (t < hist.periods()) {
                h.push_back(hist.h[t]);
                a.push_back(hist.a[t]);
                s.push_back(hist.s[t]);
            }
        if (h.empty()) {
            p.health.push_back(0); p.assets.push_back(0);
            p.participation.push_back(0); p.hours.push_back(0);
            p.cov_assets.push_back(0);
            continue;
        }
        p.health.push_back(mean(h));
        const double am = mean(a);
        p.assets.push_back(am);
        p.cov_assets.push_back(am != 0.0 && a.size() > 1 ? stddev(a) / am : 0.0);
        int n_work = 0;
        double sh = 0.0;
        for (double v : s)
            if (v > 0.0) { ++n_work; sh += v; }
        p.participation.push_back(static_cast<double>(n_work) / s.size());
        p.hours.push_back(n_work > 0 ? sh / n_work : 0.0);
    }
    return p;
}

}  // namespace

DiffProfiles counterfactual_shock(const ShockExperiment& exp, const Solution& sol,
                                  const SolverInputs& in) {
    InitialConditions init;
    init.assets_pool = {exp.assets0};
    const Histories arm = simulate_histories(
        sol, in, init, exp.n_histories, exp.seed,
        ShockSpec{exp.tau_init, exp.tau_shock});
    const Histories med = simulate_histories(sol, in, init, exp.n_histories,
                                             exp.seed, ShockSpec{exp.tau_init, 0.5});
    const Profiles pa = profiles_of(arm), pm = profiles_of(med);

    DiffProfiles out;
    for (int age = in.grid.first_age; age <= in.grid.last_age; ++age)
        out.ages.push_back(age);
    out.health = pa.health;
    out.assets = pa.assets;
    out.participation = pa.participation;
    out.hours = pa.hours;
    out.cov_assets = pa.cov_assets;
    out.cov_assets_median = pm.cov_assets;
    for (std::size_t t = 0; t < out.ages.size(); ++t) {
        out.d_health.push_back(pa.health[t] - pm.health[t]);
        out.d_assets.push_back(pa.assets[t] - pm.assets[t]);
        out.d_participation.push_back(pa.participation[t] - pm.participation[t]);
        out.d_hours.push_back(pa.hours[t] - pm.hours[t]);
    }
    return out;
}

namespace {

// Weighted percentile of h = eta + eps implied by the discretized process.
std::vector<double> health_percentile_by_age(const DiscreteHealthProcess& hp,
                                             double percentile) {
    std::vector<double> out;
    const int neta = static_cast<int>(hp.eta_grids[0].size());
    for (std::size_t t = 0; t < hp.ages.size(); ++t) {
        std::vector<std::pair<double, double>> vw;
        for (int i = 0; i < neta; ++i)
            for (std::size_t j = 0; j < hp.eps_grid.size(); ++j)
                vw.push_back({hp.eta_grids[t][i] + hp.eps_grid[j],
                              hp.eps_weights[j] / neta});
        std::sort(vw.begin(), vw.end());
        double cum = 0.0;
        double v = vw.back().first;
        for (const auto& [x, w] : vw) {
            cum += w;
            if (cum >= percentile) { v = x; break; }
        }
        out.push_back(v);
    }
    return out;
}

}  // namespace

OutcomeRow decompose_channels(const std::set<Channel>& channels_off,
                              double percentile, const SolverInputs& base,
                              const InitialConditions& init, int n_histories,
                              std::uint64_t seed, const OutcomeRow* baseline) {
    if (percentile <= 0.0 || percentile >= 1.0)
        throw ConfigError("decompose_channels: percentile must lie in (0,1)");
    SolverInputs mod = base;
    std::vector<double> h_p = health_percentile_by_age(base.health, percentile);
    // The health chain may extend past the model horizon; pins are indexed
    // by age - first_age over the grid's span only.
    h_p.resize(static_cast<std::size_t>(base.grid.last_age - base.grid.first_age + 1),
               h_p.back());
    const bool all_off = channels_off.size() == 3;
    InitialConditions sim_init = init;
    if (all_off) {
        // The initial health state is meaningless once the dimension is
        // collapsed below.
        sim_init.eta_idx0.reset();
        // Health is fully neutral: collapse the health dimension so outcomes
        // are exactly independent of health draws.
        DiscreteHealthProcess hp;
        hp.biennial = false;
        hp.ages = base.health.ages;
        hp.eta_grids.assign(hp.ages.size(), {0.0});
        hp.eps_grid = {0.0};
        hp.eps_weights = {1.0};
        hp.offsets.assign(hp.ages.size(), 0.0);
        hp.transitions.assign(hp.ages.size() - 1, Eigen::MatrixXd::Ones(1, 1));
        hp.repaired_rows.assign(hp.ages.size() - 1, 0);
        mod.health = hp;
    }
    if (channels_off.count(Channel::Mortality)) mod.pin_mortality_h = h_p;
    if (channels_off.count(Channel::TimeCost)) mod.pin_timecost_h = h_p;
    if (channels_off.count(Channel::Wages)) mod.pin_wage_h = h_p;

    const Solution sol = solve(mod);
    const Histories hs = simulate_histories(sol, mod, sim_init, n_histories, seed);

    OutcomeRow row;
    std::string label;
    if (channels_off.empty()) label = "baseline";
    else {
        for (Channel c : channels_off)
            label += (label.empty() ? "" : "+") +
                     std::string(c == Channel::Mortality ? "mortality"
                                 : c == Channel::TimeCost ? "time_cost" : "wages");
    }
    row.label = label;

    std::vector<double> assets, income, hours;
    int n_5069 = 0, n_work = 0;
    for (const auto& hist : hs.items)
        for (int t = 0; t < hist.periods(); ++t) {
            const int age = hs.first_age + t;
            if (age <= 84) assets.push_back(hist.a[t]);
            const bool young = age < 65;
            const double disp = hist.s[t] * hist.wage[t] *
                                    (young ? 1.0 - base.params.c_p : 1.0) +
                                base.params.r * hist.a[t] +
                                (young ? 0.0 : base.params.r_p * hist.p[t]) -
                                hist.tax[t] + hist.tr[t];
            income.push_back(disp);
            if (age <= 69) {
                ++n_5069;
                if (hist.s[t] > 0.0) {
                    ++n_work;
                    hours.push_back(hist.s[t]);
                }
            }
        }
    row.assets = mean(assets);
    row.income = mean(income);
    row.employment = n_5069 > 0 ? static_cast<double>(n_work) / n_5069 : 0.0;
    row.hours = hours.empty() ? 0.0 : mean(hours);
    if (baseline) {
        auto pct = [](double v, double b) { return b != 0.0 ? 100.0 * (v - b) / b : 0.0; };
        row.pct_assets = pct(row.assets, baseline->assets);
        row.pct_income = pct(row.income, baseline->income);
        row.pct_employment = pct(row.employment, baseline->employment);
        row.pct_hours = pct(row.hours, baseline->hours);
    }
    return row;
}

namespace {

// One-step Bellman value at age 51 with the 51->52 eta transition replaced
// by `eta_row`; the age-52 values come from the solved Solution.
double state_value_51(const Solution& sol, const SolverInputs& in, double a,
                      double p, int ith, int ieta, int ieps,
                      const Eigen::VectorXd& eta_row) {
    const ModelParams& par = in.params;
    const StateGrid& g = in.grid;
    const int age = 51, t = sol.age_index(51);
    const int hidx = in.health.age_index(age);
    const double h = in.health.eta_grids[hidx][ieta] + in.health.eps_grid[ieps];
    const double phi_h = time_cost(in.h_for_timecost(t, h), par);
    const double pi = 1.0 - std::clamp(in.death(age, in.h_for_mortality(t, h)), 0.0, 1.0);
    const double wage =
        wage_offer(in.earnings, in.h_for_wage(t, h), age, in.earnings.theta_grid[ith]);
    const int na = static_cast<int>(g.assets.size());
    const int neps = sol.neps, neta = sol.neta, nth = sol.nth;

    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t is = 0; is < g.hours.size(); ++is) {
        const double s = g.hours[is];
        if (s > 0.0 && wage <= 0.0) continue;
        const double l = par.L - s - phi_h;
        if (l <= 0.0) continue;
        const NetResources nr = net_resources(a, s, wage, p, age, par);
        const double avail = nr.resources - work_cost(s, age, par);
        const double pnext = p + par.c_p * s * wage;
        for (int ja = 0; ja < na; ++ja) {
            const double c = avail - g.assets[ja];
            if (c < par.cbar - 1e-9) break;
            double ev = 0.0;
            for (int jth = 0; jth < nth; ++jth) {
                const double wth = in.earnings.theta_trans(ith, jth);
                if (wth == 0.0) continue;
                for (int jeta = 0; jeta < neta; ++jeta) {
                    if (eta_row(jeta) == 0.0) continue;
                    double vbar = 0.0;
                    for (int jeps = 0; jeps < neps; ++jeps)
                        vbar += in.health.eps_weights[jeps] *
                                value_eval(sol, in, 52, g.assets[ja], pnext, jth,
                                           jeta, jeps);
                    ev += wth * eta_row(jeta) * vbar;
                }
            }
            const double cont =
                pi * ev + (1.0 - pi) * bequest(g.assets[ja], par.phi_B, par.K,
                                               par.nu, par.gamma);
            const double v = utility(c, l, par.gamma, par.nu) + par.beta * cont;
            if (v > best) best = v;
        }
    }
    if (!std::isfinite(best))
        throw NumericalError("willingness_to_pay: no feasible age-51 choice");
    return best;
}

double expected_value_51(const Solution& sol, const SolverInputs& in, double a,
                         double p, int ieta, std::optional<double> tau_shock) {
    const int neta = sol.neta, nth = sol.nth, neps = sol.neps;
    const Eigen::MatrixXd& Peta = in.health.transitions[in.health.age_index(51)];
    Eigen::VectorXd row = Peta.row(ieta).transpose();
    if (tau_shock) {
        const int j = cdf_invert(Peta, ieta, *tau_shock);
        row = Eigen::VectorXd::Zero(neta);
        row(j) = 1.0;
    }
    double v = 0.0;
    for (int ith = 0; ith < nth; ++ith)
        for (int ieps = 0; ieps < neps; ++ieps)
            v += (1.0 / nth) * in.health.eps_weights[ieps] *
                 state_value_51(sol, in, a, p, ith, ieta, ieps, row);
    return v;
}

}  // namespace

double willingness_to_pay(const Solution& sol, const SolverInputs& in,
                          double tau_init, std::optional<double> tau_shock,
                          std::optional<double> tau_shock_comparison, double a0,
                          double p0) {
    if (tau_init <= 0.0 || tau_init >= 1.0)
        throw ConfigError("willingness_to_pay: tau_init must lie in (0,1)");
    const int ieta = marginal_bin(tau_init, sol.neta);
    const double v_comp = expected_value_51(sol, in, a0, p0, ieta, tau_shock_comparison);
    auto f = [&](double delta) {
        return expected_value_51(sol, in, a0 + delta, p0, ieta, tau_shock) - v_comp;
    };
    if (f(0.0) >= 0.0) return 0.0;
    double lo = 0.0, hi = in.grid.assets.back() - a0;
    if (hi <= 0.0 || f(hi) < 0.0)
        throw NumericalError("willingness_to_pay: transfer exceeds asset grid bound " +
                             std::to_string(in.grid.assets.back()));
    while (hi - lo > 1.0) {
        const double mid = 0.5 * (lo + hi);
        (f(mid) >= 0.0 ? hi : lo) = mid;
    }
    return 0.5 * (lo + hi);
}

InequalityTable inequality_metrics(const Histories& hs) {
    if (hs.items.empty()) throw ConfigError("inequality_metrics: no histories");
    InequalityTable out;

    std::vector<double> life_assets, earn65, log_earn;
    int zeros = 0;
    for (const auto& hist : hs.items) {
        if (hist.periods() > 0) life_assets.push_back(mean(hist.a));
        double cum = 0.0;
        for (int t = 0; t < hist.periods(); ++t)
            if (hs.first_age + t < 65) cum += hist.s[t] * hist.wage[t];
        earn65.push_back(cum);
        if (cum > 0.0) log_earn.push_back(std::log(cum));
        else ++zeros;
    }
    auto ratio_8020 = [](std::vector<double> v) -> std::optional<double> {
        if (v.size() < 5) return std::nullopt;
        std::sort(v.begin(), v.end());
        const double q20 = quantile_sorted(v, 0.2), q80 = quantile_sorted(v, 0.8);
        if (q20 <= 0.0) return std::nullopt;
        return q80 / q20;
    };
    out.assets_8020 = ratio_8020(life_assets);
    out.assets_sd = life_assets.size() > 1 ? stddev(life_assets) : 0.0;
    out.earn65_8020 = ratio_8020(earn65);
    if (log_earn.size() > 1) out.earn65_sdlog = stddev(log_earn);
    out.earn65_zero_share = static_cast<double>(zeros) / hs.items.size();

    const Profiles p = profiles_of(hs);
    for (int age = hs.first_age; age <= hs.last_age; ++age) out.ages.push_back(age);
    out.cov_assets = p.cov_assets;
    return out;
}

void save_moments(const std::vector<Moment>& m, const std::string& path) {
    CsvTable t;
    t.columns = {"moment_id", "kind", "age", "quartile", "value", "count"};
    for (std::size_t i = 0; i < m.size(); ++i)
        t.rows.push_back({std::to_string(i), m[i].kind, std::to_string(m[i].age),
                          std::to_string(m[i].quartile),
                          m[i].value ? format_double(*m[i].value) : "",
                          std::to_string(m[i].count)});
    write_csv(path, t);
}

void save_diff_profiles(const DiffProfiles& d, const std::string& arm_label,
                        const std::string& path) {
    CsvTable t;
    t.columns = {"arm", "age", "variable", "value"};
    auto push = [&](int age, const std::string& var, double v) {
        t.rows.push_back({arm_label, std::to_string(age), var, format_double(v)});
    };
    for (std::size_t i = 0; i < d.ages.size(); ++i) {
        push(d.ages[i], "d_health", d.d_health[i]);
        push(d.ages[i], "d_assets", d.d_assets[i]);
        push(d.ages[i], "d_participation", d.d_participation[i]);
        push(d.ages[i], "d_hours", d.d_hours[i]);
        push(d.ages[i], "health", d.health[i]);
        push(d.ages[i], "assets", d.assets[i]);
        push(d.ages[i], "participation", d.participation[i]);
        push(d.ages[i], "hours", d.hours[i]);
        push(d.ages[i], "cov_assets", d.cov_assets[i]);
        push(d.ages[i], "cov_assets_median", d.cov_assets_median[i]);
    }
    write_csv(path, t);
}

void save_outcomes(const std::vector<OutcomeRow>& rows, const std::string& path) {
    CsvTable t;
    t.columns = {"label", "assets", "income", "employment", "hours",
                 "pct_assets", "pct_income", "pct_employment", "pct_hours"};
    for (const auto& r : rows)
        t.rows.push_back({r.label, format_double(r.assets), format_double(r.income),
                          format_double(r.employment), format_double(r.hours),
                          format_double(r.pct_assets), format_double(r.pct_income),
                          format_double(r.pct_employment), format_double(r.pct_hours)});
    write_csv(path, t);
}

void save_inequality(const InequalityTable& tab, const std::string& path) {
    CsvTable t;
    t.columns = {"key", "age", "value"};
    auto push = [&](const std::string& k, int age, std::optional<double> v) {
        t.rows.push_back({k, std::to_string(age), v ? format_double(*v) : ""});
    };
    push("assets_8020", -1, tab.assets_8020);
    push("assets_sd", -1, tab.assets_sd);
    push("earn65_8020", -1, tab.earn65_8020);
    push("earn65_sdlog", -1, tab.earn65_sdlog);
    push("earn65_zero_share", -1, tab.earn65_zero_share);
    for (std::size_t i = 0; i < tab.ages.size(); ++i)
        push("cov_assets", tab.ages[i], tab.cov_assets[i]);
    write_csv(path, t);
}

}  // namespace hc
