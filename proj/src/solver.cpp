#include "hc/solver.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/stats.hpp"

namespace hc {

double TaxSchedule::on_income(double y) const {
    if (y <= 0.0) return 0.0;
    double tax = 0.0, lo = 0.0;
    for (std::size_t b = 0; b < thresholds.size(); ++b) {
        if (y <= thresholds[b]) return tax + rates[b] * (y - lo);
        tax += rates[b] * (thresholds[b] - lo);
        lo = thresholds[b];
    }
    return tax + rates.back() * (y - lo);
}

void TaxSchedule::validate() const {
    if (rates.size() != thresholds.size() + 1)
        throw ConfigError("tax: need one more rate than thresholds");
    for (std::size_t i = 1; i < thresholds.size(); ++i)
        if (thresholds[i] <= thresholds[i - 1])
            throw ConfigError("tax: thresholds not increasing");
    for (double r : rates)
        if (r < 0.0 || r >= 1.0) throw ConfigError("tax: rates must lie in [0,1)");
}

void ModelParams::validate() const {
    if (nu == 1.0) throw ConfigError("params: nu must differ from 1");
    if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("params: gamma must lie in (0,1)");
    if (L <= 0.0) throw ConfigError("params: L must be positive");
    if (K <= 0.0) throw ConfigError("params: K must be positive");
    if (h_knots.size() != phi_h_vals.size() || h_knots.size() < 2)
        throw ConfigError("params: time-cost knots misaligned");
    for (std::size_t i = 1; i < h_knots.size(); ++i)
        if (h_knots[i] <= h_knots[i - 1])
            throw ConfigError("params: time-cost knots not increasing");
    for (double v : phi_h_vals)
        if (v < 0.0 || v >= L) throw ConfigError("params: phi_h values must lie in [0, L)");
    if (phi_h_vals.back() != 0.0)
        throw ConfigError("params: phi_h at the top knot must be 0");
    tax.validate();
}

double utility(double c, double l, double gamma, double nu) {
    if (c <= 0.0 || l <= 0.0)
        throw NumericalError("utility: non-positive consumption or leisure");
    return std::pow(std::pow(c, gamma) * std::pow(l, 1.0 - gamma), 1.0 - nu) /
           (1.0 - nu);
}

double bequest(double a, double phi_B, double K, double nu, double gamma) {
    if (K <= 0.0) throw NumericalError("bequest: K must be positive");
    if (phi_B == 0.0) return 0.0;
    return phi_B * std::pow(a + K, (1.0 - nu) * gamma) / (1.0 - nu);
}

double time_cost(double h, const ModelParams& params, bool* clamped) {
    const double lo = params.h_knots.front(), hi = params.h_knots.back();
    if (clamped) *clamped = h < lo || h > hi;
    return interp_linear(params.h_knots, params.phi_h_vals, std::clamp(h, lo, hi));
}

double work_cost(double s, double age, const ModelParams& params) {
    if (s <= 0.0) return 0.0;
    double cost = params.phi_w1 + params.phi_w2 * age;
    if (age >= 65.0 && s > 1250.0) cost += params.phi_w3 * s;
    return cost;
}

NetResources net_resources(double a, double s, double wage, double p, double age,
                           const ModelParams& params) {
    const bool young = age < 65.0;
    const double labor = s * wage * (young ? 1.0 - params.c_p : 1.0);
    const double pension = young ? 0.0 : params.r_p * p;
    const double capital = params.r * a;
    NetResources out;
    out.gross = a + labor + capital + pension;
    out.tax = params.tax.on_income(labor + pension) + params.tax.capital_rate * capital;
    out.tr = std::max(0.0, params.cbar - (out.gross - out.tax));
    out.resources = out.gross - out.tax + out.tr;
    return out;
}

void StateGrid::validate() const {
    if (assets.empty() || assets.front() != 0.0)
        throw ConfigError("grid: asset grid must start at 0");
    for (std::size_t i = 1; i < assets.size(); ++i)
        if (assets[i] <= assets[i - 1]) throw ConfigError("grid: assets not increasing");
    for (std::size_t i = 1; i < pension.size(); ++i)
        if (pension[i] <= pension[i - 1]) throw ConfigError("grid: pension not increasing");
    if (hours.empty() || hours.front() != 0.0)
        throw ConfigError("grid: hours grid must start at 0");
    if (last_age <= first_age) throw ConfigError("grid: empty age range");
}

StateGrid StateGrid::standard(int n_assets, int n_pension, double asset_max,
                              double pension_max) {
    StateGrid g;
    for (int i = 0; i < n_assets; ++i) {
        const double x = static_cast<double>(i) / (n_assets - 1);
        g.assets.push_back(asset_max * x * x);
    }
    for (int i = 0; i < n_pension; ++i)
        g.pension.push_back(pension_max * i / (n_pension - 1));
    return g;
}

void SolverInputs::validate() const {
    params.validate();
    grid.validate();
    health.validate();
    earnings.validate();
    if (health.biennial) throw ConfigError("solver: health process must be annual");
    if (health.ages.front() != grid.first_age || health.ages.back() < grid.last_age)
        throw ConfigError("solver: health process does not cover the age range");
    if (earnings.theta_grid.empty())
        throw ConfigError("solver: earnings theta chain not built");
    if (!death) throw ConfigError("solver: death probability missing");
    const std::size_t n_ages = static_cast<std::size_t>(grid.last_age - grid.first_age + 1);
    for (const auto* pin : {&pin_mortality_h, &pin_timecost_h, &pin_wage_h})
        if (*pin && (*pin)->size() != n_ages)
            throw ConfigError("solver: pinned health vector must cover all ages");
}

int Solution::age_index(int age) const {
    const auto it = std::find(ages.begin(), ages.end(), age);
    if (it == ages.end())
        throw ConfigError("solution: age " + std::to_string(age) + " not covered");
    return static_cast<int>(it - ages.begin());
}

namespace {

double interp_pension(const Eigen::MatrixXd& ev, int ia,
                      const std::vector<double>& pgrid, double p) {
    const int np = static_cast<int>(pgrid.size());
    if (np == 1 || p <= pgrid.front()) return ev(ia, 0);
    if (p >= pgrid.back()) return ev(ia, np - 1);
    const auto it = std::upper_bound(pgrid.begin(), pgrid.end(), p);
    const int j = static_cast<int>(it - pgrid.begin()) - 1;
    const double w = (p - pgrid[j]) / (pgrid[j + 1] - pgrid[j]);
    return (1.0 - w) * ev(ia, j) + w * ev(ia, j + 1);
}

}  // namespace

Solution solve(const SolverInputs& in) {
    in.validate();
    const ModelParams& par = in.params;
    const StateGrid& g = in.grid;
    const int na = static_cast<int>(g.assets.size());
    const int np = static_cast<int>(g.pension.size());
    const int nth = static_cast<int>(in.earnings.theta_grid.size());
    const int neta = static_cast<int>(in.health.eta_grids[0].size());
    const int neps = static_cast<int>(in.health.eps_grid.size());
    const int T = g.last_age - g.first_age;  // index of terminal age

    Solution sol;
    sol.na = na; sol.np = np; sol.nth = nth; sol.neta = neta; sol.neps = neps;
    for (int age = g.first_age; age <= g.last_age; ++age) sol.ages.push_back(age);
    const std::size_t n_states =
        static_cast<std::size_t>(na) * np * nth * neta * neps;
    sol.V.assign(T + 1, std::vector<double>(n_states, 0.0));
    sol.pol_a.assign(T + 1, std::vector<int>(n_states, 0));
    sol.pol_s.assign(T + 1, std::vector<int>(n_states, 0));
    sol.pol_c.assign(T + 1, std::vector<double>(n_states, 0.0));

    std::vector<double> bq(na);
    for (int i = 0; i < na; ++i)
        bq[i] = bequest(g.assets[i], par.phi_B, par.K, par.nu, par.gamma);

    for (int t = T; t >= 0; --t) {
        const int age = g.first_age + t;
        const int hidx = in.health.age_index(age);

        // Expected continuation EV[ith][ieta](ia', ip'), integrating the
        // next period's eps and transiting theta and eta.
        std::vector<Eigen::MatrixXd> EV;
        if (t < T) {
            std::vector<Eigen::MatrixXd> vbar(
                static_cast<std::size_t>(nth) * neta, Eigen::MatrixXd::Zero(na, np));
            const std::vector<double>& vnext = sol.V[t + 1];
            for (int ia = 0; ia < na; ++ia)
                for (int ip = 0; ip < np; ++ip)
                    for (int ith = 0; ith < nth; ++ith)
                        for (int ieta = 0; ieta < neta; ++ieta) {
                            double acc = 0.0;
                            for (int ieps = 0; ieps < neps; ++ieps)
                                acc += in.health.eps_weights[ieps] *
                                       vnext[sol.index(ia, ip, ith, ieta, ieps)];
                            vbar[static_cast<std::size_t>(ith) * neta + ieta](ia, ip) = acc;
                        }
            const Eigen::MatrixXd& Pth = in.earnings.theta_trans;
            const Eigen::MatrixXd& Peta = in.health.transitions[hidx];
            EV.assign(static_cast<std::size_t>(nth) * neta,
                      Eigen::MatrixXd::Zero(na, np));
            for (int ith = 0; ith < nth; ++ith)
                for (int ieta = 0; ieta < neta; ++ieta) {
                    Eigen::MatrixXd& m = EV[static_cast<std::size_t>(ith) * neta + ieta];
                    for (int jth = 0; jth < nth; ++jth) {
                        const double wth = Pth(ith, jth);
                        if (wth == 0.0) continue;
                        for (int jeta = 0; jeta < neta; ++jeta) {
                            const double w = wth * Peta(ieta, jeta);
                            if (w == 0.0) continue;
                            m += w * vbar[static_cast<std::size_t>(jth) * neta + jeta];
                        }
                    }
                }
        }

        const int ns = age < 70 ? static_cast<int>(g.hours.size()) : 1;
        for (int ith = 0; ith < nth; ++ith) {
            const double theta = in.earnings.theta_grid[ith];
            for (int ieta = 0; ieta < neta; ++ieta) {
                for (int ieps = 0; ieps < neps; ++ieps) {
                    const double h = in.health.eta_grids[hidx][ieta] +
                                     in.health.eps_grid[ieps];
                    const double phi_h = time_cost(in.h_for_timecost(t, h), par);
                    const double pi =
                        t == T ? 0.0
                               : 1.0 - std::clamp(
                                            in.death(age, in.h_for_mortality(t, h)),
                                            0.0, 1.0);
                    const double wage =
                        wage_offer(in.earnings, in.h_for_wage(t, h), age, theta);
                    for (int ia = 0; ia < na; ++ia) {
                        for (int ip = 0; ip < np; ++ip) {
                            double best_v = -std::numeric_limits<double>::infinity();
                            int best_ia = -1, best_is = -1;
                            double best_c = 0.0;
                            for (int is = 0; is < ns; ++is) {
                                const double s = g.hours[is];
                                if (s > 0.0 && wage <= 0.0) continue;
                                const double l = par.L - s - phi_h;
                                if (l <= 0.0) continue;
                                const NetResources nr = net_resources(
                                    g.assets[ia], s, wage, g.pension[ip], age, par);
                                const double avail =
                                    nr.resources - work_cost(s, age, par);
                                const double pnext =
                                    age < 65 ? g.pension[ip] + par.c_p * s * wage
                                             : g.pension[ip];
                                const std::size_t evk =
                                    static_cast<std::size_t>(ith) * neta + ieta;
                                for (int ja = 0; ja < na; ++ja) {
                                    const double c = avail - g.assets[ja];
                                    if (c < par.cbar - 1e-9) break;
                                    double cont = (1.0 - pi) * bq[ja];
                                    if (pi > 0.0)
                                        cont += pi * interp_pension(EV[evk], ja,
                                                                    g.pension, pnext);
                                    const double v =
                                        utility(c, l, par.gamma, par.nu) +
                                        par.beta * cont;
                                    if (v > best_v ||
                                        (v == best_v &&
                                         (ja < best_ia ||
                                          (ja == best_ia && is < best_is)))) {
                                        best_v = v;
                                        best_ia = ja;
                                        best_is = is;
                                        best_c = c;
                                    }
                                }
                            }
                            if (best_ia < 0)
                                throw NumericalError(
                                    "solve: no feasible choice at age " +
                                    std::to_string(age) + " state (" +
                                    std::to_string(ia) + "," + std::to_string(ip) +
                                    "," + std::to_string(ith) + "," +
                                    std::to_string(ieta) + "," +
                                    std::to_string(ieps) + ")");
                            const std::size_t k = sol.index(ia, ip, ith, ieta, ieps);
                            sol.V[t][k] = best_v;
                            sol.pol_a[t][k] = best_ia;
                            sol.pol_s[t][k] = best_is;
                            sol.pol_c[t][k] = best_c;
                        }
                    }
                }
            }
        }
    }
    return sol;
}

namespace {

struct Corner {
    int ia, ip;
    double w;
};

// Bilinear corner weights over (assets, pension) with clamping.
std::array<Corner, 4> corners(const StateGrid& g, double a, double p, bool* clamped) {
    auto bracket = [](const std::vector<double>& grid, double x, bool* cl) {
        if (x < grid.front() - 1e-12 || x > grid.back() + 1e-12)
            if (cl) *cl = true;
        if (x <= grid.front()) return std::pair<int, double>{0, 0.0};
        if (x >= grid.back())
            return std::pair<int, double>{static_cast<int>(grid.size()) - 2, 1.0};
        const auto it = std::upper_bound(grid.begin(), grid.end(), x);
        const int j = static_cast<int>(it - grid.begin()) - 1;
        return std::pair<int, double>{j, (x - grid[j]) / (grid[j + 1] - grid[j])};
    };
    if (clamped) *clamped = false;
    const auto [ja, wa] = bracket(g.assets, a, clamped);
    std::pair<int, double> jp{0, 0.0};
    if (g.pension.size() > 1) jp = bracket(g.pension, p, clamped);
    return {Corner{ja, jp.first, (1 - wa) * (1 - jp.second)},
            Corner{ja + 1, jp.first, wa * (1 - jp.second)},
            Corner{ja, std::min(jp.first + 1, static_cast<int>(g.pension.size()) - 1),
                   (1 - wa) * jp.second},
            Corner{ja + 1,
                   std::min(jp.first + 1, static_cast<int>(g.pension.size()) - 1),
                   wa * jp.second}};
}

}  // namespace

double value_eval(const Solution& sol, const SolverInputs& in, int age, double a,
                  double p, int ith, int ieta, int ieps) {
    const int t = sol.age_index(age);
    const auto cs = corners(in.grid, a, p, nullptr);
    double v = 0.0;
    for (const auto& c : cs)
        v += c.w * sol.V[t][sol.index(c.ia, c.ip, ith, ieta, ieps)];
    return v;
}

PolicyChoice policy_eval(const Solution& sol, const SolverInputs& in, int age,
                         double a, double p, int ith, int ieta, int ieps,
                         bool* clamped) {
    const int t = sol.age_index(age);
    const auto cs = corners(in.grid, a, p, clamped);

    double a_next = 0.0;
    const Corner* top = &cs[0];
    for (const auto& c : cs) {
        a_next += c.w * in.grid.assets[sol.pol_a[t][sol.index(c.ia, c.ip, ith, ieta,
                                                              ieps)]];
        if (c.w > top->w) top = &c;
    }
    const int is = sol.pol_s[t][sol.index(top->ia, top->ip, ith, ieta, ieps)];

    PolicyChoice out;
    out.s = in.grid.hours[is];
    const int hidx = in.health.age_index(age);
    const double h = in.health.eta_grids[hidx][ieta] + in.health.eps_grid[ieps];
    out.wage = wage_offer(in.earnings, in.h_for_wage(t, h), age,
                          in.earnings.theta_grid[ith]);
    if (out.s > 0.0 && out.wage <= 0.0) out.s = 0.0;
    const NetResources nr = net_resources(a, out.s, out.wage, p, age, in.params);
    out.tax = nr.tax;
    out.tr = nr.tr;
    const double avail = nr.resources - work_cost(out.s, age, in.params);
    // Keep consumption at or above the floor by cutting savings if needed.
    a_next = std::clamp(a_next, 0.0, std::max(0.0, avail - in.params.cbar));
    out.a_next = a_next;
    out.c = avail - a_next;
    return out;
}

void save_params(const ModelParams& p, const std::string& path) {
    CsvTable t;
    t.columns = {"key", "value"};
    auto push = [&](const std::string& k, double v) {
        t.rows.push_back({k, format_double(v)});
    };
    t.rows.push_back({"schema", "params_v1"});
    push("L", p.L); push("cbar", p.cbar); push("nu", p.nu);
    push("r_p", p.r_p); push("c_p", p.c_p); push("beta", p.beta); push("r", p.r);
    push("gamma", p.gamma); push("phi_B", p.phi_B); push("K", p.K);
    for (std::size_t i = 0; i < p.h_knots.size(); ++i) {
        push("h_knot_" + std::to_string(i), p.h_knots[i]);
        push("phi_h_" + std::to_string(i), p.phi_h_vals[i]);
    }
    push("phi_w1", p.phi_w1); push("phi_w2", p.phi_w2); push("phi_w3", p.phi_w3);
    for (std::size_t i = 0; i < p.tax.thresholds.size(); ++i)
        push("tax_threshold_" + std::to_string(i), p.tax.thresholds[i]);
    for (std::size_t i = 0; i < p.tax.rates.size(); ++i)
        push("tax_rate_" + std::to_string(i), p.tax.rates[i]);
    push("tax_capital_rate", p.tax.capital_rate);
    write_csv(path, t);
}

ModelParams load_params(const std::string& path) {
    const CsvTable t = read_csv(path);
    ModelParams p;
    std::map<int, double> knots, phih, thr, rates;
    bool schema_ok = false;
    for (const auto& row : t.rows) {
        const std::string& k = row[0];
        if (k == "schema") { schema_ok = row[1] == "params_v1"; continue; }
        const double v = std::stod(row[1]);
        if (k == "L") p.L = v;
        else if (k == "cbar") p.cbar = v;
        else if (k == "nu") p.nu = v;
        else if (k == "r_p") p.r_p = v;
        else if (k == "c_p") p.c_p = v;
        else if (k == "beta") p.beta = v;
        else if (k == "r") p.r = v;
        else if (k == "gamma") p.gamma = v;
        else if (k == "phi_B") p.phi_B = v;
        else if (k == "K") p.K = v;
        else if (k == "phi_w1") p.phi_w1 = v;
        else if (k == "phi_w2") p.phi_w2 = v;
        else if (k == "phi_w3") p.phi_w3 = v;
        else if (k == "tax_capital_rate") p.tax.capital_rate = v;
        else if (k.rfind("h_knot_", 0) == 0) knots[std::stoi(k.substr(7))] = v;
        else if (k.rfind("phi_h_", 0) == 0) phih[std::stoi(k.substr(6))] = v;
        else if (k.rfind("tax_threshold_", 0) == 0) thr[std::stoi(k.substr(14))] = v;
        else if (k.rfind("tax_rate_", 0) == 0) rates[std::stoi(k.substr(9))] = v;
        else throw LoadError(path + ": unknown key " + k);
    }
    if (!schema_ok) throw LoadError(path + ": not a params_v1 file");
    if (!knots.empty()) {
        p.h_knots.clear(); p.phi_h_vals.clear();
        for (const auto& [i, v] : knots) { (void)i; p.h_knots.push_back(v); }
        for (const auto& [i, v] : phih) { (void)i; p.phi_h_vals.push_back(v); }
    }
    if (!thr.empty() || !rates.empty()) {
        p.tax.thresholds.clear(); p.tax.rates.clear();
        for (const auto& [i, v] : thr) { (void)i; p.tax.thresholds.push_back(v); }
        for (const auto& [i, v] : rates) { (void)i; p.tax.rates.push_back(v); }
    }
    p.validate();
    return p;
}

void save_solution(const Solution& sol, const std::string& dir) {
    std::filesystem::create_directories(dir);
    {
        CsvTable meta;
        meta.columns = {"key", "value"};
        meta.rows.push_back({"schema", "sol_v1"});
        meta.rows.push_back({"na", std::to_string(sol.na)});
        meta.rows.push_back({"np", std::to_string(sol.np)});
        meta.rows.push_back({"nth", std::to_string(sol.nth)});
        meta.rows.push_back({"neta", std::to_string(sol.neta)});
        meta.rows.push_back({"neps", std::to_string(sol.neps)});
        meta.rows.push_back({"first_age", std::to_string(sol.ages.front())});
        meta.rows.push_back({"last_age", std::to_string(sol.ages.back())});
        write_csv(dir + "/meta.csv", meta);
    }
    for (std::size_t t = 0; t < sol.ages.size(); ++t) {
        CsvTable f;
        f.columns = {"idx", "V", "pol_a", "pol_s", "pol_c"};
        for (std::size_t k = 0; k < sol.V[t].size(); ++k)
            f.rows.push_back({std::to_string(k), format_double(sol.V[t][k]),
                              std::to_string(sol.pol_a[t][k]),
                              std::to_string(sol.pol_s[t][k]),
                              format_double(sol.pol_c[t][k])});
        write_csv(dir + "/sol_age_" + std::to_string(sol.ages[t]) + ".csv", f);
    }
}

Solution load_solution(const std::string& dir) {
    const CsvTable meta = read_csv(dir + "/meta.csv");
    Solution sol;
    int first = 0, last = 0;
    for (const auto& row : meta.rows) {
        const std::string& k = row[0];
        if (k == "schema") {
            if (row[1] != "sol_v1") throw LoadError(dir + ": unexpected schema");
        } else if (k == "na") sol.na = std::stoi(row[1]);
        else if (k == "np") sol.np = std::stoi(row[1]);
        else if (k == "nth") sol.nth = std::stoi(row[1]);
        else if (k == "neta") sol.neta = std::stoi(row[1]);
        else if (k == "neps") sol.neps = std::stoi(row[1]);
        else if (k == "first_age") first = std::stoi(row[1]);
        else if (k == "last_age") last = std::stoi(row[1]);
    }
    for (int age = first; age <= last; ++age) sol.ages.push_back(age);
    const std::size_t n = static_cast<std::size_t>(sol.na) * sol.np * sol.nth *
                          sol.neta * sol.neps;
    for (int age = first; age <= last; ++age) {
        const CsvTable f = read_csv(dir + "/sol_age_" + std::to_string(age) + ".csv");
        if (f.rows.size() != n) throw LoadError(dir + ": state count mismatch");
        std::vector<double> V(n), c(n);
        std::vector<int> pa(n), ps(n);
        for (const auto& row : f.rows) {
            const std::size_t k = std::stoul(row[0]);
            V[k] = std::stod(row[1]);
            pa[k] = std::stoi(row[2]);
            ps[k] = std::stoi(row[3]);
            c[k] = std::stod(row[4]);
        }
        sol.V.push_back(std::move(V));
        sol.pol_a.push_back(std::move(pa));
        sol.pol_s.push_back(std::move(ps));
        sol.pol_c.push_back(std::move(c));
    }
    return sol;
}

}  // namespace hc
