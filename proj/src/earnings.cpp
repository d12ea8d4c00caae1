#include "hc/earnings.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"

namespace hc {

double EarningsProcess::deterministic(double h, double age) const {
    const double a = age - 50.0;
    double v = coef[0] + coef[1] * a + coef[2] * a * a + coef[3] * h;
    for (int j = 0; j < 3; ++j) v += coef[4 + j] * std::max(0.0, h - h_knots[j]);
    return v;
}

void EarningsProcess::validate() const {
    if (std::abs(rho_e) >= 1.0) throw ConfigError("earnings: |rho_e| must be < 1");
    if (sig2_nu_e < 0 || sig2_ups < 0 || sig2_0_e < 0)
        throw ConfigError("earnings: variances must be non-negative");
    if (coef.size() != 7) throw ConfigError("earnings: expected 7 coefficients");
    for (std::size_t i = 1; i < h_knots.size(); ++i)
        if (h_knots[i] <= h_knots[i - 1])
            throw ConfigError("earnings: knots not increasing");
}

void EarningsProcess::build_theta_chain(int n) {
    const double sig_level =
        std::sqrt(std::max(sig2_0_e, sig2_nu_e / std::max(1e-12, 1.0 - rho_e * rho_e)));
    if (sig_level <= 0.0) {
        theta_grid.assign(n, 0.0);
        theta_trans = Eigen::MatrixXd::Identity(n, n);
        return;
    }
    discretize_ar1(rho_e, std::sqrt(sig2_nu_e), sig_level, n, theta_grid, theta_trans);
}

EarningsProcess estimate_earnings_process(const Panel& panel,
                                          const std::vector<std::optional<double>>& health,
                                          int wave_years) {
    if (health.size() != panel.records.size())
        throw ConfigError("estimate_earnings_process: health/panel size mismatch");

    std::vector<int> rows;
    for (std::size_t i = 0; i < panel.records.size(); ++i)
        if (panel.records[i].hourly_wage && health[i]) rows.push_back(static_cast<int>(i));
    const int n = static_cast<int>(rows.size());
    if (n < 50) throw EstimationError("estimate_earnings_process: too few worker-waves");

    std::vector<double> hs;
    for (int i : rows) hs.push_back(*health[i]);
    std::sort(hs.begin(), hs.end());
    EarningsProcess p;
    p.h_knots = {quantile_sorted(hs, 0.20), quantile_sorted(hs, 0.30),
                 quantile_sorted(hs, 0.50)};

    Eigen::MatrixXd X(n, 7);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const PanelRecord& r = panel.records[rows[i]];
        const double a = r.age - 50.0, h = *health[rows[i]];
        X(i, 0) = 1.0;
        X(i, 1) = a;
        X(i, 2) = a * a;
        X(i, 3) = h;
        for (int j = 0; j < 3; ++j) X(i, 4 + j) = std::max(0.0, h - p.h_knots[j]);
        y(i) = std::log(*r.hourly_wage);
    }
    const Eigen::VectorXd beta = ols(X, y);
    p.coef.assign(beta.data(), beta.data() + beta.size());
    const Eigen::VectorXd resid = y - X * beta;

    // Residual panel by person x wave for the minimum-distance stage.
    std::map<int, int> pid_of;
    ResidualPanel rp;
    std::size_t max_wave = 0;
    for (int i = 0; i < n; ++i)
        max_wave = std::max(max_wave,
                            static_cast<std::size_t>(panel.records[rows[i]].wave));
    for (int i = 0; i < n; ++i) {
        const PanelRecord& r = panel.records[rows[i]];
        auto [it, fresh] = pid_of.try_emplace(r.person_id, static_cast<int>(rp.size()));
        if (fresh) rp.emplace_back(max_wave + 1);
        rp[it->second][r.wave] = resid(i);
    }

    const CanonicalFit fit = estimate_canonical(rp, wave_years);
    p.rho_e = fit.params.rho;
    p.sig2_nu_e = fit.params.sig2_nu;
    p.sig2_ups = fit.params.sig2_eps;
    p.sig2_0_e = fit.params.sig2_0;
    p.build_theta_chain();
    p.validate();
    return p;
}

double wage_offer(const EarningsProcess& process, double h, double age, double theta) {
    if (age >= 70.0) return 0.0;
    return std::exp(process.deterministic(h, age) + theta);
}

WagePaths simulate_earnings(const EarningsProcess& process,
                            const std::vector<std::vector<double>>& health_paths,
                            int first_age, std::uint64_t seed) {
    if (process.theta_grid.empty())
        throw ConfigError("simulate_earnings: theta chain not built");
    const int n_theta = static_cast<int>(process.theta_grid.size());
    WagePaths out;
    out.theta_idx.resize(health_paths.size());
    out.wage.resize(health_paths.size());
    for (std::size_t pth = 0; pth < health_paths.size(); ++pth) {
        Rng rng(seed, static_cast<std::uint64_t>(pth));
        int idx = rng.uniform_int(0, n_theta - 1);  // equal-probability bins
        for (std::size_t t = 0; t < health_paths[pth].size(); ++t) {
            out.theta_idx[pth].push_back(idx);
            out.wage[pth].push_back(wage_offer(process, health_paths[pth][t],
                                               first_age + static_cast<int>(t),
                                               process.theta_grid[idx]));
            const double u = rng.uniform();
            double cum = 0.0;
            int next = n_theta - 1;
            for (int j = 0; j < n_theta; ++j) {
                cum += process.theta_trans(idx, j);
                if (u < cum) { next = j; break; }
            }
            idx = next;
        }
    }
    return out;
}

void save_earnings_process(const EarningsProcess& p, const std::string& path) {
    CsvTable t;
    t.columns = {"key", "value"};
    auto push = [&](const std::string& k, double v) {
        t.rows.push_back({k, format_double(v)});
    };
    t.rows.push_back({"schema", "earn_v1"});
    for (int i = 0; i < 7; ++i) push("coef_" + std::to_string(i), p.coef[i]);
    for (int i = 0; i < 3; ++i) push("knot_" + std::to_string(i), p.h_knots[i]);
    push("rho_e", p.rho_e);
    push("sig2_nu_e", p.sig2_nu_e);
    push("sig2_ups", p.sig2_ups);
    push("sig2_0_e", p.sig2_0_e);
    for (std::size_t i = 0; i < p.theta_grid.size(); ++i)
        push("theta_grid_" + std::to_string(i), p.theta_grid[i]);
    for (int i = 0; i < p.theta_trans.rows(); ++i)
        for (int j = 0; j < p.theta_trans.cols(); ++j)
            push("theta_trans_" + std::to_string(i) + "_" + std::to_string(j),
                 p.theta_trans(i, j));
    write_csv(path, t);
}

EarningsProcess load_earnings_process(const std::string& path) {
    const CsvTable t = read_csv(path);
    EarningsProcess p;
    p.coef.assign(7, 0.0);
    p.h_knots.assign(3, 0.0);
    std::map<std::pair<int, int>, double> trans;
    std::map<int, double> grid;
    bool schema_ok = false;
    for (const auto& row : t.rows) {
        const std::string& k = row[0];
        if (k == "schema") { schema_ok = row[1] == "earn_v1"; continue; }
        const double v = std::stod(row[1]);
        if (k.rfind("coef_", 0) == 0) p.coef[std::stoi(k.substr(5))] = v;
        else if (k.rfind("knot_", 0) == 0) p.h_knots[std::stoi(k.substr(5))] = v;
        else if (k == "rho_e") p.rho_e = v;
        else if (k == "sig2_nu_e") p.sig2_nu_e = v;
        else if (k == "sig2_ups") p.sig2_ups = v;
        else if (k == "sig2_0_e") p.sig2_0_e = v;
        else if (k.rfind("theta_grid_", 0) == 0) grid[std::stoi(k.substr(11))] = v;
        else if (k.rfind("theta_trans_", 0) == 0) {
            const std::string rest = k.substr(12);
            const auto us = rest.find('_');
            trans[{std::stoi(rest.substr(0, us)), std::stoi(rest.substr(us + 1))}] = v;
        }
    }
    if (!schema_ok) throw LoadError(path + ": not an earn_v1 file");
    for (const auto& [i, v] : grid) {
        (void)i;
        p.theta_grid.push_back(v);
    }
    const int n = static_cast<int>(p.theta_grid.size());
    if (n > 0) {
        p.theta_trans = Eigen::MatrixXd::Zero(n, n);
        for (const auto& [ij, v] : trans) p.theta_trans(ij.first, ij.second) = v;
    }
    p.validate();
    return p;
}

}  // namespace hc
