// Pipeline driver: data generation, process estimation, solving, SMM,
// simulation, counterfactuals, and reporting. Flat dotted-key config with
// --set overrides; every artifact is listed in a manifest with a content
// hash so re-runs can be detected.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hc/csv.hpp"
#include "hc/earnings.hpp"
#include "hc/errors.hpp"
#include "hc/health_dynamics.hpp"
#include "hc/health_index.hpp"
#include "hc/mortality.hpp"
#include "hc/panel.hpp"
#include "hc/simulation.hpp"
#include "hc/smm.hpp"
#include "hc/solver.hpp"
#include "hc/stats.hpp"
#include "hc/wealth_profile.hpp"

namespace fs = std::filesystem;
using namespace hc;

namespace {

// Missing upstream artifact; exit code 3.
struct DependencyError : LoadError {
    explicit DependencyError(const std::string& msg) : LoadError(msg) {}
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "out.dir", "seed", "threads",
        // Synthetic data.
        "data.n_persons", "data.n_waves", "data.generator",
        // Health dynamics.
        "health.variant", "health.n_eta", "health.n_eps", "health.n_paths",
        "health.n_tau", "health.eta_min", "health.eta_max", "health.n_eta_grid",
        "health.min_bin_count", "health.correction_paths",
        // Mortality.
        "mortality.lifetable", "mortality.first_age", "mortality.last_age",
        // Wealth.
        "wealth.prices", "wealth.cohort", "wealth.unemployment",
        // Model parameters (Table-calibrated defaults; all overridable).
        "model.r", "model.beta", "model.nu", "model.gamma", "model.phi_B",
        "model.K", "model.L", "model.cbar", "model.r_p", "model.c_p",
        "model.phi_w1", "model.phi_w2", "model.phi_w3",
        // Grids.
        "grid.n_assets", "grid.n_pension", "grid.asset_max", "grid.pension_max",
        "grid.first_age", "grid.last_age",
        // Simulation.
        "sim.n_histories", "sim.assets0", "sim.pension0",
        // Counterfactuals.
        "shock.tau_init", "shock.tau_shock", "shock.n_histories",
        "decompose.percentile", "decompose.n_histories",
        "wtp.tau_init", "wtp.taus", "wtp.assets0",
        // SMM.
        "smm.free", "smm.n_histories", "smm.n_starts", "smm.max_cycles",
        "smm.anneal_levels", "smm.anneal_steps", "smm.simplex_iter",
    };
    return keys;
}

struct Config {
    std::map<std::string, std::string> kv;

    std::string get(const std::string& key, const std::string& dflt) const {
        const auto it = kv.find(key);
        return it == kv.end() ? dflt : it->second;
    }
    double num(const std::string& key, double dflt) const {
        const auto it = kv.find(key);
        if (it == kv.end()) return dflt;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: " + it->second);
        }
    }
    int integer(const std::string& key, int dflt) const {
        const double v = num(key, dflt);
        if (v != std::floor(v))
            throw ConfigError("config key " + key + ": not an integer");
        return static_cast<int>(v);
    }
    std::uint64_t seed() const {
        return static_cast<std::uint64_t>(num("seed", 1.0));
    }
};

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void apply_pair(Config& cfg, const std::string& key, const std::string& value,
                const std::string& origin) {
    if (known_keys().count(key) == 0)
        throw ConfigError(origin + ": unknown config key: " + key);
    cfg.kv[key] = value;
}

Config load_config(const std::string& path, const std::vector<std::string>& sets) {
    Config cfg;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw ConfigError("config file not found: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected key = value");
            apply_pair(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)),
                       path + ":" + std::to_string(lineno));
        }
    }
    for (const auto& s : sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got: " + s);
        apply_pair(cfg, trim(s.substr(0, eq)), trim(s.substr(eq + 1)), "--set");
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string hash_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw LoadError("cannot hash missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        const std::streamsize n = f.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

class Manifest {
  public:
    explicit Manifest(const std::string& out_dir)
        : path_(out_dir + "/manifest.csv") {
        if (fs::exists(path_)) {
            const CsvTable t = read_csv(path_);
            for (const auto& r : t.rows)
                rows_[r[0]] = {r[1], r[2], r[3], r[4], r[5]};
        }
    }

    void record(const std::string& artifact, const std::string& subcommand,
                std::uint64_t seed, long wall_ms,
                const std::vector<std::string>& inputs) {
        const std::string h = hash_file(artifact);
        const auto it = rows_.find(artifact);
        if (it != rows_.end() && it->second[0] == h)
            std::cout << "  unchanged: " << artifact << "\n";
        std::string joined;
        for (const auto& i : inputs) joined += (joined.empty() ? "" : ";") + i;
        rows_[artifact] = {h, subcommand, std::to_string(seed),
                           std::to_string(wall_ms), joined};
    }

    void save() const {
        CsvTable t;
        t.columns = {"artifact", "hash", "subcommand", "seed", "wall_ms", "inputs"};
        for (const auto& [a, r] : rows_)
            t.rows.push_back({a, r[0], r[1], r[2], r[3], r[4]});
        write_csv(path_, t);
    }

  private:
    std::string path_;
    std::map<std::string, std::array<std::string, 5>> rows_;
};

void require_artifact(const std::string& path, const std::string& producer) {
    if (!fs::exists(path))
        throw DependencyError("missing artifact " + path + ": run `" + producer +
                              "` first");
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

struct Paths {
    std::string dir;
    std::string panel() const { return dir + "/panel.csv"; }
    std::string truth() const { return dir + "/truth.csv"; }
    std::string lifetable() const { return dir + "/lifetable.csv"; }
    std::string prices() const { return dir + "/prices.csv"; }
    std::string hindex() const { return dir + "/hindex.csv"; }
    std::string qtab() const { return dir + "/health_qtab.csv"; }
    std::string health_canonical() const { return dir + "/health_canonical.csv"; }
    std::string health_annual() const { return dir + "/health_annual.csv"; }
    std::string mort() const { return dir + "/mort.csv"; }
    std::string earn() const { return dir + "/earn.csv"; }
    std::string wealth() const { return dir + "/wealth_profile.csv"; }
    std::string params_used() const { return dir + "/params_used.csv"; }
    std::string params_est() const { return dir + "/params_est.csv"; }
    std::string trace() const { return dir + "/smm_trace.csv"; }
    std::string data_moments() const { return dir + "/data_moments.csv"; }
    std::string sol() const { return dir + "/sol"; }
    std::string sim_moments() const { return dir + "/sim_moments.csv"; }
    std::string profiles() const { return dir + "/profiles.csv"; }
    std::string shock() const { return dir + "/shock.csv"; }
    std::string outcomes() const { return dir + "/outcomes.csv"; }
    std::string wtp() const { return dir + "/wtp.csv"; }
    std::string inequality() const { return dir + "/inequality.csv"; }
    std::string report_dir() const { return dir + "/report"; }
};

ModelParams params_from_config(const Config& cfg) {
    ModelParams p;
    p.r = cfg.num("model.r", p.r);
    p.beta = cfg.num("model.beta", p.beta);
    p.nu = cfg.num("model.nu", p.nu);
    p.gamma = cfg.num("model.gamma", p.gamma);
    p.phi_B = cfg.num("model.phi_B", p.phi_B);
    p.K = cfg.num("model.K", p.K);
    p.L = cfg.num("model.L", p.L);
    p.cbar = cfg.num("model.cbar", p.cbar);
    p.r_p = cfg.num("model.r_p", p.r_p);
    p.c_p = cfg.num("model.c_p", p.c_p);
    p.phi_w1 = cfg.num("model.phi_w1", p.phi_w1);
    p.phi_w2 = cfg.num("model.phi_w2", p.phi_w2);
    p.phi_w3 = cfg.num("model.phi_w3", p.phi_w3);
    p.validate();
    return p;
}

StateGrid grid_from_config(const Config& cfg) {
    StateGrid g = StateGrid::standard(
        cfg.integer("grid.n_assets", 30), cfg.integer("grid.n_pension", 6),
        cfg.num("grid.asset_max", 700000.0), cfg.num("grid.pension_max", 40000.0));
    g.first_age = cfg.integer("grid.first_age", 50);
    g.last_age = cfg.integer("grid.last_age", 85);
    g.validate();
    return g;
}

// Residualized health index for every record.
ResidualSeries load_residuals(const Paths& paths, Panel& panel) {
    require_artifact(paths.panel(), "gen-data");
    require_artifact(paths.hindex(), "fit-index");
    panel = load_panel(paths.panel());
    const HealthIndexModel m = load_index_model(paths.hindex());
    return residualize(predict_index(m, panel), panel);
}

SolverInputs load_inputs(const Config& cfg, const Paths& paths) {
    require_artifact(paths.health_annual(), "fit-health");
    require_artifact(paths.mort(), "fit-health");
    require_artifact(paths.earn(), "fit-earnings");
    SolverInputs in;
    in.params = fs::exists(paths.params_used())
                    ? load_params(paths.params_used())
                    : params_from_config(cfg);
    in.grid = grid_from_config(cfg);
    in.health = load_health_process(paths.health_annual());
    in.earnings = load_earnings_process(paths.earn());
    const MortalityTable mort = load_mortality_table(paths.mort());
    in.death = [mort](int age, double h) { return mort.prob(age, h); };
    in.validate();
    return in;
}

InitialConditions init_from_config(const Config& cfg) {
    InitialConditions init;
    init.assets_pool = {cfg.num("sim.assets0", 10000.0)};
    init.pension0 = cfg.num("sim.pension0", 0.0);
    return init;
}

// The 135-moment layout computed from panel records (data side of the SMM).
std::vector<Moment> panel_moments(const Panel& panel, const ResidualSeries& rs) {
    struct Cell {
        double sum = 0.0;
        int n = 0;
    };
    std::map<int, Cell> assets, hours;
    std::map<int, std::vector<double>> h_by_age;
    for (std::size_t i = 0; i < panel.records.size(); ++i) {
        const int age = static_cast<int>(panel.records[i].age);
        if (rs.values[i] && age >= 50 && age <= 69)
            h_by_age[age].push_back(*rs.values[i]);
    }
    std::map<int, std::array<double, 3>> cuts;
    for (auto& [age, hs] : h_by_age)
        if (hs.size() >= 20)
            cuts[age] = {quantile(hs, 0.2), quantile(hs, 0.3), quantile(hs, 0.5)};
    std::map<std::pair<int, int>, Cell> part;
    for (std::size_t i = 0; i < panel.records.size(); ++i) {
        const auto& r = panel.records[i];
        const int age = static_cast<int>(r.age);
        if (age >= 50 && age <= 84) {
            assets[age].sum += r.wealth_total;
            ++assets[age].n;
        }
        if (age >= 50 && age <= 69) {
            if (r.working()) {
                hours[age].sum += r.hours_annual;
                ++hours[age].n;
            }
            if (rs.values[i] && cuts.count(age)) {
                const auto& c = cuts.at(age);
                const double h = *rs.values[i];
                const int q = h < c[0] ? 0 : h < c[1] ? 1 : h < c[2] ? 2 : 3;
                part[{age, q}].sum += r.working() ? 1.0 : 0.0;
                ++part[{age, q}].n;
            }
        }
    }
    std::vector<Moment> out;
    for (int age = 50; age <= 84; ++age) {
        Moment m;
        m.kind = "assets";
        m.age = age;
        if (assets.count(age) && assets[age].n > 0) {
            m.value = assets[age].sum / assets[age].n;
            m.count = assets[age].n;
        }
        out.push_back(m);
    }
    for (int age = 50; age <= 69; ++age) {
        Moment m;
        m.kind = "hours";
        m.age = age;
        if (hours.count(age) && hours[age].n > 0) {
            m.value = hours[age].sum / hours[age].n;
            m.count = hours[age].n;
        }
        out.push_back(m);
    }
    for (int age = 50; age <= 69; ++age)
        for (int q = 0; q < 4; ++q) {
            Moment m;
            m.kind = "participation";
            m.age = age;
            m.quartile = q;
            const auto it = part.find({age, q});
            if (it != part.end() && it->second.n > 0) {
                m.value = it->second.sum / it->second.n;
                m.count = it->second.n;
            }
            out.push_back(m);
        }
    return out;
}

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stod(trim(item)));
    return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

using Clock = std::chrono::steady_clock;

long ms_since(Clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0)
        .count();
}

void cmd_gen_data(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    SynthConfig sc;
    sc.n_persons = cfg.integer("data.n_persons", 20000);
    sc.n_waves = cfg.integer("data.n_waves", 7);
    sc.seed = cfg.seed();
    const std::string gen = cfg.get("data.generator", "canonical");
    if (gen == "kinked") sc.health_generator = HealthGenerator::Kinked;
    else if (gen != "canonical")
        throw ConfigError("data.generator must be canonical or kinked");
    sc.validate();
    const Panel p = generate_panel(sc);
    save_panel(p, paths.panel());
    save_truth(p, paths.truth());
    {
        // Reference life table: Gompertz annual hazards over the model ages.
        CsvTable t;
        t.columns = {"age", "annual_death_rate"};
        for (int a = 50; a <= 85; ++a)
            t.rows.push_back({std::to_string(a),
                              format_double(std::min(
                                  0.6, sc.mort_p50 * std::exp(sc.mort_gompertz *
                                                              (a - 70.0))))});
        write_csv(paths.lifetable(), t);
    }
    {
        // House price index around the survey years, trending above the
        // real return in the boom years.
        CsvTable t;
        t.columns = {"year", "index"};
        for (int y = 1998; y <= 2020; ++y) {
            const double boom = y <= 2007 ? 0.06 : 0.015;
            const double idx = std::pow(1.0 + boom, y - 2004);
            t.rows.push_back({std::to_string(y), format_double(idx)});
        }
        write_csv(paths.prices(), t);
    }
    const long ms = ms_since(t0);
    for (const std::string& a :
         {paths.panel(), paths.truth(), paths.lifetable(), paths.prices()})
        man.record(a, "gen-data", sc.seed, ms, {});
    std::cout << "gen-data: " << p.records.size() << " records, "
              << sc.n_persons << " persons\n";
}

void cmd_fit_index(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.panel(), "gen-data");
    const Panel p = load_panel(paths.panel());
    const HealthIndexModel m = fit_latent_index(p);
    save_index_model(m, paths.hindex());
    man.record(paths.hindex(), "fit-index", cfg.seed(), ms_since(t0),
               {paths.panel()});
    std::cout << "fit-index: converged=" << m.converged
              << " iterations=" << m.iterations << " ll=" << m.log_likelihood
              << "\n";
}

// Health transitions between consecutive waves as (age, eta_prev, eta_next).
std::vector<EtaTransition> residual_transitions(const Panel& panel,
                                                const ResidualSeries& rs) {
    std::vector<EtaTransition> obs;
    for (std::size_t i = 0; i + 1 < panel.records.size(); ++i) {
        const auto& a = panel.records[i];
        const auto& b = panel.records[i + 1];
        if (a.person_id != b.person_id || b.wave != a.wave + 1) continue;
        if (!rs.values[i] || !rs.values[i + 1]) continue;
        obs.push_back({static_cast<int>(a.age), *rs.values[i], *rs.values[i + 1]});
    }
    return obs;
}

DeathProbFn make_death_fn(const MortalityTable& table) {
    return [table](int age, double h) { return table.prob(age, h); };
}

// Quartile cutoffs of the residual health index by (even) age.
HealthCutoffs cutoffs_from_residuals(const Panel& panel, const ResidualSeries& rs) {
    std::map<int, std::vector<double>> by_age;
    for (std::size_t i = 0; i < panel.records.size(); ++i)
        if (rs.values[i]) {
            const int age = static_cast<int>(panel.records[i].age) / 2 * 2;
            by_age[age].push_back(*rs.values[i]);
        }
    HealthCutoffs c;
    for (auto& [age, hs] : by_age) {
        if (hs.size() < 50) continue;
        c.ages.push_back(age);
        c.cutoffs.push_back(
            {quantile(hs, 0.2), quantile(hs, 0.3), quantile(hs, 0.5)});
    }
    if (c.ages.empty())
        throw EstimationError("health cutoffs: no age cell has enough data");
    return c;
}

void cmd_fit_health(const Config& cfg, const Paths& paths, Manifest& man,
                    bool flag_canonical, bool flag_nonlinear) {
    const auto t0 = Clock::now();
    Panel panel;
    const ResidualSeries rs = load_residuals(paths, panel);
    std::string variant = cfg.get("health.variant", "nonlinear");
    if (flag_canonical) variant = "canonical";
    if (flag_nonlinear) variant = "nonlinear";
    if (variant != "canonical" && variant != "nonlinear")
        throw ConfigError("health.variant must be canonical or nonlinear");

    // Mortality: quartile hazards rescaled to the life table.
    const std::string lt_path = cfg.get("mortality.lifetable", paths.lifetable());
    require_artifact(lt_path, "gen-data");
    std::vector<int> lt_ages;
    std::vector<double> lt_rates;
    load_lifetable(lt_path, lt_ages, lt_rates);
    const HealthCutoffs cuts = cutoffs_from_residuals(panel, rs);
    const RawRates raw = estimate_mortality(panel, rs.values, cuts);
    const MortalityTable mort = rescale_to_lifetable(
        raw, lt_ages, lt_rates, cuts, cfg.integer("mortality.first_age", 50),
        cfg.integer("mortality.last_age", 85));
    mort.validate();
    save_mortality_table(mort, paths.mort());

    // The persistent-health grid is finer for the canonical variant, whose
    // Gaussian process needs more support points than the simulated
    // nonlinear chain.
    const int n_eta =
        cfg.integer("health.n_eta", variant == "canonical" ? 24 : 19);
    const int n_eps = cfg.integer("health.n_eps", 5);
    const int first_age = cfg.integer("grid.first_age", 50);
    const int last_age = cfg.integer("grid.last_age", 85);
    DiscreteHealthProcess annual;
    std::vector<std::string> extra;

    if (variant == "canonical") {
        // Biennial residual panel keyed person x wave.
        ResidualPanel rp;
        std::map<int, std::size_t> row;
        int n_waves = 0;
        for (std::size_t i = 0; i < panel.records.size(); ++i)
            n_waves = std::max(n_waves, panel.records[i].wave + 1);
        for (std::size_t i = 0; i < panel.records.size(); ++i) {
            const int pid = panel.records[i].person_id;
            if (!row.count(pid)) {
                row[pid] = rp.size();
                rp.emplace_back(n_waves);
            }
            rp[row[pid]][panel.records[i].wave] = rs.values[i];
        }
        const CanonicalFit fit = estimate_canonical(rp);
        {
            CsvTable t;
            t.columns = {"key", "value"};
            t.rows.push_back({"schema", "canon_v1"});
            t.rows.push_back({"rho", format_double(fit.params.rho)});
            t.rows.push_back({"sig2_nu", format_double(fit.params.sig2_nu)});
            t.rows.push_back({"sig2_eps", format_double(fit.params.sig2_eps)});
            t.rows.push_back({"sig2_0", format_double(fit.params.sig2_0)});
            t.rows.push_back({"objective", format_double(fit.objective)});
            write_csv(paths.health_canonical(), t);
        }
        extra.push_back(paths.health_canonical());
        // Annual chain directly from the estimated AR(1).
        DiscreteHealthProcess d;
        d.biennial = false;
        std::vector<double> grid;
        Eigen::MatrixXd P;
        discretize_ar1(fit.params.rho, std::sqrt(fit.params.sig2_nu),
                       std::sqrt(std::max(fit.params.sig2_0,
                                          fit.params.sig2_nu /
                                              (1.0 - fit.params.rho * fit.params.rho))),
                       n_eta, grid, P);
        for (int a = first_age; a <= last_age; ++a) {
            d.ages.push_back(a);
            d.eta_grids.push_back(grid);
            d.offsets.push_back(0.0);
            if (a < last_age) {
                d.transitions.push_back(P);
                d.repaired_rows.push_back(0);
            }
        }
        const double s_eps = std::sqrt(fit.params.sig2_eps);
        for (int i = 0; i < n_eps; ++i) {
            d.eps_grid.push_back(s_eps * normal_inv((i + 0.5) / n_eps));
            d.eps_weights.push_back(1.0 / n_eps);
        }
        annual = std::move(d);
        std::cout << "fit-health canonical: rho=" << fit.params.rho
                  << " sig2_nu=" << fit.params.sig2_nu
                  << " sig2_eps=" << fit.params.sig2_eps
                  << " sig2_0=" << fit.params.sig2_0 << "\n";
    } else {
        const auto obs = residual_transitions(panel, rs);
        std::vector<double> eta_grid, tau_grid;
        const double lo = cfg.num("health.eta_min", -2.4);
        const double hi = cfg.num("health.eta_max", 2.4);
        const int n_grid = cfg.integer("health.n_eta_grid", 13);
        for (int i = 0; i < n_grid; ++i)
            eta_grid.push_back(lo + (hi - lo) * i / (n_grid - 1));
        const int n_tau = cfg.integer("health.n_tau", 19);
        for (int k = 1; k <= n_tau; ++k)
            tau_grid.push_back(static_cast<double>(k) / (n_tau + 1));
        const QuantileTable table = estimate_quantile_table(
            obs, eta_grid, tau_grid, false,
            cfg.integer("health.min_bin_count", 30));
        save_quantile_table(table, paths.qtab());
        extra.push_back(paths.qtab());
        // One extra biennial block so the annualized chain reaches last_age.
        const int horizon = (last_age - first_age) / 2 + 2;
        const EtaPaths sim = simulate_nonlinear(
            table, cfg.integer("health.n_paths", 200000), horizon,
            cfg.seed() + 101, first_age);
        // Transitory sample: deviations of the residual from the persistent
        // fit are not separately observed; use the spread implied by the
        // median-quantile local noise.
        std::vector<double> eps_sample;
        for (const auto& o : obs)
            eps_sample.push_back(o.eta_next - table.eval(-1, o.eta_prev, 0.5));
        DiscreteHealthProcess biennial = discretize(sim, eps_sample, n_eta, n_eps);
        annual = annualize(biennial);
        std::cout << "fit-health nonlinear: " << obs.size() << " transitions, "
                  << sim.clamped << " clamped path steps\n";
    }

    // Mortality-selection correction: targets are the survivor medians of
    // the uncorrected chain under zero mortality.
    const DeathProbFn none = [](int, double) { return 0.0; };
    const int cpaths = cfg.integer("health.correction_paths", 20000);
    const std::vector<double> targets =
        survivor_medians(annual, none, cpaths, cfg.seed() + 5);
    const MortalityCorrectionResult corr = mortality_bias_correction(
        annual, make_death_fn(mort), targets, cfg.seed() + 5, cpaths);
    if (!corr.converged)
        throw EstimationError("mortality bias correction did not converge; worst gap " +
                              std::to_string(corr.worst_gap));
    save_health_process(corr.process, paths.health_annual());

    const long ms = ms_since(t0);
    man.record(paths.mort(), "fit-health", cfg.seed(), ms,
               {paths.panel(), paths.hindex(), lt_path});
    man.record(paths.health_annual(), "fit-health", cfg.seed(), ms,
               {paths.panel(), paths.hindex()});
    for (const auto& a : extra)
        man.record(a, "fit-health", cfg.seed(), ms, {paths.panel(), paths.hindex()});
    std::cout << "fit-health: correction converged in " << corr.iterations
              << " iterations, worst gap " << corr.worst_gap << "\n";
}

void cmd_fit_earnings(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    Panel panel;
    const ResidualSeries rs = load_residuals(paths, panel);
    EarningsProcess e = estimate_earnings_process(panel, rs.values);
    e.build_theta_chain(5);
    save_earnings_process(e, paths.earn());
    man.record(paths.earn(), "fit-earnings", cfg.seed(), ms_since(t0),
               {paths.panel(), paths.hindex()});
    std::cout << "fit-earnings: rho_e=" << e.rho_e << " sig2_nu_e=" << e.sig2_nu_e
              << " sig2_ups=" << e.sig2_ups << " sig2_0_e=" << e.sig2_0_e << "\n";
}

void cmd_fit_wealth(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.panel(), "gen-data");
    Panel panel = load_panel(paths.panel());
    const std::string pp = cfg.get("wealth.prices", paths.prices());
    require_artifact(pp, "gen-data");
    std::map<int, double> prices;
    load_price_index(pp, prices);
    deflate_housing(panel, prices, 2004, cfg.num("model.r", 0.02));
    const WealthProfileModel m = fit_wealth_profile(panel);
    const auto prof = simulate_profile(m, cfg.get("wealth.cohort", "1946-1955"),
                                       cfg.num("wealth.unemployment", 0.049));
    save_age_profile(prof, paths.wealth());
    man.record(paths.wealth(), "fit-wealth", cfg.seed(), ms_since(t0),
               {paths.panel(), pp});
    std::cout << "fit-wealth: " << m.fe.size() << " persons, "
              << m.dropped_single_wave << " single-wave dropped\n";
}

void cmd_solve(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.health_annual(), "fit-health");
    require_artifact(paths.earn(), "fit-earnings");
    SolverInputs in;
    in.params = fs::exists(paths.params_est()) ? load_params(paths.params_est())
                                               : params_from_config(cfg);
    if (fs::exists(paths.params_est()))
        std::cout << "solve: using estimated parameters from "
                  << paths.params_est() << "\n";
    in.grid = grid_from_config(cfg);
    in.health = load_health_process(paths.health_annual());
    in.earnings = load_earnings_process(paths.earn());
    require_artifact(paths.mort(), "fit-health");
    const MortalityTable mort = load_mortality_table(paths.mort());
    in.death = make_death_fn(mort);
    in.validate();
    const Solution sol = solve(in);
    save_solution(sol, paths.sol());
    save_params(in.params, paths.params_used());
    const long ms = ms_since(t0);
    man.record(paths.sol() + "/meta.csv", "solve", cfg.seed(), ms,
               {paths.health_annual(), paths.earn(), paths.mort()});
    man.record(paths.params_used(), "solve", cfg.seed(), ms, {});
    std::cout << "solve: " << sol.ages.size() << " ages, "
              << sol.V[0].size() << " states per age, " << ms << " ms\n";
}

void cmd_estimate(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    Panel panel;
    const ResidualSeries rs = load_residuals(paths, panel);
    const auto data = panel_moments(panel, rs);
    save_moments(data, paths.data_moments());

    SolverInputs in = load_inputs(cfg, paths);
    in.params = params_from_config(cfg);  // estimation starts from config values

    SmmConfig sc;
    const std::string free = cfg.get("smm.free", "gamma");
    std::stringstream ss(free);
    std::string name;
    while (std::getline(ss, name, ',')) {
        name = trim(name);
        if (name == "gamma") sc.free_params.push_back({"gamma", 0.2, 0.6, 0.4});
        else if (name == "phi_B") sc.free_params.push_back({"phi_B", 0.0, 0.2, 0.05});
        else if (name == "K") sc.free_params.push_back({"K", 1e5, 1e6, 5e5});
        else if (name == "phi_w1") sc.free_params.push_back({"phi_w1", 0.0, 8000.0, 3500.0});
        else if (name == "phi_w2") sc.free_params.push_back({"phi_w2", 0.0, 100.0, 30.0});
        else if (name == "phi_w3") sc.free_params.push_back({"phi_w3", 0.0, 10.0, 3.0});
        else
            throw ConfigError("smm.free: unsupported parameter " + name);
    }
    sc.n_histories = cfg.integer("smm.n_histories", 2000);
    sc.sim_seed = cfg.seed() + 900;
    sc.magnitude_weights = true;
    sc.n_starts = cfg.integer("smm.n_starts", 3);
    sc.max_cycles = cfg.integer("smm.max_cycles", 5);
    sc.anneal.temperature_levels = cfg.integer("smm.anneal_levels", 10);
    sc.anneal.steps_per_temperature = cfg.integer("smm.anneal_steps", 8);
    sc.simplex.max_iter = cfg.integer("smm.simplex_iter", 200);
    sc.validate();

    const SmmResult res = smm_estimate(sc, data, in, init_from_config(cfg));
    save_params(res.params, paths.params_est());
    save_trace(res, sc.free_params, paths.trace());
    const long ms = ms_since(t0);
    man.record(paths.data_moments(), "estimate", cfg.seed(), ms, {paths.panel()});
    man.record(paths.params_est(), "estimate", cfg.seed(), ms,
               {paths.data_moments(), paths.sol() + "/meta.csv"});
    man.record(paths.trace(), "estimate", cfg.seed(), ms, {});
    std::cout << "estimate: loss=" << res.loss << " cycles=" << res.cycles
              << " evaluations=" << res.evaluations
              << (res.converged ? "" : " (not converged)") << "\n";
}

void cmd_simulate(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.sol() + "/meta.csv", "solve");
    const SolverInputs in = load_inputs(cfg, paths);
    const Solution sol = load_solution(paths.sol());
    const Histories hs =
        simulate_histories(sol, in, init_from_config(cfg),
                           cfg.integer("sim.n_histories", 15000), cfg.seed() + 7);
    save_moments(compute_moments(hs), paths.sim_moments());
    {
        // Mean profiles by age among survivors.
        CsvTable t;
        t.columns = {"age", "alive", "mean_assets", "mean_health", "employment",
                     "mean_hours_workers", "mean_consumption"};
        const int n_ages = hs.last_age - hs.first_age + 1;
        for (int k = 0; k < n_ages; ++k) {
            int alive = 0, working = 0;
            double a = 0.0, h = 0.0, s = 0.0, c = 0.0;
            for (const auto& hist : hs.items) {
                if (k >= hist.periods()) continue;
                ++alive;
                a += hist.a[k];
                h += hist.h[k];
                c += hist.c[k];
                if (hist.s[k] > 0.0) {
                    ++working;
                    s += hist.s[k];
                }
            }
            if (alive == 0) break;
            t.rows.push_back({std::to_string(hs.first_age + k),
                              std::to_string(alive),
                              format_double(a / alive), format_double(h / alive),
                              format_double(static_cast<double>(working) / alive),
                              working > 0 ? format_double(s / working) : "",
                              format_double(c / alive)});
        }
        write_csv(paths.profiles(), t);
    }
    const long ms = ms_since(t0);
    man.record(paths.sim_moments(), "simulate", cfg.seed(), ms,
               {paths.sol() + "/meta.csv"});
    man.record(paths.profiles(), "simulate", cfg.seed(), ms,
               {paths.sol() + "/meta.csv"});
    std::cout << "simulate: " << hs.items.size() << " histories\n";
}

void cmd_shock(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.sol() + "/meta.csv", "solve");
    const SolverInputs in = load_inputs(cfg, paths);
    const Solution sol = load_solution(paths.sol());
    ShockExperiment ex;
    ex.tau_init = cfg.num("shock.tau_init", 0.1);
    ex.tau_shock = cfg.num("shock.tau_shock", 0.1);
    ex.assets0 = cfg.num("sim.assets0", 10000.0);
    ex.n_histories = cfg.integer("shock.n_histories", 15000);
    ex.seed = cfg.seed() + 7;
    const DiffProfiles d = counterfactual_shock(ex, sol, in);
    std::ostringstream label;
    label << "tau_init=" << ex.tau_init << ";tau_shock=" << ex.tau_shock;
    save_diff_profiles(d, label.str(), paths.shock());
    man.record(paths.shock(), "shock", cfg.seed(), ms_since(t0),
               {paths.sol() + "/meta.csv"});
    std::cout << "shock: " << label.str()
              << " d_assets(85)=" << d.d_assets.back() << "\n";
}

void cmd_decompose(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.sol() + "/meta.csv", "solve");
    const SolverInputs in = load_inputs(cfg, paths);
    const InitialConditions init = init_from_config(cfg);
    const double pct = cfg.num("decompose.percentile", 0.75);
    const int n = cfg.integer("decompose.n_histories", 15000);
    const std::uint64_t seed = cfg.seed() + 7;
    std::vector<OutcomeRow> rows;
    const OutcomeRow base = decompose_channels({}, pct, in, init, n, seed);
    rows.push_back(base);
    rows.push_back(decompose_channels({Channel::Mortality}, pct, in, init, n,
                                      seed, &base));
    rows.push_back(decompose_channels({Channel::TimeCost}, pct, in, init, n,
                                      seed, &base));
    rows.push_back(decompose_channels({Channel::Wages}, pct, in, init, n, seed,
                                      &base));
    rows.push_back(decompose_channels(
        {Channel::Mortality, Channel::TimeCost, Channel::Wages}, pct, in, init,
        n, seed, &base));
    save_outcomes(rows, paths.outcomes());
    man.record(paths.outcomes(), "decompose", cfg.seed(), ms_since(t0),
               {paths.sol() + "/meta.csv"});
    std::cout << "decompose: baseline employment=" << base.employment
              << ", all-off employment=" << rows.back().employment << "\n";
}

void cmd_wtp(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.sol() + "/meta.csv", "solve");
    const SolverInputs in = load_inputs(cfg, paths);
    const Solution sol = load_solution(paths.sol());
    const double tau_init = cfg.num("wtp.tau_init", 0.5);
    const double a0 = cfg.num("wtp.assets0", 10000.0);
    const std::vector<double> taus =
        parse_list(cfg.get("wtp.taus", "0.05,0.25,0.5,0.75,0.95"));
    CsvTable t;
    t.columns = {"tau_init", "tau_shock", "wtp"};
    for (double tau : taus) {
        const double w =
            willingness_to_pay(sol, in, tau_init, tau, std::nullopt, a0);
        t.rows.push_back({format_double(tau_init), format_double(tau),
                          format_double(w)});
    }
    write_csv(paths.wtp(), t);
    man.record(paths.wtp(), "wtp", cfg.seed(), ms_since(t0),
               {paths.sol() + "/meta.csv"});
    std::cout << "wtp: " << taus.size() << " arms written\n";
}

void cmd_inequality(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    require_artifact(paths.sol() + "/meta.csv", "solve");
    const SolverInputs in = load_inputs(cfg, paths);
    const Solution sol = load_solution(paths.sol());
    const Histories hs =
        simulate_histories(sol, in, init_from_config(cfg),
                           cfg.integer("sim.n_histories", 15000), cfg.seed() + 7);
    save_inequality(inequality_metrics(hs), paths.inequality());
    man.record(paths.inequality(), "inequality", cfg.seed(), ms_since(t0),
               {paths.sol() + "/meta.csv"});
    std::cout << "inequality: written\n";
}

void cmd_report(const Config& cfg, const Paths& paths, Manifest& man) {
    const auto t0 = Clock::now();
    struct Item {
        std::string path, producer;
        bool required;
    };
    const std::vector<Item> items = {
        {paths.panel(), "gen-data", true},
        {paths.hindex(), "fit-index", true},
        {paths.health_annual(), "fit-health", true},
        {paths.mort(), "fit-health", true},
        {paths.earn(), "fit-earnings", true},
        {paths.wealth(), "fit-wealth", false},
        {paths.sol() + "/meta.csv", "solve", true},
        {paths.sim_moments(), "simulate", true},
        {paths.profiles(), "simulate", true},
        {paths.shock(), "shock", false},
        {paths.outcomes(), "decompose", false},
        {paths.wtp(), "wtp", false},
        {paths.inequality(), "inequality", false},
    };
    for (const auto& it : items)
        if (it.required) require_artifact(it.path, it.producer);
    fs::create_directories(paths.report_dir());
    CsvTable idx;
    idx.columns = {"table", "source", "present"};
    for (const auto& it : items) {
        const bool present = fs::exists(it.path);
        if (present && it.path != paths.panel())
            fs::copy_file(it.path,
                          paths.report_dir() + "/" +
                              fs::path(it.path).filename().string(),
                          fs::copy_options::overwrite_existing);
        idx.rows.push_back({fs::path(it.path).filename().string(), it.producer,
                            present ? "yes" : "no"});
    }
    const std::string index_path = paths.report_dir() + "/index.csv";
    write_csv(index_path, idx);
    man.record(index_path, "report", cfg.seed(), ms_since(t0), {});
    std::cout << "report: collated into " << paths.report_dir() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Life-cycle health dynamics pipeline"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> sets;
    int threads = 0;
    std::string out_override;
    app.add_option("--config", config_path, "Flat dotted-key config file");
    app.add_option("--set", sets, "Override: key=value (repeatable)");
    app.add_option("--threads", threads, "Worker threads (0 = auto)");
    app.add_option("--out", out_override, "Output directory");

    bool flag_canonical = false, flag_nonlinear = false;
    CLI::App* c_gen = app.add_subcommand("gen-data", "Generate the synthetic panel");
    CLI::App* c_idx = app.add_subcommand("fit-index", "Fit the latent health index");
    CLI::App* c_hlt = app.add_subcommand("fit-health", "Estimate health dynamics");
    c_hlt->add_flag("--canonical", flag_canonical, "Canonical AR(1) variant");
    c_hlt->add_flag("--nonlinear", flag_nonlinear, "Nonlinear quantile variant");
    CLI::App* c_ear = app.add_subcommand("fit-earnings", "Estimate the wage process");
    CLI::App* c_wlt = app.add_subcommand("fit-wealth", "Estimate the wealth profile");
    CLI::App* c_slv = app.add_subcommand("solve", "Solve the life-cycle model");
    CLI::App* c_est = app.add_subcommand("estimate", "SMM parameter estimation");
    CLI::App* c_sim = app.add_subcommand("simulate", "Forward-simulate histories");
    CLI::App* c_shk = app.add_subcommand("shock", "Counterfactual health shock");
    CLI::App* c_dec = app.add_subcommand("decompose", "Channel decomposition");
    CLI::App* c_wtp = app.add_subcommand("wtp", "Willingness to pay for health");
    CLI::App* c_inq = app.add_subcommand("inequality", "Inequality metrics");
    CLI::App* c_rep = app.add_subcommand("report", "Collate report tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        const Config cfg = load_config(config_path, sets);
        (void)threads;  // modules are sequential and thread-count invariant
        Paths paths;
        paths.dir = !out_override.empty() ? out_override : cfg.get("out.dir", "out");
        fs::create_directories(paths.dir);
        Manifest man(paths.dir);

        if (c_gen->parsed()) cmd_gen_data(cfg, paths, man);
        else if (c_idx->parsed()) cmd_fit_index(cfg, paths, man);
        else if (c_hlt->parsed())
            cmd_fit_health(cfg, paths, man, flag_canonical, flag_nonlinear);
        else if (c_ear->parsed()) cmd_fit_earnings(cfg, paths, man);
        else if (c_wlt->parsed()) cmd_fit_wealth(cfg, paths, man);
        else if (c_slv->parsed()) cmd_solve(cfg, paths, man);
        else if (c_est->parsed()) cmd_estimate(cfg, paths, man);
        else if (c_sim->parsed()) cmd_simulate(cfg, paths, man);
        else if (c_shk->parsed()) cmd_shock(cfg, paths, man);
        else if (c_dec->parsed()) cmd_decompose(cfg, paths, man);
        else if (c_wtp->parsed()) cmd_wtp(cfg, paths, man);
        else if (c_inq->parsed()) cmd_inequality(cfg, paths, man);
        else if (c_rep->parsed()) cmd_report(cfg, paths, man);

        man.save();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DependencyError& e) {
        std::cerr << "dependency error: " << e.what() << "\n";
        return 3;
    } catch (const LoadError& e) {
        std::cerr << "load error: " << e.what() << "\n";
        return 3;
    } catch (const EstimationError& e) {
        std::cerr << "estimation error: " << e.what() << "\n";
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 0;
}
