#include "hc/panel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_map>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"

namespace hc {

namespace {

constexpr int kFirstWaveYear = 2002;
constexpr int kMinEntryAge = 50;
constexpr int kMaxEntryAge = 78;

const char* kDefaultIndicators[12] = {
    "eyesight", "hearing",   "mobility",      "adl",          "iadl",
    "depression", "heart_disease", "other_disease", "eye_problems",
    "incontinence", "bmi", "grip_strength"};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Kinked conditional quantile function used by the nonlinear generator.
// Persistence falls with the shock rank in bad health and rises slightly
// in good health, which keeps Q monotone in tau.
double kinked_next(const SynthConfig& c, double eta, double u) {
    double rho;
    if (eta <= 0.0)
        rho = c.kink_rho_bad + (c.kink_rho_good - c.kink_rho_bad) * u;
    else
        rho = (c.kink_rho_high - 0.1) + 0.2 * u;
    return rho * eta + c.kink_sigma * normal_inv(u);
}

struct PersonDraws {
    int entry_age = 0;
    std::vector<double> eta;  // per wave
    std::vector<double> eps;  // per wave
};

}  // namespace

void SynthConfig::validate() const {
    if (n_persons <= 0) throw ConfigError("n_persons must be positive");
    if (n_waves < 3) throw ConfigError("n_waves must be >= 3 for identification");
    if (n_indicators <= 0) throw ConfigError("n_indicators must be positive");
    if (sig2_nu < 0 || sig2_eps < 0 || sig2_0 < 0 || sig2_nu_e < 0 || sig2_ups < 0 ||
        sig2_0_e < 0)
        throw ConfigError("variances must be non-negative");
    if (std::abs(rho) >= 1.0) throw ConfigError("|rho| must be < 1");
    if (reporting_noise_sd < 0) throw ConfigError("reporting_noise_sd must be >= 0");
    if (!alpha.empty() && static_cast<int>(alpha.size()) != n_indicators + 1)
        throw ConfigError("alpha must have n_indicators + 1 entries");
}

Panel generate_panel(const SynthConfig& config) {
    config.validate();
    const SynthConfig& c = config;

    std::vector<double> alpha = c.alpha;
    if (alpha.empty()) {
        alpha.assign(c.n_indicators + 1, 0.25);
        alpha[0] = 0.3;
    }

    // Pass 1: health components per person-wave. Cutoffs of the age-specific
    // health-residual distribution are needed before mortality can be drawn.
    std::vector<PersonDraws> draws(c.n_persons);
    std::map<int, std::vector<double>> hresid_by_age;
    for (int pid = 0; pid < c.n_persons; ++pid) {
        Rng rng(c.seed, static_cast<std::uint64_t>(pid));
        PersonDraws& d = draws[pid];
        d.entry_age = rng.uniform_int(kMinEntryAge, kMaxEntryAge);
        d.eta.resize(c.n_waves);
        d.eps.resize(c.n_waves);

        const int last_age = d.entry_age + 2 * (c.n_waves - 1);
        if (c.health_generator == HealthGenerator::Canonical) {
            // Annual AR(1) from age 50, sampled at the person's wave ages.
            double eta = rng.normal(0.0, std::sqrt(c.sig2_0));
            const double snu = std::sqrt(c.sig2_nu);
            int w = 0;
            for (int age = kMinEntryAge; age <= last_age; ++age) {
                if (age >= d.entry_age && (age - d.entry_age) % 2 == 0)
                    d.eta[w++] = eta;
                eta = c.rho * eta + rng.normal(0.0, snu);
            }
        } else {
            // Biennial nonlinear steps starting at the entry age.
            double eta = rng.normal(0.0, std::sqrt(c.sig2_0));
            for (int w = 0; w < c.n_waves; ++w) {
                d.eta[w] = eta;
                eta = kinked_next(c, eta, rng.uniform());
            }
        }

        const double seps = std::sqrt(c.sig2_eps);
        for (int w = 0; w < c.n_waves; ++w) {
            if (c.eps_skew > 0.0) {
                // Negated shifted lognormal, scaled to variance sig2_eps:
                // gives the left-skewed shock distribution seen in the index.
                const double z = rng.normal();
                const double m = std::exp(0.5 * c.eps_skew * c.eps_skew);
                const double sd = m * std::sqrt(std::exp(c.eps_skew * c.eps_skew) - 1.0);
                d.eps[w] = -seps * (std::exp(c.eps_skew * z) - m) / sd;
            } else {
                d.eps[w] = rng.normal(0.0, seps);
            }
            const int age = d.entry_age + 2 * w;
            hresid_by_age[age].push_back(d.eta[w] + d.eps[w]);
        }
    }

    std::vector<double> pooled;
    for (auto& [age, v] : hresid_by_age)
        pooled.insert(pooled.end(), v.begin(), v.end());
    std::sort(pooled.begin(), pooled.end());
    std::map<int, std::array<double, 3>> cutoffs;  // 20/30/50th percentiles
    for (auto& [age, v] : hresid_by_age) {
        std::vector<double> s = v;
        std::sort(s.begin(), s.end());
        const std::vector<double>& src = (s.size() >= 50) ? s : pooled;
        cutoffs[age] = {quantile_sorted(src, 0.20), quantile_sorted(src, 0.30),
                        quantile_sorted(src, 0.50)};
    }
    auto quartile_of = [&](int age, double h) {
        const auto& cut = cutoffs.at(age);
        if (h < cut[0]) return 0;
        if (h < cut[1]) return 1;
        if (h < cut[2]) return 2;
        return 3;
    };
    auto annual_hazard = [&](int age, int q) {
        return std::min(1.0, c.mort_p50 * std::exp(c.mort_gompertz * (age - 50)) *
                                 c.mort_quartile_mult[q]);
    };

    // Pass 2: full records.
    Panel panel;
    panel.indicator_names.reserve(c.n_indicators);
    for (int j = 0; j < c.n_indicators; ++j)
        panel.indicator_names.push_back(j < 12 ? kDefaultIndicators[j]
                                               : "indicator" + std::to_string(j));

    std::vector<double> loads(c.n_indicators);
    for (int j = 0; j < c.n_indicators; ++j) loads[j] = 0.5 + 0.5 * (j % 3) / 2.0;

    for (int pid = 0; pid < c.n_persons; ++pid) {
        Rng rng(c.seed, static_cast<std::uint64_t>(pid) + 0x10000000ULL);
        const PersonDraws& d = draws[pid];
        const int birth_year = kFirstWaveYear - d.entry_age;

        const double edu_u = rng.uniform();
        const int education = edu_u < 0.3 ? 0 : (edu_u < 0.7 ? 1 : 2);
        const bool partner = rng.bernoulli(0.75);

        const int cohort_decade =
            static_cast<int>(std::floor((birth_year - 1946) / 10.0));
        const double fixed_effect =
            c.wealth_cohort_per_decade * cohort_decade + rng.normal(0.0, c.wealth_fe_sd);
        const double housing_share = rng.uniform(0.3, 0.7);

        double theta = rng.normal(0.0, std::sqrt(c.sig2_0_e));
        const double snue = std::sqrt(c.sig2_nu_e);

        bool dead = false;
        for (int w = 0; w < c.n_waves && !dead; ++w) {
            const int age = d.entry_age + 2 * w;
            PanelRecord rec;
            rec.person_id = pid;
            rec.wave = w;
            rec.age = age;
            rec.birth_year = birth_year;
            rec.education = education;
            rec.has_partner = partner;
            rec.unemployment_rate =
                c.unemployment_by_wave[w % c.unemployment_by_wave.size()];

            const double hresid = d.eta[w] + d.eps[w];
            const double x = age - 50.0;
            const double h_true = c.health_age1 * x + c.health_age2 * x * x +
                                  c.health_age3 * x * x * x +
                                  c.health_birth_year * (birth_year - 1945) +
                                  c.health_education * education +
                                  c.health_partner * (partner ? 1.0 : 0.0) + hresid;

            rec.indicators.resize(c.n_indicators);
            for (int j = 0; j < c.n_indicators; ++j) {
                double z = loads[j] * h_true + rng.normal(0.0, c.indicator_noise_sd);
                if (j < c.n_binary_indicators) z = z > 0.0 ? 1.0 : 0.0;
                rec.indicators[j] = z;
            }
            double latent = alpha[0];
            for (int j = 0; j < c.n_indicators; ++j)
                latent += alpha[j + 1] * rec.indicators[j];
            latent += rng.normal(0.0, c.reporting_noise_sd);
            rec.self_reported_good = latent > 0.0;

            const double pwork = logistic(c.work_b0 + c.work_b_age * (age - 60.0) +
                                          c.work_b_health * hresid);
            const bool works = rng.bernoulli(pwork);
            // Draws consumed regardless of the branch so that employment
            // status does not shift the stream for later waves.
            const double hours_draw = rng.normal(0.0, c.hours_sd);
            const double ups = rng.normal(0.0, std::sqrt(c.sig2_ups));
            if (works) {
                rec.hours_annual = std::max(
                    c.hours_min, c.hours_base + c.hours_age_slope * (age - 54.5) +
                                     c.hours_age_slope2 * std::max(0.0, age - 65.0) +
                                     hours_draw);
                const double logw = c.earn0 + c.earn_age * (age - 50.0) +
                                    c.earn_age2 * std::max(0.0, age - 65.0) +
                                    c.earn_h * hresid + theta + ups;
                rec.hourly_wage = std::exp(logw);
            } else {
                rec.hours_annual = 0.0;
            }

            const double wealth =
                std::max(0.0, c.wealth_a0 + c.wealth_a1 * x + c.wealth_a2 * x * x +
                                  fixed_effect +
                                  c.wealth_pi_u * (rec.unemployment_rate - 0.049) +
                                  rng.normal(0.0, c.wealth_noise_sd));
            rec.wealth_total = wealth;
            rec.housing_wealth = housing_share * wealth;

            // Biennial death probability spans two annual hazards.
            const int q = quartile_of(age, hresid);
            const double p1 = annual_hazard(age, q);
            const double p2 = annual_hazard(age + 1, q);
            const double p_bien = 1.0 - (1.0 - p1) * (1.0 - p2);
            dead = rng.bernoulli(p_bien);
            rec.dead_by_next_wave = dead;

            panel.records.push_back(std::move(rec));
            panel.truth.push_back({pid, w, latent, h_true, d.eta[w], d.eps[w], theta});

            // Annual wage persistence advanced two years per wave.
            theta = c.rho_e * theta + rng.normal(0.0, snue);
            theta = c.rho_e * theta + rng.normal(0.0, snue);
        }
    }
    return panel;
}

static const std::vector<std::string> kFixedColumns = {
    "person_id",      "wave",        "age",          "birth_year",
    "education",      "has_partner", "self_reported_good", "hourly_wage",
    "hours_annual",   "wealth_total", "housing_wealth", "dead_by_next_wave",
    "unemployment_rate"};

void save_panel(const Panel& panel, const std::string& path) {
    CsvTable t;
    t.columns = kFixedColumns;
    for (const auto& name : panel.indicator_names) t.columns.push_back("z_" + name);
    for (const auto& r : panel.records) {
        std::vector<std::string> row = {
            std::to_string(r.person_id),
            std::to_string(r.wave),
            format_double(r.age),
            std::to_string(r.birth_year),
            std::to_string(r.education),
            r.has_partner ? "1" : "0",
            r.self_reported_good ? "1" : "0",
            r.hourly_wage ? format_double(*r.hourly_wage) : "",
            format_double(r.hours_annual),
            format_double(r.wealth_total),
            format_double(r.housing_wealth),
            r.dead_by_next_wave ? "1" : "0",
            format_double(r.unemployment_rate)};
        for (double z : r.indicators) row.push_back(format_double(z));
        t.rows.push_back(std::move(row));
    }
    write_csv(path, t);
}

Panel load_panel(const std::string& path) {
    const CsvTable t = read_csv(path);
    Panel panel;
    std::vector<int> zcols;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        const std::string& name = t.columns[i];
        if (name.rfind("z_", 0) == 0) {
            zcols.push_back(static_cast<int>(i));
            panel.indicator_names.push_back(name.substr(2));
        } else if (std::find(kFixedColumns.begin(), kFixedColumns.end(), name) ==
                   kFixedColumns.end()) {
            throw LoadError(path + ": unknown column '" + name + "'");
        }
    }
    for (const auto& name : kFixedColumns) t.col_required(name);

    const int c_pid = t.col("person_id"), c_wave = t.col("wave"), c_age = t.col("age"),
              c_by = t.col("birth_year"), c_edu = t.col("education"),
              c_par = t.col("has_partner"), c_srg = t.col("self_reported_good"),
              c_wage = t.col("hourly_wage"), c_hrs = t.col("hours_annual"),
              c_wt = t.col("wealth_total"), c_hw = t.col("housing_wealth"),
              c_dead = t.col("dead_by_next_wave"), c_u = t.col("unemployment_rate");

    std::unordered_map<int, int> last_wave;
    std::unordered_map<int, bool> person_dead;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = path + ": row " + std::to_string(i + 2);
        PanelRecord r;
        try {
            r.person_id = std::stoi(row[c_pid]);
            r.wave = std::stoi(row[c_wave]);
            r.age = std::stod(row[c_age]);
            r.birth_year = std::stoi(row[c_by]);
            r.education = std::stoi(row[c_edu]);
            r.has_partner = row[c_par] == "1";
            r.self_reported_good = row[c_srg] == "1";
            if (!row[c_wage].empty()) r.hourly_wage = std::stod(row[c_wage]);
            r.hours_annual = std::stod(row[c_hrs]);
            r.wealth_total = std::stod(row[c_wt]);
            r.housing_wealth = std::stod(row[c_hw]);
            r.dead_by_next_wave = row[c_dead] == "1";
            r.unemployment_rate = std::stod(row[c_u]);
            for (int zc : zcols) r.indicators.push_back(std::stod(row[zc]));
        } catch (const std::invalid_argument&) {
            throw LoadError(where + ": malformed numeric field");
        }
        if (r.age < 50.0) throw LoadError(where + ": age below 50");
        if (r.hours_annual < 0.0) throw LoadError(where + ": negative hours");
        auto it = last_wave.find(r.person_id);
        if (it != last_wave.end()) {
            if (r.wave <= it->second)
                throw LoadError(where + ": wave not strictly increasing for person " +
                                std::to_string(r.person_id));
            if (person_dead[r.person_id])
                throw LoadError(where + ": record after death for person " +
                                std::to_string(r.person_id));
        }
        last_wave[r.person_id] = r.wave;
        person_dead[r.person_id] = r.dead_by_next_wave;
        panel.records.push_back(std::move(r));
    }
    return panel;
}

void save_truth(const Panel& panel, const std::string& path) {
    CsvTable t;
    t.columns = {"person_id", "wave", "latent", "h_true", "eta", "eps", "theta"};
    for (const auto& r : panel.truth)
        t.rows.push_back({std::to_string(r.person_id), std::to_string(r.wave),
                          format_double(r.latent), format_double(r.h_true),
                          format_double(r.eta), format_double(r.eps),
                          format_double(r.theta)});
    write_csv(path, t);
}

void load_truth(Panel& panel, const std::string& path) {
    const CsvTable t = read_csv(path);
    const int c_pid = t.col_required("person_id"), c_wave = t.col_required("wave"),
              c_lat = t.col_required("latent"), c_ht = t.col_required("h_true"),
              c_eta = t.col_required("eta"), c_eps = t.col_required("eps"),
              c_th = t.col_required("theta");
    panel.truth.clear();
    for (const auto& row : t.rows)
        panel.truth.push_back({std::stoi(row[c_pid]), std::stoi(row[c_wave]),
                               std::stod(row[c_lat]), std::stod(row[c_ht]),
                               std::stod(row[c_eta]), std::stod(row[c_eps]),
                               std::stod(row[c_th])});
}

std::vector<SummaryBand> panel_summary(const Panel& panel) {
    if (panel.records.empty()) throw ConfigError("panel_summary: empty panel");
    std::vector<SummaryBand> bands(3);
    bands[0].label = "50-59"; bands[0].age_lo = 50; bands[0].age_hi = 59;
    bands[1].label = "60-69"; bands[1].age_lo = 60; bands[1].age_hi = 69;
    bands[2].label = "70-90"; bands[2].age_lo = 70; bands[2].age_hi = 90;
    for (auto& b : bands) {
        int n = 0, n_work = 0;
        double hours = 0.0, earnings = 0.0, wealth = 0.0;
        for (const auto& r : panel.records) {
            if (r.age < b.age_lo || r.age > b.age_hi) continue;
            ++n;
            wealth += r.wealth_total;
            if (r.working()) {
                ++n_work;
                hours += r.hours_annual;
                if (r.hourly_wage) earnings += r.hours_annual * *r.hourly_wage;
            }
        }
        b.n_obs = n;
        if (n > 0) {
            b.pct_working = 100.0 * n_work / n;
            b.mean_wealth = wealth / n;
        }
        if (n_work > 0) {
            b.mean_hours = hours / n_work;
            b.mean_earnings = earnings / n_work;
        }
    }
    return bands;
}

}  // namespace hc
