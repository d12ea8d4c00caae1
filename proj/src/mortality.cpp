#include "hc/mortality.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hc/csv.hpp"
#include "hc/errors.hpp"

namespace hc {

int HealthCutoffs::quartile(int age, double h) const {
    if (ages.empty()) throw ConfigError("health cutoffs: empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < ages.size(); ++i)
        if (std::abs(ages[i] - age) < std::abs(ages[best] - age)) best = i;
    const auto& c = cutoffs[best];
    if (h < c[0]) return 0;
    if (h < c[1]) return 1;
    if (h < c[2]) return 2;
    return 3;
}

RawRates estimate_mortality(const Panel& panel,
                            const std::vector<std::optional<double>>& health,
                            const HealthCutoffs& cutoffs) {
    if (health.size() != panel.records.size())
        throw ConfigError("estimate_mortality: health/panel size mismatch");

    std::map<int, std::array<std::pair<int, int>, 4>> cells;  // band -> (deaths, at-risk)
    for (std::size_t i = 0; i < panel.records.size(); ++i) {
        if (!health[i]) continue;
        const PanelRecord& r = panel.records[i];
        const int age = static_cast<int>(r.age);
        const int band = age - (age - 50) % 2;
        const int q = cutoffs.quartile(age, *health[i]);
        auto& cell = cells[band][q];
        cell.second += 1;
        if (r.dead_by_next_wave) cell.first += 1;
    }

    RawRates out;
    for (const auto& [band, qs] : cells) {
        out.band_lo.push_back(band);
        std::array<std::optional<double>, 4> annual;
        std::array<int, 4> counts{};
        for (int q = 0; q < 4; ++q) {
            counts[q] = qs[q].second;
            if (qs[q].second == 0) {
                ++out.empty_cells;
                continue;
            }
            const double p_bi = static_cast<double>(qs[q].first) / qs[q].second;
            annual[q] = 1.0 - std::sqrt(1.0 - p_bi);
        }
        out.annual.push_back(annual);
        out.counts.push_back(counts);
    }
    return out;
}

double MortalityTable::prob(int age, double h) const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < ages.size(); ++i)
        if (std::abs(ages[i] - age) < std::abs(ages[best] - age)) best = i;
    return death[best][cutoffs.quartile(age, h)];
}

void MortalityTable::validate() const {
    for (std::size_t a = 0; a < ages.size(); ++a) {
        double w = 0.0;
        bool clipped_here = false;
        for (int q = 0; q < 4; ++q) {
            if (death[a][q] < 0.0 || death[a][q] > 1.0)
                throw ConfigError("mortality table: probability outside [0,1]");
            if (death[a][q] >= 1.0) clipped_here = true;
            w += kQuartileWeights[q] * death[a][q];
        }
        if (!clipped_here && std::abs(w - lifetable[a]) > 1e-10)
            throw ConfigError("mortality table: weighted rate off life table at age " +
                              std::to_string(ages[a]));
    }
}

MortalityTable rescale_to_lifetable(const RawRates& raw,
                                    const std::vector<int>& lifetable_ages,
                                    const std::vector<double>& lifetable_rates,
                                    const HealthCutoffs& cutoffs, int first_age,
                                    int last_age) {
    if (lifetable_ages.size() != lifetable_rates.size())
        throw ConfigError("rescale_to_lifetable: life-table columns misaligned");
    std::map<int, double> lt;
    for (std::size_t i = 0; i < lifetable_ages.size(); ++i)
        lt[lifetable_ages[i]] = lifetable_rates[i];

    MortalityTable out;
    out.cutoffs = cutoffs;
    for (int age = first_age; age <= last_age; ++age) {
        const auto it = lt.find(age);
        if (it == lt.end())
            throw ConfigError("rescale_to_lifetable: life table missing age " +
                              std::to_string(age));
        out.ages.push_back(age);
        out.lifetable.push_back(it->second);

        // Nearest band with data; missing quartile cells inherit the band's
        // weighted mean.
        std::size_t band = 0;
        double bd = 1e9;
        for (std::size_t b = 0; b < raw.band_lo.size(); ++b) {
            const double d = std::abs(raw.band_lo[b] + 0.5 - age);
            bool has_any = false;
            for (int q = 0; q < 4; ++q) has_any = has_any || raw.annual[b][q].has_value();
            if (has_any && d < bd) { bd = d; band = b; }
        }
        if (raw.band_lo.empty() || bd >= 1e9)
            throw EstimationError("rescale_to_lifetable: no estimated rates");
        std::array<double, 4> rate{};
        double wsum = 0.0, w = 0.0;
        for (int q = 0; q < 4; ++q)
            if (raw.annual[band][q]) {
                wsum += kQuartileWeights[q] * *raw.annual[band][q];
                w += kQuartileWeights[q];
            }
        const double fill = w > 0 ? wsum / w : 0.0;
        for (int q = 0; q < 4; ++q) rate[q] = raw.annual[band][q].value_or(fill);

        double weighted = 0.0;
        for (int q = 0; q < 4; ++q) weighted += kQuartileWeights[q] * rate[q];
        double factor;
        if (weighted <= 0.0) {
            // Degenerate band: fall back to the flat life-table rate.
            for (int q = 0; q < 4; ++q) rate[q] = it->second;
            factor = 1.0;
        } else {
            factor = it->second / weighted;
            for (int q = 0; q < 4; ++q) {
                rate[q] *= factor;
                if (rate[q] > 1.0) { rate[q] = 1.0; ++out.clipped; }
            }
        }
        out.factors.push_back(factor);
        out.death.push_back(rate);
    }
    out.validate();
    return out;
}

std::vector<double> survival_curve(const MortalityTable& table,
                                   const std::vector<double>& health_path) {
    if (health_path.size() > table.ages.size())
        throw ConfigError("survival_curve: path longer than table");
    std::vector<double> s;
    double cum = 1.0;
    for (std::size_t i = 0; i < health_path.size(); ++i) {
        cum *= 1.0 - table.death[i][table.cutoffs.quartile(table.ages[i], health_path[i])];
        s.push_back(cum);
    }
    return s;
}

void load_lifetable(const std::string& path, std::vector<int>& ages,
                    std::vector<double>& rates) {
    const CsvTable t = read_csv(path);
    const int ca = t.col_required("age"), cr = t.col_required("annual_death_rate");
    ages.clear();
    rates.clear();
    for (const auto& row : t.rows) {
        ages.push_back(std::stoi(row[ca]));
        rates.push_back(std::stod(row[cr]));
    }
}

void save_mortality_table(const MortalityTable& t, const std::string& path) {
    CsvTable csv;
    csv.columns = {"section", "age", "q", "value"};
    auto push = [&](const std::string& sec, int age, int q, double v) {
        csv.rows.push_back({sec, std::to_string(age), std::to_string(q), format_double(v)});
    };
    push("schema_mort_v1", 0, 0, 1.0);
    for (std::size_t a = 0; a < t.ages.size(); ++a) {
        for (int q = 0; q < 4; ++q) push("death", t.ages[a], q, t.death[a][q]);
        push("lifetable", t.ages[a], 0, t.lifetable[a]);
        push("factor", t.ages[a], 0, t.factors[a]);
    }
    for (std::size_t a = 0; a < t.cutoffs.ages.size(); ++a)
        for (int q = 0; q < 3; ++q)
            push("cutoff", t.cutoffs.ages[a], q, t.cutoffs.cutoffs[a][q]);
    write_csv(path, csv);
}

MortalityTable load_mortality_table(const std::string& path) {
    const CsvTable csv = read_csv(path);
    if (csv.rows.empty() || csv.rows[0][0] != "schema_mort_v1")
        throw LoadError(path + ": not a mort_v1 file");
    MortalityTable t;
    std::map<int, std::array<double, 4>> death;
    std::map<int, double> life, fac;
    std::map<int, std::array<double, 3>> cuts;
    for (const auto& row : csv.rows) {
        const std::string& sec = row[0];
        const int age = std::stoi(row[1]), q = std::stoi(row[2]);
        const double v = std::stod(row[3]);
        if (sec == "death") death[age][q] = v;
        else if (sec == "lifetable") life[age] = v;
        else if (sec == "factor") fac[age] = v;
        else if (sec == "cutoff") cuts[age][q] = v;
    }
    for (const auto& [age, d] : death) {
        t.ages.push_back(age);
        t.death.push_back(d);
        t.lifetable.push_back(life.at(age));
        t.factors.push_back(fac.count(age) ? fac.at(age) : 1.0);
    }
    for (const auto& [age, c] : cuts) {
        t.cutoffs.ages.push_back(age);
        t.cutoffs.cutoffs.push_back(c);
    }
    return t;
}

}  // namespace hc
