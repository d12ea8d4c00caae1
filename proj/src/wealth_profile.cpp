#include "hc/wealth_profile.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/stats.hpp"

namespace hc {

void deflate_housing(Panel& panel, const std::map<int, double>& price_index,
                     int reference_year, double real_return, int base_year,
                     int wave_years) {
    const auto ref = price_index.find(reference_year);
    if (ref == price_index.end())
        throw ConfigError("deflate_housing: index missing reference year " +
                          std::to_string(reference_year));
    for (auto& r : panel.records) {
        const int year = base_year + wave_years * r.wave;
        const auto it = price_index.find(year);
        if (it == price_index.end())
            throw ConfigError("deflate_housing: index missing year " +
                              std::to_string(year));
        const double idx = it->second / ref->second;
        const double corrected = r.housing_wealth / idx *
                                 std::pow(1.0 + real_return, year - reference_year);
        r.wealth_total += corrected - r.housing_wealth;
        r.housing_wealth = corrected;
    }
}

double WealthProfileModel::age_part(double age) const {
    const double a = age - 50.0;
    double v = 0.0, pow_a = 1.0;
    for (double c : pi) {
        pow_a *= a;
        v += c * pow_a;
    }
    return v;
}

std::string WealthProfileModel::cohort_label(int birth_year) {
    const int lo = ((birth_year - 6) / 10) * 10 + 6;  // ...1936-1945, 1946-1955...
    return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

WealthProfileModel fit_wealth_profile(const Panel& panel) {
    // Group record indices by person; drop single-wave persons.
    std::map<int, std::vector<std::size_t>> by_person;
    for (std::size_t i = 0; i < panel.records.size(); ++i)
        by_person[panel.records[i].person_id].push_back(i);

    WealthProfileModel m;
    std::vector<const std::vector<std::size_t>*> keep;
    for (const auto& [pid, idxs] : by_person) {
        (void)pid;
        if (idxs.size() < 2) ++m.dropped_single_wave;
        else keep.push_back(&idxs);
    }
    if (keep.empty()) throw EstimationError("fit_wealth_profile: no multi-wave persons");

    // Check for unemployment variation (within persons).
    double u_within_var = 0.0;
    for (const auto* idxs : keep) {
        double mu = 0.0;
        for (std::size_t i : *idxs) mu += panel.records[i].unemployment_rate;
        mu /= idxs->size();
        for (std::size_t i : *idxs) {
            const double d = panel.records[i].unemployment_rate - mu;
            u_within_var += d * d;
        }
    }
    const bool use_u = u_within_var > 1e-10;
    const int k = 3 + (use_u ? 1 : 0);

    std::size_t n = 0;
    for (const auto* idxs : keep) n += idxs->size();
    Eigen::MatrixXd X(n, k);
    Eigen::VectorXd y(n);
    std::size_t row = 0;
    for (const auto* idxs : keep) {
        const std::size_t lo = row;
        for (std::size_t i : *idxs) {
            const PanelRecord& r = panel.records[i];
            const double a = r.age - 50.0;
            X(row, 0) = a;
            X(row, 1) = a * a;
            X(row, 2) = a * a * a;
            if (use_u) X(row, 3) = r.unemployment_rate;
            y(row) = r.wealth_total;
            ++row;
        }
        // Within transform: demean per person.
        const std::size_t cnt = row - lo;
        const Eigen::RowVectorXd xm = X.middleRows(lo, cnt).colwise().mean();
        const double ym = y.segment(lo, cnt).mean();
        X.middleRows(lo, cnt).rowwise() -= xm;
        y.segment(lo, cnt).array() -= ym;
    }
    const Eigen::VectorXd beta = ols(X, y);
    m.pi = {beta(0), beta(1), beta(2)};
    if (use_u) m.pi_u = beta(3);

    // Fixed effects and cohort means.
    for (const auto* idxs : keep) {
        const PanelRecord& r0 = panel.records[(*idxs)[0]];
        double fe = 0.0;
        for (std::size_t i : *idxs) {
            const PanelRecord& r = panel.records[i];
            fe += r.wealth_total - m.age_part(r.age) -
                  (use_u ? *m.pi_u * r.unemployment_rate : 0.0);
        }
        fe /= idxs->size();
        m.person_ids.push_back(r0.person_id);
        m.fe.push_back(fe);
        m.cohorts.push_back(WealthProfileModel::cohort_label(r0.birth_year));
    }
    std::map<std::string, std::pair<double, int>> acc;
    for (std::size_t i = 0; i < m.fe.size(); ++i) {
        acc[m.cohorts[i]].first += m.fe[i];
        acc[m.cohorts[i]].second += 1;
    }
    for (const auto& [c, s] : acc) m.cohort_mean[c] = s.first / s.second;
    return m;
}

std::vector<AgeProfilePoint> simulate_profile(const WealthProfileModel& model,
                                              const std::string& cohort,
                                              double unemployment, int first_age,
                                              int last_age) {
    const auto it = model.cohort_mean.find(cohort);
    if (it == model.cohort_mean.end())
        throw ConfigError("simulate_profile: unknown cohort " + cohort);
    double fe_mean = 0.0;
    for (std::size_t i = 0; i < model.fe.size(); ++i)
        fe_mean += model.fe[i] - model.cohort_mean.at(model.cohorts[i]) + it->second;
    fe_mean /= model.fe.size();
    const double u_term = model.pi_u ? *model.pi_u * unemployment : 0.0;

    std::vector<AgeProfilePoint> out;
    for (int age = first_age; age <= last_age; ++age)
        out.push_back({age, fe_mean + model.age_part(age) + u_term});
    return out;
}

void load_price_index(const std::string& path, std::map<int, double>& index) {
    const CsvTable t = read_csv(path);
    const int cy = t.col_required("year"), ci = t.col_required("index");
    index.clear();
    for (const auto& row : t.rows) index[std::stoi(row[cy])] = std::stod(row[ci]);
}

void save_age_profile(const std::vector<AgeProfilePoint>& profile,
                      const std::string& path) {
    CsvTable t;
    t.columns = {"age", "mean_wealth"};
    for (const auto& p : profile)
        t.rows.push_back({std::to_string(p.age), format_double(p.mean_wealth)});
    write_csv(path, t);
}

}  // namespace hc
