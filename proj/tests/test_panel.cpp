#include "doctest.h"
#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/panel.hpp"
#include "hc/stats.hpp"

#include <cstdio>
#include <filesystem>
#include <map>

using namespace hc;

namespace {
SynthConfig small_config() {
    SynthConfig c;
    c.n_persons = 2000;
    c.n_waves = 5;
    c.seed = 7;
    return c;
}
}  // namespace

TEST_CASE("generator is deterministic by seed") {
    const Panel a = generate_panel(small_config());
    const Panel b = generate_panel(small_config());
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); i += 97) {
        CHECK(a.records[i].person_id == b.records[i].person_id);
        CHECK(a.records[i].age == b.records[i].age);
        CHECK(a.records[i].hours_annual == b.records[i].hours_annual);
        CHECK(a.records[i].wealth_total == b.records[i].wealth_total);
    }
    SynthConfig c2 = small_config();
    c2.seed = 8;
    const Panel c = generate_panel(c2);
    bool differs = false;
    for (std::size_t i = 0; i < std::min(a.records.size(), c.records.size()); ++i)
        if (a.records[i].wealth_total != c.records[i].wealth_total) differs = true;
    CHECK(differs);
}

TEST_CASE("generated panel satisfies structural invariants") {
    const Panel p = generate_panel(small_config());
    REQUIRE(!p.records.empty());
    CHECK(p.truth.size() == p.records.size());
    std::map<int, int> last_wave;
    std::map<int, bool> dead;
    for (const auto& r : p.records) {
        CHECK(r.age >= 50.0);
        CHECK(r.hours_annual >= 0.0);
        CHECK(!dead[r.person_id]);  // nothing recorded after death
        if (last_wave.count(r.person_id)) CHECK(r.wave > last_wave[r.person_id]);
        last_wave[r.person_id] = r.wave;
        if (r.dead_by_next_wave) dead[r.person_id] = true;
        if (r.working()) CHECK(r.hourly_wage.has_value());
        else CHECK(!r.hourly_wage.has_value());
    }
}

TEST_CASE("descriptive bands are near the reference layout") {
    SynthConfig c;
    c.n_persons = 20000;
    c.seed = 1;
    const Panel p = generate_panel(c);
    const auto bands = panel_summary(p);
    REQUIRE(bands.size() == 3);
    // Reference: % working 79.5 / 40.7 / 6.8; hours 1926 / 1597 / 950.
    CHECK(bands[0].pct_working == doctest::Approx(79.5).epsilon(0.04));
    CHECK(bands[1].pct_working == doctest::Approx(40.7).epsilon(0.05));
    CHECK(bands[2].pct_working < 12.0);
    CHECK(*bands[0].mean_hours == doctest::Approx(1926).epsilon(0.05));
    CHECK(*bands[1].mean_hours == doctest::Approx(1597).epsilon(0.05));
    CHECK(*bands[2].mean_hours == doctest::Approx(950).epsilon(0.15));
    CHECK(*bands[0].mean_earnings == doctest::Approx(16775).epsilon(0.05));
    CHECK(bands[0].mean_wealth > 100000.0);
    CHECK(bands[1].mean_wealth > bands[0].mean_wealth);
}

TEST_CASE("panel and truth round trip through panel_v1/truth_v1") {
    SynthConfig c = small_config();
    c.n_persons = 300;
    Panel p = generate_panel(c);
    const std::string dir = "/tmp/hc_panel_rt";
    std::filesystem::create_directories(dir);
    save_panel(p, dir + "/panel.csv");
    save_truth(p, dir + "/truth.csv");
    Panel q = load_panel(dir + "/panel.csv");
    REQUIRE(q.records.size() == p.records.size());
    CHECK(q.indicator_names == p.indicator_names);
    for (std::size_t i = 0; i < p.records.size(); i += 41) {
        CHECK(q.records[i].age == p.records[i].age);
        CHECK(q.records[i].indicators == p.records[i].indicators);
        CHECK(q.records[i].self_reported_good == p.records[i].self_reported_good);
    }
    load_truth(q, dir + "/truth.csv");
    REQUIRE(q.truth.size() == p.truth.size());
    CHECK(q.truth[5].eta == p.truth[5].eta);
    std::filesystem::remove_all(dir);
}

TEST_CASE("loader rejects invalid rows naming the row") {
    SynthConfig c = small_config();
    c.n_persons = 50;
    Panel p = generate_panel(c);
    const std::string path = "/tmp/hc_panel_bad.csv";
    save_panel(p, path);
    CsvTable t = read_csv(path);
    t.rows[3][t.col_required("hours_annual")] = "-5";
    write_csv(path, t);
    try {
        load_panel(path);
        CHECK(false);
    } catch (const LoadError& e) {
        CHECK(std::string(e.what()).find("row") != std::string::npos);
    }
    std::remove(path.c_str());
}

TEST_CASE("canonical truth matches the configured process at entry") {
    SynthConfig c;
    c.n_persons = 20000;
    c.n_waves = 3;
    c.seed = 4;
    const Panel p = generate_panel(c);
    std::vector<double> eta0, resid0;
    for (std::size_t i = 0; i < p.records.size(); ++i)
        if (p.records[i].wave == 0 && p.records[i].age < 51.0) {
            eta0.push_back(p.truth[i].eta);
            resid0.push_back(p.truth[i].eta + p.truth[i].eps);
        }
    REQUIRE(eta0.size() > 300);
    CHECK(variance(eta0) == doctest::Approx(c.sig2_0).epsilon(0.15));
    CHECK(variance(resid0) == doctest::Approx(c.sig2_0 + c.sig2_eps).epsilon(0.15));
    // Transitory shocks are left-skewed by construction.
    std::vector<double> eps;
    for (const auto& tr : p.truth) eps.push_back(tr.eps);
    CHECK(skewness(eps) < -0.2);
}

TEST_CASE("kinked generator produces a monotone but asymmetric process") {
    SynthConfig c = small_config();
    c.health_generator = HealthGenerator::Kinked;
    c.n_persons = 5000;
    const Panel p = generate_panel(c);
    CHECK(p.records.size() > 1000);
    // Persistence asymmetry in truth: regression of eta' on eta separately
    // below/above zero shows higher slope below.
    std::map<int, std::vector<std::pair<int, double>>> by_person;
    for (std::size_t i = 0; i < p.truth.size(); ++i)
        by_person[p.truth[i].person_id].push_back({p.truth[i].wave, p.truth[i].eta});
    // At bad health the low-rank conditional quantile moves almost
    // one-for-one with eta while the high-rank quantile mean-reverts:
    // compare quantile slopes across two bins of previous eta.
    std::vector<double> bin_lo, bin_hi;  // next-period eta by prev bin
    for (const auto& [pid, series] : by_person) {
        (void)pid;
        for (std::size_t j = 1; j < series.size(); ++j) {
            const double prev = series[j - 1].second, next = series[j].second;
            if (prev > -1.3 && prev < -0.7) bin_lo.push_back(next);
            if (prev > -0.3 && prev < 0.0) bin_hi.push_back(next);
        }
    }
    REQUIRE(bin_lo.size() > 100);
    REQUIRE(bin_hi.size() > 100);
    const double gap = 0.85;  // distance between the bin centers (-1.0, -0.15)
    const double slope_tau_low =
        (quantile(bin_hi, 0.1) - quantile(bin_lo, 0.1)) / gap;
    const double slope_tau_high =
        (quantile(bin_hi, 0.9) - quantile(bin_lo, 0.9)) / gap;
    CHECK(slope_tau_low > slope_tau_high + 0.2);
}

TEST_CASE("config validation rejects bad settings") {
    SynthConfig c;
    c.rho = 1.2;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    SynthConfig c2;
    c2.n_persons = 0;
    CHECK_THROWS_AS(c2.validate(), ConfigError);
}
