#include "doctest.h"
#include "hc/csv.hpp"
#include "hc/errors.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"
#include "hc/wealth_profile.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace hc;

namespace {

// Panel where wealth follows a known cubic + unemployment + fixed effect.
Panel cubic_panel(double p1, double p2, double p3, double pi_u, std::uint64_t seed,
                  int n_persons = 4000, int n_waves = 5) {
    Panel p;
    const std::vector<double> urate = {0.051, 0.048, 0.047, 0.072, 0.056};
    for (int i = 0; i < n_persons; ++i) {
        Rng rng(seed, i);
        const int birth_year = 1938 + (i % 25);
        const double fe = 80000.0 + 20000.0 * rng.normal() +
                          1500.0 * (birth_year - 1945);  // cohort trend
        const double age0 = 50.0 + rng.uniform() * 10.0;
        for (int w = 0; w < n_waves; ++w) {
            PanelRecord r;
            r.person_id = i;
            r.wave = w;
            r.age = age0 + 2.0 * w;
            r.birth_year = birth_year;
            r.unemployment_rate = urate[w % urate.size()];
            const double x = r.age - 50.0;
            r.wealth_total = fe + p1 * x + p2 * x * x + p3 * x * x * x +
                             pi_u * r.unemployment_rate + 3000.0 * rng.normal();
            p.records.push_back(r);
        }
    }
    return p;
}

}  // namespace

TEST_CASE("housing deflation is the identity when prices track the real return") {
    Panel p;
    for (int w = 0; w < 3; ++w) {
        PanelRecord r;
        r.person_id = 1;
        r.wave = w;
        r.age = 55 + 2 * w;
        r.housing_wealth = 100000.0;
        r.wealth_total = 150000.0;
        p.records.push_back(r);
    }
    std::map<int, double> idx;
    for (int y = 1995; y <= 2015; ++y) idx[y] = std::pow(1.02, y - 2004);
    Panel q = p;
    deflate_housing(q, idx);
    for (std::size_t i = 0; i < p.records.size(); ++i) {
        CHECK(q.records[i].housing_wealth ==
              doctest::Approx(p.records[i].housing_wealth).epsilon(1e-12));
        CHECK(q.records[i].wealth_total ==
              doctest::Approx(p.records[i].wealth_total).epsilon(1e-12));
    }

    SUBCASE("a price boom above the real return is removed") {
        std::map<int, double> boom;
        for (int y = 1995; y <= 2015; ++y) boom[y] = std::pow(1.08, y - 2004);
        Panel b = p;
        deflate_housing(b, boom);
        // 2002 wave: prices below reference, housing scaled up, then the
        // 2006 wave must come out lower than the 2002 one in real terms.
        CHECK(b.records[0].housing_wealth > b.records[2].housing_wealth);
        // Total moves one-for-one with the housing adjustment.
        CHECK(b.records[2].wealth_total - p.records[2].wealth_total ==
              doctest::Approx(b.records[2].housing_wealth -
                              p.records[2].housing_wealth).epsilon(1e-9));
    }
}

TEST_CASE("within estimation recovers the cubic age profile") {
    const double p1 = 9000.0, p2 = -80.0, p3 = -1.2, pi_u = -250000.0;
    const Panel p = cubic_panel(p1, p2, p3, pi_u, 15, 20000, 6);
    const WealthProfileModel m = fit_wealth_profile(p);
    REQUIRE(m.pi.size() == 3);
    CHECK(m.pi[0] == doctest::Approx(p1).epsilon(0.05));
    CHECK(m.pi[1] == doctest::Approx(p2).epsilon(0.10));
    CHECK(m.pi[2] == doctest::Approx(p3).epsilon(0.25));
    REQUIRE(m.pi_u.has_value());
    CHECK(*m.pi_u == doctest::Approx(pi_u).epsilon(0.15));
    // Cohort means reflect the generated trend: later cohorts richer.
    REQUIRE(m.cohort_mean.count("1936-1945") == 1);
    REQUIRE(m.cohort_mean.count("1946-1955") == 1);
    CHECK(m.cohort_mean.at("1946-1955") > m.cohort_mean.at("1936-1945") + 5000.0);

    SUBCASE("profile substitution identity for a one-cohort average") {
        const auto prof = simulate_profile(m, "1946-1955", 0.049, 50, 85);
        REQUIRE(prof.size() == 36);
        // With every fixed effect re-centered on one cohort, the profile is
        // age_part + pi_u * U + E[f | cohort] exactly.
        const double base = m.cohort_mean.at("1946-1955") + *m.pi_u * 0.049;
        for (const auto& pt : prof)
            CHECK(pt.mean_wealth ==
                  doctest::Approx(m.age_part(pt.age) + base).epsilon(1e-9));
    }
}

TEST_CASE("constant unemployment is flagged as collinear") {
    Panel p = cubic_panel(8000.0, -60.0, -1.0, 0.0, 4, 1500);
    for (auto& r : p.records) r.unemployment_rate = 0.05;
    const WealthProfileModel m = fit_wealth_profile(p);
    CHECK(!m.pi_u.has_value());
    CHECK(m.pi[0] == doctest::Approx(8000.0).epsilon(0.08));
}

TEST_CASE("single-wave persons are dropped and counted") {
    Panel p = cubic_panel(8000.0, -60.0, -1.0, -1e5, 6, 1200);
    PanelRecord lone;
    lone.person_id = 999999;
    lone.wave = 0;
    lone.age = 57;
    lone.birth_year = 1949;
    lone.wealth_total = 1e6;  // would be wildly influential if kept
    p.records.push_back(lone);
    const WealthProfileModel m = fit_wealth_profile(p);
    CHECK(m.dropped_single_wave == 1);
    for (int pid : m.person_ids) CHECK(pid != 999999);
}

TEST_CASE("cohort labels use ten-year bins anchored at 1946") {
    CHECK(WealthProfileModel::cohort_label(1946) == "1946-1955");
    CHECK(WealthProfileModel::cohort_label(1955) == "1946-1955");
    CHECK(WealthProfileModel::cohort_label(1956) == "1956-1965");
    CHECK(WealthProfileModel::cohort_label(1945) == "1936-1945");
    CHECK(WealthProfileModel::cohort_label(1936) == "1936-1945");
}

TEST_CASE("price index loader and age profile writer") {
    const std::string ip = "/tmp/hc_prices.csv";
    {
        std::ofstream f(ip);
        f << "year,index\n2002,0.83\n2004,1.0\n2006,1.21\n";
    }
    std::map<int, double> idx;
    load_price_index(ip, idx);
    CHECK(idx.at(2002) == doctest::Approx(0.83).epsilon(1e-12));
    CHECK(idx.at(2006) == doctest::Approx(1.21).epsilon(1e-12));
    std::remove(ip.c_str());

    const std::string op = "/tmp/hc_prof.csv";
    save_age_profile({{55, 128000.0}, {65, 169000.0}}, op);
    const CsvTable t = read_csv(op);
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][t.col_required("age")] == "65");
    CHECK(std::stod(t.rows[1][t.col_required("mean_wealth")]) ==
          doctest::Approx(169000.0).epsilon(1e-9));
    std::remove(op.c_str());
}

TEST_CASE("generated panel yields an increasing cohort-corrected profile") {
    SynthConfig c;
    c.n_persons = 12000;
    c.seed = 2;
    Panel p = generate_panel(c);
    std::map<int, double> idx;
    for (int y = 1995; y <= 2020; ++y) idx[y] = std::pow(1.02, y - 2004);
    deflate_housing(p, idx);
    const WealthProfileModel m = fit_wealth_profile(p);
    const auto prof = simulate_profile(m);
    REQUIRE(prof.size() == 36);
    auto at_age = [&](int age) {
        for (const auto& pt : prof)
            if (pt.age == age) return pt.mean_wealth;
        return -1.0;
    };
    // Reference layout: roughly 128k / 169k / 193k at 55 / 65 / 76.
    CHECK(at_age(55) == doctest::Approx(128000.0).epsilon(0.15));
    CHECK(at_age(65) == doctest::Approx(169000.0).epsilon(0.15));
    CHECK(at_age(76) == doctest::Approx(193000.0).epsilon(0.20));
    CHECK(at_age(65) > at_age(55));
    CHECK(at_age(76) > at_age(65));
}
