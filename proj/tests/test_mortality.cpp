#include "doctest.h"
#include "hc/errors.hpp"
#include "hc/mortality.hpp"
#include "hc/rng.hpp"
#include "hc/stats.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

using namespace hc;

namespace {

HealthCutoffs flat_cutoffs() {
    HealthCutoffs c;
    for (int a = 50; a <= 88; a += 2) {
        c.ages.push_back(a);
        c.cutoffs.push_back({-0.84, -0.52, 0.0});  // N(0,1) p20/p30/p50
    }
    return c;
}

// Panel with known biennial death probabilities per health quartile.
Panel death_panel(const std::array<double, 4>& p_biennial, int n, std::uint64_t seed,
                  std::vector<std::optional<double>>& health) {
    Panel p;
    Rng rng(seed);
    const HealthCutoffs cuts = flat_cutoffs();
    int id = 0;
    for (int i = 0; i < n; ++i) {
        const double h = rng.normal();
        bool alive = true;
        for (int w = 0; w < 5 && alive; ++w) {
            PanelRecord r;
            r.person_id = id;
            r.wave = w;
            r.age = 52 + 2 * w;
            const int q = cuts.quartile(static_cast<int>(r.age), h);
            r.dead_by_next_wave = rng.bernoulli(p_biennial[q]);
            alive = !r.dead_by_next_wave;
            p.records.push_back(r);
            health.push_back(h);
        }
        ++id;
    }
    return p;
}

}  // namespace

TEST_CASE("quartile assignment uses the 20/30/50 cutoffs") {
    const HealthCutoffs c = flat_cutoffs();
    CHECK(c.quartile(60, -1.0) == 0);
    CHECK(c.quartile(60, -0.6) == 1);
    CHECK(c.quartile(60, -0.2) == 2);
    CHECK(c.quartile(60, 0.5) == 3);
    CHECK(c.quartile(49, -1.0) == 0);   // nearest covered age
    CHECK(c.quartile(100, 0.5) == 3);
}

TEST_CASE("biennial 0.19 converts to annual 0.1 exactly") {
    // 1 - (1 - 0.1)^2 = 0.19, so the inversion must return 0.1 exactly.
    std::vector<std::optional<double>> health;
    const Panel p = death_panel({0.19, 0.19, 0.19, 0.19}, 40000, 5, health);
    const RawRates raw = estimate_mortality(p, health, flat_cutoffs());
    REQUIRE(!raw.band_lo.empty());
    int checked = 0;
    for (std::size_t b = 0; b < raw.band_lo.size(); ++b)
        for (int q = 0; q < 4; ++q)
            if (raw.annual[b][q] && raw.counts[b][q] > 2000) {
                CHECK(*raw.annual[b][q] == doctest::Approx(0.1).epsilon(0.12));
                ++checked;
            }
    CHECK(checked >= 8);
    // Exactness of the inversion itself on a constructed frequency: a panel
    // in which exactly 19 of 100 die has annual rate 0.1 to machine precision.
    Panel tiny;
    std::vector<std::optional<double>> th;
    for (int i = 0; i < 100; ++i) {
        PanelRecord r;
        r.person_id = i;
        r.wave = 0;
        r.age = 60;
        r.dead_by_next_wave = i < 19;
        tiny.records.push_back(r);
        th.push_back(1.0);  // all top quartile
    }
    const RawRates rt = estimate_mortality(tiny, th, flat_cutoffs());
    bool found = false;
    for (std::size_t b = 0; b < rt.band_lo.size(); ++b)
        if (rt.band_lo[b] == 60 && rt.annual[b][3]) {
            CHECK(*rt.annual[b][3] == doctest::Approx(0.1).epsilon(1e-12));
            found = true;
        }
    CHECK(found);
}

TEST_CASE("no deaths give zero hazard; doubled hazard doubles the estimate") {
    std::vector<std::optional<double>> h0, h1, h2;
    const Panel p0 = death_panel({0.0, 0.0, 0.0, 0.0}, 5000, 2, h0);
    const RawRates r0 = estimate_mortality(p0, h0, flat_cutoffs());
    for (std::size_t b = 0; b < r0.band_lo.size(); ++b)
        for (int q = 0; q < 4; ++q)
            if (r0.annual[b][q]) CHECK(*r0.annual[b][q] == 0.0);

    const Panel p1 = death_panel({0.04, 0.04, 0.04, 0.04}, 60000, 3, h1);
    const Panel p2 = death_panel({0.08, 0.08, 0.08, 0.08}, 60000, 4, h2);
    const RawRates ra = estimate_mortality(p1, h1, flat_cutoffs());
    const RawRates rb = estimate_mortality(p2, h2, flat_cutoffs());
    double sa = 0.0, sb = 0.0;
    int n = 0;
    for (std::size_t b = 0; b < ra.band_lo.size(); ++b)
        for (int q = 0; q < 4; ++q)
            if (ra.annual[b][q] && rb.annual[b][q] && ra.counts[b][q] > 1000) {
                sa += *ra.annual[b][q];
                sb += *rb.annual[b][q];
                ++n;
            }
    REQUIRE(n > 4);
    const double ratio = sb / sa;
    CHECK(ratio > 1.8);
    CHECK(ratio < 2.2);
}

TEST_CASE("rescaled table hits the life table exactly") {
    std::vector<std::optional<double>> health;
    const Panel p = death_panel({0.12, 0.08, 0.05, 0.03}, 50000, 9, health);
    const RawRates raw = estimate_mortality(p, health, flat_cutoffs());

    std::vector<int> lt_ages;
    std::vector<double> lt_rates;
    for (int a = 50; a <= 85; ++a) {
        lt_ages.push_back(a);
        lt_rates.push_back(0.004 * std::exp(0.09 * (a - 50)));
    }
    const MortalityTable t =
        rescale_to_lifetable(raw, lt_ages, lt_rates, flat_cutoffs());
    t.validate();
    REQUIRE(t.ages.size() == 36);
    for (std::size_t a = 0; a < t.ages.size(); ++a) {
        if (t.clipped > 0) break;  // identity not required on clipped rows
        double w = 0.0;
        for (int q = 0; q < 4; ++q) w += kQuartileWeights[q] * t.death[a][q];
        CHECK(std::abs(w - t.lifetable[a]) < 1e-10);
    }
    // Mortality gradient in health is preserved by the common factor.
    for (std::size_t a = 0; a < t.ages.size(); ++a) {
        CHECK(t.death[a][0] >= t.death[a][1]);
        CHECK(t.death[a][2] >= t.death[a][3]);
    }
    CHECK(t.prob(60, -2.0) > t.prob(60, 2.0));

    SUBCASE("huge life-table rates trigger clipping") {
        std::vector<double> big(lt_rates);
        for (double& r : big) r = std::min(0.999, r * 60.0);
        const MortalityTable tb =
            rescale_to_lifetable(raw, lt_ages, big, flat_cutoffs());
        CHECK(tb.clipped > 0);
        tb.validate();  // must skip clipped rows, not throw
    }

    SUBCASE("mort_v1 round trip") {
        const std::string path = "/tmp/hc_mort.csv";
        save_mortality_table(t, path);
        const MortalityTable r = load_mortality_table(path);
        CHECK(r.ages == t.ages);
        REQUIRE(r.death.size() == t.death.size());
        for (std::size_t a = 0; a < t.death.size(); ++a)
            for (int q = 0; q < 4; ++q)
                CHECK(r.death[a][q] == doctest::Approx(t.death[a][q]).epsilon(1e-12));
        CHECK(r.lifetable == t.lifetable);
        r.validate();
        std::remove(path.c_str());
    }
}

TEST_CASE("survival curve is a cumulative product") {
    MortalityTable t;
    t.cutoffs = flat_cutoffs();
    for (int a = 50; a <= 85; ++a) {
        t.ages.push_back(a);
        t.death.push_back({0.1, 0.1, 0.1, 0.1});
        t.lifetable.push_back(0.1);
        t.factors.push_back(1.0);
    }
    t.validate();
    // Flat 0.1 rates in every quartile: survival is 0.9^k regardless of
    // the health path.
    std::vector<double> path(36, 0.3);
    const std::vector<double> s = survival_curve(t, path);
    REQUIRE(s.size() == path.size());
    CHECK(s[0] == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(s[1] == doctest::Approx(0.81).epsilon(1e-12));
    CHECK(s[2] == doctest::Approx(0.729).epsilon(1e-12));
    // Monotone decreasing.
    for (std::size_t k = 1; k < s.size(); ++k) CHECK(s[k] < s[k - 1]);
}

TEST_CASE("lifetable loader reads age/rate pairs") {
    const std::string path = "/tmp/hc_lt.csv";
    {
        std::ofstream f(path);
        f << "age,annual_death_rate\n50,0.004\n51,0.0045\n52,0.005\n";
    }
    std::vector<int> ages;
    std::vector<double> rates;
    load_lifetable(path, ages, rates);
    CHECK(ages == std::vector<int>({50, 51, 52}));
    CHECK(rates[1] == doctest::Approx(0.0045).epsilon(1e-12));
    std::remove(path.c_str());
}
