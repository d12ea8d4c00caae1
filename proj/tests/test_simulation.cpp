#include "doctest.h"
#include "hc/errors.hpp"
#include "hc/simulation.hpp"
#include "test_support.hpp"

#include <cmath>
#include <cstdio>
#include <map>

using namespace hc;
using hc::test::small_inputs;

namespace {

struct SolvedModel {
    SolverInputs in;
    Solution sol;
};

const SolvedModel& model() {
    static SolvedModel m = [] {
        SolvedModel s;
        s.in = small_inputs(50, 85, 12, 3, 3, 3, 2);
        s.sol = solve(s.in);
        return s;
    }();
    return m;
}

}  // namespace

TEST_CASE("simulated histories satisfy the accounting identities") {
    const auto& m = model();
    InitialConditions init;
    init.assets_pool = {0.0, 10000.0, 60000.0};
    const Histories hs = simulate_histories(m.sol, m.in, init, 500, 11);
    REQUIRE(hs.items.size() == 500);
    int checked = 0;
    for (const auto& hist : hs.items) {
        for (int k = 0; k < hist.periods(); ++k) {
            const int age = hist.first_age + k;
            // Time budget: leisure strictly positive.
            const double phi_h = time_cost(hist.h[k], m.in.params);
            CHECK(m.in.params.L - hist.s[k] - phi_h > 0.0);
            // No work from 70.
            if (age >= 70) CHECK(hist.s[k] == 0.0);
            // Consumption floor.
            CHECK(hist.c[k] >= m.in.params.cbar - 1e-9);
            // Budget identity, including the recorded tax and transfer.
            const NetResources nr = net_resources(hist.a[k], hist.s[k], hist.wage[k],
                                                  hist.p[k], age, m.in.params);
            CHECK(std::abs(hist.tax[k] - nr.tax) < 1e-9);
            CHECK(std::abs(hist.tr[k] - nr.tr) < 1e-9);
            if (k + 1 < hist.periods()) {
                const double avail =
                    nr.resources - work_cost(hist.s[k], age, m.in.params);
                CHECK(std::abs(avail - hist.c[k] - hist.a[k + 1]) < 1e-9);
                // Pension accrual stops at 65.
                if (age >= 65) CHECK(hist.p[k + 1] == hist.p[k]);
                else
                    CHECK(std::abs(hist.p[k + 1] - hist.p[k] -
                                   m.in.params.c_p * hist.s[k] * hist.wage[k]) < 1e-9);
            }
            ++checked;
        }
        if (hist.death_age >= 0) {
            CHECK(hist.periods() == hist.death_age - hist.first_age);
        }
    }
    CHECK(checked > 5000);
}

TEST_CASE("simulation is deterministic and uses common random numbers") {
    const auto& m = model();
    const InitialConditions init;
    const Histories a = simulate_histories(m.sol, m.in, init, 300, 5);
    const Histories b = simulate_histories(m.sol, m.in, init, 300, 5);
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        CHECK(a.items[i].a == b.items[i].a);
        CHECK(a.items[i].eta_idx == b.items[i].eta_idx);
        CHECK(a.items[i].death_age == b.items[i].death_age);
    }
    // A different shock arm consumes the same draws: pre-shock periods agree.
    ShockSpec spec;
    spec.tau_init = 0.1;
    spec.tau_shock = 0.1;
    const Histories c = simulate_histories(m.sol, m.in, init, 300, 5, spec);
    int agree = 0;
    for (std::size_t i = 0; i < a.items.size(); ++i) {
        if (a.items[i].periods() < 2 || c.items[i].periods() < 2) continue;
        CHECK(a.items[i].a[0] == c.items[i].a[0]);
        CHECK(a.items[i].th_idx[0] == c.items[i].th_idx[0]);
        CHECK(a.items[i].eps_idx[0] == c.items[i].eps_idx[0]);
        ++agree;
    }
    CHECK(agree > 200);
}

TEST_CASE("moment vector has exactly the targeted layout") {
    const auto& m = model();
    const Histories hs = simulate_histories(m.sol, m.in, InitialConditions{}, 2000, 3);
    const auto mom = compute_moments(hs);
    REQUIRE(mom.size() == 135);
    std::map<std::string, int> kinds;
    for (const auto& mt : mom) ++kinds[mt.kind];
    CHECK(kinds["assets"] == 35);
    CHECK(kinds["hours"] == 20);
    CHECK(kinds["participation"] == 80);
    for (const auto& mt : mom) {
        if (mt.kind == "assets") {
            CHECK(mt.age >= 50);
            CHECK(mt.age <= 84);
            REQUIRE(mt.value.has_value());
            CHECK(*mt.value >= 0.0);
        } else {
            CHECK(mt.age <= 69);
        }
        if (mt.kind == "participation") {
            CHECK(mt.quartile >= 0);
            CHECK(mt.quartile <= 3);
            if (mt.value) {
                CHECK(*mt.value >= 0.0);
                CHECK(*mt.value <= 1.0);
            }
        }
    }
}

TEST_CASE("self-differenced median arm is identically zero") {
    const auto& m = model();
    ShockExperiment ex;
    ex.tau_init = 0.5;
    ex.tau_shock = 0.5;
    ex.n_histories = 2000;
    ex.seed = 9;
    const DiffProfiles d = counterfactual_shock(ex, m.sol, m.in);
    REQUIRE(!d.ages.empty());
    for (std::size_t k = 0; k < d.ages.size(); ++k) {
        CHECK(d.d_health[k] == 0.0);
        CHECK(d.d_assets[k] == 0.0);
        CHECK(d.d_participation[k] == 0.0);
        CHECK(d.d_hours[k] == 0.0);
        CHECK(d.cov_assets[k] == d.cov_assets_median[k]);
    }
}

TEST_CASE("bad shocks hurt and good shocks help") {
    const auto& m = model();
    ShockExperiment bad;
    bad.tau_init = 0.5;
    bad.tau_shock = 0.05;
    bad.n_histories = 4000;
    bad.seed = 9;
    const DiffProfiles db = counterfactual_shock(bad, m.sol, m.in);
    ShockExperiment good = bad;
    good.tau_shock = 0.95;
    const DiffProfiles dg = counterfactual_shock(good, m.sol, m.in);
    // Health moves in the right direction from the shock age on.
    const int k52 = 2;  // ages[2] = 52
    REQUIRE(db.ages[k52] == 52);
    CHECK(db.d_health[k52] < 0.0);
    CHECK(dg.d_health[k52] > 0.0);
    // Assets eventually respond in the same direction.
    CHECK(db.d_assets.back() < dg.d_assets.back());
}

TEST_CASE("willingness to pay: zero for equal arms, ordered otherwise") {
    const auto& m = model();
    const double w_eq = willingness_to_pay(m.sol, m.in, 0.5, 0.3, 0.3, 10000.0);
    CHECK(std::abs(w_eq) <= 1.0);
    // A forced bad shock against the unconstrained arm costs something.
    const double w_bad = willingness_to_pay(m.sol, m.in, 0.5, 0.05, std::nullopt, 10000.0);
    CHECK(w_bad >= 0.0);
    // Weakly decreasing as the forced shock improves.
    const double w_mid = willingness_to_pay(m.sol, m.in, 0.5, 0.5, std::nullopt, 10000.0);
    const double w_good = willingness_to_pay(m.sol, m.in, 0.5, 0.95, std::nullopt, 10000.0);
    CHECK(w_bad >= w_mid - 1.0);
    CHECK(w_mid >= w_good - 1.0);
}

TEST_CASE("inequality metrics on constructed histories") {
    Histories hs;
    hs.first_age = 50;
    hs.last_age = 52;
    // Five survivors with flat asset paths 10k..50k; person i earns
    // 1000*i per period before 65.
    for (int i = 1; i <= 5; ++i) {
        History h;
        h.first_age = 50;
        for (int k = 0; k < 3; ++k) {
            h.a.push_back(10000.0 * i);
            h.h.push_back(0.0);
            h.wage.push_back(10.0);
            h.s.push_back(100.0 * i);
            h.c.push_back(2000.0);
            h.p.push_back(0.0);
            h.tax.push_back(0.0);
            h.tr.push_back(0.0);
            h.eta_idx.push_back(0);
            h.eps_idx.push_back(0);
            h.th_idx.push_back(0);
        }
        hs.items.push_back(h);
    }
    const InequalityTable t = inequality_metrics(hs);
    REQUIRE(t.assets_8020.has_value());
    // Lifetime means are 10k..50k; p80/p20 = 42000/18000.
    CHECK(*t.assets_8020 == doctest::Approx(42000.0 / 18000.0).epsilon(1e-9));
    CHECK(t.earn65_zero_share == 0.0);
    REQUIRE(!t.cov_assets.empty());
    // CoV of {10k..50k}: sd/mean with sample sd.
    const double cv = std::sqrt(2.5e8) / 30000.0;
    CHECK(t.cov_assets[0] == doctest::Approx(cv).epsilon(1e-9));

    SUBCASE("scale invariance of the ratio metrics") {
        Histories scaled = hs;
        for (auto& h : scaled.items) {
            for (double& a : h.a) a *= 7.0;
            for (double& w : h.wage) w *= 7.0;
        }
        const InequalityTable s = inequality_metrics(scaled);
        CHECK(*s.assets_8020 == doctest::Approx(*t.assets_8020).epsilon(1e-12));
        CHECK(s.cov_assets[0] == doctest::Approx(t.cov_assets[0]).epsilon(1e-12));
        if (t.earn65_sdlog && s.earn65_sdlog)
            CHECK(*s.earn65_sdlog == doctest::Approx(*t.earn65_sdlog).epsilon(1e-9));
    }
}

TEST_CASE("decomposition with all channels off ignores the health seed") {
    const auto& m = model();
    const InitialConditions init;
    const std::set<Channel> all = {Channel::Mortality, Channel::TimeCost,
                                   Channel::Wages};
    const OutcomeRow r1 = decompose_channels(all, 0.5, m.in, init, 800, 21);
    const OutcomeRow r2 = decompose_channels(all, 0.5, m.in, init, 800, 21);
    CHECK(r1.assets == r2.assets);
    CHECK(r1.employment == r2.employment);
    CHECK(r1.hours == r2.hours);
    CHECK(r1.income == r2.income);

    SUBCASE("removing the time cost raises employment") {
        const OutcomeRow base = decompose_channels({}, 0.5, m.in, init, 1500, 21);
        const OutcomeRow notc =
            decompose_channels({Channel::TimeCost}, 0.75, m.in, init, 1500, 21, &base);
        CHECK(notc.employment >= base.employment);
        CHECK(notc.pct_employment >= 0.0);
    }
}

TEST_CASE("tidy writers produce loadable files") {
    const auto& m = model();
    const Histories hs = simulate_histories(m.sol, m.in, InitialConditions{}, 400, 2);
    const auto mom = compute_moments(hs);
    save_moments(mom, "/tmp/hc_moments.csv");
    const InequalityTable t = inequality_metrics(hs);
    save_inequality(t, "/tmp/hc_ineq.csv");
    std::remove("/tmp/hc_moments.csv");
    std::remove("/tmp/hc_ineq.csv");
}
