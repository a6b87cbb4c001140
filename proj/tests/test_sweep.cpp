#include "mottsf/errors.hpp"
#include "mottsf/sweep.hpp"

#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>

using namespace mottsf;

namespace {

// NaN-aware exact comparison of two tables.
bool same_rows(const SweepTable& a, const SweepTable& b) {
    if (a.rows.size() != b.rows.size()) return false;
    const auto eq = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const SweepRow& x = a.rows[i];
        const SweepRow& y = b.rows[i];
        if (!eq(x.mu, y.mu) || !eq(x.k, y.k) || !eq(x.psi_abs, y.psi_abs) || x.phase != y.phase ||
            !eq(x.mean_n, y.mean_n) || !eq(x.var_n, y.var_n) || x.g2 != y.g2 || !eq(x.mean_N, y.mean_N) ||
            !eq(x.kc_overlay, y.kc_overlay) || x.label != y.label || x.n_attractors != y.n_attractors ||
            x.trunc_flag != y.trunc_flag || x.error != y.error)
            return false;
    }
    return true;
}

GridSpec small_grid(SweepMode mode, int count) {
    GridSpec g;
    g.mu = {-1.0, 0.0, count};
    g.k = {0.0, 0.3, count};
    g.n_max = 4;
    g.mode = mode;
    if (mode == SweepMode::dissipative) g.params.kappa = g.params.gamma1 = g.params.gamma2 = 0.01;
    return g;
}

}  // namespace

TEST_CASE("axis ranges") {
    const auto v = AxisRange{-1.0, 0.0, 5}.values();
    REQUIRE(v.size() == 5u);
    CHECK(v.front() == -1.0);
    CHECK(v.back() == 0.0);
    CHECK(v[2] == doctest::Approx(-0.5));
    CHECK_THROWS_AS(AxisRange({0.0, 1.0, 1}).validate("k"), std::invalid_argument);
    CHECK_THROWS_AS(AxisRange({1.0, 0.0, 4}).validate("k"), std::invalid_argument);
}

TEST_CASE("cell seeds are distinct and stable") {
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < 1000; ++i) seen.insert(cell_seed(42, i));
    CHECK(seen.size() == 1000u);
    CHECK(cell_seed(42, 7) == cell_seed(42, 7));
    CHECK(cell_seed(42, 7) != cell_seed(43, 7));
}

TEST_CASE("parallel_for covers every index and rethrows the first failure") {
    std::vector<int> hits(100, 0);
    parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
    for (int h : hits) CHECK(h == 1);
    CHECK_THROWS_WITH(parallel_for(10, 3,
                                   [](std::size_t i) {
                                       if (i == 3) throw std::runtime_error("three");
                                       if (i == 8) throw std::runtime_error("eight");
                                   }),
                      "three");
}

TEST_CASE("equilibrium sweep") {
    const GridSpec g = small_grid(SweepMode::equilibrium, 8);
    const SweepTable one = run_equilibrium_sweep(g, {.workers = 1});
    REQUIRE(one.rows.size() == 64u);
    CHECK(one.failed_cells == 0);
    // Row-major: mu outer, k inner.
    CHECK(one.rows[1].mu == one.rows[0].mu);
    CHECK(one.rows[8].k == one.rows[0].k);

    CHECK(same_rows(one, run_equilibrium_sweep(g, {.workers = 3})));
    CHECK(same_rows(one, run_equilibrium_sweep(g, {.workers = 1})));

    const HilbertSpace s(g.n_max);
    for (const auto& row : one.rows) {
        if (row.k == 0.0) CHECK(row.phase == Phase::MI);
        double kc = 0.0;
        try {
            kc = perturbative_critical_hopping(s, g.params, row.mu);
        } catch (const DegenerateGroundState&) {
            kc = std::nan("");
        }
        CHECK(((std::isnan(kc) && std::isnan(row.kc_overlay)) || kc == row.kc_overlay));
    }
    CHECK(one.truncation.n_max == g.n_max + 4);
    CHECK(one.truncation.points == 4);
    CHECK_THROWS_AS(run_dissipative_sweep(g), std::invalid_argument);
}

TEST_CASE("cancellation marks the remaining cells") {
    const std::atomic<bool> stop{true};
    const SweepTable t = run_equilibrium_sweep(small_grid(SweepMode::equilibrium, 3), {.stop = &stop});
    CHECK(t.failed_cells == 9);
    for (const auto& row : t.rows) {
        CHECK(row.error == "cancelled");
        CHECK(std::isnan(row.psi_abs));
    }
}

TEST_CASE("dissipative sweep is deterministic and warm starts do not change results") {
    const GridSpec g = small_grid(SweepMode::dissipative, 10);
    const SweepTable warm = run_dissipative_sweep(g, {.workers = 1});
    CHECK(warm.failed_cells == 0);
    CHECK(same_rows(warm, run_dissipative_sweep(g, {.workers = 4})));

    const SweepTable cold = run_dissipative_sweep(g, {.workers = 1, .warm_start = false});
    REQUIRE(cold.rows.size() == warm.rows.size());
    for (std::size_t i = 0; i < warm.rows.size(); ++i) {
        CHECK(std::abs(warm.rows[i].psi_abs - cold.rows[i].psi_abs) <= 1e-6);
        CHECK(warm.rows[i].phase == cold.rows[i].phase);
        CHECK(warm.rows[i].label.has_value());
    }
    CHECK_THROWS_AS(run_equilibrium_sweep(g), std::invalid_argument);
}

TEST_CASE("observable cuts") {
    ModelParams p;
    const SweepTable t = run_observable_cuts(p, {-0.6, -0.2}, {0.0, 0.3, 4}, 4, false);
    REQUIRE(t.rows.size() == 8u);
    CHECK(t.rows[0].mu == -0.6);
    CHECK(t.rows[4].mu == -0.2);
    CHECK(t.rows[3].k == doctest::Approx(0.3));
}

TEST_CASE("spectra need a dissipative steady state") {
    ModelParams p;
    const std::vector<LatticePoint> pts{{-0.3, 0.13}};
    CHECK_THROWS_AS(run_spectra(p, pts, {Channel::a}, {0.0, 1.0}, 3, 0.01), std::invalid_argument);
    p.kappa = p.gamma1 = p.gamma2 = 0.05;
    const auto rec = run_spectra(p, pts, {Channel::a, Channel::sigma1_minus}, {-1.0, 0.0, 1.0}, 3, 0.01);
    REQUIRE(rec.size() == 2u);
    CHECK(rec[0].spectrum.channel == Channel::a);
    CHECK(rec[1].spectrum.channel == Channel::sigma1_minus);
}
