#include "mottsf/equilibrium.hpp"
#include "mottsf/errors.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

using namespace mottsf;

namespace {

// The charge-n block {|g1,n-1>, |e,n-1>, |g2,n>} written out by hand.
double sector_energy_oracle(int n, const ModelParams& p) {
    if (n == 0) return p.delta1 - p.delta2;
    Eigen::Matrix3d b;
    b << 0.0, p.omega, 0.0, p.omega, p.delta1, p.g * std::sqrt(double(n)), 0.0, p.g * std::sqrt(double(n)),
        p.delta1 - p.delta2;
    return Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(b).eigenvalues()(0);
}

oracle::Mat meanfield_oracle(int n_max, const ModelParams& p, double mu, double k, oracle::cplx psi) {
    const oracle::Mat a = oracle::field(n_max);
    const double zk = p.z * k;
    return oracle::hamiltonian(n_max, p.g, p.omega, p.delta1, p.delta2) - zk * (a * std::conj(psi) + a.adjoint() * psi) +
           zk * std::norm(psi) * oracle::Mat::Identity(a.rows(), a.cols()) - mu * oracle::number_commuting(n_max);
}

// Second-order sum over the full spectrum of H0 - mu N.
double kc_oracle(int n_max, const ModelParams& p, double mu) {
    Eigen::SelfAdjointEigenSolver<oracle::Mat> es(meanfield_oracle(n_max, p, mu, 0.0, 0.0));
    const oracle::Mat x = oracle::field(n_max) + oracle::field(n_max).adjoint();
    const oracle::Mat m = es.eigenvectors().adjoint() * x * es.eigenvectors();
    double s = 0.0;
    for (Eigen::Index n = 1; n < m.rows(); ++n) s += std::norm(m(n, 0)) / (es.eigenvalues()(0) - es.eigenvalues()(n));
    return -1.0 / (p.z * s);
}

}  // namespace

TEST_CASE("sector energies match the hand-written 3x3 blocks") {
    ModelParams p;
    for (int n = 0; n <= 6; ++n) CHECK(sector_ground_energy(n, p) == doctest::Approx(sector_energy_oracle(n, p)).epsilon(1e-13));
    // Frozen from the oracle above.
    CHECK(sector_ground_energy(1, p) == doctest::Approx(-3.4170623002032547).epsilon(1e-14));
}

TEST_CASE("lobe boundaries are sector energy differences") {
    ModelParams p;
    const std::vector<int> charges{0, 1, 2, 3};
    const auto b = lobe_boundaries(p, charges);
    REQUIRE(b.size() == 4u);
    for (std::size_t i = 0; i < b.size(); ++i) {
        const int n = charges[i];
        CHECK(b[i].charge_low == n);
        CHECK(b[i].mu_boundary ==
              doctest::Approx(sector_energy_oracle(n + 1, p) - sector_energy_oracle(n, p)).epsilon(1e-12));
    }
    CHECK(b[0].mu_boundary == doctest::Approx(-9.917062300203256).epsilon(1e-13));
    // Attractive effective interaction: the N = 1 lobe has negative width.
    CHECK(b[2].mu_boundary < b[1].mu_boundary);
    CHECK(b[2].collapsed);
    CHECK_THROWS_AS(lobe_boundaries(p, std::vector<int>{2, 1}), std::invalid_argument);
}

TEST_CASE("without coupling or drive all N >= 1 boundaries coincide") {
    ModelParams p;
    const std::vector<int> charges{1, 2, 3, 4};
    for (int which = 0; which < 2; ++which) {
        ModelParams q = p;
        (which == 0 ? q.omega : q.g) = 0.0;
        const auto b = lobe_boundaries(q, charges);
        for (const auto& x : b) CHECK(std::abs(x.mu_boundary - b[0].mu_boundary) <= 1e-8);
    }
}

TEST_CASE("mean-field energy matches the Kronecker oracle and is phase independent") {
    ModelParams p;
    HilbertSpace s(5);
    for (double psi : {0.0, 0.2, 0.7}) {
        const LatticePoint pt{-0.4, 0.15};
        Eigen::SelfAdjointEigenSolver<oracle::Mat> es(meanfield_oracle(5, p, pt.mu, pt.k, psi));
        CHECK(ground_energy_value(s, p, pt, psi) == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
        const auto rotated = ground_energy(s, p, pt, std::polar(psi, 1.234));
        CHECK(rotated.energy == doctest::Approx(es.eigenvalues()(0)).epsilon(1e-12));
        CHECK(mean_field_hamiltonian(s, p, pt, std::polar(psi, 0.5)).hermiticity_defect() <= 1e-15);
    }
}

TEST_CASE("perturbative critical hopping") {
    SUBCASE("free photons") {
        ModelParams p;
        p.omega = 0.0;
        p.g = 0.0;
        HilbertSpace s(6);
        for (double mu : {-0.2, -0.4, -0.6})
            CHECK(std::abs(perturbative_critical_hopping(s, p, mu) - oracle::free_photon_kc(mu, p.z)) <= 1e-10);
    }
    SUBCASE("full model against the spectral-sum oracle") {
        ModelParams p;
        HilbertSpace s(8);
        for (double mu : {-0.5, -0.3}) {
            const double kc = perturbative_critical_hopping(s, p, mu);
            CHECK(kc == doctest::Approx(kc_oracle(8, p, mu)).epsilon(1e-10));
        }
        CHECK(perturbative_critical_hopping(s, p, -0.5) == doctest::Approx(0.11658).epsilon(1e-4));
    }
    SUBCASE("lobe edge is degenerate") {
        ModelParams p;
        HilbertSpace s(8);
        const double edge = lobe_boundaries(p, std::vector<int>{0})[0].mu_boundary;
        CHECK_THROWS_AS(perturbative_critical_hopping(s, p, edge), DegenerateGroundState);
    }
}

TEST_CASE("order parameter") {
    ModelParams p;
    HilbertSpace s(8);
    const auto mi = order_parameter(s, p, {-0.5, 0.0});
    CHECK(mi.phase == Phase::MI);
    CHECK(mi.psi == 0.0);
    CHECK(mi.mean_n == doctest::Approx(std::round(mi.mean_n)).epsilon(1e-12));

    // These parameters have an attractive effective interaction: past the
    // boundary the condensate runs to the edge of the search interval.
    const auto runaway = order_parameter(s, p, {-0.5, 0.3});
    CHECK(runaway.phase == Phase::SF);
    CHECK(runaway.at_search_bound);
    CHECK(runaway.psi == doctest::Approx(psi_search_bound(s)));
}

TEST_CASE("interior superfluid minimum at resonance") {
    ModelParams p;
    p.omega = 0.5;
    p.delta1 = 0.0;
    p.delta2 = 0.0;
    HilbertSpace s(10);
    const LatticePoint pt{-0.8, 1.1 * perturbative_critical_hopping(s, p, -0.8)};
    const auto sf = order_parameter(s, p, pt);
    CHECK(sf.phase == Phase::SF);
    CHECK_FALSE(sf.at_search_bound);
    CHECK(sf.psi > 0.1);
    CHECK(sf.psi < 0.6);
    const double e0 = ground_energy_value(s, p, pt, sf.psi);
    CHECK(e0 <= ground_energy_value(s, p, pt, sf.psi * 1.01) + 1e-12);
    CHECK(e0 <= ground_energy_value(s, p, pt, sf.psi * 0.99) + 1e-12);
    CHECK(e0 < ground_energy_value(s, p, pt, 0.0));
}

TEST_CASE("free-photon onset of psi follows -mu/z") {
    ModelParams p;
    p.omega = 0.0;
    p.g = 0.0;
    HilbertSpace s(6);
    const double mu = -0.4;
    const double kc = oracle::free_photon_kc(mu, p.z);
    CHECK(order_parameter(s, p, {mu, 0.95 * kc}).phase == Phase::MI);
    CHECK(order_parameter(s, p, {mu, 1.05 * kc}).phase == Phase::SF);
}

TEST_CASE("grand-canonical charge picks the lowest E(N) - mu N") {
    ModelParams p;
    for (double mu : {-12.0, -5.0, -0.5, 0.5}) {
        const int n = grand_canonical_charge(p, mu, 6);
        for (int m = 0; m <= 6; ++m)
            CHECK(sector_energy_oracle(n, p) - mu * n <= sector_energy_oracle(m, p) - mu * m + 1e-12);
    }
}
