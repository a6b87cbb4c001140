#include "mottsf/probes.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace mottsf;

namespace {

Liouvillian two_level(const HilbertSpace& s, double omega, double delta, double gamma) {
    ModelParams p;
    p.g = 0.0;
    p.omega = omega;
    p.delta1 = delta;
    p.delta2 = 0.0;
    p.gamma1 = gamma;
    p.kappa = 1.0;
    auto jumps = model_jumps(s, p);
    jumps.push_back({atomic(s, AtomicOp::sigma3_minus), 1.0});
    return build_liouvillian(s, single_site_hamiltonian(s, p), std::move(jumps));
}

}  // namespace

TEST_CASE("photon statistics of reference states") {
    HilbertSpace s(30);
    SUBCASE("Fock state") {
        Vector v = Vector::Zero(s.dim());
        v(HilbertSpace::index(Level::g2, 3)) = 1.0;
        const auto o = observables(s, v);
        CHECK(o.mean_n == doctest::Approx(3.0));
        CHECK(o.var_n == doctest::Approx(0.0));
        REQUIRE(o.g2);
        CHECK(*o.g2 == doctest::Approx(2.0 / 3.0));
        CHECK(o.mean_N == doctest::Approx(3.0));
    }
    SUBCASE("coherent state") {
        const double alpha = 1.3;
        Vector v = Vector::Zero(s.dim());
        double c = std::exp(-0.5 * alpha * alpha);
        for (int n = 0; n <= s.n_max(); ++n) {
            v(HilbertSpace::index(Level::g1, n)) = c;
            c *= alpha / std::sqrt(n + 1.0);
        }
        const auto o = observables(s, Matrix(v * v.adjoint()));
        CHECK(o.mean_n == doctest::Approx(alpha * alpha).epsilon(1e-10));
        CHECK(o.var_n == doctest::Approx(alpha * alpha).epsilon(1e-10));
        CHECK(*o.g2 == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(o.psi - alpha) <= 1e-10);
        CHECK(o.mean_N == doctest::Approx(alpha * alpha + 1.0).epsilon(1e-10));
    }
    SUBCASE("vacuum has no g2") {
        Vector v = Vector::Zero(s.dim());
        v(0) = 1.0;
        CHECK_FALSE(observables(s, v).g2.has_value());
    }
}

TEST_CASE("channels") {
    CHECK(parse_channel("a") == Channel::a);
    CHECK(parse_channel("sigma1-") == Channel::sigma1_minus);
    CHECK(parse_channel("sigma2") == Channel::sigma2_minus);
    CHECK_THROWS_AS(parse_channel("b"), std::invalid_argument);
    HilbertSpace s(2);
    CHECK(channel_operator(s, Channel::a).matrix() == annihilation(s).matrix());
}

TEST_CASE("transform of an exponential correlation is a Lorentzian") {
    const double w0 = 2.0;
    const double gamma = 1.0;
    const double n = 0.7;
    const auto tau = uniform_grid(0.0, 60.0, 0.005);
    std::vector<cplx> g1;
    for (double t : tau) g1.push_back(n * std::exp(cplx{-0.5 * gamma, -w0} * t));
    const auto omega = uniform_grid(-5.0, 5.0, 0.05);
    const auto sp = emission_spectrum(g1, tau, omega, n);
    REQUIRE(sp.flag == SpectrumFlag::normal);
    for (std::size_t i = 0; i < omega.size(); ++i)
        CHECK(std::abs(sp.values[i] - oracle::lorentzian(omega[i], w0, gamma)) <= 1e-4);
    const auto peaks = find_peaks(sp, 0.01);
    REQUIRE(peaks.size() == 1u);
    CHECK(peaks[0].omega == doctest::Approx(w0));

    CHECK(emission_spectrum(g1, tau, omega, 0.0).flag == SpectrumFlag::no_emission);
    CHECK_THROWS_AS(emission_spectrum(g1, omega, omega, n), std::invalid_argument);
}

TEST_CASE("first-order correlation matches the superoperator exponential") {
    HilbertSpace s(1);
    const double omega = 1.0, delta = 0.5, gamma = 0.4;
    const Liouvillian l = two_level(s, omega, delta, gamma);
    const SteadyState ss = steady_state(l);
    const Operator alpha = channel_operator(s, Channel::sigma1_minus);
    const std::vector<double> tau{0.0, 0.7, 2.0};
    const auto g1 = first_order_correlation(l, ss.rho, alpha, tau);

    const oracle::Mat a = oracle::on_emitter(1, oracle::ket_bra(0, 2));
    const oracle::Mat big = oracle::superoperator(oracle::hamiltonian(1, 0.0, omega, delta, 0.0),
                                                  {{oracle::field(1), 1.0}, {a, gamma},
                                                   {oracle::on_emitter(1, oracle::ket_bra(0, 1)), 1.0}});
    Eigen::ComplexEigenSolver<oracle::Mat> es(big);
    const oracle::Mat vinv = es.eigenvectors().inverse();
    const cplx mean = (a * ss.rho).trace();
    for (std::size_t k = 0; k < tau.size(); ++k) {
        const oracle::Mat e =
            es.eigenvectors() * (es.eigenvalues() * tau[k]).array().exp().matrix().asDiagonal() * vinv;
        const oracle::Mat x = unvectorize(e * vectorize(ss.rho * a.adjoint()), s.dim());
        const cplx ref = (a * x).trace() - std::norm(mean);
        // Integrator steps are held to 1e-9 locally.
        CHECK(std::abs(g1[k] - ref) <= 1e-7);
    }

    Matrix not_stationary = Matrix::Zero(s.dim(), s.dim());
    not_stationary(2, 2) = 1.0;
    CHECK_THROWS_AS(first_order_correlation(l, not_stationary, alpha, tau), std::invalid_argument);
}

TEST_CASE("resonance fluorescence shows the Mollow triplet") {
    HilbertSpace s(1);
    const double omega = 5.0;
    const Liouvillian l = two_level(s, omega, 0.0, 0.1);
    const SteadyState ss = steady_state(l);
    const double step = 0.01;
    const auto grid = uniform_grid(-15.0, 15.0, step);
    const auto sp = steady_state_spectrum(l, ss.rho, Channel::sigma1_minus, grid);
    REQUIRE(sp.flag == SpectrumFlag::normal);
    CHECK_FALSE(sp.truncated);
    const auto peaks = find_peaks(sp, 0.01);
    REQUIRE(peaks.size() == 3u);
    const double side = oracle::mollow_sideband(omega, 0.0);
    CHECK(std::abs(peaks[0].omega + side) <= step);
    CHECK(std::abs(peaks[1].omega) <= step);
    CHECK(std::abs(peaks[2].omega - side) <= step);
    // Strong-drive heights 1 : 3 : 1.
    CHECK(peaks[1].height / peaks[0].height == doctest::Approx(3.0).epsilon(0.05));
    CHECK(peaks[2].height / peaks[0].height == doctest::Approx(1.0).epsilon(0.01));

    // No photons reach the cavity channel here.
    CHECK(steady_state_spectrum(l, ss.rho, Channel::a, grid).flag == SpectrumFlag::no_emission);
}

TEST_CASE("time step resolves the fastest Bohr frequency") {
    HilbertSpace s(1);
    const Liouvillian l = two_level(s, 5.0, 0.0, 0.1);
    const double spread = frequency_scale(l.hamiltonian());
    CHECK(correlation_time_step(l) <= 0.1 * 2.0 * M_PI / spread + 1e-15);
    CHECK(correlation_time_step(l) <= 0.05);
}

TEST_CASE("uniform grids include both ends") {
    const auto g = uniform_grid(-15.0, 15.0, 0.01);
    CHECK(g.size() == 3001u);
    CHECK(g.back() == doctest::Approx(15.0));
    CHECK_THROWS_AS(uniform_grid(1.0, 0.0, 0.1), std::invalid_argument);
}
