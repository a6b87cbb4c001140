#include "mottsf/qspace.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace mottsf;

namespace {

ModelParams random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    ModelParams p;
    p.g = u(rng);
    p.omega = u(rng);
    p.delta1 = u(rng);
    p.delta2 = u(rng);
    return p;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("basis index is photon-major with stride 3") {
    HilbertSpace s(4);
    CHECK(s.dim() == 15);
    CHECK(HilbertSpace::index(Level::g1, 0) == 0);
    CHECK(HilbertSpace::index(Level::e, 2) == 8);
    for (int i = 0; i < s.dim(); ++i) CHECK(HilbertSpace::index(HilbertSpace::level_of(i), HilbertSpace::photons_of(i)) == i);
    CHECK_THROWS_AS(HilbertSpace(0), std::invalid_argument);
}

TEST_CASE("operators match Kronecker-product construction") {
    for (int n_max : {1, 3, 6}) {
        HilbertSpace s(n_max);
        CHECK(max_abs(annihilation(s).matrix() - oracle::field(n_max)) == 0.0);
        CHECK(max_abs(atomic(s, AtomicOp::sigma1_minus).matrix() - oracle::on_emitter(n_max, oracle::ket_bra(0, 2))) == 0.0);
        CHECK(max_abs(atomic(s, AtomicOp::sigma2_minus).matrix() - oracle::on_emitter(n_max, oracle::ket_bra(1, 2))) == 0.0);
        CHECK(max_abs(atomic(s, AtomicOp::sigma3_minus).matrix() - oracle::on_emitter(n_max, oracle::ket_bra(0, 1))) == 0.0);
        CHECK(max_abs(excitation_number(s).matrix() - oracle::number_commuting(n_max)) <= 1e-14);

        std::mt19937_64 rng(17 + n_max);
        const ModelParams p = random_params(rng);
        const Matrix h = oracle::hamiltonian(n_max, p.g, p.omega, p.delta1, p.delta2);
        CHECK(max_abs(single_site_hamiltonian(s, p).matrix() - h) <= 1e-14);
    }
}

TEST_CASE("ladder algebra below the cutoff") {
    HilbertSpace s(6);
    const Matrix a = annihilation(s).matrix();
    const Matrix c = a * a.adjoint() - a.adjoint() * a;
    // [a, a†] = 1 except on the top Fock level.
    for (int i = 0; i < s.dim(); ++i) {
        const double expected = HilbertSpace::photons_of(i) == s.n_max() ? -s.n_max() : 1.0;
        CHECK(c(i, i).real() == doctest::Approx(expected));
    }
    CHECK(max_abs(c - Matrix(c.diagonal().asDiagonal())) == 0.0);
}

TEST_CASE("Hamiltonian is Hermitian and commutes with the polariton number") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 50; ++trial) {
        HilbertSpace s(1 + trial % 7);
        const ModelParams p = random_params(rng);
        const Operator h = single_site_hamiltonian(s, p);
        CHECK(h.hermiticity_defect() == 0.0);
        CHECK(commutator_norm(h, excitation_number(s)) <= 1e-12);
    }
}

TEST_CASE("the Pg2 variant of the number operator is not conserved") {
    HilbertSpace s(3);
    ModelParams p;
    const Operator printed(s, oracle::number_printed(3));
    CHECK(commutator_norm(single_site_hamiltonian(s, p), printed) > 1.0);
}

TEST_CASE("sectors partition the basis and block-diagonalize H0") {
    HilbertSpace s(5);
    const auto secs = sectors(s);
    REQUIRE(secs.size() == 7u);
    std::set<int> seen;
    const Matrix n = excitation_number(s).matrix();
    const Operator h = single_site_hamiltonian(s, ModelParams{});
    for (const auto& sec : secs) {
        CHECK(sec.truncated == (sec.charge == s.n_max() + 1));
        for (int i : sec.indices) {
            CHECK(seen.insert(i).second);
            CHECK(n(i, i).real() == doctest::Approx(sec.charge));
        }
    }
    CHECK(static_cast<int>(seen.size()) == s.dim());

    // Reassembling the blocks reproduces H0 exactly.
    Matrix rebuilt = Matrix::Zero(s.dim(), s.dim());
    for (const auto& sec : secs) {
        const Matrix b = restrict_to(h, sec);
        for (std::size_t r = 0; r < sec.indices.size(); ++r)
            for (std::size_t c = 0; c < sec.indices.size(); ++c) rebuilt(sec.indices[r], sec.indices[c]) = b(r, c);
    }
    CHECK(max_abs(rebuilt - h.matrix()) == 0.0);
}

TEST_CASE("operator arithmetic refuses mixed spaces") {
    const Operator a = annihilation(HilbertSpace(2));
    const Operator b = annihilation(HilbertSpace(3));
    CHECK_THROWS_AS(a + b, std::invalid_argument);
    CHECK_THROWS_AS(a * b, std::invalid_argument);
    CHECK_THROWS_AS(commutator_norm(a, b), std::invalid_argument);
}

TEST_CASE("parameter validation") {
    ModelParams p;
    CHECK_NOTHROW(p.validate());
    p.kappa = -0.1;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.kappa = 0.0;
    p.omega = std::nan("");
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
    p.omega = 1.0;
    p.z = 0;
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}
