// Truncated emitter ⊗ Fock space of one lattice site and the
// operators of the Λ-emitter / nanocavity model living on it.
//
// Basis convention (frozen, relied upon by every file writer):
//   |level, n>  ->  index 3*n + level,   level ∈ {0: |g1>, 1: |g2>, 2: |e>},
//   n ∈ {0..n_max}.
// The photon ladder is therefore a stride-3 band.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace mottsf {

using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// Physical knobs of a single site and of the lattice. Energies are measured
// in units of g; the defaults are the (Omega, Delta1, Delta2) set used for the
// reference equilibrium phase diagram, without dissipation.
struct ModelParams {
    double g = 1.0;         // cavity–emitter coupling
    double omega = 5.0;     // laser Rabi strength on |g1> <-> |e>
    double delta1 = 4.0;    // laser detuning
    double delta2 = -2.5;   // cavity detuning
    double kappa = 0.0;     // cavity decay rate
    double gamma1 = 0.0;    // |e> -> |g1> decay rate
    double gamma2 = 0.0;    // |e> -> |g2> decay rate
    int z = 4;              // lattice coordination number

    // Two-photon (Raman) detuning; derived, never stored.
    double delta3() const noexcept { return delta1 - delta2; }

    bool has_dissipation() const noexcept { return kappa > 0.0 || gamma1 > 0.0 || gamma2 > 0.0; }

    // Throws std::invalid_argument on non-finite values, negative rates or z < 1.
    void validate() const;
};

enum class Level : int { g1 = 0, g2 = 1, e = 2 };

class HilbertSpace {
public:
    // n_max >= 1, otherwise std::invalid_argument.
    explicit HilbertSpace(int n_max);

    int n_max() const noexcept { return n_max_; }
    int dim() const noexcept { return 3 * (n_max_ + 1); }

    static constexpr int index(Level level, int n) noexcept { return 3 * n + static_cast<int>(level); }
    static constexpr Level level_of(int index) noexcept { return static_cast<Level>(index % 3); }
    static constexpr int photons_of(int index) noexcept { return index / 3; }

    bool operator==(const HilbertSpace&) const = default;

private:
    int n_max_;
};

HilbertSpace build_space(int n_max);

// Dense operator bound to a HilbertSpace. Arithmetic between operators on
// different spaces throws std::invalid_argument.
class Operator {
public:
    Operator(const HilbertSpace& space, Matrix entries);

    static Operator zero(const HilbertSpace& space);
    static Operator identity(const HilbertSpace& space);

    const HilbertSpace& space() const noexcept { return space_; }
    const Matrix& matrix() const noexcept { return entries_; }
    int dim() const noexcept { return space_.dim(); }

    cplx operator()(int row, int col) const { return entries_(row, col); }

    Operator adjoint() const;

    // max_ij |A_ij - conj(A_ji)|
    double hermiticity_defect() const;

    // <v|A|v>
    cplx expectation(const Vector& state) const;
    // trace(A rho)
    cplx expectation(const Matrix& rho) const;

    Operator& operator+=(const Operator& other);
    Operator& operator-=(const Operator& other);
    Operator& operator*=(cplx scalar);

    friend Operator operator+(Operator lhs, const Operator& rhs) { return lhs += rhs; }
    friend Operator operator-(Operator lhs, const Operator& rhs) { return lhs -= rhs; }
    friend Operator operator*(Operator lhs, cplx scalar) { return lhs *= scalar; }
    friend Operator operator*(cplx scalar, Operator rhs) { return rhs *= scalar; }
    friend Operator operator*(const Operator& lhs, const Operator& rhs);

private:
    HilbertSpace space_;
    Matrix entries_;
};

// Photon annihilation operator a (identity on the emitter).
Operator annihilation(const HilbertSpace& space);

// Emitter lowering operators and level projectors, tensored with the photon
// identity: sigma1- = |g1><e|, sigma2- = |g2><e|, sigma3- = |g1><g2|.
enum class AtomicOp { sigma1_minus, sigma2_minus, sigma3_minus, proj_g1, proj_g2, proj_e };
Operator atomic(const HilbertSpace& space, AtomicOp which);

// H0 = Delta1 Pe + Delta3 Pg2 + Omega (sigma1+ + sigma1-) + g (a sigma2+ + a† sigma2-)
Operator single_site_hamiltonian(const HilbertSpace& space, const ModelParams& params);

// Conserved polariton number N = a†a + Pe + Pg1. Diagonal in the basis.
Operator excitation_number(const HilbertSpace& space);

struct Sector {
    int charge = 0;
    std::vector<int> indices;  // {|g1,n-1>, |e,n-1>, |g2,n>} for charge n >= 1
    bool truncated = false;    // top sector missing |g2, n_max+1>
};

// Charge sectors ordered by increasing charge; together they partition the basis.
std::vector<Sector> sectors(const HilbertSpace& space);

// Block of an operator restricted to the sector's basis states.
Matrix restrict_to(const Operator& op, const Sector& sector);

// max_ij |(AB - BA)_ij|
double commutator_norm(const Operator& lhs, const Operator& rhs);

}  // namespace mottsf
