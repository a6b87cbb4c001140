// Single-site mean-field ground-state theory.
//
// The lattice hopping -k sum a_i† a_j is decoupled with psi = <a>, giving
//   H^m(psi) = H0 - z k (a psi* + a† psi) + z k |psi|^2 - mu N,
// whose ground energy E_g(psi) is minimized over the order parameter.

#pragma once

#include "mottsf/qspace.hpp"

#include <span>
#include <vector>

namespace mottsf {

struct LatticePoint {
    double mu = 0.0;  // chemical potential
    double k = 0.0;   // hopping rate, k >= 0
};

enum class Phase { MI, SF };

const char* to_string(Phase phase) noexcept;

// SF iff psi > this threshold.
inline constexpr double kSuperfluidThreshold = 1e-4;
// Absolute gap below which the ground state of H0 - mu N counts as degenerate.
inline constexpr double kDegeneracyTolerance = 1e-9;

struct MinimizerSettings {
    int coarse_points = 64;
    double refine_tolerance = 1e-7;
    double superfluid_threshold = kSuperfluidThreshold;
};

// Upper end of the order-parameter search interval, sqrt(n_max)/2.
double psi_search_bound(const HilbertSpace& space) noexcept;

struct GroundEnergy {
    double energy = 0.0;
    Vector vector;
};

struct GroundStateResult {
    double psi = 0.0;
    double energy = 0.0;
    double mean_n = 0.0;  // <N>, the polariton number
    Phase phase = Phase::MI;
    Vector ground_vector;
    // psi sits on the search bound: the condensate is limited by the cutoff.
    bool at_search_bound = false;
};

struct LobeBoundary {
    int charge_low = 0;
    double mu_boundary = 0.0;
    // The charge_low lobe (between the previous boundary and this one) has
    // non-positive width. Only meaningful for consecutive charges.
    bool collapsed = false;
};

Operator mean_field_hamiltonian(const HilbertSpace& space, const ModelParams& params, LatticePoint point, cplx psi);

GroundEnergy ground_energy(const HilbertSpace& space, const ModelParams& params, LatticePoint point, cplx psi);

// E_g(psi) for real psi; eigenvalues only.
double ground_energy_value(const HilbertSpace& space, const ModelParams& params, LatticePoint point, double psi);

// Coarse scan over [0, psi_search_bound] followed by golden-section
// refinement; ties resolve toward the smaller psi.
GroundStateResult order_parameter(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                                  const MinimizerSettings& settings = {});

// Lowest eigenvalue of H0 in the charge-n sector, without any photon cutoff.
double sector_ground_energy(int n, const ModelParams& params);

// mu_boundary(N) = E(N+1) - E(N) for each N in charges (ascending, >= 0).
std::vector<LobeBoundary> lobe_boundaries(const ModelParams& params, std::span<const int> charges);

// Charge N in [0, max_charge] minimizing E(N) - mu N at k = 0; smallest N on ties.
int grand_canonical_charge(const ModelParams& params, double mu, int max_charge);

// k_c = -1 / (z S) with S = sum_{n != gs} |<n|(a + a†)|gs>|^2 / (E_gs - E_n)
// over the spectrum of H0 - mu N. Throws DegenerateGroundState when the
// lowest gap is below kDegeneracyTolerance. Returns +inf if S == 0.
double perturbative_critical_hopping(const HilbertSpace& space, const ModelParams& params, double mu);

// <v|N|v> for a normalized state.
double mean_excitation(const HilbertSpace& space, const Vector& state);

}  // namespace mottsf
