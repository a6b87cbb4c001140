// Lindblad generator of the mean-field master equation,
// steady states, the self-consistency loop over complex psi = <a>, and
// mean-field time evolution.
//
// Dissipator convention: rate/2 * (2 A rho A† - A†A rho - rho A†A), so the
// rate is the full decay rate of <A†A>.
//
// Vectorization is column-major: vec(rho)[i + d*j] = rho(i, j). With that
// convention vec(X rho Y) = (Y^T ⊗ X) vec(rho).

#pragma once

#include "mottsf/equilibrium.hpp"
#include "mottsf/qspace.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mottsf {

struct Jump {
    Operator op;
    double rate = 0.0;
};

// {(a, kappa), (sigma1-, gamma1), (sigma2-, gamma2)}, zero-rate channels dropped.
std::vector<Jump> model_jumps(const HilbertSpace& space, const ModelParams& params);

class Liouvillian {
public:
    Liouvillian(const Operator& hamiltonian, std::vector<Jump> jumps);

    const HilbertSpace& space() const noexcept { return space_; }
    const Operator& hamiltonian() const noexcept { return hamiltonian_; }
    const std::vector<Jump>& jumps() const noexcept { return jumps_; }
    // d^2, the size of the vectorized generator.
    int dim() const noexcept { return space_.dim() * space_.dim(); }

    // Dense d^2 x d^2 generator.
    Matrix matrix() const { return Matrix(generator_); }
    const Eigen::SparseMatrix<cplx>& sparse() const noexcept { return generator_; }
    // K = H - i/2 sum r A†A and the jump operators, in sparse form.
    const Eigen::SparseMatrix<cplx>& effective_hamiltonian() const noexcept { return effective_; }
    const std::vector<Eigen::SparseMatrix<cplx>>& jump_matrices() const noexcept { return jump_ops_; }
    const std::vector<double>& jump_rates() const noexcept { return jump_rates_; }

    // L(rho) evaluated in matrix form (no superoperator needed).
    Matrix apply(const Matrix& rho) const;

    // max rate over jumps, 0 if purely Hamiltonian.
    double max_rate() const noexcept;
    double min_positive_rate() const noexcept;

private:
    HilbertSpace space_;
    Operator hamiltonian_;
    std::vector<Jump> jumps_;
    // Sparse pieces for apply(): K = H - i/2 sum r A†A.
    Eigen::SparseMatrix<cplx> effective_;
    std::vector<Eigen::SparseMatrix<cplx>> jump_ops_;
    std::vector<double> jump_rates_;
    Eigen::SparseMatrix<cplx> generator_;
};

// Throws std::invalid_argument on negative rates, non-Hermitian H or jump
// operators from another space.
Liouvillian build_liouvillian(const HilbertSpace& space, const Operator& hamiltonian, std::vector<Jump> jumps);

// Generator of the mean-field master equation at fixed psi.
Liouvillian meanfield_liouvillian(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                                  cplx psi);

Vector vectorize(const Matrix& rho);
Matrix unvectorize(const Vector& v, int dim);

struct SteadyState {
    Matrix rho;
    double residual = 0.0;  // max |L(rho)|
};

// Unique stationary state. Throws DegenerateSteadyState if the generator has
// more than one stationary state.
SteadyState steady_state(const Liouvillian& generator);

enum class DynamicsLabel { converged, oscillatory, multistable, indeterminate };

const char* to_string(DynamicsLabel label) noexcept;

struct FixedPoint {
    cplx psi;
    Matrix rho;
    double residual = 0.0;
};

struct SelfConsistencyOptions {
    double beta = 0.5;
    int max_iter = 500;
    // Stop when |psi_{j+1} - psi_j| drops below this.
    double step_tolerance = 1e-10;
    // Fixed points closer than this in |psi| are the same attractor
    // (the loop is U(1) covariant, so the phase carries no information).
    double distinct_tolerance = 1e-4;
    std::uint64_t seed = 0x5eed;
    int random_starts = 2;
    std::optional<cplx> warm_start;
    // Run mean-field dynamics when no start converges.
    bool classify_nonconverged = true;
};

struct SteadyStateResult {
    Matrix rho;
    cplx psi{0.0, 0.0};
    double residual = 0.0;
    double self_consistency_gap = 0.0;  // |tr(a rho) - psi|
    int iterations = 0;                 // total over all starts
    DynamicsLabel label = DynamicsLabel::indeterminate;
    std::vector<FixedPoint> fixed_points;  // ordered by decreasing |psi|
    std::string diagnostics;
};

// Largest real part among the eigenvalues of the mean-field dynamics
// linearized around the psi = 0 steady state. Negative means psi = 0 is an
// attractor.
double normal_state_growth_rate(const HilbertSpace& space, const ModelParams& params, LatticePoint point);

SteadyStateResult self_consistent_steady_state(const HilbertSpace& space, const ModelParams& params,
                                               LatticePoint point, const SelfConsistencyOptions& options = {});

struct TrajectoryPoint {
    double t = 0.0;
    cplx psi;
    double mean_n = 0.0;
};

struct Trajectory {
    std::vector<TrajectoryPoint> points;
    Matrix final_rho;
    double trace_drift = 0.0;
    double final_dt = 0.0;
};

struct EvolveOptions {
    // Local error tolerance of the step-doubling check (max entry).
    double tolerance = 1e-9;
    // Steps between error checks.
    int check_every = 64;
    // Record every this many steps (the final state is always recorded).
    int record_every = 1;
};

// RK4 integration of d rho/dt = L(psi(t)) rho with psi(t) = tr(a rho(t)).
// Throws NumericError on step-size underflow.
Trajectory evolve_meanfield(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                            const Matrix& rho0, double t_max, double dt, const EvolveOptions& options = {});

// Same integrator with a frozen generator (psi fixed). Used for regression.
Matrix propagate(const Liouvillian& generator, const Matrix& x0, double t, double dt,
                 const EvolveOptions& options = {});

// Samples X(k dt), k = 1..count, under a frozen generator. The integrator
// step is dt / 2^m with m chosen (and raised if needed) by the same
// step-doubling check. The observer returns false to stop early.
void propagate_samples(const Liouvillian& generator, const Matrix& x0, double dt, int count,
                       const std::function<bool(int, const Matrix&)>& observer, const EvolveOptions& options = {});

struct DynamicsVerdict {
    DynamicsLabel label = DynamicsLabel::indeterminate;
    std::string diagnostics;
};

// converged: |psi(t) - psi(t_end)| < 1e-6 over the last 20% of the window.
// oscillatory: the same tail of |psi(t)| has relative peak-to-peak
// amplitude above 1e-3 with at least 3 extrema.
// Anything else is indeterminate.
DynamicsVerdict classify_dynamics(const Trajectory& trajectory);

// Spread of the spectrum of H (largest Bohr frequency), used to pick steps.
double frequency_scale(const Operator& hamiltonian);

}  // namespace mottsf
