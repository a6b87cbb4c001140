#include "mottsf/equilibrium.hpp"

#include "mottsf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mottsf {

namespace {

// H^m for real psi is a real symmetric matrix: base - z k psi (a + a†) + z k psi^2.
// Cached per (mu, k) so the scan only pays for eigenvalues.
class RealMeanFieldFamily {
public:
    RealMeanFieldFamily(const HilbertSpace& space, const ModelParams& params, LatticePoint point)
        : zk_(params.z * point.k) {
        const Operator h0 = single_site_hamiltonian(space, params);
        const Operator n = excitation_number(space);
        base_ = (h0.matrix() - point.mu * n.matrix()).real();
        const Operator a = annihilation(space);
        quadrature_ = (a.matrix() + a.matrix().adjoint()).real();
    }

    Eigen::MatrixXd matrix(double psi) const { return base_ - (zk_ * psi) * quadrature_; }

    double energy(double psi) const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix(psi), Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) {
            throw NumericError("ground energy: eigensolver failed at psi=" + std::to_string(psi));
        }
        return solver.eigenvalues()(0) + zk_ * psi * psi;
    }

    GroundEnergy ground(double psi) const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(matrix(psi));
        if (solver.info() != Eigen::Success) {
            throw NumericError("ground energy: eigensolver failed at psi=" + std::to_string(psi));
        }
        GroundEnergy out;
        out.energy = solver.eigenvalues()(0) + zk_ * psi * psi;
        out.vector = solver.eigenvectors().col(0).cast<cplx>();
        return out;
    }

private:
    double zk_;
    Eigen::MatrixXd base_;
    Eigen::MatrixXd quadrature_;
};

template <class F>
double golden_section(F&& f, double lo, double hi, double tol) {
    constexpr double inv_phi = 0.6180339887498949;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = f(x1);
    double f2 = f(x2);
    int guard = 0;
    while (hi - lo > tol) {
        if (++guard > 200) throw NumericError("order_parameter: golden-section refinement did not converge");
        if (f1 <= f2) {  // keep the lower half on ties
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    return f1 <= f2 ? x1 : x2;
}

}  // namespace

const char* to_string(Phase phase) noexcept { return phase == Phase::SF ? "SF" : "MI"; }

double psi_search_bound(const HilbertSpace& space) noexcept { return std::sqrt(static_cast<double>(space.n_max())) / 2.0; }

Operator mean_field_hamiltonian(const HilbertSpace& space, const ModelParams& params, LatticePoint point, cplx psi) {
    const double zk = params.z * point.k;
    const Operator a = annihilation(space);
    Operator h = single_site_hamiltonian(space, params);
    h -= zk * (std::conj(psi) * a + psi * a.adjoint());
    h += (zk * std::norm(psi)) * Operator::identity(space);
    h -= point.mu * excitation_number(space);
    return h;
}

GroundEnergy ground_energy(const HilbertSpace& space, const ModelParams& params, LatticePoint point, cplx psi) {
    if (psi.imag() == 0.0) return RealMeanFieldFamily(space, params, point).ground(psi.real());

    const Operator h = mean_field_hamiltonian(space, params, point, psi);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
    if (solver.info() != Eigen::Success) throw NumericError("ground_energy: eigensolver failed");
    return GroundEnergy{solver.eigenvalues()(0), solver.eigenvectors().col(0)};
}

double ground_energy_value(const HilbertSpace& space, const ModelParams& params, LatticePoint point, double psi) {
    return RealMeanFieldFamily(space, params, point).energy(psi);
}

GroundStateResult order_parameter(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                                  const MinimizerSettings& settings) {
    if (settings.coarse_points < 3) throw std::invalid_argument("order_parameter: need at least 3 coarse points");
    const RealMeanFieldFamily family(space, params, point);
    const double bound = psi_search_bound(space);
    const int points = settings.coarse_points;
    const double step = bound / (points - 1);

    int best = 0;
    double best_energy = family.energy(0.0);
    for (int i = 1; i < points; ++i) {
        const double e = family.energy(i * step);
        if (e < best_energy) {
            best_energy = e;
            best = i;
        }
    }

    double psi = best * step;
    const double lo = std::max(0, best - 1) * step;
    const double hi = std::min(points - 1, best + 1) * step;
    const auto energy = [&family](double x) { return family.energy(x); };
    const double refined = golden_section(energy, lo, hi, settings.refine_tolerance);
    const double refined_energy = family.energy(refined);
    // Gains at the rounding level of the eigensolver are ties.
    if (refined_energy < best_energy - 1e-13 * std::max(1.0, std::abs(best_energy))) {
        psi = refined;
    }

    GroundStateResult out;
    const GroundEnergy ground = family.ground(psi);
    out.psi = psi;
    out.energy = ground.energy;
    out.ground_vector = ground.vector;
    out.mean_n = mean_excitation(space, ground.vector);
    out.phase = psi > settings.superfluid_threshold ? Phase::SF : Phase::MI;
    out.at_search_bound = bound - psi < 10.0 * settings.refine_tolerance;
    return out;
}

double sector_ground_energy(int n, const ModelParams& params) {
    if (n < 0) throw std::invalid_argument("sector_ground_energy: charge must be >= 0");
    if (n == 0) return params.delta3();
    const double coupling = params.g * std::sqrt(static_cast<double>(n));
    Eigen::Matrix3d block;
    block << 0.0, params.omega, 0.0,
             params.omega, params.delta1, coupling,
             0.0, coupling, params.delta3();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(block, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("sector_ground_energy: eigensolver failed");
    return solver.eigenvalues()(0);
}

std::vector<LobeBoundary> lobe_boundaries(const ModelParams& params, std::span<const int> charges) {
    if (charges.empty()) throw std::invalid_argument("lobe_boundaries: empty charge list");
    for (std::size_t i = 0; i < charges.size(); ++i) {
        if (charges[i] < 0) throw std::invalid_argument("lobe_boundaries: charges must be >= 0");
        if (i > 0 && charges[i] <= charges[i - 1]) {
            throw std::invalid_argument("lobe_boundaries: charges must be strictly ascending");
        }
    }

    std::vector<LobeBoundary> out;
    out.reserve(charges.size());
    for (std::size_t i = 0; i < charges.size(); ++i) {
        const int n = charges[i];
        LobeBoundary b;
        b.charge_low = n;
        b.mu_boundary = sector_ground_energy(n + 1, params) - sector_ground_energy(n, params);
        if (i > 0 && charges[i - 1] == n - 1) {
            b.collapsed = b.mu_boundary <= out.back().mu_boundary;
        }
        out.push_back(b);
    }
    return out;
}

int grand_canonical_charge(const ModelParams& params, double mu, int max_charge) {
    int best = 0;
    double best_energy = sector_ground_energy(0, params);
    for (int n = 1; n <= max_charge; ++n) {
        const double e = sector_ground_energy(n, params) - mu * n;
        if (e < best_energy) {
            best_energy = e;
            best = n;
        }
    }
    return best;
}

double perturbative_critical_hopping(const HilbertSpace& space, const ModelParams& params, double mu) {
    const Operator h0 = single_site_hamiltonian(space, params);
    const Operator n = excitation_number(space);
    const Eigen::MatrixXd h_tilde = (h0.matrix() - mu * n.matrix()).real();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(h_tilde);
    if (solver.info() != Eigen::Success) throw NumericError("perturbative_critical_hopping: eigensolver failed");
    const Eigen::VectorXd& energies = solver.eigenvalues();
    const double gap = energies(1) - energies(0);
    if (gap < kDegeneracyTolerance) {
        throw DegenerateGroundState("perturbative_critical_hopping: degenerate ground state at mu=" +
                                        std::to_string(mu) + " (lobe edge)",
                                    gap);
    }

    const Operator a = annihilation(space);
    const Eigen::MatrixXd quadrature = (a.matrix() + a.matrix().adjoint()).real();
    const Eigen::VectorXd couplings = solver.eigenvectors().transpose() * (quadrature * solver.eigenvectors().col(0));

    double sum = 0.0;
    for (Eigen::Index m = 1; m < energies.size(); ++m) {
        sum += couplings(m) * couplings(m) / (energies(0) - energies(m));
    }
    if (sum >= 0.0) return std::numeric_limits<double>::infinity();
    return -1.0 / (params.z * sum);
}

double mean_excitation(const HilbertSpace& space, const Vector& state) {
    if (state.size() != space.dim()) throw std::invalid_argument("mean_excitation: state dimension mismatch");
    double total = 0.0;
    for (int i = 0; i < space.dim(); ++i) {
        const int n = HilbertSpace::photons_of(i);
        const double charge = (HilbertSpace::level_of(i) == Level::g2) ? n : n + 1;
        total += charge * std::norm(state(i));
    }
    return total;
}

}  // namespace mottsf
