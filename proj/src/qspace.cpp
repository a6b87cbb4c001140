#include "mottsf/qspace.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mottsf {

namespace {

void require_same_space(const Operator& lhs, const Operator& rhs, const char* where) {
    if (!(lhs.space() == rhs.space())) {
        throw std::invalid_argument(std::string(where) + ": operators live on different Hilbert spaces (dim " +
                                    std::to_string(lhs.dim()) + " vs " + std::to_string(rhs.dim()) + ")");
    }
}

Matrix level_matrix(const HilbertSpace& space, Level to, Level from) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int n = 0; n <= space.n_max(); ++n) {
        m(HilbertSpace::index(to, n), HilbertSpace::index(from, n)) = 1.0;
    }
    return m;
}

}  // namespace

void ModelParams::validate() const {
    const double values[] = {g, omega, delta1, delta2, kappa, gamma1, gamma2};
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("ModelParams: non-finite parameter");
    }
    if (kappa < 0.0 || gamma1 < 0.0 || gamma2 < 0.0) {
        throw std::invalid_argument("ModelParams: decay rates must be non-negative");
    }
    if (z < 1) throw std::invalid_argument("ModelParams: coordination number z must be >= 1");
}

HilbertSpace::HilbertSpace(int n_max) : n_max_(n_max) {
    if (n_max < 1) {
        throw std::invalid_argument("HilbertSpace: photon cutoff n_max must be >= 1, got " + std::to_string(n_max));
    }
}

HilbertSpace build_space(int n_max) { return HilbertSpace(n_max); }

Operator::Operator(const HilbertSpace& space, Matrix entries) : space_(space), entries_(std::move(entries)) {
    if (entries_.rows() != space_.dim() || entries_.cols() != space_.dim()) {
        throw std::invalid_argument("Operator: matrix shape does not match Hilbert space dimension " +
                                    std::to_string(space_.dim()));
    }
}

Operator Operator::zero(const HilbertSpace& space) { return Operator(space, Matrix::Zero(space.dim(), space.dim())); }

Operator Operator::identity(const HilbertSpace& space) {
    return Operator(space, Matrix::Identity(space.dim(), space.dim()));
}

Operator Operator::adjoint() const { return Operator(space_, entries_.adjoint()); }

double Operator::hermiticity_defect() const { return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff(); }

cplx Operator::expectation(const Vector& state) const { return state.dot(entries_ * state); }

cplx Operator::expectation(const Matrix& rho) const {
    // trace(A rho) without forming the product
    return (entries_.transpose().cwiseProduct(rho)).sum();
}

Operator& Operator::operator+=(const Operator& other) {
    require_same_space(*this, other, "Operator::operator+=");
    entries_ += other.entries_;
    return *this;
}

Operator& Operator::operator-=(const Operator& other) {
    require_same_space(*this, other, "Operator::operator-=");
    entries_ -= other.entries_;
    return *this;
}

Operator& Operator::operator*=(cplx scalar) {
    entries_ *= scalar;
    return *this;
}

Operator operator*(const Operator& lhs, const Operator& rhs) {
    require_same_space(lhs, rhs, "Operator::operator*");
    return Operator(lhs.space(), lhs.matrix() * rhs.matrix());
}

Operator annihilation(const HilbertSpace& space) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int n = 1; n <= space.n_max(); ++n) {
        const double amp = std::sqrt(static_cast<double>(n));
        for (int level = 0; level < 3; ++level) {
            const auto lv = static_cast<Level>(level);
            m(HilbertSpace::index(lv, n - 1), HilbertSpace::index(lv, n)) = amp;
        }
    }
    return Operator(space, std::move(m));
}

Operator atomic(const HilbertSpace& space, AtomicOp which) {
    switch (which) {
        case AtomicOp::sigma1_minus: return Operator(space, level_matrix(space, Level::g1, Level::e));
        case AtomicOp::sigma2_minus: return Operator(space, level_matrix(space, Level::g2, Level::e));
        case AtomicOp::sigma3_minus: return Operator(space, level_matrix(space, Level::g1, Level::g2));
        case AtomicOp::proj_g1: return Operator(space, level_matrix(space, Level::g1, Level::g1));
        case AtomicOp::proj_g2: return Operator(space, level_matrix(space, Level::g2, Level::g2));
        case AtomicOp::proj_e: return Operator(space, level_matrix(space, Level::e, Level::e));
    }
    throw std::invalid_argument("atomic: unknown operator selector");
}

Operator single_site_hamiltonian(const HilbertSpace& space, const ModelParams& params) {
    const Operator a = annihilation(space);
    const Operator s1 = atomic(space, AtomicOp::sigma1_minus);
    const Operator s2 = atomic(space, AtomicOp::sigma2_minus);

    Operator h = params.delta1 * atomic(space, AtomicOp::proj_e);
    h += params.delta3() * atomic(space, AtomicOp::proj_g2);
    h += params.omega * (s1.adjoint() + s1);
    h += params.g * (a * s2.adjoint() + a.adjoint() * s2);
    return h;
}

Operator excitation_number(const HilbertSpace& space) {
    Matrix m = Matrix::Zero(space.dim(), space.dim());
    for (int i = 0; i < space.dim(); ++i) {
        const int n = HilbertSpace::photons_of(i);
        m(i, i) = (HilbertSpace::level_of(i) == Level::g2) ? n : n + 1;
    }
    return Operator(space, std::move(m));
}

std::vector<Sector> sectors(const HilbertSpace& space) {
    std::vector<Sector> out;
    out.push_back(Sector{0, {HilbertSpace::index(Level::g2, 0)}, false});
    for (int charge = 1; charge <= space.n_max() + 1; ++charge) {
        Sector s;
        s.charge = charge;
        s.indices = {HilbertSpace::index(Level::g1, charge - 1), HilbertSpace::index(Level::e, charge - 1)};
        if (charge <= space.n_max()) {
            s.indices.push_back(HilbertSpace::index(Level::g2, charge));
        } else {
            s.truncated = true;
        }
        out.push_back(std::move(s));
    }
    return out;
}

Matrix restrict_to(const Operator& op, const Sector& sector) {
    const auto n = static_cast<Eigen::Index>(sector.indices.size());
    Matrix block(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            block(r, c) = op(sector.indices[r], sector.indices[c]);
        }
    }
    return block;
}

double commutator_norm(const Operator& lhs, const Operator& rhs) {
    require_same_space(lhs, rhs, "commutator_norm");
    const Matrix c = lhs.matrix() * rhs.matrix() - rhs.matrix() * lhs.matrix();
    return c.cwiseAbs().maxCoeff();
}

}  // namespace mottsf
