#include "mottsf/dissipative.hpp"

#include "mottsf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mottsf {

namespace {

using Sparse = Eigen::SparseMatrix<cplx>;
using Triplet = Eigen::Triplet<cplx>;

constexpr cplx I{0.0, 1.0};

Sparse to_sparse(const Matrix& m) {
    std::vector<Triplet> entries;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (m(r, c) != cplx(0.0, 0.0)) entries.emplace_back(static_cast<int>(r), static_cast<int>(c), m(r, c));
        }
    }
    Sparse out(m.rows(), m.cols());
    out.setFromTriplets(entries.begin(), entries.end());
    return out;
}

Sparse sparse_identity(int d) {
    Sparse out(d, d);
    out.setIdentity();
    return out;
}

// Appends scale * (X ⊗ Y) to the triplet list.
void add_kron(std::vector<Triplet>& out, const Sparse& x, const Sparse& y, cplx scale) {
    const auto dy = static_cast<int>(y.rows());
    for (int cx = 0; cx < x.outerSize(); ++cx) {
        for (Sparse::InnerIterator ix(x, cx); ix; ++ix) {
            for (int cy = 0; cy < y.outerSize(); ++cy) {
                for (Sparse::InnerIterator iy(y, cy); iy; ++iy) {
                    out.emplace_back(static_cast<int>(ix.row()) * dy + static_cast<int>(iy.row()),
                                     cx * dy + cy, scale * ix.value() * iy.value());
                }
            }
        }
    }
}

struct Channels {
    std::vector<Sparse> ops;
    std::vector<double> rates;
};

// K = H - i/2 sum r A†A, so that the no-jump part of L is -i(K rho - rho K†).
Sparse make_effective(const Sparse& h, const Channels& ch) {
    Sparse k = h;
    for (std::size_t n = 0; n < ch.ops.size(); ++n) {
        const Sparse ada = Sparse(ch.ops[n].adjoint()) * ch.ops[n];
        k -= (0.5 * I * ch.rates[n]) * ada;
    }
    k.prune(cplx(0.0, 0.0));
    return k;
}

// L = -i (1 ⊗ K) + i (conj(K) ⊗ 1) + sum r conj(A) ⊗ A
Sparse superoperator(const Sparse& k, const Channels& ch) {
    const auto d = static_cast<int>(k.rows());
    const Sparse id = sparse_identity(d);
    std::vector<Triplet> entries;
    entries.reserve(static_cast<std::size_t>(4 * d * k.nonZeros()));
    add_kron(entries, id, k, -I);
    add_kron(entries, Sparse(k.conjugate()), id, I);
    for (std::size_t n = 0; n < ch.ops.size(); ++n) {
        add_kron(entries, Sparse(ch.ops[n].conjugate()), ch.ops[n], ch.rates[n]);
    }
    Sparse out(d * d, d * d);
    out.setFromTriplets(entries.begin(), entries.end());
    out.prune(cplx(0.0, 0.0));
    return out;
}

// Coordinate list of a sparse operator; the hot loops below run over it
// directly, which beats generic sparse * dense at these sizes.
struct Coo {
    std::vector<int> row;
    std::vector<int> col;
    std::vector<cplx> val;

    explicit Coo(const Sparse& m) {
        for (int c = 0; c < m.outerSize(); ++c) {
            for (Sparse::InnerIterator it(m, c); it; ++it) {
                row.push_back(static_cast<int>(it.row()));
                col.push_back(c);
                val.push_back(it.value());
            }
        }
    }
    std::size_t size() const noexcept { return val.size(); }
};

// Plain complex product; std::complex's operator* goes through the
// NaN/Inf-recovering library call, which dominates these loops.
inline cplx cmul(cplx a, cplx b) noexcept {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

// out += scale * A X
void multiply_add(const Coo& a, cplx scale, const Matrix& x, Matrix& out) {
    if (scale == cplx(0.0, 0.0)) return;
    const Eigen::Index d = x.rows();
    if (scale != cplx(1.0, 0.0)) {
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            const cplx* xj = x.data() + j * d;
            cplx* oj = out.data() + j * d;
            for (std::size_t n = 0; n < a.size(); ++n) oj[a.row[n]] += cmul(scale, cmul(a.val[n], xj[a.col[n]]));
        }
        return;
    }
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const cplx* xj = x.data() + j * d;
        cplx* oj = out.data() + j * d;
        for (std::size_t n = 0; n < a.size(); ++n) oj[a.row[n]] += cmul(a.val[n], xj[a.col[n]]);
    }
}

// out += rate * A X A†, i.e. out(i,j) += rate * A_ik X_kl conj(A_jl)
void sandwich_add(const Coo& a, double rate, const Matrix& x, Matrix& out) {
    for (std::size_t q = 0; q < a.size(); ++q) {
        const cplx right = rate * std::conj(a.val[q]);
        const int j = a.row[q];
        const int l = a.col[q];
        for (std::size_t p = 0; p < a.size(); ++p) out(a.row[p], j) += cmul(cmul(a.val[p], x(a.col[p], l)), right);
    }
}

struct Kernel {
    Coo effective;
    std::vector<Coo> jumps;
    std::vector<double> rates;

    Kernel(const Sparse& k, const Channels& ch) : effective(k) {
        for (const Sparse& op : ch.ops) jumps.emplace_back(op);
        rates = ch.rates;
    }
};

// -i (K X - X K†) + sum r A X A† for arbitrary X.
Matrix apply_generator(const Kernel& kern, const Matrix& x) {
    Matrix kx = Matrix::Zero(x.rows(), x.cols());
    Matrix kxh = Matrix::Zero(x.rows(), x.cols());
    multiply_add(kern.effective, 1.0, x, kx);
    multiply_add(kern.effective, 1.0, x.adjoint(), kxh);
    Matrix out = -I * (kx - kxh.adjoint());
    for (std::size_t n = 0; n < kern.jumps.size(); ++n) sandwich_add(kern.jumps[n], kern.rates[n], x, out);
    return out;
}

// Same for Hermitian X (one product fewer).
Matrix apply_generator_hermitian(const Kernel& kern, const Matrix& rho) {
    Matrix kr = Matrix::Zero(rho.rows(), rho.cols());
    multiply_add(kern.effective, 1.0, rho, kr);
    Matrix out = -I * (kr - kr.adjoint());
    for (std::size_t n = 0; n < kern.jumps.size(); ++n) sandwich_add(kern.jumps[n], kern.rates[n], rho, out);
    return out;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Real coordinates of a Hermitian matrix: x[i + d i] = X_ii and, for p < q,
// x[p + d q] = Re X_pq, x[q + d p] = Im X_pq. L preserves Hermiticity, so it
// is a real linear map in these coordinates; the real solve is ~5x cheaper
// than the complex one.
Matrix from_coordinates(const Eigen::VectorXd& x, int d) {
    Matrix rho(d, d);
    for (int q = 0; q < d; ++q) {
        rho(q, q) = x(q + d * q);
        for (int p = 0; p < q; ++p) {
            const cplx v(x(p + d * q), x(q + d * p));
            rho(p, q) = v;
            rho(q, p) = std::conj(v);
        }
    }
    return rho;
}

// Column c of the real-coordinate matrix is L applied to the c-th Hermitian
// basis element: E_ii, E_ij + E_ji (i < j) or i E_ji - i E_ij (i > j).
Eigen::MatrixXd real_generator(const Sparse& generator, int d) {
    const int n = d * d;
    Eigen::MatrixXd real(n, n);
    Vector column(n);
    for (int j = 0; j < d; ++j) {
        for (int i = 0; i < d; ++i) {
            column.setZero();
            const auto add_col = [&](int c, cplx scale) {
                for (Sparse::InnerIterator it(generator, c); it; ++it) column(it.row()) += scale * it.value();
            };
            if (i == j) {
                add_col(i + d * i, 1.0);
            } else if (i < j) {
                add_col(i + d * j, 1.0);
                add_col(j + d * i, 1.0);
            } else {
                add_col(j + d * i, I);
                add_col(i + d * j, -I);
            }
            auto out = real.col(i + d * j);
            for (int q = 0; q < d; ++q) {
                out(q + d * q) = column(q + d * q).real();
                for (int p = 0; p < q; ++p) {
                    out(p + d * q) = column(p + d * q).real();
                    out(q + d * p) = column(p + d * q).imag();
                }
            }
        }
    }
    return real;
}

// Eigen's rcond estimate reports 1 for an exactly singular factor (a zero
// pivot), so the pivot spread is checked as well.
double lu_conditioning(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
    const Eigen::VectorXd pivots = lu.matrixLU().diagonal().cwiseAbs();
    const double spread = pivots.maxCoeff() > 0.0 ? pivots.minCoeff() / pivots.maxCoeff() : 0.0;
    const double rcond = lu.rcond();
    return std::isfinite(rcond) ? std::min(rcond, spread) : 0.0;
}

SteadyState solve_stationary(const Sparse& generator, const Sparse& k, const Channels& ch, int d) {
    const int n = d * d;
    Eigen::MatrixXd real = real_generator(generator, d);

    // One row of L is redundant (trace preservation); trade it for tr(rho) = 1.
    const Eigen::RowVectorXd replaced = real.row(0);
    real.row(0).setZero();
    for (int i = 0; i < d; ++i) real(0, i + d * i) = 1.0;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    rhs(0) = 1.0;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(real);
    Eigen::VectorXd x;
    if (lu_conditioning(lu) > 1e-13) {
        x = lu.solve(rhs);
    } else {
        Eigen::MatrixXd original = real;
        original.row(0) = replaced;
        Eigen::FullPivLU<Eigen::MatrixXd> kernel(original);
        kernel.setThreshold(1e-10);
        const int null_dimension = n - static_cast<int>(kernel.rank());
        if (null_dimension > 1) {
            throw DegenerateSteadyState("steady_state: generator has a " + std::to_string(null_dimension) +
                                            "-dimensional stationary manifold",
                                        null_dimension);
        }
        x = Eigen::FullPivLU<Eigen::MatrixXd>(real).solve(rhs);
    }
    if (!x.allFinite()) throw NumericError("steady_state: linear solve produced non-finite values");

    SteadyState out;
    out.rho = from_coordinates(x, d);
    out.rho /= out.rho.trace().real();
    out.residual = max_abs(apply_generator_hermitian(Kernel(k, ch), out.rho));
    return out;
}

// Stationary states along the real psi axis. In real coordinates the
// generator is A(r) = A0 + r A1, with row 0 holding the trace condition.
// Consecutive solves during an iteration have nearby r, so the last LU
// factorization serves as preconditioner for iterative refinement; it is
// rebuilt once refinement stops contracting.
class RealAxisSolver {
public:
    RealAxisSolver(const Sparse& l0, const Sparse& l1, int d) : d_(d) {
        Eigen::MatrixXd a0 = real_generator(l0, d);
        Eigen::MatrixXd a1 = real_generator(l1, d);
        a0.row(0).setZero();
        a1.row(0).setZero();
        for (int i = 0; i < d; ++i) a0(0, i + d * i) = 1.0;
        a0_ = a0.sparseView();
        a1_ = a1.sparseView();
        norm0_ = a0.cwiseAbs().rowwise().sum().maxCoeff();
        norm1_ = a1.cwiseAbs().rowwise().sum().maxCoeff();
        rhs_ = Eigen::VectorXd::Zero(d * d);
        rhs_(0) = 1.0;
    }

    // Empty when A(r) is numerically singular; the caller then takes the
    // rank-revealing path.
    std::optional<Eigen::VectorXd> solve(double r) {
        const double scale = norm0_ + r * norm1_;
        Eigen::VectorXd x;
        if (!factors_.empty()) {
            const auto nearest = std::min_element(factors_.begin(), factors_.end(), [r](const Factor& a, const Factor& b) {
                return std::abs(a.r - r) < std::abs(b.r - r);
            });
            if (refine(*nearest, r, scale, last_, x)) {
                last_ = x;
                return x;
            }
        }
        Eigen::MatrixXd dense = Eigen::MatrixXd(a0_);
        if (r != 0.0) dense += r * Eigen::MatrixXd(a1_);
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(dense);
        if (lu_conditioning(lu) <= 1e-13) return std::nullopt;
        // Ill-conditioned points cannot reach the rounding floor even with a
        // fresh factorization; remember what this one attains.
        Factor fresh{r, std::move(lu), 1024.0};
        x = fresh.lu.solve(rhs_);
        Eigen::VectorXd refined;
        if (refine(fresh, r, scale, x, refined)) {
            x = std::move(refined);
        } else {
            if (relative_residual(r, scale, refined) < relative_residual(r, scale, x)) x = std::move(refined);
            fresh.attainable = std::max(1024.0, 2.0 * relative_residual(r, scale, x));
        }
        if (factors_.size() == kMaxFactors) {
            // Drop the factorization farthest from the current point.
            factors_.erase(std::max_element(factors_.begin(), factors_.end(), [r](const Factor& a, const Factor& b) {
                return std::abs(a.r - r) < std::abs(b.r - r);
            }));
        }
        factors_.push_back(std::move(fresh));
        last_ = x;
        return x;
    }

private:
    struct Factor {
        double r;
        Eigen::PartialPivLU<Eigen::MatrixXd> lu;
        // Residual level (in units of the rounding floor) accepted on stall.
        double attainable;
    };
    static constexpr std::size_t kMaxFactors = 4;

    // One refinement sweep costs about 1/40 of a factorization, so a slowly
    // contracting preconditioner is still worth many sweeps.
    double relative_residual(double r, double scale, const Eigen::VectorXd& x) const {
        const Eigen::VectorXd residual = rhs_ - a0_ * x - r * (a1_ * x);
        return residual.lpNorm<Eigen::Infinity>() /
               (std::numeric_limits<double>::epsilon() * scale * x.lpNorm<Eigen::Infinity>());
    }

    bool refine(const Factor& factor, double r, double scale, const Eigen::VectorXd& start, Eigen::VectorXd& x) const {
        const auto& lu = factor.lu;
        x = start.size() == rhs_.size() ? start : lu.solve(rhs_);
        double previous = std::numeric_limits<double>::infinity();
        for (int it = 0; it < 30; ++it) {
            const Eigen::VectorXd residual = rhs_ - a0_ * x - r * (a1_ * x);
            const double size = residual.lpNorm<Eigen::Infinity>();
            if (!std::isfinite(size)) return false;
            const double floor = std::numeric_limits<double>::epsilon() * scale * x.lpNorm<Eigen::Infinity>();
            if (size <= 16.0 * floor) return true;
            // Stalled at the rounding level of the residual itself.
            if (size > 0.7 * previous) return size <= factor.attainable * floor;
            previous = size;
            x += lu.solve(residual);
        }
        return false;
    }

    int d_;
    Eigen::SparseMatrix<double> a0_;
    Eigen::SparseMatrix<double> a1_;
    double norm0_ = 0.0;
    double norm1_ = 0.0;
    Eigen::VectorXd rhs_;
    std::vector<Factor> factors_;
    Eigen::VectorXd last_;
};

cplx trace_product(const Sparse& a, const Matrix& rho) {
    // tr(a rho) = sum_ij a_ij rho_ji
    cplx sum(0.0, 0.0);
    for (int c = 0; c < a.outerSize(); ++c) {
        for (Sparse::InnerIterator it(a, c); it; ++it) sum += it.value() * rho(c, it.row());
    }
    return sum;
}

double mean_photons(const HilbertSpace& space, const Matrix& rho) {
    double n = 0.0;
    for (int i = 0; i < space.dim(); ++i) n += HilbertSpace::photons_of(i) * rho(i, i).real();
    return n;
}

// Fixed-step RK4 with checkpointed step doubling. Every `check_every` steps
// one step is also taken as two half steps; if they disagree by more than
// the tolerance, the run rolls back to the previous checkpoint with half the
// step. Steps grow back toward the nominal dt when the error is tiny.
template <class Rhs, class Observe>
Matrix integrate(const Rhs& f, Matrix x, double t_max, double dt, const EvolveOptions& options, Observe&& observe,
                 double* final_dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("integrate: dt must be positive");
    if (!(t_max >= 0.0) || !std::isfinite(t_max)) throw std::invalid_argument("integrate: t_max must be >= 0");
    const int check_every = std::max(1, options.check_every);
    const double h_min = 1e-12 * std::max(1.0, t_max);
    const double end_slack = 1e-13 * std::max(1.0, t_max);

    const auto rk4 = [&f](const Matrix& y, double h) {
        const Matrix k1 = f(y);
        const Matrix k2 = f(y + (0.5 * h) * k1);
        const Matrix k3 = f(y + (0.5 * h) * k2);
        const Matrix k4 = f(y + h * k3);
        return Matrix(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };

    double h = dt;
    double t = 0.0;
    long step = 0;
    Matrix checkpoint = x;
    double checkpoint_t = 0.0;
    long checkpoint_step = 0;

    while (t_max - t > end_slack) {
        const double hs = std::min(h, t_max - t);
        if (step % check_every == 0) {
            const Matrix full = rk4(x, hs);
            const Matrix half = rk4(rk4(x, 0.5 * hs), 0.5 * hs);
            double err = max_abs(full - half);
            if (!std::isfinite(err) || !x.allFinite()) err = std::numeric_limits<double>::infinity();
            if (err > options.tolerance) {
                h = 0.5 * hs;
                if (h < h_min) {
                    throw NumericError("evolve: step size underflow at t=" + std::to_string(t) +
                                       " (h=" + std::to_string(h) + ")");
                }
                // The steps since the last checkpoint were taken with a step
                // that is now known to be too large.
                x = checkpoint;
                t = checkpoint_t;
                step = checkpoint_step;
                observe.rollback(step);
                continue;
            }
            x = half;
            t += hs;
            ++step;
            checkpoint = x;
            checkpoint_t = t;
            checkpoint_step = step;
            if (err < options.tolerance / 64.0 && hs == h && 2.0 * h <= dt) h *= 2.0;
        } else {
            x = rk4(x, hs);
            t += hs;
            ++step;
        }
        observe(step, t, x);
    }
    if (final_dt != nullptr) *final_dt = h;
    return x;
}

struct NoObserver {
    void operator()(long, double, const Matrix&) const {}
    void rollback(long) const {}
};

class MeanFieldModel {
public:
    MeanFieldModel(const HilbertSpace& space, const ModelParams& params, LatticePoint point)
        : space_(space), zk_(params.z * point.k) {
        for (const Jump& j : model_jumps(space, params)) {
            channels_.ops.push_back(to_sparse(j.op.matrix()));
            channels_.rates.push_back(j.rate);
        }
        const Operator h0 = single_site_hamiltonian(space, params);
        const Operator n = excitation_number(space);
        base_ = make_effective(to_sparse(h0.matrix() - point.mu * n.matrix()), channels_);
        a_ = to_sparse(annihilation(space).matrix());
        adag_ = a_.adjoint();
        identity_ = sparse_identity(space.dim());
        base_coo_.emplace(base_);
        a_coo_.emplace(a_);
        adag_coo_.emplace(adag_);
        for (const Sparse& op : channels_.ops) jump_coo_.emplace_back(op);
        const Operator charge = excitation_number(space);
        for (int i = 0; i < space.dim(); ++i) charge_.push_back(static_cast<int>(charge(i, i).real()));
    }

    const HilbertSpace& space() const noexcept { return space_; }
    const Channels& channels() const noexcept { return channels_; }
    const Sparse& annihilator() const noexcept { return a_; }

    Sparse effective(cplx psi) const {
        Sparse k = base_ - (zk_ * std::conj(psi)) * a_ - (zk_ * psi) * adag_ + (zk_ * std::norm(psi)) * identity_;
        k.prune(cplx(0.0, 0.0));
        return k;
    }

    // rho(|psi| e^{i phi}) = V rho(|psi|) V† with V = e^{i phi N}, so only
    // real psi needs a linear solve.
    SteadyState steady(cplx psi) const {
        const int d = space_.dim();
        if (!axis_) {
            const Sparse quadrature = -zk_ * (a_ + adag_);
            axis_.emplace(superoperator(base_, channels_), superoperator(quadrature, Channels{}), d);
        }
        const double r = std::abs(psi);
        const std::optional<Eigen::VectorXd> x = axis_->solve(r);
        const Sparse k = effective(psi);
        if (!x) return solve_stationary(superoperator(k, channels_), k, channels_, d);
        if (!x->allFinite()) throw NumericError("steady_state: linear solve produced non-finite values");

        SteadyState out;
        out.rho = from_coordinates(*x, d);
        out.rho /= out.rho.trace().real();
        if (r > 0.0) {
            const double phi = std::arg(psi);
            for (int q = 0; q < d; ++q) {
                for (int p = 0; p < d; ++p) {
                    if (charge_[p] != charge_[q]) out.rho(p, q) *= std::polar(1.0, phi * (charge_[p] - charge_[q]));
                }
            }
        }
        out.residual = max_abs(apply_generator_hermitian(Kernel(k, channels_), out.rho));
        return out;
    }

    Matrix rhs(const Matrix& rho) const {
        const cplx psi = trace_product(a_, rho);
        Matrix m = Matrix::Zero(rho.rows(), rho.cols());
        multiply_add(*base_coo_, 1.0, rho, m);
        multiply_add(*a_coo_, -zk_ * std::conj(psi), rho, m);
        multiply_add(*adag_coo_, -zk_ * psi, rho, m);
        // The zk|psi|^2 identity shift drops out of the commutator.
        Matrix out = -I * (m - m.adjoint());
        for (std::size_t n = 0; n < jump_coo_.size(); ++n) sandwich_add(jump_coo_[n], channels_.rates[n], rho, out);
        return out;
    }

    double residual(cplx psi, const Matrix& rho) const {
        return max_abs(apply_generator_hermitian(Kernel(effective(psi), channels_), rho));
    }

    double min_positive_rate() const noexcept {
        double r = std::numeric_limits<double>::infinity();
        for (double rate : channels_.rates) {
            if (rate > 0.0) r = std::min(r, rate);
        }
        return r;
    }

    // Largest real part of the spectrum of the mean-field dynamics linearized
    // around the psi = 0 steady state rho0. rho0 commutes with N, so the
    // perturbation that carries delta psi = tr(a X) lives in the coherences
    // |m><n| with N_m - N_n = 1, and there the linearization is
    //   dX/dt = L0 X + i z k tr(a X) [a†, rho0].
    double normal_state_growth_rate(const Matrix& rho0) const {
        const int d = space_.dim();
        const Operator n_op = excitation_number(space_);
        std::vector<int> slots;  // vec index m + d n
        std::vector<int> where(static_cast<std::size_t>(d) * d, -1);
        for (int nn = 0; nn < d; ++nn) {
            for (int m = 0; m < d; ++m) {
                if (n_op(m, m).real() - n_op(nn, nn).real() == 1.0) {
                    where[static_cast<std::size_t>(m + d * nn)] = static_cast<int>(slots.size());
                    slots.push_back(m + d * nn);
                }
            }
        }
        const auto size = static_cast<Eigen::Index>(slots.size());
        if (size == 0) return -std::numeric_limits<double>::infinity();

        const Sparse generator = superoperator(effective(0.0), channels_);
        Matrix block = Matrix::Zero(size, size);
        for (Eigen::Index j = 0; j < size; ++j) {
            for (Sparse::InnerIterator it(generator, slots[static_cast<std::size_t>(j)]); it; ++it) {
                const int i = where[static_cast<std::size_t>(it.row())];
                if (i >= 0) block(i, j) += it.value();
            }
        }
        const Matrix adag = Matrix(adag_);
        const Matrix source = adag * rho0 - rho0 * adag;
        const Matrix a = Matrix(a_);
        for (Eigen::Index j = 0; j < size; ++j) {
            const int m = slots[static_cast<std::size_t>(j)] % d;
            const int nn = slots[static_cast<std::size_t>(j)] / d;
            const cplx weight = a(nn, m);  // tr(a |m><n|) = a_nm
            if (weight == cplx(0.0, 0.0)) continue;
            for (Eigen::Index i = 0; i < size; ++i) {
                const int p = slots[static_cast<std::size_t>(i)] % d;
                const int q = slots[static_cast<std::size_t>(i)] / d;
                block(i, j) += I * zk_ * weight * source(p, q);
            }
        }
        Eigen::ComplexEigenSolver<Matrix> solver(block, false);
        if (solver.info() != Eigen::Success) throw NumericError("normal_state_growth_rate: eigensolver failed");
        return solver.eigenvalues().real().maxCoeff();
    }

private:
    HilbertSpace space_;
    double zk_;
    Channels channels_;
    Sparse base_;
    Sparse a_;
    Sparse adag_;
    Sparse identity_;
    std::optional<Coo> base_coo_;
    std::optional<Coo> a_coo_;
    std::optional<Coo> adag_coo_;
    std::vector<Coo> jump_coo_;
    std::vector<int> charge_;
    mutable std::optional<RealAxisSolver> axis_;
};

struct TrajectoryRecorder {
    const MeanFieldModel* model;
    int record_every;
    std::vector<TrajectoryPoint>* points;
    std::vector<long>* steps;
    double trace0;
    double* drift;

    void operator()(long step, double t, const Matrix& rho) {
        if (step % record_every != 0) return;
        record(step, t, rho);
    }
    void record(long step, double t, const Matrix& rho) {
        points->push_back({t, trace_product(model->annihilator(), rho), mean_photons(model->space(), rho)});
        steps->push_back(step);
        *drift = std::max(*drift, std::abs(rho.trace().real() - trace0));
    }
    void rollback(long step) {
        while (!steps->empty() && steps->back() > step) {
            steps->pop_back();
            points->pop_back();
        }
    }
};

Trajectory run_dynamics(const MeanFieldModel& model, const Matrix& rho0, double t_max, double dt,
                        const EvolveOptions& options) {
    Trajectory out;
    std::vector<long> steps;
    TrajectoryRecorder recorder{&model, std::max(1, options.record_every), &out.points, &steps,
                                rho0.trace().real(), &out.trace_drift};
    recorder.record(0, 0.0, rho0);
    const auto rhs = [&model](const Matrix& rho) { return model.rhs(rho); };
    out.final_rho = integrate(rhs, rho0, t_max, dt, options, recorder, &out.final_dt);
    if (out.points.empty() || out.points.back().t < t_max - 1e-13 * std::max(1.0, t_max)) {
        recorder.record(std::numeric_limits<long>::max(), t_max, out.final_rho);
    }
    return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string format_complex(cplx z) {
    std::ostringstream os;
    os.precision(6);
    os << z.real() << (z.imag() < 0 ? "-" : "+") << std::abs(z.imag()) << "i";
    return os.str();
}

}  // namespace

std::vector<Jump> model_jumps(const HilbertSpace& space, const ModelParams& params) {
    std::vector<Jump> out;
    if (params.kappa > 0.0) out.push_back({annihilation(space), params.kappa});
    if (params.gamma1 > 0.0) out.push_back({atomic(space, AtomicOp::sigma1_minus), params.gamma1});
    if (params.gamma2 > 0.0) out.push_back({atomic(space, AtomicOp::sigma2_minus), params.gamma2});
    return out;
}

Liouvillian::Liouvillian(const Operator& hamiltonian, std::vector<Jump> jumps)
    : space_(hamiltonian.space()), hamiltonian_(hamiltonian), jumps_(std::move(jumps)) {
    if (hamiltonian_.hermiticity_defect() > 1e-12 * std::max(1.0, hamiltonian_.matrix().cwiseAbs().maxCoeff())) {
        throw std::invalid_argument("build_liouvillian: Hamiltonian is not Hermitian");
    }
    Channels ch;
    for (const Jump& j : jumps_) {
        if (!(j.op.space() == space_)) throw std::invalid_argument("build_liouvillian: jump operator on another space");
        if (!(j.rate >= 0.0) || !std::isfinite(j.rate)) {
            throw std::invalid_argument("build_liouvillian: jump rates must be finite and >= 0");
        }
        ch.ops.push_back(to_sparse(j.op.matrix()));
        ch.rates.push_back(j.rate);
    }
    effective_ = make_effective(to_sparse(hamiltonian_.matrix()), ch);
    jump_ops_ = std::move(ch.ops);
    jump_rates_ = std::move(ch.rates);
    generator_ = superoperator(effective_, Channels{jump_ops_, jump_rates_});
}

Matrix Liouvillian::apply(const Matrix& rho) const {
    if (rho.rows() != space_.dim() || rho.cols() != space_.dim()) {
        throw std::invalid_argument("Liouvillian::apply: matrix dimension mismatch");
    }
    return apply_generator(Kernel(effective_, Channels{jump_ops_, jump_rates_}), rho);
}

double Liouvillian::max_rate() const noexcept {
    double r = 0.0;
    for (double rate : jump_rates_) r = std::max(r, rate);
    return r;
}

double Liouvillian::min_positive_rate() const noexcept {
    double r = std::numeric_limits<double>::infinity();
    for (double rate : jump_rates_) {
        if (rate > 0.0) r = std::min(r, rate);
    }
    return std::isfinite(r) ? r : 0.0;
}

Liouvillian build_liouvillian(const HilbertSpace& space, const Operator& hamiltonian, std::vector<Jump> jumps) {
    if (!(hamiltonian.space() == space)) throw std::invalid_argument("build_liouvillian: Hamiltonian on another space");
    return Liouvillian(hamiltonian, std::move(jumps));
}

Liouvillian meanfield_liouvillian(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                                  cplx psi) {
    return build_liouvillian(space, mean_field_hamiltonian(space, params, point, psi), model_jumps(space, params));
}

Vector vectorize(const Matrix& rho) { return Eigen::Map<const Vector>(rho.data(), rho.size()); }

Matrix unvectorize(const Vector& v, int dim) {
    if (v.size() != static_cast<Eigen::Index>(dim) * dim) throw std::invalid_argument("unvectorize: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), dim, dim);
}

SteadyState steady_state(const Liouvillian& generator) {
    const Channels ch{generator.jump_matrices(), generator.jump_rates()};
    return solve_stationary(generator.sparse(), generator.effective_hamiltonian(), ch, generator.space().dim());
}

const char* to_string(DynamicsLabel label) noexcept {
    switch (label) {
        case DynamicsLabel::converged: return "converged";
        case DynamicsLabel::oscillatory: return "oscillatory";
        case DynamicsLabel::multistable: return "multistable";
        case DynamicsLabel::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

double frequency_scale(const Operator& hamiltonian) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(hamiltonian.matrix(), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("frequency_scale: eigensolver failed");
    const auto& ev = solver.eigenvalues();
    return ev(ev.size() - 1) - ev(0);
}

Trajectory evolve_meanfield(const HilbertSpace& space, const ModelParams& params, LatticePoint point,
                            const Matrix& rho0, double t_max, double dt, const EvolveOptions& options) {
    if (rho0.rows() != space.dim() || rho0.cols() != space.dim()) {
        throw std::invalid_argument("evolve_meanfield: rho0 dimension mismatch");
    }
    const MeanFieldModel model(space, params, point);
    return run_dynamics(model, rho0, t_max, dt, options);
}

Matrix propagate(const Liouvillian& generator, const Matrix& x0, double t, double dt, const EvolveOptions& options) {
    if (x0.rows() != generator.space().dim() || x0.cols() != generator.space().dim()) {
        throw std::invalid_argument("propagate: matrix dimension mismatch");
    }
    const Kernel kernel(generator.effective_hamiltonian(), Channels{generator.jump_matrices(), generator.jump_rates()});
    const auto rhs = [&kernel](const Matrix& x) { return apply_generator(kernel, x); };
    return integrate(rhs, x0, t, dt, options, NoObserver{}, nullptr);
}

void propagate_samples(const Liouvillian& generator, const Matrix& x0, double dt, int count,
                       const std::function<bool(int, const Matrix&)>& observer, const EvolveOptions& options) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("propagate_samples: dt must be positive");
    if (x0.rows() != generator.space().dim() || x0.cols() != generator.space().dim()) {
        throw std::invalid_argument("propagate_samples: matrix dimension mismatch");
    }
    const Kernel kernel(generator.effective_hamiltonian(), Channels{generator.jump_matrices(), generator.jump_rates()});
    const auto rk4 = [&kernel](const Matrix& y, double h) {
        const Matrix k1 = apply_generator(kernel, y);
        const Matrix k2 = apply_generator(kernel, y + (0.5 * h) * k1);
        const Matrix k3 = apply_generator(kernel, y + (0.5 * h) * k2);
        const Matrix k4 = apply_generator(kernel, y + h * k3);
        return Matrix(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    };
    const int check_every = std::max(1, options.check_every);
    const double h_min = 1e-12 * std::max(1.0, dt * count);

    long substeps = 1;
    long step = 0;
    Matrix x = x0;
    for (int k = 1; k <= count; ++k) {
        Matrix y;
        for (;;) {
            const double h = dt / static_cast<double>(substeps);
            if (h < h_min) throw NumericError("propagate_samples: step size underflow");
            y = x;
            bool ok = true;
            for (long s = 0; s < substeps && ok; ++s) {
                if ((step + s) % check_every == 0) {
                    const Matrix full = rk4(y, h);
                    const Matrix half = rk4(rk4(y, 0.5 * h), 0.5 * h);
                    const double err = max_abs(full - half);
                    ok = std::isfinite(err) && err <= options.tolerance;
                    y = half;
                } else {
                    y = rk4(y, h);
                }
            }
            if (ok) break;
            substeps *= 2;
        }
        step += substeps;
        x = std::move(y);
        if (!observer(k, x)) return;
    }
}

DynamicsVerdict classify_dynamics(const Trajectory& trajectory) {
    DynamicsVerdict out;
    const auto& pts = trajectory.points;
    if (pts.size() < 2) {
        out.diagnostics = "trajectory too short to classify";
        return out;
    }
    const double t0 = pts.front().t;
    const double t_end = pts.back().t;
    const double tail_start = t_end - 0.2 * (t_end - t0);
    const cplx psi_end = pts.back().psi;

    double max_dev = 0.0;
    std::vector<double> tail;
    for (const auto& p : pts) {
        if (p.t < tail_start) continue;
        max_dev = std::max(max_dev, std::abs(p.psi - psi_end));
        tail.push_back(std::abs(p.psi));
    }
    if (max_dev < 1e-6) {
        out.label = DynamicsLabel::converged;
        return out;
    }

    const auto [lo, hi] = std::minmax_element(tail.begin(), tail.end());
    double mean = 0.0;
    for (double v : tail) mean += v;
    mean /= static_cast<double>(tail.size());
    const double relative_p2p = mean > 0.0 ? (*hi - *lo) / mean : 0.0;

    int extrema = 0;
    int last_sign = 0;
    for (std::size_t i = 1; i < tail.size(); ++i) {
        const double diff = tail[i] - tail[i - 1];
        const int sign = diff > 0.0 ? 1 : (diff < 0.0 ? -1 : 0);
        if (sign == 0) continue;
        if (last_sign != 0 && sign != last_sign) ++extrema;
        last_sign = sign;
    }

    if (relative_p2p > 1e-3 && extrema >= 3) {
        out.label = DynamicsLabel::oscillatory;
        return out;
    }
    std::ostringstream os;
    os << "tail max |psi - psi_end| = " << max_dev << ", relative peak-to-peak of |psi| = " << relative_p2p
       << ", extrema = " << extrema;
    out.diagnostics = os.str();
    return out;
}

double normal_state_growth_rate(const HilbertSpace& space, const ModelParams& params, LatticePoint point) {
    params.validate();
    const MeanFieldModel model(space, params, point);
    return model.normal_state_growth_rate(model.steady(0.0).rho);
}

SteadyStateResult self_consistent_steady_state(const HilbertSpace& space, const ModelParams& params,
                                               LatticePoint point, const SelfConsistencyOptions& options) {
    params.validate();
    if (!params.has_dissipation()) {
        throw std::invalid_argument("self_consistent_steady_state: all decay rates are zero; the steady state is "
                                    "not unique (use the equilibrium solver)");
    }
    if (!(options.beta > 0.0 && options.beta <= 1.0)) {
        throw std::invalid_argument("self_consistent_steady_state: beta must lie in (0, 1]");
    }
    const MeanFieldModel model(space, params, point);

    SteadyStateResult result;
    std::vector<FixedPoint> found;
    std::ostringstream notes;

    // psi = 0 is always a fixed point (rho_ss(0) is U(1) symmetric). It is
    // reported as an attractor only if it is linearly stable under the
    // mean-field dynamics.
    const SteadyState zero = model.steady(0.0);
    const double growth = model.normal_state_growth_rate(zero.rho);
    const bool zero_stable = growth < -1e-12;
    if (zero_stable) found.push_back({cplx(0.0, 0.0), zero.rho, zero.residual});

    std::vector<cplx> starts;
    if (options.warm_start) starts.push_back(*options.warm_start);
    starts.emplace_back(0.0, 0.0);
    for (double r : {0.3, 0.8, 1.5}) {
        starts.emplace_back(r, 0.0);
        starts.emplace_back(0.0, r);
    }
    std::mt19937_64 rng(options.seed);
    for (int s = 0; s < options.random_starts; ++s) {
        const double r = psi_search_bound(space) * uniform01(rng);
        const double phi = 2.0 * std::numbers::pi * uniform01(rng);
        starts.push_back(std::polar(r, phi));
    }

    // The loop commutes with psi -> psi e^{i phi} (H^m and every jump are
    // U(1) covariant), so a start that differs only by a phase from one
    // already run reaches a rotated copy of the same outcome and is skipped.
    std::vector<double> moduli_run{0.0};

    // Through that covariance the modulus obeys a closed 1-d map. A start
    // whose modulus sequence repeats with a short period (a fixed point of the
    // modulus with a rotating phase, or a k-cycle) can never converge; once
    // seen, any later start that lands on the same moduli shares its fate.
    std::vector<double> known_cycle;
    const auto joins_cycle = [&](double r) {
        return std::any_of(known_cycle.begin(), known_cycle.end(),
                           [r](double c) { return std::abs(r - c) <= 1e-6 * c; });
    };
    const auto detect_cycle = [&](const std::vector<double>& h) {
        constexpr int max_period = 16;
        constexpr int repeats = 4;
        const auto n = static_cast<int>(h.size());
        for (int period = 1; period <= max_period; ++period) {
            if (n < 2 * period + repeats) break;
            bool periodic = true;
            for (int t = n - period - repeats; t < n && periodic; ++t) {
                periodic = std::abs(h[t] - h[t - period]) <= 1e-8 * h[t];
            }
            if (periodic) {
                known_cycle.insert(known_cycle.end(), h.end() - period, h.end());
                return true;
            }
        }
        return false;
    };
    cplx nonconverged_psi(0.0, 0.0);
    bool any_nonconverged = false;

    for (const cplx start : starts) {
        const double modulus = std::abs(start);
        const bool seen = std::any_of(moduli_run.begin(), moduli_run.end(),
                                      [&](double m) { return std::abs(m - modulus) <= 1e-12 * std::max(1.0, m); });
        if (seen) continue;
        moduli_run.push_back(modulus);

        cplx psi = start;
        std::vector<double> history;
        bool settled = false;
        bool cycling = false;
        for (int it = 0; it < options.max_iter; ++it) {
            ++result.iterations;
            const SteadyState ss = model.steady(psi);
            const cplx image = trace_product(model.annihilator(), ss.rho);
            const cplx next = (1.0 - options.beta) * psi + options.beta * image;
            const double step = std::abs(next - psi);
            if (step < options.step_tolerance) {
                found.push_back({psi, ss.rho, ss.residual});
                settled = true;
                break;
            }
            // Falling into psi = 0; its status was decided above.
            if (std::abs(next) < 1e-7 || (zero_stable && std::abs(next) < kSuperfluidThreshold)) {
                settled = true;
                break;
            }
            psi = next;
            const double r = std::abs(psi);
            history.push_back(r);
            if (step > 1e-7 && (joins_cycle(r) || detect_cycle(history))) {
                cycling = true;
                break;
            }
        }
        if (!settled) {
            if (cycling) {
                notes << "start " << format_complex(start) << ": |psi| locked near " << std::abs(psi)
                      << " while its phase keeps rotating; ";
            }
            if (!any_nonconverged || std::abs(psi) > std::abs(nonconverged_psi)) nonconverged_psi = psi;
            any_nonconverged = true;
        }
    }
    if (!zero_stable) notes << "psi = 0 is unstable (growth rate " << growth << "); ";

    // Distinct attractors by |psi|, largest first.
    std::stable_sort(found.begin(), found.end(),
                     [](const FixedPoint& a, const FixedPoint& b) { return std::abs(a.psi) > std::abs(b.psi); });
    for (const FixedPoint& fp : found) {
        const bool duplicate =
            std::any_of(result.fixed_points.begin(), result.fixed_points.end(), [&](const FixedPoint& q) {
                return std::abs(std::abs(q.psi) - std::abs(fp.psi)) <= options.distinct_tolerance;
            });
        if (!duplicate) result.fixed_points.push_back(fp);
    }

    if (!result.fixed_points.empty()) {
        const FixedPoint& best = result.fixed_points.front();
        result.psi = best.psi;
        result.rho = best.rho;
        result.residual = best.residual;
        result.self_consistency_gap = std::abs(trace_product(model.annihilator(), best.rho) - best.psi);
        result.label = result.fixed_points.size() > 1 ? DynamicsLabel::multistable : DynamicsLabel::converged;
        result.diagnostics = notes.str();
        return result;
    }

    // No attractor among the fixed points: integrate the mean-field dynamics once.
    const SteadyState seed_state = any_nonconverged ? model.steady(nonconverged_psi) : zero;
    result.psi = nonconverged_psi;
    result.rho = seed_state.rho;
    result.residual = seed_state.residual;
    result.self_consistency_gap = std::abs(trace_product(model.annihilator(), seed_state.rho) - nonconverged_psi);
    if (!options.classify_nonconverged) {
        notes << "no attractor found within " << options.max_iter << " iterations";
        result.diagnostics = notes.str();
        return result;
    }

    Matrix rho0 = seed_state.rho;
    if (!any_nonconverged) {
        // Only the unstable psi = 0 was found; kick it along its unstable direction.
        rho0 = model.steady(cplx(1e-3, 0.0)).rho;
    }
    const double t_max = 10.0 / model.min_positive_rate();
    const Operator h = mean_field_hamiltonian(space, params, point, nonconverged_psi);
    const double dt = std::min(0.1, 1.0 / std::max(1e-12, frequency_scale(h)));
    EvolveOptions evolve_options;
    evolve_options.tolerance = 1e-8;
    const Trajectory trajectory = run_dynamics(model, rho0, t_max, dt, evolve_options);
    const DynamicsVerdict verdict = classify_dynamics(trajectory);
    const cplx psi_end = trajectory.points.back().psi;
    notes << "dynamics over t=" << t_max << ": " << to_string(verdict.label);
    if (!verdict.diagnostics.empty()) notes << " (" << verdict.diagnostics << ")";

    result.psi = psi_end;
    result.rho = trajectory.final_rho;
    result.residual = model.residual(psi_end, trajectory.final_rho);
    result.self_consistency_gap = 0.0;
    result.label = verdict.label;

    if (verdict.label == DynamicsLabel::converged) {
        // Polish the endpoint into a fixed point of the static map.
        const SteadyState polished = model.steady(psi_end);
        const double gap = std::abs(trace_product(model.annihilator(), polished.rho) - psi_end);
        if (gap <= 1e-7) {
            result.rho = polished.rho;
            result.residual = polished.residual;
            result.self_consistency_gap = gap;
            result.fixed_points.push_back({psi_end, polished.rho, polished.residual});
        } else {
            result.label = DynamicsLabel::indeterminate;
            notes << "; dynamics settled at psi=" << format_complex(psi_end)
                  << " but the static self-consistency gap there is " << gap;
        }
    }
    result.diagnostics = notes.str();
    return result;
}

}  // namespace mottsf
