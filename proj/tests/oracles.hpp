// Independent reference implementations used by the tests. Operators are
// assembled from Kronecker products of the photon and emitter factors, the
// Lindblad generator is written out as an explicit superoperator, and the
// closed forms are the textbook ones. Nothing here calls into the library.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <utility>
#include <vector>

namespace oracle {

using cplx = std::complex<double>;
using Mat = Eigen::MatrixXcd;

inline Mat kron(const Mat& a, const Mat& b) {
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// |i><j| on the emitter, levels 0 = g1, 1 = g2, 2 = e.
inline Mat ket_bra(int i, int j) {
    Mat m = Mat::Zero(3, 3);
    m(i, j) = 1.0;
    return m;
}

inline Mat photon_annihilation(int n_max) {
    Mat a = Mat::Zero(n_max + 1, n_max + 1);
    for (int n = 1; n <= n_max; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    return a;
}

// Index 3n + level means photon outer, emitter inner.
inline Mat on_photon(const Mat& op) { return kron(op, Mat::Identity(3, 3)); }
inline Mat on_emitter(int n_max, const Mat& op) { return kron(Mat::Identity(n_max + 1, n_max + 1), op); }

inline Mat field(int n_max) { return on_photon(photon_annihilation(n_max)); }

inline Mat hamiltonian(int n_max, double g, double omega, double delta1, double delta2) {
    const Mat a = field(n_max);
    const Mat s1 = on_emitter(n_max, ket_bra(0, 2));  // |g1><e|
    const Mat s2 = on_emitter(n_max, ket_bra(1, 2));  // |g2><e|
    return delta1 * on_emitter(n_max, ket_bra(2, 2)) + (delta1 - delta2) * on_emitter(n_max, ket_bra(1, 1)) +
           omega * (s1 + s1.adjoint()) + g * (a * s2.adjoint() + a.adjoint() * s2);
}

inline Mat number_commuting(int n_max) {
    const Mat a = field(n_max);
    return a.adjoint() * a + on_emitter(n_max, ket_bra(2, 2) + ket_bra(0, 0));
}

// The variant with Pg2 in place of Pg1; it does not commute with the Rabi term.
inline Mat number_printed(int n_max) {
    const Mat a = field(n_max);
    return a.adjoint() * a + on_emitter(n_max, ket_bra(2, 2) + ket_bra(1, 1));
}

// Column-major vec: vec(X rho Y) = (Y^T ⊗ X) vec(rho).
inline Mat superoperator(const Mat& h, const std::vector<std::pair<Mat, double>>& jumps) {
    const Eigen::Index d = h.rows();
    const Mat id = Mat::Identity(d, d);
    const cplx i{0.0, 1.0};
    Mat l = -i * kron(id, h) + i * kron(h.transpose(), id);
    for (const auto& [op, rate] : jumps) {
        const Mat n = op.adjoint() * op;
        l += rate * (kron(op.conjugate(), op) - 0.5 * kron(id, n) - 0.5 * kron(n.transpose(), id));
    }
    return l;
}

// Trace-normalized right singular vector of the smallest singular value.
inline Mat null_state(const Mat& l, int d) {
    Eigen::JacobiSVD<Mat> svd(l, Eigen::ComputeFullV);
    const Eigen::VectorXcd v = svd.matrixV().col(l.cols() - 1);
    Mat rho = Eigen::Map<const Mat>(v.data(), d, d);
    rho /= rho.trace();
    return 0.5 * (rho + rho.adjoint());
}

// Second singular value from the bottom: gap of the stationary manifold.
inline double second_smallest_singular(const Mat& l) {
    Eigen::JacobiSVD<Mat> svd(l);
    const auto& s = svd.singularValues();
    return s(s.size() - 2);
}

// Excited population of a driven two-level atom, H = Delta Pe + Omega sigma_x,
// decay gamma.
inline double bloch_excited(double omega, double delta, double gamma) {
    return omega * omega / (delta * delta + 0.25 * gamma * gamma + 2.0 * omega * omega);
}

inline double mollow_sideband(double omega, double delta) { return std::sqrt(4.0 * omega * omega + delta * delta); }

// Photon-only boundary of the n = 0 lobe, mu in (-1, 0).
inline double free_photon_kc(double mu, int z) { return -mu / z; }

// Normalized line with G1(tau) = n exp(-i w0 tau - gamma tau / 2).
inline double lorentzian(double w, double w0, double gamma) {
    return (0.5 * gamma / M_PI) / ((w - w0) * (w - w0) + 0.25 * gamma * gamma);
}

}  // namespace oracle
