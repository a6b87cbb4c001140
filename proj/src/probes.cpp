#include "mottsf/probes.hpp"

#include "mottsf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mottsf {

namespace {

// Photon-number moments from basis populations.
ObservableSet moments(const HilbertSpace& space, const Eigen::VectorXd& populations, cplx psi) {
    double n1 = 0.0;
    double n2 = 0.0;
    double charge = 0.0;
    for (int i = 0; i < space.dim(); ++i) {
        const double n = HilbertSpace::photons_of(i);
        const double p = populations(i);
        n1 += n * p;
        n2 += n * n * p;
        charge += (HilbertSpace::level_of(i) == Level::g2 ? n : n + 1.0) * p;
    }
    ObservableSet out;
    out.mean_n = n1;
    out.var_n = std::max(0.0, n2 - n1 * n1);
    if (n1 >= kNumberFloor) out.g2 = (n2 - n1) / (n1 * n1);
    out.mean_N = charge;
    out.psi = psi;
    return out;
}

cplx trace_product(const Matrix& op, const Matrix& x) {
    // tr(op x) without forming the product.
    return (op.transpose().array() * x.array()).sum();
}

void check_stationary(const Liouvillian& generator, const Matrix& rho_ss) {
    const int d = generator.space().dim();
    if (rho_ss.rows() != d || rho_ss.cols() != d) throw std::invalid_argument("correlation: rho_ss dimension mismatch");
    const double residual = generator.apply(rho_ss).cwiseAbs().maxCoeff();
    if (!(residual <= 1e-8)) {
        throw std::invalid_argument("correlation: rho_ss is not stationary (residual " + std::to_string(residual) + ")");
    }
}

}  // namespace

ObservableSet observables(const HilbertSpace& space, const Vector& state) {
    if (state.size() != space.dim()) throw std::invalid_argument("observables: state dimension mismatch");
    const Eigen::VectorXd populations = state.cwiseAbs2();
    return moments(space, populations, annihilation(space).expectation(state));
}

ObservableSet observables(const HilbertSpace& space, const Matrix& rho) {
    if (rho.rows() != space.dim() || rho.cols() != space.dim()) {
        throw std::invalid_argument("observables: density matrix dimension mismatch");
    }
    const Eigen::VectorXd populations = rho.diagonal().real();
    return moments(space, populations, annihilation(space).expectation(rho));
}

const char* to_string(Channel channel) noexcept {
    switch (channel) {
        case Channel::a: return "a";
        case Channel::sigma1_minus: return "sigma1";
        case Channel::sigma2_minus: return "sigma2";
    }
    return "?";
}

Channel parse_channel(const std::string& name) {
    if (name == "a") return Channel::a;
    if (name == "sigma1" || name == "sigma1-") return Channel::sigma1_minus;
    if (name == "sigma2" || name == "sigma2-") return Channel::sigma2_minus;
    throw std::invalid_argument("unknown channel '" + name + "' (expected a, sigma1 or sigma2)");
}

Operator channel_operator(const HilbertSpace& space, Channel channel) {
    switch (channel) {
        case Channel::a: return annihilation(space);
        case Channel::sigma1_minus: return atomic(space, AtomicOp::sigma1_minus);
        case Channel::sigma2_minus: return atomic(space, AtomicOp::sigma2_minus);
    }
    throw std::invalid_argument("channel_operator: bad channel");
}

std::vector<cplx> first_order_correlation(const Liouvillian& generator, const Matrix& rho_ss, const Operator& alpha,
                                          std::span<const double> tau_grid) {
    if (!(alpha.space() == generator.space())) throw std::invalid_argument("correlation: operator from another space");
    if (tau_grid.empty() || tau_grid.front() != 0.0) throw std::invalid_argument("correlation: tau grid must start at 0");
    for (std::size_t i = 1; i < tau_grid.size(); ++i) {
        if (!(tau_grid[i] > tau_grid[i - 1]) || !std::isfinite(tau_grid[i])) {
            throw std::invalid_argument("correlation: tau grid must be strictly ascending and finite");
        }
    }
    check_stationary(generator, rho_ss);

    const Matrix& op = alpha.matrix();
    const cplx mean = trace_product(op, rho_ss);
    const double coherent = std::norm(mean);
    Matrix x = rho_ss * op.adjoint();

    std::vector<cplx> out;
    out.reserve(tau_grid.size());
    out.push_back(trace_product(op, x) - coherent);
    for (std::size_t i = 1; i < tau_grid.size(); ++i) {
        const double span = tau_grid[i] - tau_grid[i - 1];
        const double dt = std::min(span, correlation_time_step(generator));
        x = propagate(generator, x, span, dt);
        out.push_back(trace_product(op, x) - coherent);
    }
    return out;
}

CorrelationSeries correlation_until_decay(const Liouvillian& generator, const Matrix& rho_ss, const Operator& alpha,
                                          double dt, int max_steps, double decay) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("correlation: dt must be positive");
    if (max_steps < 2) throw std::invalid_argument("correlation: max_steps must be >= 2");
    if (!(alpha.space() == generator.space())) throw std::invalid_argument("correlation: operator from another space");
    check_stationary(generator, rho_ss);

    const Matrix& op = alpha.matrix();
    const double coherent = std::norm(trace_product(op, rho_ss));
    const Matrix x0 = rho_ss * op.adjoint();

    CorrelationSeries out;
    out.tau.push_back(0.0);
    out.g1.push_back(trace_product(op, x0) - coherent);
    const double threshold = decay * std::abs(out.g1.front());
    if (threshold == 0.0) return out;

    // An oscillating G1 can dip through zero, so require a quiet stretch.
    constexpr int quiet_needed = 200;
    int quiet = 0;
    bool decayed = false;
    propagate_samples(generator, x0, dt, max_steps - 1, [&](int k, const Matrix& x) {
        const cplx value = trace_product(op, x) - coherent;
        out.tau.push_back(k * dt);
        out.g1.push_back(value);
        quiet = std::abs(value) <= threshold ? quiet + 1 : 0;
        decayed = quiet >= quiet_needed;
        return !decayed;
    });
    out.truncated = !decayed;
    return out;
}

double correlation_time_step(const Liouvillian& generator) {
    // Ten samples per period of the fastest Bohr frequency.
    const double spread = frequency_scale(generator.hamiltonian());
    if (!(spread > 0.0)) return 0.05;
    return std::min(0.05, 0.1 * 2.0 * std::numbers::pi / spread);
}

const char* to_string(SpectrumFlag flag) noexcept { return flag == SpectrumFlag::no_emission ? "no_emission" : "normal"; }

SpectrumResult emission_spectrum(std::span<const cplx> g1, std::span<const double> tau_grid,
                                 std::span<const double> omega_grid, double n_ss, Channel channel) {
    if (g1.size() != tau_grid.size()) throw std::invalid_argument("emission_spectrum: G1 and tau grid differ in size");
    if (!(n_ss >= 0.0)) throw std::invalid_argument("emission_spectrum: n_ss must be >= 0");

    SpectrumResult out;
    out.channel = channel;
    out.omega_grid.assign(omega_grid.begin(), omega_grid.end());
    out.n_ss = n_ss;
    if (n_ss < kNumberFloor) {
        out.flag = SpectrumFlag::no_emission;
        return out;
    }

    const double scale = 1.0 / (std::numbers::pi * n_ss);
    out.values.reserve(omega_grid.size());
    for (const double omega : omega_grid) {
        double sum = 0.0;
        for (std::size_t k = 0; k + 1 < tau_grid.size(); ++k) {
            const double h = tau_grid[k + 1] - tau_grid[k];
            const double f0 = (g1[k] * std::polar(1.0, omega * tau_grid[k])).real();
            const double f1 = (g1[k + 1] * std::polar(1.0, omega * tau_grid[k + 1])).real();
            sum += 0.5 * h * (f0 + f1);
        }
        double value = scale * sum;
        if (value < 0.0) {
            out.most_negative = std::min(out.most_negative, value);
            ++out.clamped;
            value = 0.0;
        }
        out.values.push_back(value);
    }
    return out;
}

double emission_normalizer(const HilbertSpace& space, const Matrix& rho_ss, Channel channel) {
    const Operator op = channel_operator(space, channel);
    return (op.adjoint() * op).expectation(rho_ss).real();
}

SpectrumResult steady_state_spectrum(const Liouvillian& generator, const Matrix& rho_ss, Channel channel,
                                     std::span<const double> omega_grid, int max_steps) {
    const double n_ss = emission_normalizer(generator.space(), rho_ss, channel);
    if (n_ss < kNumberFloor) return emission_spectrum({}, {}, omega_grid, std::max(0.0, n_ss), channel);

    const Operator alpha = channel_operator(generator.space(), channel);
    const CorrelationSeries series =
        correlation_until_decay(generator, rho_ss, alpha, correlation_time_step(generator), max_steps);
    SpectrumResult out = emission_spectrum(series.g1, series.tau, omega_grid, n_ss, channel);
    out.truncated = series.truncated;
    return out;
}

std::vector<Peak> find_peaks(const SpectrumResult& spectrum, double prominence) {
    std::vector<Peak> peaks;
    const auto& v = spectrum.values;
    if (v.size() < 3) return peaks;
    const double threshold = prominence * *std::max_element(v.begin(), v.end());
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        // Plateaus count once, at their left edge.
        if (v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > threshold) {
            peaks.push_back({spectrum.omega_grid[i], v[i]});
        }
    }
    return peaks;
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
    if (!(step > 0.0) || !std::isfinite(lo) || !std::isfinite(hi) || hi < lo) {
        throw std::invalid_argument("uniform_grid: need lo <= hi and step > 0");
    }
    const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) grid[i] = lo + static_cast<double>(i) * step;
    return grid;
}

}  // namespace mottsf
