// Detection observables: photon statistics and the normalized
// emission spectrum obtained from first-order two-time correlations.

#pragma once

#include "mottsf/dissipative.hpp"
#include "mottsf/qspace.hpp"

#include <optional>
#include <span>
#include <vector>

namespace mottsf {

// Below this mean photon number g2 is undefined and nothing is emitted.
inline constexpr double kNumberFloor = 1e-8;

struct ObservableSet {
    double mean_n = 0.0;
    double var_n = 0.0;
    std::optional<double> g2;  // empty when mean_n < kNumberFloor
    double mean_N = 0.0;
    cplx psi{0.0, 0.0};  // <a>
};

ObservableSet observables(const HilbertSpace& space, const Vector& state);
ObservableSet observables(const HilbertSpace& space, const Matrix& rho);

enum class Channel { a, sigma1_minus, sigma2_minus };

const char* to_string(Channel channel) noexcept;
// Accepts "a", "sigma1", "sigma1-", "sigma2", "sigma2-". Throws std::invalid_argument.
Channel parse_channel(const std::string& name);
Operator channel_operator(const HilbertSpace& space, Channel channel);

// G1(tau) = tr[alpha e^{L tau}(rho_ss alpha†)] - |tr(alpha rho_ss)|^2 on an
// ascending grid starting at 0. Throws std::invalid_argument if rho_ss is
// not stationary (max |L rho_ss| > 1e-8) or the grid is malformed.
std::vector<cplx> first_order_correlation(const Liouvillian& generator, const Matrix& rho_ss, const Operator& alpha,
                                          std::span<const double> tau_grid);

struct CorrelationSeries {
    std::vector<double> tau;
    std::vector<cplx> g1;
    bool truncated = false;  // stopped at max_steps before decaying
};

// Uniform tau grid of spacing dt, extended until |G1| <= decay |G1(0)| or
// max_steps points.
CorrelationSeries correlation_until_decay(const Liouvillian& generator, const Matrix& rho_ss, const Operator& alpha,
                                          double dt, int max_steps = 10000, double decay = 1e-6);

// min(0.05, one tenth of the shortest Bohr period of H).
double correlation_time_step(const Liouvillian& generator);

enum class SpectrumFlag { normal, no_emission };

const char* to_string(SpectrumFlag flag) noexcept;

struct SpectrumResult {
    Channel channel = Channel::a;
    std::vector<double> omega_grid;
    std::vector<double> values;  // empty when flag == no_emission
    double n_ss = 0.0;
    SpectrumFlag flag = SpectrumFlag::normal;
    bool truncated = false;    // G1 had not decayed at the end of the tau grid
    int clamped = 0;           // negative values set to 0
    double most_negative = 0.0;
};

// S(omega) = 1/(pi n_ss) Re int_0^inf G1(tau) e^{i omega tau} dtau (trapezoid).
// Throws std::invalid_argument for n_ss < 0 or mismatched inputs.
SpectrumResult emission_spectrum(std::span<const cplx> g1, std::span<const double> tau_grid,
                                 std::span<const double> omega_grid, double n_ss, Channel channel = Channel::a);

// Steady-state normalizer: <a†a> for channel a, <sigma+ sigma-> = P_e otherwise.
double emission_normalizer(const HilbertSpace& space, const Matrix& rho_ss, Channel channel);

// Whole pipeline for one steady state: normalizer, G1 until decay, transform.
SpectrumResult steady_state_spectrum(const Liouvillian& generator, const Matrix& rho_ss, Channel channel,
                                     std::span<const double> omega_grid, int max_steps = 10000);

struct Peak {
    double omega = 0.0;
    double height = 0.0;
};

// Local maxima higher than prominence * max(values), ascending in omega.
std::vector<Peak> find_peaks(const SpectrumResult& spectrum, double prominence);

// lo, lo + step, ..., up to hi inclusive (within rounding).
std::vector<double> uniform_grid(double lo, double hi, double step);

}  // namespace mottsf
