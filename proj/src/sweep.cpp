#include "mottsf/sweep.hpp"

#include "mottsf/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>

namespace mottsf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kTopLevelPopulation = 1e-3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

SweepRow failed_row(double mu, double k, double kc, std::string message) {
    SweepRow row;
    row.mu = mu;
    row.k = k;
    row.psi_abs = row.mean_n = row.var_n = row.mean_N = kNaN;
    row.psi = cplx(kNaN, kNaN);
    row.kc_overlay = kc;
    row.error = std::move(message);
    return row;
}

bool cancelled(const SweepOptions& options) {
    return options.stop != nullptr && options.stop->load(std::memory_order_relaxed);
}

double top_population(const HilbertSpace& space, const Eigen::VectorXd& populations) {
    const int top = HilbertSpace::index(Level::g1, space.n_max());
    return populations.segment(top, 3).sum();
}

double overlay(const HilbertSpace& space, const ModelParams& params, double mu) {
    try {
        return perturbative_critical_hopping(space, params, mu);
    } catch (const DegenerateGroundState&) {
        return kNaN;
    }
}

void fill_observables(SweepRow& row, const ObservableSet& obs) {
    row.mean_n = obs.mean_n;
    row.var_n = obs.var_n;
    row.g2 = obs.g2;
    row.mean_N = obs.mean_N;
}

SweepRow equilibrium_cell(const HilbertSpace& space, const ModelParams& params, double mu, double k, double kc) {
    const GroundStateResult ground = order_parameter(space, params, {mu, k});
    SweepRow row;
    row.mu = mu;
    row.k = k;
    row.kc_overlay = kc;
    row.psi_abs = ground.psi;
    row.psi = ground.psi;
    row.phase = ground.phase;
    fill_observables(row, observables(space, ground.ground_vector));
    row.n_attractors = 1;
    row.trunc_flag = ground.at_search_bound ||
                     top_population(space, ground.ground_vector.cwiseAbs2()) > kTopLevelPopulation;
    return row;
}

SweepRow dissipative_cell(const HilbertSpace& space, const ModelParams& params, double mu, double k, double kc,
                          const SelfConsistencyOptions& options) {
    const SteadyStateResult result = self_consistent_steady_state(space, params, {mu, k}, options);
    SweepRow row;
    row.mu = mu;
    row.k = k;
    row.kc_overlay = kc;
    row.psi = result.psi;
    row.psi_abs = std::abs(result.psi);
    row.phase = row.psi_abs > kSuperfluidThreshold ? Phase::SF : Phase::MI;
    fill_observables(row, observables(space, result.rho));
    row.label = result.label;
    row.n_attractors = static_cast<int>(result.fixed_points.size());
    row.trunc_flag = top_population(space, result.rho.diagonal().real()) > kTopLevelPopulation;
    return row;
}

CellTiming summarize(std::vector<double> times) {
    CellTiming out;
    if (times.empty()) return out;
    out.total = std::accumulate(times.begin(), times.end(), 0.0);
    std::sort(times.begin(), times.end());
    const auto at = [&times](double q) {
        const auto i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(times.size()))) - 1;
        return times[std::min(i, times.size() - 1)];
    };
    out.p50 = at(0.50);
    out.p90 = at(0.90);
    out.p99 = at(0.99);
    out.max = times.back();
    return out;
}

int count_failures(const std::vector<SweepRow>& rows) {
    return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.error.empty(); }));
}

void record_shift(TruncationCheck& check, const SweepRow& base, const SweepRow& fine) {
    if (!base.error.empty() || !fine.error.empty()) return;
    ++check.points;
    check.max_psi_shift = std::max(check.max_psi_shift, std::abs(fine.psi_abs - base.psi_abs));
    check.max_mean_n_shift = std::max(check.max_mean_n_shift, std::abs(fine.mean_n - base.mean_n));
}

// Equilibrium rows for arbitrary mu and k lists.
SweepTable equilibrium_rows(const ModelParams& params, int n_max, const std::vector<double>& mus,
                            const std::vector<double>& ks, const SweepOptions& options) {
    const HilbertSpace space(n_max);
    std::vector<double> kc(mus.size());
    for (std::size_t i = 0; i < mus.size(); ++i) kc[i] = overlay(space, params, mus[i]);

    SweepTable table;
    const std::size_t cells = mus.size() * ks.size();
    table.rows.resize(cells);
    std::vector<double> times(cells, 0.0);
    parallel_for(cells, options.workers, [&](std::size_t c) {
        const std::size_t i = c / ks.size();
        const double mu = mus[i];
        const double k = ks[c % ks.size()];
        if (cancelled(options)) {
            table.rows[c] = failed_row(mu, k, kc[i], "cancelled");
            return;
        }
        const auto start = Clock::now();
        try {
            table.rows[c] = equilibrium_cell(space, params, mu, k, kc[i]);
        } catch (const std::exception& e) {
            table.rows[c] = failed_row(mu, k, kc[i], e.what());
        }
        times[c] = seconds_since(start);
    });
    table.timing = summarize(std::move(times));
    table.failed_cells = count_failures(table.rows);
    return table;
}

SweepTable dissipative_rows(const ModelParams& params, int n_max, const std::vector<double>& mus,
                            const std::vector<double>& ks, const SweepOptions& options) {
    if (!params.has_dissipation()) {
        throw std::invalid_argument("dissipative sweep: all rates are zero (use the equilibrium sweep)");
    }
    const HilbertSpace space(n_max);
    std::vector<double> kc(mus.size());
    for (std::size_t i = 0; i < mus.size(); ++i) kc[i] = overlay(space, params, mus[i]);

    SweepTable table;
    const std::size_t cells = mus.size() * ks.size();
    table.rows.resize(cells);
    std::vector<double> times(cells, 0.0);
    parallel_for(mus.size(), options.workers, [&](std::size_t i) {
        std::optional<cplx> previous;
        for (std::size_t j = 0; j < ks.size(); ++j) {
            const std::size_t c = i * ks.size() + j;
            if (cancelled(options)) {
                table.rows[c] = failed_row(mus[i], ks[j], kc[i], "cancelled");
                continue;
            }
            SelfConsistencyOptions sc = options.self_consistency;
            sc.seed = cell_seed(options.seed, c);
            sc.warm_start = options.warm_start ? previous : std::nullopt;
            const auto start = Clock::now();
            try {
                table.rows[c] = dissipative_cell(space, params, mus[i], ks[j], kc[i], sc);
                previous = table.rows[c].psi;
            } catch (const std::exception& e) {
                table.rows[c] = failed_row(mus[i], ks[j], kc[i], e.what());
                previous.reset();
            }
            times[c] = seconds_since(start);
        }
    });
    table.timing = summarize(std::move(times));
    table.failed_cells = count_failures(table.rows);
    return table;
}

}  // namespace

std::vector<double> AxisRange::values() const {
    std::vector<double> out(static_cast<std::size_t>(std::max(count, 0)));
    if (count == 1) {
        out[0] = lo;
        return out;
    }
    for (int i = 0; i < count; ++i) out[i] = lo + i * (hi - lo) / (count - 1);
    if (count > 1) out.back() = hi;
    return out;
}

void AxisRange::validate(const std::string& name) const {
    if (count < 2) throw std::invalid_argument(name + ": count must be >= 2");
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
        throw std::invalid_argument(name + ": need finite lo < hi");
    }
}

const char* to_string(SweepMode mode) noexcept { return mode == SweepMode::dissipative ? "dissipative" : "equilibrium"; }

void GridSpec::validate() const {
    mu.validate("mu range");
    k.validate("k range");
    if (k.lo < 0.0) throw std::invalid_argument("k range: hopping must be >= 0");
    if (n_max < 1) throw std::invalid_argument("n_max must be >= 1");
    params.validate();
}

void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn) {
    const std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), count);
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }

    std::atomic<std::size_t> next{0};
    std::mutex guard;
    std::exception_ptr first_error;
    std::size_t first_index = count;
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                    try {
                        fn(i);
                    } catch (...) {
                        const std::lock_guard lock(guard);
                        if (i < first_index) {
                            first_index = i;
                            first_error = std::current_exception();
                        }
                    }
                }
            });
        }
    }
    if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t cell_seed(std::uint64_t seed, std::size_t index) noexcept {
    // splitmix64 finalizer
    std::uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

SweepTable run_equilibrium_sweep(const GridSpec& grid, const SweepOptions& options) {
    grid.validate();
    if (grid.mode != SweepMode::equilibrium) throw std::invalid_argument("run_equilibrium_sweep: grid mode is dissipative");
    const std::vector<double> mus = grid.mu.values();
    const std::vector<double> ks = grid.k.values();
    SweepTable table = equilibrium_rows(grid.params, grid.n_max, mus, ks, options);

    if (options.truncation_check) {
        // Corners of the grid at a larger cutoff.
        table.truncation.n_max = grid.n_max + 4;
        const HilbertSpace fine(table.truncation.n_max);
        for (const std::size_t i : {std::size_t{0}, mus.size() - 1}) {
            for (const std::size_t j : {std::size_t{0}, ks.size() - 1}) {
                const SweepRow& base = table.rows[i * ks.size() + j];
                try {
                    record_shift(table.truncation, base, equilibrium_cell(fine, grid.params, mus[i], ks[j], 0.0));
                } catch (const std::exception&) {
                }
            }
        }
    }
    return table;
}

SweepTable run_dissipative_sweep(const GridSpec& grid, const SweepOptions& options) {
    grid.validate();
    if (grid.mode != SweepMode::dissipative) throw std::invalid_argument("run_dissipative_sweep: grid mode is equilibrium");
    const std::vector<double> mus = grid.mu.values();
    const std::vector<double> ks = grid.k.values();
    SweepTable table = dissipative_rows(grid.params, grid.n_max, mus, ks, options);

    if (options.truncation_check) {
        // The five cells with the most photons, re-run at a larger cutoff.
        std::vector<std::size_t> order(table.rows.size());
        std::iota(order.begin(), order.end(), 0);
        std::erase_if(order, [&](std::size_t c) { return !table.rows[c].error.empty(); });
        const std::size_t picked = std::min<std::size_t>(5, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(picked), order.end(),
                          [&](std::size_t x, std::size_t y) {
                              const double nx = table.rows[x].mean_n;
                              const double ny = table.rows[y].mean_n;
                              return nx != ny ? nx > ny : x < y;
                          });
        order.resize(picked);

        table.truncation.n_max = std::max(8, grid.n_max + 2);
        const HilbertSpace fine(table.truncation.n_max);
        std::vector<std::optional<SweepRow>> rechecked(picked);
        parallel_for(picked, options.workers, [&](std::size_t p) {
            const SweepRow& base = table.rows[order[p]];
            SelfConsistencyOptions sc = options.self_consistency;
            sc.seed = cell_seed(options.seed, order[p]);
            sc.warm_start = base.psi;
            try {
                rechecked[p] = dissipative_cell(fine, grid.params, base.mu, base.k, 0.0, sc);
            } catch (const std::exception&) {
            }
        });
        for (std::size_t p = 0; p < picked; ++p) {
            if (rechecked[p]) record_shift(table.truncation, table.rows[order[p]], *rechecked[p]);
        }
    }
    return table;
}

SweepTable run_observable_cuts(const ModelParams& params, const std::vector<double>& mu_list, const AxisRange& k_range,
                               int n_max, bool dissipative, const SweepOptions& options) {
    if (mu_list.empty()) throw std::invalid_argument("run_observable_cuts: empty mu list");
    k_range.validate("k range");
    if (k_range.lo < 0.0) throw std::invalid_argument("k range: hopping must be >= 0");
    params.validate();
    const std::vector<double> ks = k_range.values();
    return dissipative ? dissipative_rows(params, n_max, mu_list, ks, options)
                       : equilibrium_rows(params, n_max, mu_list, ks, options);
}

std::vector<SpectrumRecord> run_spectra(const ModelParams& params, const std::vector<LatticePoint>& points,
                                        const std::vector<Channel>& channels, const std::vector<double>& omega_grid,
                                        int n_max, double peak_prominence, const SweepOptions& options) {
    if (points.empty() || channels.empty()) throw std::invalid_argument("run_spectra: need points and channels");
    if (!params.has_dissipation()) throw std::invalid_argument("run_spectra: spectra need a dissipative steady state");
    params.validate();
    const HilbertSpace space(n_max);

    std::vector<SpectrumRecord> records(points.size() * channels.size());
    parallel_for(points.size(), options.workers, [&](std::size_t i) {
        const LatticePoint point = points[i];
        const auto slot = [&](std::size_t c) -> SpectrumRecord& { return records[i * channels.size() + c]; };
        for (std::size_t c = 0; c < channels.size(); ++c) {
            slot(c).point = point;
            slot(c).spectrum.channel = channels[c];
            slot(c).spectrum.omega_grid = omega_grid;
        }
        if (cancelled(options)) {
            for (std::size_t c = 0; c < channels.size(); ++c) slot(c).error = "cancelled";
            return;
        }
        try {
            SelfConsistencyOptions sc = options.self_consistency;
            sc.seed = cell_seed(options.seed, i);
            const SteadyStateResult steady = self_consistent_steady_state(space, params, point, sc);
            const Liouvillian generator = meanfield_liouvillian(space, params, point, steady.psi);
            for (std::size_t c = 0; c < channels.size(); ++c) {
                SpectrumRecord& record = slot(c);
                record.psi = steady.psi;
                record.label = steady.label;
                try {
                    record.spectrum = steady_state_spectrum(generator, steady.rho, channels[c], omega_grid);
                    record.peaks = find_peaks(record.spectrum, peak_prominence);
                } catch (const std::exception& e) {
                    record.error = e.what();
                }
            }
        } catch (const std::exception& e) {
            for (std::size_t c = 0; c < channels.size(); ++c) slot(c).error = e.what();
        }
    });
    return records;
}

}  // namespace mottsf
