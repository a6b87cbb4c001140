// Parameter-grid engine. Cells run on a worker pool and land in pre-sized
// slots, so tables come out row-major (mu outer, k inner) and identical for
// any worker count.

#pragma once

#include "mottsf/dissipative.hpp"
#include "mottsf/equilibrium.hpp"
#include "mottsf/probes.hpp"
#include "mottsf/qspace.hpp"

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mottsf {

struct AxisRange {
    double lo = 0.0;
    double hi = 1.0;
    int count = 2;

    // lo + i (hi - lo) / (count - 1); the last value is hi exactly.
    std::vector<double> values() const;
    // count >= 2 and lo < hi, otherwise std::invalid_argument naming the axis.
    void validate(const std::string& name) const;
};

enum class SweepMode { equilibrium, dissipative };

const char* to_string(SweepMode mode) noexcept;

struct GridSpec {
    AxisRange mu{-1.0, 0.0, 60};
    AxisRange k{0.0, 0.3, 60};
    ModelParams params;
    int n_max = 8;
    SweepMode mode = SweepMode::equilibrium;

    std::size_t cells() const noexcept {
        return static_cast<std::size_t>(mu.count) * static_cast<std::size_t>(k.count);
    }
    void validate() const;
};

struct SweepRow {
    double mu = 0.0;
    double k = 0.0;
    double psi_abs = 0.0;
    Phase phase = Phase::MI;
    double mean_n = 0.0;
    double var_n = 0.0;
    std::optional<double> g2;
    double mean_N = 0.0;
    // Perturbative k_c of this mu row; NaN on a lobe edge, +inf if none.
    double kc_overlay = 0.0;
    // Dissipative cells only.
    std::optional<DynamicsLabel> label;
    cplx psi{0.0, 0.0};
    int n_attractors = 0;
    // psi on the search bound, or more than 1e-3 population in the top Fock level.
    bool trunc_flag = false;
    // Non-empty if the cell failed; the numeric fields are then NaN.
    std::string error;
};

struct TruncationCheck {
    int n_max = 0;  // cutoff used for the re-run
    int points = 0;
    double max_psi_shift = 0.0;
    double max_mean_n_shift = 0.0;
};

struct CellTiming {
    double p50 = 0.0;
    double p90 = 0.0;
    double p99 = 0.0;
    double max = 0.0;
    double total = 0.0;  // sum of cell times, seconds
};

struct SweepTable {
    std::vector<SweepRow> rows;
    TruncationCheck truncation;
    CellTiming timing;
    int failed_cells = 0;
};

struct SweepOptions {
    int workers = 1;
    std::uint64_t seed = 0x5eed;
    // Checked between cells; once set, remaining cells are marked cancelled.
    const std::atomic<bool>* stop = nullptr;
    // Self-consistency settings for dissipative cells (seed and warm start
    // are overridden per cell).
    SelfConsistencyOptions self_consistency;
    bool warm_start = true;
    bool truncation_check = true;
};

// Runs fn(i) for i in [0, count) on up to `workers` threads. Exceptions from
// fn are rethrown (the first one, by index) after all workers finish.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

// 64-bit mix of the sweep seed and a cell index.
std::uint64_t cell_seed(std::uint64_t seed, std::size_t index) noexcept;

SweepTable run_equilibrium_sweep(const GridSpec& grid, const SweepOptions& options = {});

// Rows are computed sequentially along k inside each mu row so that every
// cell can warm start from its left neighbour; mu rows run in parallel.
SweepTable run_dissipative_sweep(const GridSpec& grid, const SweepOptions& options = {});

// k-resolved observables for each mu in mu_list (rows: mu outer, k inner).
SweepTable run_observable_cuts(const ModelParams& params, const std::vector<double>& mu_list, const AxisRange& k_range,
                               int n_max, bool dissipative, const SweepOptions& options = {});

struct SpectrumRecord {
    LatticePoint point;
    cplx psi{0.0, 0.0};
    DynamicsLabel label = DynamicsLabel::indeterminate;
    SpectrumResult spectrum;
    std::vector<Peak> peaks;
    std::string error;
};

// Dissipative steady state at each point, then one spectrum per channel.
// Records are point-major, channel-minor.
std::vector<SpectrumRecord> run_spectra(const ModelParams& params, const std::vector<LatticePoint>& points,
                                        const std::vector<Channel>& channels, const std::vector<double>& omega_grid,
                                        int n_max, double peak_prominence, const SweepOptions& options = {});

}  // namespace mottsf
