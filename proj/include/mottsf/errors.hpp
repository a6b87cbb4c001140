#pragma once

#include <stdexcept>
#include <string>

namespace mottsf {

// Raised when a numerical routine cannot produce a trustworthy answer
// (eigensolver failure, minimizer or integrator breakdown).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Ground state of H0 - mu*N is (near-)degenerate, so the second-order
// perturbation sum for the phase boundary is undefined. Happens exactly at
// lobe edges.
class DegenerateGroundState : public NumericError {
public:
    DegenerateGroundState(const std::string& what, double gap)
        : NumericError(what), gap_(gap) {}
    double gap() const noexcept { return gap_; }

private:
    double gap_;
};

// The Liouvillian has more than one stationary state (disconnected dark
// manifolds, e.g. Omega = 0).
class DegenerateSteadyState : public NumericError {
public:
    DegenerateSteadyState(const std::string& what, int null_dimension)
        : NumericError(what), null_dimension_(null_dimension) {}
    int null_dimension() const noexcept { return null_dimension_; }

private:
    int null_dimension_;
};

}  // namespace mottsf
