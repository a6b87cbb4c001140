// Python bindings: thin wrappers that take and return plain numbers, numpy
// arrays and dicts.

#include "mottsf/errors.hpp"
#include "mottsf/sweep.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>
#include <tuple>

namespace py = pybind11;
using namespace mottsf;

namespace {

AxisRange axis(const std::tuple<double, double, int>& t) { return {std::get<0>(t), std::get<1>(t), std::get<2>(t)}; }

py::object optional_double(const std::optional<double>& v) { return v ? py::cast(*v) : py::none(); }

py::dict table_dict(const SweepTable& t) {
    const auto n = static_cast<py::ssize_t>(t.rows.size());
    py::array_t<double> mu(n), k(n), psi(n), mean_n(n), var_n(n), g2(n), mean_N(n), kc(n);
    py::array_t<bool> sf(n), trunc(n);
    py::list labels, errors;
    for (py::ssize_t i = 0; i < n; ++i) {
        const SweepRow& r = t.rows[i];
        mu.mutable_at(i) = r.mu;
        k.mutable_at(i) = r.k;
        psi.mutable_at(i) = r.psi_abs;
        mean_n.mutable_at(i) = r.mean_n;
        var_n.mutable_at(i) = r.var_n;
        g2.mutable_at(i) = r.g2 ? *r.g2 : std::numeric_limits<double>::quiet_NaN();
        mean_N.mutable_at(i) = r.mean_N;
        kc.mutable_at(i) = r.kc_overlay;
        sf.mutable_at(i) = r.phase == Phase::SF;
        trunc.mutable_at(i) = r.trunc_flag;
        labels.append(r.label ? py::cast(to_string(*r.label)) : py::none());
        errors.append(r.error);
    }
    py::dict d;
    d["mu"] = mu;
    d["k"] = k;
    d["psi"] = psi;
    d["superfluid"] = sf;
    d["mean_n"] = mean_n;
    d["var_n"] = var_n;
    d["g2"] = g2;
    d["mean_N"] = mean_N;
    d["kc_overlay"] = kc;
    d["trunc_flag"] = trunc;
    d["label"] = labels;
    d["error"] = errors;
    d["failed_cells"] = t.failed_cells;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean-field Lambda-emitter cavity lattice: equilibrium, steady states and spectra";

    auto numeric = py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);
    py::register_exception<DegenerateGroundState>(m, "DegenerateGroundState", numeric.ptr());
    py::register_exception<DegenerateSteadyState>(m, "DegenerateSteadyState", numeric.ptr());

    py::class_<ModelParams>(m, "ModelParams")
        .def(py::init([](double g, double omega, double delta1, double delta2, double kappa, double gamma1,
                         double gamma2, int z) {
                 ModelParams p{g, omega, delta1, delta2, kappa, gamma1, gamma2, z};
                 p.validate();
                 return p;
             }),
             py::arg("g") = 1.0, py::arg("omega") = 5.0, py::arg("delta1") = 4.0, py::arg("delta2") = -2.5,
             py::arg("kappa") = 0.0, py::arg("gamma1") = 0.0, py::arg("gamma2") = 0.0, py::arg("z") = 4)
        .def_readwrite("g", &ModelParams::g)
        .def_readwrite("omega", &ModelParams::omega)
        .def_readwrite("delta1", &ModelParams::delta1)
        .def_readwrite("delta2", &ModelParams::delta2)
        .def_readwrite("kappa", &ModelParams::kappa)
        .def_readwrite("gamma1", &ModelParams::gamma1)
        .def_readwrite("gamma2", &ModelParams::gamma2)
        .def_readwrite("z", &ModelParams::z)
        .def_property_readonly("delta3", &ModelParams::delta3)
        .def("__repr__", [](const ModelParams& p) {
            return py::str("ModelParams(g={}, omega={}, delta1={}, delta2={}, kappa={}, gamma1={}, gamma2={}, z={})")
                .format(p.g, p.omega, p.delta1, p.delta2, p.kappa, p.gamma1, p.gamma2, p.z);
        });

    m.def("hamiltonian", [](const ModelParams& p, int n_max) { return single_site_hamiltonian(HilbertSpace(n_max), p).matrix(); },
          py::arg("params"), py::arg("n_max") = 8, "Single-site H0 in the 3n + level basis.");
    m.def("excitation_number", [](int n_max) { return excitation_number(HilbertSpace(n_max)).matrix(); },
          py::arg("n_max") = 8);

    m.def(
        "order_parameter",
        [](const ModelParams& p, double mu, double k, int n_max) {
            const GroundStateResult r = order_parameter(HilbertSpace(n_max), p, {mu, k});
            py::dict d;
            d["psi"] = r.psi;
            d["energy"] = r.energy;
            d["mean_N"] = r.mean_n;
            d["superfluid"] = r.phase == Phase::SF;
            d["at_search_bound"] = r.at_search_bound;
            d["ground_vector"] = r.ground_vector;
            return d;
        },
        py::arg("params"), py::arg("mu"), py::arg("k"), py::arg("n_max") = 8);
    m.def(
        "critical_hopping",
        [](const ModelParams& p, double mu, int n_max) { return perturbative_critical_hopping(HilbertSpace(n_max), p, mu); },
        py::arg("params"), py::arg("mu"), py::arg("n_max") = 8);
    m.def(
        "lobe_boundaries",
        [](const ModelParams& p, const std::vector<int>& charges) {
            py::list out;
            for (const LobeBoundary& b : lobe_boundaries(p, charges))
                out.append(py::make_tuple(b.charge_low, b.mu_boundary, b.collapsed));
            return out;
        },
        py::arg("params"), py::arg("charges"), "List of (N, mu_boundary, collapsed).");

    m.def(
        "steady_state",
        [](const ModelParams& p, double mu, double k, cplx psi, int n_max) {
            return steady_state(meanfield_liouvillian(HilbertSpace(n_max), p, {mu, k}, psi)).rho;
        },
        py::arg("params"), py::arg("mu"), py::arg("k"), py::arg("psi") = cplx{0.0, 0.0}, py::arg("n_max") = 6,
        "Stationary density matrix at fixed psi.");
    m.def(
        "self_consistent_steady_state",
        [](const ModelParams& p, double mu, double k, int n_max, std::uint64_t seed) {
            SelfConsistencyOptions o;
            o.seed = seed;
            SteadyStateResult r;
            {
                py::gil_scoped_release release;
                r = self_consistent_steady_state(HilbertSpace(n_max), p, {mu, k}, o);
            }
            py::list attractors;
            for (const FixedPoint& f : r.fixed_points) attractors.append(f.psi);
            py::dict d;
            d["psi"] = r.psi;
            d["rho"] = r.rho;
            d["label"] = to_string(r.label);
            d["residual"] = r.residual;
            d["attractors"] = attractors;
            d["diagnostics"] = r.diagnostics;
            return d;
        },
        py::arg("params"), py::arg("mu"), py::arg("k"), py::arg("n_max") = 6, py::arg("seed") = 0x5eed);

    m.def(
        "observables",
        [](const Matrix& rho, int n_max) {
            const ObservableSet o = observables(HilbertSpace(n_max), rho);
            py::dict d;
            d["mean_n"] = o.mean_n;
            d["var_n"] = o.var_n;
            d["g2"] = optional_double(o.g2);
            d["mean_N"] = o.mean_N;
            d["psi"] = o.psi;
            return d;
        },
        py::arg("rho"), py::arg("n_max"));

    m.def(
        "sweep",
        [](const ModelParams& p, std::tuple<double, double, int> mu, std::tuple<double, double, int> k, int n_max,
           bool dissipative, int workers, std::uint64_t seed) {
            GridSpec g;
            g.mu = axis(mu);
            g.k = axis(k);
            g.params = p;
            g.n_max = n_max;
            g.mode = dissipative ? SweepMode::dissipative : SweepMode::equilibrium;
            SweepOptions o;
            o.workers = workers;
            o.seed = seed;
            SweepTable t;
            {
                py::gil_scoped_release release;
                t = dissipative ? run_dissipative_sweep(g, o) : run_equilibrium_sweep(g, o);
            }
            return table_dict(t);
        },
        py::arg("params"), py::arg("mu") = std::make_tuple(-1.0, 0.0, 60), py::arg("k") = std::make_tuple(0.0, 0.3, 60),
        py::arg("n_max") = 8, py::arg("dissipative") = false, py::arg("workers") = 1, py::arg("seed") = 0x5eed,
        "Grid of cells, mu outer and k inner; returns a dict of flat arrays.");

    m.def(
        "spectrum",
        [](const ModelParams& p, double mu, double k, const std::string& channel, const std::vector<double>& omega,
           int n_max, double prominence) {
            const std::vector<double> grid = omega.empty() ? uniform_grid(-15.0, 15.0, 0.01) : omega;
            std::vector<SpectrumRecord> recs;
            {
                py::gil_scoped_release release;
                recs = run_spectra(p, {{mu, k}}, {parse_channel(channel)}, grid, n_max, prominence);
            }
            const SpectrumRecord& r = recs.front();
            if (!r.error.empty()) throw NumericError(r.error);
            py::list peaks;
            for (const Peak& pk : r.peaks) peaks.append(py::make_tuple(pk.omega, pk.height));
            py::dict d;
            d["omega"] = r.spectrum.omega_grid;
            d["values"] = r.spectrum.values;
            d["flag"] = to_string(r.spectrum.flag);
            d["n_ss"] = r.spectrum.n_ss;
            d["psi"] = r.psi;
            d["peaks"] = peaks;
            return d;
        },
        py::arg("params"), py::arg("mu"), py::arg("k"), py::arg("channel") = "a", py::arg("omega") = std::vector<double>{},
        py::arg("n_max") = 6, py::arg("prominence") = 0.01);
}
