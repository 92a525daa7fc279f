#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mwdha/cli.hpp"

namespace py = pybind11;
using namespace mwdha;

namespace {

// JSON crosses the boundary as text; the package wrapper uses the json module.
std::string run_json(const std::string& sub, const std::string& config) {
    return run(sub, json::parse(config)).dump();
}

Field to_field(const Mesh& m, py::array_t<double, py::array::c_style | py::array::forcecast> a) {
    if (a.ndim() != 2 || a.shape(0) != m.cells())
        throw ValidationError("expected an array of shape (cells, m) with cells = " + std::to_string(m.cells()));
    Field f = Field::zeros(m, static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), f.v.begin());
    return f;
}

py::array_t<double> to_array(const Field& f) {
    py::array_t<double> out({static_cast<py::ssize_t>(f.mesh.cells()), static_cast<py::ssize_t>(f.m)});
    std::copy(f.v.begin(), f.v.end(), out.mutable_data());
    return out;
}

Lattice lattice(int d, int L, std::int64_t shift_seed) {
    return shift_seed < 0 ? build_lattice(d, L) : build_lattice_random(d, L, static_cast<std::uint64_t>(shift_seed));
}

}  // namespace

PYBIND11_MODULE(_mwdha, m) {
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<SingularityError>(m, "SingularityError", PyExc_ArithmeticError);
    py::register_exception<ResourceError>(m, "ResourceError", PyExc_MemoryError);
    py::register_exception<UnsupportedError>(m, "UnsupportedError", PyExc_NotImplementedError);

    m.def("run_json", &run_json, py::arg("subcommand"), py::arg("config"));
    m.def("default_config_json", [] { return default_config().dump(); });
    m.def("subcommands", &subcommands);

    m.def(
        "haar_transform_json",
        [](py::array_t<double> values, int d, int L, std::int64_t shift_seed) {
            Lattice lat = lattice(d, L, shift_seed);
            return to_json(haar_transform(to_field(lat.mesh, values), lat)).dump();
        },
        py::arg("values"), py::arg("d"), py::arg("L"), py::arg("shift_seed") = -1);
    m.def(
        "haar_inverse_json", [](const std::string& coeffs) { return to_array(haar_inverse(haar_from_json(json::parse(coeffs)))); },
        py::arg("coefficients"));

    m.def(
        "apply_czo",
        [](const std::string& kernel, const std::string& matrix, py::array_t<double> values, int d, int L) {
            Lattice lat = build_lattice(d, L);
            KernelDescriptor k = parse_kernel(kernel, matrix, d);
            Field f = to_field(lat.mesh, values);
            Field g;
            {
                py::gil_scoped_release nogil;
                g = apply_czo(k, f, lat);
            }
            return to_array(g);
        },
        py::arg("kernel"), py::arg("matrix"), py::arg("values"), py::arg("d"), py::arg("L"));

    m.def(
        "lp_norm",
        [](py::array_t<double> values, const std::string& weight, double p, int d, int L) {
            Lattice lat = build_lattice(d, L);
            return lp_norm(to_field(lat.mesh, values), parse_weight(weight, lat.mesh), p);
        },
        py::arg("values"), py::arg("weight"), py::arg("p"), py::arg("d"), py::arg("L"));

    m.def(
        "estimate_pi_bad_json",
        [](int d, int r, double alpha, long long trials, std::uint64_t seed, int depth) {
            return to_json(estimate_pi_bad(d, r, alpha, trials, seed, depth)).dump();
        },
        py::arg("d"), py::arg("r"), py::arg("alpha"), py::arg("trials"), py::arg("seed"), py::arg("depth") = 10);
}
