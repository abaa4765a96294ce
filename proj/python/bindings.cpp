#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <string>

#include "gapccot/checkpoint.hpp"
#include "gapccot/errors.hpp"
#include "gapccot/gap.hpp"
#include "gapccot/io.hpp"
#include "gapccot/metrics.hpp"
#include "gapccot/training.hpp"

namespace py = pybind11;
using namespace gapccot;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SpectralCube to_cube(const Array& a) {
  if (a.ndim() != 3) throw DimensionError("expected a (rows, cols, bands) array");
  SpectralCube c(a.shape(0), a.shape(1), a.shape(2));
  std::copy(a.data(), a.data() + a.size(), c.data.begin());
  return c;
}

Array from_cube(const SpectralCube& c) {
  Array a({c.rows, c.cols, c.bands});
  std::copy(c.data.begin(), c.data.end(), a.mutable_data());
  return a;
}

template <class G>
G to_grid(const Array& a) {
  if (a.ndim() != 2) throw DimensionError("expected a 2-d array");
  G g(a.shape(0), a.shape(1));
  std::copy(a.data(), a.data() + a.size(), g.data.begin());
  return g;
}

template <class G>
Array from_grid(const G& g) {
  Array a({g.rows, g.cols});
  std::copy(g.data.begin(), g.data.end(), a.mutable_data());
  return a;
}

NoiseSpec noise_from(const std::string& kind, double level) {
  if (kind == "none") return NoiseSpec::none();
  if (kind == "gaussian") return NoiseSpec::gaussian(level);
  if (kind == "shot") return NoiseSpec::shot(level);
  throw UsageError("noise must be none, gaussian or shot");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Snapshot compressive imaging core";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);

  py::class_<SensingOperator>(m, "Operator")
      .def_static(
          "cassi",
          [](const Array& mask, std::size_t bands, std::size_t d) {
            return SensingOperator::cassi(to_grid<Mask>(mask), bands, d);
          },
          py::arg("mask"), py::arg("bands"), py::arg("dispersion") = 2)
      .def_static(
          "video",
          [](const Array& frames) {
            if (frames.ndim() != 3) throw DimensionError("expected (frames, rows, cols)");
            std::vector<Mask> ms;
            const std::size_t T = frames.shape(0), R = frames.shape(1), C = frames.shape(2);
            for (std::size_t t = 0; t < T; ++t) {
              Mask mk(R, C);
              std::copy(frames.data() + t * R * C, frames.data() + (t + 1) * R * C, mk.data.begin());
              ms.push_back(std::move(mk));
            }
            return SensingOperator::video(std::move(ms));
          },
          py::arg("frames"))
      .def_property_readonly("rows", &SensingOperator::rows)
      .def_property_readonly("cols", &SensingOperator::cols)
      .def_property_readonly("bands", &SensingOperator::bands)
      .def_property_readonly("measurement_cols", &SensingOperator::measurement_cols)
      .def_property_readonly("psi", [](const SensingOperator& op) { return from_grid(op.psi()); })
      .def(
          "forward",
          [](const SensingOperator& op, const Array& x, const std::string& noise, double level,
             std::uint64_t seed) {
            Rng rng(seed);
            return from_grid(op.forward(to_cube(x), noise_from(noise, level), rng));
          },
          py::arg("cube"), py::arg("noise") = "none", py::arg("level") = 0.0, py::arg("seed") = 0)
      .def("adjoint", [](const SensingOperator& op, const Array& y) {
        return from_cube(op.adjoint(to_grid<Measurement>(y)));
      });

  m.def(
      "forward", [](const SensingOperator& op, const Array& x) { return from_grid(op.forward(to_cube(x))); },
      py::arg("op"), py::arg("cube"), "Noiseless measurement H x.");
  m.def(
      "adjoint", [](const SensingOperator& op, const Array& y) { return from_cube(op.adjoint(to_grid<Measurement>(y))); },
      py::arg("op"), py::arg("measurement"));
  m.def(
      "project",
      [](const Array& v, const Array& y, const SensingOperator& op) {
        return from_cube(project(to_cube(v), to_grid<Measurement>(y), op));
      },
      py::arg("v"), py::arg("measurement"), py::arg("op"), "Euclidean projection onto {x : Hx = y}.");
  m.def(
      "normalized_adjoint",
      [](const Array& y, const SensingOperator& op) {
        return from_cube(normalized_adjoint(to_grid<Measurement>(y), op));
      },
      py::arg("measurement"), py::arg("op"));
  m.def(
      "tv_denoise",
      [](const Array& v, double weight, std::size_t iters) { return from_cube(tv_denoise(to_cube(v), weight, iters)); },
      py::arg("cube"), py::arg("weight") = 0.1, py::arg("iters") = 30);
  m.def(
      "gap_tv",
      [](const Array& y, const SensingOperator& op, std::size_t stages, double weight, std::size_t iters) {
        return from_cube(gap_reconstruct(to_grid<Measurement>(y), op, gap_tv_config(stages, weight, iters)).cube);
      },
      py::arg("measurement"), py::arg("op"), py::arg("stages") = 30, py::arg("weight") = 0.1,
      py::arg("iters") = 30);
  m.def(
      "psnr", [](const Array& x, const Array& ref) { return psnr(to_cube(x), to_cube(ref)); }, py::arg("x"),
      py::arg("ref"));
  m.def(
      "ssim", [](const Array& x, const Array& ref) { return ssim(to_cube(x), to_cube(ref)); }, py::arg("x"),
      py::arg("ref"));
  m.def(
      "read_cube", [](const std::string& path) { return from_cube(read_cube(path)); }, py::arg("path"));
  m.def(
      "write_cube",
      [](const std::string& path, const Array& x, const std::string& dtype) {
        if (dtype != "f32" && dtype != "f64") throw UsageError("dtype must be f32 or f64");
        SpectralCube c = x.ndim() == 2 ? SpectralCube(x.shape(0), x.shape(1), 1) : to_cube(x);
        if (x.ndim() == 2) std::copy(x.data(), x.data() + x.size(), c.data.begin());
        write_cube(path, c, dtype == "f32" ? DType::F32 : DType::F64);
      },
      py::arg("path"), py::arg("cube"), py::arg("dtype") = "f64");
  m.def(
      "synthetic_cube",
      [](std::size_t rows, std::size_t cols, std::size_t bands, std::uint64_t seed, std::size_t index) {
        return from_cube(SyntheticFamily{rows, cols, bands, seed}.sample(index));
      },
      py::arg("rows") = 32, py::arg("cols") = 32, py::arg("bands") = 4, py::arg("seed") = 7, py::arg("index") = 0);

  py::class_<GapCcotNet<float>>(m, "Network")
      .def(py::init([](std::size_t stages, std::size_t bands, std::size_t base, std::uint64_t seed) {
             GapCcotConfig cfg;
             cfg.stages = stages;
             cfg.denoiser.bands = bands;
             cfg.denoiser.base_channels = base;
             return GapCcotNet<float>(cfg, seed);
           }),
           py::arg("stages") = 2, py::arg("bands") = 4, py::arg("base_channels") = 8, py::arg("seed") = 0)
      .def_static("load", [](const std::string& path) { return load_network(path); }, py::arg("path"))
      .def("save", [](const GapCcotNet<float>& net, const std::string& path) { save_checkpoint(net, path); })
      .def_property_readonly("stages", [](const GapCcotNet<float>& n) { return n.config().stages; })
      .def_property_readonly("bands", [](const GapCcotNet<float>& n) { return n.config().denoiser.bands; })
      .def(
          "reconstruct",
          [](const GapCcotNet<float>& net, const Array& y, const SensingOperator& op) {
            SpectralCube x = net.reconstruct(to_grid<Measurement>(y), op);
            clip01(x);
            return from_cube(x);
          },
          py::arg("measurement"), py::arg("op"));
}
