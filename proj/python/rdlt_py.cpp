// Python bindings over the core library. Blocks cross the boundary as int16 arrays of shape
// (count, n*n) or (count, n, n); matrices as float64 arrays.

#include "rdlt/baselines.hpp"
#include "rdlt/codec.hpp"
#include "rdlt/dataset.hpp"
#include "rdlt/entropy_model.hpp"
#include "rdlt/error.hpp"
#include "rdlt/evaluation.hpp"
#include "rdlt/trainer.hpp"
#include "rdlt/transforms.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>

namespace py = pybind11;
using namespace rdlt;

namespace {

using Int16Array = py::array_t<std::int16_t, py::array::c_style | py::array::forcecast>;

BlockSet to_blocks(const Int16Array& a) {
  if (a.ndim() == 3) {
    if (a.shape(1) != a.shape(2)) throw InvalidArgument("blocks must be square");
    const int n = static_cast<int>(a.shape(1));
    return BlockSet(n, std::vector<std::int16_t>(a.data(), a.data() + a.size()));
  }
  if (a.ndim() != 2) throw InvalidArgument("blocks must have shape (count, n*n) or (count, n, n)");
  const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(a.shape(1)))));
  if (n * n != a.shape(1)) throw InvalidArgument("row length is not a square");
  return BlockSet(n, std::vector<std::int16_t>(a.data(), a.data() + a.size()));
}

Int16Array from_blocks(const BlockSet& b) {
  Int16Array out({static_cast<py::ssize_t>(b.count()), static_cast<py::ssize_t>(b.block_size())});
  std::copy(b.samples().begin(), b.samples().end(), out.mutable_data());
  return out;
}

py::dict curve_dict(const RDCurve& c) {
  py::list points;
  for (const auto& p : c.points)
    points.append(py::dict(py::arg("q") = p.q, py::arg("rate_bpp") = p.rate_bpp, py::arg("psnr_db") = p.psnr_db,
                           py::arg("mse") = p.mse, py::arg("bits") = p.bits));
  return py::dict(py::arg("label") = c.label, py::arg("points") = points);
}

RDCurve curve_from(const std::vector<std::pair<double, double>>& rate_psnr) {
  RDCurve c;
  for (const auto& [r, p] : rate_psnr) c.points.push_back(RDPoint{0.0, r, p, 0.0, 0});
  return c;
}

} // namespace

PYBIND11_MODULE(_rdlt, m) {
  m.doc() = "Rate-distortion learned block transforms";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);
  py::register_exception<NoOverlapError>(m, "NoOverlapError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  py::class_<TransformMatrix>(m, "Transform")
      .def_property_readonly("n", &TransformMatrix::n)
      .def_property_readonly("label", &TransformMatrix::label)
      .def_property_readonly("is_dense", &TransformMatrix::is_dense)
      .def("to_dense", &TransformMatrix::to_dense, "Dense n^2 x n^2 matrix whose columns are the basis vectors")
      .def("__repr__", [](const TransformMatrix& t) { return "<Transform " + t.label() + ">"; });

  m.def("dct2", &dct2_matrix, py::arg("n"));
  m.def("dst7", &dst7_matrix, py::arg("n"));
  m.def("dct8", &dct8_matrix, py::arg("n"));
  m.def("dense_transform", [](const Matrix& mat, const std::string& label) {
    const int n = static_cast<int>(std::lround(std::sqrt(static_cast<double>(mat.rows()))));
    return TransformMatrix::dense(n, mat, label);
  }, py::arg("matrix"), py::arg("label") = "dense");
  m.def("forward", [](const TransformMatrix& t, const Matrix& x) { return forward(t, x); }, py::arg("transform"), py::arg("blocks"),
        "Coefficients y = xM, one block per row");
  m.def("inverse", [](const TransformMatrix& t, const Matrix& y, double q) { return inverse(t, y, q); },
        py::arg("transform"), py::arg("coeffs"), py::arg("q") = 1.0);
  m.def("orthonormality_defect", py::overload_cast<const TransformMatrix&>(&orthonormality_defect));
  m.def("orthonormalize", py::overload_cast<const Matrix&>(&orthonormalize));
  m.def("read_transform", &read_transform);
  m.def("write_transform", &write_transform);

  m.def("likelihood", py::overload_cast<double, double, double>(&likelihood), py::arg("mu"), py::arg("sigma"), py::arg("v"));

  m.def("quantize", [](const std::vector<double>& y, double q) { return quantize(y, q); });
  m.def("encode_blocks", [](const std::vector<std::int32_t>& symbols, int n) {
    const auto s = encode_blocks(symbols, n);
    return py::make_tuple(py::bytes(reinterpret_cast<const char*>(s.bytes.data()), s.bytes.size()), s.payload_bits);
  }, py::arg("symbols"), py::arg("n"), "Returns (stream bytes, payload bits)");
  m.def("decode_blocks", [](const py::bytes& b) {
    const std::string s = b;
    return decode_blocks(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size())).symbols;
  });

  m.def("evaluate", [](const TransformMatrix& t, const Int16Array& blocks, std::vector<double> steps, int threads) {
    return curve_dict(evaluate(t, to_blocks(blocks), steps, threads));
  }, py::arg("transform"), py::arg("blocks"), py::arg("steps") = kEvaluationSteps, py::arg("threads") = 1);
  m.def("bd_metrics", [](const std::vector<std::pair<double, double>>& test, const std::vector<std::pair<double, double>>& anchor) {
    const auto r = bd_metrics(curve_from(test), curve_from(anchor));
    return py::make_tuple(r.bd_psnr_db, r.bd_rate_percent);
  }, py::arg("test"), py::arg("anchor"), "(rate_bpp, psnr_db) pairs in; (BD-PSNR dB, BD-rate %) out");

  m.def("klt", [](const Int16Array& blocks) { return klt_from_blocks(to_blocks(blocks)).transform; });
  m.def("sot", [](const Int16Array& blocks, double threshold_lambda, int iters) {
    const auto b = to_blocks(blocks);
    SotConfig c;
    c.threshold_lambda = threshold_lambda;
    c.max_iters = iters;
    const auto r = sot_train(b, as_dense(dct2_matrix(b.n())), c);
    return py::make_tuple(r.transform, r.objective_history);
  }, py::arg("blocks"), py::arg("threshold_lambda") = SotConfig{}.threshold_lambda, py::arg("iters") = SotConfig{}.max_iters);

  m.def("train", [](const Int16Array& blocks, const py::dict& overrides) {
    nlohmann::json j = TrainConfig{}.to_json();
    for (const auto& [k, v] : overrides) {
      const auto key = py::cast<std::string>(k);
      if (!j.contains(key)) throw InvalidArgument("unknown train option: " + key);
      if (py::isinstance<py::bool_>(v)) j[key] = py::cast<bool>(v);
      else if (py::isinstance<py::int_>(v)) j[key] = py::cast<std::int64_t>(v);
      else j[key] = py::cast<double>(v);
    }
    const auto b = to_blocks(blocks);
    py::gil_scoped_release release;
    return train(b, TrainConfig::from_json(j)).transform;
  }, py::arg("blocks"), py::arg("config") = py::dict(), "Train an RDLT; `config` overrides TrainConfig fields by name");

  m.def("load_blocks", [](const std::filesystem::path& dir, const std::string& split) {
    const auto ds = read_dataset(dir);
    return from_blocks(split == "train" ? ds.train : ds.eval);
  }, py::arg("dataset_dir"), py::arg("split") = "eval");
}
