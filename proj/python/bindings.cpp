// NumPy-facing bindings for the attention core. Arrays are accepted as
// float64 (other dtypes are cast), stored at the model's working precision,
// and returned as float64.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fipa/attention_kernel.hpp"
#include "fipa/error.hpp"
#include "fipa/flash_ipa.hpp"
#include "fipa/ipa.hpp"
#include "fipa/model_io.hpp"
#include "fipa/pair_features.hpp"
#include "fipa/tensor.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

fipa::Tensor to_tensor(const DoubleArray& arr, fipa::Precision prec) {
    std::vector<std::size_t> shape(static_cast<std::size_t>(arr.ndim()));
    for (py::ssize_t d = 0; d < arr.ndim(); ++d) {
        shape[static_cast<std::size_t>(d)] = static_cast<std::size_t>(arr.shape(d));
    }
    fipa::Tensor t(std::move(shape), prec);
    const double* src = arr.data();
    for (std::size_t i = 0; i < t.size(); ++i) t.set_flat(i, src[i]);
    return t;
}

py::array_t<double> to_array(const fipa::Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    double* dst = out.mutable_data();
    for (std::size_t i = 0; i < t.size(); ++i) dst[i] = t.get_flat(i);
    return out;
}

fipa::FrameSet to_frames(const DoubleArray& rotations, const DoubleArray& translations,
                         const std::optional<std::vector<bool>>& mask) {
    if (rotations.ndim() != 3 || rotations.shape(1) != 3 || rotations.shape(2) != 3) {
        throw fipa::ValueError("rotations must have shape [L, 3, 3]");
    }
    const auto L = static_cast<std::size_t>(rotations.shape(0));
    if (translations.ndim() != 2 || static_cast<std::size_t>(translations.shape(0)) != L ||
        translations.shape(1) != 3) {
        throw fipa::ValueError("translations must have shape [L, 3]");
    }
    fipa::FrameSet frames;
    frames.frames.reserve(L);
    for (std::size_t i = 0; i < L; ++i) {
        fipa::RigidTransform t;
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                t.rotation[r * 3 + c] = rotations.at(i, r, c);
            }
            t.translation[r] = translations.at(i, r);
        }
        frames.frames.push_back(t);
    }
    if (mask.has_value()) {
        if (mask->size() != L) throw fipa::ValueError("mask length must equal L");
        frames.mask = *mask;
    } else {
        frames.mask.assign(L, true);
    }
    return frames;
}

fipa::Precision parse_precision(const std::string& name) {
    return fipa::precision_from_name(name);
}

// One attention layer: configuration plus deterministic weights.
struct Model {
    fipa::IpaConfig cfg;
    fipa::IpaWeights weights;

    Model(std::size_t d_in, std::size_t d_z, std::size_t heads, std::size_t c,
          std::size_t n_query, std::size_t n_value, std::size_t rank,
          const std::string& precision, std::uint64_t seed) {
        cfg.d_in = d_in;
        cfg.d_z = d_z;
        cfg.heads = heads;
        cfg.c = c;
        cfg.n_query = n_query;
        cfg.n_value = n_value;
        cfg.rank = rank;
        cfg.precision = parse_precision(precision);
        cfg.validate();
        fipa::Rng rng(seed);
        weights = fipa::IpaWeights::init(cfg, rng);
    }

    fipa::FactorizedPair make_factors(const DoubleArray& z1, const DoubleArray& z2) const {
        fipa::FactorizedPair fp;
        fp.z1 = to_tensor(z1, cfg.precision);
        fp.z2 = to_tensor(z2, cfg.precision);
        return fp;
    }

    py::array_t<double> reference(const DoubleArray& s, const DoubleArray& z1,
                                  const DoubleArray& z2, const DoubleArray& rotations,
                                  const DoubleArray& translations,
                                  const std::optional<std::vector<bool>>& mask) const {
        const fipa::Tensor ts = to_tensor(s, cfg.precision);
        const fipa::FactorizedPair fp = make_factors(z1, z2);
        const fipa::FrameSet frames = to_frames(rotations, translations, mask);
        fipa::PairRep pair;
        pair.factors = &fp;
        return to_array(fipa::reference_forward(ts, pair, frames, cfg, weights));
    }

    py::array_t<double> flash(const DoubleArray& s, const DoubleArray& z1,
                              const DoubleArray& z2, const DoubleArray& rotations,
                              const DoubleArray& translations,
                              const std::optional<std::vector<bool>>& mask,
                              std::size_t tile_rows, std::size_t tile_cols,
                              int threads) const {
        const fipa::Tensor ts = to_tensor(s, cfg.precision);
        const fipa::FactorizedPair fp = make_factors(z1, z2);
        const fipa::FrameSet frames = to_frames(rotations, translations, mask);
        fipa::TileSpec tiles;
        tiles.block_rows = tile_rows;
        tiles.block_cols = tile_cols;
        return to_array(fipa::flash_ipa_forward(ts, fp, frames, cfg, weights, tiles, threads));
    }

    void save(const std::string& path) const { fipa::save_weights(weights, path); }
    void load(const std::string& path) { weights = fipa::load_weights(path); }
};

py::array_t<double> py_knn_distogram(const DoubleArray& translations, std::size_t k,
                                     std::size_t n_bins, double d_min, double d_max,
                                     std::size_t pe_dim) {
    fipa::DistogramSpec spec;
    spec.k = k;
    spec.n_bins = n_bins;
    spec.d_min = d_min;
    spec.d_max = d_max;
    spec.pe_dim = pe_dim;
    return to_array(fipa::knn_distogram(to_tensor(translations, fipa::Precision::f64), spec));
}

py::array_t<double> py_attention(const DoubleArray& q, const DoubleArray& k,
                                 const DoubleArray& v,
                                 const std::optional<std::vector<bool>>& mask,
                                 std::size_t tile_rows, std::size_t tile_cols, int threads,
                                 bool naive) {
    const fipa::Tensor tq = to_tensor(q, fipa::Precision::f64);
    const fipa::Tensor tk = to_tensor(k, fipa::Precision::f64);
    const fipa::Tensor tv = to_tensor(v, fipa::Precision::f64);
    const std::vector<bool> m = mask.value_or(std::vector<bool>{});
    if (naive) return to_array(fipa::naive_attention(tq, tk, tv, m));
    fipa::TileSpec tiles;
    tiles.block_rows = tile_rows;
    tiles.block_cols = tile_cols;
    return to_array(fipa::flash_attention(tq, tk, tv, m, tiles, threads));
}

}  // namespace

PYBIND11_MODULE(_fipa, m) {
    m.doc() =
        "Invariant point attention: quadratic reference form and factorized "
        "linear-memory form over a tiled online-softmax kernel";

    py::register_exception<fipa::ValueError>(m, "FipaValueError", PyExc_ValueError);
    py::register_exception<fipa::NumericError>(m, "FipaNumericError", PyExc_ArithmeticError);
    py::register_exception<fipa::IoError>(m, "FipaIoError", PyExc_IOError);

    py::class_<Model>(m, "Model",
                      "One attention layer: hyper-parameters plus deterministic weights")
        .def(py::init<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,
                      std::size_t, std::size_t, const std::string&, std::uint64_t>(),
             py::arg("d_in") = 32, py::arg("d_z") = 4, py::arg("heads") = 2,
             py::arg("c") = 8, py::arg("n_query") = 2, py::arg("n_value") = 2,
             py::arg("rank") = 2, py::arg("precision") = "f64", py::arg("seed") = 0)
        .def("reference", &Model::reference, py::arg("s"), py::arg("z1"), py::arg("z2"),
             py::arg("rotations"), py::arg("translations"), py::arg("mask") = std::nullopt,
             "Quadratic-memory forward pass")
        .def("flash", &Model::flash, py::arg("s"), py::arg("z1"), py::arg("z2"),
             py::arg("rotations"), py::arg("translations"), py::arg("mask") = std::nullopt,
             py::arg("tile_rows") = 64, py::arg("tile_cols") = 64, py::arg("threads") = 1,
             "Linear-memory forward pass over the tiled kernel")
        .def("save", &Model::save, py::arg("path"), "Write weights to a binary file")
        .def("load", &Model::load, py::arg("path"), "Replace weights from a binary file");

    m.def("knn_distogram", &py_knn_distogram, py::arg("translations"), py::arg("k") = 20,
          py::arg("n_bins") = 22, py::arg("d_min") = 2.0, py::arg("d_max") = 22.0,
          py::arg("pe_dim") = 16,
          "Rigid-motion-invariant nearest-neighbor distance/offset features");

    m.def(
        "flash_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v,
           const std::optional<std::vector<bool>>& mask, std::size_t tile_rows,
           std::size_t tile_cols, int threads) {
            return py_attention(q, k, v, mask, tile_rows, tile_cols, threads, false);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("mask") = std::nullopt,
        py::arg("tile_rows") = 64, py::arg("tile_cols") = 64, py::arg("threads") = 1,
        "Tiled online-softmax attention (callers pre-scale their logits)");

    m.def(
        "naive_attention",
        [](const DoubleArray& q, const DoubleArray& k, const DoubleArray& v,
           const std::optional<std::vector<bool>>& mask) {
            return py_attention(q, k, v, mask, 0, 0, 1, true);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("mask") = std::nullopt,
        "Dense softmax attention oracle");
}
