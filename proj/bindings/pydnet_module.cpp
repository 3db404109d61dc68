// Python bindings for the core operations: convolution variants, the cost
// analyzer, model-name handling, and a small inference wrapper.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "pydnet/cost.hpp"
#include "pydnet/model_names.hpp"
#include "pydnet/network.hpp"
#include "pydnet/ops.hpp"

namespace py = pybind11;
using namespace pydnet;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const Array& a, const char* name) {
    if (a.ndim() != 4) {
        throw std::invalid_argument(std::string(name) + " must be a 4-d array (n, c, h, w)");
    }
    Tensor<float> t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                    static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
    std::memcpy(t.data(), a.data(), t.numel() * sizeof(float));
    return t;
}

Array from_tensor(const Tensor<float>& t) {
    Array out({t.n(), t.c(), t.h(), t.w()});
    std::memcpy(out.mutable_data(), t.data(), t.numel() * sizeof(float));
    return out;
}

Fusion fusion_from(const std::string& s) {
    if (s == "add") return Fusion::Add;
    if (s == "concat") return Fusion::Concat;
    throw std::invalid_argument("fusion must be 'add' or 'concat', got '" + s + "'");
}

py::dict report_to_dict(const CostReport& rep) {
    py::dict d;
    d["model"] = rep.model_name;
    d["params"] = rep.total_params;
    d["macs"] = rep.total_macs;
    d["flops_2x"] = rep.flops(FlopsConvention::TwoMACs);
    py::list rows;
    for (const CostRow& r : rep.rows) {
        py::dict row;
        row["layer"] = r.name;
        row["out_shape"] = py::make_tuple(r.out_c, r.out_h, r.out_w);
        row["params"] = r.params;
        row["macs"] = r.macs;
        rows.append(row);
    }
    d["rows"] = rows;
    return d;
}

// Inference-oriented wrapper: build a named model from a seed and run the
// forward pass with batch-norm in inference mode.
class Model {
  public:
    Model(const std::string& name, int classes, uint64_t seed)
        : cfg_(parse_model_name(name, classes)) {
        SeededRng rng(derive_seed(seed, "init"));
        net_ = std::make_unique<Network<float>>(cfg_, rng);
    }

    Array forward(const Array& x) {
        Tensor<float> in = to_tensor(x, "x");
        return from_tensor(net_->forward(in, Mode::Eval));
    }

    uint64_t param_count() {
        uint64_t total = 0;
        for (const auto& p : net_->params()) total += p.size;
        return total;
    }

    std::string name() const { return canonical_model_name(cfg_); }

  private:
    NetworkConfig cfg_;
    std::unique_ptr<Network<float>> net_;
};

}  // namespace

PYBIND11_MODULE(_pydnet, m) {
    m.doc() = "Pyramid depthwise-separable convolution kernels and cost analysis";

    m.def(
        "conv2d",
        [](const Array& x, const Array& w, int stride) {
            Tensor<float> xt = to_tensor(x, "x"), wt = to_tensor(w, "w");
            const ConvSpec spec = ConvSpec::make(wt.h(), stride, wt.c(), wt.n());
            return from_tensor(conv2d_fwd(xt, wt, spec));
        },
        py::arg("x"), py::arg("w"), py::arg("stride") = 1,
        "Standard 2-d convolution, odd kernel, same padding. w is (out_c, in_c, k, k).");

    m.def(
        "depthwise",
        [](const Array& x, const Array& w, int stride) {
            Tensor<float> xt = to_tensor(x, "x"), wt = to_tensor(w, "w");
            const ConvSpec spec = ConvSpec::make(wt.h(), stride, xt.c(), xt.c());
            return from_tensor(depthwise_fwd(xt, wt, spec));
        },
        py::arg("x"), py::arg("w"), py::arg("stride") = 1,
        "Depthwise convolution: one (1, 1, k, k) filter per channel, w is (c, 1, k, k).");

    m.def(
        "pointwise",
        [](const Array& x, const Array& w) {
            Tensor<float> xt = to_tensor(x, "x"), wt = to_tensor(w, "w");
            return from_tensor(pointwise_fwd(xt, wt));
        },
        py::arg("x"), py::arg("w"), "1x1 convolution mixing channels, w is (out_c, in_c, 1, 1).");

    m.def(
        "pyramid_depthwise",
        [](const Array& x, const std::vector<Array>& ws, const std::string& fusion,
           int stride) {
            Tensor<float> xt = to_tensor(x, "x");
            std::vector<Tensor<float>> wts;
            PyramidSpec spec;
            spec.fusion = fusion_from(fusion);
            spec.kernels.clear();
            for (const Array& w : ws) {
                Tensor<float> wt = to_tensor(w, "w");
                spec.kernels.push_back(wt.h());
                wts.push_back(std::move(wt));
            }
            return from_tensor(pyramid_dw_fwd(xt, wts, spec, stride));
        },
        py::arg("x"), py::arg("weights"), py::arg("fusion") = "add", py::arg("stride") = 1,
        "Multi-kernel depthwise branches fused by elementwise add or channel concat. "
        "weights is a list of (c, 1, k, k) arrays, one per branch.");

    m.def(
        "analyze",
        [](const std::string& name, int classes, int input_hw) {
            return report_to_dict(
                analyze_network(parse_model_name(name, classes), input_hw, input_hw));
        },
        py::arg("name"), py::arg("classes") = 10, py::arg("input_hw") = 32,
        "Per-layer parameter and multiply-accumulate breakdown for a named model.");

    m.def(
        "analyze_csv",
        [](const std::string& name, int classes) {
            return analyze_network(parse_model_name(name, classes)).to_csv();
        },
        py::arg("name"), py::arg("classes") = 10);

    m.def("cost_std_conv", &cost_std_conv, py::arg("h"), py::arg("w"), py::arg("d_i"),
          py::arg("d_j"), py::arg("k"));
    m.def("cost_dwsep", &cost_dwsep, py::arg("h"), py::arg("w"), py::arg("d_i"),
          py::arg("d_j"), py::arg("k"));
    m.def("cost_pyd_add", &cost_pyd_add, py::arg("h"), py::arg("w"), py::arg("d_i"),
          py::arg("d_j"), py::arg("kernels"));
    m.def("cost_pyd_concat", &cost_pyd_concat, py::arg("h"), py::arg("w"), py::arg("d_i"),
          py::arg("d_j"), py::arg("kernels"));
    m.def(
        "cost_ratio",
        [](uint64_t k, uint64_t d_j) {
            const Rational r = cost_ratio_std_over_dwsep(k, d_j).reduced();
            return py::make_tuple(r.num, r.den);
        },
        py::arg("k"), py::arg("d_j"),
        "Exact standard/depthwise-separable cost ratio as a reduced (num, den) pair.");
    m.def("scaled_channels", &scaled_channels, py::arg("alpha"), py::arg("d"),
          "Channel count under a width multiplier: round(alpha * d), half away from zero.");

    m.def(
        "model_names", []() {
            std::vector<std::string> names;
            for (const NetworkConfig& cfg : benchmark_grid())
                names.push_back(canonical_model_name(cfg));
            return names;
        },
        "Canonical names of the stock benchmark grid (22 models).");

    m.def(
        "parse_name",
        [](const std::string& name) {
            const NetworkConfig cfg = parse_model_name(name);
            py::dict d;
            const char* kind = cfg.kind == BlockKind::StdConv    ? "std"
                               : cfg.kind == BlockKind::DWConv   ? "dwsep"
                               : cfg.kind == BlockKind::PydAdd   ? "pyramid_add"
                                                                 : "pyramid_concat";
            d["kind"] = kind;
            d["depth"] = nominal_depth(cfg);
            d["alpha"] = cfg.alpha;
            d["canonical"] = canonical_model_name(cfg);
            return d;
        },
        py::arg("name"));

    py::class_<Model>(m, "Model",
                      "A named model with randomly initialized weights, for shape and "
                      "cost experiments. forward() runs inference-mode batch norm.")
        .def(py::init<const std::string&, int, uint64_t>(), py::arg("name"),
             py::arg("classes") = 10, py::arg("seed") = 1)
        .def("forward", &Model::forward, py::arg("x"))
        .def("param_count", &Model::param_count)
        .def_property_readonly("name", &Model::name);
}
