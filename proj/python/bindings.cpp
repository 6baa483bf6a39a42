// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <array>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "kanmatch/baselines.hpp"
#include "kanmatch/correspondence.hpp"
#include "kanmatch/error.hpp"
#include "kanmatch/fitting.hpp"
#include "kanmatch/generator.hpp"
#include "kanmatch/image.hpp"
#include "kanmatch/image_io.hpp"
#include "kanmatch/isp.hpp"
#include "kanmatch/kan.hpp"
#include "kanmatch/metrics.hpp"
#include "kanmatch/param_map_io.hpp"
#include "kanmatch/spline.hpp"

namespace py = pybind11;
using namespace kanmatch;

namespace
{

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W, 3) float64 array to image.
ImageBuf to_image(const DoubleArray& a, ColorSpace cs)
{
    if (a.ndim() != 3 || a.shape(2) != 3)
        throw ContractError("image array must have shape (H, W, 3)");
    const auto h = static_cast<std::size_t>(a.shape(0));
    const auto w = static_cast<std::size_t>(a.shape(1));
    std::vector<double> data(a.data(), a.data() + h * w * 3);
    return ImageBuf(h, w, cs, std::move(data));
}

DoubleArray from_image(const ImageBuf& img)
{
    DoubleArray out({img.height(), img.width(), std::size_t{3}});
    const auto src = img.data();
    std::memcpy(out.mutable_data(), src.data(), src.size() * sizeof(double));
    return out;
}

// (N, 3) float64 array of colours.
std::vector<Rgb> to_colors(const DoubleArray& a, const char* what)
{
    if (a.ndim() != 2 || a.shape(1) != 3)
        throw ContractError(std::string(what) + " must have shape (N, 3)");
    std::vector<Rgb> out(static_cast<std::size_t>(a.shape(0)));
    const double* p = a.data();
    for (std::size_t n = 0; n < out.size(); ++n)
        out[n] = {p[3 * n], p[3 * n + 1], p[3 * n + 2]};
    return out;
}

DoubleArray from_colors(const std::vector<Rgb>& colors)
{
    DoubleArray out({colors.size(), std::size_t{3}});
    double* p = out.mutable_data();
    for (std::size_t n = 0; n < colors.size(); ++n)
        for (std::size_t c = 0; c < 3; ++c)
            p[3 * n + c] = colors[n][c];
    return out;
}

CorrespondenceSet to_corr(const DoubleArray& src, const DoubleArray& tgt,
                          const std::optional<DoubleArray>& weights)
{
    const auto s = to_colors(src, "src");
    const auto t = to_colors(tgt, "tgt");
    if (s.size() != t.size())
        throw ContractError("src and tgt must have the same number of rows");
    CorrespondenceSet corr;
    corr.samples.resize(s.size());
    for (std::size_t n = 0; n < s.size(); ++n)
        corr.samples[n] = {s[n], t[n], std::nullopt};
    if (weights)
    {
        if (weights->ndim() != 1 || static_cast<std::size_t>(weights->shape(0)) != s.size())
            throw ContractError("weights must have shape (N,)");
        corr.weights.assign(weights->data(), weights->data() + s.size());
    }
    corr.validate();
    return corr;
}

DoubleArray from_params(const KanParams& p)
{
    const auto flat = p.flatten();
    DoubleArray out(static_cast<py::ssize_t>(flat.size()));
    std::memcpy(out.mutable_data(), flat.data(), flat.size() * sizeof(double));
    return out;
}

KanParams to_params(const DoubleArray& a)
{
    if (a.ndim() != 1 || static_cast<std::size_t>(a.shape(0)) != KanParams::kCount)
        throw ContractError("parameter vector must have shape (90,)");
    return KanParams::from_flat(std::span<const double>(a.data(), KanParams::kCount));
}

// (Ht, Wt, 90) view of a parameter map.
DoubleArray map_tiles(const ParamMap& map)
{
    DoubleArray out({map.height_t, map.width_t, KanParams::kCount});
    double* p = out.mutable_data();
    for (const auto& tile : map.params)
    {
        const auto flat = tile.flatten();
        std::memcpy(p, flat.data(), flat.size() * sizeof(double));
        p += flat.size();
    }
    return out;
}

ParamMap make_map(const DoubleArray& tiles, std::size_t source_h, std::size_t source_w,
                  Interp interp)
{
    if (tiles.ndim() != 3 || static_cast<std::size_t>(tiles.shape(2)) != KanParams::kCount)
        throw ContractError("tiles must have shape (Ht, Wt, 90)");
    ParamMap map;
    map.height_t = static_cast<std::size_t>(tiles.shape(0));
    map.width_t = static_cast<std::size_t>(tiles.shape(1));
    map.source_h = source_h;
    map.source_w = source_w;
    map.interp = interp;
    const double* p = tiles.data();
    map.params.resize(map.tile_count());
    for (auto& tile : map.params)
    {
        tile = KanParams::from_flat(std::span<const double>(p, KanParams::kCount));
        p += KanParams::kCount;
    }
    map.validate();
    return map;
}

FitConfig make_config(const std::string& solver, int iters, double step, const std::string& loss,
                      std::pair<std::size_t, std::size_t> tiles, double smooth, double ridge)
{
    FitConfig cfg;
    if (solver == "ls")
        cfg.solver = Solver::ls;
    else if (solver == "gd")
        cfg.solver = Solver::gd;
    else
        throw ContractError("solver must be 'ls' or 'gd'");
    if (loss == "l1")
        cfg.loss = LossKind::l1;
    else if (loss == "l2")
        cfg.loss = LossKind::l2;
    else
        throw ContractError("loss must be 'l1' or 'l2'");
    cfg.iters = iters;
    cfg.step = step;
    cfg.tile_rows = tiles.first;
    cfg.tile_cols = tiles.second;
    cfg.smooth_lambda = smooth;
    cfg.ridge_lambda = ridge;
    cfg.validate();
    return cfg;
}

// Opaque holder: the bare variant would be converted member by member.
struct Baseline
{
    BaselineModel model;
};

py::dict metrics_dict(const MetricsReport& r)
{
    py::dict d;
    d["psnr_db"] = r.psnr_db;
    d["ssim"] = r.ssim;
    d["delta_e_mean"] = r.delta_e_mean;
    d["delta_e_p95"] = r.delta_e_p95;
    return d;
}

} // namespace

PYBIND11_MODULE(_kanmatch, m)
{
    m.doc() = "Spline colour transforms, fitting, baselines and metrics";

    // Translators run most recent first, so the base class goes in first.
    const auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", error.ptr());
    py::register_exception<ContractError>(m, "ContractError", error.ptr());
    py::register_exception<SolverError>(m, "SolverError", error.ptr());
    py::register_exception<FormatError>(m, "FormatError", error.ptr());
    py::register_exception<IoError>(m, "IoError", error.ptr());

    py::enum_<ColorSpace>(m, "ColorSpace")
        .value("linear", ColorSpace::linear)
        .value("srgb", ColorSpace::srgb)
        .value("raw", ColorSpace::raw);

    py::enum_<Interp>(m, "Interp")
        .value("nearest", Interp::nearest)
        .value("bilinear", Interp::bilinear);

    m.attr("PARAM_COUNT") = KanParams::kCount;
    m.attr("BASIS_COUNT") = kBasisCount;

    // Splines and the transform.
    m.def(
        "basis_vector", [](double x) { return basis_vector(x, SplineGrid::uniform()); }, py::arg("x"),
        "Cubic B-spline basis values at x on the default grid");
    m.def("identity_params", [] { return from_params(identity_params()); });
    m.def(
        "kan_eval",
        [](const DoubleArray& params, const DoubleArray& colors) {
            const KanParams p = to_params(params);
            std::vector<Rgb> c = to_colors(colors, "colors");
            for (auto& rgb : c)
                rgb = kan_eval(p, rgb);
            return from_colors(c);
        },
        py::arg("params"), py::arg("colors"));

    py::class_<ParamMap>(m, "ParamMap")
        .def(py::init(&make_map), py::arg("tiles"), py::arg("source_h"), py::arg("source_w"),
             py::arg("interp") = Interp::bilinear)
        .def_static(
            "uniform",
            [](const DoubleArray& params, std::size_t h, std::size_t w) {
                return ParamMap::uniform(to_params(params), h, w);
            },
            py::arg("params"), py::arg("source_h"), py::arg("source_w"))
        .def_property_readonly("tiles", &map_tiles)
        .def_property_readonly("shape",
                               [](const ParamMap& p) { return py::make_tuple(p.height_t, p.width_t); })
        .def_readonly("source_h", &ParamMap::source_h)
        .def_readonly("source_w", &ParamMap::source_w)
        .def_readonly("interp", &ParamMap::interp)
        .def(
            "apply",
            [](const ParamMap& map, const DoubleArray& img) {
                return from_image(apply(map, to_image(img, ColorSpace::srgb)));
            },
            py::arg("image"))
        .def(
            "save",
            [](const ParamMap& map, const std::filesystem::path& path) { write_param_map(path, map); },
            py::arg("path"))
        .def_static("load", py::overload_cast<const std::filesystem::path&>(&read_param_map),
                    py::arg("path"));

    // Fitting.
    m.def(
        "fit_global_ls",
        [](const DoubleArray& src, const DoubleArray& tgt, std::optional<DoubleArray> weights,
           double ridge) { return from_params(fit_global_ls(to_corr(src, tgt, weights), ridge)); },
        py::arg("src"), py::arg("tgt"), py::arg("weights") = py::none(),
        py::arg("ridge") = kDefaultRidge);
    m.def(
        "fit_global_gd",
        [](const DoubleArray& src, const DoubleArray& tgt, int iters, double step,
           const std::string& loss, std::optional<DoubleArray> init,
           std::optional<DoubleArray> weights) {
            const FitConfig cfg = make_config("gd", iters, step, loss, {1, 1}, 0.0, kDefaultRidge);
            const KanParams start = init ? to_params(*init) : identity_params();
            DescentTrace trace;
            const KanParams p = fit_global_gd(to_corr(src, tgt, weights), cfg, start, &trace);
            return py::make_tuple(from_params(p), trace.losses);
        },
        py::arg("src"), py::arg("tgt"), py::arg("iters") = 1000, py::arg("step") = 1e-2,
        py::arg("loss") = "l2", py::arg("init") = py::none(), py::arg("weights") = py::none());
    m.def(
        "correspondence_loss",
        [](const DoubleArray& params, const DoubleArray& src, const DoubleArray& tgt,
           const std::string& loss) {
            return correspondence_loss(to_params(params), to_corr(src, tgt, std::nullopt),
                                       loss == "l1" ? LossKind::l1 : LossKind::l2);
        },
        py::arg("params"), py::arg("src"), py::arg("tgt"), py::arg("loss") = "l2");
    m.def(
        "fit_tiled",
        [](const DoubleArray& src, const DoubleArray& tgt, std::pair<std::size_t, std::size_t> tiles,
           const std::string& solver, int iters, double step, const std::string& loss,
           double smooth, double ridge) {
            const FitConfig cfg = make_config(solver, iters, step, loss, tiles, smooth, ridge);
            return fit_tiled(to_image(src, ColorSpace::srgb), to_image(tgt, ColorSpace::srgb), cfg);
        },
        py::arg("src"), py::arg("tgt"), py::arg("tiles") = std::pair<std::size_t, std::size_t>{8, 8},
        py::arg("solver") = "ls", py::arg("iters") = 10, py::arg("step") = 1e-2,
        py::arg("loss") = "l1", py::arg("smooth") = 0.0, py::arg("ridge") = kDefaultRidge);
    m.def(
        "finetune_paired",
        [](const ParamMap& map, const DoubleArray& src, const DoubleArray& tgt, int iters,
           double step) {
            DescentTrace trace;
            ParamMap out = finetune_paired(map, to_image(src, ColorSpace::srgb),
                                           to_image(tgt, ColorSpace::srgb), iters, step, &trace);
            return py::make_tuple(std::move(out), trace.losses);
        },
        py::arg("map"), py::arg("src"), py::arg("tgt"), py::arg("iters") = 10,
        py::arg("step") = kFinetuneStep);

    // Baselines.
    py::class_<Baseline>(m, "Baseline")
        .def_property_readonly("method",
                               [](const Baseline& b) { return std::string(to_string(kind_of(b.model))); })
        .def_property_readonly("parameter_count",
                               [](const Baseline& b) { return parameter_count(b.model); })
        .def(
            "apply",
            [](const Baseline& b, const DoubleArray& img) {
                return from_image(apply_baseline(b.model, to_image(img, ColorSpace::srgb)));
            },
            py::arg("image"))
        .def("to_json", [](const Baseline& b) { return baseline_to_json(b.model); })
        .def_static(
            "from_json", [](const std::string& text) { return Baseline{baseline_from_json(text)}; },
            py::arg("text"));
    m.def(
        "fit_baseline",
        [](const std::string& method, const DoubleArray& src, const DoubleArray& tgt,
           std::optional<DoubleArray> weights) {
            return Baseline{fit_baseline(baseline_kind_from_string(method), to_corr(src, tgt, weights))};
        },
        py::arg("method"), py::arg("src"), py::arg("tgt"), py::arg("weights") = py::none());

    // Metrics.
    m.def("psnr", [](const DoubleArray& a, const DoubleArray& b) {
        return psnr(to_image(a, ColorSpace::srgb), to_image(b, ColorSpace::srgb));
    });
    m.def("ssim", [](const DoubleArray& a, const DoubleArray& b) {
        return ssim(to_image(a, ColorSpace::srgb), to_image(b, ColorSpace::srgb));
    });
    m.def(
        "evaluate_metrics",
        [](const DoubleArray& pred, const DoubleArray& ref) {
            return metrics_dict(
                evaluate_metrics(to_image(pred, ColorSpace::srgb), to_image(ref, ColorSpace::srgb)));
        },
        py::arg("prediction"), py::arg("reference"));
    m.def("srgb_to_linear", py::vectorize(&srgb_to_linear));
    m.def("linear_to_srgb", py::vectorize(&linear_to_srgb));

    // Synthetic pairs.
    m.def(
        "make_pair",
        [](const std::string& scene, const std::string& src_isp, const std::string& tgt_isp,
           std::size_t stride) {
            const SynthPair pair = make_pair(SceneSpec::from_json(scene), IspConfig::from_json(src_isp),
                                             IspConfig::from_json(tgt_isp), stride);
            std::vector<Rgb> s;
            std::vector<Rgb> t;
            for (const auto& c : pair.corr.samples)
            {
                s.push_back(c.src);
                t.push_back(c.tgt);
            }
            py::dict d;
            d["raw"] = from_image(pair.raw);
            d["src"] = from_image(pair.src);
            d["tgt"] = from_image(pair.tgt);
            d["corr_src"] = from_colors(s);
            d["corr_tgt"] = from_colors(t);
            return d;
        },
        py::arg("scene"), py::arg("src_isp"), py::arg("tgt_isp"), py::arg("stride") = 4,
        "Render a source/target pair from JSON scene and ISP descriptions");

    // Image files.
    m.def(
        "read_png",
        [](const std::filesystem::path& path) { return from_image(read_png(path)); },
        py::arg("path"));
    m.def(
        "write_png",
        [](const std::filesystem::path& path, const DoubleArray& img) {
            write_png(path, to_image(img, ColorSpace::srgb));
        },
        py::arg("path"), py::arg("image"));

    // Generator.
    py::class_<GeneratorProfile>(m, "GeneratorProfile")
        .def(py::init<>())
        .def_readwrite("channels", &GeneratorProfile::channels)
        .def_readwrite("anchors", &GeneratorProfile::anchors)
        .def_readwrite("bias_dim", &GeneratorProfile::bias_dim)
        .def_readwrite("hidden_dim", &GeneratorProfile::hidden_dim)
        .def_readwrite("cfm_channels", &GeneratorProfile::cfm_channels);

    py::class_<GeneratorWeights>(m, "GeneratorWeights")
        .def_static("init", &GeneratorWeights::init, py::arg("seed"),
                    py::arg("profile") = GeneratorProfile{})
        .def_static("load", &GeneratorWeights::load, py::arg("path"))
        .def("save", &GeneratorWeights::save, py::arg("path"))
        .def_property_readonly("seed", &GeneratorWeights::seed)
        .def_property_readonly("names", &GeneratorWeights::names)
        .def(
            "tensor_shape",
            [](const GeneratorWeights& w, const std::string& name) { return w.tensor(name).shape; },
            py::arg("name"));
    m.def(
        "generator_forward",
        [](const DoubleArray& img, const GeneratorWeights& w) {
            return generator_forward(to_image(img, ColorSpace::srgb), w);
        },
        py::arg("image"), py::arg("weights"));
}
