// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

// kanmatch command-line tool.
//
// Exit codes: 0 success, 2 user or input error, 3 format or version error in
// a kanmatch binary file, 4 solver failure.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "kanmatch/baselines.hpp"
#include "kanmatch/correspondence.hpp"
#include "kanmatch/error.hpp"
#include "kanmatch/fitting.hpp"
#include "kanmatch/image_io.hpp"
#include "kanmatch/isp.hpp"
#include "kanmatch/kan.hpp"
#include "kanmatch/metrics.hpp"
#include "kanmatch/param_map_io.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace kanmatch;

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitFormat = 3;
constexpr int kExitSolver = 4;

constexpr const char* kManifestFormat = "kanmatch-synth-manifest";
constexpr int kManifestVersion = 1;

/// Unreadable or malformed user input (images, CSV, JSON configs).
class InputError : public Error
{
public:
    using Error::Error;
};

struct RunConfig
{
    std::string subcommand;
    // synth
    std::string scene_path;
    std::string isp_src_path;
    std::string isp_tgt_path;
    std::string manifest_path;
    std::string out_dir;
    std::size_t stride = 4;
    std::optional<std::uint64_t> seed;
    // fit / apply / eval / baseline
    std::string src_path;
    std::string tgt_path;
    std::string corr_path;
    std::string params_path;
    std::string out_path;
    std::string pred_path;
    std::string ref_path;
    std::string model_path;
    std::string report_path;
    std::string mode = "global";
    std::string solver = "ls";
    std::string loss = "l1";
    std::string tiles = "8x8";
    std::string method = "poly";
    std::optional<double> step;
    FitConfig fit;
};

template <class F>
auto as_input(F&& f) -> decltype(f())
{
    try
    {
        return f();
    }
    catch (const FormatError& e)
    {
        throw InputError(e.what());
    }
}

std::string read_text(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary);
    if (!os)
        throw IoError("cannot open '" + p.string() + "' for writing");
    os << text;
    if (!os)
        throw IoError("failed writing '" + p.string() + "'");
}

ImageBuf load_image(const std::string& path)
{
    return as_input([&] { return read_png(path); });
}

std::pair<ImageBuf, ImageBuf> load_pair(const RunConfig& rc)
{
    ImageBuf src = load_image(rc.src_path);
    ImageBuf tgt = load_image(rc.tgt_path);
    if (!src.same_shape(tgt))
        throw ContractError("source is " + std::to_string(src.height()) + "x" +
                            std::to_string(src.width()) + " but target is " +
                            std::to_string(tgt.height()) + "x" + std::to_string(tgt.width()));
    return {std::move(src), std::move(tgt)};
}

CorrespondenceSet load_correspondences(const RunConfig& rc, const ImageBuf& src,
                                       const ImageBuf& tgt)
{
    if (rc.corr_path.empty())
        return correspondences_from_images(src, tgt, 1);
    return as_input([&] { return read_correspondences_csv(fs::path(rc.corr_path)); });
}

// The PNG stores 16-bit samples; quantising first keeps corr.csv consistent
// with the images a later command reads back.
ImageBuf quantize16(ImageBuf img)
{
    for (double& v : img.data())
        v = std::round(clamp01(v) * 65535.0) / 65535.0;
    return img;
}

void print_json(const ojson& j)
{
    std::cout << j.dump(2) << "\n";
}

std::pair<std::size_t, std::size_t> parse_tiles(const std::string& s)
{
    const auto x = s.find_first_of("xX");
    try
    {
        if (x == std::string::npos)
            throw std::invalid_argument(s);
        std::size_t used = 0;
        const unsigned long r = std::stoul(s.substr(0, x), &used);
        if (used != x)
            throw std::invalid_argument(s);
        const std::string rest = s.substr(x + 1);
        const unsigned long c = std::stoul(rest, &used);
        if (used != rest.size() || r == 0 || c == 0)
            throw std::invalid_argument(s);
        return {r, c};
    }
    catch (const std::logic_error&)
    {
        throw ContractError("--tiles expects RxC with positive integers, got '" + s + "'");
    }
}

int cmd_synth(const RunConfig& rc)
{
    SceneSpec scene;
    IspConfig src_cfg;
    IspConfig tgt_cfg;
    std::size_t stride = rc.stride;
    if (!rc.manifest_path.empty())
    {
        ojson m;
        try
        {
            m = ojson::parse(read_text(rc.manifest_path));
        }
        catch (const ojson::parse_error& e)
        {
            throw InputError("manifest is not valid JSON: " + std::string(e.what()));
        }
        for (const char* key : {"format", "version", "stride", "scene", "isp_src", "isp_tgt"})
            if (!m.is_object() || !m.contains(key))
                throw ContractError(std::string("manifest: missing field '") + key + "'");
        if (m["format"] != kManifestFormat || m["version"] != kManifestVersion)
            throw ContractError("manifest: unsupported format or version");
        if (!m["stride"].is_number_unsigned() || m["stride"].get<std::size_t>() == 0)
            throw ContractError("manifest: field 'stride' must be a positive integer");
        stride = m["stride"].get<std::size_t>();
        scene = SceneSpec::from_json(m["scene"].dump());
        src_cfg = IspConfig::from_json(m["isp_src"].dump());
        tgt_cfg = IspConfig::from_json(m["isp_tgt"].dump());
    }
    else
    {
        if (rc.scene_path.empty() || rc.isp_src_path.empty() || rc.isp_tgt_path.empty())
            throw ContractError("synth needs --manifest or all of --scene, --src-isp, --tgt-isp");
        scene = SceneSpec::from_json(read_text(rc.scene_path));
        src_cfg = IspConfig::from_json(read_text(rc.isp_src_path));
        tgt_cfg = IspConfig::from_json(read_text(rc.isp_tgt_path));
    }
    if (rc.seed)
        scene.seed = *rc.seed;
    if (stride == 0)
        throw ContractError("--stride must be positive");

    const fs::path out(rc.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out))
        throw IoError("cannot create output directory '" + out.string() + "'");

    SynthPair pair = make_pair(scene, src_cfg, tgt_cfg, stride);
    const ImageBuf src = quantize16(pair.src);
    const ImageBuf tgt = quantize16(pair.tgt);
    write_png(out / "src.png", src);
    write_png(out / "tgt.png", tgt);
    write_correspondences_csv(out / "corr.csv", correspondences_from_images(src, tgt, stride));

    ojson m;
    m["format"] = kManifestFormat;
    m["version"] = kManifestVersion;
    m["command"] = "synth";
    m["seed"] = scene.seed;
    m["stride"] = stride;
    m["scene"] = ojson::parse(scene.to_json());
    m["isp_src"] = ojson::parse(src_cfg.to_json());
    m["isp_tgt"] = ojson::parse(tgt_cfg.to_json());
    m["outputs"] = {"src.png", "tgt.png", "corr.csv"};
    write_text(out / "manifest.json", m.dump(2) + "\n");

    ojson r;
    r["out_dir"] = out.string();
    r["height"] = src.height();
    r["width"] = src.width();
    r["correspondences"] = pair.corr.size();
    print_json(r);
    return kExitOk;
}

double image_l2(const ParamMap& map, const ImageBuf& src, const ImageBuf& tgt)
{
    const ImageBuf out = apply(map, src);
    double s = 0.0;
    for (std::size_t k = 0; k < out.data().size(); ++k)
    {
        const double d = out.data()[k] - tgt.data()[k];
        s += d * d;
    }
    return s / static_cast<double>(out.data().size());
}

int cmd_fit(RunConfig rc)
{
    const auto t0 = std::chrono::steady_clock::now();
    if (rc.mode != "global" && rc.mode != "tiled")
        throw ContractError("--mode must be global or tiled, got '" + rc.mode + "'");
    if (rc.solver != "ls" && rc.solver != "gd")
        throw ContractError("--solver must be ls or gd, got '" + rc.solver + "'");
    if (rc.loss != "l1" && rc.loss != "l2")
        throw ContractError("--loss must be l1 or l2, got '" + rc.loss + "'");
    FitConfig& cfg = rc.fit;
    cfg.solver = rc.solver == "ls" ? Solver::ls : Solver::gd;
    cfg.loss = rc.loss == "l1" ? LossKind::l1 : LossKind::l2;
    std::tie(cfg.tile_rows, cfg.tile_cols) = parse_tiles(rc.tiles);
    if (rc.step)
        cfg.step = *rc.step;
    cfg.validate();

    const auto [src, tgt] = load_pair(rc);
    ParamMap map;
    double initial = 0.0;
    double final_loss = 0.0;
    double loss_l1 = 0.0;
    double loss_l2 = 0.0;
    ojson extra = ojson::object();

    if (rc.mode == "global")
    {
        const CorrespondenceSet corr = load_correspondences(rc, src, tgt);
        KanParams p;
        if (cfg.solver == Solver::ls)
        {
            initial = correspondence_loss(identity_params(), corr, cfg.loss);
            p = fit_global_ls(corr, cfg.ridge_lambda);
            final_loss = correspondence_loss(p, corr, cfg.loss);
        }
        else
        {
            DescentTrace trace;
            p = fit_global_gd(corr, cfg, identity_params(), &trace);
            initial = trace.initial_loss;
            final_loss = trace.best_loss;
            extra["iterations"] = cfg.iters;
        }
        loss_l1 = correspondence_loss(p, corr, LossKind::l1);
        loss_l2 = correspondence_loss(p, corr, LossKind::l2);
        extra["samples"] = corr.size();
        map = ParamMap::uniform(p, src.height(), src.width());
    }
    else
    {
        TiledFitReport report;
        map = fit_tiled(src, tgt, cfg, &report);
        const ParamMap start = ParamMap::uniform(identity_params(), src.height(), src.width());
        initial = cfg.loss == LossKind::l1 ? image_l1(start, src, tgt) : image_l2(start, src, tgt);
        if (cfg.solver == Solver::gd)
        {
            DescentTrace trace;
            map = finetune_paired(map, src, tgt, cfg.iters, rc.step ? *rc.step : kFinetuneStep,
                                  &trace);
            extra["finetune_initial_l1"] = trace.initial_loss;
            extra["iterations"] = cfg.iters;
        }
        loss_l1 = image_l1(map, src, tgt);
        loss_l2 = image_l2(map, src, tgt);
        final_loss = cfg.loss == LossKind::l1 ? loss_l1 : loss_l2;
        extra["tiles"] = {cfg.tile_rows, cfg.tile_cols};
        extra["sweeps"] = report.sweeps;
        extra["fallback_tiles"] = report.fallback_tiles;
        for (const auto& w : report.warnings)
            std::cerr << "kanmatch: warning: " << w << "\n";
    }

    write_param_map(fs::path(rc.out_path), map);

    ojson r;
    r["mode"] = rc.mode;
    r["solver"] = rc.solver;
    r["loss"] = rc.loss;
    r["initial_loss"] = initial;
    r["final_loss"] = final_loss;
    r["loss_l1"] = loss_l1;
    r["loss_l2"] = loss_l2;
    for (auto& [k, v] : extra.items())
        r[k] = v;
    r["out"] = rc.out_path;
    r["runtime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    print_json(r);
    return kExitOk;
}

int cmd_apply(const RunConfig& rc)
{
    const ParamMap map = read_param_map(fs::path(rc.params_path));
    const ImageBuf src = load_image(rc.src_path);
    if (map.source_h != src.height() || map.source_w != src.width())
        throw ContractError("parameter map covers " + std::to_string(map.source_h) + "x" +
                            std::to_string(map.source_w) + " but image is " +
                            std::to_string(src.height()) + "x" + std::to_string(src.width()));
    write_png(rc.out_path, apply(map, src));
    ojson r;
    r["out"] = rc.out_path;
    r["tiles"] = {map.height_t, map.width_t};
    print_json(r);
    return kExitOk;
}

int cmd_eval(const RunConfig& rc)
{
    const ImageBuf pred = load_image(rc.pred_path);
    const ImageBuf ref = load_image(rc.ref_path);
    const std::string text = evaluate_metrics(pred, ref).to_json();
    if (!rc.report_path.empty())
        write_text(rc.report_path, text);
    std::cout << text;
    return kExitOk;
}

int cmd_baseline(const RunConfig& rc)
{
    const BaselineKind kind = baseline_kind_from_string(rc.method);
    const auto [src, tgt] = load_pair(rc);
    const CorrespondenceSet corr = load_correspondences(rc, src, tgt);
    const BaselineModel model = fit_baseline(kind, corr);
    const ImageBuf out = apply_baseline(model, src);
    write_png(rc.out_path, out);
    if (!rc.model_path.empty())
        save_baseline(rc.model_path, model);

    const MetricsReport m = evaluate_metrics(out, tgt);
    ojson r;
    r["method"] = std::string(to_string(kind));
    r["parameters"] = parameter_count(model);
    r["psnr_db"] = m.psnr_db;
    r["ssim"] = m.ssim;
    r["delta_e_mean"] = m.delta_e_mean;
    r["delta_e_p95"] = m.delta_e_p95;
    const std::string text = r.dump(2) + "\n";
    if (!rc.report_path.empty())
        write_text(rc.report_path, text);
    std::cout << text;
    return kExitOk;
}

int fail(int code, const std::string& msg)
{
    std::cerr << "kanmatch: error: " << msg << "\n";
    return code;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Colour transfer between camera pipelines with spatially varying KAN transforms"};
    app.require_subcommand(1);
    RunConfig rc;

    auto* synth = app.add_subcommand("synth", "Render a synthetic source/target pair");
    synth->add_option("--scene", rc.scene_path, "Scene spec JSON");
    synth->add_option("--src-isp", rc.isp_src_path, "Source ISP config JSON");
    synth->add_option("--tgt-isp", rc.isp_tgt_path, "Target ISP config JSON");
    synth->add_option("--manifest", rc.manifest_path, "Re-run from a manifest.json");
    synth->add_option("--stride", rc.stride, "Correspondence sampling stride")->capture_default_str();
    synth->add_option("--seed", rc.seed, "Override the scene seed");
    synth->add_option("--out", rc.out_dir, "Output directory")->required();

    auto* fit = app.add_subcommand("fit", "Fit a parameter map to an image pair");
    fit->add_option("--src", rc.src_path, "Source PNG")->required();
    fit->add_option("--tgt", rc.tgt_path, "Target PNG")->required();
    fit->add_option("--out", rc.out_path, "Output .cmkn file")->required();
    fit->add_option("--corr", rc.corr_path, "Correspondence CSV for global fits");
    fit->add_option("--mode", rc.mode, "global or tiled")->capture_default_str();
    fit->add_option("--solver", rc.solver, "ls or gd")->capture_default_str();
    fit->add_option("--iters", rc.fit.iters, "Descent iterations")->capture_default_str();
    fit->add_option("--tiles", rc.tiles, "Tile grid RxC")->capture_default_str();
    fit->add_option("--smooth", rc.fit.smooth_lambda, "Inter-tile smoothness weight")
        ->capture_default_str();
    fit->add_option("--ridge", rc.fit.ridge_lambda, "Ridge on spline weights")->capture_default_str();
    fit->add_option("--step", rc.step, "Descent step size");
    fit->add_option("--loss", rc.loss, "l1 or l2 descent loss")->capture_default_str();

    auto* app_apply = app.add_subcommand("apply", "Apply a parameter map to an image");
    app_apply->add_option("--params", rc.params_path, "Input .cmkn file")->required();
    app_apply->add_option("--src", rc.src_path, "Input PNG")->required();
    app_apply->add_option("--out", rc.out_path, "Output 16-bit PNG")->required();

    auto* eval = app.add_subcommand("eval", "Compare a prediction with a reference");
    eval->add_option("--pred", rc.pred_path, "Predicted PNG")->required();
    eval->add_option("--ref", rc.ref_path, "Reference PNG")->required();
    eval->add_option("--report", rc.report_path, "Write the JSON report here");

    auto* baseline = app.add_subcommand("baseline", "Fit and apply a classical colour mapping");
    baseline->add_option("--method", rc.method, "linear, poly, rootpoly or gammamat")
        ->capture_default_str();
    baseline->add_option("--src", rc.src_path, "Source PNG")->required();
    baseline->add_option("--tgt", rc.tgt_path, "Target PNG")->required();
    baseline->add_option("--out", rc.out_path, "Output 16-bit PNG")->required();
    baseline->add_option("--corr", rc.corr_path, "Correspondence CSV");
    baseline->add_option("--model", rc.model_path, "Write the fitted model JSON here");
    baseline->add_option("--report", rc.report_path, "Write the JSON report here");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    try
    {
        if (synth->parsed())
            return cmd_synth(rc);
        if (fit->parsed())
            return cmd_fit(rc);
        if (app_apply->parsed())
            return cmd_apply(rc);
        if (eval->parsed())
            return cmd_eval(rc);
        return cmd_baseline(rc);
    }
    catch (const SolverError& e)
    {
        return fail(kExitSolver, e.what());
    }
    catch (const FormatError& e)
    {
        return fail(kExitFormat, e.what());
    }
    catch (const Error& e)
    {
        return fail(kExitInput, e.what());
    }
    catch (const std::exception& e)
    {
        return fail(1, e.what());
    }
}
