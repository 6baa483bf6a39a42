// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the kanmatch Project.

#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "kanmatch/image_io.hpp"
#include "kanmatch/kan.hpp"
#include "kanmatch/param_map_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace
{

const fs::path kCli = KANMATCH_CLI_PATH;
const fs::path kConfigs = KANMATCH_CONFIG_DIR;

struct Run
{
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p)
{
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text)
{
    std::ofstream os(p, std::ios::binary);
    os << text;
}

class Workdir
{
public:
    explicit Workdir(const std::string& name)
        : root_(fs::temp_directory_path() / ("kanmatch_cli_" + name))
    {
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    ~Workdir() { fs::remove_all(root_); }
    fs::path operator/(const std::string& leaf) const { return root_ / leaf; }
    std::string str(const std::string& leaf) const { return (root_ / leaf).string(); }

    Run run(const std::string& args) const
    {
        const fs::path o = root_ / "stdout.txt";
        const fs::path e = root_ / "stderr.txt";
        const std::string cmd = "'" + kCli.string() + "' " + args + " >'" + o.string() + "' 2>'" +
                                e.string() + "'";
        const int status = std::system(cmd.c_str());
        Run r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(o);
        r.err = slurp(e);
        return r;
    }

private:
    fs::path root_;
};

std::string cfg(const std::string& name)
{
    return (kConfigs / name).string();
}

// 64x64 scene written next to the run so tests stay fast.
void write_small_scene(const Workdir& w)
{
    spit(w / "scene.json", R"({"height": 64, "width": 64, "seed": 5, "content": "mixed"})");
}

} // namespace

TEST_CASE("synth writes the pair and reruns byte-identically from its manifest")
{
    Workdir w("synth");
    write_small_scene(w);
    const Run r = w.run("synth --scene " + w.str("scene.json") + " --src-isp " +
                        cfg("isp_gamma22.json") + " --tgt-isp " + cfg("isp_filmic.json") +
                        " --out " + w.str("a"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    for (const char* f : {"src.png", "tgt.png", "corr.csv", "manifest.json"})
        CHECK(fs::exists(w / ("a/" + std::string(f))));
    const json m = json::parse(slurp(w / "a/manifest.json"));
    CHECK(m["seed"] == 5);
    CHECK(m["scene"]["width"] == 64);
    CHECK(m["isp_tgt"]["tone"]["kind"] == "filmic_knee");

    const Run again = w.run("synth --manifest " + w.str("a/manifest.json") + " --out " + w.str("b"));
    REQUIRE_MESSAGE(again.code == 0, again.err);
    for (const char* f : {"src.png", "tgt.png", "corr.csv", "manifest.json"})
        CHECK(slurp(w / ("a/" + std::string(f))) == slurp(w / ("b/" + std::string(f))));

    const Run seeded = w.run("synth --manifest " + w.str("a/manifest.json") + " --seed 6 --out " +
                             w.str("c"));
    REQUIRE(seeded.code == 0);
    CHECK(slurp(w / "a/src.png") != slurp(w / "c/src.png"));
}

TEST_CASE("synth with identical pipelines gives a zero colour difference")
{
    Workdir w("same");
    write_small_scene(w);
    REQUIRE(w.run("synth --scene " + w.str("scene.json") + " --src-isp " + cfg("isp_filmic.json") +
                  " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("p"))
                .code == 0);
    const Run e = w.run("eval --pred " + w.str("p/src.png") + " --ref " + w.str("p/tgt.png") +
                        " --report " + w.str("r.json"));
    REQUIRE_MESSAGE(e.code == 0, e.err);
    const json rep = json::parse(slurp(w / "r.json"));
    CHECK(rep["delta_e_mean"].get<double>() == 0.0);
    CHECK(rep["ssim"].get<double>() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep["psnr_db"].get<double>() == 99.0);
    CHECK(json::parse(e.out) == rep);

    // Global LS on an identity pair.
    const Run f = w.run("fit --src " + w.str("p/src.png") + " --tgt " + w.str("p/tgt.png") +
                        " --out " + w.str("id.cmkn"));
    REQUIRE_MESSAGE(f.code == 0, f.err);
    const json fr = json::parse(f.out);
    CHECK(fr["loss_l2"].get<double>() < 1e-8);
    for (const char* key : {"initial_loss", "final_loss", "loss_l1", "loss_l2", "runtime_s"})
        CHECK(fr.contains(key));
}

TEST_CASE("synth reports missing and invalid config fields")
{
    Workdir w("badcfg");
    write_small_scene(w);
    json isp = json::parse(slurp(kConfigs / "isp_gamma22.json"));
    isp.erase("noise_sigma");
    spit(w / "isp.json", isp.dump());
    Run r = w.run("synth --scene " + w.str("scene.json") + " --src-isp " + w.str("isp.json") +
                  " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("o"));
    CHECK(r.code == 2);
    CHECK(r.err.find("noise_sigma") != std::string::npos);

    spit(w / "scene_bad.json", R"({"height": 64, "width": 64, "content": "mixed"})");
    r = w.run("synth --scene " + w.str("scene_bad.json") + " --src-isp " + cfg("isp_gamma22.json") +
              " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("o"));
    CHECK(r.code == 2);
    CHECK(r.err.find("seed") != std::string::npos);

    spit(w / "broken.json", "{ not json");
    r = w.run("synth --scene " + w.str("broken.json") + " --src-isp " + cfg("isp_gamma22.json") +
              " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("o"));
    CHECK(r.code == 2);
    r = w.run("synth --scene " + w.str("scene.json") + " --src-isp " + cfg("isp_gamma22.json") +
              " --tgt-isp " + cfg("isp_filmic.json") + " --out /proc/kanmatch-unwritable");
    CHECK(r.code == 2);
    CHECK(w.run("synth --out " + w.str("o")).code == 2);
    CHECK(w.run("").code == 2);
    CHECK(w.run("bogus").code == 2);
}

TEST_CASE("fit, apply, eval and baseline")
{
    Workdir w("pipeline");
    write_small_scene(w);
    REQUIRE(w.run("synth --scene " + w.str("scene.json") + " --src-isp " + cfg("isp_gamma22.json") +
                  " --tgt-isp " + cfg("isp_vignette.json") + " --out " + w.str("p"))
                .code == 0);
    const std::string pair = " --src " + w.str("p/src.png") + " --tgt " + w.str("p/tgt.png");

    Run r = w.run("fit" + pair + " --mode tiled --tiles 8x8 --out " + w.str("t.cmkn"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const kanmatch::ParamMap tiled = kanmatch::read_param_map(w / "t.cmkn");
    CHECK(tiled.height_t == 8);
    CHECK(tiled.width_t == 8);
    r = w.run("apply --params " + w.str("t.cmkn") + " --src " + w.str("p/src.png") + " --out " +
              w.str("t.png"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(kanmatch::read_png(w / "t.png").height() == 64);

    r = w.run("fit" + pair + " --solver gd --iters 10 --out " + w.str("g.cmkn"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    json fr = json::parse(r.out);
    CHECK(fr["final_loss"].get<double>() <= fr["initial_loss"].get<double>());
    r = w.run("fit" + pair + " --mode tiled --tiles 4X4 --solver gd --iters 10 --out " +
              w.str("tg.cmkn"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    fr = json::parse(r.out);
    CHECK(fr["final_loss"].get<double>() <= fr["initial_loss"].get<double>());
    CHECK(fr["final_loss"].get<double>() <= fr["finetune_initial_l1"].get<double>());

    r = w.run("fit" + pair + " --corr " + w.str("p/corr.csv") + " --out " + w.str("c.cmkn"));
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(json::parse(r.out)["samples"] == 256);

    // Identity map, then eval against the source.
    kanmatch::write_param_map(w / "id.cmkn",
                              kanmatch::ParamMap::uniform(kanmatch::identity_params(), 64, 64));
    REQUIRE(w.run("apply --params " + w.str("id.cmkn") + " --src " + w.str("p/src.png") +
                  " --out " + w.str("id.png"))
                .code == 0);
    r = w.run("eval --pred " + w.str("id.png") + " --ref " + w.str("p/src.png"));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["psnr_db"].get<double>() == 99.0);

    for (const char* m : {"linear", "poly", "rootpoly", "gammamat"})
    {
        r = w.run("baseline --method " + std::string(m) + pair + " --out " + w.str("b.png") +
                  " --model " + w.str("b.json") + " --report " + w.str("br.json"));
        REQUIRE_MESSAGE(r.code == 0, r.err);
        const json rep = json::parse(slurp(w / "br.json"));
        for (const char* key : {"psnr_db", "ssim", "delta_e_mean", "delta_e_p95"})
            CHECK(rep.contains(key));
        CHECK(rep["method"] == m);
        CHECK(json::parse(slurp(w / "b.json"))["type"] == m);
    }
    CHECK(w.run("baseline --method spline" + pair + " --out " + w.str("b.png")).code == 2);
}

TEST_CASE("exit codes")
{
    Workdir w("codes");
    write_small_scene(w);
    REQUIRE(w.run("synth --scene " + w.str("scene.json") + " --src-isp " + cfg("isp_gamma22.json") +
                  " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("p"))
                .code == 0);
    const std::string src = w.str("p/src.png");

    // Dimension mismatch.
    spit(w / "s2.json", R"({"height": 32, "width": 64, "seed": 5, "content": "mixed"})");
    REQUIRE(w.run("synth --scene " + w.str("s2.json") + " --src-isp " + cfg("isp_gamma22.json") +
                  " --tgt-isp " + cfg("isp_filmic.json") + " --out " + w.str("q"))
                .code == 0);
    Run r = w.run("fit --src " + src + " --tgt " + w.str("q/tgt.png") + " --out " + w.str("x.cmkn"));
    CHECK(r.code == 2);
    CHECK(r.err.find("64x64") != std::string::npos);

    // Corrupt and missing images.
    std::string png = slurp(src);
    spit(w / "trunc.png", png.substr(0, png.size() / 3));
    CHECK(w.run("eval --pred " + w.str("trunc.png") + " --ref " + src).code == 2);
    CHECK(w.run("eval --pred " + w.str("nope.png") + " --ref " + src).code == 2);
    spit(w / "bad.csv", "sr,sg,sb,tr,tg,tb\n0.1,0.2,oops,0.1,0.2,0.3\n");
    CHECK(w.run("fit --src " + src + " --tgt " + src + " --corr " + w.str("bad.csv") + " --out " +
                w.str("x.cmkn"))
              .code == 2);

    // Parameter-map version mismatch, bad magic and truncation.
    kanmatch::write_param_map(w / "id.cmkn",
                              kanmatch::ParamMap::uniform(kanmatch::identity_params(), 64, 64));
    std::string cmkn = slurp(w / "id.cmkn");
    std::string v2 = cmkn;
    v2[4] = 2;
    spit(w / "v2.cmkn", v2);
    r = w.run("apply --params " + w.str("v2.cmkn") + " --src " + src + " --out " + w.str("o.png"));
    CHECK(r.code == 3);
    CHECK(r.err.find("version") != std::string::npos);
    spit(w / "magic.cmkn", "XXXX" + cmkn.substr(4));
    CHECK(w.run("apply --params " + w.str("magic.cmkn") + " --src " + src + " --out " +
                w.str("o.png"))
              .code == 3);
    spit(w / "short.cmkn", cmkn.substr(0, cmkn.size() - 8));
    CHECK(w.run("apply --params " + w.str("short.cmkn") + " --src " + src + " --out " +
                w.str("o.png"))
              .code == 3);
    CHECK(w.run("apply --params " + w.str("nope.cmkn") + " --src " + src + " --out " +
                w.str("o.png"))
              .code == 2);
    // Map built for another image size.
    kanmatch::write_param_map(w / "small.cmkn",
                              kanmatch::ParamMap::uniform(kanmatch::identity_params(), 32, 64));
    CHECK(w.run("apply --params " + w.str("small.cmkn") + " --src " + src + " --out " +
                w.str("o.png"))
              .code == 2);

    // Solver failure.
    r = w.run("fit --src " + src + " --tgt " + w.str("p/tgt.png") + " --ridge 0 --out " +
              w.str("x.cmkn"));
    CHECK(r.code == 4);
    CHECK(r.err.find("singular") != std::string::npos);

    // Invalid options.
    CHECK(w.run("fit --src " + src + " --tgt " + src + " --mode local --out " + w.str("x.cmkn"))
              .code == 2);
    CHECK(w.run("fit --src " + src + " --tgt " + src + " --mode tiled --tiles 8 --out " +
                w.str("x.cmkn"))
              .code == 2);
    CHECK(w.run("fit --src " + src + " --tgt " + src + " --iters 0 --solver gd --out " +
                w.str("x.cmkn"))
              .code == 2);
    CHECK(w.run("--help").code == 0);
}
