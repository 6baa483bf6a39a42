# SPDX-License-Identifier: Apache-2.0
# Copyright Contributors to the kanmatch Project.

import json
import os
import pathlib

import numpy as np
import pytest

import kanmatch as km

CONFIG_DIR = pathlib.Path(
    os.environ.get("KANMATCH_CONFIG_DIR", pathlib.Path(__file__).resolve().parents[2] / "configs")
)


def random_colors(rng, n):
    return rng.uniform(0.0, 1.0, size=(n, 3))


def test_basis_partition_of_unity():
    for x in np.linspace(-1.0, 1.0, 101):
        b = np.asarray(km.basis_vector(x))
        assert b.shape == (km.BASIS_COUNT,)
        assert abs(b.sum() - 1.0) < 1e-12
        assert (b >= 0.0).all()


def test_identity_transform():
    p = km.identity_params()
    assert p.shape == (km.PARAM_COUNT,)
    rgb = random_colors(np.random.default_rng(0), 50)
    np.testing.assert_allclose(km.kan_eval(p, rgb), rgb, atol=1e-12)


def test_ls_recovers_kan_generated_targets():
    rng = np.random.default_rng(1)
    truth = km.identity_params() + rng.normal(0.0, 0.05, size=km.PARAM_COUNT)
    src = random_colors(rng, 4000)
    tgt = km.kan_eval(truth, src)
    keep = ((tgt >= 0.0) & (tgt <= 1.0)).all(axis=1)
    src, tgt = src[keep], tgt[keep]
    assert len(src) > 1000
    p = km.fit_global_ls(src, tgt)
    assert km.correspondence_loss(p, src, tgt, "l2") < 1e-8


def test_gd_losses_do_not_increase():
    rng = np.random.default_rng(2)
    src = random_colors(rng, 300)
    tgt = np.clip(src ** 1.2, 0.0, 1.0)
    p, losses = km.fit_global_gd(src, tgt, iters=50, step=1e-2, loss="l2")
    assert p.shape == (km.PARAM_COUNT,)
    assert losses[-1] <= losses[0]


def test_tiled_fit_apply_and_cmkn_round_trip(tmp_path):
    pair = km.make_pair(
        (CONFIG_DIR / "scene.json").read_text().replace('"height": 128', '"height": 64')
        .replace('"width": 128', '"width": 64'),
        (CONFIG_DIR / "isp_gamma22.json").read_text(),
        (CONFIG_DIR / "isp_vignette.json").read_text(),
    )
    src, tgt = pair["src"], pair["tgt"]
    assert src.shape == tgt.shape and src.shape[2] == 3
    m = km.fit_tiled(src, tgt, tiles=(2, 2))
    assert m.shape == (2, 2)
    assert m.tiles.shape == (2, 2, km.PARAM_COUNT)
    out = m.apply(src)
    assert out.shape == src.shape
    assert km.psnr(out, tgt) > km.psnr(src, tgt)

    path = tmp_path / "map.cmkn"
    m.save(path)
    back = km.ParamMap.load(path)
    # CMKN stores float32.
    np.testing.assert_array_equal(back.tiles, m.tiles.astype(np.float32).astype(np.float64))

    tuned, losses = km.finetune_paired(m, src, tgt, iters=3)
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    assert tuned.shape == m.shape


def test_baselines_and_metrics():
    rng = np.random.default_rng(3)
    src = random_colors(rng, 500)
    tgt = np.clip(src @ np.array([[0.9, 0.05, 0.0], [0.05, 0.9, 0.05], [0.0, 0.05, 0.95]]), 0, 1)
    for method, count in [("linear", 9), ("poly", None), ("rootpoly", None), ("gammamat", 15)]:
        b = km.fit_baseline(method, src, tgt)
        assert b.method == method
        if count is not None:
            assert b.parameter_count == count
        json.loads(b.to_json())
        assert km.Baseline.from_json(b.to_json()).method == method
    lin = km.fit_baseline("linear", src, tgt)
    img = src.reshape(25, 20, 3)
    np.testing.assert_allclose(lin.apply(img), tgt.reshape(25, 20, 3), atol=1e-9)

    rep = km.evaluate_metrics(img, img)
    assert rep["ssim"] == pytest.approx(1.0)
    assert rep["delta_e_mean"] == 0.0
    assert km.ssim(img, img) == pytest.approx(1.0)


def test_png_round_trip(tmp_path):
    img = np.random.default_rng(4).uniform(0.0, 1.0, size=(5, 7, 3))
    path = tmp_path / "x.png"
    km.write_png(path, img)
    np.testing.assert_allclose(km.read_png(path), img, atol=0.5 / 65535 + 1e-15)


def test_generator_produces_finite_map(tmp_path):
    w = km.GeneratorWeights.init(7)
    img = np.random.default_rng(5).uniform(0.0, 1.0, size=(16, 16, 3))
    m = km.generator_forward(img, w)
    assert m.shape == (16, 16)
    assert np.isfinite(m.tiles).all()
    path = tmp_path / "w.kmgw"
    w.save(path)
    assert km.GeneratorWeights.load(path).names == w.names


def test_errors_map_to_python_exceptions():
    with pytest.raises(km.ContractError):
        km.kan_eval(np.zeros(3), np.zeros((1, 3)))
    with pytest.raises(km.Error):
        km.fit_baseline("nope", np.zeros((4, 3)), np.zeros((4, 3)))
    with pytest.raises(km.IoError):
        km.read_png("/nonexistent/file.png")
    assert issubclass(km.FormatError, km.Error)
    assert issubclass(km.Error, RuntimeError)


def test_configs_match_schemas(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    schemas = CONFIG_DIR.parent / "docs" / "schemas"
    isp = json.loads((schemas / "isp_config.schema.json").read_text())
    scene = json.loads((schemas / "scene_spec.schema.json").read_text())
    report = json.loads((schemas / "metrics_report.schema.json").read_text())
    jsonschema.validate(json.loads((CONFIG_DIR / "scene.json").read_text()), scene)
    for path in CONFIG_DIR.glob("isp_*.json"):
        jsonschema.validate(json.loads(path.read_text()), isp)
    img = np.full((16, 16, 3), 0.5)
    jsonschema.validate(km.evaluate_metrics(img, img * 0.9), report)
