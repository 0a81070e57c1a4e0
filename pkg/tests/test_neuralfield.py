import math

import numpy as np
import pytest

from nts import neuralfield as nf
from nts.neuralfield import FieldConfig

SMALL = FieldConfig(plane_res=6, channels=2, hidden=16)
BOUNDS = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])


def _field(config=SMALL, tau=4, dynamic=False, seed=0, random_head=True):
    rng = np.random.default_rng(seed)
    fld = nf.init_field(config, BOUNDS, tau, rng, dynamic)
    if random_head:
        for kind in ("color", "alpha"):
            for k in ("W2", "b2"):
                arr = fld.params[f"field.{kind}.{k}"]
                fld.params[f"field.{kind}.{k}"] = rng.normal(0, 0.1, arr.shape)
    return fld


def _bilinear(plane, x, y):
    """plane (H, W, C) at continuous pixel coords (x along W, y along H)."""
    H, W = plane.shape[:2]
    i, j = min(int(math.floor(y)), H - 2), min(int(math.floor(x)), W - 2)
    fy, fx = y - i, x - j
    return ((1 - fy) * ((1 - fx) * plane[i, j] + fx * plane[i, j + 1])
            + fy * ((1 - fx) * plane[i + 1, j] + fx * plane[i + 1, j + 1]))


def test_global_feature_matches_manual_bilinear():
    rng = np.random.default_rng(0)
    planes = rng.normal(size=(3, 5, 7, 2))
    for _ in range(50):
        c = rng.uniform(-1, 1, 3)
        n = (c - BOUNDS[0]) / (BOUNDS[1] - BOUNDS[0]) * 2 - 1
        expect = []
        for p, (a, b) in enumerate(((0, 1), (0, 2), (1, 2))):
            expect.append(_bilinear(planes[p], (n[a] + 1) / 2 * 6, (n[b] + 1) / 2 * 4))
        np.testing.assert_allclose(nf.global_feature(c, planes, BOUNDS), np.concatenate(expect),
                                   atol=1e-13)


def test_global_feature_at_corner_reads_corner_texel():
    planes = np.arange(3 * 4 * 4 * 1, dtype=float).reshape(3, 4, 4, 1)
    feat = nf.global_feature([-1.0, -1.0, -1.0], planes, BOUNDS)
    np.testing.assert_array_equal(feat, planes[:, 0, 0, 0])
    # centers outside the bounds are clamped onto the boundary
    np.testing.assert_array_equal(nf.global_feature([-5.0, -9.0, -1.0], planes, BOUNDS), feat)


def test_scene_bounds_margin():
    pts = np.array([[0.0, 0, 0], [1.0, 2.0, 4.0]])
    np.testing.assert_allclose(nf.scene_bounds(pts), [[-0.1, -0.2, -0.4], [1.1, 2.2, 4.4]])


def test_zero_init_decodes_exactly_zero():
    fld = _field(random_head=False)
    rng = np.random.default_rng(1)
    fc, fa, _ = nf.decode_batch(fld, rng.uniform(-1, 1, (8, 3)),
                                rng.normal(size=(8, 3)), None, None)
    assert np.all(fc[:, :, 1] == 0.0) and np.all(fa[:, :, 1] == 0.0)
    # v0 halves are live, so the gradient into v1 is not stuck at zero
    assert np.any(fc[:, :, 0] != 0.0)


def test_view_direction_never_reaches_alpha():
    fld = _field()
    c = np.array([0.1, -0.2, 0.3])
    t1 = nf.decode_texture(fld, c, [0, 0, 1])
    t2 = nf.decode_texture(fld, c, [1, 0, 0])
    assert np.array_equal(t1.alpha, t2.alpha)
    assert not np.array_equal(t1.color, t2.color)


def test_view_dep_off_makes_color_view_independent():
    fld = _field(FieldConfig(plane_res=6, channels=2, hidden=16, view_dep=False))
    t1 = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1])
    t2 = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 1, 0])
    assert np.array_equal(t1.color, t2.color)


def test_static_field_ignores_time():
    fld = _field()
    a = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1], time=0.1)
    b = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1], time=0.9)
    assert np.array_equal(a.color, b.color) and np.array_equal(a.alpha, b.alpha)


def test_dynamic_field_depends_on_time_and_requires_it():
    fld = _field(dynamic=True)
    a = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1], time=0.1)
    b = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1], time=0.9)
    assert not np.array_equal(a.color, b.color)
    with pytest.raises(ValueError):
        nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1])


def test_non_unit_view_dir_is_normalized_with_warning():
    fld = _field()
    a = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 2.0])
    assert fld.warnings == 1
    b = nf.decode_texture(fld, [0.1, 0.2, 0.3], [0, 0, 1.0])
    np.testing.assert_array_equal(a.color, b.color)


def test_decode_plane2d_masks_other_planes():
    fld = _field()
    tex = nf.decode_texture(fld, [0, 0, 0], [0, 0, 1], mode="plane2d",
                            log_scale=np.log([0.01, 1.0, 1.0]))
    assert tex.plane == 2
    assert np.all(tex.color[:2] == 0) and np.any(tex.color[2] != 0)


def test_decode_tau_mismatch_rejected():
    with pytest.raises(ValueError):
        nf.decode_texture(_field(tau=4), [0, 0, 0], [0, 0, 1], tau=8)


def test_siren_alpha_decoder_uses_sine():
    fld = _field()
    X = np.random.default_rng(2).normal(size=(3, fld.alpha_in_dim()))
    out, _ = nf.mlp_forward(fld.params, "field.alpha", X, "sine", 30.0)
    p = fld.params
    h = np.sin(30.0 * (X @ p["field.alpha.W0"] + p["field.alpha.b0"]))
    h = np.sin(30.0 * (h @ p["field.alpha.W1"] + p["field.alpha.b1"]))
    np.testing.assert_allclose(out, h @ p["field.alpha.W2"] + p["field.alpha.b2"], atol=1e-12)


def test_positional_encoding_layout():
    x = np.array([[0.25, -0.5, 1.0]])
    enc, _ = nf.encode(x, 2)
    assert enc.shape == (1, 3 * 5)
    np.testing.assert_allclose(enc[0, :3], x[0])
    np.testing.assert_allclose(enc[0, 3:9].reshape(3, 2), np.sin(np.pi * x[0][:, None] * [1, 2]))
    np.testing.assert_allclose(enc[0, 9:].reshape(3, 2), np.cos(np.pi * x[0][:, None] * [1, 2]))
