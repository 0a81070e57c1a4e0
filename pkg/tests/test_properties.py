"""Property-based checks over randomly generated inputs."""

import numpy as np
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from nts import geom, metrics, texfield
from nts.config import dump_config, parse_value
from nts.render import SplatResponse, composite, composite_arrays
from nts.scene_io.checkpoint import from_bytes, to_bytes
from nts.scene_io.synthetic import random_scene

import oracles

unit = st.floats(0.0, 1.0, allow_nan=False)
coord = st.floats(-4.0, 4.0, allow_nan=False)
quat = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.1)

FAST = settings(max_examples=60, deadline=None)


@FAST
@given(st.lists(st.tuples(st.floats(0.01, 50), unit, unit, unit), max_size=12))
def test_composite_conserves_energy(items):
    # with a white background and white splats the result is exactly 1 everywhere
    items = sorted(items, key=lambda x: x[0])
    responses = [SplatResponse(t, np.ones(3), np.zeros(3), a, 0.0, index=i)
                 for i, (t, a, _, _) in enumerate(items)]
    rgb, T = composite(responses, np.ones(3))
    np.testing.assert_allclose(rgb, 1.0, atol=1e-12)
    assert 0.0 <= T <= 1.0


@FAST
@given(arrays(np.float64, (3, 7), elements=st.floats(0, 0.99)),
       arrays(np.float64, (3, 7, 3), elements=unit))
def test_composite_weights_bounded(a, c):
    color, T, cache = composite_arrays(a, c, np.zeros(3))
    w = cache["w"]
    assert (w >= 0).all()
    np.testing.assert_allclose(w.sum(axis=1) + T, 1.0, atol=1e-12)
    assert (color <= 1 + 1e-12).all()


@FAST
@given(arrays(np.float64, 6, elements=st.floats(0, 0.99)),
       arrays(np.float64, (6, 3), elements=unit))
def test_composite_matches_scalar_oracle(a, c):
    color, T, _ = composite_arrays(a[None], c[None], np.array([0.2, 0.3, 0.4]))
    ref_c, ref_t = oracles.composite(list(a), list(c), np.array([0.2, 0.3, 0.4]))
    np.testing.assert_allclose(color[0], ref_c, atol=1e-12)
    assert abs(T[0] - ref_t) < 1e-12


@FAST
@given(quat)
def test_rotation_is_orthonormal(q):
    R = geom.quat_to_rotmat(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


@FAST
@given(quat, arrays(np.float64, 3, elements=st.floats(-3, 1)),
       arrays(np.float64, 3, elements=coord))
def test_local_frame_matches_mahalanobis(q, log_s, x):
    prim = geom.GaussianPrimitive(np.zeros(3), q, log_s)
    loc = geom.world_to_local(x, prim)
    cov = oracles.covariance(q, log_s)
    np.testing.assert_allclose(loc @ loc, x @ np.linalg.solve(cov, x), rtol=1e-9, atol=1e-9)


@FAST
@given(st.integers(2, 9), st.integers(0, 2**31 - 1), st.floats(-2.0, 2.0))
def test_cp_query_bilinear_in_factors(tau, seed, k):
    rng = np.random.default_rng(seed)
    tex = texfield.LocalTexture(tau, rng.normal(size=(3, 2, tau, 3)), rng.normal(size=(3, 2, tau, 1)))
    x = rng.uniform(-3, 3, 3)
    c, a = texfield.triplane_texture_query(x, tex)
    ref_c, ref_a = oracles.texture_query(x, tex.materialize("color"), tex.materialize("alpha"),
                                         tex.plane_weights())
    np.testing.assert_allclose(c, ref_c, atol=1e-12)
    assert abs(a - ref_a) < 1e-12
    # scaling one factor of every plane scales the output linearly
    scaled = texfield.LocalTexture(tau, tex.color.copy(), tex.alpha.copy())
    scaled.color[:, 1] *= k
    np.testing.assert_allclose(texfield.triplane_texture_query(x, scaled)[0], k * c, atol=1e-12)


@FAST
@given(arrays(np.float64, 3, elements=st.floats(3.01, 10)), st.integers(2, 6))
def test_texture_zero_outside_box(x, tau):
    tex = texfield.LocalTexture(tau, np.ones((3, 2, tau, 3)), np.ones((3, 2, tau, 1)))
    c, a = texfield.triplane_texture_query(x, tex)
    assert not c.any() and a == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(4, 14), st.integers(4, 14), st.integers(0, 2**31 - 1))
def test_ssim_bounds_and_symmetry(h, w, seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(size=(h, w, 3)), rng.uniform(size=(h, w, 3))
    s = metrics.ssim(a, b)
    assert -1.0 <= s <= 1.0
    assert abs(s - metrics.ssim(b, a)) < 1e-13
    assert abs(s - oracles.ssim_direct(a, b)) < 1e-10


@FAST
@given(arrays(np.float64, (3, 4, 3), elements=unit), arrays(np.float64, (3, 4, 3), elements=unit))
def test_psnr_matches_direct(a, b):
    assert abs(metrics.psnr(a, b) - oracles.psnr_direct(a, b)) < 1e-10


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.booleans(), st.sampled_from(["triplane3d", "plane2d"]))
def test_checkpoint_round_trip(seed, neural, mode):
    scene, _ = random_scene(seed=seed, neural=neural, texture_mode=mode)
    blob = to_bytes(scene)
    back = from_bytes(blob)
    assert to_bytes(back) == blob
    assert back.texture_mode == mode and back.neural == neural


keys = st.text("abcdefghij_.", min_size=1, max_size=8).filter(lambda k: k != "include")
values = st.one_of(st.integers(-10**6, 10**6), st.floats(allow_nan=False, allow_infinity=False),
                   st.booleans(), st.none(),
                   st.text("abc xyz", min_size=0, max_size=6).map(lambda s: s.strip() or "x"))


@FAST
@given(st.dictionaries(keys, values, max_size=6))
def test_config_dump_parse_round_trip(vals):
    lines = dump_config(vals).splitlines()
    back = {k.strip(): parse_value(v.strip()) for k, v in (ln.split("=", 1) for ln in lines)}
    assert back == vals
