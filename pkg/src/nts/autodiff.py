"""Loss gradients for the full pipeline and the finite-difference verification harness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import texfield
from .render import RenderOptions, backward_view, discrete_signature, render_view


class NonFiniteLossError(FloatingPointError):
    def __init__(self, view_index: int, value: float):
        super().__init__(f"non-finite loss {value} at view {view_index}")
        self.view_index = view_index


def photometric_loss_and_grad(rendered: np.ndarray, target: np.ndarray, config):
    from .metrics import ssim_and_grad

    if rendered.shape != target.shape:
        raise ValueError(f"image shapes differ: {rendered.shape} vs {target.shape}")
    diff = rendered - target
    n = diff.size
    if config.photometric == "mse":
        loss = float(np.mean(diff * diff))
        grad = 2.0 * diff / n
    else:
        loss = float(np.mean(np.abs(diff)))
        grad = np.sign(diff) / n
    if config.lambda_dssim:
        s, gs = ssim_and_grad(rendered, target)
        loss += config.lambda_dssim * (1.0 - s) / 2.0
        grad = grad - 0.5 * config.lambda_dssim * gs
    return loss, grad


def _view_loss(scene, view, config, options, index):
    """Forward for one view. Returns (loss, terms, prep, caches, g_image, sparsity partials, sig)."""
    cam = view.camera
    color, _, prep, caches = render_view(scene, cam, view.time, options)
    img = color.reshape(cam.height, cam.width, 3)
    photo, g_img = photometric_loss_and_grad(img, view.image, config)
    sparsity = 0.0
    extra = None
    if prep.textured:
        N = scene.n
        per = texfield.factors_l1(prep.fc) + texfield.factors_l1(prep.fa)
        sparsity = float(np.mean(per))
        g = np.full(N, config.sparsity_weight / N)
        extra = {"fc": texfield.factors_l1_backward(prep.fc, g),
                 "fa": texfield.factors_l1_backward(prep.fa, g)}
    loss = photo + config.sparsity_weight * sparsity
    if not np.isfinite(loss):
        raise NonFiniteLossError(index, loss)
    return loss, (photo, sparsity), prep, caches, g_img, extra, img


def loss_and_gradients(scene, views, config, options: RenderOptions | None = None,
                       return_terms: bool = False):
    """Total loss summed over ``views`` and its exact gradient for every parameter."""
    options = options or RenderOptions(threads=config.threads)
    total = 0.0
    photo_sum = sparsity_sum = 0.0
    grads = None
    for i, view in enumerate(views):
        loss, (photo, sp), prep, caches, g_img, extra, _ = _view_loss(scene, view, config, options, i)
        g = backward_view(scene, prep, caches, g_img.reshape(-1, 3), options.threads, extra)
        total += loss
        photo_sum += photo
        sparsity_sum += sp
        if grads is None:
            grads = g
        else:
            for k in grads:
                grads[k] += g[k]
    if return_terms:
        return total, grads, {"photometric": photo_sum, "sparsity": sparsity_sum}
    return total, grads


def loss_and_signature(scene, views, config, options: RenderOptions | None = None):
    """Loss plus the branch signature of every view (used to spot non-smooth neighborhoods)."""
    options = options or RenderOptions()
    total = 0.0
    sigs = {}
    for i, view in enumerate(views):
        loss, _, prep, caches, _, _, img = _view_loss(scene, view, config, options, i)
        total += loss
        for k, v in discrete_signature(prep, caches).items():
            sigs[f"v{i}.{k}"] = v
        sigs[f"v{i}.sign:residual"] = np.sign(img - view.image)
        if prep.textured:
            sigs[f"v{i}.sign:fc"] = np.sign(prep.fc)
            sigs[f"v{i}.sign:fa"] = np.sign(prep.fa)
    return total, sigs


def _same_branch(s_lo, s_mid, s_hi) -> bool:
    for k, mid in s_mid.items():
        lo, hi = s_lo[k], s_hi[k]
        if lo.shape != mid.shape or hi.shape != mid.shape:
            return False
        if ".sign:" in k:
            # |v| has a symmetric kink at 0 where central differences agree with the
            # zero subgradient; only sign flips of nonzero entries break smoothness
            nz = mid != 0
            if not (np.array_equal(lo[nz], mid[nz]) and np.array_equal(hi[nz], mid[nz])):
                return False
        elif not (np.array_equal(lo, mid) and np.array_equal(hi, mid)):
            return False
    return True


@dataclass
class GradcheckRecord:
    name: str
    samples: int = 0
    max_rel_err: float = 0.0
    excluded_count: int = 0
    failures: int = 0


@dataclass
class GradcheckReport:
    records: dict = field(default_factory=dict)
    tol: float = 1e-4
    h: float = 1e-5
    details: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.failures == 0 for r in self.records.values())

    @property
    def max_rel_err(self) -> float:
        return max((r.max_rel_err for r in self.records.values()), default=0.0)

    @property
    def n_checked(self) -> int:
        return sum(r.samples for r in self.records.values())

    @property
    def n_excluded(self) -> int:
        return sum(r.excluded_count for r in self.records.values())

    def table(self) -> str:
        lines = [f"{'parameter':<22} {'samples':>8} {'max_rel_err':>12} {'excluded':>9}  status",
                 "-" * 62]
        for r in self.records.values():
            status = "ok" if r.failures == 0 else f"FAIL({r.failures})"
            lines.append(f"{r.name:<22} {r.samples:>8} {r.max_rel_err:>12.3e} "
                         f"{r.excluded_count:>9}  {status}")
        lines.append("-" * 62)
        lines.append(f"tol={self.tol:g} h={self.h:g} checked={self.n_checked} "
                     f"excluded={self.n_excluded} -> {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)

    def to_json(self) -> str:
        return json.dumps({"tol": self.tol, "h": self.h, "passed": self.passed,
                           "classes": [vars(r) for r in self.records.values()]}, indent=2)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def sample_coordinates(grads: dict, n_samples: int, rng: np.random.Generator) -> list:
    """Spread samples evenly over parameter arrays; half drawn where the gradient is nonzero."""
    keys = [k for k in sorted(grads) if grads[k].size]
    per = max(1, -(-n_samples // len(keys)))
    coords = []
    for k in keys:
        flat = grads[k].ravel()
        nz = np.flatnonzero(flat)
        n_nz = min(len(nz), per // 2 + per % 2) if len(nz) else 0
        picks = list(rng.choice(nz, n_nz, replace=False)) if n_nz else []
        picks += list(rng.integers(0, flat.size, per - n_nz))
        coords += [(k, int(i)) for i in picks]
    return coords


def finite_difference_check(scene, views, config, coordinates=None, h: float = 1e-5,
                            tol: float = 1e-4, n_samples: int = 200, seed: int = 0,
                            options: RenderOptions | None = None) -> GradcheckReport:
    """Compare analytic gradients with central differences on sampled coordinates.

    Coordinates whose +-h perturbation changes any branch decision (sort order, clamp,
    cull, texel cell, ReLU pattern, ...) are excluded and counted.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if not isinstance(views, (list, tuple)):
        views = [views]
    options = options or RenderOptions()
    _, grads = loss_and_gradients(scene, views, config, options)
    _, sig0 = loss_and_signature(scene, views, config, options)
    if coordinates is None:
        coordinates = sample_coordinates(grads, n_samples, np.random.default_rng(seed))
    report = GradcheckReport(tol=tol, h=h)
    for key, idx in coordinates:
        rec = report.records.setdefault(key, GradcheckRecord(key))
        arr = scene.params[key].reshape(-1)
        orig = arr[idx]
        arr[idx] = orig + h
        lp, sp = loss_and_signature(scene, views, config, options)
        arr[idx] = orig - h
        lm, sm = loss_and_signature(scene, views, config, options)
        arr[idx] = orig
        if not _same_branch(sm, sig0, sp):
            rec.excluded_count += 1
            continue
        fd = (lp - lm) / (2 * h)
        an = float(grads[key].reshape(-1)[idx])
        err = relative_error(an, fd)
        rec.samples += 1
        rec.max_rel_err = max(rec.max_rel_err, err)
        if err > tol:
            rec.failures += 1
        report.details.append({"param": key, "index": idx, "analytic": an, "numeric": fd,
                               "rel_err": err})
    return report
