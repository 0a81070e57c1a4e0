"""Binary scene checkpoints.

Layout (little-endian)::

    b"NTSC" | u32 version | u64 header length | JSON header | array data

The header lists every array (name, dtype, shape, offset) plus the static scene
configuration and the optimizer bookkeeping. Arrays are raw ``<f8`` in header
order, so save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..neuralfield import FieldConfig
from ..optim import TrainState
from ..scene import SPLAT_KEYS, Scene

MAGIC = b"NTSC"
VERSION = 1
_PREFIX = struct.Struct("<4sIQ")


class CheckpointError(ValueError):
    pass


def _arrays(scene: Scene) -> list[tuple[str, np.ndarray]]:
    out = [(f"param.{k}", scene.params[k]) for k in sorted(scene.params)]
    out.append(("static.background", scene.background))
    if scene.bounds is not None:
        out.append(("static.bounds", scene.bounds))
    st = scene.train_state
    if st is not None:
        for k in sorted(st.m):
            out.append((f"adam.m.{k}", st.m[k]))
            out.append((f"adam.v.{k}", st.v[k]))
    return out


def to_bytes(scene: Scene) -> bytes:
    entries, blobs, offset = [], [], 0
    for name, arr in _arrays(scene):
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        entries.append({"name": name, "dtype": "<f8", "shape": list(np.shape(arr)),
                        "offset": offset, "nbytes": len(data)})
        blobs.append(data)
        offset += len(data)
    st = scene.train_state
    header = {
        "n": scene.n,
        "static": {"texture_mode": scene.texture_mode, "tau": scene.tau, "neural": scene.neural,
                   "sh_degree": scene.sh_degree, "dynamic": scene.dynamic,
                   "field_config": asdict(scene.field_config)},
        "arrays": entries,
        "train_state": None if st is None else {
            "iteration": st.iteration, "steps": st.steps, "rng_state": st.rng_state},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    return _PREFIX.pack(MAGIC, VERSION, len(hb)) + hb + b"".join(blobs)


def save_checkpoint(scene: Scene, path) -> None:
    Path(path).write_bytes(to_bytes(scene))


def from_bytes(raw: bytes) -> Scene:
    if len(raw) < _PREFIX.size:
        raise CheckpointError("truncated checkpoint: missing header")
    magic, version, hlen = _PREFIX.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = _PREFIX.size + hlen
    if len(raw) < start:
        raise CheckpointError("truncated checkpoint: header cut short")
    try:
        header = json.loads(raw[_PREFIX.size:start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt header: {e}") from e
    blob = raw[start:]
    expected = sum(e["nbytes"] for e in header["arrays"])
    if len(blob) != expected:
        raise CheckpointError(f"truncated checkpoint: {len(blob)} of {expected} data bytes")
    arrays = {}
    for e in header["arrays"]:
        n_items = int(np.prod(e["shape"])) if e["shape"] else 1
        if e["nbytes"] != 8 * n_items:
            raise CheckpointError(f"array {e['name']}: size does not match shape")
        arrays[e["name"]] = np.frombuffer(blob, "<f8", n_items, e["offset"]).reshape(
            e["shape"]).astype(np.float64)
    n = header["n"]
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param.")}
    for k in SPLAT_KEYS:
        if k not in params:
            raise CheckpointError(f"missing array {k}")
    for k, v in params.items():
        if (k in SPLAT_KEYS or k.startswith("tex_")) and v.shape[0] != n:
            raise CheckpointError(f"array {k} has {v.shape[0]} rows, header declares {n}")
    s = header["static"]
    scene = Scene(params, s["texture_mode"], s["tau"], s["neural"], s["sh_degree"], s["dynamic"],
                  arrays["static.background"], FieldConfig(**s["field_config"]),
                  arrays.get("static.bounds"))
    ts = header["train_state"]
    if ts is not None:
        st = TrainState(ts["iteration"], {}, {}, {k: int(v) for k, v in ts["steps"].items()},
                        ts["rng_state"])
        for k in ts["steps"]:
            st.m[k] = arrays[f"adam.m.{k}"]
            st.v[k] = arrays[f"adam.v.{k}"]
        scene.train_state = st
    return scene


def load_checkpoint(path) -> Scene:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint {p} not found")
    return from_bytes(p.read_bytes())
