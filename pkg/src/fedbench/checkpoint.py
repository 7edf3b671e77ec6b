"""FBE1 binary checkpoint format.

Layout (little-endian): magic ``FBE1``, u32 layer count L, then L pairs
(u32 out_dim, u32 in_dim), u8 activation code (0=ReLU, 1=Tanh), then all
parameters as f64 in canonical order. Readers reject a wrong magic or any
length mismatch.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .nn_core import Activation, MlpArch, MlpModel, flatten, unflatten

MAGIC = b"FBE1"

_ACT_TO_CODE = {Activation.RELU: 0, Activation.TANH: 1}
_CODE_TO_ACT = {code: act for act, code in _ACT_TO_CODE.items()}


def save_vector(path: str | Path, arch: MlpArch, values: np.ndarray) -> None:
    """Write any parameter vector laid out for `arch` (weights, mu, sigma...)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (arch.param_count(),):
        raise CheckpointError(
            f"vector of length {values.shape} does not match arch with {arch.param_count()} params"
        )
    shapes = arch.layer_shapes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(shapes)))
        for out, inp in shapes:
            fh.write(struct.pack("<II", out, inp))
        fh.write(struct.pack("<B", _ACT_TO_CODE[arch.activation]))
        fh.write(values.astype("<f8").tobytes())


def load_vector(path: str | Path) -> tuple[MlpArch, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    pos = 4
    try:
        (layer_count,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shapes = []
        for _ in range(layer_count):
            out, inp = struct.unpack_from("<II", raw, pos)
            pos += 8
            shapes.append((out, inp))
        (act_code,) = struct.unpack_from("<B", raw, pos)
        pos += 1
    except struct.error as exc:
        raise CheckpointError("truncated header") from exc
    if act_code not in _CODE_TO_ACT:
        raise CheckpointError(f"unknown activation code {act_code}")
    if not shapes:
        raise CheckpointError("checkpoint declares zero layers")
    sizes = [shapes[0][1]] + [out for out, _ in shapes]
    for i in range(1, len(shapes)):
        if shapes[i][1] != shapes[i - 1][0]:
            raise CheckpointError(f"inconsistent layer chain at layer {i}: {shapes}")
    arch = MlpArch(tuple(sizes), _CODE_TO_ACT[act_code])
    expected_bytes = arch.param_count() * 8
    body = raw[pos:]
    if len(body) != expected_bytes:
        raise CheckpointError(
            f"expected {expected_bytes} parameter bytes, found {len(body)}"
        )
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return arch, values


def save_model(path: str | Path, model: MlpModel) -> None:
    save_vector(path, model.arch, flatten(model))


def load_model(path: str | Path) -> MlpModel:
    arch, values = load_vector(path)
    return unflatten(values, arch)
