"""Bit-exact checkpoint persistence.

Layout: one JSON header line (UTF-8, newline terminated) followed by a
raw payload of little-endian 64-bit floats, fields concatenated in
header order with explicit offsets (in float counts).  Reading back a
written checkpoint reproduces every field bit for bit.
"""

import json

import numpy as np

from .errors import CheckpointFormatError
from .fields import ScalarField, TorusGrid, VectorField
from .momentum import SimState

__all__ = ["write_checkpoint", "read_checkpoint"]

_SCHEMA = 1
_FIELD_NAMES = ("rho", "u_x", "u_y", "u_z", "p")


def write_checkpoint(path, state, mu, step, run_state=None):
    """Persist a SimState plus run-level accumulators."""
    grid = state.rho.grid
    count = grid.n**3
    fields = [
        {"name": name, "offset": i * count, "count": count}
        for i, name in enumerate(_FIELD_NAMES)
    ]
    header = {
        "schema": _SCHEMA,
        "n": grid.n,
        "length": grid.length,
        "t": state.t,
        "mu": mu,
        "step": int(step),
        "diss_l2": state.diss_l2,
        "diss_l4": state.diss_l4,
        "run_state": run_state or {},
        "fields": fields,
        "payload_bytes": 8 * count * len(_FIELD_NAMES),
    }
    payload = np.concatenate(
        [
            state.rho.values.ravel(),
            state.u.values[0].ravel(),
            state.u.values[1].ravel(),
            state.u.values[2].ravel(),
            state.p.values.ravel(),
        ]
    ).astype("<f8", copy=False)
    with open(path, "wb") as handle:
        handle.write(json.dumps(header).encode("utf-8"))
        handle.write(b"\n")
        handle.write(payload.tobytes())


def read_checkpoint(path):
    """Load (state, header) from disk, validating the declared layout.

    Structural inconsistencies raise CheckpointFormatError naming the
    first offending offset.
    """
    with open(path, "rb") as handle:
        header_line = handle.readline()
        blob = handle.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"unreadable checkpoint header: {exc}") from exc

    if header.get("schema") != _SCHEMA:
        raise CheckpointFormatError(f"unsupported schema {header.get('schema')!r}")
    declared = header.get("payload_bytes")
    if declared != len(blob):
        raise CheckpointFormatError(
            f"payload length {len(blob)} does not match declared {declared}"
        )
    n = int(header["n"])
    count = n**3
    expected_names = list(_FIELD_NAMES)
    fields = header.get("fields", [])
    if [f.get("name") for f in fields] != expected_names:
        raise CheckpointFormatError(f"unexpected field list {fields!r}")
    for i, f in enumerate(fields):
        want = i * count
        if f.get("offset") != want or f.get("count") != count:
            raise CheckpointFormatError(
                f"field {f.get('name')!r} inconsistent at offset {f.get('offset')} "
                f"(expected {want} with count {count})"
            )
    if declared != 8 * count * len(fields):
        raise CheckpointFormatError(
            f"declared payload {declared} disagrees with field layout "
            f"({8 * count * len(fields)} bytes)"
        )

    data = np.frombuffer(blob, dtype="<f8")
    grid = TorusGrid(n, float(header["length"]))
    shape = grid.shape

    def take(i):
        return data[i * count : (i + 1) * count].reshape(shape).copy()

    rho = ScalarField(grid, take(0))
    u = VectorField(grid, np.stack([take(1), take(2), take(3)]))
    p = ScalarField(grid, take(4))
    state = SimState(
        t=float(header["t"]),
        rho=rho,
        u=u,
        p=p,
        diss_l2=float(header["diss_l2"]),
        diss_l4=float(header["diss_l4"]),
    )
    return state, header
