"""Run loop, diagnostics emission, checkpointing, and sweep orchestration.

Determinism contract: identical configuration and seed produce a
byte-identical diagnostics.csv on one platform (single-threaded FFTs,
fixed reduction order, shortest-roundtrip float formatting), and a run
resumed from a checkpoint reproduces the remaining rows byte for byte.
"""

import csv
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import read_checkpoint, write_checkpoint
from .config import RunConfig
from .diagnostics import (
    DiagnosticsConfig,
    DiagnosticsRecord,
    decay_fit,
    epsilon_sweep,
    record,
)
from .errors import CflError, ConfigError, ParameterError, VdnsError
from .initdata import build_initial
from .momentum import SimState, momentum_step

__all__ = ["RunResult", "run", "sweep", "diag_record", "load_rows", "rows_to_records"]

log = logging.getLogger("vdns")

_VIOLATION_KEYS = (
    "max_principle",
    "mass",
    "div",
    "a_monotone",
    "diss_monotone",
    "interp",
)

# 1-based retry budget for CFL step rejections (each retry shrinks dt)
_MAX_STEP_RETRIES = 8


@dataclass
class RunResult:
    config: RunConfig
    records: list
    summary: dict
    outdir: Path
    csv_path: Path
    state: SimState


def _spectral_norms(grid, u):
    """(|grad u|_L2, |div u|_L2) from one forward transform."""
    uh = grid.rfft(u.values)
    w = grid.parseval_weight_r
    scale = grid.cell_volume / grid.n**3
    grad_sq = float(
        (w * grid.ksq_r * (uh.real**2 + uh.imag**2)).sum() * scale
    )
    kz, ky, kx = grid._deriv_half
    dh = kx * uh[0] + ky * uh[1] + kz * uh[2]
    div_sq = float((w * (dh.real**2 + dh.imag**2)).sum() * scale)
    return math.sqrt(max(grad_sq, 0.0)), math.sqrt(max(div_sq, 0.0))


def _csv_columns(dcfg):
    cols = [
        "step",
        "t",
        "dt",
        "energy",
        "grad_u_l2",
        "u_h_half",
        "a_t",
        "diss_int",
        "rho_min",
        "rho_max",
        "mass",
        "mom_x",
        "mom_y",
        "mom_z",
        "gn_ratio",
    ]
    cols += [f"lorentz_q{q:g}" for q in dcfg.lorentz_q]
    cols += [f"kim_p{p:g}_q{q:g}" for p, q in dcfg.kim_pairs]
    cols += ["t_grad2", "interp_ratio"]
    return cols


def _row_values(step, dt, rec, interp_ratio, dcfg):
    vals = [
        str(int(step)),
        repr(float(rec.t)),
        repr(float(dt)),
        repr(float(rec.energy)),
        repr(float(rec.grad_l2)),
        repr(float(rec.h_half)),
        repr(float(rec.a_t)),
        repr(float(rec.diss_int)),
        repr(float(rec.rho_min)),
        repr(float(rec.rho_max)),
        repr(float(rec.mass)),
        repr(float(rec.momentum[0])),
        repr(float(rec.momentum[1])),
        repr(float(rec.momentum[2])),
        repr(float(rec.gn)),
    ]
    vals += [repr(float(rec.lorentz[q])) for q in dcfg.lorentz_q]
    vals += [repr(float(rec.kim[pair])) for pair in dcfg.kim_pairs]
    vals += [repr(float(rec.t_grad2)), repr(float(interp_ratio))]
    return vals


def _interp_ratio(sup_grad, diss_l2, diss_l4):
    rhs = math.sqrt(sup_grad) * diss_l2**0.25
    if rhs == 0.0:
        return 1.0
    return diss_l4**0.25 / rhs


def _kim_key(pair):
    return f"{pair[0]:g}:{pair[1]:g}"


def run(config, resume=None):
    """Execute one run, producing diagnostics.csv, checkpoints, summary.json.

    ``resume`` names a checkpoint written by a compatible configuration;
    the run continues from it and its diagnostics rows reproduce the
    uninterrupted run byte for byte from the resume step onward.
    """
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    grid = config.grid()
    params = config.momentum_params()
    scheme = config.transport_scheme()
    dcfg = config.diagnostics

    if resume is None:
        rho0, u0 = build_initial(config.init, grid)
        state = SimState.initial(rho0, u0)
        step = 0
        last_dt = 0.0
        sup_grad = 0.0
        kim_acc = {pair: 0.0 for pair in dcfg.kim_pairs}
        mass0 = float(rho0.values.sum() * grid.cell_volume)
        rho_max0 = float(rho0.values.max())
        mom0 = [
            float(m)
            for m in (rho0.values * u0.values).sum(axis=(1, 2, 3)) * grid.cell_volume
        ]
        unorm = math.sqrt(float((u0.values**2).sum() * grid.cell_volume))
        mom_scale = config.rho_bar * unorm * math.sqrt(grid.volume)
    else:
        state, header = read_checkpoint(resume)
        if (header["n"], header["length"]) != (config.n, config.length):
            raise ConfigError("checkpoint grid does not match the configuration")
        if header["mu"] != config.mu:
            raise ConfigError("checkpoint viscosity does not match the configuration")
        rs = header["run_state"]
        step = int(header["step"])
        last_dt = float(rs["last_dt"])
        sup_grad = float(rs["sup_grad"])
        kim_acc = {pair: float(rs["kim"][_kim_key(pair)]) for pair in dcfg.kim_pairs}
        mass0 = float(rs["mass0"])
        rho_max0 = float(rs["rho_max0"])
        mom0 = [float(m) for m in rs["mom0"]]
        mom_scale = float(rs["mom_scale"])

    violations = dict.fromkeys(_VIOLATION_KEYS, 0)
    events = []
    records = []
    csv_path = outdir / "diagnostics.csv"
    wall_start = time.perf_counter()

    def run_state_dict():
        return {
            "last_dt": last_dt,
            "sup_grad": sup_grad,
            "kim": {_kim_key(pair): kim_acc[pair] for pair in dcfg.kim_pairs},
            "mass0": mass0,
            "rho_max0": rho_max0,
            "mom0": mom0,
            "mom_scale": mom_scale,
        }

    grad_now, div_now = _spectral_norms(grid, state.u)
    prev_record = None
    prev_a = state.diss_l4**0.25
    error = None

    with open(csv_path, "w", encoding="utf-8", newline="") as handle:
        handle.write("# vdns diagnostics schema 1\n")
        writer = csv.writer(handle)
        writer.writerow(_csv_columns(dcfg))

        def emit_row():
            nonlocal prev_record
            if prev_record is not None:
                for p, q in dcfg.kim_pairs:
                    kim_acc[(p, q)] += prev_record.lorentz[q] ** p * (
                        state.t - prev_record.t
                    )
            rec = record(state, dcfg, kim_acc)
            ratio = _interp_ratio(sup_grad, state.diss_l2, state.diss_l4)
            if ratio > 1.0 + 1e-12:
                violations["interp"] += 1
            writer.writerow(_row_values(step, last_dt, rec, ratio, dcfg))
            records.append(rec)
            prev_record = rec

        def checkpoint_now():
            write_checkpoint(
                outdir / f"ckpt_{step}.bin", state, config.mu, step, run_state_dict()
            )

        emit_row()
        if config.checkpoint_every:
            checkpoint_now()

        try:
            while state.t < config.t_end - 1e-12:
                speed = float(np.abs(state.u.values).sum(axis=0).max())
                dt = config.max_dt
                if speed > 0.0:
                    dt = min(dt, config.cfl * grid.dx / speed)
                dt = min(dt, config.t_end - state.t)
                new_state = None
                for _ in range(_MAX_STEP_RETRIES):
                    try:
                        new_state = momentum_step(state, dt, params, scheme)
                        break
                    except CflError as exc:
                        dt = 0.95 * exc.admissible_dt
                if new_state is None:
                    raise CflError("step rejected after retries", admissible_dt=dt)

                sup_grad = max(sup_grad, grad_now)
                last_dt = dt
                step += 1
                state = new_state
                grad_now, div_now = _spectral_norms(grid, state.u)

                # continuous invariant monitoring
                if (
                    state.rho.values.max() > rho_max0 + 1e-12
                    or state.rho.values.min() < -1e-12
                ):
                    violations["max_principle"] += 1
                mass = float(state.rho.values.sum() * grid.cell_volume)
                if abs(mass - mass0) > 1e-12 * abs(mass0):
                    violations["mass"] += 1
                if grad_now > 0.0 and div_now > 1e-10 * grad_now:
                    violations["div"] += 1
                a_now = state.diss_l4**0.25
                if a_now < prev_a - 1e-15:
                    violations["a_monotone"] += 1
                if state.diss_l2 < -1e-15:
                    violations["diss_monotone"] += 1
                if prev_a < dcfg.warn_threshold <= a_now:
                    events.append(
                        {"type": "a_threshold", "t": state.t, "value": a_now}
                    )
                    log.warning(
                        "running critical norm crossed %.3g at t=%.4f",
                        dcfg.warn_threshold,
                        state.t,
                    )
                prev_a = a_now

                done = state.t >= config.t_end - 1e-12
                if step % config.snapshot_every == 0 or done:
                    emit_row()
                if config.checkpoint_every and (
                    step % config.checkpoint_every == 0 or done
                ):
                    checkpoint_now()
        except VdnsError as exc:
            error = exc

    wall = time.perf_counter() - wall_start
    mom_final = (state.rho.values * state.u.values).sum(axis=(1, 2, 3)) * grid.cell_volume
    drift = float(np.max(np.abs(mom_final - np.asarray(mom0))))
    try:
        m_hat, expo_rate = decay_fit(records)
        if not math.isfinite(expo_rate):
            expo_rate = None
    except ParameterError:
        m_hat, expo_rate = None, None

    summary = {
        "completed": error is None,
        "error": None if error is None else str(error),
        "steps": step,
        "t_final": state.t,
        "sup_a": max(r.a_t for r in records),
        "m_hat": m_hat,
        "expo_rate": expo_rate,
        "violations": violations,
        "events": events,
        "momentum_drift": drift,
        "momentum_drift_rel": drift / mom_scale if mom_scale > 0.0 else 0.0,
        "final": {
            "t": records[-1].t,
            "energy": records[-1].energy,
            "grad_u_l2": records[-1].grad_l2,
            "a_t": records[-1].a_t,
            "kim": {_kim_key(k): v for k, v in records[-1].kim.items()},
        },
        "wall_seconds": wall,
        "steps_per_second": (step / wall) if wall > 0 else None,
    }
    with open(outdir / "summary.json", "w", encoding="utf-8") as handle:
        json.dump(summary, handle, indent=2)
        handle.write("\n")

    if error is not None:
        raise error
    return RunResult(config, records, summary, outdir, csv_path, state)


def sweep(config, eps_list):
    """Initial-size sweep; per-size artifacts under eps_<value> subdirs."""
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)

    def run_at(eps):
        sub = config.with_target_h12(eps).with_output_dir(
            str(outdir / f"eps_{eps:g}")
        )
        return run(sub).records

    result = epsilon_sweep(eps_list, run_at)
    payload = result.to_dict()
    payload["output_dirs"] = {
        f"{e.eps:g}": str(outdir / f"eps_{e.eps:g}") for e in result.entries
    }
    with open(outdir / "sweep.json", "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return result, outdir / "sweep.json"


def diag_record(checkpoint_path, dcfg=DiagnosticsConfig()):
    """Recompute a diagnostics row offline from a checkpoint."""
    state, header = read_checkpoint(checkpoint_path)
    rs = header.get("run_state", {})
    kim_raw = rs.get("kim", {})
    kim_acc = {pair: float(kim_raw.get(_kim_key(pair), 0.0)) for pair in dcfg.kim_pairs}
    rec = record(state, dcfg, kim_acc)
    sup_grad = float(rs.get("sup_grad", 0.0))
    return {
        "step": header["step"],
        "t": rec.t,
        "energy": rec.energy,
        "grad_u_l2": rec.grad_l2,
        "u_h_half": rec.h_half,
        "a_t": rec.a_t,
        "diss_int": rec.diss_int,
        "rho_min": rec.rho_min,
        "rho_max": rec.rho_max,
        "mass": rec.mass,
        "momentum": list(rec.momentum),
        "gn_ratio": rec.gn,
        "lorentz": {f"{q:g}": rec.lorentz[q] for q in dcfg.lorentz_q},
        "kim": {_kim_key(pair): rec.kim[pair] for pair in dcfg.kim_pairs},
        "t_grad2": rec.t_grad2,
        "interp_ratio": _interp_ratio(sup_grad, state.diss_l2, state.diss_l4),
    }


def load_rows(csv_path):
    """Read a diagnostics.csv back as a list of {column: float} dicts."""
    with open(csv_path, "r", encoding="utf-8", newline="") as handle:
        first = handle.readline()
        if not first.startswith("# vdns diagnostics"):
            raise ParameterError(f"{csv_path} is not a diagnostics file")
        reader = csv.DictReader(handle)
        rows = []
        for raw in reader:
            rows.append({k: float(v) for k, v in raw.items()})
        return rows


def rows_to_records(rows, dcfg=DiagnosticsConfig()):
    """Rebuild DiagnosticsRecord objects from CSV rows."""
    records = []
    for row in rows:
        records.append(
            DiagnosticsRecord(
                t=row["t"],
                energy=row["energy"],
                grad_l2=row["grad_u_l2"],
                h_half=row["u_h_half"],
                a_t=row["a_t"],
                diss_int=row["diss_int"],
                rho_min=row["rho_min"],
                rho_max=row["rho_max"],
                mass=row["mass"],
                momentum=(row["mom_x"], row["mom_y"], row["mom_z"]),
                gn=row["gn_ratio"],
                lorentz={q: row[f"lorentz_q{q:g}"] for q in dcfg.lorentz_q},
                kim={
                    (p, q): row[f"kim_p{p:g}_q{q:g}"] for p, q in dcfg.kim_pairs
                },
                t_grad2=row["t_grad2"],
            )
        )
    return records
