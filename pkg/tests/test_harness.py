"""Configuration, persistence, determinism, and CLI contracts."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from vdns.checkpoint import read_checkpoint, write_checkpoint
from vdns.cli import main as cli_main
from vdns.config import (
    RunConfig,
    example_config_dict,
    shipped_config,
    shipped_config_names,
)
from vdns.diagnostics import DiagnosticsConfig
from vdns.errors import CheckpointFormatError, ConfigError
from vdns.fields import ScalarField, TorusGrid, VectorField
from vdns.harness import diag_record, load_rows, rows_to_records, run, sweep
from vdns.momentum import SimState


def small_config(tmp_path, **time_overrides):
    raw = example_config_dict()
    raw["grid"]["n"] = 16
    raw["time"].update(
        {"t_end": 0.02, "max_dt": 2e-3, "snapshot_every": 2, "checkpoint_every": 4}
    )
    raw["time"].update(time_overrides)
    raw["output_dir"] = str(tmp_path / "run")
    return RunConfig.from_dict(raw)


class TestConfig:
    def test_example_is_valid(self):
        RunConfig.from_dict(example_config_dict())

    def test_shipped_suite_loads(self):
        names = shipped_config_names()
        assert len(names) >= 10
        for name in names:
            shipped_config(name)

    def test_unknown_shipped_name(self):
        with pytest.raises(ConfigError):
            shipped_config("does-not-exist")

    def test_roundtrip_through_dict(self):
        cfg = shipped_config("vacuum-bubble-muscl")
        again = RunConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_validation_errors(self):
        raw = example_config_dict()
        raw["grid"]["n"] = 15
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)
        raw = example_config_dict()
        raw["time"]["checkpoint_every"] = 7  # not a multiple of snapshot 5
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)
        raw = example_config_dict()
        raw["physics"]["mu"] = -0.1
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)
        raw = example_config_dict()
        raw["init"]["density"] = {"kind": "two-phase", "levels": [0.2, 0.5]}
        with pytest.raises(ConfigError):
            RunConfig.from_dict(raw)

    def test_overrides(self, tmp_path):
        cfg = small_config(tmp_path)
        out = cfg.with_overrides(["time.max_dt=0.001", "physics.mu=0.2"])
        assert out.max_dt == 0.001
        assert out.mu == 0.2
        with pytest.raises(ConfigError):
            cfg.with_overrides(["nonsense.path=1"])
        with pytest.raises(ConfigError):
            cfg.with_overrides(["time.max_dt"])


class TestCheckpoint:
    def test_roundtrip_bit_exact(self, tmp_path, grid16, rng):
        rho = ScalarField(grid16, rng.uniform(0.1, 1.0, grid16.shape))
        u = VectorField(grid16, rng.standard_normal((3,) + grid16.shape))
        p = ScalarField(grid16, rng.standard_normal(grid16.shape))
        state = SimState(t=0.7, rho=rho, u=u, p=p, diss_l2=1.25, diss_l4=0.5)
        path = tmp_path / "state.bin"
        write_checkpoint(path, state, mu=0.1, step=42, run_state={"sup_grad": 2.0})
        loaded, header = read_checkpoint(path)
        assert header["step"] == 42
        assert header["run_state"]["sup_grad"] == 2.0
        assert loaded.t == state.t
        assert loaded.diss_l2 == state.diss_l2
        for a, b in (
            (loaded.rho.values, rho.values),
            (loaded.u.values, u.values),
            (loaded.p.values, p.values),
        ):
            assert np.array_equal(a, b)

    def test_truncated_payload_detected(self, tmp_path, grid16):
        state = SimState.initial(
            ScalarField.full(grid16, 1.0), VectorField.zeros(grid16)
        )
        path = tmp_path / "state.bin"
        write_checkpoint(path, state, mu=0.1, step=0)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(CheckpointFormatError):
            read_checkpoint(path)

    def test_corrupt_offset_named(self, tmp_path, grid16):
        state = SimState.initial(
            ScalarField.full(grid16, 1.0), VectorField.zeros(grid16)
        )
        path = tmp_path / "state.bin"
        write_checkpoint(path, state, mu=0.1, step=0)
        header_line, _, payload = path.read_bytes().partition(b"\n")
        header = json.loads(header_line)
        header["fields"][2]["offset"] += 5
        path.write_bytes(json.dumps(header).encode() + b"\n" + payload)
        with pytest.raises(CheckpointFormatError, match="u_y"):
            read_checkpoint(path)


class TestRun:
    def test_zero_velocity_all_zero_rows(self, tmp_path):
        cfg = shipped_config("zero-velocity").with_output_dir(str(tmp_path / "z"))
        result = run(cfg)
        rows = load_rows(result.csv_path)
        for row in rows:
            for key in ("energy", "grad_u_l2", "u_h_half", "a_t", "gn_ratio"):
                assert row[key] == 0.0
        assert result.summary["completed"]
        assert all(v == 0 for v in result.summary["violations"].values())

    def test_artifacts_exist(self, tmp_path):
        cfg = small_config(tmp_path)
        result = run(cfg)
        assert (result.outdir / "diagnostics.csv").exists()
        assert (result.outdir / "summary.json").exists()
        assert (result.outdir / "ckpt_0.bin").exists()
        summary = json.loads((result.outdir / "summary.json").read_text())
        assert summary["steps"] == 10
        assert summary["violations"] == {
            "max_principle": 0,
            "mass": 0,
            "div": 0,
            "a_monotone": 0,
            "diss_monotone": 0,
            "interp": 0,
        }

    def test_determinism_byte_identical(self, tmp_path):
        a = run(small_config(tmp_path / "a"))
        b = run(small_config(tmp_path / "b"))
        assert a.csv_path.read_bytes() == b.csv_path.read_bytes()

    def test_resume_reproduces_rows(self, tmp_path):
        full = run(small_config(tmp_path / "full"))
        resumed = run(
            small_config(tmp_path / "resumed"),
            resume=full.outdir / "ckpt_4.bin",
        )
        full_rows = full.csv_path.read_text().splitlines()
        res_rows = resumed.csv_path.read_text().splitlines()
        overlap = [r for r in full_rows[2:] if int(r.split(",")[0]) >= 4]
        assert res_rows[2:] == overlap

    def test_resume_grid_mismatch_rejected(self, tmp_path):
        full = run(small_config(tmp_path / "full"))
        other = small_config(tmp_path / "other")
        raw = other.to_dict()
        raw["grid"]["n"] = 32
        raw["output_dir"] = str(tmp_path / "other")
        with pytest.raises(ConfigError):
            run(RunConfig.from_dict(raw), resume=full.outdir / "ckpt_4.bin")

    def test_diag_matches_in_run_rows(self, tmp_path):
        cfg = small_config(tmp_path)
        result = run(cfg)
        rows = {int(r["step"]): r for r in load_rows(result.csv_path)}
        recomputed = diag_record(result.outdir / "ckpt_8.bin", cfg.diagnostics)
        row = rows[8]
        for key in ("t", "energy", "grad_u_l2", "a_t", "diss_int", "mass"):
            assert recomputed[key] == pytest.approx(row[key], rel=1e-12, abs=1e-300)
        assert recomputed["kim"]["4:6"] == pytest.approx(
            row["kim_p4_q6"], rel=1e-12, abs=1e-300
        )

    def test_accumulator_vs_checkpoint_quadrature(self, tmp_path):
        # left-Riemann over every-step checkpoints reproduces the in-run
        # quartic accumulator
        cfg = small_config(tmp_path, snapshot_every=1, checkpoint_every=1)
        result = run(cfg)
        rows = load_rows(result.csv_path)
        acc = 0.0
        for left, right in zip(rows, rows[1:]):
            acc += left["grad_u_l2"] ** 4 * (right["t"] - left["t"])
        assert acc == pytest.approx(rows[-1]["a_t"] ** 4, rel=1e-12)

    def test_a_accumulator_refinement(self, tmp_path):
        # recomputing the quartic time integral from 10x coarser sampling
        # agrees to 1e-3 (smooth, slowly decaying integrand)
        cfg = small_config(
            tmp_path, t_end=0.1, max_dt=1e-3, snapshot_every=1, checkpoint_every=0
        ).with_overrides(["physics.mu=0.02"])
        result = run(cfg)
        rows = load_rows(result.csv_path)
        fine = rows[-1]["a_t"] ** 4
        coarse_rows = rows[::10]
        if coarse_rows[-1]["t"] < rows[-1]["t"]:
            coarse_rows.append(rows[-1])
        coarse = sum(
            left["grad_u_l2"] ** 4 * (right["t"] - left["t"])
            for left, right in zip(coarse_rows, coarse_rows[1:])
        )
        assert abs(coarse - fine) / fine < 1e-3

    def test_rows_to_records_roundtrip(self, tmp_path):
        cfg = small_config(tmp_path)
        result = run(cfg)
        records = rows_to_records(load_rows(result.csv_path), cfg.diagnostics)
        assert len(records) == len(result.records)
        for a, b in zip(records, result.records):
            assert a.t == b.t
            assert a.energy == pytest.approx(b.energy, rel=1e-15)
            assert a.kim == pytest.approx(b.kim)


class TestSweep:
    def test_single_entry_matches_plain_run(self, tmp_path):
        base = shipped_config("epsilon-sweep-base")
        raw = base.to_dict()
        raw["grid"]["n"] = 16
        raw["time"].update({"t_end": 0.4, "max_dt": 0.01, "snapshot_every": 2})
        raw["output_dir"] = str(tmp_path / "sweep")
        cfg = RunConfig.from_dict(raw)
        with pytest.raises(Exception):
            sweep(cfg, [0.05])  # a slope needs two completed entries
        result, path = sweep(cfg, [0.025, 0.05])
        payload = json.loads(path.read_text())
        assert len(payload["entries"]) == 2
        assert all(e["completed"] for e in payload["entries"])
        direct = run(
            cfg.with_target_h12(0.05).with_output_dir(str(tmp_path / "direct"))
        )
        sub_rows = load_rows(tmp_path / "sweep" / "eps_0.05" / "diagnostics.csv")
        direct_rows = load_rows(direct.csv_path)
        assert sub_rows == direct_rows

    def test_failure_injection_recorded(self, tmp_path):
        base = shipped_config("zero-velocity")
        # zero velocity cannot be rescaled to a positive size: first entry
        # fails, the sweep continues and records the error
        raw = base.to_dict()
        raw["output_dir"] = str(tmp_path / "sweep")
        raw["time"]["snapshot_every"] = 1
        cfg = RunConfig.from_dict(raw)
        with pytest.raises(Exception):
            # every entry fails, so no slope can be fitted
            sweep(cfg, [0.01, 0.02])
        # mixed case via a synthetic runner is covered in test_diagnostics


class TestCli:
    def test_init_spec_emits_valid_config(self, tmp_path, capsys):
        assert cli_main(["init-spec"]) == 0
        out = capsys.readouterr().out
        RunConfig.from_dict(json.loads(out))

    def test_run_and_diag_subcommands(self, tmp_path):
        cfg_path = tmp_path / "cfg.json"
        raw = example_config_dict()
        raw["grid"]["n"] = 16
        raw["time"].update(
            {"t_end": 0.01, "max_dt": 2e-3, "snapshot_every": 1, "checkpoint_every": 5}
        )
        raw["output_dir"] = str(tmp_path / "out")
        cfg_path.write_text(json.dumps(raw))
        assert cli_main(["run", "--config", str(cfg_path)]) == 0
        assert cli_main(["diag", str(tmp_path / "out" / "ckpt_5.bin")]) == 0

    def test_exit_codes_via_subprocess(self, tmp_path):
        missing = subprocess.run(
            [sys.executable, "-m", "vdns.cli", "run", "--config", "/no/such.json"],
            capture_output=True,
        )
        assert missing.returncode == 2

        bad = tmp_path / "bad.json"
        raw = example_config_dict()
        raw["grid"]["n"] = 9  # odd sizes are rejected
        bad.write_text(json.dumps(raw))
        invalid = subprocess.run(
            [sys.executable, "-m", "vdns.cli", "run", "--config", str(bad)],
            capture_output=True,
        )
        assert invalid.returncode == 2

    def test_solver_failure_exit_code_and_checkpoint_kept(self, tmp_path):
        # an impossible solver tolerance forces a convergence failure
        cfg_path = tmp_path / "cfg.json"
        raw = shipped_config("vacuum-bubble-muscl").to_dict()
        raw["grid"]["n"] = 16
        raw["time"].update(
            {"t_end": 0.05, "max_dt": 5e-3, "snapshot_every": 1, "checkpoint_every": 1}
        )
        raw["scheme"]["solver_tol"] = 1e-30
        raw["output_dir"] = str(tmp_path / "out")
        cfg_path.write_text(json.dumps(raw))
        proc = subprocess.run(
            [sys.executable, "-m", "vdns.cli", "run", "--config", str(cfg_path)],
            capture_output=True,
        )
        assert proc.returncode == 3
        outdir = tmp_path / "out"
        assert (outdir / "ckpt_0.bin").exists()  # last good checkpoint retained
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["completed"] is False
        assert summary["error"]
