"""Run configuration: JSON schema, validation, dotted-path overrides."""

import copy
import json
from dataclasses import dataclass, field

from .diagnostics import DiagnosticsConfig
from .errors import ConfigError, InitSpecError, ParameterError
from .fields import TorusGrid
from .initdata import DensitySpec, InitSpec, VelocitySpec
from .momentum import MomentumParams
from .transport import TransportScheme

__all__ = [
    "RunConfig",
    "example_config_dict",
    "shipped_config",
    "shipped_config_names",
]

_ADVECTION_ALIASES = {
    "convective": "convective",
    "skew-symmetric": "skew-symmetric",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated, immutable description of one run."""

    n: int
    length: float
    mu: float
    rho_bar: float
    delta_floor: float
    init: InitSpec
    transport: str
    advection: str
    viscous: str
    time_order: int
    solver_tol: float
    t_end: float
    cfl: float
    max_dt: float
    snapshot_every: int
    checkpoint_every: int
    diagnostics: DiagnosticsConfig
    output_dir: str
    seed: int

    def grid(self):
        return TorusGrid(self.n, self.length)

    def momentum_params(self):
        return MomentumParams(
            mu=self.mu,
            delta_floor=self.delta_floor,
            advection=self.advection,
            viscous=self.viscous,
            time_order=self.time_order,
            solver_tol=self.solver_tol,
        )

    def transport_scheme(self):
        return TransportScheme(self.transport)

    # ---------------------------------------------------------------- JSON

    @classmethod
    def from_dict(cls, raw):
        try:
            return cls._from_dict(raw)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"invalid configuration: {exc}") from exc

    @classmethod
    def _from_dict(cls, raw):
        grid = raw["grid"]
        physics = raw["physics"]
        scheme = raw.get("scheme", {})
        time_cfg = raw["time"]
        diag = raw.get("diagnostics", {})
        init_raw = raw.get("init", {})
        seed = int(raw.get("seed", 0))

        rho_bar = float(physics.get("rho_bar", 1.0))
        density_raw = dict(init_raw.get("density", {"kind": "constant"}))
        density_raw.setdefault("rho_bar", rho_bar)
        kind = density_raw.pop("kind", "constant")
        dspec_kwargs = {}
        for key in ("rho_bar", "center", "radius", "width", "levels"):
            if key in density_raw:
                value = density_raw.pop(key)
                dspec_kwargs[key] = tuple(value) if isinstance(value, list) else value
        if density_raw:
            raise ConfigError(f"unknown density fields: {sorted(density_raw)}")

        velocity_raw = dict(init_raw.get("velocity", {"kind": "taylor-green"}))
        vkind = velocity_raw.pop("kind", "taylor-green")
        vspec_kwargs = {"seed": seed}
        for key in ("amplitude", "seed", "slope", "band"):
            if key in velocity_raw:
                value = velocity_raw.pop(key)
                vspec_kwargs[key] = tuple(value) if isinstance(value, list) else value
        if velocity_raw:
            raise ConfigError(f"unknown velocity fields: {sorted(velocity_raw)}")

        target = init_raw.get("target_h12", "unscaled")
        if target == "unscaled":
            target = None
        elif target is not None:
            target = float(target)

        try:
            init = InitSpec(
                density=DensitySpec(kind=kind, **dspec_kwargs),
                velocity=VelocitySpec(kind=vkind, **vspec_kwargs),
                target_h12=target,
                quiet_vacuum=bool(init_raw.get("quiet_vacuum", True)),
            )
        except InitSpecError as exc:
            raise ConfigError(str(exc)) from exc

        try:
            diagnostics = DiagnosticsConfig(
                lorentz_q=tuple(float(q) for q in diag.get("lorentz_q", (4.0, 6.0))),
                kim_pairs=tuple(
                    (float(p), float(q)) for p, q in diag.get("kim_pairs", ((4.0, 6.0),))
                ),
                warn_threshold=float(diag.get("warn_threshold", 2.0)),
                target_threshold=float(diag.get("target_threshold", 1.0)),
            )
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc

        cfg = cls(
            n=int(grid["n"]),
            length=float(grid["length"]),
            mu=float(physics["mu"]),
            rho_bar=rho_bar,
            delta_floor=float(physics.get("delta_floor", 1e-6)),
            init=init,
            transport=scheme.get("transport", "muscl2-minmod"),
            advection=scheme.get("advection", "skew-symmetric"),
            viscous=scheme.get("viscous", "implicit-spectral"),
            time_order=int(scheme.get("time_order", 1)),
            solver_tol=float(scheme.get("solver_tol", 1e-10)),
            t_end=float(time_cfg["t_end"]),
            cfl=float(time_cfg.get("cfl", 0.4)),
            max_dt=float(time_cfg["max_dt"]),
            snapshot_every=int(time_cfg.get("snapshot_every", 1)),
            checkpoint_every=int(time_cfg.get("checkpoint_every", 0)),
            diagnostics=diagnostics,
            output_dir=str(raw.get("output_dir", "out")),
            seed=seed,
        )
        cfg.validate()
        return cfg

    def validate(self):
        try:
            self.grid()
            self.momentum_params()
            self.transport_scheme()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.t_end > 0.0:
            raise ConfigError(f"t_end must be positive, got {self.t_end}")
        if not self.max_dt > 0.0:
            raise ConfigError(f"max_dt must be positive, got {self.max_dt}")
        if not 0.0 < self.cfl <= self.transport_scheme().cfl_limit:
            raise ConfigError(
                f"cfl {self.cfl} outside (0, {self.transport_scheme().cfl_limit}] "
                f"for {self.transport}"
            )
        if self.snapshot_every < 1:
            raise ConfigError("snapshot cadence must be at least one step")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint cadence must be non-negative")
        if self.checkpoint_every and self.checkpoint_every % self.snapshot_every:
            raise ConfigError(
                "checkpoint cadence must be a multiple of the snapshot cadence"
            )
        if not self.rho_bar > 0.0:
            raise ConfigError("rho_bar must be positive")
        ceiling = self.init.density.rho_bar
        if abs(ceiling - self.rho_bar) > 1e-12 * self.rho_bar:
            raise ConfigError(
                f"density profile ceiling {ceiling} disagrees with rho_bar {self.rho_bar}"
            )

    def to_dict(self):
        d = self.init.density
        v = self.init.velocity
        density = {"kind": d.kind, "rho_bar": d.rho_bar}
        if d.kind == "vacuum-bubble":
            density.update(center=list(d.center), radius=d.radius, width=d.width)
        if d.kind == "two-phase":
            density.update(levels=list(d.levels), width=d.width)
        velocity = {"kind": v.kind}
        if v.kind == "taylor-green":
            velocity["amplitude"] = v.amplitude
        else:
            velocity.update(seed=v.seed, slope=v.slope, band=list(v.band))
        return {
            "grid": {"n": self.n, "length": self.length},
            "physics": {
                "mu": self.mu,
                "rho_bar": self.rho_bar,
                "delta_floor": self.delta_floor,
            },
            "init": {
                "density": density,
                "velocity": velocity,
                "target_h12": (
                    "unscaled" if self.init.target_h12 is None else self.init.target_h12
                ),
                "quiet_vacuum": self.init.quiet_vacuum,
            },
            "scheme": {
                "transport": self.transport,
                "advection": self.advection,
                "viscous": self.viscous,
                "time_order": self.time_order,
                "solver_tol": self.solver_tol,
            },
            "time": {
                "t_end": self.t_end,
                "cfl": self.cfl,
                "max_dt": self.max_dt,
                "snapshot_every": self.snapshot_every,
                "checkpoint_every": self.checkpoint_every,
            },
            "diagnostics": {
                "lorentz_q": list(self.diagnostics.lorentz_q),
                "kim_pairs": [list(pair) for pair in self.diagnostics.kim_pairs],
                "warn_threshold": self.diagnostics.warn_threshold,
                "target_threshold": self.diagnostics.target_threshold,
            },
            "output_dir": self.output_dir,
            "seed": self.seed,
        }

    @classmethod
    def from_file(cls, path):
        try:
            with open(path, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(raw)

    def with_overrides(self, overrides):
        """Apply ``dotted.path=value`` overrides and revalidate."""
        raw = self.to_dict()
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            path, _, text = item.partition("=")
            try:
                value = json.loads(text)
            except json.JSONDecodeError:
                value = text
            node = raw
            keys = path.split(".")
            for key in keys[:-1]:
                if not isinstance(node, dict) or key not in node:
                    raise ConfigError(f"override path {path!r} not found")
                node = node[key]
            if not isinstance(node, dict) or keys[-1] not in node:
                raise ConfigError(f"override path {path!r} not found")
            node[keys[-1]] = value
        return RunConfig.from_dict(raw)

    def with_target_h12(self, eps):
        raw = self.to_dict()
        raw["init"]["target_h12"] = float(eps)
        return RunConfig.from_dict(raw)

    def with_output_dir(self, path):
        raw = self.to_dict()
        raw["output_dir"] = str(path)
        return RunConfig.from_dict(raw)


def _configs_dir():
    from importlib import resources

    return resources.files("vdns") / "configs"


def shipped_config_names():
    """Names of the configuration files bundled with the package."""
    names = []
    for entry in _configs_dir().iterdir():
        if entry.name.endswith(".json"):
            names.append(entry.name[: -len(".json")])
    return sorted(names)


def shipped_config(name):
    """Load one bundled configuration by name."""
    ref = _configs_dir() / f"{name}.json"
    try:
        raw = json.loads(ref.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(
            f"no shipped configuration named {name!r}; "
            f"available: {shipped_config_names()}"
        ) from exc
    return RunConfig.from_dict(raw)


def example_config_dict():
    """A validated example configuration (the Taylor-Green benchmark)."""
    raw = {
        "grid": {"n": 32, "length": 6.283185307179586},
        "physics": {"mu": 0.1, "rho_bar": 1.0, "delta_floor": 1e-6},
        "init": {
            "density": {"kind": "constant"},
            "velocity": {"kind": "taylor-green", "amplitude": 1.0},
            "target_h12": "unscaled",
            "quiet_vacuum": True,
        },
        "scheme": {
            "transport": "muscl2-minmod",
            "advection": "skew-symmetric",
            "viscous": "implicit-spectral",
            "time_order": 2,
            "solver_tol": 1e-10,
        },
        "time": {
            "t_end": 0.5,
            "cfl": 0.4,
            "max_dt": 1e-3,
            "snapshot_every": 5,
            "checkpoint_every": 100,
        },
        "diagnostics": {
            "lorentz_q": [4.0, 6.0],
            "kim_pairs": [[4.0, 6.0]],
            "warn_threshold": 2.0,
            "target_threshold": 1.0,
        },
        "output_dir": "out/taylor-green",
        "seed": 1234,
    }
    RunConfig.from_dict(copy.deepcopy(raw))
    return raw
