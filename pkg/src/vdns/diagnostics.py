"""Monitored scalars, inequality checks, decay fits, and the size sweep.

Every run emits one DiagnosticsRecord per snapshot.  Time integrals use
left-Riemann sums throughout, which makes the discrete time-interpolation
inequality exact rather than approximate.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, UndefinedRatioError
from .fields import hs_norm, weak_lorentz_norm
from .momentum import kinetic_energy, weighted_momentum

__all__ = [
    "DiagnosticsConfig",
    "DiagnosticsRecord",
    "record",
    "interp_inequality_check",
    "gn_ratio",
    "kim_integral",
    "decay_fit",
    "epsilon_sweep",
    "SweepEntry",
    "SweepResult",
]


def _validate_serrin(p, q):
    if not (3.0 < q < math.inf):
        raise ParameterError(f"Lorentz exponent must satisfy 3 < q < inf, got {q}")
    if abs(2.0 / p + 3.0 / q - 1.0) > 1e-9:
        raise ParameterError(f"(p, q) = ({p}, {q}) is off the scaling-critical line")


@dataclass(frozen=True)
class DiagnosticsConfig:
    """Which norms to monitor and where the bootstrap guard lines sit."""

    lorentz_q: tuple = (4.0, 6.0)
    kim_pairs: tuple = ((4.0, 6.0),)
    warn_threshold: float = 2.0
    target_threshold: float = 1.0

    def __post_init__(self):
        for q in self.lorentz_q:
            if not q > 1.0:
                raise ParameterError(f"Lorentz exponent must exceed 1, got {q}")
        for p, q in self.kim_pairs:
            _validate_serrin(p, q)
            if q not in self.lorentz_q:
                raise ParameterError(
                    f"criterion pair ({p}, {q}) needs q={q} in lorentz_q"
                )


@dataclass(frozen=True)
class DiagnosticsRecord:
    """One timestamped row of all monitored scalars."""

    t: float
    energy: float
    grad_l2: float
    h_half: float
    a_t: float
    diss_int: float
    rho_min: float
    rho_max: float
    mass: float
    momentum: tuple
    gn: float
    lorentz: dict
    kim: dict
    t_grad2: float


def gn_ratio(u):
    """Gradient-to-Hessian ratio |grad u|_L6 / |grad^2 u|_L2.

    A bounded-constant monitor for the elliptic estimates; homogeneous of
    degree zero in the amplitude.  Raises UndefinedRatioError for the
    zero field.
    """
    grid = u.grid
    uh = grid.rfft(u.values)
    kz, ky, kx = grid._deriv_half
    frob_sq = np.zeros(grid.shape)
    for i in range(3):
        for mult in (kx, ky, kz):
            g = grid.irfft(mult * uh[i])
            frob_sq += g * g
    grad6 = float((frob_sq ** 3.0).sum() * grid.cell_volume) ** (1.0 / 6.0)
    hess = hs_norm(u, 2.0)
    if hess == 0.0:
        raise UndefinedRatioError("gradient ratio undefined for the zero field")
    return grad6 / hess


def record(state, cfg=DiagnosticsConfig(), kim_acc=None):
    """Assemble one diagnostics row from a solution snapshot.

    ``kim_acc`` carries the run-level left-Riemann accumulators of the
    blowup-criterion integrals, keyed by (p, q); a fresh run starts them
    at zero.  A(t) is read off the quartic accumulator as its fourth
    root.
    """
    grid = state.rho.grid
    u = state.u
    zero_u = not np.any(u.values)
    lorentz = {q: (0.0 if zero_u else weak_lorentz_norm(u, q)) for q in cfg.lorentz_q}
    kim = {}
    for p, q in cfg.kim_pairs:
        base = 0.0 if kim_acc is None else kim_acc.get((p, q), 0.0)
        kim[(p, q)] = base
    grad_l2 = hs_norm(u, 1.0)
    return DiagnosticsRecord(
        t=state.t,
        energy=kinetic_energy(state),
        grad_l2=grad_l2,
        h_half=hs_norm(u, 0.5),
        a_t=state.diss_l4 ** 0.25,
        diss_int=state.diss_l2,
        rho_min=float(state.rho.values.min()),
        rho_max=float(state.rho.values.max()),
        mass=float(state.rho.values.sum() * grid.cell_volume),
        momentum=tuple(float(m) for m in weighted_momentum(state)),
        gn=0.0 if zero_u else gn_ratio(u),
        lorentz=lorentz,
        kim=kim,
        t_grad2=state.t * grad_l2**2,
    )


def interp_inequality_check(series, ds):
    """Ratio of the two sides of the discrete time-interpolation bound.

    For nonnegative a_i and weights ds_i > 0,

        (sum a^4 ds)^(1/4) <= (max a)^(1/2) * (sum a^2 ds)^(1/4)

    holds exactly as a sequence inequality; the returned LHS/RHS never
    exceeds 1 + 1e-12.  The degenerate all-zero series returns 1.
    """
    a = np.asarray(series, dtype=float)
    if a.size == 0:
        raise ParameterError("series must be nonempty")
    if np.any(a < 0.0):
        raise ParameterError("series must be nonnegative")
    w = np.broadcast_to(np.asarray(ds, dtype=float), a.shape)
    if np.any(w <= 0.0):
        raise ParameterError("weights must be positive")
    lhs = float((a**4 * w).sum()) ** 0.25
    rhs = float(a.max()) ** 0.5 * float((a**2 * w).sum()) ** 0.25
    if rhs == 0.0:
        return 1.0
    return lhs / rhs


def kim_integral(records, p, q):
    """Left-Riemann integral of the blowup-criterion integrand.

    Requires (p, q) on the line 2/p + 3/q = 1 with 3 < q; the records
    must be time-ordered and carry the L^{q,inf} norm for this q.
    """
    _validate_serrin(p, q)
    if len(records) < 2:
        return 0.0
    times = [r.t for r in records]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ParameterError("records must be strictly time-ordered")
    total = 0.0
    for left, right in zip(records, records[1:]):
        if q not in left.lorentz:
            raise ParameterError(f"records do not carry the q={q} Lorentz norm")
        total += left.lorentz[q] ** p * (right.t - left.t)
    return total


def decay_fit(records, window=0.5):
    """Decay summary: (sup of t |grad u|^2, fitted exponential energy rate).

    The rate is the least-squares slope of log E over the trailing
    ``window`` fraction of the time span, restricted to records with
    positive energy (an exact zero truncates the fit region).
    """
    usable = [r for r in records if r.t > 0.0]
    if len(usable) < 20:
        raise ParameterError("decay fit needs at least 20 records with t > 0")
    m_hat = max(r.t_grad2 for r in usable)
    t_end = usable[-1].t
    tail = [r for r in usable if r.t >= (1.0 - window) * t_end and r.energy > 0.0]
    if len(tail) < 2:
        tail = [r for r in usable if r.energy > 0.0][:2]
    if len(tail) < 2:
        return m_hat, math.inf  # energy identically zero decays faster than any rate
    ts = np.array([r.t for r in tail])
    logs = np.log([r.energy for r in tail])
    slope = np.polyfit(ts, logs, 1)[0]
    return m_hat, float(-slope)


@dataclass(frozen=True)
class SweepEntry:
    eps: float
    sup_a: float
    completed: bool
    sup_t_grad2: float
    decay_rate: float
    error: str = None

    def to_dict(self):
        return {
            "eps": self.eps,
            "sup_a": self.sup_a,
            "completed": self.completed,
            "sup_t_grad2": self.sup_t_grad2,
            "decay_rate": self.decay_rate,
            "error": self.error,
        }


@dataclass(frozen=True)
class SweepResult:
    """Initial-size sweep: per-size outcomes plus the log-log response fit.

    In the small-data regime the running critical norm responds linearly
    to the initial size, so the fitted slope sits near one.
    """

    entries: tuple
    slope: float
    intercept: float

    def to_dict(self):
        return {
            "entries": [e.to_dict() for e in self.entries],
            "slope": self.slope,
            "intercept": self.intercept,
        }


def epsilon_sweep(eps_list, run_at):
    """Run the solver across initial sizes and fit the response curve.

    ``run_at(eps)`` must perform one run with the base configuration
    rescaled so the initial critical norm equals ``eps``, returning its
    diagnostics records.  Individual failures are recorded per entry and
    the sweep continues.
    """
    eps_list = list(eps_list)
    if not eps_list:
        raise ParameterError("sweep needs at least one size")
    if any(e <= 0.0 for e in eps_list):
        raise ParameterError("sweep sizes must be positive")
    if any(b <= a for a, b in zip(eps_list, eps_list[1:])):
        raise ParameterError("sweep sizes must be strictly ascending")

    entries = []
    for eps in eps_list:
        try:
            records = run_at(eps)
            sup_a = max(r.a_t for r in records)
            sup_tg2 = max(r.t_grad2 for r in records)
            try:
                _, rate = decay_fit(records)
            except ParameterError:
                rate = math.nan
            entries.append(SweepEntry(eps, sup_a, True, sup_tg2, rate))
        except Exception as exc:  # noqa: BLE001 - failures are data here
            entries.append(
                SweepEntry(eps, math.nan, False, math.nan, math.nan, error=str(exc))
            )

    good = [e for e in entries if e.completed and e.sup_a > 0.0]
    if len(good) < 2:
        raise ParameterError("sweep needs at least two completed runs to fit a slope")
    slope, intercept = np.polyfit(
        np.log([e.eps for e in good]), np.log([e.sup_a for e in good]), 1
    )
    return SweepResult(tuple(entries), float(slope), float(intercept))
