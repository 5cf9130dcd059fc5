"""Variable-density projection step for the momentum equation.

One step advances (rho, u, P) by: finite-volume density transport,
explicit dealiased advection, an implicit spectral viscous solve against
the pointwise floored density, and a variable-coefficient pressure
projection that restores the divergence constraint.

The singular 1/rho never appears in the open: density enters the
viscous and pressure solves only through max(rho, delta_floor*rho_bar).
On the vacuum set itself the velocity is evolved with the floored
coefficient; the governing equations place no constraint there, and the
delta-sweep tests document that the floor choice is immaterial away
from vacuum.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    CflError,
    GridMismatchError,
    ParameterError,
    SolverConvergenceError,
)
from .fields import ScalarField, VectorField, hs_norm
from .transport import TransportScheme, advect_density, cfl_number, face_velocities

__all__ = [
    "MomentumParams",
    "SimState",
    "leray_project",
    "pressure_solve",
    "momentum_step",
    "linear_step",
    "kinetic_energy",
    "weighted_momentum",
]

_ADVECTION_FORMS = ("convective", "skew-symmetric")
_VISCOUS_MODES = ("implicit-spectral", "explicit")

# Momentum steps are checked against this advective Courant bound.
MOMENTUM_CFL = 0.5


@dataclass(frozen=True)
class MomentumParams:
    """Physical and scheme parameters for the momentum update."""

    mu: float
    delta_floor: float = 1e-6
    advection: str = "skew-symmetric"
    viscous: str = "implicit-spectral"
    time_order: int = 1
    solver_tol: float = 1e-10
    solver_maxiter: int = 500

    def __post_init__(self):
        if not self.mu > 0.0:
            raise ParameterError(f"viscosity must be positive, got {self.mu}")
        if not (0.0 < self.delta_floor <= 1e-2):
            raise ParameterError(
                f"delta_floor must lie in (0, 1e-2], got {self.delta_floor}"
            )
        if self.advection not in _ADVECTION_FORMS:
            raise ParameterError(f"unknown advection form {self.advection!r}")
        if self.viscous not in _VISCOUS_MODES:
            raise ParameterError(f"unknown viscous treatment {self.viscous!r}")
        if self.time_order not in (1, 2):
            raise ParameterError(f"time order must be 1 or 2, got {self.time_order}")


@dataclass(frozen=True)
class SimState:
    """Solution snapshot plus the running time integrals of |grad u|.

    ``diss_l2`` and ``diss_l4`` are the left-Riemann accumulators of
    ``|grad u|_{L2}^2`` and ``|grad u|_{L2}^4``; the quartic one feeds
    the critical norm A(t) = (integral)^{1/4}.
    """

    t: float
    rho: ScalarField
    u: VectorField
    p: ScalarField
    diss_l2: float = 0.0
    diss_l4: float = 0.0

    @classmethod
    def initial(cls, rho, u):
        return cls(0.0, rho, u, ScalarField.zeros(rho.grid))


def kinetic_energy(state):
    """E = (1/2) integral rho |u|^2 dx."""
    grid = state.rho.grid
    return 0.5 * float(
        (state.rho.values * (state.u.values**2).sum(axis=0)).sum()
        * grid.cell_volume
    )


def weighted_momentum(state):
    """integral rho u dx, one entry per component."""
    grid = state.rho.grid
    return (state.rho.values * state.u.values).sum(axis=(1, 2, 3)) * grid.cell_volume


# Leray / Helmholtz-Weyl projection -------------------------------------------


def _project_arrays(grid, vec, want_potential=False):
    """Divergence-free part of a stacked (3,n,n,n) array.

    The projection shares the derivative wavevector convention (Nyquist
    components annihilated) with the divergence operator, so div(Pv)
    vanishes identically for every input; modes whose effective
    wavevector is zero pass through unchanged.
    """
    vh = grid.rfft(vec)
    kzd, kyd, kxd = grid._deriv_half  # 1j * k with Nyquist zeroed
    kz, ky, kx = kzd.imag, kyd.imag, kxd.imag
    ksq = kz**2 + ky**2 + kx**2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(ksq > 0.0, 1.0 / ksq, 0.0)
    kdotv = kx * vh[0] + ky * vh[1] + kz * vh[2]
    phi_hat = (-1j * kdotv * inv) if want_potential else None
    scale = kdotv * inv
    vh[0] -= kx * scale
    vh[1] -= ky * scale
    vh[2] -= kz * scale
    return grid.irfft(vh), phi_hat


def leray_project(v):
    """Helmholtz-Weyl split v = Pv + grad(phi) with div(Pv) = 0.

    Returns (Pv, phi); phi has zero mean.  The constant (k = 0) part of
    v is divergence-free and passes through unchanged.  On band-limited
    input the result matches the per-mode projection I - k k^T / |k|^2
    exactly; Nyquist-plane wavevector components are treated as zero, in
    step with the derivative operators.
    """
    grid = v.grid
    proj, phi_hat = _project_arrays(grid, v.values, want_potential=True)
    phi = grid.irfft(phi_hat)
    return VectorField(grid, proj), ScalarField(grid, phi)


# Preconditioned conjugate gradients -------------------------------------------


def _pcg(apply_a, b, apply_m, dot, tol, maxiter, what, x0=None):
    """CG on an SPD operator; vectors are whatever ``dot`` understands.

    Stops when ||r|| <= tol * ||b||; raises SolverConvergenceError with
    the relative residual history when the budget is exhausted.  An
    optional warm start ``x0`` shifts the initial residual only; the
    stopping criterion stays relative to ``||b||``.
    """
    bnorm = np.sqrt(dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), [0.0]
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = x0.copy()
        r = b - apply_a(x)
        if np.sqrt(dot(r, r)) <= tol * bnorm:
            return x, [float(np.sqrt(dot(r, r)) / bnorm)]
    z = apply_m(r)
    p = z.copy()
    rz = dot(r, z)
    history = [1.0]
    for _ in range(maxiter):
        ap = apply_a(p)
        alpha = rz / dot(p, ap)
        x += alpha * p
        r -= alpha * ap
        rel = np.sqrt(dot(r, r)) / bnorm
        history.append(float(rel))
        if rel <= tol:
            return x, history
        z = apply_m(r)
        rz_new = dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverConvergenceError(
        f"{what} failed to reach {tol:.1e} in {maxiter} iterations "
        f"(last residual {history[-1]:.3e})",
        residuals=history,
    )


# Pressure solve ----------------------------------------------------------------


def pressure_solve(
    rho,
    r,
    delta_floor,
    rho_bar=None,
    tol=1e-9,
    maxiter=500,
    initial_guess=None,
):
    """Solve div( (1/max(rho, delta_floor*rho_bar)) grad P ) = div r.

    Preconditioned conjugate gradients on the sign-flipped operator,
    with the constant-coefficient spectral inverse Laplacian as
    preconditioner; the pressure is returned in the zero-mean gauge.
    The discrete residual is driven below ``tol * ||div r||``.
    """
    grid = rho.grid
    if rho_bar is None:
        rho_bar = float(rho.values.max())
    if not rho_bar > 0.0:
        raise ParameterError("reference density must be positive")
    beta = 1.0 / np.maximum(rho.values, delta_floor * rho_bar)
    beta0 = float(beta.mean())
    kz, ky, kx = grid._deriv_half
    ksq = grid.ksq_deriv_r
    weight = grid.parseval_weight_r

    # CG runs on rfft coefficients; the weighted Parseval dot keeps the
    # iteration identical to the physical-space one while the diagonal
    # preconditioner costs no transforms.
    def neg_div_beta_grad(ph):
        gx = grid.irfft(kx * ph)
        gy = grid.irfft(ky * ph)
        gz = grid.irfft(kz * ph)
        return -(
            kx * grid.rfft(beta * gx)
            + ky * grid.rfft(beta * gy)
            + kz * grid.rfft(beta * gz)
        )

    with np.errstate(divide="ignore", invalid="ignore"):
        inv_lap = np.where(ksq > 0.0, 1.0 / (beta0 * ksq), 0.0)

    def precondition(res):
        return inv_lap * res

    def dot(a, b_):
        return float((weight * (a.real * b_.real + a.imag * b_.imag)).sum())

    rh = grid.rfft(r.values)
    b = -(kx * rh[0] + ky * rh[1] + kz * rh[2])
    x0 = None if initial_guess is None else grid.rfft(initial_guess)

    ph, _ = _pcg(
        neg_div_beta_grad,
        b,
        precondition,
        dot,
        tol,
        maxiter,
        "pressure solve",
        x0=x0,
    )
    ph[0, 0, 0] = 0.0  # zero-mean gauge
    return ScalarField(grid, grid.irfft(ph))


def _beta_grad(grid, beta, p):
    """beta * grad(p) as a stacked array, matching the solve operator."""
    kz, ky, kx = grid._deriv_half
    ph = grid.rfft(p)
    return np.stack(
        [beta * grid.irfft(kx * ph), beta * grid.irfft(ky * ph), beta * grid.irfft(kz * ph)]
    )


# Advection term ----------------------------------------------------------------


def _advection_term(grid, rho_vals, a_vals, w_vals, form):
    """Dealiased (rho a . grad) w, or its skew-symmetrized variant.

    ``a`` is the transporting velocity, ``w`` the advected one; for the
    nonlinear step both are u.  Returns the physical-space term.
    """
    mask = grid.dealias_mask_r
    kz, ky, kx = grid._deriv_half
    wh = grid.rfft(w_vals)
    dw = np.empty((3, 3) + grid.shape)
    for i in range(3):
        dw[i, 0] = grid.irfft(kx * wh[i])
        dw[i, 1] = grid.irfft(ky * wh[i])
        dw[i, 2] = grid.irfft(kz * wh[i])
    ra = rho_vals * a_vals
    conv = np.einsum("jzyx,ijzyx->izyx", ra, dw)
    nh = grid.rfft(conv)
    if form == "skew-symmetric":
        for i in range(3):
            fh = grid.rfft(ra * w_vals[i])
            nh[i] = 0.5 * (nh[i] + kx * fh[0] + ky * fh[1] + kz * fh[2])
    nh *= mask
    return grid.irfft(nh)


# Viscous solve -------------------------------------------------------------------


def _viscous_implicit(grid, rho_f, coeff, rhs, tol, maxiter):
    """Solve (rho_f I - coeff*Laplacian) u = rhs for stacked components.

    CG with the symmetric preconditioner D^{-1/2} S^{-1} D^{-1/2}, where
    D = diag(rho_f) and S is the constant-coefficient spectral shift; the
    preconditioner is exact when rho_f is constant, so one iteration
    suffices there.
    """
    ksq = grid.ksq_r
    spread = float(rho_f.max() - rho_f.min())
    if spread <= 1e-13 * float(rho_f.max()):
        # constant coefficient: diagonal in spectral space
        rf = float(rho_f.flat[0])
        return grid.irfft(grid.rfft(rhs) / (rf + coeff * ksq))

    rho0 = float(rho_f.mean())
    sqrt_rho = np.sqrt(rho_f)
    inv_shift = 1.0 / (rho0 + coeff * ksq)

    def apply_a(x):
        return rho_f * x + coeff * grid.irfft(ksq * grid.rfft(x))

    def apply_m(res):
        y = res / sqrt_rho
        y = grid.irfft(inv_shift * grid.rfft(y))
        return y / sqrt_rho

    def dot(a, b):
        return float((a * b).sum())

    x, _ = _pcg(apply_a, rhs, apply_m, dot, tol, maxiter, "viscous solve")
    return x


# Time stepping -------------------------------------------------------------------


def _check_cfl(grid, face_u, dt):
    nu = cfl_number(face_u, dt, grid.dx)
    if nu > MOMENTUM_CFL * (1.0 + 1e-12):
        speed = sum(float(np.max(np.abs(face_u[c]))) for c in range(3))
        admissible = MOMENTUM_CFL * grid.dx / speed
        raise CflError(
            f"momentum CFL number {nu:.3f} exceeds {MOMENTUM_CFL} "
            f"(admissible dt {admissible:.3e})",
            admissible_dt=admissible,
        )


def _explicit_viscous_limit(grid, params, rho_min_f):
    ksq_max = float(grid.ksq_r[grid.dealias_mask_r].max())
    return 0.9 * 2.0 * rho_min_f / (params.mu * ksq_max)


def _substep(
    grid, rho_old, u_old, flux_u, dt, params, scheme, rho_bar,
    cn_factor=1.0, p_prev=None,
):
    """One projection substep; returns (rho_new, u_new, p_new).

    ``cn_factor`` < 1 turns the viscous update into the Crank-Nicolson
    average used by the second-order path.  ``p_prev`` warm-starts the
    pressure iteration.
    """
    faces = face_velocities(flux_u)
    _check_cfl(grid, faces, dt)
    rho_new = advect_density(rho_old, flux_u, dt, scheme, face_u=faces)

    rho_f = np.maximum(rho_new.values, params.delta_floor * rho_bar)
    adv = _advection_term(
        grid, rho_new.values, flux_u.values, u_old.values, params.advection
    )

    if params.viscous == "implicit-spectral":
        theta = cn_factor  # 1.0 backward Euler, 0.5 Crank-Nicolson
        coeff = params.mu * dt * theta
        rhs = rho_f * u_old.values - dt * adv
        if theta < 1.0:
            lap_u = grid.irfft(-grid.ksq_r * grid.rfft(u_old.values))
            rhs = rhs + params.mu * dt * (1.0 - theta) * lap_u
        ustar = _viscous_implicit(
            grid, rho_f, coeff, rhs, params.solver_tol, params.solver_maxiter
        )
    else:
        if dt > _explicit_viscous_limit(grid, params, float(rho_f.min())):
            raise CflError(
                "explicit viscous step exceeds the diffusive stability bound",
                admissible_dt=_explicit_viscous_limit(grid, params, float(rho_f.min())),
            )
        lap_u = grid.irfft(-grid.ksq_r * grid.rfft(u_old.values))
        ustar = u_old.values + dt * (params.mu * lap_u - adv) / rho_f

    p_new = pressure_solve(
        rho_new,
        VectorField(grid, ustar / dt),
        params.delta_floor,
        rho_bar=rho_bar,
        tol=params.solver_tol,
        maxiter=params.solver_maxiter,
        initial_guess=p_prev,
    )
    beta = 1.0 / rho_f
    u_new = ustar - dt * _beta_grad(grid, beta, p_new.values)
    return rho_new, VectorField(grid, u_new), p_new


def _advance(state, dt, params, scheme, u_frozen=None):
    grid = state.rho.grid
    if dt <= 0.0:
        raise ParameterError(f"time step must be positive, got {dt}")
    rho_bar = float(state.rho.values.max())
    if rho_bar <= 0.0:
        raise ParameterError("density is identically zero")

    grad_l2 = hs_norm(state.u, 1.0)

    p_prev = state.p.values
    if params.time_order == 1:
        flux_u = state.u if u_frozen is None else u_frozen
        rho_new, u_new, p_new = _substep(
            grid, state.rho, state.u, flux_u, dt, params, scheme, rho_bar,
            p_prev=p_prev,
        )
    else:
        # midpoint predictor for the transporting velocity, Crank-Nicolson
        # viscous average over the whole step
        flux_half = state.u if u_frozen is None else u_frozen
        _, u_half, _ = _substep(
            grid, state.rho, state.u, flux_half, 0.5 * dt, params, scheme, rho_bar,
            p_prev=p_prev,
        )
        flux_u = u_half if u_frozen is None else u_frozen
        rho_new, u_new, p_new = _substep(
            grid, state.rho, state.u, flux_u, dt, params, scheme, rho_bar,
            cn_factor=0.5, p_prev=p_prev,
        )

    return SimState(
        t=state.t + dt,
        rho=rho_new,
        u=u_new,
        p=p_new,
        diss_l2=state.diss_l2 + dt * grad_l2**2,
        diss_l4=state.diss_l4 + dt * grad_l2**4,
    )


def momentum_step(state, dt, params, scheme=TransportScheme()):
    """Advance (rho, u, P) by one full time step.

    Sequence: density transport, explicit dealiased advection, implicit
    spectral viscous solve against the floored pointwise density, and
    the pressure projection.  With constant density this reduces to a
    standard constant-density projection method.
    """
    return _advance(state, dt, params, scheme)


def linear_step(state, dt, params, u_frozen, scheme=TransportScheme()):
    """Advance the frozen-velocity linearization by one step.

    The density is advected by ``u_frozen`` and the velocity in
    ``state.u`` is treated as the unknown ``w`` of the linear system;
    the update is linear in ``w`` by construction and, at first order in
    time, shares its discrete formulas with :func:`momentum_step` when
    ``u_frozen`` equals the current velocity.
    """
    if u_frozen.grid != state.rho.grid:
        raise GridMismatchError("frozen velocity grid differs from state grid")
    return _advance(state, dt, params, scheme, u_frozen=u_frozen)
