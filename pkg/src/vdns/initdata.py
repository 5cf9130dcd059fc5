"""Initial data construction and the strong-solution compatibility residual.

Built fields satisfy three constraints simultaneously: spectral
divergence-freeness, zero density-weighted momentum (the conserved
quantity of the periodic system), and an optional prescribed critical
Sobolev size enforced by linear rescaling.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InitSpecError
from .fields import (
    ScalarField,
    VectorField,
    dealias,
    grad,
    hs_norm,
    l2_norm,
    laplacian,
)
from .momentum import leray_project

__all__ = [
    "DensitySpec",
    "VelocitySpec",
    "InitSpec",
    "build_initial",
    "compatibility_residual",
]

_DENSITY_KINDS = ("constant", "vacuum-bubble", "two-phase")
_VELOCITY_KINDS = ("taylor-green", "random-solenoidal")


def _smoothstep(t):
    """C2 quintic ramp: 0 below 0, 1 above 1."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _periodic_distance(grid, center):
    x, y, z = grid.mesh
    L = grid.length
    d2 = np.zeros(grid.shape)
    for c, coord in zip(center, (x, y, z)):
        delta = np.abs(coord - c)
        delta = np.minimum(delta, L - delta)
        d2 += delta**2
    return np.sqrt(d2)


@dataclass(frozen=True)
class DensitySpec:
    """Density profile with values in [0, rho_bar].

    kinds:
      constant           uniform rho_bar
      vacuum-bubble      exact zero inside ``radius`` of ``center``
                         (fractions of L), C2 ramp of ``width`` cells
      two-phase          slab between levels[0] and levels[1], C2
                         interfaces of ``width`` cells at L/4 and 3L/4
    """

    kind: str = "constant"
    rho_bar: float = 1.0
    center: tuple = (0.5, 0.5, 0.5)
    radius: float = 0.125  # fraction of L
    width: float = 4.0  # interface width in cells
    levels: tuple = (0.2, 1.0)

    def __post_init__(self):
        if self.kind not in _DENSITY_KINDS:
            raise InitSpecError(f"unknown density profile {self.kind!r}")
        if not self.rho_bar > 0.0:
            raise InitSpecError("rho_bar must be positive")
        if self.kind == "two-phase":
            lo, hi = self.levels
            if not (0.0 <= lo <= hi):
                raise InitSpecError(f"two-phase levels must be ordered, got {self.levels}")
            if abs(hi - self.rho_bar) > 1e-12 * self.rho_bar:
                raise InitSpecError("upper two-phase level must equal rho_bar")
        if self.width <= 0.0:
            raise InitSpecError("interface width must be positive")

    def build(self, grid):
        if self.kind == "constant":
            return ScalarField.full(grid, self.rho_bar)
        if self.kind == "vacuum-bubble":
            center = tuple(c * grid.length for c in self.center)
            d = _periodic_distance(grid, center)
            w = self.width * grid.dx
            ramp = _smoothstep((d - self.radius * grid.length) / w)
            return ScalarField(grid, self.rho_bar * ramp)
        lo, hi = self.levels
        _, _, z = grid.mesh
        w = self.width * grid.dx
        L = grid.length
        inside = _smoothstep((z - 0.25 * L) / w) - _smoothstep((z - 0.75 * L) / w)
        return ScalarField(grid, lo + (hi - lo) * inside)

    def vacuum_set(self, grid):
        """Boolean mask of cells with exactly zero density."""
        return self.build(grid).values == 0.0


@dataclass(frozen=True)
class VelocitySpec:
    """Divergence-free velocity profile.

    kinds:
      taylor-green        the planar vortex array, amplitude ``amplitude``
      random-solenoidal   seeded per-mode Gaussian amplitudes with
                          magnitude |k|^slope inside the shell band,
                          projected mode by mode onto divergence-free
                          vectors
    """

    kind: str = "taylor-green"
    amplitude: float = 1.0
    seed: int = 0
    slope: float = -2.0
    band: tuple = (2, 4)

    def __post_init__(self):
        if self.kind not in _VELOCITY_KINDS:
            raise InitSpecError(f"unknown velocity profile {self.kind!r}")
        if self.kind == "random-solenoidal":
            lo, hi = self.band
            if not (1 <= lo <= hi):
                raise InitSpecError(f"wavenumber band must satisfy 1 <= lo <= hi, got {self.band}")

    def build(self, grid):
        if self.kind == "taylor-green":
            k = 2.0 * np.pi / grid.length
            a = self.amplitude
            return VectorField.from_functions(
                grid,
                lambda x, y, z: a * np.sin(k * x) * np.cos(k * y),
                lambda x, y, z: -a * np.cos(k * x) * np.sin(k * y),
                lambda x, y, z: np.zeros_like(x),
            )
        return _random_solenoidal(grid, self.seed, self.slope, self.band)


def _random_solenoidal(grid, seed, slope, band):
    """Band-limited random field built mode by mode in spectral space."""
    n = grid.n
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))

    j = np.fft.fftfreq(n, d=1.0 / n)
    j[n // 2] = n // 2
    jz = j[:, None, None]
    jy = j[None, :, None]
    jx = j[None, None, :]
    jmag = np.sqrt(jx**2 + jy**2 + jz**2)
    lo, hi = band
    shell = (jmag >= lo - 0.5) & (jmag <= hi + 0.5) & grid.dealias_mask_full
    with np.errstate(divide="ignore"):
        amp = np.where(shell, np.where(jmag > 0, jmag, 1.0) ** slope, 0.0)
    coeffs *= amp

    # Hermitian symmetrization makes the inverse transform real
    mirrored = np.roll(coeffs[..., ::-1, ::-1, ::-1], 1, axis=(-3, -2, -1))
    coeffs = 0.5 * (coeffs + np.conj(mirrored))

    # per-mode solenoidal projection
    s = grid.k_scale
    kx, ky, kz = s * jx, s * jy, s * jz
    ksq = kx**2 + ky**2 + kz**2
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(ksq > 0.0, 1.0 / ksq, 0.0)
    kdotc = kx * coeffs[0] + ky * coeffs[1] + kz * coeffs[2]
    coeffs[0] -= kx * kdotc * inv
    coeffs[1] -= ky * kdotc * inv
    coeffs[2] -= kz * kdotc * inv
    coeffs[:, 0, 0, 0] = 0.0

    values = np.fft.ifftn(coeffs * n**3, axes=(-3, -2, -1)).real
    return VectorField(grid, values)


@dataclass(frozen=True)
class InitSpec:
    """Complete initial-data recipe.

    ``target_h12`` is the requested critical Sobolev size of the
    velocity (None leaves the profile unscaled).  When the density has a
    vacuum set and ``quiet_vacuum`` is on, the velocity is windowed away
    from the vacuum region and post-processed so that its Laplacian is
    numerically negligible on the vacuum cells, which keeps the
    strong-solution compatibility residual there small.
    """

    density: DensitySpec = field(default_factory=DensitySpec)
    velocity: VelocitySpec = field(default_factory=VelocitySpec)
    target_h12: float = None
    quiet_vacuum: bool = True

    def __post_init__(self):
        if self.target_h12 is not None and self.target_h12 < 0.0:
            raise InitSpecError("target_h12 must be non-negative")


def _window_away_from(grid, rho_vals, margin_cells=4):
    """Smooth mask vanishing where rho is below its bulk value."""
    rho_bar = float(rho_vals.max())
    t = rho_vals / rho_bar
    # ramp from 0 where density is depressed to 1 in the bulk
    return _smoothstep((t - 0.05) / 0.9)


def _quiet_laplacian_on_set(grid, u_vals, mask, maxiter=None):
    """Divergence-free correction that interpolates Delta(u) to zero on
    the masked cells.

    The constraint count (3 per masked cell) is small, so the correction
    is computed exactly through the dense Gram matrix of the constraint
    operator C u = [Delta(P u)] restricted to the mask.
    """
    from .momentum import _project_arrays

    cells = np.argwhere(mask)
    if len(cells) == 0:
        return u_vals
    # band-limited Laplacian keeps the correction inside the dealiased
    # space the rest of the solver lives in (and C, C^T stay adjoint)
    multiplier = -grid.ksq_deriv_r * grid.dealias_mask_r

    def c_transpose(lam):
        # lam indexed like (ncells, 3) -> field P(Delta(sum lam delta))
        f = np.zeros((3,) + grid.shape)
        f[:, cells[:, 0], cells[:, 1], cells[:, 2]] = lam.T
        f = grid.irfft(multiplier * grid.rfft(f))
        proj, _ = _project_arrays(grid, f)
        return proj

    def c_apply(vals):
        lap = grid.irfft(multiplier * grid.rfft(vals))
        return lap[:, cells[:, 0], cells[:, 1], cells[:, 2]].T

    m = len(cells)
    gram = np.empty((3 * m, 3 * m))
    basis = np.eye(3 * m)
    for col in range(3 * m):
        lam = basis[col].reshape(m, 3)
        gram[:, col] = c_apply(c_transpose(lam)).reshape(-1)
    gram += np.trace(gram) / (3 * m) * 1e-12 * np.eye(3 * m)

    residual = c_apply(u_vals).reshape(-1)
    lam = np.linalg.solve(gram, residual)
    correction = c_transpose(lam.reshape(m, 3))
    return u_vals - correction


def build_initial(spec, grid):
    """Construct (rho0, u0) satisfying the data constraints.

    Postconditions: spectral div u0 at roundoff; weighted momentum below
    1e-10 * rho_bar * ||u0||_L2; when requested, ||u0||_{H^{1/2}} equals
    target_h12 to relative 1e-12.
    """
    rho = spec.density.build(grid)
    u = spec.velocity.build(grid)
    u = dealias(u)

    vacuum = spec.density.vacuum_set(grid)
    if spec.quiet_vacuum and vacuum.any() and spec.velocity.kind != "taylor-green":
        window = _window_away_from(grid, rho.values)
        u = dealias(VectorField(grid, u.values * window))
        u, _ = leray_project(u)
        u = VectorField(grid, _quiet_laplacian_on_set(grid, u.values, vacuum))
    else:
        u, _ = leray_project(u)

    # zero weighted momentum: subtract the rho-weighted mean velocity and
    # reproject; constants are divergence-free so one pass suffices, the
    # second pass plus assertion guards the contract
    mass = float(rho.values.sum() * grid.cell_volume)
    vals = u.values
    for _ in range(2):
        mom = (rho.values * vals).sum(axis=(1, 2, 3)) * grid.cell_volume
        vals = vals - (mom / mass)[:, None, None, None]
        proj, _ = leray_project(VectorField(grid, vals))
        vals = proj.values
    u = VectorField(grid, vals)

    rho_bar = float(rho.values.max())
    mom = np.abs((rho.values * u.values).sum(axis=(1, 2, 3)) * grid.cell_volume)
    unorm = l2_norm(u)
    if unorm > 0.0 and np.max(mom) > 1e-10 * rho_bar * unorm:
        raise InitSpecError("weighted-momentum removal failed to converge")

    if spec.target_h12 is not None:
        current = hs_norm(u, 0.5)
        if current == 0.0:
            if spec.target_h12 > 0.0:
                raise InitSpecError(
                    "cannot rescale an identically zero velocity to a positive size"
                )
        else:
            u = VectorField(grid, u.values * (spec.target_h12 / current))
    return rho, u


def compatibility_residual(rho0, u0, mu, delta_floor):
    """Residual of the strong-solution compatibility condition.

    Splits mu*Laplacian(u0) through the Helmholtz-Weyl decomposition to
    recover the zero-mean pressure part, then returns the pair

      ( || (mu Lap u0 - grad P0) / sqrt(max(rho0, delta_floor*rho_bar)) ||_L2,
        || (mu Lap u0 - grad P0) restricted to {rho0 = 0} ||_L2 ).

    The first value estimates the L2 size of the data term g0; the
    second must be small for admissible vacuum data.
    """
    grid = rho0.grid
    force = VectorField(grid, mu * laplacian(u0).values)
    solenoidal_part, p0 = leray_project(force)
    residual = force.values - grad(p0).values
    rho_bar = float(rho0.values.max())
    floor = np.maximum(rho0.values, delta_floor * rho_bar)
    weighted = residual / np.sqrt(floor)
    g_norm = float(np.sqrt((weighted**2).sum() * grid.cell_volume))
    on_vacuum = residual * (rho0.values == 0.0)
    vac_norm = float(np.sqrt((on_vacuum**2).sum() * grid.cell_volume))
    return g_norm, vac_norm
