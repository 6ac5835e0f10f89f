"""Finite-difference solvers for the forward and backward density equations.

The forward equation evolves the transition density p(y, t | y1, 0) of the
SDE dY = f(Y) dt + eps dB from a point source; the backward equation evolves
g(y, t) = p(y3, T | y, t) from a terminal point target.  Both are solved on
a fixed cell-centered grid with a conservative flux-form discretization,
reflecting (zero-flux) boundaries and Crank-Nicolson time stepping.

The backward operator is the exact transpose of the forward one, which makes
the discrete pairing integral(g * p) dy constant in time (the discrete
Chapman-Kolmogorov identity) up to roundoff wherever the two sweeps use the
same scheme.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

# Startup steps run backward Euler instead of Crank-Nicolson: CN is only
# neutrally damping for stiff modes and would ring against the point-source
# initial data; a few strongly damped steps remove that transient.
RANNACHER_STEPS = 24

MASS_ABORT_TOLERANCE = 1e-4


class SolverError(RuntimeError):
    """Scheme divergence: non-finite values or unacceptable mass drift."""


class GridError(ValueError):
    """Invalid grid construction or mismatched grids."""


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform cell-centered grid on [y_min, y_max]."""

    y_min: float = -1.0
    y_max: float = 2.5
    n_cells: int = 800

    def __post_init__(self) -> None:
        if not self.y_max > self.y_min:
            raise GridError(f"need y_min < y_max, got [{self.y_min}, {self.y_max}]")
        if self.n_cells < 64:
            raise GridError(f"n_cells must be >= 64, got {self.n_cells}")

    @property
    def spacing(self) -> float:
        return (self.y_max - self.y_min) / self.n_cells

    @cached_property
    def nodes(self) -> np.ndarray:
        """Cell centers, length n_cells."""
        h = self.spacing
        nodes = self.y_min + h * (np.arange(self.n_cells) + 0.5)
        nodes.setflags(write=False)
        return nodes

    @cached_property
    def faces(self) -> np.ndarray:
        """Cell interfaces, length n_cells + 1."""
        faces = np.linspace(self.y_min, self.y_max, self.n_cells + 1)
        faces.setflags(write=False)
        return faces

    def contains(self, y: float) -> bool:
        return self.y_min < y < self.y_max

    def refined(self, factor: int = 2) -> "SpatialGrid":
        return SpatialGrid(self.y_min, self.y_max, self.n_cells * factor)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with n_steps intervals on [t_start, t_end]."""

    t_start: float = 0.0
    t_end: float = 10.0
    n_steps: int = 4000

    def __post_init__(self) -> None:
        if not self.t_end > self.t_start:
            raise GridError(f"need t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if self.n_steps < 1:
            raise GridError(f"n_steps must be >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(self.t_start, self.t_end, self.n_steps + 1)
        nodes.setflags(write=False)
        return nodes

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.t_start, self.t_end, self.n_steps * factor)


@dataclass(frozen=True)
class NoiseIntensity:
    """Additive noise amplitude of the SDE; diffusion coefficient is eps^2/2."""

    epsilon: float

    def __post_init__(self) -> None:
        if not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise GridError(f"epsilon must be positive, got {self.epsilon!r}")


def _as_noise(eps) -> NoiseIntensity:
    return eps if isinstance(eps, NoiseIntensity) else NoiseIntensity(float(eps))


@dataclass(frozen=True)
class DensitySurface:
    """Density values on the full space x time grid.

    ``values[n, i]`` is the density at time node n and cell i.  Forward
    surfaces hold p(y, t | source, t_start); backward surfaces hold
    g(y, t) = p(source, t_end | y, t).  Arrays are read-only so surfaces can
    be shared freely between threads.
    """

    grid: SpatialGrid
    times: TimeGrid
    values: np.ndarray
    kind: str                       # "forward", "backward", "conditioned", ...
    source: float | None = None     # delta location (start or target state)
    clamped_nodes: int = 0          # stored values lifted from negative to 0
    clamp_violations: int = 0       # raw values below the -1e-12 tolerance
    min_pre_clamp: float = 0.0      # most negative raw value seen

    def slice_at(self, t: float) -> np.ndarray:
        """Stored slice closest to time t."""
        n = int(round((t - self.times.t_start) / self.times.dt))
        n = min(max(n, 0), self.times.n_steps)
        return self.values[n]


def mass(values: np.ndarray, grid: SpatialGrid) -> float:
    """Integral of a density vector over [y_min, y_max].

    On the cell-centered grid this is the trapezoid rule with the boundary
    half-cells closed by the reflecting (zero-gradient) extension, which
    reduces to spacing * sum(values) and is exact for uniform densities.
    """
    values = np.asarray(values)
    if values.shape[-1] != grid.n_cells:
        raise GridError(f"density length {values.shape[-1]} != n_cells {grid.n_cells}")
    return float(grid.spacing * values.sum(axis=-1))


def delta_init(grid: SpatialGrid, y0: float) -> np.ndarray:
    """Grid projection of a unit point mass at y0.

    The mass is split linearly between the two cells bracketing y0, which
    preserves both the total mass and the first moment exactly.  Inside the
    outer half-cells (no bracketing pair) the nearest cell takes everything.
    """
    if not grid.contains(y0):
        raise GridError(f"y0={y0} outside the open interval "
                        f"({grid.y_min}, {grid.y_max})")
    h = grid.spacing
    nodes = grid.nodes
    v = np.zeros(grid.n_cells)
    pos = (y0 - nodes[0]) / h
    i = int(math.floor(pos))
    if i < 0:
        v[0] = 1.0 / h
    elif i >= grid.n_cells - 1:
        v[-1] = 1.0 / h
    else:
        w_right = pos - i
        v[i] = (1.0 - w_right) / h
        v[i + 1] = w_right / h
    return v


# --- operator construction ---------------------------------------------------

def _forward_operator(drift, eps: NoiseIntensity, grid: SpatialGrid):
    """Tridiagonal generator L of the flux-form forward equation.

    dp_i/dt = (F_i - F_{i+1}) / h with face fluxes
    F = f_face * (p_left + p_right)/2 - D (p_right - p_left)/h and zero flux
    through the domain boundaries.  Columns of L sum to zero, so both Euler
    and Crank-Nicolson updates conserve spacing*sum(p) exactly.

    Returns (lower, diag, upper) with lower[i] = L[i+1, i], upper[i] = L[i, i+1].
    """
    h = grid.spacing
    d_coef = 0.5 * eps.epsilon**2
    f_face = np.asarray(drift.drift(grid.faces[1:-1]), dtype=float)  # interior faces

    adv = f_face / (2.0 * h)
    dif = d_coef / h**2

    lower = adv + dif          # L[i+1, i]
    upper = -adv + dif         # L[i, i+1]
    diag = np.zeros(grid.n_cells)
    diag[:-1] -= adv + dif     # outflow through the right face
    diag[1:] += adv - dif      # outflow through the left face
    return lower, diag, upper


def _step_matrices(lower, diag, upper, dt: float, implicit_weight: float):
    """Banded LHS and tridiagonal RHS for one theta-scheme step of size dt.

    implicit_weight=0.5 is Crank-Nicolson, 1.0 is backward Euler.  The LHS is
    returned in solve_banded layout.
    """
    n = diag.size
    wi = implicit_weight * dt
    we = (1.0 - implicit_weight) * dt

    ab = np.zeros((3, n))
    ab[0, 1:] = -wi * upper
    ab[1, :] = 1.0 - wi * diag
    ab[2, :-1] = -wi * lower

    rhs_lower = we * lower
    rhs_diag = 1.0 + we * diag
    rhs_upper = we * upper
    return ab, (rhs_lower, rhs_diag, rhs_upper)


def _apply_tridiag(rhs, v: np.ndarray) -> np.ndarray:
    rhs_lower, rhs_diag, rhs_upper = rhs
    out = rhs_diag * v
    out[:-1] += rhs_upper * v[1:]
    out[1:] += rhs_lower * v[:-1]
    return out


def _sweep(lower, diag, upper, init: np.ndarray, times: TimeGrid,
           rannacher_steps: int, check_mass: bool, grid: SpatialGrid):
    """Run the theta scheme over all steps and return the raw slices.

    The sweep always marches away from ``init`` over n_steps intervals, with
    the startup steps applied first; callers reverse the storage order for
    backward problems.
    """
    n_steps = times.n_steps
    dt = times.dt
    n_start = min(rannacher_steps, n_steps)

    cn_ab, cn_rhs = _step_matrices(lower, diag, upper, dt, 0.5)
    be_ab, be_rhs = _step_matrices(lower, diag, upper, dt, 1.0)

    raw = np.empty((n_steps + 1, grid.n_cells))
    raw[0] = init
    v = init.copy()
    for k in range(n_steps):
        if k < n_start:
            ab, rhs = be_ab, be_rhs
        else:
            ab, rhs = cn_ab, cn_rhs
        v = solve_banded((1, 1), ab, _apply_tridiag(rhs, v),
                         overwrite_b=True, check_finite=False)
        raw[k + 1] = v
        if not np.all(np.isfinite(v)):
            raise SolverError(f"non-finite density at step {k + 1} "
                              f"(t={times.t_start + (k + 1) * dt:g})")
        if check_mass:
            m = grid.spacing * v.sum()
            if abs(m - 1.0) > MASS_ABORT_TOLERANCE:
                raise SolverError(f"mass drifted to {m:.6g} at step {k + 1}")
    return raw


CLAMP_TOLERANCE = -1e-12


def _package(raw: np.ndarray, grid: SpatialGrid, times: TimeGrid, kind: str,
             source: float) -> DensitySurface:
    min_raw = float(raw.min())
    negatives = int((raw < 0.0).sum())
    violations = int((raw < CLAMP_TOLERANCE).sum())
    values = np.maximum(raw, 0.0)
    values.setflags(write=False)
    return DensitySurface(grid=grid, times=times, values=values, kind=kind,
                          source=source, clamped_nodes=negatives,
                          clamp_violations=violations,
                          min_pre_clamp=min(min_raw, 0.0))


def solve_forward(drift, eps, grid: SpatialGrid, times: TimeGrid, y1: float,
                  rannacher_steps: int = RANNACHER_STEPS) -> DensitySurface:
    """Density p(y, t | y1, t_start) for all stored time nodes.

    Conservative flux form, reflecting boundaries, Crank-Nicolson stepping
    with ``rannacher_steps`` backward-Euler startup steps to damp the
    point-source transient.  Negative stored values are clamped to zero and
    counted; the evolution itself is untouched so conservation and the
    discrete Chapman-Kolmogorov identity hold exactly.
    """
    eps = _as_noise(eps)
    lower, diag, upper = _forward_operator(drift, eps, grid)
    init = delta_init(grid, y1)
    raw = _sweep(lower, diag, upper, init, times, rannacher_steps,
                 check_mass=True, grid=grid)
    return _package(raw, grid, times, "forward", y1)


def solve_backward(drift, eps, grid: SpatialGrid, times: TimeGrid, y3: float,
                   rannacher_steps: int = RANNACHER_STEPS) -> DensitySurface:
    """Hitting density g(y, t) = p(y3, t_end | y, t) for all stored time nodes.

    Integrates the backward equation dg/dt = -f dg/dy - (eps^2/2) d2g/dy2
    from the terminal point target at t_end down to t_start.  The spatial
    operator is the transpose of the forward generator, whose row sums
    vanish: constants are invariant (the discrete Neumann closure) and the
    pairing integral(g*p) is conserved against any forward solve that uses
    the same stepping schedule.
    """
    eps = _as_noise(eps)
    lower, diag, upper = _forward_operator(drift, eps, grid)
    init = delta_init(grid, y3)
    # Transpose swaps the off-diagonals; marching "forward" from the terminal
    # condition and flipping the storage realizes the backward-in-time sweep.
    raw = _sweep(upper, diag, lower, init, times, rannacher_steps,
                 check_mass=False, grid=grid)
    return _package(raw[::-1], grid, times, "backward", y3)


def solve_endpoint_conditioned(drift, eps, grid: SpatialGrid, times: TimeGrid,
                               y_end: float,
                               rannacher_steps: int = RANNACHER_STEPS,
                               ) -> DensitySurface:
    """Density of the state at time t conditioned on ending at ``y_end``.

    For a path drawn from the stationary ensemble and pinned to ``y_end`` at
    t_end, the state density at earlier times is, by detailed balance of
    these gradient drifts, the forward density started from ``y_end`` and
    read backward in time: q(y, t) = p(y, t_end - t | y_end).  Equivalently
    q is the hitting density of :func:`solve_backward` reweighted by the
    stationary density and renormalized.  Each slice integrates to one.

    This is the endpoint factor the pathway extraction multiplies against
    the forward surface from the start state.
    """
    reversed_ = solve_forward(drift, eps, grid, times, y_end,
                              rannacher_steps=rannacher_steps)
    values = reversed_.values[::-1].copy()
    values.setflags(write=False)
    return DensitySurface(grid=grid, times=times, values=values,
                          kind="conditioned", source=y_end,
                          clamped_nodes=reversed_.clamped_nodes,
                          clamp_violations=reversed_.clamp_violations,
                          min_pre_clamp=reversed_.min_pre_clamp)


def stationary_density(drift, eps, grid: SpatialGrid) -> np.ndarray:
    """Normalized Boltzmann density exp(-2 V(y) / eps^2) on the grid.

    Closed-form invariant density of the gradient SDE; the exponent is
    shifted by its maximum before exponentiation so wide grids cannot
    overflow.
    """
    eps = _as_noise(eps)
    exponent = -2.0 * np.asarray(drift.potential(grid.nodes), dtype=float) / eps.epsilon**2
    exponent -= exponent.max()
    w = np.exp(exponent)
    total = mass(w, grid)
    if not (total > 0.0 and math.isfinite(total)):
        raise SolverError("stationary density normalization failed "
                          "(grid too wide for this noise level)")
    return w / total


def hitting_probability(drift, eps, grid: SpatialGrid, y_start: float,
                        t_start: float, t_end: float, n_steps: int,
                        target_center: float, window: float) -> float:
    """P(Y(t_end) in [target_center +- window] | Y(t_start) = y_start).

    This is the backward-equation solution with a window indicator as
    terminal condition, evaluated at (y_start, t_start).  Because the
    discrete backward propagator is the exact transpose of the forward one,
    it equals a single forward solve from y_start integrated over the window,
    which is how it is computed; edge cells enter with their covered
    fraction.
    """
    if window <= 0.0:
        raise GridError(f"window must be positive, got {window}")
    times = TimeGrid(t_start, t_end, n_steps)
    surface = solve_forward(drift, eps, grid, times, y_start)
    final = surface.values[-1]

    lo = target_center - window
    hi = target_center + window
    left = np.clip(grid.faces[:-1], lo, hi)
    right = np.clip(grid.faces[1:], lo, hi)
    coverage = (right - left) / grid.spacing
    return float(grid.spacing * (coverage * final).sum())
