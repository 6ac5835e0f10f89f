"""Bridge density and maximum-likelihood path extraction.

Conditioning the diffusion on both endpoints factorizes the state density
at intermediate times into a product of two one-endpoint surfaces.  The
pathway pipeline multiplies the forward density from the start state with
the endpoint-conditioned density (the forward solve from the end state read
backward in time; see :func:`thcbridge.fpe.solve_endpoint_conditioned`) and
tracks the per-slice argmax.  The abrupt transition shows up as a single
step where that argmax flips between the two metastable wells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fpe import (
    DensitySurface,
    GridError,
    SolverError,
    SpatialGrid,
    TimeGrid,
    mass,
    solve_endpoint_conditioned,
    solve_forward,
)

DEFAULT_JUMP_THRESHOLD = 0.3

# Below this slice maximum the product of the two surfaces is formed in log
# space to dodge underflow at small noise levels.
_LINEAR_FLOOR = 1e-280


class BridgeError(RuntimeError):
    """Bridge construction failed (grid mismatch or underflowed slices)."""


@dataclass(frozen=True)
class BridgeSpec:
    """Endpoint conditioning: Y(0) = y_start, Y(horizon) = y_end."""

    y_start: float = 0.2402
    y_end: float = 1.0687
    horizon: float = 10.0

    def __post_init__(self) -> None:
        if not (self.horizon > 0.0 and math.isfinite(self.horizon)):
            raise GridError(f"horizon must be positive, got {self.horizon!r}")


@dataclass(frozen=True)
class MLPath:
    """Most likely state per stored time slice."""

    times: np.ndarray
    psi: np.ndarray
    refinement: str     # "grid-argmax" or "quadratic-subgrid"


@dataclass(frozen=True)
class JumpEvent:
    """Largest single-step displacement of the path, if above threshold."""

    t_jump: float
    y_before: float
    y_after: float
    gap: float


@dataclass(frozen=True)
class SweepRecord:
    """Jump summary for one noise intensity."""

    epsilon: float
    t_jump: float | None
    gap: float | None
    converged: bool
    error: str | None = None


def _check_compatible(forward: DensitySurface, backward: DensitySurface) -> None:
    if forward.grid != backward.grid:
        raise BridgeError(f"grid mismatch: {forward.grid} vs {backward.grid}")
    if forward.times != backward.times:
        raise BridgeError(f"time grid mismatch: {forward.times} vs {backward.times}")


def _product_slices(forward: DensitySurface, backward: DensitySurface):
    """Yield (index, product slice) with the underflow-guarded product.

    Slices whose factors are too small for linear arithmetic are rebuilt
    from log values up to a positive per-slice scale, which leaves the
    argmax (and any normalized use) unchanged.
    """
    for n in range(forward.times.n_steps + 1):
        p = forward.values[n]
        g = backward.values[n]
        p_max = p.max()
        g_max = g.max()
        if p_max <= 0.0 or g_max <= 0.0:
            raise BridgeError(
                f"all-zero density slice at step {n}: the grid or noise level "
                "is too small for this horizon")
        if p_max < _LINEAR_FLOOR or g_max < _LINEAR_FLOOR:
            with np.errstate(divide="ignore"):
                log_prod = np.log(p) + np.log(g)
            peak = log_prod.max()
            slice_ = np.exp(log_prod - peak) if np.isfinite(peak) else None
        else:
            slice_ = p * g
            if slice_.max() <= 0.0:
                slice_ = None
        if slice_ is None:
            raise BridgeError(
                f"density supports do not overlap at step {n}: the noise "
                "level is too small for this horizon")
        yield n, slice_


def bridge_density(forward: DensitySurface, backward: DensitySurface,
                   normalize: bool = True) -> DensitySurface:
    """Pointwise product of the two endpoint surfaces, per slice.

    ``backward`` is the endpoint factor: the conditioned surface for
    pathways, or the raw hitting density for diagnostics.  The conditioning
    only divides the product by per-slice constants, so normalization moves
    no argmax; unnormalized output keeps the raw product.
    """
    _check_compatible(forward, backward)
    grid = forward.grid
    values = np.empty_like(forward.values)
    for n, slice_ in _product_slices(forward, backward):
        if normalize:
            m = mass(slice_, grid)
            if m <= 0.0:
                raise BridgeError(f"zero-mass bridge slice at step {n}")
            slice_ = slice_ / m
        values[n] = slice_
    values.setflags(write=False)
    return DensitySurface(grid=grid, times=forward.times, values=values,
                          kind="bridge", source=None)


def _refine_argmax(nodes: np.ndarray, values: np.ndarray, j: int,
                   spacing: float) -> float:
    """Quadratic vertex through node j and its neighbors, in log space when
    the three values are positive (exact for a locally Gaussian slice).

    The triple is normalized by the peak value first, so per-slice
    rescalings of the surface leave the vertex essentially untouched.
    Falls back to the node location at the grid edge, at a flat triple, or
    when the vertex escapes the bracketing cells.
    """
    if j == 0 or j == nodes.size - 1:
        return float(nodes[j])
    v = values[j - 1:j + 2]
    if np.all(v > 0.0):
        v = np.log(v / v[1])
    denom = v[0] - 2.0 * v[1] + v[2]
    if denom >= 0.0:
        return float(nodes[j])
    offset = 0.5 * spacing * (v[0] - v[2]) / denom
    if abs(offset) > spacing:
        return float(nodes[j])
    return float(nodes[j] + offset)


def ml_path(forward: DensitySurface, backward: DensitySurface,
            refine: bool = True) -> MLPath:
    """Per-slice argmax of the bridge product, with subgrid refinement.

    Ties take the smaller state.  The first and last entries are pinned to
    the surfaces' point-source locations, which the delta slices only
    resolve to one cell.
    """
    _check_compatible(forward, backward)
    grid = forward.grid
    nodes = grid.nodes
    psi = np.empty(forward.times.n_steps + 1)
    for n, slice_ in _product_slices(forward, backward):
        j = int(np.argmax(slice_))   # argmax returns the first (smallest-y) tie
        psi[n] = _refine_argmax(nodes, slice_, j, grid.spacing) if refine \
            else nodes[j]
    if forward.source is not None:
        psi[0] = forward.source
    if backward.source is not None:
        psi[-1] = backward.source
    psi.setflags(write=False)
    return MLPath(times=forward.times.nodes, psi=psi,
                  refinement="quadratic-subgrid" if refine else "grid-argmax")


def detect_jump(path: MLPath,
                threshold: float = DEFAULT_JUMP_THRESHOLD) -> JumpEvent | None:
    """Largest single-step displacement, reported if it exceeds ``threshold``.

    The jump time is the midpoint of the offending step.  Returns None for
    paths that never move more than the threshold in one step; that is a
    valid outcome, not an error.
    """
    if path.psi.size < 2:
        raise BridgeError("path has fewer than two samples")
    if threshold <= 0.0:
        raise BridgeError(f"threshold must be positive, got {threshold}")
    steps = np.abs(np.diff(path.psi))
    k = int(np.argmax(steps))
    if steps[k] <= threshold:
        return None
    return JumpEvent(
        t_jump=float(0.5 * (path.times[k] + path.times[k + 1])),
        y_before=float(path.psi[k]),
        y_after=float(path.psi[k + 1]),
        gap=float(steps[k]),
    )


def solve_bridge(drift, eps, spec: BridgeSpec, grid: SpatialGrid,
                 times: TimeGrid) -> tuple[DensitySurface, DensitySurface, MLPath]:
    """Forward surface, endpoint-conditioned surface and ML path.

    Returns the two density factors together with the extracted path so
    callers can dump or inspect them.
    """
    if not math.isclose(times.t_end - times.t_start, spec.horizon,
                        rel_tol=1e-12):
        raise GridError(f"time grid span {times.t_end - times.t_start} != "
                        f"bridge horizon {spec.horizon}")
    if not (grid.contains(spec.y_start) and grid.contains(spec.y_end)):
        raise GridError("bridge endpoints must lie inside the spatial grid")
    forward = solve_forward(drift, eps, grid, times, spec.y_start)
    conditioned = solve_endpoint_conditioned(drift, eps, grid, times, spec.y_end)
    return forward, conditioned, ml_path(forward, conditioned)


def sweep_noise(drift, spec: BridgeSpec, eps_list, grid: SpatialGrid,
                times: TimeGrid,
                threshold: float = DEFAULT_JUMP_THRESHOLD) -> list[SweepRecord]:
    """Jump time for each noise intensity, one full bridge solve per entry.

    Solver failures are recorded on the affected entry and do not stop the
    remaining intensities.  Records follow the input order.
    """
    eps_values = [e.epsilon if hasattr(e, "epsilon") else float(e)
                  for e in eps_list]
    if not eps_values:
        raise GridError("eps_list must not be empty")
    records: list[SweepRecord] = []
    for eps in eps_values:
        try:
            _, _, path = solve_bridge(drift, eps, spec, grid, times)
            event = detect_jump(path, threshold)
        except (SolverError, BridgeError) as exc:
            records.append(SweepRecord(epsilon=eps, t_jump=None, gap=None,
                                       converged=False,
                                       error=f"eps={eps:g}: {exc}"))
            continue
        if event is None:
            records.append(SweepRecord(epsilon=eps, t_jump=None, gap=None,
                                       converged=False))
        else:
            records.append(SweepRecord(epsilon=eps, t_jump=event.t_jump,
                                       gap=event.gap, converged=True))
    return records
