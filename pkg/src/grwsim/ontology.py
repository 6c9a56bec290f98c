"""Primitive-ontology extraction from trajectories.

Three views of the same collapse process:

* flashes -- one space-time point per collapse (time, center, particle);
* matter density -- mass-weighted sum of single-particle position densities,
  a nonnegative field m(x) integrating to the total mass;
* weight-only view -- branch weights with nothing spatial attached, the
  point of comparison for the other two.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dynamics import BranchSystems, TrajectoryRecord
from .errors import ConfigError, NumericsError
from .state import BranchState, GridWaveFunction, Region, branch_weights, marginal_density

MASS_TOL = 1e-9
COVERAGE_TOL = 1e-6


@dataclass(frozen=True)
class Flash:
    """One collapse event in space-time."""

    time: float
    position: float
    particle: int


def flashes_of(trajectory: TrajectoryRecord) -> list[Flash]:
    """One flash per collapse event, order-preserving, same time and center."""
    return [Flash(e.time, e.center, e.particle) for e in trajectory.events]


@dataclass
class MatterDensityField:
    """Mass density m(x) on a uniform 1-D grid at one instant."""

    grid: np.ndarray  # cell centers
    values: np.ndarray  # mass per length, >= 0
    dx: float
    time: float
    masses: np.ndarray

    @property
    def total_mass(self) -> float:
        return float(self.values.sum() * self.dx)


def equal_masses(num_particles: int) -> np.ndarray:
    """Default mass assignment: equal shares of a unit total."""
    return np.full(num_particles, 1.0 / num_particles)


def _uniform_spacing(grid: np.ndarray) -> float:
    if grid.size < 2:
        raise ConfigError("density grid needs at least 2 points")
    steps = np.diff(grid)
    dx = float(steps[0])
    if not np.allclose(steps, dx, rtol=1e-9, atol=0.0):
        raise ConfigError("density grid must be uniformly spaced")
    return dx


def _rasterize_branches(
    state: BranchState, masses: np.ndarray, grid: np.ndarray, dx: float, values: np.ndarray
) -> float:
    """Add each branch anchor as a single-cell spike; returns mass dropped off-grid."""
    lost = 0.0
    w = state.weights
    for i in range(state.num_branches):
        for k in range(state.num_particles):
            a = state.anchors[i, k]
            idx = int(np.round((a - grid[0]) / dx))
            if 0 <= idx < grid.size and abs(a - grid[idx]) <= 0.5 * dx + 1e-12:
                values[idx] += w[i] * masses[k] / dx
            else:
                lost += w[i] * masses[k]
    return lost


def matter_density(
    state: GridWaveFunction | BranchState | BranchSystems,
    masses: Sequence[float] | None = None,
    grid: np.ndarray | None = None,
    time: float = 0.0,
) -> MatterDensityField:
    """Mass-weighted density: m(x) = sum_k m_k * (position density of particle k).

    Branch anchors rasterize as single-cell spikes; grid states use their own
    marginals (and their own grid).  Rejects a grid that captures less than
    1 - 1e-6 of the total mass.
    """
    n = (
        state.spec.num_particles
        if isinstance(state, GridWaveFunction)
        else state.num_particles
    )
    m = equal_masses(n) if masses is None else np.asarray(masses, dtype=float)
    if m.size != n:
        raise ConfigError(f"got {m.size} masses for {n} particles")
    if np.any(m <= 0):
        raise ConfigError("masses must be positive")

    if isinstance(state, GridWaveFunction):
        if grid is not None and not np.array_equal(grid, state.spec.points()):
            raise ConfigError("grid states emit density on their own grid; pass grid=None")
        grid = state.spec.points()
        dx = state.spec.dx
        values = np.zeros_like(grid)
        for k in range(n):
            values += m[k] * marginal_density(state, k)
    else:
        if grid is None:
            raise ConfigError("branch states need an explicit density grid")
        grid = np.asarray(grid, dtype=float)
        dx = _uniform_spacing(grid)
        values = np.zeros_like(grid)
        systems = state.systems if isinstance(state, BranchSystems) else [state]
        offset = 0
        for s in systems:
            _rasterize_branches(s, m[offset : offset + s.num_particles], grid, dx, values)
            offset += s.num_particles

    field = MatterDensityField(grid=grid, values=values, dx=dx, time=time, masses=m)
    if field.total_mass < (1.0 - COVERAGE_TOL) * m.sum():
        raise NumericsError(
            f"density grid covers only {field.total_mass:.9g} of total mass {m.sum():.9g}"
        )
    return field


def mass_fraction_in_region(field: MatterDensityField, region: Region) -> float:
    """Fraction of the total mass whose cells lie inside the region."""
    total = field.total_mass
    if total <= 0:
        raise NumericsError("matter density has zero total mass")
    inside = (field.grid >= region.lower) & (field.grid <= region.upper)
    return float(field.values[inside].sum() * field.dx / total)


def flash_fraction_in_region(
    flashes: Iterable[Flash],
    region: Region,
    window: tuple[float, float] | None = None,
    particles: Iterable[int] | None = None,
) -> tuple[float, int]:
    """(fraction of matching flashes inside the region, match count).

    The window is half-open: t0 < time <= t1.  An empty match set returns
    (nan, 0) so callers can tell "no facts" apart from "all outside".
    """
    if window is not None and not window[0] < window[1]:
        raise ConfigError(f"window needs t0 < t1, got {window}")
    wanted = None if particles is None else set(particles)
    count = 0
    inside = 0
    for f in flashes:
        if window is not None and not (window[0] < f.time <= window[1]):
            continue
        if wanted is not None and f.particle not in wanted:
            continue
        count += 1
        if region.contains(f.position):
            inside += 1
    if count == 0:
        return float("nan"), 0
    return inside / count, count


def default_window(num_particles: int, lambda_eff: float, expected_flashes: float = 100.0) -> float:
    """Window length holding the given expected number of flashes."""
    return expected_flashes / (num_particles * lambda_eff)


def grw0_view(state: BranchState | BranchSystems):
    """Branch weights only -- deliberately nothing spatial to point at."""
    if isinstance(state, BranchSystems):
        return [branch_weights(s) for s in state.systems]
    return branch_weights(state)
