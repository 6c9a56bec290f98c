"""The GRW stochastic jump process.

Between jumps the state evolves unitarily (identity for H=0, spectral
propagation for free particles).  Jumps arrive as a Poisson process with
total rate ``N * lambda_eff``; each jump picks a particle uniformly at
random, draws a collapse center X from the operator-completeness density
``p(X) = ||L_{k,X} psi||^2``, and applies the collapse.

The collapse operator multiplies the wavefunction along the chosen
coordinate by ``g(u) = (pi sigma^2)^(-1/4) exp(-u^2 / (2 sigma^2))`` with
``u = x_k - X``.  With this convention ``g^2`` is a normalized Gaussian of
variance ``sigma^2 / 2``, so ``int p(X) dX = 1`` exactly and the expected
branch weights are conserved event by event (the Born martingale).

For point-anchored branches the same rule reduces to the closed form
``w_i' proportional to w_i * exp(-(a_ik - X)^2 / sigma^2)``, applied here in
log space.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import ConfigError, NumericsError, ZeroProbabilityCollapseError
from .state import BranchState, GridWaveFunction, marginal_density

_INV_SQRT2 = 1.0 / math.sqrt(2.0)

# Collapse norms at or below this are treated as zero-probability events.
UNDERFLOW_FLOOR = 1e-150

# g^2 is truncated at this many sigmas when tabulated on a grid.
_KERNEL_REACH = 9.0


@dataclass(frozen=True)
class Hamiltonian:
    """Between-jump generator: 'zero' (default) or 'free' with a per-particle mass."""

    kind: str = "zero"
    mass: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "free"):
            raise ConfigError(f"unknown hamiltonian kind {self.kind!r}")
        if self.mass <= 0:
            raise ConfigError("particle mass must be positive")


ZERO_HAMILTONIAN = Hamiltonian("zero")


@dataclass(frozen=True)
class GrwParams:
    """Dimensionless process parameters; sigma is the length unit's anchor."""

    lambda_eff: float = 1.0
    sigma: float = 1.0
    total_time: float = 10.0
    hamiltonian: Hamiltonian = ZERO_HAMILTONIAN

    def __post_init__(self) -> None:
        if self.lambda_eff <= 0:
            raise ConfigError("lambda_eff must be positive")
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.total_time <= 0:
            raise ConfigError("total_time must be positive")


@dataclass(frozen=True)
class RngStream:
    """Reproducible substream: (seed, stream) -> identical draws on every run."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.stream,)))


@dataclass(frozen=True)
class CollapseEvent:
    """One collapse: when, which particle, where, and the weight change.

    For branch models the weight fields hold the affected system's branch
    weights; for the grid model they hold (marginal mean, marginal std) of
    the collapsed particle.
    """

    time: float
    particle: int
    center: float
    pre_weights: tuple
    post_weights: tuple


@dataclass(frozen=True)
class Snapshot:
    time: float
    weights: tuple | None = None
    summary: tuple | None = None


@dataclass
class BranchSystems:
    """Non-interacting branch systems sharing one collapse clock.

    Global particle indices run over the systems in order; with one particle
    per system the particle index is the system index.
    """

    systems: list[BranchState]

    @property
    def num_particles(self) -> int:
        return sum(s.num_particles for s in self.systems)

    def locate(self, particle: int) -> tuple[int, int]:
        offset = 0
        for i, s in enumerate(self.systems):
            if particle < offset + s.num_particles:
                return i, particle - offset
            offset += s.num_particles
        raise ConfigError(f"particle index {particle} out of range for N={self.num_particles}")

    def copy(self) -> "BranchSystems":
        return BranchSystems([s.copy() for s in self.systems])


TrajectoryState = Union[GridWaveFunction, BranchState, BranchSystems]


@dataclass
class TrajectoryRecord:
    """Full event log of one run."""

    params: GrwParams
    stream: RngStream
    num_particles: int
    events: list[CollapseEvent]
    snapshots: list[Snapshot]
    initial_state: TrajectoryState
    final_state: TrajectoryState
    status: str = "completed"  # "completed" | "aborted"
    diagnostic: str | None = None

    @property
    def num_events(self) -> int:
        return len(self.events)


def num_particles_of(state: TrajectoryState) -> int:
    if isinstance(state, GridWaveFunction):
        return state.spec.num_particles
    return state.num_particles


def sample_waiting_time(num_particles: int, lambda_eff: float, rng: np.random.Generator) -> float:
    """Exponential waiting time with mean 1 / (N * lambda_eff)."""
    if num_particles < 1:
        raise ConfigError("num_particles must be >= 1")
    return float(rng.exponential(1.0 / (num_particles * lambda_eff)))


def _g_squared_kernel(dx: float, sigma: float) -> tuple[np.ndarray, int]:
    half = int(np.ceil(_KERNEL_REACH * sigma / dx))
    u = np.arange(-half, half + 1) * dx
    return np.exp(-(u**2) / sigma**2) / np.sqrt(np.pi * sigma**2), half


def collapse_center_density(psi: GridWaveFunction, particle: int, sigma: float) -> np.ndarray:
    """Density of the collapse center on the grid: marginal convolved with g^2.

    Nonnegative by construction; integrates to 1 (operator completeness) as
    long as the state keeps ~9 sigma of clearance from the domain edges.
    """
    marg = marginal_density(psi, particle)
    kernel, half = _g_squared_kernel(psi.spec.dx, sigma)
    full = np.convolve(marg * psi.spec.dx, kernel, mode="full")
    return full[half : half + psi.spec.points_per_axis]


def apply_collapse_grid(
    psi: GridWaveFunction, particle: int, center: float, sigma: float
) -> GridWaveFunction:
    """Multiply by g(x_k - center) along the particle's axis and renormalize."""
    n = psi.spec.num_particles
    if not 0 <= particle < n:
        raise ConfigError(f"particle index {particle} out of range for N={n}")
    x = psi.spec.points()
    g = (np.pi * sigma**2) ** (-0.25) * np.exp(-((x - center) ** 2) / (2.0 * sigma**2))
    shape = [1] * n
    shape[particle] = -1
    new_amps = psi.amplitudes * g.reshape(shape)
    norm = np.sqrt(np.sum(np.abs(new_amps) ** 2) * psi.cell_volume)
    if norm <= UNDERFLOW_FLOOR:
        raise ZeroProbabilityCollapseError(
            f"collapse at X={center} has norm {norm:.3e} (zero-probability collapse)"
        )
    return GridWaveFunction(psi.spec, new_amps / norm, psi.cell_volume)


def branch_collapse_update(
    state: BranchState,
    particle: int,
    center: float,
    sigma: float,
    *,
    check_separation: bool = True,
) -> BranchState:
    """Closed-form posterior for point anchors: w_i' ~ w_i exp(-(a_ik - X)^2 / sigma^2).

    Computed in log space, so any finite number of updates leaves every
    initially positive weight positive.  Zero weights are absorbing.
    """
    if not 0 <= particle < state.num_particles:
        raise ConfigError(
            f"particle index {particle} out of range for N={state.num_particles}"
        )
    if not np.isfinite(center):
        raise NumericsError(f"collapse center {center} is not finite")
    if check_separation:
        sep = state.separation()
        if sep < 10.0 * sigma:
            warnings.warn(
                f"branch separation {sep:.3g} < 10 sigma; point-anchor update "
                "is a poor approximation in this regime",
                stacklevel=2,
            )
    # plain-float arithmetic: this is the per-event hot path and the branch
    # counts are tiny, where numpy's call overhead dominates
    inv = 1.0 / (sigma * sigma)
    new_log = [
        lw - (a - center) * (a - center) * inv
        for lw, a in zip(state.log_weights.tolist(), state.anchors[:, particle].tolist())
    ]
    peak = max(new_log)
    if not math.isfinite(peak):
        raise ZeroProbabilityCollapseError(
            "all branch posterior factors underflowed simultaneously"
        )
    total = peak + math.log(sum(math.exp(v - peak) for v in new_log))
    return BranchState(state.labels, np.array([v - total for v in new_log]), state.anchors)


def _sample_center_branch(
    state: BranchState, particle: int, sigma: float, rng: np.random.Generator
) -> float:
    weights = [math.exp(v) for v in state.log_weights.tolist()]
    u = rng.random() * sum(weights)
    idx = len(weights) - 1
    acc = 0.0
    for j, w in enumerate(weights):
        acc += w
        if u <= acc:
            idx = j
            break
    return float(rng.normal(state.anchors[idx, particle], sigma * _INV_SQRT2))


def sample_collapse_center(
    state: TrajectoryState, particle: int, sigma: float, rng: np.random.Generator
) -> float:
    """Draw X with density ||L_{k,X} psi||^2.

    Grid model: inverse CDF over the discretized density (the sample is a
    grid cell center, exact with respect to the grid measure).  Branch
    model: the Gaussian mixture sum_i w_i Normal(a_ik, sigma^2 / 2).
    """
    if isinstance(state, GridWaveFunction):
        density = collapse_center_density(state, particle, sigma)
        cdf = np.cumsum(density) * state.spec.dx
        u = rng.random() * cdf[-1]
        idx = min(int(np.searchsorted(cdf, u)), density.size - 1)
        return float(state.spec.points()[idx])
    if isinstance(state, BranchSystems):
        sys_idx, local = state.locate(particle)
        return _sample_center_branch(state.systems[sys_idx], local, sigma, rng)
    return _sample_center_branch(state, particle, sigma, rng)


def evolve_unitary(psi: GridWaveFunction, dt: float, hamiltonian: Hamiltonian) -> GridWaveFunction:
    """Unitary step between jumps; identity for H=0, spectral for free particles.

    Free evolution uses periodic boundaries, so states must stay away from
    the domain edges over the simulated times.
    """
    if dt < 0:
        raise ConfigError("dt must be nonnegative")
    if dt == 0 or hamiltonian.kind == "zero":
        return psi
    spec = psi.spec
    k = 2.0 * np.pi * np.fft.fftfreq(spec.points_per_axis, d=spec.dx)
    phase_1d = np.exp(-1j * k**2 * dt / (2.0 * hamiltonian.mass))
    amps_k = np.fft.fftn(psi.amplitudes)
    for axis in range(spec.num_particles):
        shape = [1] * spec.num_particles
        shape[axis] = -1
        amps_k = amps_k * phase_1d.reshape(shape)
    return GridWaveFunction(spec, np.fft.ifftn(amps_k), psi.cell_volume)


def _apply_collapse(
    state: TrajectoryState, particle: int, center: float, sigma: float
) -> TrajectoryState:
    if isinstance(state, GridWaveFunction):
        return apply_collapse_grid(state, particle, center, sigma)
    if isinstance(state, BranchSystems):
        sys_idx, local = state.locate(particle)
        systems = list(state.systems)
        systems[sys_idx] = branch_collapse_update(
            systems[sys_idx], local, center, sigma, check_separation=False
        )
        return BranchSystems(systems)
    return branch_collapse_update(state, particle, center, sigma, check_separation=False)


def _grid_summary(psi: GridWaveFunction, particle: int) -> tuple[float, float]:
    marg = marginal_density(psi, particle)
    x = psi.spec.points()
    mass = marg.sum() * psi.spec.dx
    mean = float((marg * x).sum() * psi.spec.dx / mass)
    var = float((marg * (x - mean) ** 2).sum() * psi.spec.dx / mass)
    return mean, float(np.sqrt(max(var, 0.0)))


def _event_weights(state: TrajectoryState, particle: int) -> tuple:
    if isinstance(state, GridWaveFunction):
        return _grid_summary(state, particle)
    if isinstance(state, BranchSystems):
        sys_idx, _ = state.locate(particle)
        state = state.systems[sys_idx]
    return tuple(math.exp(v) for v in state.log_weights.tolist())


def _snapshot_of(state: TrajectoryState, t: float) -> Snapshot:
    if isinstance(state, GridWaveFunction):
        summ = tuple(_grid_summary(state, p) for p in range(state.spec.num_particles))
        return Snapshot(t, weights=None, summary=summ)
    if isinstance(state, BranchSystems):
        return Snapshot(t, weights=tuple(tuple(map(float, s.weights)) for s in state.systems))
    return Snapshot(t, weights=tuple(float(w) for w in state.weights))


def run_trajectory(
    initial_state: TrajectoryState,
    params: GrwParams,
    stream: RngStream,
    snapshot_times: Sequence[float] = (),
) -> TrajectoryRecord:
    """Run one full GRW trajectory up to params.total_time.

    Interleaves exponential waiting times (rate N * lambda_eff), uniform
    particle selection, collapse-center sampling, collapse application and
    unitary evolution.  Every collapse is logged as a CollapseEvent; the
    state is additionally recorded at each requested snapshot time.
    Deterministic given the RngStream.  Numerical failures abort the
    trajectory with a diagnostic instead of silently continuing.
    """
    if params.hamiltonian.kind != "zero" and not isinstance(initial_state, GridWaveFunction):
        raise ConfigError("free-particle evolution requires the grid model")
    rng = stream.generator()
    state: TrajectoryState = initial_state.copy()
    n = num_particles_of(state)
    sigma = params.sigma

    if isinstance(state, BranchState):
        _warn_if_close(state, sigma)
    elif isinstance(state, BranchSystems):
        for s in state.systems:
            _warn_if_close(s, sigma)

    pending = sorted(float(s) for s in snapshot_times)
    snaps: list[Snapshot] = []
    events: list[CollapseEvent] = []
    status, diagnostic = "completed", None

    def advance(st: TrajectoryState, t_from: float, t_to: float) -> TrajectoryState:
        # records any snapshots in (t_from, t_to] along the way
        while pending and t_from < pending[0] <= t_to:
            s = pending.pop(0)
            if isinstance(st, GridWaveFunction):
                st = evolve_unitary(st, s - t_from, params.hamiltonian)
            t_from = s
            snaps.append(_snapshot_of(st, s))
        if isinstance(st, GridWaveFunction):
            st = evolve_unitary(st, t_to - t_from, params.hamiltonian)
        return st

    if pending and pending[0] <= 0.0:
        # time-zero snapshots are always available
        while pending and pending[0] <= 0.0:
            snaps.append(_snapshot_of(state, pending.pop(0)))

    t = 0.0
    while True:
        wait = sample_waiting_time(n, params.lambda_eff, rng)
        t_next = t + wait
        if t_next > params.total_time:
            state = advance(state, t, params.total_time)
            break
        state = advance(state, t, t_next)
        particle = int(rng.integers(n))
        center = sample_collapse_center(state, particle, sigma, rng)
        pre = _event_weights(state, particle)
        try:
            state = _apply_collapse(state, particle, center, sigma)
        except NumericsError as exc:
            status = "aborted"
            diagnostic = f"event {len(events)} at t={t_next:.6g}: {exc}"
            break
        events.append(CollapseEvent(t_next, particle, center, pre, _event_weights(state, particle)))
        t = t_next

    return TrajectoryRecord(
        params=params,
        stream=stream,
        num_particles=n,
        events=events,
        snapshots=snaps,
        initial_state=initial_state,
        final_state=state,
        status=status,
        diagnostic=diagnostic,
    )


def replay_state_at(
    initial_state: TrajectoryState,
    params: GrwParams,
    events: Sequence[CollapseEvent],
    t: float,
) -> TrajectoryState:
    """Reconstruct the state at time t from the initial state and an event log.

    Collapse centers are logged exactly, so the replay reproduces the
    trajectory's state bit-for-bit without any random draws.
    """
    state = initial_state.copy()
    t_prev = 0.0
    for e in events:
        if e.time > t:
            break
        if isinstance(state, GridWaveFunction):
            state = evolve_unitary(state, e.time - t_prev, params.hamiltonian)
        state = _apply_collapse(state, e.particle, e.center, params.sigma)
        t_prev = e.time
    if isinstance(state, GridWaveFunction):
        state = evolve_unitary(state, t - t_prev, params.hamiltonian)
    return state


def _warn_if_close(state: BranchState, sigma: float) -> None:
    sep = state.separation()
    if sep < 10.0 * sigma:
        warnings.warn(
            f"branch separation {sep:.3g} < 10 sigma; analytic branch updates "
            "are unreliable for this state",
            stacklevel=3,
        )
