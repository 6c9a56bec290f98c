"""Runnable paradox scenarios and their classifiers.

Three scenario kinds share one mathematical skeleton (a two-branch
superposition with widely separated supports):

* ``cat``     -- a balanced-ish superposition, labels dead/alive;
* ``tail``    -- a collapsed superposition with one tiny weight, watched for
                 verdict flips (resurrection events);
* ``marbles`` -- n non-interacting copies, counted against the box.

Verdicts are read off a chosen ontology: matter density (majority of mass in
the box), flashes (fraction of windowed flashes in the box), or the
weight-only view, which by construction yields no spatial verdict at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .dynamics import (
    BranchSystems,
    GrwParams,
    TrajectoryRecord,
    TrajectoryState,
)
from .errors import ConfigError
from .ontology import (
    Flash,
    MatterDensityField,
    default_window,
    flash_fraction_in_region,
    mass_fraction_in_region,
)
from .state import BranchState, GridSpec, Packet, Region, make_grid_wavefunction


class ScenarioKind(str, Enum):
    CAT = "cat"
    TAIL = "tail"
    MARBLES = "marbles"


class Ontology(str, Enum):
    GRW0 = "grw0"
    GRWF = "grwf"
    GRWM = "grwm"


class History(str, Enum):
    COLLAPSED_PAST = "collapsed_past"
    FRESH_PREPARATION = "fresh_preparation"


class Verdict(str, Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"
    PARTIAL = "partial"
    UNDEFINED = "undefined"


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    evidence: float  # the fraction the verdict rests on; nan when undefined
    ontology: Ontology


def verdict_from_fraction(fraction: float, theta: float) -> Verdict:
    """Threshold rule shared by all ontologies.

    Inside needs fraction >= theta AND fraction > 1 - theta (the second
    clause bites only at theta = 0.5, where an exact half is Partial);
    Outside is the mirror image; anything else is Partial.
    """
    if math.isnan(fraction):
        return Verdict.UNDEFINED
    if fraction >= theta and fraction > 1.0 - theta:
        return Verdict.INSIDE
    if fraction <= 1.0 - theta and fraction < theta:
        return Verdict.OUTSIDE
    return Verdict.PARTIAL


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to build and run one scenario."""

    kind: ScenarioKind = ScenarioKind.CAT
    c1_sq: float = 0.9
    n_marbles: int = 1
    box: Region = Region(-10.0, 10.0)
    ontology: Ontology = Ontology.GRWM
    history: History = History.FRESH_PREPARATION
    params: GrwParams = GrwParams()
    theta_m: float = 0.5
    theta_f: float = 0.99
    window: float | None = None  # time width; None derives ~100 expected flashes
    window_flashes: int | None = None  # when set, windows are "last/first k flashes"
    backend: str = "branch"  # "branch" | "grid"
    inside_anchor: float | None = None  # default: box midpoint
    outside_anchor: float | None = None  # default: box.upper + 20 sigma
    packet_width: float | None = None  # grid backend; default sigma / 2
    grid_points: int = 512
    x_min: float | None = None
    x_max: float | None = None
    snapshot_times: tuple[float, ...] = ()
    density_times: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 < self.c1_sq < 1.0:
            raise ConfigError(f"c1_sq must lie strictly between 0 and 1, got {self.c1_sq}")
        if self.n_marbles < 1:
            raise ConfigError("n_marbles must be >= 1")
        if self.kind is not ScenarioKind.MARBLES and self.n_marbles != 1:
            raise ConfigError(f"{self.kind.value} scenarios are single-system; set n_marbles = 1")
        if not 0.0 < self.theta_m < 1.0:
            raise ConfigError("theta_m must lie in (0, 1)")
        if not 0.5 < self.theta_f <= 1.0:
            raise ConfigError("theta_f must lie in (0.5, 1]")
        if self.backend not in ("branch", "grid"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "grid" and self.n_marbles > 1:
            raise ConfigError("the grid backend supports a single system; marbles need branch")
        if self.window is not None and self.window <= 0:
            raise ConfigError("window must be positive")
        if self.window_flashes is not None and self.window_flashes < 1:
            raise ConfigError("window_flashes must be >= 1")

    @property
    def labels(self) -> tuple[str, str]:
        if self.kind is ScenarioKind.MARBLES:
            return ("inside", "outside")
        return ("dead", "alive")

    @property
    def num_particles(self) -> int:
        return self.n_marbles

    def anchor_positions(self) -> tuple[float, float]:
        sigma = self.params.sigma
        a_in = self.inside_anchor
        if a_in is None:
            a_in = 0.5 * (self.box.lower + self.box.upper)
        a_out = self.outside_anchor
        if a_out is None:
            a_out = self.box.upper + 20.0 * sigma
        if not self.box.contains(a_in):
            raise ConfigError(f"inside anchor {a_in} is not inside the box")
        if self.box.contains(a_out):
            raise ConfigError(f"outside anchor {a_out} lies inside the box")
        return float(a_in), float(a_out)

    def window_length(self) -> float:
        if self.window is not None:
            return self.window
        return default_window(self.num_particles, self.params.lambda_eff)


@dataclass
class Scenario:
    """A built scenario: initial state, any pre-run flash history, run plan."""

    config: ScenarioConfig
    initial_state: TrajectoryState
    prehistory: list[Flash]
    plan: tuple[str, ...]


def scenario_plan(config: ScenarioConfig) -> tuple[str, ...]:
    """Which ensemble statistics a scenario reports by default."""
    plan = ["event_count", "poisson_chi2"]
    if config.backend == "branch":
        plan += ["martingale_final", "selection_frequency"]
        if config.kind is ScenarioKind.MARBLES and config.ontology is not Ontology.GRW0:
            plan += ["census_inside_mean", "census_all_inside", "census_chi2"]
        # a verdict flip needs a definite initial verdict: matter density always
        # has one, flashes only when a collapsed past supplies a pre-window record
        if config.kind is ScenarioKind.TAIL and (
            config.ontology is Ontology.GRWM
            or (
                config.ontology is Ontology.GRWF
                and config.history is History.COLLAPSED_PAST
            )
        ):
            plan += ["resurrection_rate"]
        if (
            config.ontology is Ontology.GRWF
            and config.history is History.FRESH_PREPARATION
            and config.window_flashes is not None
        ):
            plan += ["grwf_inside_rate"]
    return tuple(plan)


def _seed_prehistory(config: ScenarioConfig, rng: np.random.Generator) -> list[Flash]:
    """Flashes before t=0, all consistent with the in-box branch.

    One Poisson batch per particle over the window preceding the start;
    positions are drawn from the in-box branch's center law, rejection
    sampled into the box so the construction is inside by definition.
    """
    a_in, _ = config.anchor_positions()
    sigma = config.params.sigma
    window = config.window_length()
    flashes: list[Flash] = []
    for particle in range(config.num_particles):
        count = int(rng.poisson(config.params.lambda_eff * window))
        times = np.sort(rng.uniform(-window, 0.0, size=count))
        for t in times:
            pos = None
            for _ in range(100):
                cand = float(rng.normal(a_in, sigma / np.sqrt(2.0)))
                if config.box.contains(cand):
                    pos = cand
                    break
            if pos is None:
                pos = a_in
            flashes.append(Flash(float(t), pos, particle))
    flashes.sort(key=lambda f: f.time)
    return flashes


def build_scenario(config: ScenarioConfig, rng: np.random.Generator | None = None) -> Scenario:
    """Initial state(s) plus run plan for a scenario config.

    CollapsedPast histories come with a pre-window flash record consistent
    with the in-box branch; fresh preparations start with no flashes at all.
    """
    a_in, a_out = config.anchor_positions()
    weights = (config.c1_sq, 1.0 - config.c1_sq)
    state: TrajectoryState
    if config.backend == "grid":
        sigma = config.params.sigma
        width = config.packet_width if config.packet_width is not None else 0.5 * sigma
        lo = config.x_min if config.x_min is not None else min(a_in, config.box.lower) - 15.0 * sigma
        hi = config.x_max if config.x_max is not None else max(a_out, config.box.upper) + 15.0 * sigma
        spec = GridSpec(lo, hi, config.grid_points, 1)
        state = make_grid_wavefunction(
            spec,
            [
                Packet((a_in,), width, np.sqrt(weights[0])),
                Packet((a_out,), width, np.sqrt(weights[1])),
            ],
        )
    else:
        systems = [
            BranchState.from_weights(config.labels, weights, [[a_in], [a_out]])
            for _ in range(config.n_marbles)
        ]
        state = systems[0] if config.kind is not ScenarioKind.MARBLES else BranchSystems(systems)

    prehistory: list[Flash] = []
    if config.history is History.COLLAPSED_PAST:
        if rng is None:
            rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(2**48,)))
        prehistory = _seed_prehistory(config, rng)
    return Scenario(config, state, prehistory, scenario_plan(config))


# ---------------------------------------------------------------------------
# classification

def classify_grwm(field: MatterDensityField, box: Region, theta_m: float = 0.5) -> Classification:
    """Verdict from the fraction of matter inside the box."""
    if field.total_mass <= 0.0:
        return Classification(Verdict.UNDEFINED, float("nan"), Ontology.GRWM)
    frac = mass_fraction_in_region(field, box)
    return Classification(verdict_from_fraction(frac, theta_m), frac, Ontology.GRWM)


def classify_grwf(
    flashes: Iterable[Flash],
    box: Region,
    window: tuple[float, float] | None = None,
    theta_f: float = 0.99,
    particles: Iterable[int] | None = None,
) -> Classification:
    """Verdict from the windowed flash fraction; no flashes means no fact."""
    frac, count = flash_fraction_in_region(flashes, box, window, particles)
    if count == 0:
        return Classification(Verdict.UNDEFINED, float("nan"), Ontology.GRWF)
    return Classification(verdict_from_fraction(frac, theta_f), frac, Ontology.GRWF)


def branch_box_fraction(state: BranchState, box: Region, masses: Sequence[float] | None = None) -> float:
    """Mass fraction in the box for point anchors, without rasterizing.

    Equals mass_fraction_in_region over a covering grid: each branch puts
    weight w_i on its anchors, mass-averaged over particles.
    """
    m = np.full(state.num_particles, 1.0 / state.num_particles) if masses is None else np.asarray(masses, float)
    m = m / m.sum()
    inside = (state.anchors >= box.lower) & (state.anchors <= box.upper)
    return float(np.sum(state.weights[:, None] * inside * m[None, :]))


def classify_branch_grwm(state: BranchState, box: Region, theta_m: float = 0.5) -> Classification:
    frac = branch_box_fraction(state, box)
    return Classification(verdict_from_fraction(frac, theta_m), frac, Ontology.GRWM)


# ---------------------------------------------------------------------------
# trajectory-level analysis

def _system_events(trajectory: TrajectoryRecord, system: int):
    state = trajectory.initial_state
    if isinstance(state, BranchSystems):
        return [e for e in trajectory.events if state.locate(e.particle)[0] == system]
    return list(trajectory.events)


def _initial_system(trajectory: TrajectoryRecord, system: int) -> BranchState:
    state = trajectory.initial_state
    if isinstance(state, BranchSystems):
        return state.systems[system]
    if isinstance(state, BranchState):
        return state
    raise ConfigError("branch-weight reconstruction needs a branch-model trajectory")


def branch_weights_at(trajectory: TrajectoryRecord, t: float, system: int = 0) -> np.ndarray:
    """Branch weights of one system at time t (H=0: piecewise constant)."""
    weights = np.asarray(_initial_system(trajectory, system).weights, dtype=float)
    for event in _system_events(trajectory, system):
        if event.time > t:
            break
        weights = np.asarray(event.post_weights, dtype=float)
    return weights


def grwm_trajectory_classifier(
    config: ScenarioConfig, system: int = 0
) -> Callable[[TrajectoryRecord, float], Classification]:
    """Matter-density verdicts along a branch trajectory."""
    a_in, a_out = config.anchor_positions()
    anchors = np.array([[a_in], [a_out]])

    def classify(trajectory: TrajectoryRecord, t: float) -> Classification:
        w = branch_weights_at(trajectory, t, system)
        state = BranchState(config.labels, np.log(np.maximum(w, 1e-300)), anchors)
        return classify_branch_grwm(state, config.box, config.theta_m)

    return classify


def grwf_trajectory_classifier(
    config: ScenarioConfig,
    prehistory: Sequence[Flash] = (),
    system: int = 0,
) -> Callable[[TrajectoryRecord, float], Classification]:
    """Flash-window verdicts along a trajectory (time or count windows)."""

    def classify(trajectory: TrajectoryRecord, t: float) -> Classification:
        state = trajectory.initial_state
        if isinstance(state, BranchSystems):
            offsets = np.cumsum([0] + [s.num_particles for s in state.systems])
            wanted = set(range(offsets[system], offsets[system + 1]))
        else:
            wanted = None
        flashes = [Flash(e.time, e.center, e.particle) for e in trajectory.events]
        pool = [f for f in list(prehistory) + flashes if f.time <= t]
        if wanted is not None:
            pool = [f for f in pool if f.particle in wanted]
        if config.window_flashes is not None:
            pool = pool[-config.window_flashes :]
            return classify_grwf(pool, config.box, None, config.theta_f)
        w = config.window_length()
        return classify_grwf(pool, config.box, (t - w, t), config.theta_f)

    return classify


def detect_resurrection(
    trajectory: TrajectoryRecord,
    classifier: Callable[[TrajectoryRecord, float], Classification],
    sampling_times: Sequence[float],
) -> list[tuple[float, Verdict, Verdict]]:
    """All definite-verdict flips between consecutive sampled verdicts.

    Partial/Undefined samples carry no definite fact and are skipped, so a
    flip is recorded whenever the next definite verdict differs from the
    last one; the parity of the returned list tells whether the final
    definite verdict differs from the first.
    """
    if len(sampling_times) < 2:
        raise ConfigError("resurrection detection needs at least 2 sampling times")
    transitions: list[tuple[float, Verdict, Verdict]] = []
    last: Verdict | None = None
    for t in sorted(sampling_times):
        v = classifier(trajectory, t).verdict
        if v in (Verdict.INSIDE, Verdict.OUTSIDE):
            if last is not None and v != last:
                transitions.append((float(t), last, v))
            last = v
    return transitions


def density_grid(config: ScenarioConfig, points: int = 2048) -> np.ndarray:
    """Uniform cell-center grid covering box and anchors with 5-sigma margins."""
    a_in, a_out = config.anchor_positions()
    sigma = config.params.sigma
    lo = min(config.box.lower, a_in, a_out) - 5.0 * sigma
    hi = max(config.box.upper, a_in, a_out) + 5.0 * sigma
    step = (hi - lo) / points
    return lo + (np.arange(points) + 0.5) * step


def default_sampling_times(config: ScenarioConfig) -> np.ndarray:
    """One sample per expected collapse, plus the endpoint."""
    step = 1.0 / (config.num_particles * config.params.lambda_eff)
    times = np.arange(0.0, config.params.total_time + 0.5 * step, step)
    if times[-1] < config.params.total_time:
        times = np.append(times, config.params.total_time)
    return times


def marble_census(
    systems: Sequence[BranchState] | BranchSystems,
    classifier: Callable[[BranchState], Classification],
) -> dict[Verdict, int]:
    """Verdict counts over same-config marbles; counts sum to n."""
    if isinstance(systems, BranchSystems):
        systems = systems.systems
    if not systems:
        raise ConfigError("census needs at least one marble")
    first = systems[0]
    for s in systems[1:]:
        if s.labels != first.labels or s.anchors.shape != first.anchors.shape or not np.allclose(
            s.anchors, first.anchors
        ):
            raise ConfigError("census rejects mixed marble configurations")
    counts = {v: 0 for v in Verdict}
    for s in systems:
        counts[classifier(s).verdict] += 1
    return counts
