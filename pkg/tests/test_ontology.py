import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grwsim import (
    BranchState,
    ConfigError,
    Flash,
    GridSpec,
    GrwParams,
    NumericsError,
    Packet,
    Region,
    RngStream,
    branch_weights,
    equal_masses,
    flash_fraction_in_region,
    flashes_of,
    grw0_view,
    make_grid_wavefunction,
    marginal_density,
    mass_fraction_in_region,
    matter_density,
    run_trajectory,
)
from grwsim.dynamics import BranchSystems
from grwsim.ontology import default_window


def _grid(lo=-40.0, hi=50.0, n=2048):
    step = (hi - lo) / n
    return lo + (np.arange(n) + 0.5) * step


def _marble(c1=0.9, a_out=30.0):
    return BranchState.from_weights(("in", "out"), (c1, 1.0 - c1), [[0.0], [a_out]])


class TestFlashes:
    def test_empty_trajectory(self):
        rec = run_trajectory(_marble(), GrwParams(total_time=1e-9), RngStream(0, 0))
        assert rec.num_events == 0
        assert flashes_of(rec) == []

    def test_bijection_with_events(self):
        rec = run_trajectory(_marble(), GrwParams(total_time=30.0), RngStream(3, 1))
        fl = flashes_of(rec)
        assert len(fl) == rec.num_events
        for f, e in zip(fl, rec.events):
            assert f.time == e.time and f.position == e.center and f.particle == e.particle

    def test_poisson_concentration(self):
        # Poisson(100) concentrates: |count - 100| <= 40 in at least 95 of 100 seeds
        params = GrwParams(total_time=100.0)
        hits = 0
        for i in range(100):
            count = run_trajectory(_marble(), params, RngStream(400, i)).num_events
            hits += abs(count - 100) <= 40
        assert hits >= 95


class TestMatterDensity:
    def test_single_particle_equals_marginal(self):
        spec = GridSpec(-25.6, 25.6, 512, 1)
        psi = make_grid_wavefunction(spec, [Packet((0.0,), 1.0, 1.0)])
        field = matter_density(psi, masses=[1.0])
        assert np.allclose(field.values, marginal_density(psi, 0), atol=1e-14)
        assert field.total_mass == pytest.approx(1.0, abs=1e-9)

    def test_branch_rasterization_masses(self):
        # rasterization-sum oracle: weight lands in the anchor's cell
        field = matter_density(_marble(0.9), grid=_grid())
        near_in = Region(-1.0, 1.0)
        near_out = Region(29.0, 31.0)
        assert abs(mass_fraction_in_region(field, near_in) - 0.9) < 1e-9
        assert abs(mass_fraction_in_region(field, near_out) - 0.1) < 1e-9
        assert field.values.min() >= 0.0

    def test_mass_additivity_two_particles(self):
        spec = GridSpec(-25.6, 25.6, 256, 2)
        psi = make_grid_wavefunction(spec, [Packet((-5.0, 5.0), 1.0, 1.0)])
        field = matter_density(psi, masses=[1.0, 2.0])
        assert field.total_mass == pytest.approx(3.0, abs=1e-9)

    def test_equal_masses_default(self):
        systems = BranchSystems([_marble(), _marble()])
        field = matter_density(systems, grid=_grid())
        assert np.allclose(field.masses, equal_masses(2))
        assert field.total_mass == pytest.approx(1.0, abs=1e-9)

    def test_uncovered_grid_rejected(self):
        narrow = _grid(lo=-5.0, hi=5.0, n=128)  # misses the out-anchor at 30
        with pytest.raises(NumericsError):
            matter_density(_marble(), grid=narrow)

    def test_nonpositive_masses_rejected(self):
        with pytest.raises(ConfigError):
            matter_density(_marble(), masses=[0.0], grid=_grid())


class TestMassFraction:
    def test_full_grid_fraction_is_one(self):
        field = matter_density(_marble(), grid=_grid())
        assert mass_fraction_in_region(field, Region(-40.0, 50.0)) == pytest.approx(1.0)

    def test_tail_fact_branch_model(self):
        # the matter-density reading of the marble state: exactly |c2|^2 outside
        c2 = 0.1
        field = matter_density(_marble(1.0 - c2), grid=_grid())
        box = Region(-10.0, 10.0)
        outside = 1.0 - mass_fraction_in_region(field, box)
        assert abs(outside - c2) < 1e-9

    def test_measure_zero_region(self):
        grid = _grid()
        field = matter_density(_marble(), grid=grid)
        # a sliver between cell centers holds no cells, hence no mass
        sliver = Region(grid[3] + 1e-6, grid[4] - 1e-6)
        assert mass_fraction_in_region(field, sliver) == 0.0


class TestFlashFraction:
    def test_all_inside(self):
        flashes = [Flash(0.1 * i, 0.0, 0) for i in range(1, 8)]
        frac, count = flash_fraction_in_region(flashes, Region(-1.0, 1.0))
        assert (frac, count) == (1.0, 7)

    def test_counting(self):
        flashes = [Flash(0.1, 0.0, 0), Flash(0.2, 0.5, 0), Flash(0.3, 9.0, 0), Flash(0.4, 0.1, 0)]
        frac, count = flash_fraction_in_region(flashes, Region(-1.0, 1.0))
        assert count == 4
        assert frac == pytest.approx(0.75)

    def test_empty_window_undefined(self):
        flashes = [Flash(5.0, 0.0, 0)]
        frac, count = flash_fraction_in_region(flashes, Region(-1.0, 1.0), window=(0.0, 1.0))
        assert count == 0 and math.isnan(frac)

    def test_window_is_half_open(self):
        flashes = [Flash(1.0, 0.0, 0), Flash(2.0, 0.0, 0)]
        _, count = flash_fraction_in_region(flashes, Region(-1.0, 1.0), window=(1.0, 2.0))
        assert count == 1  # t0 excluded, t1 included

    def test_particle_filter(self):
        flashes = [Flash(0.1, 0.0, 0), Flash(0.2, 0.0, 1), Flash(0.3, 0.0, 1)]
        _, count = flash_fraction_in_region(flashes, Region(-1.0, 1.0), particles=[1])
        assert count == 2

    def test_bad_window_rejected(self):
        with pytest.raises(ConfigError):
            flash_fraction_in_region([], Region(-1.0, 1.0), window=(2.0, 1.0))

    def test_engine_window_fraction_matches_oracle(self):
        # frequency of >99%-inside windows vs the packaged flash-sequence oracle
        from grwsim.oracles import find_flash_reference, load_reference_values

        reference = load_reference_values()
        entry = find_flash_reference(
            reference, (0.99, 0.01), (0.0, 30.0), 1.0, 100, Region(-10.0, 10.0), 0.99
        )
        assert entry is not None
        params = GrwParams(total_time=200.0)
        box = Region(-10.0, 10.0)
        n = 1000
        inside_windows = 0
        for i in range(n):
            rec = run_trajectory(_marble(0.99), params, RngStream(4000, i))
            first = flashes_of(rec)[:100]
            frac, count = flash_fraction_in_region(first, box)
            assert count == 100
            inside_windows += frac >= 0.99
        p_star = entry["p_inside"]
        se = math.sqrt(p_star * (1.0 - p_star) / n + entry["se_inside"] ** 2)
        assert abs(inside_windows / n - p_star) < 4.0 * se


class TestGrw0View:
    def test_matches_branch_weights(self):
        state = _marble(0.8)
        assert grw0_view(state) == branch_weights(state)

    def test_systems_view(self):
        systems = BranchSystems([_marble(0.8), _marble(0.8)])
        view = grw0_view(systems)
        assert len(view) == 2
        assert view[0] == branch_weights(systems.systems[0])


def test_default_window_expected_flashes():
    assert default_window(1, 1.0) == pytest.approx(100.0)
    assert default_window(5, 2.0) == pytest.approx(10.0)
    assert default_window(1, 1.0, expected_flashes=7.0) == pytest.approx(7.0)


@given(
    n_flashes=st.integers(min_value=0, max_value=40),
    t0=st.floats(min_value=0.0, max_value=5.0),
    widen=st.floats(min_value=0.0, max_value=5.0),
)
@settings(max_examples=60, deadline=None)
def test_window_monotonicity(n_flashes, t0, widen):
    rng = np.random.default_rng(n_flashes * 1000 + 17)
    flashes = [
        Flash(float(rng.uniform(0.0, 10.0)), float(rng.normal()), 0)
        for _ in range(n_flashes)
    ]
    box = Region(-1.0, 1.0)
    t1 = t0 + 1.0
    _, small = flash_fraction_in_region(flashes, box, window=(t0, t1))
    _, large = flash_fraction_in_region(flashes, box, window=(t0 - widen, t1 + widen))
    assert large >= small
