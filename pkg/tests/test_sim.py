import numpy as np
import pytest
import scipy.linalg as sla

from retrokit.errors import DimensionError, DivergenceError
from retrokit.numlin import ic_response_l2
from retrokit.retrofit import design_local_lqr, synthesize_output_feedback
from retrokit.sim import (
    EventSpec,
    IntegratorConfig,
    Trajectory,
    TruncationWarning,
    integrate,
    l2_norm,
    min_pairwise_gap,
    trajectory_to_csv,
)
from retrokit.sysmodel import assemble_closed_loop

from conftest import random_hurwitz, random_stable_plant


class TestIntegrate:
    def test_scalar_exponential(self):
        cfg = IntegratorConfig(method="rk4", dt=1e-3, horizon=1.0)
        traj = integrate(lambda t, x: -x, [1.0], cfg)
        assert traj.times[-1] == pytest.approx(1.0)
        assert traj.states[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-9)

    def test_matches_matrix_exponential(self, rng):
        # oracle: exact linear solution via expm at a handful of grid points
        a = random_hurwitz(rng, 4)
        x0 = rng.standard_normal(4)
        cfg = IntegratorConfig(dt=1e-3, horizon=2.0)
        traj = integrate(a, x0, cfg)
        for k in (0, 500, 1000, 2000):
            want = sla.expm(a * traj.times[k]) @ x0
            assert traj.states[k] == pytest.approx(want, abs=1e-8)

    def test_event_reset_exact(self):
        cfg = IntegratorConfig(dt=1e-3, horizon=2.0)
        traj = integrate(lambda t, x: np.zeros(2), [1.0, 2.0], cfg,
                         events=[EventSpec(1.0, {1: 0.0})])
        k = int(np.argmin(np.abs(traj.times - 1.0)))
        assert traj.times[k] == pytest.approx(1.0)
        assert traj.states[k, 1] == 0.0
        assert traj.states[k - 1, 1] == 2.0
        assert traj.states[-1] == pytest.approx([1.0, 0.0])

    def test_rk4_order(self):
        # global error on xdot = -x should fall ~16x per dt halving
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            cfg = IntegratorConfig(dt=dt, horizon=1.0)
            traj = integrate(lambda t, x: -x, [1.0], cfg)
            errs.append(abs(traj.states[-1, 0] - np.exp(-1.0)))
        for e0, e1 in zip(errs[:-1], errs[1:]):
            assert e0 / e1 == pytest.approx(16.0, rel=0.1)

    def test_divergence_carries_partial(self):
        cfg = IntegratorConfig(dt=1e-2, horizon=20.0, divergence_limit=1e6)
        with pytest.raises(DivergenceError) as exc:
            integrate(lambda t, x: 2.0 * x, [1.0], cfg)
        partial = exc.value.trajectory
        assert partial is not None and partial.states.shape[0] > 10
        assert np.all(np.isfinite(partial.states))

    def test_determinism(self, rng):
        a = random_hurwitz(rng, 3)
        x0 = rng.standard_normal(3)
        cfg = IntegratorConfig(dt=1e-3, horizon=1.0)
        t1 = integrate(a, x0, cfg)
        t2 = integrate(a, x0, cfg)
        assert np.array_equal(t1.states, t2.states)
        assert np.array_equal(t1.times, t2.times)

    def test_rk45_matches_rk4(self, rng):
        a = random_hurwitz(rng, 3)
        x0 = rng.standard_normal(3)
        r4 = integrate(a, x0, IntegratorConfig(dt=1e-3, horizon=2.0))
        r45 = integrate(a, x0, IntegratorConfig(method="rk45", dt=1e-2, horizon=2.0,
                                                rtol=1e-10, atol=1e-12))
        for k, t in enumerate(r45.times):
            j = int(np.argmin(np.abs(r4.times - t)))
            assert r45.states[k] == pytest.approx(r4.states[j], abs=1e-6)

    def test_rk45_event(self):
        cfg = IntegratorConfig(method="rk45", dt=1e-2, horizon=2.0)
        traj = integrate(lambda t, x: np.zeros(1), [5.0], cfg,
                         events=[EventSpec(0.5, {0: 1.0})])
        k = int(np.argmin(np.abs(traj.times - 0.5)))
        assert traj.states[k, 0] == 1.0 and traj.states[-1, 0] == 1.0

    def test_closed_loop_augmented_equals_cosimulation(self, rng):
        # augmented-matrix integration vs composite component fields
        for _ in range(5):
            plant = random_stable_plant(rng, 2, 3)
            k1, _ = design_local_lqr(plant.sub, np.eye(2), np.eye(1))
            loop = assemble_closed_loop(plant, [synthesize_output_feedback(plant.sub, k1)])
            z0 = loop.initial_state(rng.standard_normal(5))
            cfg = IntegratorConfig(dt=1e-3, horizon=5.0)
            aug = integrate(loop.a, z0, cfg)
            co = integrate(loop.vector_field, z0, cfg)
            assert np.max(np.abs(aug.states - co.states)) <= 1e-8


class TestL2Norm:
    def test_zero(self):
        traj = Trajectory(np.linspace(0, 1, 11), np.zeros((11, 2)), np.zeros((11, 0)),
                          ["a", "b"])
        assert l2_norm(traj, [0, 1]) == 0.0

    def test_exponential_analytic(self):
        cfg = IntegratorConfig(dt=1e-3, horizon=20.0)
        traj = integrate(lambda t, x: -x, [1.0], cfg)
        assert l2_norm(traj, [0]) == pytest.approx(0.7071067811865475, abs=1e-4)

    def test_matches_gramian(self, rng):
        # oracle: Lyapunov-based infinite-horizon value
        a = random_hurwitz(rng, 4, margin=1.0)
        c = rng.standard_normal((2, 4))
        x0 = rng.standard_normal(4)
        horizon = 10.0 / abs(np.max(np.linalg.eigvals(a).real))
        traj = integrate(a, x0, IntegratorConfig(dt=1e-3, horizon=horizon))
        sel = traj.states @ c.T
        quad = np.sqrt(np.trapezoid(np.sum(sel ** 2, axis=1), traj.times))
        want = ic_response_l2(a, c, x0)
        assert quad == pytest.approx(want, rel=1e-3)

    def test_truncation_warning(self):
        ts = np.linspace(0, 1, 101)
        states = np.ones((101, 1))
        traj = Trajectory(ts, states, np.zeros((101, 0)), ["x"])
        with pytest.warns(TruncationWarning):
            l2_norm(traj, [0])

    def test_empty_selector_rejected(self):
        traj = Trajectory(np.linspace(0, 1, 3), np.zeros((3, 1)), np.zeros((3, 0)), ["x"])
        with pytest.raises(ValueError):
            l2_norm(traj, [])


class TestMinPairwiseGap:
    def test_constant_spacing(self):
        ts = np.linspace(0, 1, 5)
        pos = np.tile(np.array([0.0, 2.7, 5.4]), (5, 1))
        traj = Trajectory(ts, pos, np.zeros((5, 0)), ["p1", "p2", "p3"])
        assert min_pairwise_gap(traj, [0, 1, 2]) == pytest.approx(2.7)

    def test_crossing_negative(self):
        ts = np.linspace(0, 1, 11)
        p1 = np.zeros(11)
        p2 = 1.0 - 2.0 * ts
        traj = Trajectory(ts, np.column_stack([p1, p2]), np.zeros((11, 0)), ["p1", "p2"])
        assert min_pairwise_gap(traj, [0, 1]) < 0

    def test_needs_two(self):
        traj = Trajectory(np.linspace(0, 1, 3), np.zeros((3, 1)), np.zeros((3, 0)), ["p"])
        with pytest.raises(DimensionError):
            min_pairwise_gap(traj, [0])


class TestCsv:
    def test_round_trip_17_digits(self, rng, tmp_path):
        a = random_hurwitz(rng, 2)
        traj = integrate(a, rng.standard_normal(2), IntegratorConfig(dt=0.1, horizon=0.5))
        path = tmp_path / "traj.csv"
        trajectory_to_csv(traj, path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,x[0],x[1]"
        back = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        assert np.array_equal(back[:, 0], traj.times)
        assert np.array_equal(back[:, 1:], traj.states)
