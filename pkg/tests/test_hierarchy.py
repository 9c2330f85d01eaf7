import numpy as np
import pytest

from retrokit.errors import DimensionError, ProjectionError
from retrokit.hierarchy import (
    ProjectionPair,
    admissible_projection,
    downstream_transfer,
    expand,
    expand_nonlinear,
    expand_parameterized,
    identity_projection,
    oblique_projector,
)
from retrokit.numlin import hinf_norm, StateSpace
from retrokit.sysmodel import (
    LinearEnvironment,
    LinearSubsystem,
    NonlinearEnvironment,
    assemble_preexisting,
)

from conftest import random_hurwitz, random_stable_plant


def band_limited_input(rng, m=1, n_modes=6, w_max=3.0):
    freqs = rng.uniform(0.1, w_max, (n_modes, m))
    amps = rng.standard_normal((n_modes, m))
    phases = rng.uniform(0, 2 * np.pi, (n_modes, m))

    def u(t):
        return np.sum(amps * np.sin(freqs * t + phases), axis=0)

    return u


def rk4_path(f, z0, dt, horizon):
    steps = int(round(horizon / dt))
    z = np.asarray(z0, dtype=float).copy()
    out = np.empty((steps + 1, z.size))
    out[0] = z
    t = 0.0
    for k in range(steps):
        k1 = f(t, z)
        k2 = f(t + dt / 2, z + dt / 2 * k1)
        k3 = f(t + dt / 2, z + dt / 2 * k2)
        k4 = f(t + dt, z + dt * k3)
        z = z + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        out[k + 1] = z
    return out


def recovery_error(plant, real, rng, delta0=None, dt=1e-3, horizon=10.0, u=None):
    """Co-simulate original plant and cascade; largest recovery defect."""
    n1, n2 = plant.n1, plant.n2
    if delta0 is None:
        delta0 = rng.standard_normal(n1)
    if u is None:
        u = band_limited_input(rng, plant.sub.m1)
    binj = np.vstack([plant.sub.b1, np.zeros((n2, plant.sub.m1))])

    def f(t, w):
        x, z = w[: n1 + n2], w[n1 + n2:]
        dx = plant.vector_field(x, binj @ u(t))
        dz = real.cascade_field(u)(t, z)
        return np.concatenate([dx, dz])

    x0 = np.concatenate([delta0, np.zeros(n2)])
    w0 = np.concatenate([x0, real.initial_state(delta0)])
    path = rk4_path(f, w0, dt, horizon)
    err = 0.0
    for w in path[:: max(1, path.shape[0] // 200)]:
        x1, x2 = w[:n1], w[n1: n1 + n2]
        r1, r2 = real.recombine(w[n1 + n2:])
        err = max(err, np.max(np.abs(x1 - r1)), np.max(np.abs(x2 - r2)))
    return err


class TestProjectionPair:
    def test_identity(self):
        pr = identity_projection(3)
        assert pr.nhat == 3 and pr.p1bar.shape == (3, 0)
        assert pr.image_projector == pytest.approx(np.eye(3))

    def test_algebra_enforced(self, rng):
        p1 = rng.standard_normal((4, 2))
        with pytest.raises(ProjectionError):
            ProjectionPair(p1, np.zeros((2, 4)), np.zeros((4, 2)), np.zeros((2, 4)))

    def test_complete(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        p1 = q[:, :2]
        pr = ProjectionPair.complete(p1, p1.T)
        assert pr.p1dag @ pr.p1 == pytest.approx(np.eye(2), abs=1e-12)
        assert pr.image_projector + pr.complement_projector == pytest.approx(
            np.eye(5), abs=1e-12)


class TestObliqueProjector:
    def test_orthogonal_special_case(self):
        e1 = np.array([[1.0], [0.0]])
        assert oblique_projector(e1, e1) == pytest.approx(np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_hand_checkable(self):
        v1 = np.array([[1.0], [1.0]])
        v2 = np.array([[1.0], [0.0]])
        h = oblique_projector(v1, v2)
        assert h == pytest.approx(np.array([[1.0, 0.0], [1.0, 0.0]]))
        assert h @ h == pytest.approx(h)

    def test_random_idempotent_rank(self, rng):
        v1 = rng.standard_normal((6, 3))
        v2 = rng.standard_normal((6, 3))
        h = oblique_projector(v1, v2)
        assert np.max(np.abs(h @ h - h)) <= 1e-10
        assert np.linalg.matrix_rank(h) == 3

    def test_singular_pairing_rejected(self):
        v1 = np.array([[1.0], [0.0]])
        v2 = np.array([[0.0], [1.0]])
        with pytest.raises(ProjectionError):
            oblique_projector(v1, v2)


class TestAdmissibleProjection:
    def test_unit_vector_ports(self):
        sub = LinearSubsystem(-np.eye(3), np.eye(3)[:, :1], np.eye(3), np.eye(3)[:, 2:])
        pr = admissible_projection(sub, 2)
        assert pr.p1dag @ sub.l1 == pytest.approx(np.zeros((2, 1)), abs=1e-10)
        assert pr.p1dag @ pr.p1 == pytest.approx(np.eye(2), abs=1e-10)
        assert pr.image_projector @ sub.b1 == pytest.approx(sub.b1, abs=1e-10)

    def test_image_overlap_rejected(self):
        e1 = np.eye(3)[:, :1]
        sub = LinearSubsystem(-np.eye(3), e1, np.eye(3), e1)
        with pytest.raises(ProjectionError):
            admissible_projection(sub, 1)

    def test_nhat_bounds(self, rng):
        sub = LinearSubsystem(random_hurwitz(rng, 5), rng.standard_normal((5, 1)),
                              np.eye(5), rng.standard_normal((5, 2)))
        with pytest.raises(DimensionError):
            admissible_projection(sub, 4)  # above n1 - rank l1 = 3
        with pytest.raises(DimensionError):
            admissible_projection(sub, 0)
        pr = admissible_projection(sub, 3)
        assert pr.nhat == 3

    def test_all_conditions_random(self, rng):
        # acceptance-grade algebra checks on every constructed pair
        for method in ("orthogonal", "balanced"):
            for _ in range(20):
                n1 = rng.integers(3, 8)
                sub = LinearSubsystem(random_hurwitz(rng, n1),
                                      rng.standard_normal((n1, 1)), np.eye(n1),
                                      rng.standard_normal((n1, 1)))
                nhat = int(rng.integers(1, n1 - 1 + 1))
                pr = admissible_projection(sub, nhat, method=method)
                assert np.max(np.abs(pr.p1dag @ pr.p1 - np.eye(nhat))) <= 1e-10
                assert np.max(np.abs(pr.image_projector + pr.complement_projector
                                     - np.eye(n1))) <= 1e-10
                assert np.max(np.abs(pr.p1dag @ sub.l1)) <= 1e-10
                assert np.max(np.abs(pr.image_projector @ sub.b1 - sub.b1)) <= 1e-10

    def test_seeded_variation(self, rng):
        sub = LinearSubsystem(random_hurwitz(rng, 6), rng.standard_normal((6, 1)),
                              np.eye(6), rng.standard_normal((6, 1)))
        p_a = admissible_projection(sub, 3, seed=1)
        p_b = admissible_projection(sub, 3, seed=1)
        assert np.array_equal(p_a.p1, p_b.p1)


class TestExpand:
    def test_decoupled_drive_zero(self, rng):
        a1 = random_hurwitz(rng, 2)
        a2 = random_hurwitz(rng, 3)
        sub = LinearSubsystem(a1, np.eye(2)[:, :1], np.eye(2), np.eye(2)[:, 1:])
        env = LinearEnvironment(a2, np.zeros((3, 1)), np.zeros((1, 2)), np.zeros((1, 3)))
        real = expand(assemble_preexisting(sub, env))
        assert np.array_equal(real.downstream.b, np.zeros((5, 2)))
        assert np.array_equal(real.upstream.a, a1)

    def test_matrices_and_spectrum(self, rng):
        plant = random_stable_plant(rng, 3, 4)
        real = expand(plant)
        assert np.array_equal(real.upstream.a, plant.sub.a1)
        assert np.array_equal(real.upstream.b, plant.sub.b1)
        assert np.array_equal(real.downstream.a, plant.a)
        drive = np.vstack([np.zeros((3, 3)), plant.env.l2 @ plant.env.gamma1])
        assert real.downstream.b == pytest.approx(drive, abs=1e-14)

    def test_two_state_recovery(self, rng):
        sub = LinearSubsystem([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
        env = LinearEnvironment([[-2.0]], [[1.0]], [[1.0]], [[1.0]])
        plant = assemble_preexisting(sub, env)
        real = expand(plant)
        err = recovery_error(plant, real, rng, delta0=np.array([0.5]),
                             u=lambda t: np.array([np.sin(t)]))
        assert err <= 1e-6

    def test_random_recovery(self, rng):
        for _ in range(10):
            n1, n2 = int(rng.integers(1, 5)), int(rng.integers(1, 6))
            plant = random_stable_plant(rng, n1, n2)
            real = expand(plant)
            assert recovery_error(plant, real, rng, horizon=5.0) <= 1e-6


class TestExpandParameterized:
    def test_identity_matches_plain(self, rng):
        plant = random_stable_plant(rng, 3, 4)
        plain = expand(plant)
        param = expand_parameterized(plant, identity_projection(3))
        assert np.array_equal(plain.upstream.a, param.upstream.a)
        assert np.array_equal(plain.upstream.b, param.upstream.b)
        assert param.downstream.b == pytest.approx(plain.downstream.b, abs=1e-14)

    def test_recovery_with_projection(self, rng):
        for _ in range(5):
            plant = random_stable_plant(rng, 4, 3)
            nhat = 3  # n1 - rank l1
            pr = admissible_projection(plant.sub, nhat)
            real = expand_parameterized(plant, pr)
            assert recovery_error(plant, real, rng, horizon=5.0) <= 1e-6

    def test_image_violation_rejected(self, rng):
        plant = random_stable_plant(rng, 4, 3)
        q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        # orthogonal projection unlikely to contain im b1
        bad = ProjectionPair.complete(q[:, 2:], q[:, 2:].T)
        with pytest.raises(ProjectionError):
            expand_parameterized(plant, bad)

    def test_initial_condition_consistency(self, rng):
        plant = random_stable_plant(rng, 4, 3)
        pr = admissible_projection(plant.sub, 3)
        real = expand_parameterized(plant, pr)
        d0 = rng.standard_normal(4)
        z0 = real.initial_state(d0)
        assert z0[:3] == pytest.approx(pr.p1dag @ d0)
        assert z0[3:7] == pytest.approx(pr.complement_projector @ d0)
        assert z0[7:] == pytest.approx(np.zeros(3))
        x1, x2 = real.recombine(z0)
        assert x1 == pytest.approx(d0, abs=1e-12)


class TestExpandNonlinear:
    def test_wrapped_linear_consistency(self, rng):
        plant = random_stable_plant(rng, 2, 3)
        a2, l2g1, g2 = plant.env.a2, plant.env.l2 @ plant.env.gamma1, plant.env.gamma2
        nl_env = NonlinearEnvironment(3, lambda x2, x1: a2 @ x2 + l2g1 @ x1,
                                      lambda x2, x1: g2 @ x2)
        nl_plant = assemble_preexisting(plant.sub, nl_env)
        lin = expand(plant)
        non = expand_nonlinear(nl_plant)
        u = band_limited_input(rng)
        d0 = rng.standard_normal(2)
        z0 = lin.initial_state(d0)
        m, b = lin.cascade_linear()
        lin_path = rk4_path(lambda t, z: m @ z + b @ u(t), z0, 1e-3, 3.0)
        non_path = rk4_path(non.cascade_field(u), z0, 1e-3, 3.0)
        assert np.max(np.abs(lin_path - non_path)) <= 1e-8

    def test_scalar_tanh_recovery(self, rng):
        sub = LinearSubsystem([[-1.0]], [[1.0]], [[1.0]], [[1.0]])
        env = NonlinearEnvironment(1, lambda x2, x1: -x2 + x1,
                                   lambda x2, x1: np.tanh(x2))
        plant = assemble_preexisting(sub, env)
        real = expand_nonlinear(plant)
        err = recovery_error(plant, real, rng, delta0=np.array([0.8]))
        assert err <= 1e-6


class TestDownstreamTransfer:
    def test_decoupled_gives_zero(self, rng):
        a1 = random_hurwitz(rng, 2)
        a2 = random_hurwitz(rng, 3)
        sub = LinearSubsystem(a1, np.eye(2)[:, :1], np.eye(2), np.ones((2, 1)))
        env = LinearEnvironment(a2, np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((1, 3)))
        real = expand(assemble_preexisting(sub, env))
        for which in (1, 2):
            g = downstream_transfer(real, which)
            assert hinf_norm(g, tol=1e-9) <= 1e-9

    def test_identity_projection_reduces(self, rng):
        plant = random_stable_plant(rng, 3, 4)
        plain = expand(plant)
        param = expand_parameterized(plant, identity_projection(3))
        for which in (1, 2):
            ga = downstream_transfer(plain, which)
            gb = downstream_transfer(param, which)
            diff = StateSpace(ga.a, ga.b - gb.b, ga.c)
            assert hinf_norm(diff, tol=1e-9) <= 1e-8

    def test_dc_gain_oracle(self, rng):
        plant = random_stable_plant(rng, 3, 4)
        real = expand(plant)
        for which in (1, 2):
            g = downstream_transfer(real, which)
            dc = g.transfer(0.0).real
            want = g.c @ np.linalg.solve(-plant.a, real.drive)
            assert dc == pytest.approx(want, abs=1e-9)


def test_downstream_spectrum_untouched(rng):
    plant = random_stable_plant(rng, 3, 4)
    real = expand_parameterized(plant, admissible_projection(plant.sub, 2))
    got = np.sort_complex(np.linalg.eigvals(real.downstream.a))
    want = np.sort_complex(np.linalg.eigvals(plant.a))
    assert got == pytest.approx(want, abs=1e-10)
