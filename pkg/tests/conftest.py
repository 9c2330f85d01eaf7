import numpy as np
import pytest


def random_hurwitz(rng, n, margin=0.5):
    """Random dense Hurwitz matrix: random matrix shifted left of the axis."""
    m = rng.standard_normal((n, n))
    shift = max(np.max(np.linalg.eigvals(m).real), 0.0) + margin
    return m - shift * np.eye(n)


def random_stable_system(rng, n, m=1, p=1, margin=0.5):
    from retrokit.numlin import StateSpace

    return StateSpace(
        random_hurwitz(rng, n, margin),
        rng.standard_normal((n, m)),
        rng.standard_normal((p, n)),
    )


def random_stable_plant(rng, n1, n2, m1=1, p1=None, q1=1, r1=1, coupling=0.3):
    """Random stable interconnection split as (sub, env); retries until the
    assembled block matrix is Hurwitz."""
    from retrokit.sysmodel import LinearEnvironment, LinearSubsystem, assemble_preexisting

    if p1 is None:
        p1 = n1
    for _ in range(200):
        a1 = random_hurwitz(rng, n1, margin=0.7)
        a2 = random_hurwitz(rng, n2, margin=0.7)
        l1 = rng.standard_normal((n1, q1))
        l2 = coupling * rng.standard_normal((n2, r1))
        g1 = rng.standard_normal((r1, n1))
        g2 = coupling * rng.standard_normal((q1, n2))
        b1 = rng.standard_normal((n1, m1))
        c1 = np.eye(n1) if p1 == n1 else rng.standard_normal((p1, n1))
        sub = LinearSubsystem(a1, b1, c1, l1)
        env = LinearEnvironment(a2, l2, g1, g2)
        a = np.block([[a1, l1 @ g2], [l2 @ g1, a2]])
        if np.max(np.linalg.eigvals(a).real) < -1e-3:
            return assemble_preexisting(sub, env)
    raise RuntimeError("failed to draw a stable interconnection")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
