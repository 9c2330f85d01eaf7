"""Hierarchical state-space expansion and oblique-projection construction.

The expansion rewrites a stable interconnection as a cascade: an upstream
copy of the isolated subsystem driven by the external input, and a
downstream copy of the full plant driven by the upstream state. The original
state is recovered by superposition,

    x1 = xi1 + p1 @ xihat1,    x2 = xi2,

provided the identity holds at the initial time. The parameterized variant
projects the upstream model onto an nhat-dimensional subspace through a
left-invertible p1 whose image contains im b1; choosing ker p1dag to contain
im l1 removes the interconnection signal from the compensator realization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, ProjectionError
from .numlin import StateSpace, as_matrix, balanced_truncation, is_hurwitz
from .sysmodel import LinearEnvironment, LinearSubsystem, NonlinearEnvironment, PreexistingSystem

__all__ = [
    "ProjectionPair",
    "identity_projection",
    "oblique_projector",
    "admissible_projection",
    "HierarchicalRealization",
    "expand",
    "expand_parameterized",
    "expand_nonlinear",
    "downstream_transfer",
]

_ALGEBRA_TOL = 1e-10


@dataclass(frozen=True)
class ProjectionPair:
    """Left-invertible p1 with left inverse p1dag and the complementary pair.

    Validated at construction: p1dag p1 = I, the resolution of identity
    p1 p1dag + p1bar p1bardag = I, and idempotence of p1 p1dag, all to 1e-10.
    """

    p1: np.ndarray
    p1dag: np.ndarray
    p1bar: np.ndarray
    p1bardag: np.ndarray

    def __post_init__(self):
        p1 = as_matrix(self.p1, "p1")
        p1dag = as_matrix(self.p1dag, "p1dag")
        n1, nhat = p1.shape
        p1bar = np.asarray(self.p1bar, dtype=float).reshape(n1, n1 - nhat)
        p1bardag = np.asarray(self.p1bardag, dtype=float).reshape(n1 - nhat, n1)
        if p1dag.shape != (nhat, n1):
            raise DimensionError("p1dag shape must be the transpose of p1's")
        if np.max(np.abs(p1dag @ p1 - np.eye(nhat))) > _ALGEBRA_TOL:
            raise ProjectionError("p1dag is not a left inverse of p1")
        h = p1 @ p1dag
        res = h + p1bar @ p1bardag - np.eye(n1)
        if np.max(np.abs(res)) > _ALGEBRA_TOL:
            raise ProjectionError("complementary pair violates the resolution of identity")
        if np.max(np.abs(h @ h - h)) > _ALGEBRA_TOL:
            raise ProjectionError("p1 p1dag is not idempotent")
        object.__setattr__(self, "p1", p1)
        object.__setattr__(self, "p1dag", p1dag)
        object.__setattr__(self, "p1bar", p1bar)
        object.__setattr__(self, "p1bardag", p1bardag)

    @property
    def n1(self):
        return self.p1.shape[0]

    @property
    def nhat(self):
        return self.p1.shape[1]

    @property
    def image_projector(self):
        return self.p1 @ self.p1dag

    @property
    def complement_projector(self):
        return self.p1bar @ self.p1bardag

    @classmethod
    def complete(cls, p1, p1dag):
        """Build the complementary pair from I - p1 p1dag by orthogonal factoring."""
        p1 = as_matrix(p1, "p1")
        p1dag = as_matrix(p1dag, "p1dag")
        n1, nhat = p1.shape
        hbar = np.eye(n1) - p1 @ p1dag
        if nhat == n1:
            return cls(p1, p1dag, np.zeros((n1, 0)), np.zeros((0, n1)))
        u, s, _ = np.linalg.svd(hbar)
        p1bar = u[:, : n1 - nhat]
        return cls(p1, p1dag, p1bar, p1bar.T @ hbar)


def identity_projection(n1) -> ProjectionPair:
    """The trivial pair (identity image, empty complement)."""
    return ProjectionPair(np.eye(n1), np.eye(n1), np.zeros((n1, 0)), np.zeros((0, n1)))


def oblique_projector(v1, v2, cond_limit=1e12):
    """Projector onto im v1 along ker v2', realized as v1 (v2' v1)^-1 v2'."""
    v1 = as_matrix(v1, "v1")
    v2 = as_matrix(v2, "v2")
    if v1.shape != v2.shape:
        raise DimensionError("v1 and v2 must have identical shapes")
    m = v2.T @ v1
    sv = np.linalg.svd(m, compute_uv=False)
    if sv.size == 0 or sv[-1] == 0.0 or sv[0] / sv[-1] > cond_limit:
        raise ProjectionError("v2' v1 is singular or ill conditioned; "
                              "the subspaces are not complementary")
    return v1 @ np.linalg.solve(m, v2.T)


def _rank(m, rtol=1e-9):
    if m.size == 0:
        return 0
    sv = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(sv > rtol * sv[0])) if sv[0] > 0 else 0


def _orth(m, rank):
    u, _, _ = np.linalg.svd(m, full_matrices=True)
    return u[:, :rank]


def _null_basis(m, rank):
    # orthonormal basis of the orthogonal complement of im m
    u, _, _ = np.linalg.svd(m, full_matrices=True)
    return u[:, rank:]


def admissible_projection(sub: LinearSubsystem, nhat, method="orthogonal", seed=None,
                          cond_limit=1e12) -> ProjectionPair:
    """Construct a pair with im b1 inside im p1 and im l1 inside ker p1dag.

    Such a pair exists iff im b1 and im l1 only meet at the origin, and the
    reduced dimension must satisfy rank b1 <= nhat <= n1 - rank l1.

    ``orthogonal`` (default) completes an orthonormalized im b1 with
    directions orthogonal to both port images; ``balanced`` completes it with
    the dominant balanced directions of the isolated subsystem and then fixes
    the left inverse through the oblique pairing so that p1dag l1 = 0.
    A seed randomizes the orthogonal completion inside its admissible
    subspace (deterministic default otherwise).
    """
    b1, l1, a1 = sub.b1, sub.l1, sub.a1
    n1 = sub.n1
    rb, rl = _rank(b1), _rank(l1)
    if _rank(np.hstack([b1, l1])) < rb + rl:
        raise ProjectionError("im b1 and im l1 overlap; no admissible projection exists")
    if not (rb <= nhat <= n1 - rl):
        raise DimensionError(
            f"nhat must lie in [rank b1, n1 - rank l1] = [{rb}, {n1 - rl}], got {nhat}")

    qb = _orth(b1, rb)
    if method == "orthogonal":
        comp = _null_basis(np.hstack([b1, l1]), rb + rl)
        if seed is not None:
            rot = np.linalg.qr(np.random.default_rng(seed).standard_normal(
                (comp.shape[1], comp.shape[1])))[0]
            comp = comp @ rot
        v1 = np.hstack([qb, comp[:, : nhat - rb]])
    elif method == "balanced":
        if not is_hurwitz(a1):
            raise ProjectionError("balanced method needs a Hurwitz isolated a1")
        t1 = balanced_truncation(StateSpace(a1, b1, sub.c1), min(nhat, n1)).t1
        q, r = np.linalg.qr(np.hstack([qb, t1]))
        keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, abs(r[0, 0]))
        v1 = q[:, keep][:, :nhat]
        if v1.shape[1] < nhat:
            # balanced directions did not span enough; pad orthogonally
            pad = _null_basis(np.hstack([v1, l1]), _rank(np.hstack([v1, l1])))
            v1 = np.hstack([v1, pad[:, : nhat - v1.shape[1]]])
    else:
        raise ValueError(f"unknown method {method!r}")

    # left inverse with rows orthogonal to im l1: p1dag = (v2' v1)^-1 v2'
    # with v2 drawn from the complement of im l1 (kernel condition, exact)
    nbasis = _null_basis(l1, rl)
    m = nbasis.T @ v1
    u, sv, _ = np.linalg.svd(m)
    if sv.size < nhat or sv[-1] == 0.0 or sv[0] / sv[-1] > cond_limit:
        raise ProjectionError(
            "requested image is too close to im l1; complementarity pairing ill conditioned")
    v2 = nbasis @ u[:, :nhat]
    p1dag = np.linalg.solve(v2.T @ v1, v2.T)
    return ProjectionPair.complete(v1, p1dag)


@dataclass(frozen=True)
class HierarchicalRealization:
    """Cascade realization: upstream isolated model plus downstream propagation.

    ``upstream`` is (p1dag a1 p1, p1dag b1); ``downstream`` has the full plant
    matrix driven by ``drive @ p1`` applied to the upstream state, where
    ``drive`` stacks the complement feedback p1bar p1bardag a1 over l2 gamma1.
    For a nonlinear environment the downstream is a vector field and the
    ``downstream``/``drive`` matrices are None.
    """

    parent: PreexistingSystem
    projection: ProjectionPair
    upstream: StateSpace
    downstream: Optional[StateSpace]
    drive: Optional[np.ndarray]

    @property
    def nhat(self):
        return self.projection.nhat

    @property
    def dim(self):
        return self.nhat + self.parent.dim

    def initial_state(self, delta0, zeta0=None, x2_0=None):
        """Cascade initial state consistent with the recovery identity.

        zeta0 (the compensator seed) defaults to zero, which minimizes the
        closed-loop performance bound.
        """
        n1, n2 = self.parent.n1, self.parent.n2
        d0 = np.asarray(delta0, dtype=float).reshape(n1)
        z0 = np.zeros(n1) if zeta0 is None else np.asarray(zeta0, dtype=float).reshape(n1)
        x20 = np.zeros(n2) if x2_0 is None else np.asarray(x2_0, dtype=float).reshape(n2)
        pr = self.projection
        xihat0 = pr.p1dag @ (d0 - z0)
        xi1_0 = pr.complement_projector @ d0 + pr.image_projector @ z0
        return np.concatenate([xihat0, xi1_0, x20])

    def recombine(self, z):
        """Recover (x1, x2) from a cascade state [xihat1; xi1; xi2]."""
        n1 = self.parent.n1
        z = np.asarray(z, dtype=float)
        xihat, xi1, xi2 = z[: self.nhat], z[self.nhat: self.nhat + n1], z[self.nhat + n1:]
        return xi1 + self.projection.p1 @ xihat, xi2

    def cascade_linear(self):
        """Augmented (M, B) over [xihat1; xi1; xi2] driven by the external input."""
        if self.downstream is None:
            raise ValueError("nonlinear realization has no linear cascade form")
        nhat, n = self.nhat, self.parent.dim
        m = np.zeros((nhat + n, nhat + n))
        m[:nhat, :nhat] = self.upstream.a
        m[nhat:, :nhat] = self.downstream.b
        m[nhat:, nhat:] = self.downstream.a
        b = np.zeros((nhat + n, self.upstream.m))
        b[:nhat] = self.upstream.b
        return m, b

    def cascade_field(self, u=None):
        """Composite cascade vector field (nonlinear environments included)."""
        parent, pr = self.parent, self.projection
        sub = parent.sub
        n1, nhat = parent.n1, pr.nhat
        up_a, up_b = self.upstream.a, self.upstream.b
        comp = pr.complement_projector
        resid = parent.residual

        def f(t, z):
            xihat = z[:nhat]
            xi1 = z[nhat: nhat + n1]
            xi2 = z[nhat + n1:]
            x1 = xi1 + pr.p1 @ xihat
            if isinstance(parent.env, LinearEnvironment):
                gamma2 = parent.env.gamma2 @ xi2
                dxi2 = parent.env.a2 @ xi2 + parent.env.l2 @ (parent.env.gamma1 @ x1)
            else:
                gamma2 = np.asarray(parent.env.h2(xi2, x1), dtype=float)
                dxi2 = np.asarray(parent.env.f2(xi2, x1), dtype=float)
            dxihat = up_a @ xihat
            dxi1 = sub.a1 @ xi1 + comp @ (sub.a1 @ (pr.p1 @ xihat)) + sub.l1 @ gamma2
            if resid is not None:
                r = resid.f1(x1)
                dxihat = dxihat + pr.p1dag @ r
                dxi1 = dxi1 + comp @ r
            if u is not None:
                dxihat = dxihat + up_b @ np.atleast_1d(u(t))
            return np.concatenate([dxihat, dxi1, dxi2])

        return f


def _build_linear_realization(plant, proj):
    sub, env = plant.sub, plant.env
    upstream = StateSpace(proj.p1dag @ sub.a1 @ proj.p1, proj.p1dag @ sub.b1,
                          np.eye(proj.nhat))
    drive = np.vstack([proj.complement_projector @ sub.a1, env.l2 @ env.gamma1])
    downstream = StateSpace(plant.a, drive @ proj.p1, np.eye(plant.dim))
    return HierarchicalRealization(plant, proj, upstream, downstream, drive)


def expand(plant: PreexistingSystem) -> HierarchicalRealization:
    """Plain hierarchical expansion (identity projection, linear environment)."""
    if not isinstance(plant.env, LinearEnvironment):
        raise TypeError("plant environment is nonlinear; use expand_nonlinear")
    return _build_linear_realization(plant, identity_projection(plant.n1))


def expand_parameterized(plant: PreexistingSystem, proj: ProjectionPair) -> HierarchicalRealization:
    """Projected expansion; requires im b1 contained in im p1."""
    if not isinstance(plant.env, LinearEnvironment):
        raise TypeError("plant environment is nonlinear; use expand_nonlinear")
    if proj.n1 != plant.n1:
        raise DimensionError("projection row dimension does not match n1")
    b1 = plant.sub.b1
    gap = np.max(np.abs(b1 - proj.image_projector @ b1)) if b1.size else 0.0
    if gap > 1e-8 * (1.0 + np.max(np.abs(b1), initial=0.0)):
        raise ProjectionError("im b1 is not contained in im p1; expansion identity fails")
    return _build_linear_realization(plant, proj)


def expand_nonlinear(plant: PreexistingSystem, proj: Optional[ProjectionPair] = None):
    """Expansion for a nonlinear environment (plain unless a projection is given).

    The downstream evaluates the environment maps at the recombined state, so
    the recovery identity holds exactly under consistent initialization; the
    realization only supports the composite ``cascade_field`` path.
    """
    if not isinstance(plant.env, NonlinearEnvironment):
        raise TypeError("plant environment is linear; use expand or expand_parameterized")
    proj = identity_projection(plant.n1) if proj is None else proj
    b1 = plant.sub.b1
    gap = np.max(np.abs(b1 - proj.image_projector @ b1)) if b1.size else 0.0
    if gap > 1e-8 * (1.0 + np.max(np.abs(b1), initial=0.0)):
        raise ProjectionError("im b1 is not contained in im p1; expansion identity fails")
    upstream = StateSpace(proj.p1dag @ plant.sub.a1 @ proj.p1, proj.p1dag @ plant.sub.b1,
                          np.eye(proj.nhat))
    return HierarchicalRealization(plant, proj, upstream, None, None)


def downstream_transfer(real: HierarchicalRealization, which) -> StateSpace:
    """Transfer from the projected upstream state (p1 xihat1) to xi_1 or xi_2."""
    if real.downstream is None:
        raise TypeError("downstream transfer is undefined for a nonlinear environment")
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    plant = real.parent
    sel = plant.sub_embedding.T if which == 1 else plant.env_embedding.T
    return StateSpace(plant.a, real.drive, sel)
