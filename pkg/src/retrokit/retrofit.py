"""Retrofit controller synthesis and closed-loop performance bounds.

Three controller forms are provided, each a feedback law wrapped around a
compensator that reconstructs the environment-induced component of the
subsystem state so the feedback only ever sees the isolated-model component:

* output feedback: compensator driven by the measured interconnection
  signal, u = k1 (y1 - c1 xhat1);
* observer based: the same compensator feeding an observer, u = f1 zeta1;
* projected state feedback: an nhat-dimensional compensator whose left
  inverse annihilates the interconnection port, so no interconnection
  measurement is needed (full state feedback required instead).

Synthesis consumes only the subsystem model. Bound computation needs the
full plant and therefore lives behind ``performance_bounds``, which the
design path never calls; this keeps the design honest about what it may see.

Naive variants (the same local gains with the compensator removed) carry no
guarantee and exist only for benchmark contrast.

Compensator runtime states start at zero and are owned by a single
simulation run; the controller objects themselves are immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DimensionError, ProjectionError, SynthesisError
from .hierarchy import HierarchicalRealization, ProjectionPair
from .numlin import (
    StateSpace,
    as_matrix,
    hinf_norm,
    ic_response_l2,
    ic_response_l2_sup,
    is_hurwitz,
    lqr_gain,
    solve_lyapunov,
)
from .sysmodel import LinearEnvironment, LinearSubsystem, NonlinearResidual, PreexistingSystem

__all__ = [
    "RetrofitOutputFeedback",
    "RetrofitObserverBased",
    "RetrofitStateFeedback",
    "NaiveStaticFeedback",
    "NaiveObserver",
    "NaiveProjectedStateFeedback",
    "PerformanceBound",
    "design_local_lqr",
    "design_local_observer",
    "synthesize_output_feedback",
    "synthesize_observer_based",
    "synthesize_state_feedback",
    "performance_bounds",
    "controller_to_json",
    "controller_from_json",
]


@dataclass(frozen=True)
class RetrofitOutputFeedback:
    """Static local output feedback behind the full-order compensator."""

    comp_a: np.ndarray
    comp_l: np.ndarray
    c1: np.ndarray
    k1: np.ndarray

    @property
    def state_dim(self):
        return self.comp_a.shape[0]

    @property
    def input_dim(self):
        return self.k1.shape[0]

    @property
    def is_linear(self):
        return True

    def control(self, x1, xc):
        return self.k1 @ (self.c1 @ x1 - self.c1 @ xc)

    def compensator_rhs(self, x1, xc, gamma2):
        return self.comp_a @ xc + self.comp_l @ gamma2

    def linear_maps(self, s1, gamma2_map):
        kc = self.k1 @ self.c1
        return (kc @ s1, -kc, self.comp_l @ gamma2_map, self.comp_a,
                np.zeros((self.state_dim, self.input_dim)))


@dataclass(frozen=True)
class RetrofitObserverBased:
    """Observer-based local state feedback behind the full-order compensator."""

    comp_a: np.ndarray
    comp_l: np.ndarray
    b1: np.ndarray
    c1: np.ndarray
    h1: np.ndarray
    f1: np.ndarray

    @property
    def n1(self):
        return self.comp_a.shape[0]

    @property
    def state_dim(self):
        # compensator state stacked over observer state
        return 2 * self.n1

    @property
    def input_dim(self):
        return self.f1.shape[0]

    @property
    def is_linear(self):
        return True

    def control(self, x1, xc):
        return self.f1 @ xc[self.n1:]

    def compensator_rhs(self, x1, xc, gamma2):
        xhat, zeta = xc[: self.n1], xc[self.n1:]
        u = self.f1 @ zeta
        innov = self.c1 @ x1 - self.c1 @ xhat - self.c1 @ zeta
        dxhat = self.comp_a @ xhat + self.comp_l @ gamma2
        dzeta = self.comp_a @ zeta + self.b1 @ u + self.h1 @ innov
        return np.concatenate([dxhat, dzeta])

    def linear_maps(self, s1, gamma2_map):
        n1, m = self.n1, self.input_dim
        hc = self.h1 @ self.c1
        fx = np.zeros((m, s1.shape[1]))
        fc = np.hstack([np.zeros((m, n1)), self.f1])
        gx = np.vstack([self.comp_l @ gamma2_map, hc @ s1])
        gc = np.block([[self.comp_a, np.zeros((n1, n1))], [-hc, self.comp_a - hc]])
        gu = np.vstack([np.zeros((n1, m)), self.b1])
        return fx, fc, gx, gc, gu


@dataclass(frozen=True)
class RetrofitStateFeedback:
    """Projected state feedback with an nhat-dimensional compensator.

    ``comp_l`` is the compensator's interconnection coupling p1dag l1. For a
    projection satisfying the kernel condition it is exactly zero and stored
    as None: the controller then needs no interconnection measurement at all.
    An optional measurable residual hook feeds the subsystem's nonlinear
    remainder through p1dag.
    """

    proj: ProjectionPair
    a1: np.ndarray
    khat1: np.ndarray
    comp_l: Optional[np.ndarray] = None
    residual: Optional[NonlinearResidual] = None

    @property
    def state_dim(self):
        return self.proj.nhat

    @property
    def input_dim(self):
        return self.khat1.shape[0]

    @property
    def is_linear(self):
        return self.residual is None

    @property
    def needs_interconnection(self):
        return self.comp_l is not None

    def control(self, x1, xc):
        return self.khat1 @ (self.proj.p1dag @ x1 - xc)

    def compensator_rhs(self, x1, xc, gamma2):
        pr = self.proj
        dxc = pr.p1dag @ (self.a1 @ (pr.p1 @ xc)) \
            + pr.p1dag @ (self.a1 @ (pr.complement_projector @ x1))
        if self.comp_l is not None:
            dxc = dxc + self.comp_l @ gamma2
        if self.residual is not None:
            dxc = dxc + pr.p1dag @ self.residual.f1(x1)
        return dxc

    def linear_maps(self, s1, gamma2_map):
        if self.residual is not None:
            raise TypeError("controller with a residual hook has no linear realization")
        pr = self.proj
        fx = self.khat1 @ pr.p1dag @ s1
        fc = -self.khat1
        gx = pr.p1dag @ self.a1 @ pr.complement_projector @ s1
        if self.comp_l is not None:
            gx = gx + self.comp_l @ gamma2_map
        gc = pr.p1dag @ self.a1 @ pr.p1
        gu = np.zeros((self.state_dim, self.input_dim))
        return fx, fc, gx, gc, gu


@dataclass(frozen=True)
class NaiveStaticFeedback:
    """u = k1 y1 with no compensator; benchmark contrast only."""

    c1: np.ndarray
    k1: np.ndarray

    state_dim = 0
    is_linear = True

    @property
    def input_dim(self):
        return self.k1.shape[0]

    def control(self, x1, xc):
        return self.k1 @ (self.c1 @ x1)

    def compensator_rhs(self, x1, xc, gamma2):
        return np.zeros(0)

    def linear_maps(self, s1, gamma2_map):
        m, n = self.input_dim, s1.shape[1]
        return (self.k1 @ self.c1 @ s1, np.zeros((m, 0)), np.zeros((0, n)),
                np.zeros((0, 0)), np.zeros((0, m)))


@dataclass(frozen=True)
class NaiveObserver:
    """Observer-based feedback fed by the raw measurement; contrast only."""

    a1: np.ndarray
    b1: np.ndarray
    c1: np.ndarray
    h1: np.ndarray
    f1: np.ndarray

    is_linear = True

    @property
    def state_dim(self):
        return self.a1.shape[0]

    @property
    def input_dim(self):
        return self.f1.shape[0]

    def control(self, x1, xc):
        return self.f1 @ xc

    def compensator_rhs(self, x1, xc, gamma2):
        u = self.f1 @ xc
        return self.a1 @ xc + self.b1 @ u + self.h1 @ (self.c1 @ x1 - self.c1 @ xc)

    def linear_maps(self, s1, gamma2_map):
        m, n1 = self.input_dim, self.state_dim
        hc = self.h1 @ self.c1
        return (np.zeros((m, s1.shape[1])), self.f1, hc @ s1, self.a1 - hc,
                self.b1)


@dataclass(frozen=True)
class NaiveProjectedStateFeedback:
    """u = khat1 p1dag x1 with no compensator; contrast only."""

    p1dag: np.ndarray
    khat1: np.ndarray

    state_dim = 0
    is_linear = True

    @property
    def input_dim(self):
        return self.khat1.shape[0]

    def control(self, x1, xc):
        return self.khat1 @ (self.p1dag @ x1)

    def compensator_rhs(self, x1, xc, gamma2):
        return np.zeros(0)

    def linear_maps(self, s1, gamma2_map):
        m, n = self.input_dim, s1.shape[1]
        return (self.khat1 @ self.p1dag @ s1, np.zeros((m, 0)), np.zeros((0, n)),
                np.zeros((0, 0)), np.zeros((0, m)))


def design_local_lqr(sub: LinearSubsystem, q, r):
    """LQR gain for the isolated subsystem model plus its performance level.

    Returns (k, eps1) with a1 + b1 k Hurwitz and eps1 the supremum of the
    closed-loop state L2 norm over unit-norm initial conditions.
    """
    k = lqr_gain(sub.a1, sub.b1, q, r)
    eps1 = ic_response_l2_sup(sub.a1 + sub.b1 @ k, np.eye(sub.n1))
    return k, eps1


def design_local_observer(sub: LinearSubsystem, q, r, qo, ro):
    """LQR state-feedback and dual observer gains for the isolated model.

    Returns (f1, h1) with a1 + b1 f1 and a1 - h1 c1 both Hurwitz.
    """
    f1 = lqr_gain(sub.a1, sub.b1, q, r)
    try:
        kd = lqr_gain(sub.a1.T, sub.c1.T, qo, ro)
    except SynthesisError as exc:
        raise SynthesisError(f"(a1, c1) is not detectable: {exc}") from exc
    h1 = -kd.T
    return f1, h1


def synthesize_output_feedback(sub: LinearSubsystem, k1) -> RetrofitOutputFeedback:
    """Wrap a stabilizing static output gain with the localizing compensator."""
    k1 = as_matrix(k1, "k1")
    if k1.shape != (sub.m1, sub.p1):
        raise DimensionError(f"k1 must be {sub.m1} x {sub.p1}, got {k1.shape}")
    hw = is_hurwitz(sub.a1 + sub.b1 @ k1 @ sub.c1)
    if not hw:
        raise SynthesisError(
            f"a1 + b1 k1 c1 is not Hurwitz (abscissa {hw.abscissa:.3g}); "
            "the local gain must stabilize the isolated model")
    return RetrofitOutputFeedback(sub.a1, sub.l1, sub.c1, k1)


def synthesize_observer_based(sub: LinearSubsystem, f1, h1) -> RetrofitObserverBased:
    """Wrap observer-based local feedback with the localizing compensator."""
    f1 = as_matrix(f1, "f1")
    h1 = as_matrix(h1, "h1")
    if f1.shape != (sub.m1, sub.n1) or h1.shape != (sub.n1, sub.p1):
        raise DimensionError("gain dimensions do not match the subsystem")
    for name, m in (("a1 + b1 f1", sub.a1 + sub.b1 @ f1), ("a1 - h1 c1", sub.a1 - h1 @ sub.c1)):
        hw = is_hurwitz(m)
        if not hw:
            raise SynthesisError(f"{name} is not Hurwitz (abscissa {hw.abscissa:.3g})")
    return RetrofitObserverBased(sub.a1, sub.l1, sub.b1, sub.c1, h1, f1)


def synthesize_state_feedback(sub: LinearSubsystem, proj: ProjectionPair, khat1,
                              residual: Optional[NonlinearResidual] = None
                              ) -> RetrofitStateFeedback:
    """Projected state feedback; requires full state measurement (c1 = I).

    The projection must satisfy the image condition (im b1 inside im p1).
    When it also satisfies the kernel condition (p1dag l1 = 0, as pairs from
    ``admissible_projection`` do) the compensator carries no interconnection
    term; otherwise the term is kept and the controller needs the
    interconnection measurement, as the full-order form does.
    """
    khat1 = as_matrix(khat1, "khat1")
    n1 = sub.n1
    if sub.c1.shape != (n1, n1) or not np.array_equal(sub.c1, np.eye(n1)):
        raise SynthesisError("projected state feedback requires y1 = x1 (c1 = I)")
    if proj.n1 != n1:
        raise DimensionError("projection does not match the subsystem dimension")
    if khat1.shape != (sub.m1, proj.nhat):
        raise DimensionError(f"khat1 must be {sub.m1} x {proj.nhat}, got {khat1.shape}")
    scale_b = 1.0 + np.max(np.abs(sub.b1), initial=0.0)
    if np.max(np.abs(sub.b1 - proj.image_projector @ sub.b1), initial=0.0) > 1e-8 * scale_b:
        raise ProjectionError("im b1 not contained in im p1; projection inadmissible")
    if residual is not None and residual.n1 != n1:
        raise DimensionError("residual dimension does not match the subsystem")
    comp_l = proj.p1dag @ sub.l1
    scale_l = 1.0 + np.max(np.abs(sub.l1), initial=0.0)
    if not sub.l1.size or np.max(np.abs(comp_l)) <= 1e-10 * scale_l:
        comp_l = None
    up = proj.p1dag @ sub.a1 @ proj.p1 + proj.p1dag @ sub.b1 @ khat1
    hw = is_hurwitz(up)
    if not hw:
        raise SynthesisError(
            f"projected local loop is not Hurwitz (abscissa {hw.abscissa:.3g})")
    return RetrofitStateFeedback(proj, sub.a1, khat1, comp_l, residual)


@dataclass(frozen=True)
class PerformanceBound:
    """Closed-loop performance constants computed from the full plant.

    alpha1/alpha2 are the interference propagation gains, eps1 the local-loop
    performance level over the (possibly projected) unit ball of subsystem
    deflections. ``beta(i, delta0, zeta0)`` evaluates the initial-condition
    offset term for the subsystem (i=1) or environment (i=2) response.
    The guaranteed transient bounds are

        ||x_i||_L2 <= alpha_i * eps1 + beta_i(delta0, 0).
    """

    alpha1: float
    alpha2: float
    eps1: float
    beta: Callable[[int, np.ndarray, Optional[np.ndarray]], float]

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.eps1) < 0:
            raise ValueError("bound constants must be nonnegative")

    def transient_bound(self, i, delta0):
        alpha = self.alpha1 if i == 1 else self.alpha2
        return alpha * self.eps1 + self.beta(i, delta0, None)


def performance_bounds(plant: PreexistingSystem, realization: HierarchicalRealization,
                       local_a, hinf_tol=1e-6) -> PerformanceBound:
    """Validation-only bound computation; reads the full plant model.

    ``local_a`` is the local closed-loop matrix. Its first nhat coordinates
    must be the upstream state; trailing coordinates (an observer, say) are
    assumed to start at zero. Refused for nonlinear plants, whose propagation
    map has no computable norm.
    """
    if not isinstance(plant.env, LinearEnvironment):
        raise TypeError("performance bounds are undefined for a nonlinear environment")
    if plant.hurwitz is None or not plant.hurwitz:
        raise SynthesisError("performance bounds need an internally stable plant")
    local_a = as_matrix(local_a, "local_a")
    pr = realization.projection
    nhat, n1 = pr.nhat, pr.n1
    nloc = local_a.shape[0]
    if nloc < nhat:
        raise DimensionError("local loop smaller than the upstream dimension")
    hw = is_hurwitz(local_a)
    if not hw:
        raise SynthesisError(f"local loop is not Hurwitz (abscissa {hw.abscissa:.3g})")

    e1t = plant.sub_embedding.T
    e2t = plant.env_embedding.T
    bdrive = realization.drive @ pr.p1
    alpha1 = hinf_norm(StateSpace(plant.a, bdrive, e1t, pr.p1), tol=hinf_tol)
    alpha2 = hinf_norm(StateSpace(plant.a, bdrive, e2t), tol=hinf_tol)

    sel = np.hstack([np.eye(nhat), np.zeros((nhat, nloc - nhat))])
    x = solve_lyapunov(local_a, sel.T @ sel)
    inj = np.vstack([pr.p1dag, np.zeros((nloc - nhat, n1))])
    eps1 = float(np.sqrt(max(np.max(np.linalg.eigvalsh(inj.T @ x @ inj)), 0.0)))

    comp, img = pr.complement_projector, pr.image_projector
    a_full, e1 = plant.a, plant.sub_embedding

    def beta(i, delta0, zeta0=None):
        d0 = np.asarray(delta0, dtype=float).reshape(n1)
        z0 = np.zeros(n1) if zeta0 is None else np.asarray(zeta0, dtype=float).reshape(n1)
        sel_i = e1t if i == 1 else e2t
        return ic_response_l2(a_full, sel_i, e1 @ (comp @ d0 + img @ z0))

    return PerformanceBound(alpha1, alpha2, eps1, beta)


_CTRL_SCHEMA = "retrokit-controller-v1"


def controller_to_json(ctrl, path=None):
    """Serialize a controller to the JSON matrix schema with a form tag."""
    def mat(m):
        return [[float(v) for v in row] for row in np.atleast_2d(m)]

    if isinstance(ctrl, RetrofitOutputFeedback):
        doc = {"form": "output_feedback",
               "matrices": {"a1": mat(ctrl.comp_a), "l1": mat(ctrl.comp_l),
                            "c1": mat(ctrl.c1), "k1": mat(ctrl.k1)}}
    elif isinstance(ctrl, RetrofitObserverBased):
        doc = {"form": "observer",
               "matrices": {"a1": mat(ctrl.comp_a), "l1": mat(ctrl.comp_l),
                            "b1": mat(ctrl.b1), "c1": mat(ctrl.c1),
                            "h1": mat(ctrl.h1), "f1": mat(ctrl.f1)}}
    elif isinstance(ctrl, RetrofitStateFeedback):
        if ctrl.residual is not None:
            raise TypeError("a residual hook is a callable and has no JSON form")
        doc = {"form": "state_feedback",
               "matrices": {"a1": mat(ctrl.a1), "khat1": mat(ctrl.khat1),
                            "p1": mat(ctrl.proj.p1), "p1dag": mat(ctrl.proj.p1dag),
                            "p1bar": mat(ctrl.proj.p1bar),
                            "p1bardag": mat(ctrl.proj.p1bardag)}}
        if ctrl.comp_l is not None:
            doc["matrices"]["comp_l"] = mat(ctrl.comp_l)
    else:
        raise TypeError(f"cannot serialize controller of type {type(ctrl).__name__}")
    doc["schema"] = _CTRL_SCHEMA
    if path is not None:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    return doc


def controller_from_json(doc_or_path):
    """Rebuild a controller from its JSON document (dict or file path)."""
    if isinstance(doc_or_path, (str, bytes)) or hasattr(doc_or_path, "__fspath__"):
        with open(doc_or_path) as fh:
            doc = json.load(fh)
    else:
        doc = doc_or_path
    if doc.get("schema") != _CTRL_SCHEMA:
        raise ValueError(f"unrecognized controller schema {doc.get('schema')!r}")
    m = {k: np.array(v, dtype=float) for k, v in doc["matrices"].items()}
    form = doc.get("form")
    if form == "output_feedback":
        return RetrofitOutputFeedback(m["a1"], m["l1"], m["c1"], m["k1"])
    if form == "observer":
        return RetrofitObserverBased(m["a1"], m["l1"], m["b1"], m["c1"], m["h1"], m["f1"])
    if form == "state_feedback":
        proj = ProjectionPair(m["p1"], m["p1dag"],
                              m["p1bar"].reshape(m["p1"].shape[0], -1),
                              m["p1bardag"].reshape(-1, m["p1"].shape[0]))
        return RetrofitStateFeedback(proj, m["a1"], m["khat1"], m.get("comp_l"))
    raise ValueError(f"unknown controller form {form!r}")
