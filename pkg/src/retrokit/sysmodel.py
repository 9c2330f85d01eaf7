"""Data model for the interconnected plant.

The plant is split into a designable subsystem (whose model is available for
controller design) and an environment (whose model is not). The environment
is linear or an opaque nonlinear dynamical map. Assembly produces the
block-coupled system

    [x1dot]   [a1       l1 gamma2] [x1]   [b1]
    [x2dot] = [l2 gamma1       a2] [x2] + [ 0] u1,    y1 = c1 x1

which is required to be internally stable at construction (override only for
deliberate negative tests).

Controllers attach to a plant through port bindings; see ``assemble_closed_loop``.
A controller object must provide ``state_dim``, ``input_dim``,
``control(x1, xc)``, ``compensator_rhs(x1, xc, gamma2)`` and, for the
all-linear fast path, ``linear_maps(s1, gamma2_map)`` returning the five
block matrices (fx, fc, gx, gc, gu) with

    u = fx x + fc xc,    xcdot = gx x + gc xc + gu u.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .errors import DimensionError, StabilityError
from .numlin import HurwitzResult, as_matrix, is_hurwitz

__all__ = [
    "LinearSubsystem",
    "LinearEnvironment",
    "NonlinearEnvironment",
    "NonlinearResidual",
    "PreexistingSystem",
    "Attachment",
    "ClosedLoop",
    "assemble_preexisting",
    "assemble_closed_loop",
    "jacobian",
    "linearize_environment",
    "residualize",
    "save_system",
    "load_system",
]


@dataclass(frozen=True)
class LinearSubsystem:
    """Designable subsystem: (a1, b1, c1, l1) with interconnection input port l1."""

    a1: np.ndarray
    b1: np.ndarray
    c1: np.ndarray
    l1: np.ndarray

    def __post_init__(self):
        a1 = as_matrix(self.a1, "a1")
        b1 = as_matrix(self.b1, "b1")
        c1 = as_matrix(self.c1, "c1")
        l1 = as_matrix(self.l1, "l1")
        n1 = a1.shape[0]
        if n1 < 1 or a1.shape[1] != n1:
            raise DimensionError("a1 must be square with n1 >= 1")
        for name, m in (("b1", b1), ("l1", l1)):
            if m.shape[0] != n1:
                raise DimensionError(f"{name} must have {n1} rows, got {m.shape[0]}")
        if c1.shape[1] != n1:
            raise DimensionError(f"c1 must have {n1} cols, got {c1.shape[1]}")
        for name, m in (("a1", a1), ("b1", b1), ("c1", c1), ("l1", l1)):
            object.__setattr__(self, name, m)

    @property
    def n1(self):
        return self.a1.shape[0]

    @property
    def m1(self):
        return self.b1.shape[1]

    @property
    def p1(self):
        return self.c1.shape[0]

    @property
    def q1(self):
        return self.l1.shape[1]


@dataclass(frozen=True)
class LinearEnvironment:
    """Linear environment: (a2, l2, gamma1, gamma2) coupled to the subsystem."""

    a2: np.ndarray
    l2: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray

    def __post_init__(self):
        a2 = as_matrix(self.a2, "a2")
        l2 = as_matrix(self.l2, "l2")
        g1 = as_matrix(self.gamma1, "gamma1")
        g2 = as_matrix(self.gamma2, "gamma2")
        n2 = a2.shape[0]
        if a2.shape[1] != n2:
            raise DimensionError("a2 must be square")
        if l2.shape[0] != n2:
            raise DimensionError(f"l2 must have {n2} rows")
        if g2.shape[1] != n2:
            raise DimensionError(f"gamma2 must have {n2} cols")
        if l2.shape[1] != g1.shape[0]:
            raise DimensionError("l2 cols must match gamma1 rows")
        object.__setattr__(self, "a2", a2)
        object.__setattr__(self, "l2", l2)
        object.__setattr__(self, "gamma1", g1)
        object.__setattr__(self, "gamma2", g2)

    @property
    def n2(self):
        return self.a2.shape[0]


@dataclass(frozen=True)
class NonlinearEnvironment:
    """Opaque nonlinear environment.

    ``f2(x2, x1)`` gives x2dot and ``h2(x2, x1)`` the interconnection signal
    injected into the subsystem. Both must be deterministic, re-entrant and
    finite-valued on the simulated domain.
    """

    n2: int
    f2: Callable[[np.ndarray, np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class NonlinearResidual:
    """Measurable nonlinear term added to the subsystem dynamics.

    Must vanish at the operating point (the origin of the deviation
    coordinates the plant is expressed in).
    """

    n1: int
    f1: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        val = np.asarray(self.f1(np.zeros(self.n1)), dtype=float)
        if val.shape != (self.n1,) or np.max(np.abs(val)) > 1e-12:
            raise ValueError("residual must map the origin to zero")


Environment = Union[LinearEnvironment, NonlinearEnvironment]


@dataclass(frozen=True)
class PreexistingSystem:
    """Subsystem plus environment, assembled and stability-checked when linear."""

    sub: LinearSubsystem
    env: Environment
    residual: Optional[NonlinearResidual] = None
    a: Optional[np.ndarray] = None
    hurwitz: Optional[HurwitzResult] = None

    @property
    def n1(self):
        return self.sub.n1

    @property
    def n2(self):
        return self.env.n2

    @property
    def dim(self):
        return self.n1 + self.n2

    @property
    def is_linear(self):
        return isinstance(self.env, LinearEnvironment) and self.residual is None

    @property
    def sub_embedding(self):
        """Column embedding of subsystem coordinates into the plant state."""
        e = np.zeros((self.dim, self.n1))
        e[: self.n1] = np.eye(self.n1)
        return e

    @property
    def env_embedding(self):
        e = np.zeros((self.dim, self.n2))
        e[self.n1:] = np.eye(self.n2)
        return e

    def gamma2_of(self, x):
        """Interconnection signal entering the subsystem at plant state x."""
        x = np.asarray(x, dtype=float)
        x1, x2 = x[: self.n1], x[self.n1:]
        if isinstance(self.env, LinearEnvironment):
            return self.env.gamma2 @ x2
        return np.asarray(self.env.h2(x2, x1), dtype=float)

    def vector_field(self, x, uext=None):
        """Plant state derivative; ``uext`` is an already-injected drive term."""
        x = np.asarray(x, dtype=float)
        x1, x2 = x[: self.n1], x[self.n1:]
        if isinstance(self.env, LinearEnvironment):
            dx1 = self.sub.a1 @ x1 + self.sub.l1 @ (self.env.gamma2 @ x2)
            dx2 = self.env.a2 @ x2 + self.env.l2 @ (self.env.gamma1 @ x1)
        else:
            dx1 = self.sub.a1 @ x1 + self.sub.l1 @ np.asarray(self.env.h2(x2, x1), dtype=float)
            dx2 = np.asarray(self.env.f2(x2, x1), dtype=float)
        if self.residual is not None:
            dx1 = dx1 + self.residual.f1(x1)
        dx = np.concatenate([dx1, dx2])
        if uext is not None:
            dx = dx + uext
        return dx

    def labels(self):
        return [f"x1[{i}]" for i in range(self.n1)] + [f"x2[{i}]" for i in range(self.n2)]


def assemble_preexisting(sub, env, residual=None, allow_unstable=False):
    """Assemble the interconnection of subsystem and environment.

    For a linear environment the block matrix is built and its stability
    recorded; construction is refused for an unstable interconnection unless
    ``allow_unstable`` is set (negative tests only). Nonlinear environments
    are taken on trust per the stability premise of retrofit design.
    """
    if isinstance(env, LinearEnvironment):
        if env.gamma2.shape[0] != sub.q1:
            raise DimensionError(
                f"gamma2 produces {env.gamma2.shape[0]} signals, l1 accepts {sub.q1}")
        if env.gamma1.shape[1] != sub.n1:
            raise DimensionError("gamma1 cols must match n1")
        a = np.block([[sub.a1, sub.l1 @ env.gamma2], [env.l2 @ env.gamma1, env.a2]])
        hw = is_hurwitz(a)
        if not hw and not allow_unstable:
            raise StabilityError(
                f"preexisting system is not internally stable (abscissa {hw.abscissa:.3g}); "
                "pass allow_unstable=True only for deliberate negative tests")
        return PreexistingSystem(sub, env, residual, a, hw)
    if not isinstance(env, NonlinearEnvironment):
        raise TypeError(f"unsupported environment type {type(env).__name__}")
    return PreexistingSystem(sub, env, residual, None, None)


@dataclass(frozen=True)
class Attachment:
    """A controller plus the ports binding it to a plant.

    ``state_ix`` lists the plant coordinates forming the controller's
    subsystem view, ``input_matrix`` injects the controller output into the
    plant state derivative, and ``gamma2_map`` reads the interconnection
    signal from the plant state (linear environments only; defaults to the
    canonical partition).
    """

    controller: object
    state_ix: np.ndarray
    input_matrix: np.ndarray
    gamma2_map: Optional[np.ndarray]

    @property
    def s1(self):
        """Selector matrix x1 = s1 @ x for the bound coordinates."""
        n = self.input_matrix.shape[0]
        s = np.zeros((len(self.state_ix), n))
        s[np.arange(len(self.state_ix)), self.state_ix] = 1.0
        return s


def _default_attachment(plant, controller):
    n1, dim = plant.n1, plant.dim
    inj = np.zeros((dim, controller.input_dim))
    inj[:n1] = plant.sub.b1
    if isinstance(plant.env, LinearEnvironment):
        g2map = np.zeros((plant.sub.q1, dim))
        g2map[:, n1:] = plant.env.gamma2
    else:
        g2map = None
    return Attachment(controller, np.arange(n1), inj, g2map)


class ClosedLoop:
    """Plant with zero or more attached controllers.

    When every part is linear an augmented state-space matrix is built whose
    integration agrees with component-wise co-simulation of the same loop;
    otherwise the loop exposes a composite vector field only.
    """

    def __init__(self, plant, attachments):
        self.plant = plant
        self.attachments = list(attachments)
        self._validate()
        self.dim = plant.dim + sum(a.controller.state_dim for a in self.attachments)
        self.input_dim = sum(a.controller.input_dim for a in self.attachments)
        self.a = self._augmented() if self._all_linear() else None

    def _validate(self):
        seen = set()
        for att in self.attachments:
            ix = set(int(i) for i in att.state_ix)
            if ix & seen:
                raise DimensionError("controller port bindings overlap")
            seen |= ix
            if att.input_matrix.shape != (self.plant.dim, att.controller.input_dim):
                raise DimensionError("input matrix shape does not match plant/controller")

    def _all_linear(self):
        return self.plant.is_linear and all(
            getattr(a.controller, "is_linear", False) for a in self.attachments)

    def _augmented(self):
        n = self.plant.dim
        a = np.zeros((self.dim, self.dim))
        a[:n, :n] = self.plant.a
        off = n
        for att in self.attachments:
            nc = att.controller.state_dim
            fx, fc, gx, gc, gu = att.controller.linear_maps(att.s1, att.gamma2_map)
            a[:n, :n] += att.input_matrix @ fx
            a[:n, off:off + nc] = att.input_matrix @ fc
            a[off:off + nc, :n] = gx + gu @ fx
            a[off:off + nc, off:off + nc] = gc + gu @ fc
            off += nc
        return a

    def initial_state(self, x_plant0):
        """Pad a plant initial state with zero compensator states."""
        x0 = np.asarray(x_plant0, dtype=float).reshape(-1)
        if x0.size != self.plant.dim:
            raise DimensionError(f"plant initial state must have length {self.plant.dim}")
        return np.concatenate([x0, np.zeros(self.dim - self.plant.dim)])

    def controls_of(self, z):
        """Stacked controller outputs at augmented state z (composite path)."""
        n = self.plant.dim
        x, out, off = np.asarray(z, dtype=float)[:n], [], n
        for att in self.attachments:
            nc = att.controller.state_dim
            out.append(att.controller.control(x[att.state_ix], z[off:off + nc]))
            off += nc
        return np.concatenate(out) if out else np.zeros(0)

    def vector_field(self, t, z):
        """Composite closed-loop derivative built from the component models."""
        n = self.plant.dim
        z = np.asarray(z, dtype=float)
        x = z[:n]
        gamma2 = self.plant.gamma2_of(x)
        uext = np.zeros(n)
        parts = []
        off = n
        for att in self.attachments:
            nc = att.controller.state_dim
            x1 = x[att.state_ix]
            xc = z[off:off + nc]
            g2 = gamma2 if att.gamma2_map is None else att.gamma2_map @ x
            u = att.controller.control(x1, xc)
            uext += att.input_matrix @ u
            parts.append(att.controller.compensator_rhs(x1, xc, g2))
            off += nc
        dx = self.plant.vector_field(x, uext)
        return np.concatenate([dx] + parts) if parts else dx

    def labels(self):
        out = list(self.plant.labels())
        for k, att in enumerate(self.attachments):
            out += [f"ctrl{k}.xc[{i}]" for i in range(att.controller.state_dim)]
        return out

    def input_labels(self):
        out = []
        for k, att in enumerate(self.attachments):
            out += [f"ctrl{k}.u[{i}]" for i in range(att.controller.input_dim)]
        return out


def assemble_closed_loop(plant, controllers=()):
    """Attach controllers to a plant.

    ``controllers`` holds controller objects (bound to the canonical
    subsystem partition) or explicit ``Attachment`` instances. Bindings must
    be pairwise disjoint.
    """
    atts = []
    for c in controllers:
        atts.append(c if isinstance(c, Attachment) else _default_attachment(plant, c))
    return ClosedLoop(plant, atts)


def jacobian(f, x, step=None):
    """Central finite-difference Jacobian of ``f`` at ``x``.

    The default per-coordinate step is 1e-6 * (1 + |x_i|).
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    f0 = np.asarray(f(x), dtype=float).reshape(-1)
    if not np.all(np.isfinite(f0)):
        raise ValueError("map evaluates to a non-finite value at the operating point")
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        h = step if step is not None else 1e-6 * (1.0 + abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp = np.asarray(f(xp), dtype=float).reshape(-1)
        fm = np.asarray(f(xm), dtype=float).reshape(-1)
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError("map evaluates to a non-finite value near the operating point")
        jac[:, i] = (fp - fm) / (2.0 * h)
    return jac


def linearize_environment(env: NonlinearEnvironment, x2_op, x1_op, step=None):
    """Linearize a nonlinear environment around an operating point.

    Returns a ``LinearEnvironment`` with a2 = df2/dx2, l2 = df2/dx1,
    gamma1 = I and gamma2 = dh2/dx2, plus the first-order dependence of h2
    on x1 (zero when the interconnection output is a pure environment
    signal; the caller folds a nonzero value into the subsystem model).
    """
    x2_op = np.asarray(x2_op, dtype=float).reshape(-1)
    x1_op = np.asarray(x1_op, dtype=float).reshape(-1)
    a2 = jacobian(lambda v: env.f2(v, x1_op), x2_op, step)
    l2 = jacobian(lambda v: env.f2(x2_op, v), x1_op, step)
    gamma2 = jacobian(lambda v: env.h2(v, x1_op), x2_op, step)
    h2_x1 = jacobian(lambda v: env.h2(x2_op, v), x1_op, step)
    return LinearEnvironment(a2, l2, np.eye(x1_op.size), gamma2), h2_x1


def residualize(f, a, op=None):
    """Package the nonlinear remainder of ``f`` after removing its linear part.

    The returned residual r(x) = f(x + op) - f(op) - a x vanishes at the
    origin of the deviation coordinates exactly by construction.
    """
    a = as_matrix(a, "a")
    n = a.shape[0]
    op = np.zeros(n) if op is None else np.asarray(op, dtype=float).reshape(-1)
    f_op = np.asarray(f(op), dtype=float).reshape(-1)

    def r(x):
        x = np.asarray(x, dtype=float).reshape(-1)
        return np.asarray(f(x + op), dtype=float).reshape(-1) - f_op - a @ x

    return NonlinearResidual(n, r)


_SCHEMA = "retrokit-system-v1"


def _matrix_to_json(m):
    return [[float(v) for v in row] for row in np.atleast_2d(m)]


def save_system(plant: PreexistingSystem, path):
    """Write a linear plant to a JSON system document.

    Schema (``retrokit-system-v1``): top-level keys ``schema``,
    ``subsystem`` (a1, b1, c1, l1) and ``environment`` (a2, l2, gamma1,
    gamma2), each matrix a nested row-major array. Values round-trip
    bit-exactly through the shortest-round-trip decimal form.
    """
    if not isinstance(plant.env, LinearEnvironment):
        raise TypeError("only linear plants have a JSON document form")
    doc = {
        "schema": _SCHEMA,
        "subsystem": {k: _matrix_to_json(getattr(plant.sub, k)) for k in ("a1", "b1", "c1", "l1")},
        "environment": {
            k: _matrix_to_json(getattr(plant.env, k)) for k in ("a2", "l2", "gamma1", "gamma2")},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_system(path, allow_unstable=False) -> PreexistingSystem:
    """Load a plant from a JSON system document written by ``save_system``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != _SCHEMA:
        raise ValueError(f"unrecognized system document schema {doc.get('schema')!r}")
    sub = LinearSubsystem(**{k: np.array(v, dtype=float) for k, v in doc["subsystem"].items()})
    env = LinearEnvironment(**{k: np.array(v, dtype=float) for k, v in doc["environment"].items()})
    return assemble_preexisting(sub, env, allow_unstable=allow_unstable)
