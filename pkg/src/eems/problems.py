"""The six benchmark conservative PDEs.

Every problem is posed on a box ``Omega x [0, T]`` with ``d`` spatial axes
(``d`` = 1 or 2).  Points are rows ``(x_1, ..., x_d, t)``.  Wave-type problems
are written as first-order systems in ``(u, v = u_t)`` and carry two solution
components; the KdV problem carries one.

A *solution source* is anything with ``forward(X) -> (N, m)`` and
``derivs(X, direction, order) -> (order + 1, [D,] N, m)``: a
:class:`~eems.network.DenseNetwork`, a closed-form :class:`FunctionSource`, or
the KdV reference table.  All residuals and energy densities are written
against that interface, so the same code serves networks and exact solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable

import torch

from . import jets
from .jets import Jet
from .network import axis_direction

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
PERIODIC = "periodic"


class ProblemError(ValueError):
    """Invalid problem name or parameters."""


class NotAvailableError(LookupError):
    """The problem has no closed-form solution."""


@dataclass(frozen=True)
class Domain:
    lower: tuple
    upper: tuple
    T: float

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ProblemError("domain bounds must have matching non-zero length")
        for a, b in zip(self.lower, self.upper):
            if not a < b:
                raise ProblemError(f"domain needs lower < upper on every axis, got [{a}, {b}]")
        if not self.T > 0:
            raise ProblemError(f"final time must be positive, got {self.T}")

    @property
    def dim(self):
        return len(self.lower)

    @property
    def lengths(self):
        return tuple(b - a for a, b in zip(self.lower, self.upper))

    @property
    def volume(self):
        return math.prod(self.lengths)

    def space_time_box(self):
        return (*self.lower, 0.0), (*self.upper, self.T)


@dataclass(frozen=True)
class Face:
    """One boundary face ``x_axis = lower`` (side 0) or ``upper`` (side 1).

    ``data`` maps space-time points on the face to the prescribed value
    (Dirichlet) or to the prescribed partial ``du/dx_axis`` (Neumann).
    """

    axis: int
    side: int
    kind: str
    data: Callable | None = None


@dataclass(frozen=True)
class BoundarySpec:
    faces: tuple

    def __post_init__(self):
        seen = {(f.axis, f.side) for f in self.faces}
        if len(seen) != len(self.faces):
            raise ProblemError("every boundary face needs exactly one condition")
        for f in self.faces:
            if f.kind not in (DIRICHLET, NEUMANN, PERIODIC):
                raise ProblemError(f"unknown boundary kind {f.kind!r}")
            if f.kind == PERIODIC:
                partner = [g for g in self.faces if g.axis == f.axis and g.side != f.side]
                if not partner or partner[0].kind != PERIODIC:
                    raise ProblemError(f"periodic face on axis {f.axis} lacks its opposite face")

    def face(self, axis, side):
        for f in self.faces:
            if f.axis == axis and f.side == side:
                return f
        raise KeyError((axis, side))


@dataclass(frozen=True)
class ProblemSpec:
    """A benchmark PDE.

    For wave systems the second residual is
    ``v_t - laplace_coeff * Lap(u) + dpotential(u) - forcing``
    and the energy density is
    ``v^2/2 + gradient_coeff * |grad u|^2 / 2 + potential(u)``.
    """

    name: str
    domain: Domain
    n_components: int
    boundary: BoundarySpec
    u0: Callable
    u1: Callable | None = None
    potential: Callable | None = None
    dpotential: Callable | None = None
    laplace_coeff: float = 1.0
    gradient_coeff: float = 1.0
    forcing: Callable | None = None
    exact: Callable | None = None
    params: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))
    conserved: bool = True
    # highest input-derivative order each residual needs along space / time
    derivative_orders: tuple = (2, 1)

    @property
    def dim(self):
        return self.domain.dim

    @property
    def is_wave(self):
        return self.n_components == 2

    @property
    def has_exact(self):
        return self.exact is not None


# --------------------------------------------------------------------------
# derivative bookkeeping


def _call(source, X, direction, order, params):
    if params is None:
        return source.derivs(X, direction, order)
    return source.derivs(X, direction, order, params)


def _forward(source, X, params):
    return source.forward(X) if params is None else source.forward(X, params)


def spatial_directions(dim, with_time=False, with_diagonal=False):
    """Stack of axis directions in space-time ``R^(dim+1)``."""
    rows = [axis_direction(dim + 1, i) for i in range(dim)]
    if with_diagonal and dim == 2:
        rows.append((rows[0] + rows[1]) / math.sqrt(2.0))
    if with_time:
        rows.append(axis_direction(dim + 1, dim))
    return torch.stack(rows)


# --------------------------------------------------------------------------
# residuals


def residual(problem, source, X, params=None):
    """Interior residuals, shape ``(N, 2)`` for wave systems, ``(N, 1)`` for KdV."""
    X = torch.as_tensor(X, dtype=torch.float64)
    d = problem.dim
    if problem.name == "kdv1d":
        j = _call(source, X, spatial_directions(1, with_time=True), 3, params)
        u, ux, uxxx = j[0, 0, :, 0], j[1, 0, :, 0], j[3, 0, :, 0]
        ut = j[1, 1, :, 0]
        return (ut + 6.0 * u * ux + uxxx).unsqueeze(-1)
    j = _call(source, X, spatial_directions(d, with_time=True), 2, params)
    u, v = j[0, 0, :, 0], j[0, 0, :, 1]
    ut, vt = j[1, d, :, 0], j[1, d, :, 1]
    lap = sum(j[2, i, :, 0] for i in range(d))
    r2 = vt - problem.laplace_coeff * lap
    if problem.dpotential is not None:
        r2 = r2 + problem.dpotential(u)
    if problem.forcing is not None:
        r2 = r2 - problem.forcing(X)
    return torch.stack([ut - v, r2], dim=-1)


# --------------------------------------------------------------------------
# energy


def energy_from_fields(problem, u, v, grads):
    """Energy density from field values; works on tensors or jets."""
    if problem.name == "kdv1d":
        ux = grads[0]
        return 0.5 * ux * ux - u * u * u
    out = 0.5 * v * v
    for g in grads:
        out = out + (0.5 * problem.gradient_coeff) * g * g
    if problem.potential is not None:
        out = out + problem.potential(u)
    return out


def energy_density(problem, source, X, params=None):
    """Unshifted energy density at space-time points, shape ``(N,)``."""
    X = torch.as_tensor(X, dtype=torch.float64)
    d = problem.dim
    j = _call(source, X, spatial_directions(d), 1, params)
    u = j[0, 0, :, 0]
    v = j[0, 0, :, 1] if problem.is_wave else None
    grads = [j[1, i, :, 0] for i in range(d)]
    return energy_from_fields(problem, u, v, grads)


def energy_density_and_grad(problem, source, X, params=None):
    """Energy density and its spatial gradient, shapes ``(N,)`` and ``(N, d)``.

    The gradient is obtained by pushing order-one jets of ``u``, ``v`` and
    ``grad u`` along every spatial axis through :func:`energy_from_fields`.
    """
    X = torch.as_tensor(X, dtype=torch.float64)
    d = problem.dim
    j = _call(source, X, spatial_directions(d, with_diagonal=True), 2, params)
    u = j[0, 0, :, 0]
    du = j[1, :d, :, 0]  # (d, N)
    hess = [[None] * d for _ in range(d)]
    for i in range(d):
        hess[i][i] = j[2, i, :, 0]
    if d == 2:
        mixed = j[2, 2, :, 0] - 0.5 * (hess[0][0] + hess[1][1])
        hess[0][1] = hess[1][0] = mixed
    U = Jet([u, du])
    V = Jet([j[0, 0, :, 1], j[1, :d, :, 1]]) if problem.is_wave else None
    grads = [Jet([du[k], torch.stack([hess[k][i] for i in range(d)])]) for k in range(d)]
    w = energy_from_fields(problem, U, V, grads)
    value = w.c[0]
    grad = w.c[1]
    if isinstance(grad, float):
        grad = torch.zeros(d, X.shape[0])
    return value, grad.T


# --------------------------------------------------------------------------
# closed-form sources


class FunctionSource:
    """Solution source from closed-form component functions of ``X``.

    Input derivatives are obtained by nested reverse-mode differentiation of
    the closed forms, independently of the jet arithmetic used for networks.
    """

    def __init__(self, components, in_dim):
        self.components = list(components)
        self.in_dim = in_dim
        self.out_dim = len(self.components)

    def _values(self, X):
        return torch.stack([torch.as_tensor(f(X)).expand(X.shape[0]) for f in self.components], -1)

    def forward(self, X):
        X = torch.as_tensor(X, dtype=torch.float64)
        if X.dim() == 1:
            X = X.unsqueeze(0)
        with torch.enable_grad():
            Xr = X if X.requires_grad else X.detach().requires_grad_(True)
            return self._values(Xr)

    __call__ = forward

    def derivs(self, X, direction, order):
        X = torch.as_tensor(X, dtype=torch.float64)
        direction = torch.as_tensor(direction, dtype=torch.float64)
        if direction.dim() == 2:
            return torch.stack([self.derivs(X, dv, order) for dv in direction], dim=1)
        if order > jets.MAX_ORDER:
            raise jets.UnsupportedOrderError(order)
        with torch.enable_grad():
            s = torch.zeros(X.shape[0], dtype=torch.float64, requires_grad=True)
            cur = self._values(X + s[:, None] * direction)
            out = [cur]
            for _ in range(order):
                cols = []
                for c in range(self.out_dim):
                    col = cur[:, c]
                    g = None
                    if col.requires_grad:
                        (g,) = torch.autograd.grad(col.sum(), s, create_graph=True, allow_unused=True)
                    cols.append(torch.zeros_like(s) if g is None else g)
                cur = torch.stack(cols, -1)
                out.append(cur)
        return torch.stack(out)


def time_derivative(fn):
    """Closed form ``X -> d fn / dt`` by reverse-mode differentiation."""

    def dt(X):
        with torch.enable_grad():
            Xr = X if X.requires_grad else X.detach().requires_grad_(True)
            (g,) = torch.autograd.grad(fn(Xr).sum(), Xr, create_graph=True)
        return g[:, -1]

    return dt


def exact_source(problem):
    if problem.exact is None:
        if problem.name == "kdv1d":
            from .kdv import default_reference

            return KdVSource(default_reference(problem.domain.T))
        raise NotAvailableError(f"{problem.name} has no closed-form solution")
    comps = [problem.exact]
    if problem.is_wave:
        comps.append(time_derivative(problem.exact))
    return FunctionSource(comps, problem.dim + 1)


def initial_source(problem):
    """Time-independent source carrying the prescribed initial data."""
    d = problem.dim
    comps = [lambda X: problem.u0(X[:, :d])]
    if problem.is_wave:
        comps.append(lambda X: problem.u1(X[:, :d]))
    return FunctionSource(comps, d + 1)


def exact_solution(problem, X):
    """Component values of the reference solution at space-time points."""
    return exact_source(problem).forward(torch.as_tensor(X, dtype=torch.float64)).detach()


class KdVSource:
    """Solution source over a :class:`~eems.kdv.KdVReference` table.

    Supports any order along ``x`` and first order along directions with a
    time component (``u_t`` is recovered from the equation).
    """

    in_dim = 2
    out_dim = 1

    def __init__(self, reference):
        self.reference = reference

    def _at(self, X, k):
        Xn = X.detach().numpy()
        return torch.from_numpy(self.reference.spectral_at(Xn[:, 0], Xn[:, 1], k))

    def forward(self, X):
        X = torch.as_tensor(X, dtype=torch.float64).reshape(-1, 2)
        return self._at(X, 0).unsqueeze(-1)

    __call__ = forward

    def derivs(self, X, direction, order):
        X = torch.as_tensor(X, dtype=torch.float64).reshape(-1, 2)
        direction = torch.as_tensor(direction, dtype=torch.float64)
        if direction.dim() == 2:
            return torch.stack([self.derivs(X, dv, order) for dv in direction], dim=1)
        a, b = float(direction[0]), float(direction[1])
        if b != 0.0 and order > 1:
            raise NotImplementedError("reference table gives only first time derivatives")
        parts = [self._at(X, k) for k in range(max(order, 3 if b else 0) + 1)]
        out = [parts[0]]
        for k in range(1, order + 1):
            val = a**k * parts[k]
            if b:
                ut = -6.0 * parts[0] * parts[1] - parts[3]
                val = val + b * ut
            out.append(val)
        return torch.stack(out).unsqueeze(-1)


# --------------------------------------------------------------------------
# the benchmarks


def _kg1d(alpha=0.1, gamma=1.0, c=0.3, lower=-10.0, upper=10.0, T=12.0):
    if alpha <= 0 or gamma <= 0:
        raise ProblemError("kg1d needs alpha > 0 and gamma > 0")
    if c * c - alpha * alpha <= 0:
        raise ProblemError("kg1d needs c^2 - alpha^2 > 0 (otherwise kappa is undefined)")
    amp = math.sqrt(alpha / gamma)
    kappa = math.sqrt(alpha / (2 * (c * c - alpha * alpha)))

    def exact(X):
        return amp * torch.tanh(kappa * (X[:, 0] - c * X[:, 1]))

    def u0(x):
        return amp * torch.tanh(kappa * x[:, 0])

    def u1(x):
        return -c * amp * kappa / torch.cosh(kappa * x[:, 0]) ** 2

    def neumann(X):
        return kappa * amp / torch.cosh(kappa * (X[:, 0] - c * X[:, 1])) ** 2

    return ProblemSpec(
        name="kg1d",
        domain=Domain((lower,), (upper,), T),
        n_components=2,
        boundary=BoundarySpec((Face(0, 0, NEUMANN, neumann), Face(0, 1, NEUMANN, neumann))),
        u0=u0,
        u1=u1,
        potential=lambda u: (0.5 * alpha) * u * u - (0.25 * gamma) * u**4,
        dpotential=lambda u: alpha * u - gamma * u**3,
        laplace_coeff=alpha * alpha,
        gradient_coeff=-alpha * alpha,
        exact=exact,
        params=MappingProxyType({"alpha": alpha, "gamma": gamma, "c": c, "kappa": kappa}),
    )


def _kg1d_forced(lower=0.0, upper=1.0, T=1.0):
    w = 5 * math.pi

    def exact(X):
        x, t = X[:, 0], X[:, 1]
        return x * torch.cos(w * t) + (x * t) ** 3

    def forcing(X):
        x, t = X[:, 0], X[:, 1]
        u = exact(X)
        utt = -w * w * x * torch.cos(w * t) + 6 * x**3 * t
        uxx = 6 * x * t**3
        return utt - uxx + u**3

    def dirichlet(X):
        return exact(X)

    return ProblemSpec(
        name="kg1d_forced",
        domain=Domain((lower,), (upper,), T),
        n_components=2,
        boundary=BoundarySpec((Face(0, 0, DIRICHLET, dirichlet), Face(0, 1, DIRICHLET, dirichlet))),
        u0=lambda x: x[:, 0],
        u1=lambda x: torch.zeros_like(x[:, 0]),
        potential=lambda u: 0.25 * u**4,
        dpotential=lambda u: u**3,
        forcing=forcing,
        exact=exact,
        conserved=False,
    )


def _sg1d(gamma=0.5, lower=-15.0, upper=15.0, T=1.0):
    if not 0 < gamma < 1:
        raise ProblemError("sg1d needs 0 < gamma < 1")
    s = math.sqrt(1 - gamma * gamma)

    def exact(X):
        x, t = X[:, 0], X[:, 1]
        return 4 * torch.atan(torch.sinh(gamma * t / s) / (gamma * torch.cosh(x / s)))

    def u1(x):
        # d/dt at t = 0: 4 * (1/s) / cosh(x/s)
        return 4.0 / (s * torch.cosh(x[:, 0] / s))

    return ProblemSpec(
        name="sg1d",
        domain=Domain((lower,), (upper,), T),
        n_components=2,
        boundary=BoundarySpec((Face(0, 0, PERIODIC), Face(0, 1, PERIODIC))),
        u0=lambda x: torch.zeros_like(x[:, 0]),
        u1=u1,
        potential=lambda u: 1.0 - jets.cos(u),
        dpotential=jets.sin,
        exact=exact,
        params=MappingProxyType({"gamma": gamma}),
    )


def _kdv1d(T=0.6):
    return ProblemSpec(
        name="kdv1d",
        domain=Domain((0.0,), (2 * math.pi,), T),
        n_components=1,
        boundary=BoundarySpec((Face(0, 0, PERIODIC), Face(0, 1, PERIODIC))),
        u0=lambda x: torch.sin(x[:, 0]),
        derivative_orders=(3, 1),
    )


def _wave2d(c=1.0, T=1.0):
    if c <= 0:
        raise ProblemError("wave2d needs c > 0")
    pi = math.pi

    def exact(X):
        return (
            torch.sin(pi * X[:, 0])
            * torch.sin(pi * X[:, 1])
            * torch.cos(math.sqrt(2) * pi * c * X[:, 2])
        )

    zero = lambda X: torch.zeros_like(X[:, 0])  # noqa: E731
    faces = tuple(Face(a, s, DIRICHLET, zero) for a in (0, 1) for s in (0, 1))
    return ProblemSpec(
        name="wave2d",
        domain=Domain((0.0, 0.0), (1.0, 1.0), T),
        n_components=2,
        boundary=BoundarySpec(faces),
        u0=lambda x: torch.sin(pi * x[:, 0]) * torch.sin(pi * x[:, 1]),
        u1=lambda x: torch.zeros_like(x[:, 0]),
        laplace_coeff=c * c,
        gradient_coeff=c * c,
        exact=exact,
        params=MappingProxyType({"c": c}),
    )


def _sg2d(half_width=7.0, T=10.0):
    def exact(X):
        return 4 * torch.atan(torch.exp(X[:, 0] + X[:, 1] - X[:, 2]))

    def u1(x):
        e = torch.exp(x[:, 0] + x[:, 1])
        return -4 * e / (1 + e * e)

    def neumann(X):
        # same expression for both axis partials; written to avoid overflow
        s = X[:, 0] + X[:, 1] - X[:, 2]
        return 2.0 / torch.cosh(s)

    faces = tuple(Face(a, s, NEUMANN, neumann) for a in (0, 1) for s in (0, 1))
    return ProblemSpec(
        name="sg2d",
        domain=Domain((-half_width, -half_width), (half_width, half_width), T),
        n_components=2,
        boundary=BoundarySpec(faces),
        u0=lambda x: 4 * torch.atan(torch.exp(x[:, 0] + x[:, 1])),
        u1=u1,
        potential=lambda u: 1.0 - jets.cos(u),
        dpotential=jets.sin,
        exact=exact,
        # the front enters and leaves the box, so the box energy drifts
        conserved=False,
    )


_FACTORIES = {
    "kg1d": _kg1d,
    "kg1d_forced": _kg1d_forced,
    "sg1d": _sg1d,
    "kdv1d": _kdv1d,
    "wave2d": _wave2d,
    "sg2d": _sg2d,
}

PROBLEM_NAMES = tuple(_FACTORIES)


def make_problem(name, **params):
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ProblemError(f"unknown problem {name!r}; expected one of {', '.join(PROBLEM_NAMES)}")
    try:
        return factory(**params)
    except TypeError as exc:
        raise ProblemError(f"{name}: {exc}") from None
