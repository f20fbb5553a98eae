"""Collocation points, the boundary-constrained mesh map and the WAM baseline.

Mesh maps live on the unit box.  A space-time point ``(x, t)`` is pulled back
to ``(xi, s)`` with ``xi = (x - lower) / L`` and ``s = t / T``; the mesh
network maps it to ``y = xi + psi(xi) * net(xi, s)`` and the physical image is
``x + L * psi(xi) * net(xi, s)``.  Writing the image as a displacement keeps
boundary points bit-for-bit fixed, since ``psi`` is exactly zero there.

The energy-equidistribution residual is evaluated in unit-box coordinates:

    E_k = sum_j d/dxi_j ( w(x(xi, s), t) * dy_k/dxi_j )

and the mesh is trained so that ``dy/ds = E / tau`` holds at the interior
points, a forward-parabolic flow whose steady states equidistribute ``w``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import torch
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from .jets import Jet
from .network import DenseNetwork
from .optim import TrainState, adam_run, lbfgs_run
from .problems import energy_density_and_grad

log = logging.getLogger(__name__)

COMPUTATIONAL = "computational"
PHYSICAL = "physical"


class MonitorPositivityError(ValueError):
    pass


class SingularJacobianError(ArithmeticError):
    pass


# --------------------------------------------------------------------------
# point sets


@dataclass(frozen=True)
class PointSet:
    """Tagged collocation points in physical coordinates ``(x..., t)``.

    ``frame`` records whether the coordinates are the un-mapped uniform layout
    (``computational``) or the image under a mesh map (``physical``).
    Boundary points are grouped by face (``face = 2 * axis + side``), and the
    two faces of an axis list their points in matching order.
    """

    interior: torch.Tensor
    initial: torch.Tensor
    boundary: torch.Tensor
    faces: torch.Tensor
    frame: str = COMPUTATIONAL
    warnings: tuple = ()

    @property
    def counts(self):
        return {
            "interior": self.interior.shape[0],
            "initial": self.initial.shape[0],
            "boundary": self.boundary.shape[0],
        }

    def face_points(self, axis, side):
        return self.boundary[self.faces == 2 * axis + side]

    def with_interior(self, interior, frame=PHYSICAL):
        return replace(self, interior=interior, frame=frame)


def _balanced_factors(n, parts, max_ratio=3.0):
    """Factor ``n`` into ``parts`` integers as equal as possible, or ``None``."""
    best = None

    def rec(rem, k, acc):
        nonlocal best
        if k == 1:
            f = acc + [rem]
            ratio = max(f) / min(f)
            if best is None or ratio < best[0]:
                best = (ratio, sorted(f, reverse=True))
            return
        for a in range(1, rem + 1):
            if rem % a == 0:
                rec(rem // a, k - 1, acc + [a])

    rec(n, parts, [])
    if best is None or best[0] > max_ratio:
        return None
    return best[1]


def lattice_shape(n, parts):
    """Per-axis counts for ``n`` lattice points, plus a warning if inexact."""
    if parts == 1:
        return [n], None
    f = _balanced_factors(n, parts)
    if f is not None:
        return f, None
    k = max(1, round(n ** (1.0 / parts)))
    shape = [k] * parts
    return shape, f"{n} points do not factor into a balanced lattice; using {k ** parts}"


def _offsets(n):
    return (np.arange(1, n + 1) / (n + 1)).astype(np.float64)


def _lattice(shape):
    grids = np.meshgrid(*[_offsets(n) for n in shape], indexing="ij")
    return np.stack([g.ravel() for g in grids], -1)


def uniform_points(domain, n_interior, n_initial, n_boundary, layout="grid", seed=0):
    """Uniform collocation points in the space-time box.

    The grid layout uses interior offsets ``i / (n + 1)`` on every axis.  The
    random layout draws uniformly from ``numpy.random.default_rng(seed)``.
    Boundary points are split evenly over the ``2 d`` faces; opposite faces
    receive the same tangential coordinates and times.
    """
    for name, n in (("N_p", n_interior), ("N_i", n_initial), ("N_b", n_boundary)):
        if n < 0:
            raise ValueError(f"{name} must be non-negative")
    d = domain.dim
    lo = np.array(domain.lower + (0.0,))
    span = np.array(domain.lengths + (domain.T,))
    warnings = []
    rng = np.random.default_rng(seed)

    if layout == "grid":
        # space axes first, time last; space gets the larger factors
        shape, w = lattice_shape(n_interior, d + 1)
        if w:
            warnings.append("interior: " + w)
        interior = _lattice(shape) if n_interior else np.zeros((0, d + 1))
        shape, w = lattice_shape(n_initial, d)
        if w:
            warnings.append("initial: " + w)
        init_space = _lattice(shape) if n_initial else np.zeros((0, d))
    elif layout == "random":
        interior = rng.random((n_interior, d + 1))
        init_space = rng.random((n_initial, d))
    else:
        raise ValueError(f"unknown layout {layout!r}")

    per_face = n_boundary // (2 * d)
    if per_face * 2 * d != n_boundary:
        warnings.append(f"boundary: {n_boundary} not divisible over {2 * d} faces; using {per_face * 2 * d}")
    if layout == "grid":
        shape, w = lattice_shape(per_face, d)
        if w:
            warnings.append("boundary: " + w)
        tangent = _lattice(shape) if per_face else np.zeros((0, d))
    bnd, faces = [], []
    for axis in range(d):
        if layout == "random":
            tangent = rng.random((per_face, d))
        for side in (0, 1):
            pts = np.insert(tangent, axis, float(side), axis=1)[:, : d + 1]
            # the inserted column is the face coordinate; the rest are tangential + time
            bnd.append(pts)
            faces.append(np.full(pts.shape[0], 2 * axis + side))
    boundary = np.concatenate(bnd) if bnd else np.zeros((0, d + 1))
    faces = np.concatenate(faces) if faces else np.zeros(0, dtype=int)

    initial = np.concatenate([init_space, np.zeros((init_space.shape[0], 1))], 1)
    to_phys = lambda z: lo + z * span  # noqa: E731
    interior, initial, boundary = to_phys(interior), to_phys(initial), to_phys(boundary)
    # snap face coordinates so they sit exactly on the boundary
    for axis in range(d):
        for side in (0, 1):
            boundary[faces == 2 * axis + side, axis] = domain.upper[axis] if side else domain.lower[axis]
    initial[:, -1] = 0.0
    for w in warnings:
        log.warning(w)
    return PointSet(
        torch.from_numpy(interior),
        torch.from_numpy(initial),
        torch.from_numpy(boundary),
        torch.from_numpy(faces.astype(np.int64)),
        COMPUTATIONAL,
        tuple(warnings),
    )


# --------------------------------------------------------------------------
# normalizers


NORMALIZERS = ("product", "r_equivalence", "normalized_product")


def _sqrt(x):
    return x.sqrt() if isinstance(x, Jet) else torch.sqrt(x)


def normalizer_1d(kind, xi):
    """Per-axis normalizer on ``[0, 1]``; works on tensors and jets."""
    one_minus = 1.0 - xi
    if kind == "product":
        return xi * one_minus
    if kind == "r_equivalence":
        return 1.0 - _sqrt(xi * xi + one_minus * one_minus)
    if kind == "normalized_product":
        return xi * one_minus / _sqrt(xi * xi + one_minus * one_minus)
    raise ValueError(f"unknown normalizer {kind!r}; expected one of {NORMALIZERS}")


def normalizer(kind, xi):
    """Product of per-axis normalizers over the last axis of ``xi``."""
    xi = torch.as_tensor(xi, dtype=torch.float64)
    if xi.dim() == 0:
        xi = xi.reshape(1)
    out = normalizer_1d(kind, xi[..., 0])
    for k in range(1, xi.shape[-1]):
        out = out * normalizer_1d(kind, xi[..., k])
    return out


# --------------------------------------------------------------------------
# mesh map


class MeshMap:
    def __init__(self, domain, hidden=(20, 20, 20, 20), normalizer="product", seed=0, net=None):
        if normalizer not in NORMALIZERS:
            raise ValueError(f"unknown normalizer {normalizer!r}")
        self.domain = domain
        self.kind = normalizer
        d = domain.dim
        if net is None:
            net = DenseNetwork(
                [d + 1, *hidden, d],
                lower=[0.0] * (d + 1),
                upper=[1.0] * (d + 1),
                seed=seed,
                zero_last=True,
            )
        self.net = net
        self.lower = torch.tensor(domain.lower, dtype=torch.float64)
        self.lengths = torch.tensor(domain.lengths, dtype=torch.float64)

    @property
    def dim(self):
        return self.domain.dim

    def copy(self, params=None):
        return MeshMap(self.domain, normalizer=self.kind, net=self.net.copy(params))

    def to_unit(self, X):
        X = torch.as_tensor(X, dtype=torch.float64)
        xi = (X[:, : self.dim] - self.lower) / self.lengths
        return torch.cat([xi, X[:, self.dim :] / self.domain.T], dim=1)

    def displacement(self, Z, params=None):
        """``psi(xi) * net(xi, s)`` in unit coordinates, shape ``(N, d)``."""
        psi = normalizer(self.kind, Z[:, : self.dim]).unsqueeze(-1)
        return psi * self.net.forward(Z, params)

    def map_unit(self, Z, params=None):
        return Z[:, : self.dim] + self.displacement(Z, params)

    def map_point(self, X, params=None):
        """Physical image of space-time points; time is left unchanged."""
        X = torch.as_tensor(X, dtype=torch.float64)
        if X.dim() == 1:
            X = X.unsqueeze(0)
        Z = self.to_unit(X)
        x = X[:, : self.dim] + self.lengths * self.displacement(Z, params)
        return torch.cat([x, X[:, self.dim :]], dim=1)

    def jet(self, Z, params=None):
        """Order-2 jet of ``y(xi, s)`` along every unit-box axis and ``s``.

        Coefficients have shapes ``(N, d)`` and ``(d + 1, N, d)``.
        """
        d = self.dim
        D = torch.eye(d + 1, dtype=torch.float64)
        inp = Jet.seed(Z, D, 2)
        out = self.net.jet(inp, params=params)
        xi = Jet([Z[:, :d], D[:, None, :d], 0.0])
        psi = None
        for k in range(d):
            xk = Jet([Z[:, k : k + 1], D[:, None, k : k + 1], 0.0])
            pk = normalizer_1d(self.kind, xk)
            psi = pk if psi is None else psi * pk
        return xi + psi * out

    def save(self, path):
        self.net.save(path)


def map_points(mesh, points, params=None):
    """Map interior and initial points; boundary points are returned unchanged.

    Mapped points are clamped to the closed physical domain.
    """
    lo = torch.tensor(mesh.domain.lower, dtype=torch.float64)
    hi = torch.tensor(mesh.domain.upper, dtype=torch.float64)
    d = mesh.dim

    def apply(X):
        if X.shape[0] == 0:
            return X.clone()
        with torch.no_grad():
            Y = mesh.map_point(X, params)
        Y[:, :d] = torch.maximum(torch.minimum(Y[:, :d], hi), lo)
        return Y

    return replace(
        points,
        interior=apply(points.interior),
        initial=apply(points.initial),
        boundary=points.boundary.clone(),
        frame=PHYSICAL,
    )


# --------------------------------------------------------------------------
# monitors


class Monitor:
    """Positive monitor ``(w + shift) / scale`` with its spatial gradient.

    Subclasses provide ``raw(X) -> (w, grad_x w)``.  ``shift`` and ``scale``
    are fixed by :meth:`calibrate` on a probe grid.
    """

    c_min = 1e-3

    def __init__(self, domain, shift=0.0, scale=1.0, c_min=1e-3):
        self.domain = domain
        self.shift = float(shift)
        self.scale = float(scale)
        self.c_min = float(c_min)

    def raw(self, X):
        raise NotImplementedError

    def __call__(self, X):
        """Monitor value and physical gradient at space-time points."""
        w, g = self.raw(X)
        shifted = w + self.shift
        low = float(shifted.detach().min()) if shifted.numel() else math.inf
        if low < self.c_min:
            idx = int(torch.argmin(shifted.detach()))
            raise MonitorPositivityError(
                f"monitor value {low:.3e} below C_min={self.c_min:g} at point {X[idx].tolist()}"
            )
        return shifted / self.scale, g / self.scale

    def value(self, X):
        return self(X)[0]

    def calibrate(self, n_probe=10_000):
        """Set the positivity shift and the mean-one scale from a probe grid."""
        X = probe_grid(self.domain, n_probe)
        w = torch.cat([self.raw(X[i : i + 5000])[0].detach() for i in range(0, X.shape[0], 5000)])
        self.shift = max(0.0, 2.0 * self.c_min - float(w.min()))
        self.scale = float((w + self.shift).mean())
        return self


class EnergyMonitor(Monitor):
    """Energy density of a frozen solution source."""

    def __init__(self, problem, source, **kw):
        super().__init__(problem.domain, **kw)
        self.problem = problem
        self.source = source

    def raw(self, X):
        return energy_density_and_grad(self.problem, self.source, X)


class FunctionMonitor(Monitor):
    """Monitor from a closed form ``X -> w``; the gradient comes from autograd."""

    def __init__(self, domain, fn, **kw):
        super().__init__(domain, **kw)
        self.fn = fn

    def raw(self, X):
        d = self.domain.dim
        with torch.enable_grad():
            Xr = X if X.requires_grad else X.detach().requires_grad_(True)
            w = self.fn(Xr)
            (g,) = torch.autograd.grad(w.sum(), Xr, create_graph=True, allow_unused=True)
        if g is None:
            g = torch.zeros_like(Xr)
        return w, g[:, :d]


def probe_grid(domain, n=10_000):
    d = domain.dim
    k = max(2, round(n ** (1.0 / (d + 1))))
    lo, hi = domain.space_time_box()
    axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
    grids = np.meshgrid(*axes, indexing="ij")
    return torch.from_numpy(np.stack([g.ravel() for g in grids], -1))


# --------------------------------------------------------------------------
# equidistribution residual and mesh loss


@dataclass(frozen=True)
class EmmConfig:
    tau: float = 0.1
    mode: str = "location"
    delta: float = 1e-6
    c_min: float = 1e-3
    fd_step: float = 1e-4

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.mode not in ("location", "velocity"):
            raise ValueError(f"unknown mesh mode {self.mode!r}")


def _mesh_geometry(mesh, Z, params):
    j = mesh.jet(Z, params)
    y = j.c[0]
    dy = j.c[1]  # (d+1, N, d): along xi_1..xi_d and s
    d2y = 2.0 * j.c[2] if not isinstance(j.c[2], float) else torch.zeros_like(dy)
    return y, dy, d2y


def _physical(mesh, y, Z):
    x = mesh.lower + mesh.lengths * y
    return torch.cat([x, Z[:, mesh.dim :] * mesh.domain.T], dim=1)


def _eep_from(mesh, w, gx, dy, d2y):
    """``E_k = sum_j (grad_y w . dy/dxi_j) dy_k/dxi_j + w d2y_k/dxi_j^2``."""
    d = mesh.dim
    gy = gx * mesh.lengths  # gradient in unit coordinates
    E = 0.0
    for j in range(d):
        dw = (gy * dy[j]).sum(-1, keepdim=True)
        E = E + dw * dy[j] + w.unsqueeze(-1) * d2y[j]
    return E


def eep_residual(mesh, monitor, X, params=None):
    """Equidistribution residual at computational points ``X``, shape ``(N, d)``."""
    Z = mesh.to_unit(X)
    y, dy, d2y = _mesh_geometry(mesh, Z, params)
    w, gx = monitor(_physical(mesh, y, Z))
    return _eep_from(mesh, w, gx, dy, d2y)


def emm_loss(mesh, monitor, points, cfg=EmmConfig(), params=None):
    """Mean squared moving-mesh residual over the interior points."""
    X = points.interior if isinstance(points, PointSet) else points
    if X.shape[0] == 0:
        return torch.zeros(())
    d = mesh.dim
    Z = mesh.to_unit(X)
    y, dy, d2y = _mesh_geometry(mesh, Z, params)
    Xp = _physical(mesh, y, Z)
    w, gx = monitor(Xp)
    E = _eep_from(mesh, w, gx, dy, d2y)
    ys = dy[d]
    if cfg.mode == "location":
        r = ys - E / cfg.tau
    else:
        r = ys + _velocity_term(mesh, monitor, Xp, E, dy, d2y, cfg)
    return (r * r).sum(-1).mean()


def _velocity_term(mesh, monitor, Xp, E, dy, d2y, cfg):
    """``(A + delta I)^-1 (E / tau + E_t)`` with ``A`` and ``E_t`` by differences."""
    d = mesh.dim
    h = cfg.fd_step
    cols = []
    for k in range(d):
        e = torch.zeros(d + 1, dtype=torch.float64)
        e[k] = h * float(mesh.lengths[k])
        Ep = _eep_from(mesh, *monitor(Xp + e), dy, d2y)
        Em = _eep_from(mesh, *monitor(Xp - e), dy, d2y)
        cols.append((Ep - Em) / (2 * h))
    A = torch.stack(cols, -1) + cfg.delta * torch.eye(d, dtype=torch.float64)
    et = torch.zeros(d + 1, dtype=torch.float64)
    et[d] = h * mesh.domain.T
    Et = (_eep_from(mesh, *monitor(Xp + et), dy, d2y) - _eep_from(mesh, *monitor(Xp - et), dy, d2y)) / (2 * h)
    det = torch.linalg.det(A)
    if bool((det.abs() < 1e-300).any()) or not bool(torch.isfinite(det).all()):
        raise SingularJacobianError("regularised mesh Jacobian is singular")
    return torch.linalg.solve(A, (E / cfg.tau + Et).unsqueeze(-1)).squeeze(-1)


@dataclass
class MeshResult:
    mesh: MeshMap
    history: list = field(default_factory=list)


def train_mesh(mesh, monitor, points, budget, lr=1e-3, lbfgs_lr=None, adam_fraction=1.0, cfg=EmmConfig(), callback=None):
    """Minimise :func:`emm_loss` over the mesh parameters; the monitor stays frozen."""
    state = TrainState.fresh(mesh.net.params)

    def objective(p):
        loss = emm_loss(mesh, monitor, points, cfg, p)
        return loss, {"emm": float(loss.detach())}

    n_adam = budget if lbfgs_lr is None else int(round(budget * adam_fraction))
    adam_run(state, objective, n_adam, lr, callback=callback)
    if lbfgs_lr is not None and budget - n_adam > 0:
        lbfgs_run(state, objective, budget - n_adam, lr=lbfgs_lr)
    return MeshResult(mesh.copy(state.params), state.history)


# --------------------------------------------------------------------------
# WAM baseline


def wam_resample(solution, domain, n, k=1.0, seed=0, n_probe=10_000, batch=None):
    """Rejection sampling from ``p ~ (1 + |grad_{x,t} u|^2)^(k/2)``.

    Returns ``(points, info)`` with ``info`` holding the Monte Carlo estimate of
    the normalisation constant and the number of envelope refreshes.
    """
    if k < 1:
        raise ValueError("WAM exponent k must be >= 1")
    rng = np.random.default_rng(seed)
    lo = np.array(domain.lower + (0.0,))
    span = np.array(domain.lengths + (domain.T,))
    dim = domain.dim + 1

    def weight(X):
        j = solution.derivs(X, torch.eye(dim, dtype=torch.float64), 1)
        g = j[1, :, :, 0].detach()
        return torch.sqrt(1.0 + (g * g).sum(0)) ** k

    probe = probe_grid(domain, n_probe)
    envelope = float(weight(probe).max())
    refreshes = 0
    batch = batch or max(1000, 2 * n)
    while True:
        accepted, seen_sum, seen_n = [], 0.0, 0
        restart = False
        while sum(a.shape[0] for a in accepted) < n:
            cand = lo + rng.random((batch, dim)) * span
            Xc = torch.from_numpy(cand)
            w = weight(Xc).numpy()
            seen_sum += float(w.sum())
            seen_n += w.size
            if w.max() > envelope:
                envelope = float(w.max()) * 1.05
                refreshes += 1
                log.info("WAM envelope refreshed to %.6g", envelope)
                restart = True
                break
            u = rng.random(batch)
            accepted.append(cand[u * envelope < w])
        if not restart:
            break
    pts = np.concatenate(accepted)[:n]
    volume = float(np.prod(span))
    info = {"normaliser": seen_sum / seen_n * volume, "envelope": envelope, "refreshes": refreshes}
    return torch.from_numpy(pts), info


# --------------------------------------------------------------------------
# diagnostics of point distributions


def local_density(points_unit, k=10):
    """k-nearest-neighbour density estimate in the unit space-time box."""
    pts = np.asarray(points_unit)
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=k + 1)
    r = dist[:, -1]
    dim = pts.shape[1]
    ball = math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)
    return k / (ball * np.maximum(r, 1e-300) ** dim)


def spatial_density(points_unit, k=10, min_level=8):
    """Point density in space, measured separately on each shared time level.

    Mesh maps move points only in space, so on lattice layouts the density
    is read off within each time level: symmetric neighbour spacing in 1D, a
    spatial k-nearest-neighbour ball otherwise.  Returns ``None`` when the
    points do not share time levels (random layouts).
    """
    pts = np.asarray(points_unit)
    t = pts[:, -1]
    levels, inverse, counts = np.unique(t, return_inverse=True, return_counts=True)
    if counts.min() < min_level:
        return None
    dens = np.empty(len(pts))
    dim = pts.shape[1] - 1
    for lvl in range(len(levels)):
        idx = np.flatnonzero(inverse == lvl)
        if dim == 1:
            order = idx[np.argsort(pts[idx, 0])]
            x = np.concatenate([[0.0], pts[order, 0], [1.0]])
            dens[order] = 2.0 / np.maximum(x[2:] - x[:-2], 1e-300)
        else:
            dens[idx] = local_density(pts[idx, :-1], min(k, len(idx) - 1))
    return dens


def density_monitor_correlation(mesh, monitor, X, k=10):
    """Spearman correlation between local point density and the monitor."""
    Z = mesh.to_unit(X).detach().numpy()
    dens = spatial_density(Z, k)
    if dens is None:
        dens = local_density(Z, k)
    w = monitor(torch.as_tensor(X, dtype=torch.float64))[0].detach().numpy()
    return float(spearmanr(dens, w).statistic)


# --------------------------------------------------------------------------
# CSV


def write_points_csv(points, path):
    d = points.interior.shape[1] - 1
    header = ["tag", *[f"x{i + 1}" for i in range(d)], "t"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for tag, arr in (("interior", points.interior), ("initial", points.initial)):
            for row in arr.tolist():
                w.writerow([tag, *[repr(v) for v in row]])
        for row, face in zip(points.boundary.tolist(), points.faces.tolist()):
            w.writerow([f"boundary{face}", *[repr(v) for v in row]])


def read_points_csv(path, frame=PHYSICAL):
    groups = {"interior": [], "initial": [], "boundary": []}
    faces = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        width = len(header) - 1
        for row in r:
            tag, vals = row[0], [float(v) for v in row[1:]]
            if tag.startswith("boundary"):
                groups["boundary"].append(vals)
                faces.append(int(tag[len("boundary") :]))
            else:
                groups[tag].append(vals)

    def tens(rows):
        return torch.tensor(rows, dtype=torch.float64).reshape(-1, width)

    return PointSet(
        tens(groups["interior"]),
        tens(groups["initial"]),
        tens(groups["boundary"]),
        torch.tensor(faces, dtype=torch.int64),
        frame,
    )


def write_mesh_csv(mesh, times, path, resolution=101):
    """Pairs ``(xi, x(xi, t))`` on a uniform grid at the requested times."""
    d = mesh.dim
    axes = [np.linspace(a, b, resolution) for a, b in zip(mesh.domain.lower, mesh.domain.upper)]
    grids = np.meshgrid(*axes, indexing="ij")
    space = np.stack([g.ravel() for g in grids], -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *[f"xi{i + 1}" for i in range(d)], *[f"x{i + 1}" for i in range(d)]])
        for t in times:
            X = torch.from_numpy(np.concatenate([space, np.full((space.shape[0], 1), t)], 1))
            with torch.no_grad():
                Y = mesh.map_point(X)
            for a, b in zip(X.tolist(), Y.tolist()):
                w.writerow([repr(t), *[repr(v) for v in a[:d]], *[repr(v) for v in b[:d]]])
