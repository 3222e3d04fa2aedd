"""Discrete Dirichlet minimization by nodewise relaxation.

Each interior node is replaced by the exact minimiser of the energy of its
incident edges. For a fixed sign ``s`` the local energy is a quadratic in the
node's sorted values: a neighbour of sign ``s`` (or a collapsed neighbour)
contributes ``|V - N|^2`` and a neighbour of the other sign contributes
``|V - Q[[eta(N)]]|^2`` plus a constant, so the minimiser is the rank-wise
mean of those targets. Both signs are tried and the lower energy wins, ties
keeping the current sign.

Sweeps use red/black ordering, so the compiled sequential kernel and the
vectorised fallback produce the same iterates. A coarse-to-fine cascade
supplies the initial guess on each level, and random restarts perturb it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .fields import (
    Mesh,
    SampledField,
    dirichlet_energy,
    interpolate_nodal,
    nearest_nodal,
)
from .qspace import (
    COLLAPSE_TOL,
    QPoint,
    canonical_arrays,
    gs_metric,
    points_to_arrays,
)

TraceFunction = Callable[[np.ndarray], tuple]


class TraceError(ValueError):
    """Boundary data inconsistent with the mesh."""


@dataclass(frozen=True)
class SolveParams:
    max_sweeps: int = 5000
    tol: float = 1e-10
    restarts: int = 1
    rng_seed: int = 0
    enforce_zero_average: bool = False
    multilevel: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")


@dataclass(frozen=True, eq=False)
class BoundaryTrace:
    """Values on the boundary nodes of one mesh.

    ``source`` (optional) maps an ``(n, dim)`` coordinate array to
    ``(values, signs)``; it lets the solver restate the same data on coarser
    meshes. ``angular`` is the same data as a function of the polar angle,
    present for traces built on disks.
    """

    nodes: np.ndarray
    values: np.ndarray
    signs: np.ndarray
    source: TraceFunction | None = None
    angular: Callable[[np.ndarray], tuple] | None = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.int64)
        vals, sg = canonical_arrays(np.atleast_2d(self.values), self.signs)
        if vals.shape[0] != nodes.shape[0]:
            raise TraceError("trace has different numbers of nodes and values")
        if np.unique(nodes).size != nodes.size:
            raise TraceError("trace lists a boundary node twice")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "signs", sg)

    @property
    def q(self) -> int:
        return self.values.shape[1]

    # -- constructors ----------------------------------------------------
    @classmethod
    def from_function(cls, mesh: Mesh, fn: TraceFunction) -> "BoundaryTrace":
        nodes = np.nonzero(mesh.boundary)[0]
        vals, sg = fn(mesh.coords[nodes])
        return cls(nodes, vals, sg, source=fn)

    @classmethod
    def from_angular(cls, mesh: Mesh, fn: Callable[[np.ndarray], tuple]) -> "BoundaryTrace":
        """Trace on a disk given as a function of the polar angle."""
        if mesh.dim != 2:
            raise TraceError("angular traces need a 2D mesh")

        def source(coords):
            return fn(np.arctan2(coords[:, 1], coords[:, 0]))

        t = cls.from_function(mesh, source)
        return cls(t.nodes, t.values, t.signs, source=source, angular=fn)

    @classmethod
    def from_endpoints(cls, mesh: Mesh, left: QPoint, right: QPoint) -> "BoundaryTrace":
        """1D data ``u(a) = left``, ``u(b) = right``."""
        if mesh.dim != 1:
            raise TraceError("endpoint data needs a 1D mesh")
        if left.q != right.q:
            raise TraceError("endpoint multiplicities differ")
        mid = mesh.origin[0] + 0.5 * (mesh.shape[0] - 1) * mesh.h
        lv, ls = points_to_arrays([left])
        rv, rs = points_to_arrays([right])

        def source(coords):
            right_side = coords[:, 0] > mid
            vals = np.where(right_side[:, None], rv, lv)
            return vals, np.where(right_side, rs[0], ls[0])

        return cls.from_function(mesh, source)

    @classmethod
    def from_points(cls, mesh: Mesh, data: Mapping[int, QPoint]) -> "BoundaryTrace":
        nodes = np.array(sorted(data), dtype=np.int64)
        vals, sg = points_to_arrays([data[int(k)] for k in nodes])
        return cls(nodes, vals, sg)

    @classmethod
    def from_field(cls, field: SampledField) -> "BoundaryTrace":
        nodes = np.nonzero(field.mesh.boundary)[0]
        return cls(nodes, field.values[nodes], field.signs[nodes])

    # -- use -------------------------------------------------------------
    def validate(self, mesh: Mesh) -> None:
        expected = np.nonzero(mesh.boundary)[0]
        got = np.sort(self.nodes)
        if got.shape != expected.shape or not np.array_equal(got, expected):
            missing = np.setdiff1d(expected, got).size
            extra = np.setdiff1d(got, expected).size
            raise TraceError(
                f"trace does not match the mesh boundary ({missing} missing, {extra} extra nodes)"
            )

    def restated(self, mesh: Mesh) -> "BoundaryTrace":
        """The same boundary data on another mesh (needs ``source``)."""
        if self.source is None:
            raise TraceError("trace has no source function to resample")
        t = BoundaryTrace.from_function(mesh, self.source)
        return BoundaryTrace(t.nodes, t.values, t.signs, self.source, self.angular)

    def flipped(self) -> "BoundaryTrace":
        """Same data with every sign reversed."""
        src = ang = None
        if self.source is not None:
            s0 = self.source

            def src(coords):
                v, s = s0(coords)
                return v, -np.asarray(s)

        if self.angular is not None:
            a0 = self.angular

            def ang(phi):
                v, s = a0(phi)
                return v, -np.asarray(s)

        return BoundaryTrace(self.nodes, self.values, -self.signs.astype(np.int64), src, ang)


@dataclass
class SolveReport:
    energy: float
    converged: bool
    sweeps: int
    history: np.ndarray
    restart_energies: list[float]
    levels: list[int]
    best_restart: int
    backend: str = dc_field(default_factory=lambda: kernels.BACKEND)

    def as_dict(self) -> dict:
        return {
            "energy": self.energy,
            "converged": self.converged,
            "sweeps": self.sweeps,
            "restart_energies": list(self.restart_energies),
            "best_restart": self.best_restart,
            "levels": list(self.levels),
        }


# -- local update ---------------------------------------------------------


def local_energy(value: QPoint, neighbors: Sequence[QPoint]) -> float:
    """Sum of squared special distances from ``value`` to the neighbours."""
    return math.fsum(gs_metric(value, n) ** 2 for n in neighbors)


def local_node_update(neighbors: Sequence[QPoint], current: QPoint | None = None) -> QPoint:
    """Minimiser of ``sum_j G_s(V, N_j)^2`` over the special Q-point ``V``.

    The sign of ``current`` (default +1) is kept unless the other sign is
    strictly better.
    """
    if not neighbors:
        raise ValueError("need at least one neighbour")
    q = neighbors[0].q
    start = current if current is not None else QPoint.zero(q)
    vals, sg = points_to_arrays([start, *neighbors])
    nbr = np.full((len(vals), len(neighbors)), -1, dtype=np.int64)
    nbr[0] = np.arange(1, len(vals))
    kernels.get_backend("python").relax_nodes(
        vals, sg, nbr, np.array([0], dtype=np.int64), COLLAPSE_TOL
    )
    return QPoint(tuple(vals[0]), int(sg[0]))


# -- solver ---------------------------------------------------------------


class _Level:
    def __init__(self, mesh: Mesh, trace: BoundaryTrace, kernel):
        trace.validate(mesh)
        self.kernel = kernel
        self.mesh = mesh
        self.trace = trace
        self.nbr = np.ascontiguousarray(mesh.neighbors, dtype=np.int64)
        fixed = np.zeros(mesh.n_nodes, bool)
        fixed[trace.nodes] = True
        self.fixed = fixed
        free = np.nonzero(~fixed)[0]
        col = mesh.color[free]
        self.red = np.ascontiguousarray(free[col == 0])
        self.black = np.ascontiguousarray(free[col == 1])
        self.free = free
        e = mesh.edges
        self.ea = np.ascontiguousarray(e[:, 0])
        self.eb = np.ascontiguousarray(e[:, 1])
        self.scale = mesh.edge_weight / mesh.h**2

    def energy(self, values, signs) -> float:
        return self.scale * self.kernel.edge_energy(values, signs, self.ea, self.eb)

    def impose(self, values, signs):
        values[self.trace.nodes] = self.trace.values
        signs[self.trace.nodes] = self.trace.signs


def _cone_guess(level: _Level):
    """Initial guess: nearest boundary value, shrunk towards its mean with depth."""
    mesh = level.mesh
    bnodes = level.trace.nodes
    coords = mesh.coords
    dist, idx = cKDTree(coords[bnodes]).query(coords)
    depth = dist.max() if dist.max() > 0 else 1.0
    t = (1.0 - dist / depth)[:, None]
    bv = level.trace.values[idx]
    be = bv.mean(axis=1, keepdims=True)
    values = be + t * (bv - be)
    signs = level.trace.signs[idx].astype(np.int8)
    return values, signs


def _prolong(coarse: SampledField, fine: Mesh):
    """Interpolate the signed parts and the mean separately, then recombine."""
    v, s = coarse.values, coarse.signs
    e = v.mean(axis=1, keepdims=True)
    centred = v - e
    plus = np.where((s > 0)[:, None], centred, 0.0)
    minus = np.where((s < 0)[:, None], centred, 0.0)
    pts = fine.coords
    P = interpolate_nodal(coarse.mesh, plus, pts)
    M = interpolate_nodal(coarse.mesh, minus, pts)
    E = interpolate_nodal(coarse.mesh, e, pts)
    pn = np.sum(P**2, axis=1)
    mn = np.sum(M**2, axis=1)
    use_plus = pn >= mn
    # where both parts vanish keep the nearest coarse sign so flips stay mirrored
    near = nearest_nodal(coarse.mesh, s, pts)
    signs = np.where(pn == mn, near, np.where(use_plus, 1, -1)).astype(np.int8)
    values = E + np.where(use_plus[:, None], P, M)
    return values, signs


def _relax(level: _Level, values, signs, params: SolveParams):
    relax = level.kernel.relax_nodes
    hist = [level.energy(values, signs)]
    converged = False
    for _ in range(params.max_sweeps):
        relax(values, signs, level.nbr, level.red, COLLAPSE_TOL)
        relax(values, signs, level.nbr, level.black, COLLAPSE_TOL)
        if params.enforce_zero_average:
            f = level.free
            values[f] -= values[f].mean(axis=1, keepdims=True)
        e = level.energy(values, signs)
        prev = hist[-1]
        hist.append(e)
        if prev - e <= params.tol * max(prev, 1e-300):
            converged = True
            break
    return np.array(hist), converged


def _levels(mesh: Mesh, trace: BoundaryTrace, multilevel: bool, kernel) -> list[_Level]:
    levels = [_Level(mesh, trace, kernel)]
    if not multilevel or trace.source is None:
        return levels
    m = mesh.coarsened()
    while m is not None:
        levels.append(_Level(m, trace.restated(m), kernel))
        m = m.coarsened()
    return levels[::-1]


def solve(
    trace: BoundaryTrace,
    mesh: Mesh,
    params: SolveParams | None = None,
    backend: str | None = None,
) -> tuple[SampledField, SolveReport]:
    """Minimise the discrete energy with the given boundary data.

    Returns the best field over ``params.restarts`` runs and a report whose
    ``history`` is the per-sweep energy of that run on the finest mesh.
    """
    params = params or SolveParams()
    kernel = kernels.get_backend(backend)
    if params.enforce_zero_average and np.abs(trace.values.mean(axis=1)).max(initial=0) > 1e-9:
        raise TraceError("zero-average solve requested but the trace has nonzero mean")
    levels = _levels(mesh, trace, params.multilevel, kernel)
    rng = np.random.default_rng(params.rng_seed)
    scale = float(np.abs(trace.values).max(initial=0.0)) or 1.0

    best = None
    energies = []
    for k in range(params.restarts):
        field = None
        for li, level in enumerate(levels):
            if field is None:
                values, signs = _cone_guess(level)
                if k > 0:
                    values = values + 0.25 * scale * rng.standard_normal(values.shape)
                    signs = (signs * rng.choice(np.array([-1, 1], np.int8), signs.shape)).astype(
                        np.int8
                    )
                    if params.enforce_zero_average:
                        values -= values.mean(axis=1, keepdims=True)
            else:
                values, signs = _prolong(field, level.mesh)
            values, signs = canonical_arrays(values, signs)
            values = np.ascontiguousarray(values)
            signs = np.ascontiguousarray(signs)
            level.impose(values, signs)
            hist, conv = _relax(level, values, signs, params)
            field = SampledField(level.mesh, values, signs)
        energies.append(float(hist[-1]))
        if best is None or hist[-1] < best[1][-1]:
            best = (field, hist, conv, k)

    field, hist, conv, kbest = best
    out = SampledField(mesh, field.values, field.signs, params.enforce_zero_average)
    report = SolveReport(
        energy=dirichlet_energy(out),
        converged=bool(conv),
        sweeps=len(hist) - 1,
        history=hist,
        restart_energies=energies,
        levels=[lv.mesh.shape[0] for lv in levels],
        best_restart=kbest,
        backend=backend or kernels.BACKEND,
    )
    return out, report


def write_history(report: SolveReport, path) -> None:
    """Energy history as CSV with columns ``sweep,energy``."""
    lines = ["sweep,energy"]
    lines += [f"{i},{e!r}" for i, e in enumerate(report.history.tolist())]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
