"""Sampled special Q-valued functions on uniform 1D and 2D meshes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from .qspace import (
    COLLAPSE_TOL,
    QPoint,
    canonical_arrays,
    collapsed_arrays,
    gs_sq_arrays,
)

PLUS, MINUS, ZERO = 1, -1, 0


class FieldFormatError(ValueError):
    """Malformed field file."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform grid, optionally masked (disks are masked squares).

    Nodes are the grid points where ``mask`` is true, numbered in C order of
    the grid index ``(i, j)`` with ``i`` running along the first axis.
    """

    dim: int
    shape: tuple[int, ...]
    origin: tuple[float, ...]
    h: float
    mask: np.ndarray = dc_field(repr=False)
    kind: str = "grid"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        if len(self.shape) != self.dim or len(self.origin) != self.dim:
            raise ValueError("shape/origin do not match dim")
        if not self.h > 0:
            raise ValueError("mesh spacing must be positive")
        if min(self.shape) < 3:
            raise ValueError("need at least 3 nodes per axis")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != tuple(self.shape):
            raise ValueError("mask shape does not match grid shape")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    # -- constructors ----------------------------------------------------
    @classmethod
    def interval(cls, a: float, b: float, n: int) -> "Mesh":
        if not b > a:
            raise ValueError("empty interval")
        return cls(1, (n,), (float(a),), (b - a) / (n - 1), np.ones(n, bool), "interval")

    @classmethod
    def rectangle(cls, nx: int, ny: int, origin=(0.0, 0.0), h: float = 1.0) -> "Mesh":
        return cls(2, (nx, ny), tuple(map(float, origin)), float(h), np.ones((nx, ny), bool))

    @classmethod
    def square(cls, n: int, half_width: float = 1.0) -> "Mesh":
        """Full ``n x n`` grid on ``[-w, w]^2``."""
        h = 2.0 * half_width / (n - 1)
        return cls(2, (n, n), (-half_width, -half_width), h, np.ones((n, n), bool), "square")

    @classmethod
    def disk(cls, n: int, radius: float = 1.0) -> "Mesh":
        """Grid nodes of ``[-R, R]^2`` (``n`` per side) lying in the closed disk."""
        h = 2.0 * radius / (n - 1)
        ax = -radius + h * np.arange(n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        mask = X**2 + Y**2 <= radius**2 * (1 + 1e-12)
        mesh = cls(2, (n, n), (-radius, -radius), h, mask, "disk")
        _, ncomp = ndimage.label(mask)
        if ncomp != 1:
            raise ValueError("disk mask is not connected")
        return mesh

    # -- geometry --------------------------------------------------------
    @cached_property
    def grid_index(self) -> np.ndarray:
        """Node id per grid point, -1 where masked out."""
        idx = np.full(self.shape, -1, dtype=np.int64)
        idx[self.mask] = np.arange(int(self.mask.sum()))
        return idx

    @cached_property
    def ij(self) -> np.ndarray:
        return np.argwhere(self.mask)

    @property
    def n_nodes(self) -> int:
        return int(self.mask.sum())

    @cached_property
    def coords(self) -> np.ndarray:
        return np.asarray(self.origin) + self.h * self.ij

    @cached_property
    def edges(self) -> np.ndarray:
        """Axis-aligned nearest-neighbour edges as pairs of node ids."""
        gi = self.grid_index
        out = []
        for axis in range(self.dim):
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            a = gi[tuple(lo)].ravel()
            b = gi[tuple(hi)].ravel()
            keep = (a >= 0) & (b >= 0)
            out.append(np.stack([a[keep], b[keep]], axis=1))
        return np.concatenate(out, axis=0)

    @property
    def edge_weight(self) -> float:
        """Cell measure attached to one undirected edge (``h`` in 1D, ``h^2`` in 2D)."""
        return self.h**self.dim

    @cached_property
    def edge_midpoints(self) -> np.ndarray:
        c = self.coords
        e = self.edges
        return 0.5 * (c[e[:, 0]] + c[e[:, 1]])

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``(n, 2*dim)`` neighbour ids, -1 where absent."""
        gi = np.pad(self.grid_index, 1, constant_values=-1)
        nb = []
        ij = self.ij + 1
        for axis in range(self.dim):
            for step in (-1, 1):
                k = ij.copy()
                k[:, axis] += step
                nb.append(gi[tuple(k.T)])
        return np.stack(nb, axis=1)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Nodes missing at least one axis neighbour."""
        return (self.neighbors < 0).any(axis=1)

    @cached_property
    def color(self) -> np.ndarray:
        """Red/black parity of each node (0 or 1)."""
        return (self.ij.sum(axis=1) % 2).astype(np.int8)

    @cached_property
    def fill_indices(self) -> tuple:
        """Grid index of the nearest unmasked point, for every grid point."""
        _, inds = ndimage.distance_transform_edt(~self.mask, return_indices=True)
        return tuple(inds)

    def node_measure(self) -> float:
        return self.h**self.dim

    @property
    def half_width(self) -> float:
        return 0.5 * (self.shape[0] - 1) * self.h

    def coarsened(self) -> "Mesh | None":
        """Same domain with roughly half the nodes per axis, or None if too coarse."""
        n = self.shape[0]
        nc = (n + 1) // 2 if n % 2 else n // 2 + 1
        if nc < 5:
            return None
        if self.kind == "interval":
            return Mesh.interval(self.origin[0], self.origin[0] + (n - 1) * self.h, nc)
        if self.kind == "square" and self.shape[0] == self.shape[1]:
            return Mesh.square(nc, self.half_width)
        if self.kind == "disk":
            return Mesh.disk(nc, self.half_width)
        return None

    def locate(self, points) -> np.ndarray:
        """Nearest node id of each point (-1 if that grid point is masked out)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = np.rint((pts - np.asarray(self.origin)) / self.h).astype(np.int64)
        for axis in range(self.dim):
            k[:, axis] = np.clip(k[:, axis], 0, self.shape[axis] - 1)
        return self.grid_index[tuple(k.T)]

    def same_geometry(self, other: "Mesh") -> bool:
        return (
            self.dim == other.dim
            and self.shape == other.shape
            and np.allclose(self.origin, other.origin)
            and math.isclose(self.h, other.h)
            and np.array_equal(self.mask, other.mask)
        )


class SampledField:
    """A special Q-valued function given by its node values.

    ``values`` is an ``(n_nodes, q)`` array of sorted rows, ``signs`` an
    ``(n_nodes,)`` array of +-1, both in canonical form.
    """

    def __init__(self, mesh: Mesh, values, signs, zero_average: bool = False):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != mesh.n_nodes:
            raise ValueError(
                f"field has {values.shape[0]} nodes, mesh has {mesh.n_nodes}"
            )
        signs = np.broadcast_to(np.asarray(signs), (mesh.n_nodes,))
        self.mesh = mesh
        self.values, self.signs = canonical_arrays(values, signs)
        self.zero_average = bool(zero_average)
        if self.zero_average:
            worst = np.abs(self.values.mean(axis=1)).max(initial=0.0)
            if worst > 1e-9:
                raise ValueError(f"zero_average field has |eta| = {worst:.3g}")

    @property
    def q(self) -> int:
        return self.values.shape[1]

    def point(self, i: int) -> QPoint:
        return QPoint(tuple(self.values[i]), int(self.signs[i]))

    def points(self) -> list[QPoint]:
        return [self.point(i) for i in range(self.mesh.n_nodes)]

    @classmethod
    def from_points(cls, mesh: Mesh, points, zero_average: bool = False):
        pts = list(points)
        vals = np.array([p.values for p in pts], dtype=float)
        sg = np.array([p.sign for p in pts])
        return cls(mesh, vals, sg, zero_average)

    def norm_sq(self) -> np.ndarray:
        """``|u(x)|^2`` at every node."""
        return np.sum(self.values**2, axis=1)

    def eta(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def scaled(self, lam: float) -> "SampledField":
        vals = lam * self.values
        signs = self.signs if lam >= 0 else -self.signs
        return SampledField(self.mesh, vals, signs, self.zero_average)

    def sign_flipped(self) -> "SampledField":
        return SampledField(self.mesh, self.values, -self.signs, self.zero_average)

    def equals(self, other: "SampledField", atol: float = 0.0) -> bool:
        return (
            self.mesh.same_geometry(other.mesh)
            and self.values.shape == other.values.shape
            and np.allclose(self.values, other.values, rtol=0.0, atol=atol)
            and np.array_equal(self.signs, other.signs)
        )


def decompose(field: SampledField) -> np.ndarray:
    """Per-node label: PLUS, MINUS, or ZERO where ``u = Q[[eta(u)]]``."""
    labels = np.where(field.signs > 0, PLUS, MINUS).astype(np.int8)
    labels[collapsed_arrays(field.values, COLLAPSE_TOL)] = ZERO
    return labels


def edge_energies(field: SampledField, resolve_interface: bool = False) -> np.ndarray:
    """Energy carried by each mesh edge, ``w * G_s(u(a), u(b))^2 / h^2``.

    With ``resolve_interface`` an edge whose endpoints have opposite signs
    instead carries ``(|a - eta_a| + |b - eta_b|)^2 + Q |eta_a - eta_b|^2``,
    the least energy of a profile that vanishes somewhere inside the edge.
    """
    e = field.mesh.edges
    va, vb = field.values[e[:, 0]], field.values[e[:, 1]]
    sa, sb = field.signs[e[:, 0]], field.signs[e[:, 1]]
    d2 = gs_sq_arrays(va, sa, vb, sb)
    if resolve_interface:
        cross = sa != sb
        if cross.any():
            a, b = va[cross], vb[cross]
            ea, eb = a.mean(axis=1), b.mean(axis=1)
            ra = np.sqrt(np.sum((a - ea[:, None]) ** 2, axis=1))
            rb = np.sqrt(np.sum((b - eb[:, None]) ** 2, axis=1))
            d2 = d2.copy()
            d2[cross] = (ra + rb) ** 2 + field.q * (ea - eb) ** 2
    return field.mesh.edge_weight * d2 / field.mesh.h**2


def dirichlet_energy(field: SampledField, region=None) -> float:
    """Discrete Dirichlet energy over edges with both endpoints in ``region``.

    ``region`` is a boolean node mask (or an index array); ``None`` means the
    whole mesh.
    """
    contrib = edge_energies(field)
    if region is not None:
        region = np.asarray(region)
        if region.dtype != bool:
            m = np.zeros(field.mesh.n_nodes, bool)
            m[region] = True
            region = m
        e = field.mesh.edges
        contrib = contrib[region[e[:, 0]] & region[e[:, 1]]]
    return float(np.sum(contrib))


def lipschitz_estimate(field: SampledField) -> float:
    e = field.mesh.edges
    d2 = gs_sq_arrays(
        field.values[e[:, 0]], field.signs[e[:, 0]], field.values[e[:, 1]], field.signs[e[:, 1]]
    )
    return float(np.sqrt(d2.max(initial=0.0)) / field.mesh.h)


def field_from_function(mesh: Mesh, fn, zero_average: bool = False) -> SampledField:
    """Sample ``fn(coords) -> (values (n, q), signs (n,))`` at the nodes."""
    vals, signs = fn(mesh.coords)
    return SampledField(mesh, vals, signs, zero_average)


# -- interpolation -------------------------------------------------------


def _extended_grid(mesh: Mesh, arr: np.ndarray) -> np.ndarray:
    """Per-node array spread onto the full grid, masked points filled by nearest node."""
    full = np.zeros(mesh.shape + arr.shape[1:], dtype=arr.dtype)
    full[mesh.mask] = arr
    if not mesh.mask.all():
        full = full[mesh.fill_indices]
    return full


def interpolate_nodal(mesh: Mesh, arr, points) -> np.ndarray:
    """Multilinear interpolation of a per-node array at arbitrary points.

    Grid points outside the mask take the value of their nearest node, so
    points slightly outside a disk are handled by constant extension.
    """
    arr = np.asarray(arr, dtype=float)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    t = (pts - np.asarray(mesh.origin)) / mesh.h
    full = _extended_grid(mesh, arr)
    base = np.floor(t).astype(np.int64)
    for axis in range(mesh.dim):
        base[:, axis] = np.clip(base[:, axis], 0, mesh.shape[axis] - 2)
    frac = t - base
    tail = (slice(None),) + (None,) * (arr.ndim - 1)
    if mesh.dim == 1:
        i = base[:, 0]
        f = frac[:, 0][tail]
        return (1 - f) * full[i] + f * full[i + 1]
    i, j = base[:, 0], base[:, 1]
    fx, fy = frac[:, 0][tail], frac[:, 1][tail]
    return (
        (1 - fx) * (1 - fy) * full[i, j]
        + fx * (1 - fy) * full[i + 1, j]
        + (1 - fx) * fy * full[i, j + 1]
        + fx * fy * full[i + 1, j + 1]
    )


def nearest_nodal(mesh: Mesh, arr, points) -> np.ndarray:
    """Value of the nearest grid point (masked points use their nearest node)."""
    arr = np.asarray(arr)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    near = np.rint((pts - np.asarray(mesh.origin)) / mesh.h).astype(np.int64)
    for axis in range(mesh.dim):
        near[:, axis] = np.clip(near[:, axis], 0, mesh.shape[axis] - 1)
    return _extended_grid(mesh, arr)[tuple(near.T)]


def sample_sheets(field: SampledField, points) -> tuple[np.ndarray, np.ndarray]:
    """Interpolate sorted sheet values (multi-linear) and take the nearest sign."""
    vals = interpolate_nodal(field.mesh, field.values, points)
    signs = nearest_nodal(field.mesh, field.signs, points)
    return vals, signs


# -- file format ---------------------------------------------------------


def write_field(field: SampledField, path) -> None:
    """Write the text field format.

    Header ``1 q N a h`` or ``2 q nx ny x0 y0 h n_nodes``; then one line per
    node with its coordinates and the Q-point encoding.
    """
    mesh = field.mesh
    lines = []
    if mesh.dim == 1:
        lines.append(f"1 {field.q} {mesh.shape[0]} {mesh.origin[0]!r} {mesh.h!r}")
    else:
        lines.append(
            f"2 {field.q} {mesh.shape[0]} {mesh.shape[1]} "
            f"{mesh.origin[0]!r} {mesh.origin[1]!r} {mesh.h!r} {mesh.n_nodes}"
        )
    coords = mesh.coords
    for i in range(mesh.n_nodes):
        c = " ".join(repr(float(x)) for x in coords[i])
        lines.append(f"{c} {field.point(i).encode()}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path, zero_average: bool = False) -> SampledField:
    text = Path(path).read_text().splitlines()
    rows = [ln.split() for ln in text if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise FieldFormatError("empty field file")
    head = rows[0]
    try:
        dim, q = int(head[0]), int(head[1])
        if dim == 1:
            n = int(head[2])
            a, h = float(head[3]), float(head[4])
            mesh = Mesh(1, (n,), (a,), h, np.ones(n, bool))
            expected = n
        elif dim == 2:
            nx, ny = int(head[2]), int(head[3])
            x0, y0, h = float(head[4]), float(head[5]), float(head[6])
            expected = int(head[7])
            mesh = None
        else:
            raise FieldFormatError(f"unsupported dim {dim}")
    except (IndexError, ValueError) as exc:
        raise FieldFormatError(f"malformed header {' '.join(head)!r}") from exc
    body = rows[1:]
    if len(body) != expected:
        raise FieldFormatError(f"header announces {expected} nodes, file has {len(body)}")
    coords = np.empty((len(body), dim))
    pts = []
    for k, row in enumerate(body):
        if len(row) != dim + 1:
            raise FieldFormatError(f"node line {k + 2}: expected {dim + 1} fields")
        coords[k] = [float(x) for x in row[:dim]]
        try:
            p = QPoint.parse(row[dim])
        except ValueError as exc:
            raise FieldFormatError(f"node line {k + 2}: {exc}") from exc
        if p.q != q:
            raise FieldFormatError(f"node line {k + 2}: multiplicity {p.q} != {q}")
        pts.append(p)
    if dim == 2:
        ij = np.rint((coords - np.array([x0, y0])) / h).astype(np.int64)
        if (ij < 0).any() or (ij[:, 0] >= nx).any() or (ij[:, 1] >= ny).any():
            raise FieldFormatError("node outside the announced grid")
        mask = np.zeros((nx, ny), bool)
        mask[ij[:, 0], ij[:, 1]] = True
        if mask.sum() != len(body):
            raise FieldFormatError("duplicate node coordinates")
        mesh = Mesh(2, (nx, ny), (x0, y0), h, mask)
        order = np.argsort(mesh.grid_index[ij[:, 0], ij[:, 1]])
        pts = [pts[k] for k in order]
    else:
        order = np.argsort(coords[:, 0])
        pts = [pts[k] for k in order]
    return SampledField.from_points(mesh, pts, zero_average)
