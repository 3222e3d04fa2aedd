"""Homogeneous minimizers: harmonic-polynomial constructions and their audits.

In the plane every degree-``alpha`` homogeneous harmonic is
``p = rho r^alpha cos(alpha (phi - phi0))``. Its positive set consists of
``alpha`` sectors centred at ``phi0 + 2 pi j / alpha`` and its negative set of
``alpha`` sectors centred at ``phi0 + (2j + 1) pi / alpha``; positive sector
``j`` borders negative sectors ``j`` and ``j - 1`` (mod ``alpha``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from scipy.spatial import cKDTree

from .fields import MINUS, PLUS, ZERO, Mesh, SampledField, decompose
from .frequency import DomainError, profile


class SpecError(ValueError):
    """A homogeneous specification violates one of its constraints."""


class ClassificationError(ValueError):
    """A 1D field does not have the profile of a minimizer."""


@dataclass(frozen=True)
class HarmonicPolynomial2D:
    alpha: int
    c_cos: float
    c_sin: float

    def __post_init__(self):
        if int(self.alpha) != self.alpha or self.alpha < 1:
            raise SpecError("degree must be a positive integer")
        if self.c_cos == 0 and self.c_sin == 0:
            raise SpecError("polynomial coefficients are both zero")

    @property
    def amplitude(self) -> float:
        return math.hypot(self.c_cos, self.c_sin)

    @property
    def phase(self) -> float:
        """``phi0`` with ``p = amplitude r^alpha cos(alpha (phi - phi0))``."""
        return math.atan2(self.c_sin, self.c_cos) / self.alpha

    def _z(self, coords):
        c = np.atleast_2d(np.asarray(coords, dtype=float))
        return c[:, 0] + 1j * c[:, 1]

    def __call__(self, coords) -> np.ndarray:
        return np.real((self.c_cos - 1j * self.c_sin) * self._z(coords) ** self.alpha)

    def gradient(self, coords) -> np.ndarray:
        d = self.alpha * (self.c_cos - 1j * self.c_sin) * self._z(coords) ** (self.alpha - 1)
        return np.stack([d.real, -d.imag], axis=1)

    def sector(self, coords) -> tuple[np.ndarray, np.ndarray]:
        """Analytic sector index of each point as ``(plus_index, minus_index)``."""
        c = np.atleast_2d(np.asarray(coords, dtype=float))
        t = self.alpha * (np.arctan2(c[:, 1], c[:, 0]) - self.phase)
        plus = np.mod(np.rint(t / (2 * np.pi)), self.alpha).astype(np.int64)
        minus = np.mod(np.rint((t - np.pi) / (2 * np.pi)), self.alpha).astype(np.int64)
        return plus, minus

    def neighbours_of_plus(self, j: int) -> tuple[int, int]:
        return j % self.alpha, (j - 1) % self.alpha


@dataclass(frozen=True, eq=False)
class HomogeneousSpec:
    """Polynomial plus one coefficient vector per nodal component.

    ``plus[j]`` and ``minus[j]`` are the vectors of the ``j``-th positive and
    negative sectors.
    """

    p: HarmonicPolynomial2D
    plus: np.ndarray
    minus: np.ndarray

    def __post_init__(self):
        plus = np.atleast_2d(np.asarray(self.plus, dtype=float))
        minus = np.atleast_2d(np.asarray(self.minus, dtype=float))
        object.__setattr__(self, "plus", plus)
        object.__setattr__(self, "minus", minus)

    @property
    def q(self) -> int:
        return self.plus.shape[1]

    @classmethod
    def uniform(cls, p: HarmonicPolynomial2D, vector) -> "HomogeneousSpec":
        v = np.asarray(vector, dtype=float)
        return cls(p, np.tile(v, (p.alpha, 1)), np.tile(v, (p.alpha, 1)))

    def violations(self, tol: float = 1e-9) -> list[str]:
        a = self.p.alpha
        out = []
        if self.plus.shape[0] != a or self.minus.shape[0] != a:
            out.append(f"need {a} vectors per sign, got {self.plus.shape[0]} and {self.minus.shape[0]}")
            return out
        if self.plus.shape[1] != self.minus.shape[1]:
            out.append("plus and minus vectors have different lengths")
            return out
        for name, A in (("+", self.plus), ("-", self.minus)):
            for j, v in enumerate(A):
                if abs(v.sum()) > tol:
                    out.append(f"zero-sum constraint fails for component {name}{j}: sum = {v.sum():.3g}")
        for j in range(a):
            for k in self.p.neighbours_of_plus(j):
                n1 = np.linalg.norm(self.plus[j])
                n2 = np.linalg.norm(self.minus[k])
                if abs(n1 - n2) > tol * max(1.0, n1, n2):
                    out.append(
                        f"transmission constraint fails between +{j} and -{k}: {n1:.6g} != {n2:.6g}"
                    )
        return out

    def validate(self, tol: float = 1e-9) -> None:
        bad = self.violations(tol)
        if bad:
            raise SpecError("; ".join(bad))


def write_spec(spec: HomogeneousSpec, path) -> None:
    lines = [f"{spec.p.alpha} {spec.p.c_cos!r} {spec.p.c_sin!r}"]
    for name, A in (("+", spec.plus), ("-", spec.minus)):
        for j, v in enumerate(A):
            lines.append(f"{name} {j} " + " ".join(repr(float(x)) for x in v))
    Path(path).write_text("\n".join(lines) + "\n")


def read_spec(path, validate: bool = True) -> HomogeneousSpec:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise SpecError("empty specification file")
    try:
        alpha, cc, cs = int(rows[0][0]), float(rows[0][1]), float(rows[0][2])
    except (IndexError, ValueError) as exc:
        raise SpecError(f"malformed header {' '.join(rows[0])!r}") from exc
    p = HarmonicPolynomial2D(alpha, cc, cs)
    comps = {"+": {}, "-": {}}
    for row in rows[1:]:
        sign = row[0].replace("−", "-")
        if sign not in comps or len(row) < 3:
            raise SpecError(f"malformed component line {' '.join(row)!r}")
        comps[sign][int(row[1])] = [float(x.replace("−", "-")) for x in row[2:]]
    for sign in comps:
        if sorted(comps[sign]) != list(range(alpha)):
            raise SpecError(f"expected components 0..{alpha - 1} of sign {sign}")
    spec = HomogeneousSpec(
        p,
        np.array([comps["+"][j] for j in range(alpha)]),
        np.array([comps["-"][j] for j in range(alpha)]),
    )
    if validate:
        spec.validate()
    return spec


# -- nodal components --------------------------------------------------------


@dataclass
class NodalPartition:
    plus_labels: np.ndarray
    minus_labels: np.ndarray
    zero_band: np.ndarray
    n_plus: int
    n_minus: int
    alpha: int

    @property
    def consistent(self) -> bool:
        return self.n_plus == self.alpha and self.n_minus == self.alpha


def components_of_nodal_partition(p: HarmonicPolynomial2D, mesh: Mesh) -> NodalPartition:
    """Flood-fill the positive and negative sets of ``p`` outside the zero band.

    The zero band is ``|p| <= h |grad p|``. Labels are per node, 0 meaning
    "not in a component of that sign".
    """
    if mesh.dim != 2:
        raise ValueError("nodal partitions need a 2D mesh")
    c = mesh.coords
    val = p(c)
    band = np.abs(val) <= mesh.h * np.linalg.norm(p.gradient(c), axis=1)
    out = []
    for side in (val > 0, val < 0):
        grid = np.zeros(mesh.shape, bool)
        grid[mesh.mask] = side & ~band
        lab, n = ndimage.label(grid)
        out.append((lab[mesh.mask], n))
    (pl, npl), (ml, nml) = out
    return NodalPartition(pl, ml, band, npl, nml, p.alpha)


# -- construction ------------------------------------------------------------


def build_homogeneous(spec: HomogeneousSpec, mesh: Mesh, validate: bool = True) -> SampledField:
    """``u = (A_j p, +1)`` on positive sector ``j``, ``(A_j p, -1)`` on negative ones."""
    if validate:
        spec.validate()
    c = mesh.coords
    val = spec.p(c)
    jp, jm = spec.p.sector(c)
    vals = np.where(
        (val > 0)[:, None],
        spec.plus[jp] * val[:, None],
        spec.minus[jm] * val[:, None],
    )
    vals[val == 0] = 0.0
    signs = np.where(val < 0, -1, 1)
    zero_avg = bool(np.all(np.abs(spec.plus.sum(axis=1)) <= 1e-9) and np.all(np.abs(spec.minus.sum(axis=1)) <= 1e-9))
    return SampledField(mesh, vals, signs, zero_average=zero_avg)


def model_spec(q: int = 2) -> HomogeneousSpec:
    """Spec of ``({x1, -x1}, sign(x1))`` (``q = 2``) or its zero-padded analogue."""
    v = np.zeros(q)
    v[0], v[-1] = 1.0, -1.0
    return HomogeneousSpec.uniform(HarmonicPolynomial2D(1, 1.0, 0.0), v)


def model_field(mesh: Mesh) -> SampledField:
    """The model field on any mesh; in 1D it is ``({x, -x}, sign(x))``."""
    if mesh.dim == 1:
        x = mesh.coords[:, 0]
        return SampledField(mesh, np.stack([x, -x], axis=1), np.where(x < 0, -1, 1))
    return build_homogeneous(model_spec(), mesh)


# -- 1D classification ---------------------------------------------------------


@dataclass
class OneDClassification:
    singular_point: float | None
    a: np.ndarray
    b: np.ndarray
    residual: float
    zero_sum: bool
    norms_match: bool
    tolerance: float

    @property
    def valid(self) -> bool:
        return self.zero_sum and (self.singular_point is None or self.norms_match)

    @property
    def norm_gap(self) -> float:
        return abs(float(np.linalg.norm(self.a) - np.linalg.norm(self.b)))


def _affine_fit(x, V):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, V, rcond=None)
    res = V - A @ coef
    return coef[0], coef[1], res


def _clusters(idx: np.ndarray) -> list[np.ndarray]:
    if idx.size == 0:
        return []
    breaks = np.nonzero(np.diff(idx) > 1)[0] + 1
    return np.split(idx, breaks)


def classify_1d(field: SampledField, tol: float = 0.02) -> OneDClassification:
    """Locate the singular point of a 1D profile and fit the sheet slopes.

    Each side of the singular point is fitted sheet by sheet with an affine
    function. ``a`` are the slopes to the right, ``b`` those to the left, as
    sorted multisets, and the singular point is the midpoint of the two
    sides' zero crossings.
    """
    mesh = field.mesh
    if mesh.dim != 1:
        raise ValueError("classify_1d needs a 1D field")
    x = mesh.coords[:, 0]
    lab = decompose(field)
    zero_nodes = np.nonzero(lab == ZERO)[0]
    # a sign change between two non-collapsed neighbours marks a crossing edge
    nz = lab != ZERO
    change = np.nonzero(nz[:-1] & nz[1:] & (lab[:-1] != lab[1:]))[0]
    marks = np.unique(np.concatenate([zero_nodes, change, change + 1]))
    groups = _clusters(marks)
    V = field.values
    if not groups:
        _, slope, res = _affine_fit(x, V)
        s = np.sort(slope)
        rms = float(np.sqrt(np.mean(res**2)))
        return OneDClassification(None, s, s, rms, bool(abs(s.sum()) <= tol), True, tol)
    if len(groups) > 1:
        raise ClassificationError(f"{len(groups)} separate zero clusters; not a minimizer profile")
    g = groups[0]
    left = np.arange(0, g[0] + (0 if lab[g[0]] == ZERO else 1))
    right = np.arange(g[-1] + (1 if lab[g[-1]] == ZERO else 0), mesh.n_nodes)
    if left.size < 2 or right.size < 2:
        raise ClassificationError("singular point too close to the boundary to fit slopes")
    c_l, s_l, r_l = _affine_fit(x[left], V[left])
    c_r, s_r, r_r = _affine_fit(x[right], V[right])

    def root(c, s):
        return float(-np.dot(c, s) / np.dot(s, s)) if np.dot(s, s) > 0 else math.nan

    x0 = 0.5 * (root(c_l, s_l) + root(c_r, s_r))
    if not math.isfinite(x0):
        x0 = float(x[g].mean())
    a = np.sort(s_r)
    b = np.sort(s_l)
    rms = float(np.sqrt(np.mean(np.concatenate([r_l.ravel(), r_r.ravel()]) ** 2)))
    zero_sum = bool(abs(a.sum()) <= tol and abs(b.sum()) <= tol)
    match = bool(abs(np.linalg.norm(a) - np.linalg.norm(b)) <= tol)
    return OneDClassification(x0, a, b, rms, zero_sum, match, tol)


def optimal_1d_singular_point(left_norm: float, right_norm: float, a: float = -1.0, b: float = 1.0):
    """Minimise ``|u(a)|^2 / (x0 - a) + |u(b)|^2 / (b - x0)`` over ``x0``.

    Returns ``(x0, energy)``; this is the energy of the broken-linear profile
    through a zero at ``x0``.
    """

    def E(x0):
        return left_norm**2 / (x0 - a) + right_norm**2 / (b - x0)

    res = minimize_scalar(E, bounds=(a + 1e-9, b - 1e-9), method="bounded", options={"xatol": 1e-12})
    return float(res.x), float(res.fun)


# -- stationarity --------------------------------------------------------------


@dataclass
class StationarityReport:
    laplacian_residual: float
    transmission_residual: float
    transmission_mean: float
    energy_density_deviation: float


def _sheet_gradients_sq(field: SampledField, lab: np.ndarray) -> np.ndarray:
    """``sum_i |grad u_i|^2`` per node from same-label differences (nan if unavailable)."""
    mesh = field.mesh
    nb = mesh.neighbors
    V = field.values
    h = mesh.h
    out = np.zeros(mesh.n_nodes)
    ok = np.ones(mesh.n_nodes, bool)
    for axis in range(mesh.dim):
        lo, hi = nb[:, 2 * axis], nb[:, 2 * axis + 1]
        use_lo = (lo >= 0) & (lab[np.maximum(lo, 0)] == lab)
        use_hi = (hi >= 0) & (lab[np.maximum(hi, 0)] == lab)
        d = np.full(V.shape, np.nan)
        both = use_lo & use_hi
        d[both] = (V[hi[both]] - V[lo[both]]) / (2 * h)
        only_hi = use_hi & ~use_lo
        d[only_hi] = (V[hi[only_hi]] - V[only_hi]) / h
        only_lo = use_lo & ~use_hi
        d[only_lo] = (V[only_lo] - V[lo[only_lo]]) / h
        ok &= use_lo | use_hi
        out += np.sum(d**2, axis=1)
    out[~ok] = np.nan
    return out


def check_stationarity(field: SampledField, band_width: int = 2) -> StationarityReport:
    """Residuals of the Euler-Lagrange conditions.

    1D: largest relative deviation of the per-edge energy density from its
    mean over edges not touching the sign change. 2D: the largest 5-point
    Laplacian of any sheet at nodes whose whole stencil has one label, and the
    transmission mismatch ``sum |grad u+_i|^2 - sum |grad u-_i|^2`` between
    each node of the positive layer along the zero set and the nearest node
    of the negative layer.
    """
    mesh = field.mesh
    lab = decompose(field)
    if mesh.dim == 1:
        e = mesh.edges
        same = (lab[e[:, 0]] == lab[e[:, 1]]) & (lab[e[:, 0]] != ZERO)
        dens = np.sum((field.values[e[same, 1]] - field.values[e[same, 0]]) ** 2, axis=1) / mesh.h**2
        dev = float(np.max(np.abs(dens - dens.mean())) / dens.mean()) if dens.size and dens.mean() > 0 else 0.0
        return StationarityReport(0.0, 0.0, 0.0, dev)

    nb = mesh.neighbors
    interior = (nb >= 0).all(axis=1) & (lab != ZERO)
    stencil_same = interior.copy()
    for k in range(nb.shape[1]):
        stencil_same &= lab[np.maximum(nb[:, k], 0)] == lab
    V = field.values
    idx = np.nonzero(stencil_same)[0]
    lap = (V[nb[idx]].sum(axis=1) - 4 * V[idx]) / mesh.h**2
    lap_res = float(np.abs(lap).max(initial=0.0))

    G = _sheet_gradients_sq(field, lab)
    # nodes within band_width steps of the other label or of the zero set
    grid_lab = np.zeros(mesh.shape, np.int8)
    grid_lab[mesh.mask] = lab
    struct = ndimage.generate_binary_structure(2, 1)
    layer = {}
    for s in (PLUS, MINUS):
        other = np.zeros(mesh.shape, bool)
        other[mesh.mask] = lab != s
        near = ndimage.binary_dilation(other, struct, iterations=band_width)[mesh.mask]
        layer[s] = np.nonzero((lab == s) & near & np.isfinite(G) & ~mesh.boundary)[0]
    if layer[PLUS].size == 0 or layer[MINUS].size == 0:
        return StationarityReport(lap_res, 0.0, 0.0, 0.0)
    tree = cKDTree(mesh.coords[layer[MINUS]])
    _, k = tree.query(mesh.coords[layer[PLUS]])
    diff = G[layer[PLUS]] - G[layer[MINUS][k]]
    return StationarityReport(lap_res, float(np.abs(diff).max()), float(diff.mean()), 0.0)


# -- integer frequency -----------------------------------------------------------


@dataclass
class IntegerFrequencyReport:
    I_bar: float
    nearest: int
    distance: float
    passed: bool
    radii: np.ndarray
    I: np.ndarray


def measured_frequency_is_integer(field: SampledField, center=(0.0, 0.0), radii=None, tol: float = 0.05):
    """Median of ``I(r)`` over a decade of radii and its distance to a positive integer."""
    mesh = field.mesh
    x = np.atleast_1d(np.asarray(center, dtype=float))
    if radii is None:
        if mesh.kind == "disk":
            reach = mesh.half_width - np.hypot(*x)
        else:
            lo = np.asarray(mesh.origin)
            hi = lo + (np.asarray(mesh.shape) - 1) * mesh.h
            reach = float(min(np.min(x - lo), np.min(hi - x)))
        r_max = 0.8 * reach
        radii = np.geomspace(r_max / 10, r_max, 12)
    prof = profile(field, x, radii)
    ok = np.isfinite(prof.I)
    if not ok.any():
        raise DomainError("H vanishes on every sampled radius")
    I_bar = float(np.median(prof.I[ok]))
    nearest = max(1, int(round(I_bar)))
    dist = abs(I_bar - nearest)
    return IntegerFrequencyReport(I_bar, nearest, dist, dist <= tol, prof.radii, prof.I)
