"""Whitney-type cube refinement for Q-sheeted graphs over the plane.

The current is ``Q`` graphs over ``[-4, 4]^2`` in codimension one, sampled on
a uniform grid whose spacing is dyadic. Cubes of generation ``j >= N0`` have
half-side ``2^-j`` and are much finer than the sample spacing, so every cube
inherits the excess and height of the ball centred over the sample node
nearest to its centre. Cubes that keep refining are never enumerated: the
forest stores only stopped cubes, and the contact set is the complement of
their union.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .fields import Mesh, SampledField
from .kernels import get_backend

M = 2  # base dimension
HALF = 4.0
CLASSES = ("We", "Wh", "Wn")


class ParameterError(ValueError):
    """Refinement parameters violate the standing assumptions."""


# -- the current --------------------------------------------------------------------


class GraphCurrent:
    """``Q`` ordered sheets over a square grid on ``[-4, 4]^2``.

    Parameters
    ----------
    heights : ndarray, shape (Q, n, n)
        Sheet heights; sorted along the first axis on construction.
    """

    def __init__(self, heights):
        z = np.asarray(heights, dtype=float)
        if z.ndim == 2:
            z = z[None]
        if z.ndim != 3 or z.shape[1] != z.shape[2]:
            raise ValueError("heights must have shape (Q, n, n)")
        n = z.shape[1]
        cells = n - 1
        if cells < 8 or cells & (cells - 1):
            raise ValueError("grid must have 2^p + 1 nodes per side with p >= 3")
        if not np.all(np.isfinite(z)):
            raise ValueError("heights must be finite")
        self.heights = np.sort(z, axis=0)
        self.n = n
        self.h = 2 * HALF / cells
        self.gx, self.gy = self._gradients(self.heights)
        if not (np.all(np.isfinite(self.gx)) and np.all(np.isfinite(self.gy))):
            raise ValueError("gradients must be finite")

    def _gradients(self, z):
        gx = np.gradient(z, self.h, axis=1)
        gy = np.gradient(z, self.h, axis=2)
        return gx, gy

    @property
    def q(self) -> int:
        return self.heights.shape[0]

    @property
    def axis(self) -> np.ndarray:
        return np.linspace(-HALF, HALF, self.n)

    @classmethod
    def from_function(cls, fn, n: int = 257) -> "GraphCurrent":
        """``fn(x, y)`` returns the sheet heights with a trailing axis of length ``Q``
        (or a plain array for one sheet)."""
        ax = np.linspace(-HALF, HALF, n)
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        z = np.asarray(fn(X, Y), dtype=float)
        if z.ndim == 2:
            z = z[..., None]
        return cls(np.moveaxis(z, -1, 0))

    @classmethod
    def from_field(cls, field: SampledField) -> "GraphCurrent":
        mesh = field.mesh
        if mesh.dim != 2 or mesh.shape[0] != mesh.shape[1] or not np.all(mesh.mask):
            raise ValueError("graph currents need a full square grid")
        if not np.allclose(mesh.origin, (-HALF, -HALF)) or not math.isclose(mesh.h * (mesh.shape[0] - 1), 2 * HALF):
            raise ValueError("the grid must cover [-4, 4]^2")
        z = field.values.reshape(mesh.shape + (field.q,))
        return cls(np.moveaxis(z, -1, 0))

    def padded(self, pad: int) -> tuple:
        """Heights and gradients extended by the boundary values, plus the new origin."""
        z = np.pad(self.heights, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
        gx, gy = self._gradients(z)
        return z, gx, gy, -HALF - pad * self.h

    def mass_density(self) -> np.ndarray:
        return np.sqrt(1 + self.gx**2 + self.gy**2)

    def flat_mask(self, z, gx, gy, tol: float = 1e-14) -> tuple:
        """Nodes where every sheet sits at the reference height with zero slope."""
        low = z[0]
        ref = float(np.median(low))
        flat = np.all(np.abs(z - ref) <= tol, axis=0)
        flat &= np.all(np.abs(gx) <= tol, axis=0) & np.all(np.abs(gy) <= tol, axis=0)
        return flat, ref


# -- single-ball evaluators ---------------------------------------------------------


def _unit(normal) -> np.ndarray:
    v = np.asarray(normal, dtype=float).reshape(3)
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("plane normal must be nonzero")
    v = v / nv
    return v if v[2] >= 0 else -v


PI0 = np.array([0.0, 0.0, 1.0])


def _moments(current: GraphCurrent, centers: np.ndarray, radius: float, backend=None):
    k = get_backend(backend)
    c = np.ascontiguousarray(np.atleast_2d(centers), dtype=float)
    out = np.zeros((c.shape[0], 7))
    hits = k.ball_moments(
        c[:, 0].copy(), c[:, 1].copy(), c[:, 2].copy(),
        np.ascontiguousarray(current.heights), np.ascontiguousarray(current.gx), np.ascontiguousarray(current.gy),
        -HALF, -HALF, current.h, float(radius), out,
    )
    return out, np.asarray(hits)


def _tensor(mom: np.ndarray) -> np.ndarray:
    N = np.empty(mom.shape[:-1] + (3, 3))
    idx = {(0, 0): 1, (0, 1): 2, (0, 2): 3, (1, 1): 4, (1, 2): 5, (2, 2): 6}
    for (a, b), t in idx.items():
        N[..., a, b] = mom[..., t]
        N[..., b, a] = mom[..., t]
    return N


def _excess_from(mom: np.ndarray, nu: np.ndarray, radius: float) -> np.ndarray:
    # |P_x - P_nu|^2 = 2 - 2 (n . nu)^2 for planes of codimension one
    N = _tensor(mom)
    quad = np.einsum("...i,...ij,...j->...", nu, N, nu)
    return np.maximum(mom[..., 0] - quad, 0.0) / (math.pi * radius**M)


def unoriented_excess(current: GraphCurrent, center, radius: float, normal=PI0) -> float:
    """Mean squared tangent-plane distance to the plane with unit ``normal`` in a ball."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    mom, hits = _moments(current, np.asarray(center, float), radius)
    if hits[0] == 0:
        return 0.0
    return float(_excess_from(mom[0], _unit(normal), radius))


def _best_normal(mom: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(_tensor(mom))
    nu = v[..., :, -1]
    return np.where(nu[..., 2:3] < 0, -nu, nu)


def best_plane_excess(current: GraphCurrent, center, radius: float) -> tuple:
    """Plane normal minimising the excess in the ball and the minimal excess."""
    if radius <= 0:
        raise ValueError("degenerate ball")
    mom, hits = _moments(current, np.asarray(center, float), radius)
    if hits[0] == 0:
        raise ValueError("ball does not meet the current")
    nu = _best_normal(mom[0])
    return nu, float(_excess_from(mom[0], nu, radius))


def height(current: GraphCurrent, center, radius: float, normal=PI0) -> float:
    """Largest separation along ``normal`` between graph points in the ball."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    k = get_backend()
    c = np.asarray(center, float).reshape(1, 3)
    nu = _unit(normal)
    hi, lo, hits = k.ball_extent(
        c[:, 0].copy(), c[:, 1].copy(), c[:, 2].copy(), np.ascontiguousarray(current.heights),
        -HALF, -HALF, current.h, float(radius),
        np.array([nu[0]]), np.array([nu[1]]), np.array([nu[2]]),
    )
    return float(hi[0] - lo[0]) if hits[0] else 0.0


# -- parameters -----------------------------------------------------------------


@dataclass(frozen=True)
class WhitneyParams:
    Ce: float
    Ch: float
    N0: int = 10
    M0: float = 4.0
    delta2: float = 1.0 / (8 * M)
    beta2: float = 1.0 / (2 * M)
    c_sigma: float = 0.0

    def validate(self) -> "WhitneyParams":
        if not (self.Ce > 0 and self.Ch > 0):
            raise ParameterError("Ce and Ch must be positive")
        if not (self.delta2 > 0 and self.beta2 > 0):
            raise ParameterError("delta2 and beta2 must be positive")
        if not math.isclose(self.beta2, 4 * self.delta2, rel_tol=1e-12):
            raise ParameterError("beta2 must equal 4 delta2")
        if self.beta2 > 1.0 / (2 * M) + 1e-15:
            raise ParameterError("beta2 may not exceed 1/(2m)")
        if self.M0 < 4:
            raise ParameterError("M0 must be at least 4")
        if math.sqrt(M) * self.M0 * 2.0 ** (7 - self.N0) > 1 + 1e-15:
            raise ParameterError("need sqrt(m) M0 2^(7-N0) <= 1")
        if self.c_sigma < 0:
            raise ParameterError("c_sigma must be nonnegative")
        return self

    @staticmethod
    def smallest_N0(M0: float = 4.0) -> int:
        return max(0, math.ceil(7 + math.log2(math.sqrt(M) * M0)))

    def ball_radius(self, j: int) -> float:
        return 64 * self.M0 * math.sqrt(M) * 2.0**-j

    def thresholds(self, j: int, m0: float) -> tuple:
        ell = 2.0**-j
        return self.Ce * m0 * ell ** (2 - 2 * self.delta2), self.Ch * m0 ** (1.0 / M) * ell ** (1 + self.beta2)


def excess_scale(current: GraphCurrent, c_sigma: float = 0.0) -> float:
    """``max(c^2, E(T, B_{6 sqrt m}) against the base plane)``."""
    r = 6 * math.sqrt(M)
    return max(c_sigma**2, unoriented_excess(current, (0.0, 0.0, 0.0), r, PI0))


# -- forest ------------------------------------------------------------------------


def _encode(j: int, ix, iy):
    return (np.asarray(ix, np.int64) << (j + 2)) | np.asarray(iy, np.int64)


def _decode(j: int, key):
    key = np.asarray(key, np.int64)
    return key >> (j + 2), key & ((1 << (j + 2)) - 1)


@dataclass
class Generation:
    j: int
    keys: dict = dc_field(default_factory=lambda: {c: np.zeros(0, np.int64) for c in CLASSES})
    excess: dict = dc_field(default_factory=dict)
    height: dict = dc_field(default_factory=dict)
    n_stable: int = 0
    evaluated_cells: int = 0

    def all_keys(self) -> np.ndarray:
        return np.sort(np.concatenate([self.keys[c] for c in CLASSES]))


@dataclass
class CubeForest:
    params: WhitneyParams
    m0: float
    j_max: int
    generations: list[Generation]
    cube_height: np.ndarray = dc_field(repr=False)  # lowest sheet at each node, for y_L
    axis: np.ndarray = dc_field(repr=False)
    boundary_flag: bool = False
    notes: list[str] = dc_field(default_factory=list)

    # -- queries ---------------------------------------------------------
    def stopped(self, cls: str | None = None):
        """Iterate ``(j, ix, iy, class, E, h)`` over stopped cubes in a fixed order."""
        for g in self.generations:
            for c in CLASSES if cls is None else (cls,):
                ix, iy = _decode(g.j, g.keys[c])
                for a, b, e, hh in zip(ix, iy, g.excess[c], g.height[c]):
                    yield g.j, int(a), int(b), c, float(e), float(hh)

    def cubes(self, classes=CLASSES) -> np.ndarray:
        """Stopped cubes as rows ``(x0, y0, side, j)``."""
        rows = []
        for g in self.generations:
            side = 2.0 ** (1 - g.j)
            for c in classes:
                ix, iy = _decode(g.j, g.keys[c])
                rows.append(np.column_stack([-HALF + ix * side, -HALF + iy * side, np.full(ix.size, side), np.full(ix.size, g.j)]))
        return np.concatenate(rows) if rows else np.zeros((0, 4))

    def count(self, cls: str | None = None) -> int:
        return sum(int(g.keys[c].size) for g in self.generations for c in (CLASSES if cls is None else (cls,)))

    def gamma_mask(self) -> np.ndarray:
        """Sample nodes outside every stopped cube (half-open cube convention)."""
        ax = self.axis
        n = ax.size
        covered = np.zeros((n, n), dtype=bool)
        for g in self.generations:
            side = 2.0 ** (1 - g.j)
            keys = g.all_keys()
            if keys.size == 0:
                continue
            ia = np.minimum(np.floor((ax + HALF) / side).astype(np.int64), (1 << (g.j + 2)) - 1)
            A, B = np.meshgrid(ia, ia, indexing="ij")
            covered |= np.isin(_encode(g.j, A, B), keys)
        return ~covered

    def is_active(self, j: int, ix, iy) -> np.ndarray:
        """True where no ancestor (or the cube itself, for earlier generations) has stopped."""
        ok = np.ones(np.shape(ix), dtype=bool)
        for g in self.generations:
            if g.j >= j:
                break
            s = j - g.j
            keys = g.all_keys()
            if keys.size:
                ok &= ~np.isin(_encode(g.j, np.asarray(ix) >> s, np.asarray(iy) >> s), keys)
        return ok

    def father_rule_violations(self) -> int:
        bad = 0
        for g in self.generations:
            if g.j == self.params.N0:
                continue
            ix, iy = _decode(g.j, g.all_keys())
            bad += int(np.count_nonzero(~self.is_active(g.j, ix, iy)))
        return bad

    def overlapping_pairs(self) -> int:
        """Stopped cubes contained in another stopped cube (interiors would overlap)."""
        bad = 0
        for g in self.generations:
            keys = g.all_keys()
            bad += keys.size - np.unique(keys).size
        return bad + self.father_rule_violations()

    # -- export -----------------------------------------------------------
    def records(self) -> list[str]:
        lines = ["j,ix,iy,class,x_L,y_L,ell,E_no,h"]
        for j, a, b, c, e, hh in self.stopped():
            ell = 2.0**-j
            xl = -HALF + (2 * a + 1) * ell
            yl = -HALF + (2 * b + 1) * ell
            lines.append(f"{j},{a},{b},{c},{xl:.10g},{yl:.10g},{ell:.10g},{e:.10e},{hh:.10e}")
        return lines

    def summary(self) -> dict:
        return {
            "params": asdict(self.params),
            "m0": self.m0,
            "j_max": self.j_max,
            "generations": [
                {
                    "j": g.j,
                    "We": int(g.keys["We"].size),
                    "Wh": int(g.keys["Wh"].size),
                    "Wn": int(g.keys["Wn"].size),
                    "S": g.n_stable,
                    "evaluated_cells": g.evaluated_cells,
                }
                for g in self.generations
            ],
            "gamma_nodes": int(self.gamma_mask().sum()),
            "boundary_extension_used": self.boundary_flag,
            "notes": list(self.notes),
        }

    def write(self, outdir) -> dict:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        text = "\n".join(self.records()) + "\n"
        (out / "forest.csv").write_text(text)
        mask = self.gamma_mask()
        (out / "gamma_mask.txt").write_text("\n".join("".join("1" if v else "0" for v in row) for row in mask) + "\n")
        return {"forest_sha256": hashlib.sha256(text.encode()).hexdigest()}


def _cell_ranges(n_cells_axis: int, per: int, k: np.ndarray, n_cubes: int):
    # cubes of a generation whose centres fall in the cell of node k
    lo = np.maximum(k * per - per // 2, 0)
    hi = np.minimum(k * per + per // 2, n_cubes)
    return lo, hi


def refine(current: GraphCurrent, params: WhitneyParams, j_max: int, backend=None) -> CubeForest:
    """Run the stopping procedure for generations ``N0 .. j_max``."""
    params.validate()
    if j_max < params.N0:
        raise ParameterError("j_max must be at least N0")
    kern = get_backend(backend)
    h = current.h
    per0 = h / 2.0 ** (1 - params.N0)
    if per0 < 2 or per0 != int(per0):
        raise ParameterError("sample spacing must be a dyadic multiple of twice the N0 cube side")
    m0 = excess_scale(current, params.c_sigma)
    n = current.n
    rho_max = params.ball_radius(params.N0)
    pad = int(math.ceil(rho_max / h)) + 2
    z, gx, gy, origin = current.padded(pad)
    z = np.ascontiguousarray(z)
    gx = np.ascontiguousarray(gx)
    gy = np.ascontiguousarray(gy)
    flat, ref = current.flat_mask(z, gx, gy)
    dist_dirty = ndimage.distance_transform_edt(flat) * h if not flat.all() else np.full(flat.shape, np.inf)
    inner = (slice(pad, pad + n), slice(pad, pad + n))
    dist_dirty = dist_dirty[inner]
    low = current.heights[0]
    ax = current.axis
    X, Y = np.meshgrid(ax, ax, indexing="ij")

    # exact area of each node's cell inside the square, and what is already covered
    w1 = np.full(n, h)
    w1[[0, -1]] = h / 2
    cell_area = np.outer(w1, w1)
    covered = np.zeros((n, n))

    forest = CubeForest(params, m0, j_max, [], low.copy(), ax.copy())
    if pad > 0 and rho_max > 0:
        forest.boundary_flag = True
        forest.notes.append("balls near the boundary see the constant extension of the boundary sheets")
    forest.notes.append("delta2 ignores the external gamma_1 branch of its definition")

    prev_keys = np.zeros(0, np.int64)
    for j in range(params.N0, j_max + 1):
        gen = Generation(j)
        rho = params.ball_radius(j)
        thr_e, thr_h = params.thresholds(j, m0)
        n_cubes = 1 << (j + 2)
        per = int(h / 2.0 ** (1 - j))
        open_cells = covered < cell_area
        need = open_cells & (dist_dirty <= rho)
        E = np.zeros((n, n))
        Hh = np.zeros((n, n))
        ci, cj = np.nonzero(need)
        gen.evaluated_cells = int(ci.size)
        if ci.size:
            px = ax[ci].copy()
            py = ax[cj].copy()
            pz = low[ci, cj].copy()
            mom = np.zeros((ci.size, 7))
            kern.ball_moments(px, py, pz, z, gx, gy, origin, origin, h, rho, mom)
            nu = _best_normal(mom)
            E[ci, cj] = _excess_from(mom, nu, rho)
            hi, lo, hits = kern.ball_extent(
                px, py, pz, z, origin, origin, h, rho,
                np.ascontiguousarray(nu[:, 0]), np.ascontiguousarray(nu[:, 1]), np.ascontiguousarray(nu[:, 2]),
            )
            Hh[ci, cj] = np.where(hits, hi - lo, 0.0)
        stop_e = open_cells & (E > thr_e)
        stop_h = open_cells & ~stop_e & (Hh > thr_h)

        # enumerate the live cubes inside cells that stop outright
        for cls, mask in (("We", stop_e), ("Wh", stop_h)):
            ki, kj = np.nonzero(mask)
            keys = []
            for a, b in zip(ki, kj):
                lo_x, hi_x = _cell_ranges(n, per, np.array([a]), n_cubes)
                lo_y, hi_y = _cell_ranges(n, per, np.array([b]), n_cubes)
                IX, IY = np.meshgrid(np.arange(lo_x[0], hi_x[0]), np.arange(lo_y[0], hi_y[0]), indexing="ij")
                IX, IY = IX.ravel(), IY.ravel()
                live = forest.is_active(j, IX, IY)
                keys.append(_encode(j, IX[live], IY[live]))
            gen.keys[cls] = np.sort(np.concatenate(keys)) if keys else np.zeros(0, np.int64)

        # neighbours of the previous generation's stopped cubes
        if prev_keys.size:
            pj = j - 1
            pix, piy = _decode(pj, prev_keys)
            off = np.array([(a, b) for a in range(-1, 3) for b in range(-1, 3) if not (0 <= a <= 1 and 0 <= b <= 1)])
            cx = (2 * pix[:, None] + off[None, :, 0]).ravel()
            cy = (2 * piy[:, None] + off[None, :, 1]).ravel()
            ok = (cx >= 0) & (cx < n_cubes) & (cy >= 0) & (cy < n_cubes)
            cand = np.unique(_encode(j, cx[ok], cy[ok]))
            taken = np.concatenate([gen.keys["We"], gen.keys["Wh"]])
            cand = cand[~np.isin(cand, taken)]
            cix, ciy = _decode(j, cand)
            gen.keys["Wn"] = cand[forest.is_active(j, cix, ciy)]

        half = 2.0**-j
        for cls in CLASSES:
            ix, iy = _decode(j, gen.keys[cls])
            ni = np.rint((-HALF + (2 * ix + 1) * half + HALF) / h).astype(np.int64)
            nj = np.rint((-HALF + (2 * iy + 1) * half + HALF) / h).astype(np.int64)
            gen.excess[cls] = E[ni, nj]
            gen.height[cls] = Hh[ni, nj]
            np.add.at(covered, (ni, nj), (2 * half) ** 2)
        forest.generations.append(gen)
        bad = forest.father_rule_violations()
        if bad:
            raise AssertionError(f"father rule violated by {bad} cubes at generation {j}")
        open_area = float(np.sum(cell_area - covered))
        gen.n_stable = int(round(open_area / (2 * half) ** 2))
        prev_keys = gen.all_keys()
    return forest


# -- audits -----------------------------------------------------------------------


@dataclass
class FineCMReport:
    passed: bool
    violations: list  # (mark index, j, x0, y0, side, dist)
    n_marks: int
    n_cubes: int


def check_fine_cm(forest: CubeForest, marks) -> FineCMReport:
    """Every stopped cube must satisfy ``ell(L) < dist(x_q, L) / (64 sqrt m)``."""
    pts = np.atleast_2d(np.asarray(marks, dtype=float)) if len(marks) else np.zeros((0, 2))
    cubes = forest.cubes()
    viol = []
    if cubes.shape[0] and pts.shape[0]:
        x0, y0, side = cubes[:, 0], cubes[:, 1], cubes[:, 2]
        ell = side / 2
        for q, (px, py) in enumerate(pts):
            dx = np.maximum(np.maximum(x0 - px, px - (x0 + side)), 0.0)
            dy = np.maximum(np.maximum(y0 - py, py - (y0 + side)), 0.0)
            d = np.hypot(dx, dy)
            bad = np.nonzero(~(ell < d / (64 * math.sqrt(M))))[0]
            for b in bad:
                viol.append((q, int(cubes[b, 3]), float(x0[b]), float(y0[b]), float(side[b]), float(d[b])))
    return FineCMReport(not viol, viol, int(pts.shape[0]), int(cubes.shape[0]))


def neighbour_audit(forest: CubeForest) -> int:
    """Count ``Wn`` cubes that do not touch a stopped cube of the previous generation."""
    bad = 0
    for prev, g in zip(forest.generations, forest.generations[1:]):
        pk = prev.all_keys()
        ix, iy = _decode(g.j, g.keys["Wn"])
        touch = np.zeros(ix.size, dtype=bool)
        for a in (-1, 0, 1):
            for b in (-1, 0, 1):
                # father-level cube touched by the closed son cube
                fx = (ix + a) >> 1
                fy = (iy + b) >> 1
                ok = (ix + a >= 0) & (iy + b >= 0)
                touch |= ok & np.isin(_encode(prev.j, fx, fy), pk)
        bad += int(np.count_nonzero(~touch))
    return bad


def contained_in(small: CubeForest, big: CubeForest, classes=("We", "Wh")) -> bool:
    """True if every ``classes`` cube of ``small`` lies inside some stopped cube of ``big``."""
    for g in small.generations:
        keys = np.concatenate([g.keys[c] for c in classes])
        if keys.size == 0:
            continue
        ix, iy = _decode(g.j, keys)
        inside = np.zeros(ix.size, dtype=bool)
        for gb in big.generations:
            if gb.j > g.j:
                break
            s = g.j - gb.j
            inside |= np.isin(_encode(gb.j, ix >> s, iy >> s), gb.all_keys())
        if not inside.all():
            return False
    return True


def bump_current(slope: float = 1.0, radius: float = 0.5, center=(0.0, 0.0), n: int = 257, q: int = 2) -> GraphCurrent:
    """Flat sheets with a conical bump of the given slope on the top sheet."""
    cx, cy = center

    def fn(x, y):
        r = np.hypot(x - cx, y - cy)
        top = slope * np.maximum(radius - r, 0.0)
        out = np.zeros(x.shape + (q,))
        out[..., -1] = top
        return out

    return GraphCurrent.from_function(fn, n)
