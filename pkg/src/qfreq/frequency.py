"""Radial quantities of sampled fields: D, H, the frequency and the Weiss functional.

``D(r)`` sums the discrete edge energies, each weighted by the fraction of
its ``h``-cell (centred at the edge midpoint) inside ``B_r(x)``. ``H(r)`` integrates ``|u|^2`` over the sphere: the two
endpoints in 1D, a trapezoid rule over equally spaced angles in 2D with
bilinear interpolation of the sorted sheets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fields import Mesh, SampledField, edge_energies, lipschitz_estimate, sample_sheets
from .qspace import canonical_arrays, gs_sq_arrays

N_ANGLES = 720


class DomainError(ValueError):
    """A ball or sphere leaves the sampled domain."""


# -- circle traces --------------------------------------------------------


class CircleTrace:
    """A special Q-valued function on the unit circle, as a function of the angle.

    ``fn(phi) -> (values (n, q), signs (n,))``.
    """

    def __init__(self, fn: Callable[[np.ndarray], tuple]):
        self._fn = fn

    def __call__(self, phi) -> tuple[np.ndarray, np.ndarray]:
        phi = np.atleast_1d(np.asarray(phi, dtype=float))
        vals, signs = self._fn(phi)
        vals = np.asarray(vals, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return canonical_arrays(vals, np.broadcast_to(signs, phi.shape))

    @classmethod
    def from_samples(cls, phi, values, signs) -> "CircleTrace":
        """Periodic linear interpolation of sorted sheets, nearest sample sign."""
        phi = np.mod(np.asarray(phi, dtype=float), 2 * np.pi)
        order = np.argsort(phi)
        phi = phi[order]
        vals, sg = canonical_arrays(np.atleast_2d(np.asarray(values, float))[order], np.asarray(signs)[order])
        ext_phi = np.concatenate([phi[-1:] - 2 * np.pi, phi, phi[:1] + 2 * np.pi])
        ext_v = np.concatenate([vals[-1:], vals, vals[:1]])
        ext_s = np.concatenate([sg[-1:], sg, sg[:1]])

        def fn(t):
            t = np.mod(t, 2 * np.pi)
            k = np.clip(np.searchsorted(ext_phi, t, side="right") - 1, 0, len(ext_phi) - 2)
            w = ((t - ext_phi[k]) / (ext_phi[k + 1] - ext_phi[k]))[:, None]
            v = (1 - w) * ext_v[k] + w * ext_v[k + 1]
            s = np.where(w[:, 0] < 0.5, ext_s[k], ext_s[k + 1])
            return v, s

        return cls(fn)

    @classmethod
    def from_field(cls, field: SampledField, center=(0.0, 0.0), radius: float = 1.0, n: int = N_ANGLES):
        """Restriction of a 2D field to a circle, sampled at ``n`` angles."""
        phi = 2 * np.pi * np.arange(n) / n
        pts = np.asarray(center) + radius * np.stack([np.cos(phi), np.sin(phi)], axis=1)
        vals, signs = sample_sheets(field, pts)
        return cls.from_samples(phi, vals, signs)


def model_trace(phi):
    """Trace of ``({x1, -x1}, sign(x1))`` on the unit circle."""
    c = np.cos(phi)
    return np.stack([c, -c], axis=1), np.where(c < 0, -1, 1)


# -- profiles -------------------------------------------------------------


@dataclass
class FrequencyProfile:
    center: np.ndarray
    radii: np.ndarray
    D: np.ndarray
    H: np.ndarray
    I: np.ndarray
    W: np.ndarray | None = None
    I0: float | None = None
    dim: int = 2

    def with_weiss(self, I0: float) -> "FrequencyProfile":
        return FrequencyProfile(
            self.center, self.radii, self.D, self.H, self.I, weiss(self, I0), I0, self.dim
        )

    def rows(self):
        W = self.W if self.W is not None else np.full_like(self.radii, np.nan)
        return zip(self.radii, self.D, self.H, self.I, W)


def _check_inside(mesh: Mesh, x: np.ndarray, r: float) -> None:
    tol = 1e-9 * mesh.h
    if mesh.kind == "disk":
        if np.hypot(*x) + r > mesh.half_width + tol:
            raise DomainError(f"ball of radius {r:g} at {tuple(x)} leaves the disk")
        return
    lo = np.asarray(mesh.origin)
    hi = lo + (np.asarray(mesh.shape) - 1) * mesh.h
    if np.any(x - r < lo - tol) or np.any(x + r > hi + tol):
        raise DomainError(f"ball of radius {r:g} at {tuple(x)} leaves the grid")


def sphere_mass(field: SampledField, x, r: float, n_angles: int = N_ANGLES) -> float:
    """``H(r) = int_{dB_r(x)} |u|^2``."""
    mesh = field.mesh
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if mesh.dim == 1:
        pts = np.array([[x[0] - r], [x[0] + r]])
        vals, _ = sample_sheets(field, pts)
        return float(np.sum(vals**2))
    phi = 2 * np.pi * np.arange(n_angles) / n_angles
    pts = x + r * np.stack([np.cos(phi), np.sin(phi)], axis=1)
    vals, _ = sample_sheets(field, pts)
    return float(np.sum(vals**2) * 2 * np.pi * r / n_angles)


def _square_cut(t, a, b):
    """Area fraction of a rectangle below a line, ``t`` measured from its lowest corner.

    The rectangle's extent along the line normal splits into ``a >= b >= 0``.
    """
    t = np.clip(t, 0.0, a + b)
    out = np.empty_like(t)
    safe_b = np.where(b > 0, b, 1.0)
    lowb = (t <= b) & (b > 0)
    out[lowb] = t[lowb] ** 2 / (2 * a[lowb] * safe_b[lowb])
    mid = ~lowb & (t <= a)
    out[mid] = (2 * t[mid] - b[mid]) / (2 * a[mid])
    top = ~lowb & ~mid
    out[top] = 1 - (a[top] + b[top] - t[top]) ** 2 / (2 * a[top] * safe_b[top])
    return np.clip(out, 0.0, 1.0)


def cell_fraction(centres, x, r: float, h: float) -> np.ndarray:
    """Fraction of the cell of side ``h`` around each centre lying in ``B_r(x)``.

    The sphere is replaced by its tangent line at the nearest point, which is
    exact up to ``O(h^2 / r)`` per cell.
    """
    c = np.atleast_2d(np.asarray(centres, dtype=float)) - np.atleast_1d(x)
    d = np.linalg.norm(c, axis=1)
    if c.shape[1] == 1:
        return np.clip((r - d) / h + 0.5, 0.0, 1.0)
    n = np.where(d[:, None] > 0, c / np.where(d > 0, d, 1.0)[:, None], np.array([1.0, 0.0]))
    ext = np.abs(n) * h
    a = ext.max(axis=1)
    b = ext.min(axis=1)
    return _square_cut(r - d + 0.5 * (a + b), a, b)


def ball_energy(field: SampledField, x, r: float, contrib=None) -> float:
    """``D(r)``: edge energies weighted by the part of their cell inside ``B_r(x)``."""
    contrib = edge_energies(field) if contrib is None else contrib
    frac = cell_fraction(field.mesh.edge_midpoints, x, r, field.mesh.h)
    return float(np.sum(contrib * frac))


def profile(
    field: SampledField, x, radii, n_angles: int = N_ANGLES, resolve_interface: bool = False
) -> FrequencyProfile:
    mesh = field.mesh
    x = np.atleast_1d(np.asarray(x, dtype=float))
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise ValueError("radii must be a non-empty list")
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ValueError("radii must be positive and strictly increasing")
    for r in radii:
        _check_inside(mesh, x, r)
    contrib = edge_energies(field, resolve_interface)
    dist = np.linalg.norm(mesh.edge_midpoints - x, axis=1)
    reach = mesh.h * (0.5 * math.sqrt(mesh.dim) + 1e-9)
    D = np.empty(radii.size)
    for k, r in enumerate(radii):
        # full cells are summed directly, the rest get their area fraction
        inner = dist <= r - reach
        shell = ~inner & (dist <= r + reach)
        frac = cell_fraction(mesh.edge_midpoints[shell], x, r, mesh.h)
        D[k] = np.sum(contrib[inner]) + np.sum(contrib[shell] * frac)
    H = np.array([sphere_mass(field, x, r, n_angles) for r in radii])
    with np.errstate(divide="ignore", invalid="ignore"):
        I = np.where(H > 0, radii * D / H, np.nan)
    return FrequencyProfile(x, radii, D, H, I, dim=mesh.dim)


def weiss(prof: FrequencyProfile, I0: float) -> np.ndarray:
    """``W(r) = r^{-(m+2I0-2)} D(r) - I0 r^{-(m+2I0-1)} H(r)``."""
    if not I0 > 0:
        raise ValueError("I0 must be positive")
    m = prof.dim
    r = prof.radii
    return r ** (-(m + 2 * I0 - 2)) * prof.D - I0 * r ** (-(m + 2 * I0 - 1)) * prof.H


@dataclass
class MonotoneReport:
    passed: bool
    max_violation: float
    tolerance: float
    at_index: int | None


def check_monotone(samples, tolerance: float = 0.0) -> MonotoneReport:
    """Nondecreasing up to ``tolerance``: the largest drop below a running maximum."""
    w = np.asarray(samples, dtype=float)
    w = w[np.isfinite(w)]
    if w.size < 2:
        return MonotoneReport(True, 0.0, tolerance, None)
    drops = np.maximum.accumulate(w)[:-1] - w[1:]
    k = int(np.argmax(drops))
    worst = max(float(drops[k]), 0.0)
    return MonotoneReport(worst <= tolerance, worst, tolerance, k + 1 if worst > 0 else None)


def check_weiss_monotone(W, tolerance: float = 0.0) -> MonotoneReport:
    if np.asarray(W).size < 3:
        raise ValueError("need at least 3 samples")
    return check_monotone(W, tolerance)


def monotonicity_tolerance(field: SampledField, factor: float = 3.0) -> float:
    """Resolution-aware slack ``factor * h * Lip^2``."""
    return factor * field.mesh.h * lipschitz_estimate(field) ** 2


@dataclass
class DecayReport:
    passed: bool
    trivial: bool
    alpha_hat: float | None
    worst_ratio: float


def check_weiss_decay(radii, W, alpha: float, rtol: float = 1e-9) -> DecayReport:
    """Check ``W(s) <= (s/r)^alpha W(r)`` for all sampled ``s < r``.

    ``alpha_hat`` is the least-squares slope of ``log W`` against ``log r``
    over the samples with ``W > 0``.
    """
    r = np.asarray(radii, dtype=float)
    W = np.asarray(W, dtype=float)
    if r.shape != W.shape or r.size == 0:
        raise ValueError("radii and W must be matching non-empty arrays")
    pos = W > 0
    if not pos.any():
        return DecayReport(True, True, None, 0.0)
    slack = rtol * np.abs(W).max()
    worst = -np.inf
    for j in range(r.size):
        bound = (r[: j + 1] / r[j]) ** alpha * W[j]
        worst = max(worst, float(np.max(W[: j + 1] - bound)))
    alpha_hat = None
    if pos.sum() >= 2:
        alpha_hat = float(np.polyfit(np.log(r[pos]), np.log(W[pos]), 1)[0])
    return DecayReport(worst <= slack, False, alpha_hat, worst)


# -- homogeneous extensions -----------------------------------------------


def homogeneous_extension(trace, I: float, mesh: Mesh) -> SampledField:
    """``u^I(x) = |x|^I u(x/|x|)``, with ``Q[[0]]`` at the origin."""
    if mesh.dim != 2:
        raise ValueError("homogeneous extension needs a 2D mesh")
    if not I > 0:
        raise ValueError("I must be positive")
    tr = trace if isinstance(trace, CircleTrace) else CircleTrace(trace)
    c = mesh.coords
    r = np.hypot(c[:, 0], c[:, 1])
    vals, signs = tr(np.arctan2(c[:, 1], c[:, 0]))
    vals = vals * (r**I)[:, None]
    vals[r == 0] = 0.0
    return SampledField(mesh, vals, signs)


def extension_energy_spectral(trace, I: float, m: int = 2, n: int = 8192) -> float:
    """``(m+2I-2)^{-1} int_{S^1} (|D_tau u|^2 + I^2 |u|^2)`` by quadrature.

    The tangential term is the sum of squared special distances between
    consecutive samples divided by the angular step, which is exact for the
    piecewise linear interpolant and handles sign changes.
    """
    tr = trace if isinstance(trace, CircleTrace) else CircleTrace(trace)
    dphi = 2 * np.pi / n
    phi = dphi * np.arange(n)
    v, s = tr(phi)
    nxt = np.roll(np.arange(n), -1)
    tangential = np.sum(gs_sq_arrays(v, s, v[nxt], s[nxt])) / dphi
    mass = np.sum(v**2) * dphi
    return float((tangential + I * I * mass) / (m + 2 * I - 2))


# -- smoothed frequency -----------------------------------------------------


def phi_weight(t):
    """Piecewise linear radial weight: 1 on [0, 1/2], 2 - 2t on (1/2, 1], 0 after."""
    t = np.asarray(t, dtype=float)
    return np.where(t <= 0.5, 1.0, np.where(t <= 1.0, 2.0 - 2.0 * t, 0.0))


@dataclass
class SmoothedFrequencySample:
    center: np.ndarray
    r: float
    D_phi: float
    H_phi: float
    I_phi: float | None


def smoothed_frequency(field: SampledField, center, r: float) -> SmoothedFrequencySample:
    mesh = field.mesh
    x = np.atleast_1d(np.asarray(center, dtype=float))
    if not r > 0:
        raise ValueError("r must be positive")
    _check_inside(mesh, x, r)
    d_edge = np.linalg.norm(mesh.edge_midpoints - x, axis=1)
    D_phi = float(np.sum(phi_weight(d_edge / r) * edge_energies(field)))
    d = np.linalg.norm(mesh.coords - x, axis=1)
    ring = (d > 0.5 * r) & (d <= r)
    H_phi = float(np.sum(2.0 * field.norm_sq()[ring] / d[ring]) * mesh.node_measure())
    I_phi = r * D_phi / H_phi if H_phi > 0 else None
    return SmoothedFrequencySample(x, float(r), D_phi, H_phi, I_phi)


# -- export -----------------------------------------------------------------


def write_profile_csv(prof: FrequencyProfile, path) -> None:
    lines = ["r,D,H,I,W"]
    for row in prof.rows():
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_smoothed_csv(samples, path) -> None:
    lines = ["q,r,D_phi,H_phi,I_phi"]
    for s in samples:
        q = " ".join(_fmt(c) for c in s.center)
        lines.append(f"{q},{_fmt(s.r)},{_fmt(s.D_phi)},{_fmt(s.H_phi)},{_fmt(s.I_phi)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return repr(float(v))
