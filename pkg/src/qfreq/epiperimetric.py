"""Explicit epiperimetric competitor for planar traces with zero mean.

The unit circle is split into arcs where the trace has a fixed sign. On each
arc every sheet is expanded in the Dirichlet eigenfunctions of the arc and
extended harmonically to the annulus ``sigma < r < 1``: small arcs vanish on
the inner circle, while on the two main arcs (the largest arc of each sign)
the first mode is kept 1-homogeneous. The remaining disk ``B_sigma`` carries
the harmonic extension of the glued first modes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

from .frequency import CircleTrace, extension_energy_spectral

TWO_PI = 2.0 * np.pi
DEFAULT_SIGMA = 1.0 / 6.0
DEFAULT_K = 16
DEFAULT_K_INNER = 64


class PartitionError(ValueError):
    """The trace is not compatible with an arc-wise Dirichlet expansion."""


# -- arc spectra -------------------------------------------------------------


@dataclass(frozen=True)
class ArcSpectrum:
    """Dirichlet spectrum of an arc of length ``theta`` in the unit circle."""

    theta: float
    K: int

    def __post_init__(self):
        if not 0 < self.theta <= TWO_PI + 1e-12:
            raise ValueError(f"arc length must lie in (0, 2 pi], got {self.theta!r}")
        if self.K < 1:
            raise ValueError("need at least one mode")

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K + 1)

    @property
    def mu(self) -> np.ndarray:
        return self.k * np.pi / self.theta

    @property
    def lam(self) -> np.ndarray:
        return self.mu**2

    def h(self, s) -> np.ndarray:
        """Eigenfunctions at arclength ``s``, shape ``(len(s), K)``."""
        s = np.asarray(s, dtype=float)
        return np.sqrt(2.0 / self.theta) * np.sin(np.outer(s, self.mu))


def arc_eigen(theta: float, K: int = DEFAULT_K) -> ArcSpectrum:
    return ArcSpectrum(float(theta), int(K))


def fd_dirichlet_eigs(theta: float, n: int = 4096, count: int = 5) -> np.ndarray:
    """Lowest eigenvalues of ``-d^2/ds^2`` on ``[0, theta]`` by second differences.

    ``n`` counts the grid points including both (Dirichlet) endpoints.
    """
    h = theta / (n - 1)
    m = n - 2
    diag = np.full(m, 2.0 / h**2)
    off = np.full(m - 1, -1.0 / h**2)
    return eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, count - 1))


def mu_from_lambda(lam, m: int = 2):
    """Positive root of ``mu (m - 2 + mu) = lam``."""
    lam = np.asarray(lam, dtype=float)
    return 0.5 * (2 - m + np.sqrt((m - 2) ** 2 + 4 * lam))


# -- expansions ----------------------------------------------------------------


def _trapezoid_weights(n: int, length: float) -> np.ndarray:
    w = np.full(n, length / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def fourier_on_arc(samples, spectrum: ArcSpectrum, endpoint_tol: float = 1e-6) -> np.ndarray:
    """Coefficients ``a[i, k] = int u_i h_k`` of sheets sampled uniformly in arclength.

    ``samples`` is ``(n,)`` or ``(n, Q)`` on ``n`` equispaced points covering
    the closed arc.
    """
    u = np.asarray(samples, dtype=float)
    if u.ndim == 1:
        u = u[:, None]
    n = u.shape[0]
    if n < 3:
        raise PartitionError("need at least 3 samples on an arc")
    scale = max(1.0, float(np.abs(u).max()))
    ends = max(float(np.abs(u[0]).max()), float(np.abs(u[-1]).max()))
    if ends > endpoint_tol * scale:
        raise PartitionError(f"trace does not vanish at the arc endpoints (|u| = {ends:.3g})")
    s = np.linspace(0.0, spectrum.theta, n)
    H = spectrum.h(s) * _trapezoid_weights(n, spectrum.theta)[:, None]
    return u.T @ H


def synthesize_on_arc(coeffs, spectrum: ArcSpectrum, n: int) -> np.ndarray:
    """Inverse of :func:`fourier_on_arc` on ``n`` equispaced points."""
    s = np.linspace(0.0, spectrum.theta, n)
    return spectrum.h(s) @ np.atleast_2d(coeffs).T


def coefficients_AB(sigma: float, mu) -> tuple:
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("mu must be positive")
    lo, hi = sigma**mu, sigma ** (-mu)
    A = hi / (hi - lo)
    B = lo / (hi - lo)
    if A.ndim == 0:
        return float(A), float(B)
    return A, B


def rho(r, sigma: float, mu: float):
    A, B = coefficients_AB(sigma, mu)
    r = np.asarray(r, dtype=float)
    return A * r**mu - B * r ** (-mu)


def _annulus_factor(sigma: float, mu):
    # mu (s^mu + s^-mu) / (s^-mu - s^mu), written to stay finite for large mu
    t = sigma ** (2 * np.asarray(mu, dtype=float))
    return mu * (1 + t) / (1 - t)


def annulus_energy(coeffs, sigma: float, spectrum: ArcSpectrum, kill_first_mode: bool, m: int = 2) -> float:
    """Energy on ``sigma < r < 1`` of the extension of one arc's sheets.

    ``coeffs`` is ``(K,)`` or ``(Q, K)``; the energy is summed over sheets.
    """
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))
    if a.shape[1] > spectrum.K:
        raise ValueError("spectrum has fewer modes than the coefficients")
    mu = spectrum.mu[: a.shape[1]]
    lam = spectrum.lam[: a.shape[1]]
    w = _annulus_factor(sigma, mu)
    if not kill_first_mode:
        w = w.copy()
        w[0] = (lam[0] + 1) * (1 - sigma**m) / m
    return float(np.sum(a**2 * w))


def homogeneous_energy_modes(coeffs, spectrum: ArcSpectrum, m: int = 2) -> float:
    """``sum_k (lam_k + 1) / m * a_k^2``: energy of the 1-homogeneous extension on the cone."""
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))
    lam = spectrum.lam[: a.shape[1]]
    return float(np.sum(a**2 * (lam + 1) / m))


def mode_margin(lam, sigma: float = DEFAULT_SIGMA, delta: float = DEFAULT_SIGMA, m: int = 2):
    """``((lam+1)(1-sigma^m-delta) + m delta)/m - mu (1+sigma^{2mu})/(1-sigma^{2mu})``."""
    lam = np.asarray(lam, dtype=float)
    mu = mu_from_lambda(lam, m)
    return ((lam + 1) * (1 - sigma**m - delta) + m * delta) / m - _annulus_factor(sigma, mu)


# -- arcs and partitions ---------------------------------------------------------


@dataclass
class Arc:
    start: float
    end: float
    sign: int
    samples: np.ndarray = dc_field(repr=False)
    main: bool = False

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.samples.shape[0] == 1 and self.samples.shape[1] > 1:
            self.samples = self.samples.T
        if not self.end > self.start:
            raise PartitionError("arc end must exceed its start")
        if self.length > TWO_PI + 1e-12:
            raise PartitionError("arc longer than the circle")
        if self.sign not in (1, -1):
            raise PartitionError("arc sign must be +1 or -1")
        self.samples = np.sort(self.samples, axis=1)

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def q(self) -> int:
        return self.samples.shape[1]

    def contains(self, phi) -> np.ndarray:
        t = np.mod(np.asarray(phi, dtype=float) - self.start, TWO_PI)
        return (t > 0) & (t < self.length)


@dataclass
class BoundaryPartition:
    arcs: list[Arc]

    def __post_init__(self):
        if not self.arcs:
            raise PartitionError("partition has no arcs")
        q = {a.q for a in self.arcs}
        if len(q) != 1:
            raise PartitionError("arcs carry different numbers of sheets")
        spans = sorted((np.mod(a.start, TWO_PI), a.length) for a in self.arcs)
        total = sum(L for _, L in spans)
        if total > TWO_PI + 1e-9:
            raise PartitionError("arcs overlap")
        for (s0, L0), (s1, _) in zip(spans, spans[1:]):
            if s0 + L0 > s1 + 1e-9:
                raise PartitionError("arcs overlap")
        if spans and spans[-1][0] + spans[-1][1] > spans[0][0] + TWO_PI + 1e-9:
            raise PartitionError("arcs overlap")

    @property
    def q(self) -> int:
        return self.arcs[0].q

    def assign_main(self) -> "BoundaryPartition":
        """Flag the largest arc of each sign (ties: smallest start angle)."""
        for a in self.arcs:
            a.main = False
        for s in (1, -1):
            cands = [a for a in self.arcs if a.sign == s]
            if cands:
                best = min(cands, key=lambda a: (-round(a.length, 12), np.mod(a.start, TWO_PI)))
                best.main = True
        return self

    def main_arc(self, sign: int) -> Arc | None:
        for a in self.arcs:
            if a.main and a.sign == sign:
                return a
        return None

    # -- conversions -------------------------------------------------------
    def to_trace(self) -> CircleTrace:
        """The partition's data as a function on the circle (zero off the arcs)."""
        arcs = self.arcs
        q = self.q

        def fn(phi):
            vals = np.zeros((phi.size, q))
            signs = np.ones(phi.size, dtype=np.int64)
            for a in arcs:
                inside = a.contains(phi)
                if not inside.any():
                    continue
                t = np.mod(phi[inside] - a.start, TWO_PI) / a.length * (a.samples.shape[0] - 1)
                k = np.clip(np.floor(t).astype(np.int64), 0, a.samples.shape[0] - 2)
                w = (t - k)[:, None]
                vals[inside] = (1 - w) * a.samples[k] + w * a.samples[k + 1]
                signs[inside] = a.sign
            return vals, signs

        return CircleTrace(fn)

    @classmethod
    def from_trace(cls, trace, n: int = 8192, n_arc: int = 2049, zero_tol: float = 1e-12):
        """Split a trace at the zeros of ``sign * |u - eta|``."""
        tr = trace if isinstance(trace, CircleTrace) else CircleTrace(trace)
        phi = TWO_PI * np.arange(n) / n
        vals, signs = tr(phi)
        eta = vals.mean(axis=1)
        if np.abs(eta).max() > 1e-9:
            raise PartitionError("trace must have zero mean")

        def psi(t):
            v, s = tr(np.atleast_1d(t))
            return float(s[0] * np.linalg.norm(v[0] - v[0].mean()))

        amp = signs * np.linalg.norm(vals - eta[:, None], axis=1)
        scale = float(np.abs(amp).max())
        if scale == 0:
            return None
        zero = np.abs(amp) <= zero_tol * scale
        cuts = []
        for k in range(n):
            k1 = (k + 1) % n
            if zero[k]:
                if not zero[k1]:
                    cuts.append((phi[k], "open"))
                if not zero[(k - 1) % n]:
                    cuts.append((phi[k], "close"))
            elif not zero[k1] and amp[k] * amp[k1] < 0:
                hi = phi[k] + TWO_PI / n
                root = brentq(psi, phi[k], hi, xtol=1e-14)
                cuts.append((root, "both"))
        if not cuts:
            raise PartitionError("trace never vanishes; it has no arc decomposition")
        # walk the circle: every arc starts at an open/both cut and ends at the next close/both cut
        cuts.sort()
        starts = [c for c in cuts if c[1] in ("open", "both")]
        arcs = []
        for st, _ in starts:
            later = [c for c in cuts if c[1] in ("close", "both") and c[0] > st + 1e-15]
            if later:
                en = later[0][0]
            else:
                wrap = [c for c in cuts if c[1] in ("close", "both")]
                en = wrap[0][0] + TWO_PI
            s = np.linspace(st, en, n_arc)
            v, sg = tr(np.mod(s, TWO_PI))
            mid = sg[n_arc // 2]
            v = v.copy()
            v[0] = 0.0
            v[-1] = 0.0
            arcs.append(Arc(float(st), float(en), int(mid), v))
        return cls(arcs).assign_main()

    def to_json(self) -> dict:
        return {
            "arcs": [
                {
                    "start": a.start,
                    "end": a.end,
                    "sign": a.sign,
                    "main": a.main,
                    "samples": a.samples.tolist(),
                }
                for a in self.arcs
            ]
        }

    @classmethod
    def from_json(cls, data: dict) -> "BoundaryPartition":
        try:
            arcs = [
                Arc(float(a["start"]), float(a["end"]), int(a["sign"]), np.asarray(a["samples"], float), bool(a.get("main", False)))
                for a in data["arcs"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise PartitionError(f"malformed partition: {exc}") from exc
        part = cls(arcs)
        if not any(a.main for a in arcs) and not data.get("no_main", False):
            part.assign_main()
        return part

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "BoundaryPartition":
        return cls.from_json(json.loads(Path(path).read_text()))


# -- inner disk ------------------------------------------------------------------


def _first_mode_on_circle(arc: Arc | None, phi: np.ndarray) -> np.ndarray:
    if arc is None:
        return np.zeros_like(phi)
    out = np.zeros_like(phi)
    inside = arc.contains(phi)
    s = np.mod(phi[inside] - arc.start, TWO_PI)
    out[inside] = np.sqrt(2.0 / arc.length) * np.sin(np.pi * s / arc.length)
    return out


def inner_extension_energy(
    a1_plus,
    a1_minus,
    arc_plus: Arc | None,
    arc_minus: Arc | None,
    sigma: float = DEFAULT_SIGMA,
    K_inner: int = DEFAULT_K_INNER,
    n: int = 8192,
) -> float:
    """Energy of the harmonic extension to ``B_sigma`` of the glued first modes.

    The boundary datum is ``sigma |a+| h1+ - sigma |a-| h1-`` on the circle of
    radius ``sigma``; with Fourier coefficients ``alpha_n, beta_n`` the energy
    is ``pi sum_{n <= K_inner} n (alpha_n^2 + beta_n^2)``.
    """
    cp = float(np.linalg.norm(np.atleast_1d(a1_plus)))
    cm = float(np.linalg.norm(np.atleast_1d(a1_minus)))
    if cp == 0 and cm == 0:
        return 0.0
    phi = TWO_PI * np.arange(n) / n
    g = sigma * (cp * _first_mode_on_circle(arc_plus, phi) - cm * _first_mode_on_circle(arc_minus, phi))
    c = np.fft.rfft(g)[1 : K_inner + 1]
    alpha = 2.0 * c.real / n
    beta = -2.0 * c.imag / n
    k = np.arange(1, alpha.size + 1)
    return float(np.pi * np.sum(k * (alpha**2 + beta**2)))


# -- verification --------------------------------------------------------------------


@dataclass
class ArcReport:
    start: float
    end: float
    sign: int
    main: bool
    lambda1: float
    lambda2: float
    energy_w: float
    energy_uI: float
    mass: float


@dataclass
class CompetitorReport:
    sigma: float
    energy_w: float
    energy_uI: float
    energy_uI_modes: float
    H1: float
    W1: float
    gap: float
    delta_measured: float | None
    delta_target: float
    passed: bool
    trivially_satisfied: bool
    inner_energy: float
    roundtrip_error: float
    arcs: list[ArcReport]

    def as_dict(self) -> dict:
        return asdict(self)


def small_arc_inequality(coeffs, spectrum: ArcSpectrum, sigma: float = DEFAULT_SIGMA, delta: float = DEFAULT_SIGMA, m: int = 2):
    """Both sides of the small-arc comparison for one arc.

    Left: energy of the homogeneous extension minus the competitor on the
    annulus. Right: ``delta`` times (homogeneous energy on the cone minus the
    boundary mass).
    """
    a = np.atleast_2d(np.asarray(coeffs, dtype=float))
    lhs = (1 - sigma**m) * homogeneous_energy_modes(a, spectrum, m) - annulus_energy(a, sigma, spectrum, True, m)
    rhs = delta * (homogeneous_energy_modes(a, spectrum, m) - float(np.sum(a**2)))
    return lhs, rhs


def verify_epiperimetric(
    partition: BoundaryPartition,
    sigma: float = DEFAULT_SIGMA,
    delta_target: float = 0.01,
    K: int = DEFAULT_K,
    K_inner: int = DEFAULT_K_INNER,
    n_quad: int = 8192,
    w1_tol: float = 1e-9,
) -> CompetitorReport:
    """Build the competitor for the partition's trace and compare energies."""
    if not 0 < sigma <= 0.5:
        raise ValueError("sigma must lie in (0, 1/2]")
    for a in partition.arcs:
        if np.abs(a.samples.mean(axis=1)).max() > 1e-9:
            raise PartitionError("trace must have zero mean")
    arcs_out = []
    energy_w = 0.0
    uI_modes = 0.0
    worst_rt = 0.0
    first = {1: np.zeros(partition.q), -1: np.zeros(partition.q)}
    for a in partition.arcs:
        spec = arc_eigen(a.length, K)
        coeffs = fourier_on_arc(a.samples, spec)
        rebuilt = synthesize_on_arc(coeffs, spec, a.samples.shape[0])
        worst_rt = max(worst_rt, float(np.abs(rebuilt - a.samples).max()))
        e = annulus_energy(coeffs, sigma, spec, kill_first_mode=not a.main)
        energy_w += e
        if a.main:
            first[a.sign] = coeffs[:, 0]
        e_hom = homogeneous_energy_modes(coeffs, spec)
        uI_modes += e_hom
        mass = float(np.sum(a.samples**2 * _trapezoid_weights(a.samples.shape[0], a.length)[:, None]))
        arcs_out.append(
            ArcReport(a.start, a.end, a.sign, a.main, float(spec.lam[0]), float(spec.lam[min(1, K - 1)]), e, e_hom, mass)
        )
    inner = inner_extension_energy(
        first[1], first[-1], partition.main_arc(1), partition.main_arc(-1), sigma, K_inner
    )
    energy_w += inner
    trace = partition.to_trace()
    energy_uI = extension_energy_spectral(trace, 1.0, m=2, n=n_quad)
    H1 = sum(r.mass for r in arcs_out)
    W1 = energy_uI - H1
    gap = energy_uI - energy_w
    trivial = W1 <= w1_tol * max(1.0, H1)
    delta = gap / W1 if W1 > 0 and not trivial else None
    passed = True if trivial else gap >= delta_target * W1
    return CompetitorReport(
        sigma=sigma,
        energy_w=energy_w,
        energy_uI=energy_uI,
        energy_uI_modes=uI_modes,
        H1=H1,
        W1=W1,
        gap=gap,
        delta_measured=delta,
        delta_target=delta_target,
        passed=bool(passed),
        trivially_satisfied=bool(trivial),
        inner_energy=inner,
        roundtrip_error=worst_rt,
        arcs=arcs_out,
    )


# -- model traces ------------------------------------------------------------------


def perturbed_model_partition(eps: float, n_arc: int = 2049, q: int = 2) -> BoundaryPartition:
    """Half circles ``x1 > 0`` (+) and ``x1 < 0`` (-) carrying ``({x1, -x1}, sign x1)``,
    with ``eps h2`` added to the top sheet (and removed from the bottom one) on
    the positive half."""
    theta = np.pi
    spec = arc_eigen(theta, 2)
    s = np.linspace(0.0, theta, n_arc)
    H = spec.h(s)
    base = np.sin(s)  # |cos phi| along either half circle
    top_p = base + eps * H[:, 1]
    plus = np.zeros((n_arc, q))
    plus[:, -1] = top_p
    plus[:, 0] = -top_p
    minus = np.zeros((n_arc, q))
    minus[:, -1] = base
    minus[:, 0] = -base
    arcs = [
        Arc(-0.5 * np.pi, 0.5 * np.pi, 1, plus, True),
        Arc(0.5 * np.pi, 1.5 * np.pi, -1, minus, True),
    ]
    return BoundaryPartition(arcs)
