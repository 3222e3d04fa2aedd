"""End-to-end acceptance checks shared by the test-suite and ``qfreq selftest``.

Each ``criterion_k`` returns a :class:`CriterionResult`; nothing here raises
on a failed check.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .epiperimetric import arc_eigen, fd_dirichlet_eigs, mode_margin, perturbed_model_partition, verify_epiperimetric
from .fields import Mesh
from .frequency import (
    CircleTrace,
    check_weiss_monotone,
    extension_energy_spectral,
    homogeneous_extension,
    model_trace,
    profile,
    smoothed_frequency,
    weiss,
)
from .homogeneous import (
    HarmonicPolynomial2D,
    HomogeneousSpec,
    build_homogeneous,
    classify_1d,
    components_of_nodal_partition,
    optimal_1d_singular_point,
)
from .minimize import BoundaryTrace, SolveParams, solve
from .qspace import ClassicalQPoint, QPoint, g_metric, g_metric_bruteforce, gs_metric
from .whitney import GraphCurrent, WhitneyParams, bump_current, contained_in, refine


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    seconds: float
    details: dict = dc_field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        body = ", ".join(f"{k}={_short(v)}" for k, v in self.details.items())
        return f"[{tag}] criterion {self.number} ({self.name}) {self.seconds:.2f}s: {body}"


def _short(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def _timed(number, name, budget, fn):
    t0 = time.perf_counter()
    ok, details = fn()
    dt = time.perf_counter() - t0
    if budget is not None:
        details["budget_s"] = budget
        ok = ok and dt < budget
    return CriterionResult(number, name, bool(ok), dt, details)


def _field_alpha(alpha: int, mesh: Mesh):
    p = HarmonicPolynomial2D(alpha, 1.0, 0.0)
    spec = HomogeneousSpec.uniform(p, np.array([1.0, -1.0]) / np.sqrt(2.0))
    return p, build_homogeneous(spec, mesh)


# -- 1 ---------------------------------------------------------------------------


def criterion_1(seed: int = 0) -> CriterionResult:
    def run():
        rng = np.random.default_rng(seed)
        mismatches = 0
        for _ in range(500):
            q = int(rng.integers(1, 6))
            a = ClassicalQPoint(tuple(rng.normal(size=q)))
            b = ClassicalQPoint(tuple(rng.normal(size=q)))
            if g_metric(a, b) != g_metric_bruteforce(a, b):
                mismatches += 1
        worst = -np.inf
        for _ in range(500):
            q = int(rng.integers(1, 6))
            pts = [QPoint(tuple(rng.normal(size=q)), int(rng.choice([-1, 1]))) for _ in range(3)]
            x, y, z = pts
            worst = max(worst, gs_metric(x, z) - gs_metric(x, y) - gs_metric(y, z))
        return mismatches == 0 and worst <= 1e-12, {"g_mismatches": mismatches, "max_triangle_excess": float(worst)}

    return _timed(1, "metric oracle", 1.0, run)


# -- 2 ---------------------------------------------------------------------------


def criterion_2() -> CriterionResult:
    def run():
        mesh = Mesh.interval(-1.0, 1.0, 201)
        tr = BoundaryTrace.from_endpoints(mesh, QPoint((2.0, -2.0), -1), QPoint((1.0, -1.0), 1))
        field, rep = solve(tr, mesh, SolveParams(tol=1e-12, max_sweeps=20000))
        cls = classify_1d(field)
        x_star, e_star = optimal_1d_singular_point(np.sqrt(8.0), np.sqrt(2.0))
        x0 = cls.singular_point
        ok = (
            x0 is not None
            and abs(x0 - 1.0 / 3.0) <= 0.02
            and abs(rep.energy - 9.0) <= 0.1
            and cls.norm_gap <= 0.02
            and abs(x_star - 1.0 / 3.0) < 1e-6
        )
        return ok, {"x0": x0, "energy": rep.energy, "norm_gap": cls.norm_gap, "oracle_x0": x_star, "oracle_E": e_star}

    return _timed(2, "1D classification", 5.0, run)


# -- 3 ---------------------------------------------------------------------------


def criterion_3(n: int = 257) -> CriterionResult:
    def run():
        mesh = Mesh.disk(n)
        radii = np.linspace(0.2, 0.8, 13)
        ok = True
        dev, var, comps = [], [], []
        for alpha in (1, 2, 3):
            p, f = _field_alpha(alpha, mesh)
            I = profile(f, (0.0, 0.0), radii).I
            d = float(np.max(np.abs(I - alpha)))
            v = float(np.ptp(I) / np.mean(I))
            part = components_of_nodal_partition(p, mesh)
            dev.append(d)
            var.append(v)
            comps.append((part.n_plus, part.n_minus))
            ok &= d <= 0.05 and v <= 0.01 and part.consistent
        return ok, {"max_dev": dev, "rel_variation": var, "components": comps}

    return _timed(3, "integer frequency", 30.0, run)


# -- 4 ---------------------------------------------------------------------------


def perturbed_trace(eps: float):
    """Model half-circle trace with ``eps h2`` added to the top sheet on ``x1 > 0``."""

    def fn(phi):
        c = np.cos(phi)
        s = np.where(c >= 0, 1, -1)
        t = np.mod(phi + np.pi / 2, 2 * np.pi)
        h2 = np.sqrt(2 / np.pi) * np.sin(2 * t)
        a = np.abs(c) + np.where(c > 0, eps * h2, 0.0)
        return np.stack([-a, a], axis=1), s

    return fn


def criterion_4(n_fine: int = 1361, radius_fine: float = 0.85, n_solve: int = 129, eps: float = 0.1) -> CriterionResult:
    def run():
        radii = np.linspace(0.2, 0.8, 13)
        mesh = Mesh.disk(n_fine, radius_fine)
        wmax = []
        for alpha in (1, 2, 3):
            _, f = _field_alpha(alpha, mesh)
            prof = profile(f, (0.0, 0.0), radii, resolve_interface=True)
            wmax.append(float(np.max(np.abs(weiss(prof, alpha)))))
            del f
        ok_exact = max(wmax) <= 1e-3

        smesh = Mesh.disk(n_solve)
        tr = BoundaryTrace.from_angular(smesh, perturbed_trace(eps))
        field, rep = solve(tr, smesh)
        prof = profile(field, (0.0, 0.0), radii)
        W = weiss(prof, 1.0)
        mono = check_weiss_monotone(W, 3 * smesh.h)
        return ok_exact and mono.passed, {
            "max_abs_W_exact": wmax,
            "solved_W_range": [float(W.min()), float(W.max())],
            "max_drop": mono.max_violation,
            "tolerance": mono.tolerance,
        }

    return _timed(4, "Weiss behaviour", None, run)


# -- 5 ---------------------------------------------------------------------------


def criterion_5() -> CriterionResult:
    def run():
        deltas = []
        ok = True
        for eps in (0.05, 0.1, 0.2):
            rep = verify_epiperimetric(perturbed_model_partition(eps), sigma=1.0 / 6.0, delta_target=0.01)
            d = rep.delta_measured if rep.delta_measured is not None else float("nan")
            deltas.append(d)
            ok &= rep.passed and not rep.trivially_satisfied and d >= 0.01
        lam = np.geomspace(8.0, 1e4, 4000)
        margin = float(np.min(mode_margin(lam, 1.0 / 6.0, 1.0 / 6.0)))
        ok &= margin >= 0
        return ok, {"delta": deltas, "min_mode_margin": margin}

    return _timed(5, "epiperimetric", 10.0, run)


# -- 6 ---------------------------------------------------------------------------


def _one_sheet(fn):
    def tr(phi):
        return fn(phi)[:, None], np.ones(phi.size, dtype=np.int64)

    return tr


def criterion_6(n: int = 257) -> CriterionResult:
    def run():
        mesh = Mesh.square(n)
        traces = {
            "sin": _one_sheet(np.sin),
            "sin2": _one_sheet(lambda p: np.sin(2 * p)),
            "two_sheet": model_trace,
        }
        errs = {}
        for name, fn in traces.items():
            ct = CircleTrace(fn)
            spectral = extension_energy_spectral(ct, 1.0)
            direct = profile(homogeneous_extension(ct, 1.0, mesh), (0.0, 0.0), np.array([1.0])).D[0]
            errs[name] = abs(direct / spectral - 1.0)
        return max(errs.values()) <= 0.01, {f"relerr_{k}": v for k, v in errs.items()}

    return _timed(6, "spectral energy", 20.0, run)


# -- 7 ---------------------------------------------------------------------------


def criterion_7() -> CriterionResult:
    def run():
        worst = 0.0
        for theta in (np.pi / 3, np.pi / 2, np.pi, 1.5 * np.pi):
            fd = fd_dirichlet_eigs(theta, 4096, 5)
            exact = arc_eigen(theta, 5).lam
            worst = max(worst, float(np.max(np.abs(fd / exact - 1.0))))
        return worst <= 0.005, {"max_relerr": worst}

    return _timed(7, "arc spectra", None, run)


# -- 8 ---------------------------------------------------------------------------

BUMP_PARAMS = {"Ce": 1e8, "Ch": 3e4}


def criterion_8(j_extra: int = 5) -> CriterionResult:
    def run():
        flat = GraphCurrent.from_function(lambda x, y: np.zeros(x.shape + (2,)))
        p = WhitneyParams(**BUMP_PARAMS)
        j_max = p.N0 + j_extra
        ff = refine(flat, p, j_max)
        flat_ok = ff.count() == 0 and bool(ff.gamma_mask().all())

        bump = bump_current()
        f1 = refine(bump, p, j_max)
        f2 = refine(bump, p, j_max)
        same = f1.records() == f2.records()
        father = f1.father_rule_violations()
        overlaps = f1.overlapping_pairs()
        p2 = WhitneyParams(Ce=2 * p.Ce, Ch=2 * p.Ch)
        fd = refine(bump, p2, j_max)
        shrink = contained_in(fd, f1)
        ok = flat_ok and same and father == 0 and overlaps == 0 and shrink and f1.count() > 0
        return ok, {
            "flat_empty": flat_ok,
            "stopped": f1.count(),
            "father_violations": father,
            "overlaps": overlaps,
            "doubled_contained": shrink,
            "reproducible": same,
        }

    return _timed(8, "Whitney forest", 60.0, run)


# -- 9 ---------------------------------------------------------------------------


def criterion_9(n: int = 257) -> CriterionResult:
    def run():
        mesh = Mesh.disk(n)
        worst_dev, worst_scale = 0.0, 0.0
        for alpha in (1, 2, 3):
            _, f = _field_alpha(alpha, mesh)
            radii = np.array([0.4, 0.6, 0.8])
            sharp = profile(f, (0.0, 0.0), radii).I
            for r, I in zip(radii, sharp):
                s = smoothed_frequency(f, (0.0, 0.0), r).I_phi
                worst_dev = max(worst_dev, abs(s / I - 1.0))
                for lam in (0.5, 2.0):
                    t = smoothed_frequency(f.scaled(lam), (0.0, 0.0), r).I_phi
                    worst_scale = max(worst_scale, abs(t / s - 1.0))
        return worst_dev <= 0.05 and worst_scale <= 1e-10, {"max_rel_dev": worst_dev, "max_scale_change": worst_scale}

    return _timed(9, "smoothed frequency", None, run)


CRITERIA = {
    1: criterion_1,
    2: criterion_2,
    3: criterion_3,
    4: criterion_4,
    5: criterion_5,
    6: criterion_6,
    7: criterion_7,
    8: criterion_8,
    9: criterion_9,
}


def run_all(only=None, seed: int = 0) -> list[CriterionResult]:
    out = []
    for k, fn in CRITERIA.items():
        if only and k not in only:
            continue
        out.append(fn(seed) if k == 1 else fn())
    return out
