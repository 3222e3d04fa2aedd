"""Command line entry point ``qfreq``.

Every subcommand reads one JSON config file. ``--out`` and ``--seed``
override the ``out`` and ``seed`` keys. Exit status is 0 when all checks pass,
1 when a check fails and 2 for usage or input errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .epiperimetric import BoundaryPartition, perturbed_model_partition, verify_epiperimetric
from .fields import FieldFormatError, Mesh, read_field, write_field
from .frequency import (
    DomainError,
    check_monotone,
    check_weiss_monotone,
    model_trace,
    monotonicity_tolerance,
    profile,
    smoothed_frequency,
    write_profile_csv,
    write_smoothed_csv,
)
from .homogeneous import (
    ClassificationError,
    HarmonicPolynomial2D,
    HomogeneousSpec,
    SpecError,
    build_homogeneous,
    check_stationarity,
    classify_1d,
    components_of_nodal_partition,
    measured_frequency_is_integer,
    model_field,
    read_spec,
)
from .minimize import BoundaryTrace, SolveParams, TraceError, solve, write_history
from .qspace import QPoint
from .whitney import GraphCurrent, ParameterError, WhitneyParams, bump_current, check_fine_cm, refine

SUBCOMMANDS = ("classify1d", "homogeneous", "frequency", "weiss", "epi", "solve", "whitney", "selftest")


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


# -- helpers -------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def digest(config: dict) -> str:
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def write_report(out: Path, name: str, config: dict, body: dict, passed: bool) -> Path:
    report = {"config_digest": digest(config), "config": _jsonable(config), "passed": bool(passed), **_jsonable(body)}
    path = out / name
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def _resolve(base: Path, p) -> Path:
    path = Path(p)
    if not path.is_absolute():
        path = base / path
    if not path.exists():
        raise FileNotFoundError(str(path))
    return path


def _mesh(cfg: dict) -> Mesh:
    m = cfg.get("mesh", {"kind": "disk", "n": 129})
    kind = m.get("kind", "disk")
    n = int(m.get("n", 129))
    if kind == "disk":
        return Mesh.disk(n, float(m.get("radius", 1.0)))
    if kind == "square":
        return Mesh.square(n, float(m.get("half_width", 1.0)))
    if kind == "interval":
        a, b = m.get("interval", [-1.0, 1.0])
        return Mesh.interval(float(a), float(b), n)
    raise ConfigError(f"unknown mesh kind {kind!r}")


def _qpoint(d) -> QPoint:
    try:
        return QPoint(tuple(float(v) for v in d["values"]), int(d.get("sign", 1)))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad Q-point {d!r}") from exc


def _solver(cfg: dict, seed: int) -> SolveParams:
    s = dict(cfg.get("solver", {}))
    s.setdefault("rng_seed", seed)
    try:
        return SolveParams(**s)
    except TypeError as exc:
        raise ConfigError(f"bad solver section: {exc}") from exc


def _load_field(cfg: dict, base: Path):
    if "field" in cfg:
        return read_field(_resolve(base, cfg["field"]))
    if cfg.get("model"):
        return model_field(_mesh(cfg))
    if "spec" in cfg:
        return build_homogeneous(_spec(cfg, base), _mesh(cfg))
    raise ConfigError("config needs one of 'field', 'model' or 'spec'")


def _spec(cfg: dict, base: Path) -> HomogeneousSpec:
    s = cfg["spec"]
    if isinstance(s, str):
        return read_spec(_resolve(base, s))
    try:
        p = HarmonicPolynomial2D(int(s["alpha"]), float(s.get("c_cos", 1.0)), float(s.get("c_sin", 0.0)))
        if "vector" in s:
            spec = HomogeneousSpec.uniform(p, np.asarray(s["vector"], float))
        else:
            spec = HomogeneousSpec(p, np.asarray(s["plus"], float), np.asarray(s["minus"], float))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad inline spec: {exc}") from exc
    spec.validate()
    return spec


def _radii(cfg: dict, default=(0.2, 0.8, 13)) -> np.ndarray:
    r = cfg.get("radii")
    if r is None:
        return np.linspace(*default)
    if isinstance(r, dict):
        return np.linspace(float(r["start"]), float(r["stop"]), int(r["num"]))
    return np.asarray(r, dtype=float)


def _perturbed(eps: float):
    return acceptance.perturbed_trace(eps)


def _trace(cfg: dict, mesh: Mesh, base: Path) -> BoundaryTrace:
    t = cfg.get("trace", {"kind": "model"})
    kind = t.get("kind")
    if kind == "model":
        return BoundaryTrace.from_angular(mesh, model_trace)
    if kind == "perturbed_model":
        return BoundaryTrace.from_angular(mesh, _perturbed(float(t.get("eps", 0.1))))
    if kind == "endpoints":
        return BoundaryTrace.from_endpoints(mesh, _qpoint(t["left"]), _qpoint(t["right"]))
    if kind == "field":
        f = read_field(_resolve(base, t["path"]))
        if not f.mesh.same_geometry(mesh):
            raise ConfigError("trace field mesh differs from the configured mesh")
        return BoundaryTrace.from_field(f)
    raise ConfigError(f"unknown trace kind {kind!r}")


# -- subcommands -------------------------------------------------------------------


def cmd_classify1d(cfg, out, base, seed):
    if "field" in cfg:
        field = read_field(_resolve(base, cfg["field"]))
        energy = None
    else:
        cfg.setdefault("mesh", {"kind": "interval", "n": 201, "interval": [-1.0, 1.0]})
        mesh = _mesh(cfg)
        if mesh.dim != 1:
            raise ConfigError("classify1d needs an interval mesh")
        tr = BoundaryTrace.from_endpoints(mesh, _qpoint(cfg["left"]), _qpoint(cfg["right"]))
        field, rep = solve(tr, mesh, _solver(cfg, seed))
        energy = rep.energy
        write_field(field, out / "field.txt")
    cls = classify_1d(field, float(cfg.get("tol", 0.02)))
    body = {
        "singular_point": cls.singular_point,
        "a": cls.a,
        "b": cls.b,
        "residual": cls.residual,
        "norm_gap": cls.norm_gap,
        "zero_sum": cls.zero_sum,
        "norms_match": cls.norms_match,
        "energy": energy,
    }
    return cls.valid, "classify1d.json", body


def cmd_homogeneous(cfg, out, base, seed):
    spec = _spec(cfg, base)
    mesh = _mesh(cfg)
    field = build_homogeneous(spec, mesh)
    if cfg.get("write_field", True):
        write_field(field, out / "field.txt")
    part = components_of_nodal_partition(spec.p, mesh)
    integer = measured_frequency_is_integer(field, tol=float(cfg.get("tol", 0.05)))
    stat = check_stationarity(field)
    prof = profile(field, (0.0, 0.0), _radii(cfg)).with_weiss(spec.p.alpha)
    write_profile_csv(prof, out / "profile.csv")
    body = {
        "alpha": spec.p.alpha,
        "components": [part.n_plus, part.n_minus],
        "I_bar": integer.I_bar,
        "nearest_integer": integer.nearest,
        "stationarity": stat.__dict__,
    }
    passed = part.consistent and integer.passed and integer.nearest == spec.p.alpha
    return passed, "homogeneous.json", body


def _frequency_common(cfg, base):
    field = _load_field(cfg, base)
    center = np.asarray(cfg.get("center", [0.0] * field.mesh.dim), float)
    prof = profile(field, center, _radii(cfg), resolve_interface=bool(cfg.get("resolve_interface", False)))
    return field, center, prof


def cmd_frequency(cfg, out, base, seed):
    field, center, prof = _frequency_common(cfg, base)
    if "I0" in cfg:
        prof = prof.with_weiss(float(cfg["I0"]))
    write_profile_csv(prof, out / "profile.csv")
    if cfg.get("smoothed", False):
        samples = [smoothed_frequency(field, center, r) for r in prof.radii]
        write_smoothed_csv(samples, out / "smoothed.csv")
    tol = float(cfg.get("tolerance", monotonicity_tolerance(field)))
    mono = check_monotone(prof.I, tol)
    body = {"I": prof.I, "monotone": mono.__dict__}
    return mono.passed, "frequency.json", body


def cmd_weiss(cfg, out, base, seed):
    if "I0" not in cfg:
        raise ConfigError("weiss needs I0")
    field, center, prof = _frequency_common(cfg, base)
    prof = prof.with_weiss(float(cfg["I0"]))
    write_profile_csv(prof, out / "profile.csv")
    tol = float(cfg.get("tolerance", 3 * field.mesh.h))
    mono = check_weiss_monotone(prof.W, tol)
    passed = mono.passed
    body = {"W": prof.W, "monotone": mono.__dict__}
    if "expect_zero" in cfg:
        worst = float(np.max(np.abs(prof.W)))
        body["max_abs_W"] = worst
        passed &= worst <= float(cfg["expect_zero"])
    return passed, "weiss.json", body


def cmd_epi(cfg, out, base, seed):
    if "partition" in cfg:
        part = BoundaryPartition.load(_resolve(base, cfg["partition"]))
    elif "eps" in cfg:
        part = perturbed_model_partition(float(cfg["eps"]))
    else:
        part = BoundaryPartition.from_trace(model_trace)
    rep = verify_epiperimetric(
        part,
        sigma=float(cfg.get("sigma", 1.0 / 6.0)),
        delta_target=float(cfg.get("delta_target", 0.01)),
        K=int(cfg.get("K", 16)),
        K_inner=int(cfg.get("K_inner", 64)),
    )
    part.save(out / "partition.json")
    return rep.passed, "epi.json", rep.as_dict()


def cmd_solve(cfg, out, base, seed):
    mesh = _mesh(cfg)
    tr = _trace(cfg, mesh, base)
    field, rep = solve(tr, mesh, _solver(cfg, seed))
    write_field(field, out / "field.txt")
    write_history(rep, out / "history.csv")
    body = rep.as_dict()
    body.pop("backend", None)
    return rep.converged, "solve.json", body


def _current(cfg, base) -> GraphCurrent:
    c = cfg.get("current", {"kind": "bump"})
    kind = c.get("kind", "bump")
    n = int(c.get("n", 257))
    if kind == "flat":
        q = int(c.get("q", 2))
        return GraphCurrent.from_function(lambda x, y: np.zeros(x.shape + (q,)), n)
    if kind == "bump":
        return bump_current(
            float(c.get("slope", 1.0)), float(c.get("radius", 0.5)), tuple(c.get("center", (0.0, 0.0))), n, int(c.get("q", 2))
        )
    if kind == "field":
        return GraphCurrent.from_field(read_field(_resolve(base, c["path"])))
    raise ConfigError(f"unknown current kind {kind!r}")


def cmd_whitney(cfg, out, base, seed):
    current = _current(cfg, base)
    p = cfg.get("params", {})
    try:
        params = WhitneyParams(**p)
    except TypeError as exc:
        raise ConfigError(f"bad params section: {exc}") from exc
    params.validate()
    j_max = int(cfg.get("j_max", params.N0 + 5))
    forest = refine(current, params, j_max)
    files = forest.write(out)
    marks = cfg.get("marks", [])
    fine = check_fine_cm(forest, marks)
    father = forest.father_rule_violations()
    body = {
        "summary": forest.summary(),
        "files": files,
        "father_rule_violations": father,
        "fine_cm": {"passed": fine.passed, "violations": fine.violations[:100], "n_violations": len(fine.violations)},
    }
    return father == 0 and fine.passed, "whitney.json", body


def cmd_selftest(cfg, out, base, seed):
    only = cfg.get("only")
    results = acceptance.run_all(only=set(only) if only else None, seed=seed)
    for r in results:
        print(r.line(), flush=True)
    body = {
        "criteria": [
            {"number": r.number, "name": r.name, "passed": r.passed, "details": {k: v for k, v in r.details.items()}}
            for r in results
        ]
    }
    return all(r.passed for r in results), "selftest.json", body


COMMANDS = {
    "classify1d": cmd_classify1d,
    "homogeneous": cmd_homogeneous,
    "frequency": cmd_frequency,
    "weiss": cmd_weiss,
    "epi": cmd_epi,
    "solve": cmd_solve,
    "whitney": cmd_whitney,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qfreq", description="Experiments on Dir-minimizing special Q-valued maps.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON configuration file (optional for selftest)")
    ap.add_argument("--out", help="output directory (overrides the 'out' key)")
    ap.add_argument("--seed", type=int, help="random seed (overrides the 'seed' key)")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 2
    try:
        if args.config is None:
            if args.subcommand != "selftest":
                raise ConfigError("--config is required")
            cfg, base = {}, Path.cwd()
        else:
            path = Path(args.config)
            if not path.exists():
                raise FileNotFoundError(str(path))
            try:
                cfg = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
            if not isinstance(cfg, dict):
                raise ConfigError(f"{path}: top level must be an object")
            base = path.resolve().parent
        if args.out is not None:
            cfg["out"] = args.out
        if args.seed is not None:
            cfg["seed"] = args.seed
        seed = int(cfg.get("seed", 0))
        out = Path(cfg.get("out", "qfreq_out"))
        if args.out is None and "out" in cfg and not out.is_absolute():
            out = base / out  # config-file paths follow the config, command-line ones the cwd
        out.mkdir(parents=True, exist_ok=True)
        echo = {k: v for k, v in cfg.items() if k != "out"}  # where results go is not part of the experiment
        echo["subcommand"] = args.subcommand
        passed, name, body = COMMANDS[args.subcommand](cfg, out, base, seed)
        report = write_report(out, name, echo, body, passed)
    except FileNotFoundError as exc:
        print(f"qfreq: error: file not found: {exc.args[-1] if exc.args else exc}", file=sys.stderr)
        return 2
    except (
        ConfigError,
        FieldFormatError,
        SpecError,
        TraceError,
        ParameterError,
        DomainError,
        ClassificationError,
        ValueError,
        KeyError,
    ) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"qfreq: error: {args.subcommand}: {msg}", file=sys.stderr)
        return 2
    print(f"{args.subcommand}: {'ok' if passed else 'CHECK FAILED'} (report {report})")
    return 0 if passed else 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
