"""Command-line driver.

    cr-transport run      --case solid-body --limiter low-order --n 40 --out out/
    cr-transport converge --case smooth-rotation --limiter fct-global --n 20,40,80
    cr-transport audit    --case solid-body --limiter greedy --n 40

Exit codes: 0 success, 2 usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from .benchmarks import (
    case_library,
    convergence_study,
    dmp_audit,
    get_case,
    make_rows,
)
from .cr_space import error_norms
from .errors import (
    BoundsViolatedByLowOrder,
    MeshError,
    NonConvexRing,
    StepUnderflow,
)
from .mesh import read_mesh, refine_half
from .output import write_csv, write_vtk
from .reconstruction import global_bound_check, reconstruct
from .time_integration import LIMITERS, VISCOSITIES, SchemeConfig, run

__all__ = ["RunSpec", "parse_args", "main"]

COMMANDS = ("run", "converge", "audit")
FORMATS = ("csv", "vtk")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunSpec:
    command: str
    case: str
    ns: list
    limiter: str = "fct-global"
    viscosity: str = "minimum"
    cfl: float | None = None
    reduce_factor: float = 0.5
    t_final: float | None = None
    out: Path = Path(".")
    formats: tuple = FORMATS
    mesh_file: Path | None = None

    def config(self) -> SchemeConfig:
        case = get_case(self.case)
        return SchemeConfig(
            viscosity_kind=self.viscosity,
            limiter=self.limiter,
            cfl_target=self.cfl if self.cfl is not None else case.cfl_target,
            reduction_factor=self.reduce_factor,
            t_final=self.t_final if self.t_final is not None else case.t_final,
        )


def _int_list(text):
    try:
        ns = [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError("mesh sizes must be positive integers")
    return ns


def _formats(text):
    vals = tuple(v.strip() for v in str(text).split(",") if v.strip())
    bad = [v for v in vals if v not in FORMATS]
    if bad or not vals:
        raise argparse.ArgumentTypeError(f"formats must be drawn from {','.join(FORMATS)}")
    return vals


def _build_parser():
    p = argparse.ArgumentParser(
        prog="cr-transport",
        description="Bound-preserving Crouzeix-Raviart transport solver.",
    )
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, help="key=value file with default flag values")
    p.add_argument("--case", choices=sorted(case_library()), default="smooth-rotation")
    p.add_argument("--mesh-file", type=Path, help="run on this mesh instead of a uniform grid")
    p.add_argument("--n", type=_int_list, default=[20], help="squares per side, comma list")
    p.add_argument("--limiter", choices=LIMITERS, default="fct-global")
    p.add_argument("--viscosity", choices=VISCOSITIES, default="minimum")
    p.add_argument("--cfl", type=float, help="fraction of the CFL bound used per step")
    p.add_argument("--reduce-factor", type=float, default=0.5,
                   help="step reduction factor after a CFL violation")
    p.add_argument("--t-final", type=float)
    p.add_argument("--out", type=Path, default=Path("."))
    p.add_argument("--formats", type=_formats, default=FORMATS, help="comma list of csv,vtk")
    return p


def _read_config(path):
    vals = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{k}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        vals[key.replace("-", "_")] = val
    return vals


def parse_args(argv=None) -> RunSpec:
    parser = _build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre, _ = parser.parse_known_args(argv)
    if pre.config is not None:
        try:
            vals = _read_config(pre.config)
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config: {exc}")
        known = {a.dest: a for a in parser._actions}
        defaults = {}
        for key, raw in vals.items():
            act = known.get(key)
            if act is None or key in ("command", "help", "config"):
                parser.error(f"unknown config key {key!r}")
            val = act.type(raw) if act.type else raw
            if act.choices is not None and val not in act.choices:
                parser.error(f"config value {raw!r} not allowed for {key}")
            defaults[key] = val
        parser.set_defaults(**defaults)
    ns = parser.parse_args(argv)
    if ns.cfl is not None and not 0.0 < ns.cfl <= 1.0:
        parser.error("--cfl must lie in (0, 1]")
    if not 0.0 < ns.reduce_factor < 1.0:
        parser.error("--reduce-factor must lie in (0, 1)")
    if ns.t_final is not None and ns.t_final <= 0.0:
        parser.error("--t-final must be positive")
    if ns.command == "converge" and ns.mesh_file is None and len(ns.n) < 2:
        parser.error("converge needs at least two mesh sizes in --n")
    if ns.command == "converge" and ns.mesh_file is not None:
        parser.error("converge works on uniform meshes; drop --mesh-file")
    return RunSpec(
        command=ns.command, case=ns.case, ns=ns.n, limiter=ns.limiter,
        viscosity=ns.viscosity, cfl=ns.cfl, reduce_factor=ns.reduce_factor,
        t_final=ns.t_final, out=ns.out, formats=tuple(ns.formats), mesh_file=ns.mesh_file,
    )


def _stem(spec, n=None):
    tag = "mesh" if spec.mesh_file is not None else f"n{n}"
    return f"{spec.case}_{spec.limiter}_{tag}"


def _meshes(spec, case):
    if spec.mesh_file is not None:
        yield None, read_mesh(spec.mesh_file)
    else:
        for n in spec.ns:
            yield n, case.mesh(n)


def _errors_at(case, field, t):
    if case.exact is None:
        return None
    try:
        return error_norms(field, case.exact, t)
    except ValueError:
        return None


def _cmd_run(spec, out):
    case = get_case(spec.case)
    cfg = spec.config()
    for n, mesh in _meshes(spec, case):
        res = run(case, mesh, cfg)
        rec = reconstruct(res.final, refine_half(mesh), case.u_in, res.t)
        stem = _stem(spec, n)
        h = case.width / n if n is not None else mesh.h
        err = _errors_at(case, res.final, res.t)
        rerr = _errors_at(case, rec, res.t)
        gb = global_bound_check(res.final)
        print(f"{stem}: t={res.t:.6g} steps={res.steps} rejected={res.rejected} "
              f"dof range=[{min(res.u_min):.6e}, {max(res.u_max):.6e}] "
              f"vertex range=[{gb.vmin:.6e}, {gb.vmax:.6e}]")
        if err is not None:
            print(f"  L2={err.l2:.5e} Linf={err.linf:.5e} reconstruction L2={rerr.l2:.5e}")
        if "csv" in spec.formats and err is not None:
            notes = [f"case={spec.case} limiter={spec.limiter} viscosity={spec.viscosity}",
                     f"t={res.t:.17g} steps={res.steps}"]
            write_csv(make_rows([h], [err.l2], [err.linf]), out / f"{stem}.csv", notes)
            write_csv(make_rows([h], [rerr.l2], [rerr.linf]), out / f"{stem}_reconstruction.csv",
                      notes + ["errors of the h/2 reconstruction"])
        if "vtk" in spec.formats:
            write_vtk(res.final, out / f"{stem}.vtk")
            write_vtk(rec, out / f"{stem}_reconstruction.vtk")
    return EXIT_OK


def _cmd_converge(spec, out):
    case = get_case(spec.case)
    cfg = spec.config()
    study = convergence_study(case, cfg, spec.ns)
    print(f"{'h':>10} {'L2':>12} {'rate':>6} {'Linf':>12} {'rate':>6}   reconstruction L2  rate")
    for r, q in zip(study.cr, study.reconstruction):
        rate = "" if r.rate is None else f"{r.rate:.2f}"
        lrate = "" if r.linf_rate is None else f"{r.linf_rate:.2f}"
        qrate = "" if q.rate is None else f"{q.rate:.2f}"
        print(f"{r.h:>10.5g} {r.l2:>12.4e} {rate:>6} {r.linf:>12.4e} {lrate:>6}   {q.l2:>12.4e} {qrate:>6}")
    if "csv" in spec.formats:
        notes = [f"case={spec.case} limiter={spec.limiter} viscosity={spec.viscosity}",
                 f"t={cfg.t_final:.17g} cfl={cfg.cfl_target} n={','.join(map(str, spec.ns))}"]
        stem = f"{spec.case}_{spec.limiter}_convergence"
        write_csv(study.cr, out / f"{stem}.csv", notes)
        write_csv(study.reconstruction, out / f"{stem}_reconstruction.csv",
                  notes + ["errors of the h/2 reconstruction"])
    return EXIT_OK


def _cmd_audit(spec, out):
    case = get_case(spec.case)
    cfg = spec.config()
    worst = 0.0
    for n, mesh in _meshes(spec, case):
        res = run(case, mesh, cfg)
        rep = dmp_audit(res, case.bounds)
        worst = max(worst, rep.worst)
        print(f"{_stem(spec, n)}: bounds={case.bounds} steps={rep.steps} "
              f"worst violation={rep.worst:.3e} (step {rep.worst_step}) "
              f"worst stage excursion={rep.stage_worst:.3e}")
    if worst > 1e-12:
        print("maximum principle violated", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv=None) -> int:
    try:
        spec = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    out = Path(spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        handler = {"run": _cmd_run, "converge": _cmd_converge, "audit": _cmd_audit}[spec.command]
        return handler(spec, out)
    except (StepUnderflow, NonConvexRing, BoundsViolatedByLowOrder) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
