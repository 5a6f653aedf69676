"""Command-line front end.

Every subcommand reads an optional JSON config (``--config``) and applies
flag overrides on top. Primary output goes to ``--out`` or stdout. Exit
codes: 0 success, 1 bad configuration, 2 computation failed (no balance
point, entry condition violated, escape, integrator failure).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import asymptotics, blowup, entryexit, example5, integrate, system

__all__ = ["RunConfig", "ConfigError", "parse_ladder", "main"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    system: str = "symmetric_quadratic"
    params: dict = field(default_factory=dict)
    domain: Optional[dict] = None
    x0: float = -1.0
    x_exit: Optional[float] = None
    z0: float = entryexit.Z0_DEFAULT
    eps: float = 1e-3
    eps_ladder: Optional[list] = None
    E1: float = blowup.E1_DEFAULT
    E1_grid: Optional[list] = None
    alpha: float = 1e-3
    mode: str = "singular"
    grid_n: int = 2001
    tol_rel: float = 1e-10
    tol_abs: float = 1e-12
    out: Optional[str] = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def validate(self) -> None:
        try:
            self.build_system()
        except (system.SystemError_, ValueError, TypeError) as exc:
            raise ConfigError(f"bad system description: {exc}") from None
        if not self.z0 > 0:
            raise ConfigError("z0 must be positive")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.eps_ladder is not None:
            lad = [float(e) for e in self.eps_ladder]
            if any(e <= 0 for e in lad) or any(b >= a for a, b in zip(lad, lad[1:])):
                raise ConfigError("eps_ladder must be positive and strictly decreasing")
        if not self.E1 > 0:
            raise ConfigError("E1 must be positive")
        if self.E1_grid is not None and any(not e > 0 for e in self.E1_grid):
            raise ConfigError("E1_grid entries must be positive")
        if self.mode not in ("singular", "pipeline"):
            raise ConfigError("mode must be 'singular' or 'pipeline'")
        if self.grid_n < 3:
            raise ConfigError("grid_n must be >= 3")
        try:
            self.tolerances()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def build_system(self) -> system.SlowFastSystem:
        return system.builtin(self.system, self.params, self.domain)

    def tolerances(self) -> integrate.Tolerances:
        return integrate.Tolerances(rel=self.tol_rel, abs=self.tol_abs)

    def ladder(self) -> list[float]:
        if self.eps_ladder is None:
            return asymptotics.default_ladder()
        return [float(e) for e in self.eps_ladder]


def parse_ladder(text: str) -> list[float]:
    """``lo:hi:n`` (log-spaced) or ``lo:hi:n:lin``; returned largest first."""
    parts = text.split(":")
    if len(parts) not in (3, 4):
        raise ConfigError(f"ladder must look like lo:hi:n[:log|lin], got {text!r}")
    try:
        lo, hi, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"cannot parse ladder {text!r}") from None
    kind = parts[3] if len(parts) == 4 else "log"
    if not (0 < lo < hi) or n < 1:
        raise ConfigError("ladder needs 0 < lo < hi and n >= 1")
    if kind == "log":
        vals = np.geomspace(hi, lo, n)
    elif kind == "lin":
        vals = np.linspace(hi, lo, n)
    else:
        raise ConfigError(f"ladder spacing must be log or lin, got {kind!r}")
    return [float(v) for v in vals]


def _g17(v: float) -> str:
    return f"{v:.17g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_g17(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- commands ----------------------------------------------------------------

def cmd_check(cfg: RunConfig) -> int:
    sysm = cfg.build_system()
    x_exit = cfg.x_exit
    if x_exit is None:
        x_exit = entryexit.theoretical_exit(sysm, cfg.x0).p0
    rep = system.check_conditions(sysm, cfg.x0, x_exit, cfg.grid_n)
    _emit(cfg, _dumps(rep.to_dict()))
    return 0


def cmd_p0(cfg: RunConfig) -> int:
    sol = entryexit.theoretical_exit(cfg.build_system(), cfg.x0)
    _emit(cfg, _dumps(sol.to_dict()))
    return 0


def cmd_return(cfg: RunConfig) -> int:
    s = entryexit.numerical_return(cfg.build_system(), cfg.x0, cfg.z0, cfg.eps,
                                   cfg.tolerances())
    _emit(cfg, _csv(["x0", "z0", "eps", "p_eps", "steps"],
                    [(s.x0, s.z0, s.eps, s.p_eps, s.steps)]))
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    table = entryexit.convergence_study(cfg.build_system(), cfg.x0, cfg.z0,
                                        cfg.ladder(), cfg.tolerances())
    for eps, face in table.escaped:
        print(f"eps={eps:.6g}: escaped through {face}", file=sys.stderr)
    _emit(cfg, table.to_csv())
    return 0


def cmd_blowup(cfg: RunConfig) -> int:
    sysm = cfg.build_system()
    grid = cfg.E1_grid or [cfg.E1]
    if cfg.mode == "singular":
        orbits = [blowup.singular_composition(sysm, cfg.x0, e).to_dict() for e in grid]
        _emit(cfg, _dumps(orbits if len(orbits) > 1 else orbits[0]))
        return 0
    res = blowup.affine_pipeline(sysm, cfg.x0, cfg.z0, cfg.eps, grid[0], cfg.tolerances())
    rows = []
    t_off = 0.0
    for leg in res.legs:
        for t, y in zip(leg.t, leg.y):
            rows.append((t_off + float(t), float(y[0]), float(y[1]), float(y[2])))
        t_off += float(leg.t[-1])
    _emit(cfg, _csv(["t", "x", "z", "E"], rows))
    summary = {"x3": res.x3, "z1": res.z1, "z1_expected": res.z1_expected,
               "E3": res.E3, "E0": res.E0,
               "max_conservation_error": res.max_conservation_error}
    print(json.dumps(summary, sort_keys=True), file=sys.stderr)
    return 0


def cmd_fit(cfg: RunConfig) -> int:
    res = asymptotics.detect_log_term(cfg.build_system(), cfg.x0, cfg.z0, cfg.ladder())
    _emit(cfg, _dumps(res.to_dict()))
    if cfg.out:
        Path(cfg.out).with_suffix(".samples.csv").write_text(res.samples_csv())
    return 0


def cmd_example5(cfg: RunConfig) -> int:
    eps_values = cfg.eps_ladder or [cfg.eps]
    results = [example5.c_via_finite_difference(cfg.x0, e, cfg.alpha, cfg.tolerances())
               for e in eps_values]
    _emit(cfg, example5.report_csv(results))
    return 0


def cmd_kappa(cfg: RunConfig) -> int:
    base = cfg.build_system()
    ks = asymptotics.kappa_transform(base)
    w0 = ks.z_to_w(cfg.z0)
    tol = cfg.tolerances()
    rows = []
    for eps in cfg.eps_ladder or [cfg.eps]:
        direct = entryexit.numerical_return(base, cfg.x0, cfg.z0, eps, tol).p_eps
        via = entryexit.numerical_return(ks.transformed, cfg.x0, w0, eps, tol).p_eps
        rows.append((float(eps), direct, via, via - direct))
    _emit(cfg, _csv(["eps", "p_direct", "p_kappa", "diff"], rows))
    return 0


COMMANDS = {
    "check": cmd_check,
    "p0": cmd_p0,
    "return": cmd_return,
    "sweep": cmd_sweep,
    "blowup": cmd_blowup,
    "fit": cmd_fit,
    "example5": cmd_example5,
    "kappa": cmd_kappa,
}

_FLAG_KEYS = ("x0", "z0", "eps", "alpha", "E1", "system", "out", "mode", "x_exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slowfast",
        description="Entry-exit maps, blow-up transitions and return-map fits "
                    "for planar slow-fast systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output file (default: stdout)")
        p.add_argument("--system", help=f"catalog system ({', '.join(system.CATALOG)})")
        p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                       help="system parameter, repeatable")
        p.add_argument("--x0", type=float)
        p.add_argument("--x-exit", dest="x_exit", type=float)
        p.add_argument("--z0", type=float)
        p.add_argument("--eps", type=float)
        p.add_argument("--E1", type=float)
        p.add_argument("--E1-grid", dest="E1_grid", help="comma-separated E1 values")
        p.add_argument("--alpha", type=float)
        p.add_argument("--ladder", help="eps ladder lo:hi:n[:log|lin]")
        p.add_argument("--mode", choices=("singular", "pipeline"))
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective config as JSON and exit")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(base, dict):
            raise ConfigError("config must be a JSON object")
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            base[key] = val
    if args.param:
        params = dict(base.get("params") or {})
        for item in args.param:
            k, sep, v = item.partition("=")
            if not sep:
                raise ConfigError(f"--param expects KEY=VALUE, got {item!r}")
            try:
                params[k] = float(v)
            except ValueError:
                raise ConfigError(f"parameter {k} must be numeric") from None
        base["params"] = params
    if args.ladder:
        base["eps_ladder"] = parse_ladder(args.ladder)
    if args.E1_grid:
        try:
            base["E1_grid"] = [float(v) for v in args.E1_grid.split(",")]
        except ValueError:
            raise ConfigError("--E1-grid must be comma-separated numbers") from None
    return RunConfig.from_dict(base)


COMPUTE_ERRORS = (
    entryexit.EntryConditionError,
    entryexit.ExitNotFoundError,
    system.DegenerateSystemError,
    system.OutOfDomainError,
    blowup.ChartOverflowError,
    integrate.IntegrationError,
)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.dump_config:
        sys.stdout.write(cfg.to_json() + "\n")
        return 0
    try:
        return COMMANDS[args.command](cfg)
    except COMPUTE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
