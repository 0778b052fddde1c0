"""``capbound`` command line: scenario files in, CSV tables out.

Exit status 0 on success, 1 for invalid input, 2 for numeric or capability
failures.
"""
from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cumulative_cdf as cc
from . import extremes, map_lundberg, simulate, transforms
from .copulas import DependenceSpec, GridCopula
from .csvio import write_columns, write_table
from .errors import CapabilityError, ConfigError, DomainError, ModelError, NumericError
from .marginals import Marginal

SCHEMA = {
    "marginal": {"kind", "gamma_snr", "gamma", "file", "value"},
    "dependence": {"kind", "family", "parameter", "grid_file"},
    "run": {"t", "samples", "seed", "reference_rate", "label"},
}
COMMANDS = (
    "marginal",
    "cdf-bounds",
    "dual",
    "exact",
    "simulate",
    "verify",
    "extremes",
    "map-lundberg",
    "mgf",
    "mellin",
    "effective-capacity",
    "service-curve",
)


@dataclass(frozen=True)
class RunConfig:
    scenario: simulate.ChannelScenario
    samples: int = 100_000
    seed: int = 0


def _locate(text: str) -> tuple[dict, dict]:
    """Line numbers of sections and of ``(section, key)`` pairs."""
    sections, keys, current = {}, {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            sections.setdefault(current, no)
        elif current is not None:
            for sep in "=:":
                if sep in line:
                    keys.setdefault((current, line.split(sep, 1)[0].strip().lower()), no)
                    break
    return sections, keys


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse and validate ``[marginal]``, ``[dependence]`` and ``[run]`` sections."""
    cp = configparser.ConfigParser(strict=True, interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("expected a [section] header", exc.lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(exc.message.split(":")[-1].strip() or str(exc), exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    sec_line, key_line = _locate(text)
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", sec_line.get(sec))
        for key in cp[sec]:
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", key_line.get((sec, key)))

    def get(sec, key, conv=str, default=None):
        if not cp.has_option(sec, key):
            return default
        raw = cp[sec][key]
        try:
            return conv(raw)
        except ValueError:
            raise ConfigError(f"{sec}.{key}: cannot read {raw!r} as {conv.__name__}", key_line.get((sec, key))) from None

    def fail(msg, sec, key):
        raise ConfigError(msg, key_line.get((sec, key), sec_line.get(sec)))

    base = Path(base_dir)
    kind = get("marginal", "kind", default="rayleigh").lower()
    gkey = "gamma_snr" if cp.has_option("marginal", "gamma_snr") else "gamma"
    if kind == "rayleigh":
        g = get("marginal", gkey, float, 1.0)
        if not (math.isfinite(g) and g > 0):
            fail(f"precondition gamma_snr>0 violated (got {g:g})", "marginal", gkey)
        marginal = Marginal.rayleigh(g)
    elif kind == "tabulated":
        f = get("marginal", "file")
        if f is None:
            fail("tabulated marginal needs file", "marginal", "kind")
        if not (base / f).exists():
            fail(f"marginal file {f!r} does not exist", "marginal", "file")
        marginal = Marginal.from_csv(base / f)
    elif kind in ("point", "point_mass"):
        marginal = Marginal.point_mass(get("marginal", "value", float, 1.0))
    else:
        fail(f"unknown marginal kind {kind!r}", "marginal", "kind")

    dkind = get("dependence", "kind", default="independent").lower()
    family = get("dependence", "family")
    if dkind == "comonotonic":
        spec = DependenceSpec.comonotonic()
    elif dkind == "independent":
        spec = DependenceSpec.independent()
    elif dkind == "markov":
        grid = get("dependence", "grid_file")
        if grid is not None:
            if not (base / grid).exists():
                fail(f"copula grid {grid!r} does not exist", "dependence", "grid_file")
            spec = DependenceSpec.markov(GridCopula.from_csv(base / grid))
        elif family is None:
            fail("markov dependence needs a copula family", "dependence", "kind")
        else:
            try:
                spec = DependenceSpec.markov(family.lower(), get("dependence", "parameter", float, 0.0))
            except (ModelError, DomainError) as exc:
                fail(str(exc), "dependence", "parameter" if cp.has_option("dependence", "parameter") else "family")
    else:
        fail(f"unknown dependence kind {dkind!r}", "dependence", "kind")

    t = get("run", "t", int, 1)
    if t < 1:
        fail(f"precondition t>=1 violated (got {t})", "run", "t")
    samples = get("run", "samples", int, 100_000)
    if samples < simulate.MIN_SAMPLES:
        fail(f"precondition samples>={simulate.MIN_SAMPLES} violated (got {samples})", "run", "samples")
    rate = get("run", "reference_rate", float)
    if rate is not None and not rate > 0:
        fail("precondition reference_rate>0 violated", "run", "reference_rate")
    scn = simulate.ChannelScenario(marginal, spec, t, rate, get("run", "label", default=""))
    return RunConfig(scn, samples, get("run", "seed", int, 0))


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {str(p)!r} does not exist")
    return parse_config(p.read_text(encoding="utf-8"), p.parent)


# -- argument helpers -------------------------------------------------------------
class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _grid(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ConfigError(f"grid must look like start:stop:count, got {text!r}") from None
    if n < 2 or not b > a:
        raise ConfigError("grid needs stop > start and count >= 2")
    return np.linspace(a, b, n)


def _config_or_gamma(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    g = args.gamma if getattr(args, "gamma", None) is not None else 1.0
    if not g > 0:
        raise ConfigError(f"precondition gamma_snr>0 violated (got {g:g})")
    return RunConfig(simulate.ChannelScenario(Marginal.rayleigh(g), DependenceSpec.independent(), 1))


def _tau(args, cfg: RunConfig) -> int:
    return int(args.tau) if getattr(args, "tau", None) is not None else cfg.scenario.t


def _default_grid(m: Marginal, tau: int) -> np.ndarray:
    return np.linspace(0.0, tau * m.upper_point(1e-6), 200)


# -- commands --------------------------------------------------------------------
def cmd_marginal(args) -> str:
    m = _config_or_gamma(args).scenario.marginal
    xs = _grid(args.grid) if args.grid else np.linspace(0.0, m.upper_point(1e-6), 200)
    write_columns(args.out, {"x": xs, "cdf": m.cdf(xs), "pdf": m.pdf(xs), "sf": m.sf(xs)})
    return f"marginal: {xs.size} points, mean {m.mean:.6g}"


def cmd_cdf_bounds(args) -> str:
    cfg = _config_or_gamma(args)
    m, spec = cfg.scenario.marginal, cfg.scenario.dependence
    tau = _tau(args, cfg)
    xs = _grid(args.grid) if args.grid else _default_grid(m, tau)
    exact = None
    if spec.effective_kind == "comonotonic":
        exact = cc.CdfCurve(xs, cc.exact_cdf_comonotonic(m, tau, xs))
    if args.method == "dual":
        bp = cc.dual_bound_pair(m, tau, xs)
        bp = cc.BoundPair(bp.lower, bp.upper, bp.method, bp.tau, exact)
    else:
        bp = cc.standard_bound_pair(m, tau, xs, equal_split=args.method == "equal-split", with_exact=exact)
    bp.to_csv(args.out)
    return f"cdf-bounds: {bp.method}, tau={tau}, {xs.size} points"


def cmd_dual(args) -> str:
    cfg = _config_or_gamma(args)
    m = cfg.scenario.marginal
    n = _tau(args, cfg)
    xs = _grid(args.grid) if args.grid else _default_grid(m, n)
    std = cc.standard_bound_pair(m, n, xs)
    dual = cc.dual_bound_pair(m, n, xs)
    write_columns(
        args.out,
        {
            "x": xs,
            "dual_lower": dual.lower.ps,
            "dual_upper": dual.upper.ps,
            "standard_lower": std.lower.ps,
            "standard_upper": std.upper.ps,
        },
    )
    return f"dual: n={n}, {xs.size} points"


def cmd_exact(args) -> str:
    cfg = _config_or_gamma(args)
    m, spec = cfg.scenario.marginal, cfg.scenario.dependence
    tau = _tau(args, cfg)
    xs = _grid(args.grid) if args.grid else _default_grid(m, tau)
    kind = spec.effective_kind
    if kind == "comonotonic":
        ps, method = cc.exact_cdf_comonotonic(m, tau, xs), "comonotonic"
    elif kind == "independent" and tau > 3:
        ps, method = cc.cdf_iid_convolution(m, tau)(xs), "convolution"
    else:
        ps, method = cc.exact_cdf_copula_integral(spec, [m] * tau, xs), "copula-integral"
    write_columns(args.out, {"x": xs, "cdf": ps, "method": [method] * xs.size})
    return f"exact: {method}, tau={tau}"


def _run(args, cfg: RunConfig) -> simulate.SimResult:
    n = args.samples if args.samples is not None else cfg.samples
    seed = args.seed if args.seed is not None else cfg.seed
    return simulate.run(cfg.scenario, n, seed, workers=args.workers)


def cmd_simulate(args) -> str:
    cfg = _config_or_gamma(args)
    sim = _run(args, cfg)
    sim.to_csv(args.out)
    return f"simulate: {cfg.scenario.label}, n={sim.n_samples}, seed={sim.seed}"


def cmd_verify(args) -> str:
    cfg = _config_or_gamma(args)
    sim = _run(args, cfg)
    m, tau = cfg.scenario.marginal, cfg.scenario.t
    bp = cc.standard_bound_pair(m, tau, sim.S.xs)
    report = simulate.verify_bounds(sim, bp, sigmas=args.sigmas)
    report.to_csv(args.out)
    verdict = "pass" if report.passed else "FAIL"
    return f"verify: {verdict}, {len(report.violations)} violations at {report.n_points} points"


def cmd_extremes(args) -> str:
    cfg = _config_or_gamma(args)
    scn = cfg.scenario
    xs = _grid(args.grid) if args.grid else np.linspace(0.0, scn.t * scn.marginal.upper_point(1e-4), 50)
    lo, up = extremes.nongranger_curves(scn.dependence, scn.marginal, scn.t, xs)
    extremes.export_bound_curve(args.out, xs, max_cdf_lower=lo, min_cdf_upper=up)
    return f"extremes: t={scn.t}, {xs.size} points"


def cmd_map_lundberg(args) -> str:
    model = map_lundberg.MapModel.from_file(args.model) if args.model else map_lundberg.reference_model()
    theta = map_lundberg.lundberg_root(model)
    us = np.arange(0, int(args.u_max) + 1, dtype=float)
    cols = {"u": us}
    rows = [map_lundberg.sup_tail_bounds(model, u, theta) for u in us]
    for i, s in enumerate(model.states):
        cols[f"lundberg_{s}"] = [r.lundberg[i] for r in rows]
        cols[f"refined_lower_{s}"] = [r.refined_lower[i] for r in rows]
        cols[f"refined_upper_{s}"] = [r.refined_upper[i] for r in rows]
    write_columns(args.out, cols)
    return f"map-lundberg: theta*={theta:.10g}, {us.size} levels"


def cmd_mgf(args) -> str:
    cfg = _config_or_gamma(args)
    m = cfg.scenario.marginal
    tau = _tau(args, cfg)
    thetas = _grid(args.thetas)
    iid = [transforms.mgf_iid(m, tau, th) for th in thetas]
    bounds = [transforms.mgf_bounds_equal_split(m, tau, th) for th in thetas]
    write_columns(
        args.out,
        {"theta": thetas, "iid": iid, "dep_lower": [b[0] for b in bounds], "dep_upper": [b[1] for b in bounds]},
    )
    return f"mgf: tau={tau}, {thetas.size} points"


def cmd_mellin(args) -> str:
    vs = _grid(args.v)
    g = args.gamma
    rows = []
    for v in vs:
        lo = up = ""
        if v < 1:
            lo, up = transforms.mellin_bounds_dependent(g, args.tau, v)
        rows.append((float(v), transforms.mellin_iid_rayleigh(g, args.tau, v), lo, up))
    write_table(args.out, ["v", "iid", "dep_lower", "dep_upper"], rows)
    return f"mellin: gamma={g:g}, tau={args.tau}, {vs.size} points"


def cmd_effective_capacity(args) -> str:
    m = Marginal.rayleigh(args.gamma)
    thetas = _grid(args.thetas)
    rates = [transforms.effective_capacity(m, th, args.mode, args.tau_limit).rate for th in thetas]
    transforms.export_effective_capacity(args.out, thetas, rates)
    return f"effective-capacity: {args.mode}, {thetas.size} points"


def cmd_service_curve(args) -> str:
    if (args.eps is None) == (args.theta is None):
        raise ConfigError("give exactly one of --eps or --theta")
    taus = list(range(1, int(args.tau_max) + 1))
    if args.eps is not None:
        pairs = [transforms.sssc_rayleigh_dependent(args.gamma, t, args.eps) for t in taus]
        param = args.eps
    else:
        m = Marginal.rayleigh(args.gamma)
        logs = [transforms.log_mgf_bounds_equal_split(m, t, args.theta) for t in taus]
        pairs = [(-lu / args.theta, -ll / args.theta) for ll, lu in logs]
        param = args.theta
    transforms.export_service_curves(args.out, taus, [p[0] for p in pairs], [p[1] for p in pairs], param)
    return f"service-curve: tau 1..{taus[-1]}"


HANDLERS = {
    "marginal": cmd_marginal,
    "cdf-bounds": cmd_cdf_bounds,
    "dual": cmd_dual,
    "exact": cmd_exact,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "extremes": cmd_extremes,
    "map-lundberg": cmd_map_lundberg,
    "mgf": cmd_mgf,
    "mellin": cmd_mellin,
    "effective-capacity": cmd_effective_capacity,
    "service-curve": cmd_service_curve,
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="capbound", description="Cumulative capacity bounds for fading channels.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, config=True, gamma=False, tau=False, grid=False, run=False):
        s = sub.add_parser(name)
        s.add_argument("--out", default=f"{name}.csv", help="output CSV path")
        if config:
            s.add_argument("--config", help="scenario file")
        if gamma:
            s.add_argument("--gamma", type=float, default=None if config else 1.0, help="average SNR")
        if tau:
            s.add_argument("--tau", type=int)
        if grid:
            s.add_argument("--grid", help="start:stop:count")
        if run:
            s.add_argument("--samples", type=int)
            s.add_argument("--seed", type=int)
            s.add_argument("--workers", type=int, default=1)
        return s

    add("marginal", gamma=True, grid=True)
    add("cdf-bounds", gamma=True, tau=True, grid=True).add_argument(
        "--method", choices=("standard", "equal-split", "dual"), default="standard"
    )
    add("dual", gamma=True, tau=True, grid=True)
    add("exact", gamma=True, tau=True, grid=True)
    add("simulate", run=True)
    add("verify", run=True).add_argument("--sigmas", type=float, default=3.0)
    add("extremes", grid=True)
    s = add("map-lundberg", config=False)
    s.add_argument("--model", help="MAP model text file (default: built-in two-state model)")
    s.add_argument("--u-max", type=int, default=10)
    add("mgf", gamma=True, tau=True).add_argument("--thetas", default="0:4:41")
    s = add("mellin", config=False, gamma=True)
    s.add_argument("--tau", type=int, default=1)
    s.add_argument("--v", default="-1:1:21")
    s = add("effective-capacity", config=False, gamma=True)
    s.add_argument("--thetas", default="0.01:4:40")
    s.add_argument("--mode", choices=transforms.MODES, default="iid")
    s.add_argument("--tau-limit", type=int, default=256)
    s = add("service-curve", config=False, gamma=True)
    s.add_argument("--eps", type=float)
    s.add_argument("--theta", type=float)
    s.add_argument("--tau-max", type=int, default=64)
    return p


def dispatch(command: str, argv=()) -> int:
    """Run one command; returns the exit status."""
    return main([command, *argv])


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        summary = HANDLERS[args.command](args)
    except (NumericError, CapabilityError, ArithmeticError) as exc:
        print(f"capbound: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, DomainError, ModelError, ValueError, OSError) as exc:
        print(f"capbound: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
