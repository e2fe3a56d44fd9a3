"""Command-line interface.

Exit codes: 0 success, 2 invalid input or configuration, 3 internal invariant
breach. Settings come from flags, then ``PRIZELOOP_*`` environment variables,
then defaults. Log records go to stderr as JSON lines.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from prizeloop import algorithms as alg
from prizeloop.decomposition import DecompositionError, decompose
from prizeloop.instance import (
    GRAPH,
    InstanceError,
    generate_graph_instance,
    generate_instance,
    instance_to_dict,
    load_instance,
    metric_closure,
    root_split_transform,
    save_instance,
)
from prizeloop.lp import PCST, PCTSP, LpInfeasibleError, solve_relaxation
from prizeloop.oracle import OracleError, exact_pcst, exact_pctsp, pctsp_value
from prizeloop.rational import ZERO, q_str, to_q
from prizeloop.rounding import DETERMINISTIC, RANDOMIZED, RoundingError, build_walk_family, select_walks
from prizeloop.splitting import SplitError, boost_solution

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BREACH = 3

ALGORITHMS = ("alg1", "threshold-classic", "tree2", "pcst2", "exact")
MODES = (RANDOMIZED, DETERMINISTIC)
CSV_COLUMNS = (
    "instance",
    "family",
    "n",
    "penalty_scale",
    "lp_value",
    "alg1_ratio",
    "classic_ratio",
    "tree2_ratio",
    "exact_ratio",
)

log = logging.getLogger("prizeloop")


class ConfigError(ValueError):
    pass


class _JsonLines(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        out = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        extra = getattr(record, "data", None)
        if extra:
            out.update(extra)
        return json.dumps(out, sort_keys=True)


def _setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonLines())
    root = logging.getLogger("prizeloop")
    root.handlers[:] = [handler]
    root.setLevel(level.upper())
    root.propagate = False


def _env(name: str, default):
    return os.environ.get("PRIZELOOP_" + name, default)


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class RunConfig:
    algorithm: str = "alg1"
    mode: str = DETERMINISTIC
    gamma_strategy: str = "sweep-yv"
    seed: int = 0
    repeats: int = alg.DEFAULT_REPEATS
    output: str | None = None

    def validate(self) -> "RunConfig":
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be positive")
        self.gamma()
        return self

    def gamma(self) -> tuple[str, float | None]:
        """Parsed strategy: ('sweep', None), ('fixed', g) or ('sample', b)."""
        s = self.gamma_strategy
        if s == "sweep-yv":
            return "sweep", None
        kind, _, val = s.partition(":")
        try:
            x = float(val)
        except ValueError:
            raise ConfigError(f"bad gamma strategy {s!r}") from None
        if kind == "fixed":
            if not 0 < x <= 1:
                raise ConfigError(f"fixed gamma {x} outside (0, 1]")
            return "fixed", x
        if kind == "sample-b":
            if not alg.B_MIN <= x < 1:
                raise ConfigError(f"b = {x} outside [1 - exp(-3/4), 1)")
            return "sample", x
        raise ConfigError(f"bad gamma strategy {s!r}")


def _metric(inst):
    if inst.kind == GRAPH:
        log.info("using the metric closure of a graph instance")
        return metric_closure(inst)
    return inst


def run_config(cfg: RunConfig, inst) -> alg.TourResult:
    cfg.validate()
    if cfg.algorithm == "pcst2":
        return alg.run_tree2_pcst(inst)
    if cfg.algorithm == "exact":
        m = _metric(inst)
        ex = exact_pctsp(m)
        sol = solve_relaxation(m)
        return alg._cycle_result("exact", m, ex.witness, sol.objective)
    inst = _metric(inst)
    sol = solve_relaxation(inst, PCTSP)
    if cfg.algorithm == "tree2":
        return alg.run_tree2_pctsp(inst, sol)
    kind, val = cfg.gamma()
    if cfg.algorithm == "threshold-classic":
        g = val if kind == "fixed" else alg.CLASSIC_GAMMA
        return alg.run_threshold_classic(inst, sol, g)
    if kind == "sweep":
        return alg.select_threshold_deterministic(inst, sol, cfg.mode, cfg.seed, cfg.repeats)
    if kind == "fixed":
        return alg.run_alg1(inst, sol, val, cfg.mode, cfg.seed, cfg.repeats)
    return alg.run_alg1_sampled(inst, sol, val, cfg.mode, cfg.seed, cfg.repeats)


def audit(inst, res: alg.TourResult) -> dict:
    """Serialise and recompute the value from the serialised tour alone."""
    data = res.to_dict()
    if res.cycle is not None:
        m = _metric(inst)
        value = pctsp_value(m, data["tour"])
    else:
        value = alg.tree_objective(inst, [tuple(e) for e in data["tree"]])
    claimed = to_q(data["tour_cost"]) + to_q(data["penalty_cost"])
    if value != claimed:
        raise alg.InvariantBreach(f"serialised tour evaluates to {value}, result claims {claimed}")
    lp = to_q(data["lp_value"])
    ratio = float(value / lp) if lp > 0 else (1.0 if value == 0 else math.inf)
    if ratio != data["ratio"]:
        raise alg.InvariantBreach("ratio does not match the serialised tour")
    return data


# ---------------------------------------------------------------------------
# commands


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    cfg = RunConfig(
        algorithm=args.algorithm,
        mode=args.mode,
        gamma_strategy=args.gamma_strategy,
        seed=args.seed,
        repeats=args.repeats,
        output=args.output,
    ).validate()
    inst = load_instance(args.instance)
    res = run_config(cfg, inst)
    data = audit(inst, res)
    _write(json.dumps(data, sort_keys=True) + "\n", cfg.output)
    print(f"{res.algorithm} {inst.name}: value {float(res.value):.6f} lp {float(res.lp_value):.6f} ratio {res.ratio:.6f}")
    return EXIT_OK


def cmd_lp(args) -> int:
    inst = load_instance(args.instance)
    if args.relaxation == PCTSP:
        inst = _metric(inst)
    sol = solve_relaxation(inst, args.relaxation)
    _write(json.dumps(sol.to_dict(), sort_keys=True) + "\n", args.output)
    return EXIT_OK


def cmd_decompose(args) -> int:
    inst = _metric(load_instance(args.instance))
    sol = solve_relaxation(inst, PCTSP)
    g = alg.rationalize_gamma(args.gamma) if args.gamma is not None else min(alg.threshold_candidates(sol))
    boosted = boost_solution(inst, sol, 1 / g)
    aux, asol, back = root_split_transform(inst, boosted)
    U = frozenset(v for v in aux.vertices if asol.y.get(v, ZERO) == 1)
    dec = decompose(aux, asol, U, (back.root, back.copy))
    out = {"instance": inst.name, "gamma": q_str(g), "root_copy": back.copy, "decomposition": dec.to_dict(args.trace)}
    if args.trace:
        fam = build_walk_family(dec)
        sel = select_walks(fam, aux, DETERMINISTIC)
        out["walks"] = fam.to_dict()
        out["H"] = sel.H.to_dict()
    _write(json.dumps(out, sort_keys=True) + "\n", args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    inst = load_instance(args.instance)
    if args.problem == "pcst":
        res = exact_pcst(inst)
    else:
        res = exact_pctsp(_metric(inst))
    _write(json.dumps(res.to_dict(), sort_keys=True) + "\n", args.output)
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.family == "graph":
        inst = generate_graph_instance(args.n, args.extra_edge_prob, args.penalty_scale, args.seed)
    else:
        inst = generate_instance(args.n, args.family, args.penalty_scale, args.seed)
    if args.output:
        save_instance(inst, args.output)
    else:
        sys.stdout.write(json.dumps(instance_to_dict(inst), sort_keys=True) + "\n")
    return EXIT_OK


def cmd_constants(args) -> int:
    c = alg.verify_constants(args.b)
    print(f"b                      {c.b:.6f}")
    print(f"normaliser I_b         {c.normaliser:.12f}")
    print(f"tour integral          {c.tour_integral:.12f}")
    print(f"max theta_b            {c.theta_max:.12f} at y = {c.theta_argmax:.6f}")
    print(f"certified theta bound  {c.theta_upper:.12f}")
    print(f"alpha                  {c.alpha:.9f}")
    print(f"certified alpha bound  {c.alpha_upper:.9f}")
    print(f"quadrature error       {c.quad_error:.2e}")
    cg = alg.BEST_FIXED_GAMMA
    print(f"fixed gamma {cg:.6f}: factor {alg.fixed_threshold_factor(cg):.9f} (3/2 + exp(-3/4) = {1.5 + math.exp(-0.75):.9f})")
    print(f"classic gamma 0.6: factor {alg.classic_factor(0.6):.9f}")
    verdict = "holds" if c.alpha_upper < 1.774 else "fails"
    print(f"alpha < 1.774: {verdict}")
    return EXIT_OK


def _bench_instance(spec) -> dict:
    family, n, scale, seed, with_exact, mode = spec
    inst = generate_instance(n, family, scale, seed)
    sol = solve_relaxation(inst)
    lp = sol.objective
    a1 = alg.select_threshold_deterministic(inst, sol, mode, seed)
    cl = alg.run_threshold_classic(inst, sol)
    t2 = alg.run_tree2_pctsp(inst, sol)
    row = {
        "instance": inst.name,
        "family": family,
        "n": n,
        "penalty_scale": scale,
        "lp_value": float(lp),
        "alg1_ratio": a1.ratio,
        "classic_ratio": cl.ratio,
        "tree2_ratio": t2.ratio,
        "exact_ratio": None,
    }
    if with_exact:
        ex = exact_pctsp(inst)
        if not (lp <= ex.value <= min(a1.value, cl.value, t2.value)):
            raise alg.InvariantBreach(f"sandwich fails on {inst.name}")
        row["exact_ratio"] = float(ex.value / lp) if lp > 0 else 1.0
    return row


def cmd_bench(args) -> int:
    if args.n_min < 2 or args.n_max < args.n_min:
        raise ConfigError("need 2 <= n-min <= n-max")
    if args.count < 1:
        raise ConfigError("count must be positive")
    if args.with_exact and args.n_max > exact_limit():
        raise ConfigError(f"--with-exact needs n-max <= {exact_limit()}")
    families = args.family.split(",")
    for f in families:
        if f not in ("euclidean", "random-metric"):
            raise ConfigError(f"unknown family {f!r}")
    scales = [float(s) for s in args.penalty_scales.split(",")]
    specs = []
    span = args.n_max - args.n_min + 1
    for k in range(args.count):
        specs.append(
            (families[k % len(families)], args.n_min + k % span, scales[k % len(scales)], args.seed + k, args.with_exact, args.mode)
        )
    with ThreadPoolExecutor(max_workers=max(1, args.workers)) as pool:
        rows = list(pool.map(_bench_instance, specs))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if row[k] is None else row[k]) for k in CSV_COLUMNS})
    summary = {}
    for col in ("alg1_ratio", "classic_ratio", "tree2_ratio", "exact_ratio"):
        vals = [r[col] for r in rows if r[col] is not None]
        if vals:
            summary[col] = {"max": max(vals), "mean": sum(vals) / len(vals)}
    _write(buf.getvalue(), args.csv)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"rows": rows, "summary": summary}, fh, sort_keys=True, indent=1)
    for col, s in summary.items():
        print(f"{col}: max {s['max']:.6f} mean {s['mean']:.6f}", file=sys.stderr)
    return EXIT_OK


def exact_limit() -> int:
    from prizeloop.oracle import PCTSP_LIMIT

    return PCTSP_LIMIT


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prizeloop", description="Prize-collecting TSP and Steiner tree approximation")
    p.add_argument("--log-level", default=_env("LOG_LEVEL", "warning"))
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("instance")
    s.add_argument("--algorithm", default=_env("ALGORITHM", "alg1"), choices=ALGORITHMS)
    s.add_argument("--mode", default=_env("MODE", DETERMINISTIC), choices=MODES)
    s.add_argument("--gamma-strategy", default=_env("GAMMA_STRATEGY", "sweep-yv"), help="sweep-yv | fixed:G | sample-b:B")
    s.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    s.add_argument("--repeats", type=int, default=int(_env("REPEATS", alg.DEFAULT_REPEATS)))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("lp", help="solve the LP relaxation exactly")
    s.add_argument("instance")
    s.add_argument("--relaxation", default=PCTSP, choices=(PCTSP, PCST))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_lp)

    s = sub.add_parser("decompose", help="anchored-tree decomposition of the boosted LP optimum")
    s.add_argument("instance")
    s.add_argument("--gamma", type=float)
    s.add_argument("--trace", action="store_true", help="include split logs, walks and H")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_decompose)

    s = sub.add_parser("oracle", help="exact optimum by enumeration")
    s.add_argument("instance")
    s.add_argument("--problem", default="pctsp", choices=("pctsp", "pcst"))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("bench", help="ratio table over seeded instances")
    s.add_argument("--family", default="euclidean,random-metric")
    s.add_argument("--n-min", type=int, default=6)
    s.add_argument("--n-max", type=int, default=12)
    s.add_argument("--count", type=int, default=20)
    s.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    s.add_argument("--penalty-scales", default="0.3,1,3")
    s.add_argument("--mode", default=_env("MODE", DETERMINISTIC), choices=MODES)
    s.add_argument("--with-exact", action="store_true")
    s.add_argument("--workers", type=int, default=int(_env("WORKERS", 1)))
    s.add_argument("--csv")
    s.add_argument("--json")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("constants", help="analysis constants for the threshold density")
    s.add_argument("--b", type=float, default=float(_env("B", alg.DEFAULT_B)))
    s.set_defaults(func=cmd_constants)

    s = sub.add_parser("gen", help="generate a seeded instance")
    s.add_argument("--family", default="euclidean", choices=("euclidean", "random-metric", "graph"))
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--seed", type=int, default=int(_env("SEED", 0)))
    s.add_argument("--penalty-scale", type=float, default=1.0)
    s.add_argument("--extra-edge-prob", type=float, default=0.25)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_gen)
    return p


INVALID = (ConfigError, InstanceError, OracleError, LpInfeasibleError, FileNotFoundError, json.JSONDecodeError, ValueError)
BREACH = (alg.InvariantBreach, RoundingError, SplitError, DecompositionError, AssertionError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except BREACH as exc:
        dump = {"error": type(exc).__name__, "detail": str(exc), "traceback": traceback.format_exc()}
        print(json.dumps(dump, sort_keys=True), file=sys.stderr)
        return EXIT_BREACH
    except INVALID as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
