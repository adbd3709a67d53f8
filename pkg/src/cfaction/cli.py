"""Command-line driver.

Subcommands: build, sample, certify, mix, joinings, factor, techlem,
report.  Options may come from flags or from a plain `key = value` config
file (flags win); the master seed may additionally be overridden by the
CFACTION_SEED environment variable, which beats both.  All outputs are
JSON plus CSV, written only after the whole computation succeeded, and
byte-identical across runs with the same configuration and seed.

Exit status: 0 on success, 1 when an exact invariant fails, 2 on bad
usage or configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from random import Random

from . import boxset as bs
from .boxset import BoxSet
from .cfspace import (
    Cylinder,
    MeasureContext,
    TailExhausted,
    act,
    factor_key,
    involution_apply,
    normalize_point,
    points_equal,
    sample_point,
)
from .group import GroupElement
from .lab import (
    ExperimentReport,
    balanced_product_check,
    build_window,
    decimal_str,
    frac_str,
    joining_average,
    lemwm_crosscheck,
    mainlem_density_check,
    mixing_scan,
    shulman_diagnostic,
    techlem_check,
    sample_boxset_in,
    window_arithmetic_check,
)
from .tower import (
    ConstructionError,
    PartitionBudgetError,
    Tower,
    certify_balanced,
    certify_discr_meas,
    certify_djlem,
    derive_seed,
    verify_cf_conditions,
    xi_partition,
)


class UsageError(Exception):
    pass


def load_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _setting(args, config: dict, key: str, *, required=True, default=None):
    val = getattr(args, key, None)
    if val is None:
        val = config.get(key)
    if val is None:
        val = default
    if val is None and required:
        raise UsageError(f"missing required setting '{key}' (flag or config)")
    return val


def _seed(args, config) -> int:
    env = os.environ.get("CFACTION_SEED")
    if env is not None:
        return int(env)
    return int(_setting(args, config, "seed", default=1))


def _r_seq(args, config) -> tuple[int, ...]:
    raw = _setting(args, config, "r")
    if isinstance(raw, str):
        return tuple(int(x) for x in raw.split(","))
    return tuple(raw)


def _tower(args, config) -> tuple[Tower, int]:
    r = _r_seq(args, config)
    seed = _seed(args, config)
    depth = int(_setting(args, config, "depth", default=len(r)))
    if not 1 <= depth <= len(r):
        raise UsageError(f"depth must be in 1..{len(r)}")
    full = Tower.build(r, seed)
    tower = Tower(full.params, full.maps[:depth])
    return tower, seed


def _out_dir(args, config) -> str:
    return str(_setting(args, config, "out", default="reports"))


def _write_json(directory: str, basename: str, obj) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, basename + ".json")
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    return path


def _report_gap_queries():
    return [
        GroupElement(1, Fraction(0), 0),
        GroupElement(-1, Fraction(0), 0),
        GroupElement(0, Fraction(1, 2), 0),
        GroupElement(0, Fraction(-1, 2), 0),
        GroupElement(0, Fraction(0), 1),
    ]


# -- subcommands ------------------------------------------------------------------


def cmd_build(args, config) -> int:
    tower, seed = _tower(args, config)
    p = tower.params
    cf = verify_cf_conditions(p, tower.maps, _report_gap_queries())
    rep = ExperimentReport(
        "build",
        seed,
        {"r": ",".join(map(str, p.r)), "depth": tower.depth},
        [
            ("level", "int"),
            ("a", "int"),
            ("b", "int"),
            ("atilde", "int"),
            ("F_measure", "frac"),
            ("S_measure", "frac"),
            ("c_count", "int"),
        ],
    )
    for n in range(1, tower.depth + 1):
        rep.add(
            n,
            p.a[n],
            p.b[n],
            p.atilde[n],
            tower.F(n).measure,
            tower.S(n).measure,
            tower.c_count(n),
        )
    for n, ratio in p.diagnostics():
        rep.notes.append(f"n^4/r_n at n={n}: {frac_str(ratio)}")
    for q in cf.gap_queries:
        rep.notes.append(
            f"gap query {q.g}: least level {q.least_level}, "
            f"per-level {[q.per_level[k] for k in sorted(q.per_level)]}"
        )
    for n in range(1, tower.depth):
        lhs, rhs, ok = window_arithmetic_check(p, n)
        rep.notes.append(
            f"window arithmetic at n={n}: {frac_str(lhs)} < {frac_str(rhs)}: {ok}"
        )
    out = _out_dir(args, config)
    rep.write(out, "build")
    _write_json(out, "tower", tower.to_json_obj())
    print(f"built depth-{tower.depth} tower for r={list(p.r)}; reports in {out}/")
    return 0


def cmd_sample(args, config) -> int:
    tower, seed = _tower(args, config)
    out = _out_dir(args, config)
    path = _write_json(out, "tower", tower.to_json_obj())
    print(f"sampled {tower.depth} spacer maps (seed {seed}) -> {path}")
    return 0


def cmd_certify(args, config) -> int:
    tower, seed = _tower(args, config)
    p = tower.params
    level = int(_setting(args, config, "level", default=1))
    exhaustive = bool(getattr(args, "exhaustive", False)) or str(
        config.get("exhaustive", "")
    ).lower() in ("1", "true", "yes")
    if not 1 <= level < tower.depth:
        raise UsageError(f"certify level must be in 1..{tower.depth - 1}")
    smap = tower.maps[level]
    bal = certify_balanced(smap)
    dj = certify_djlem(
        p,
        smap,
        seed=derive_seed(seed, "djlem", level),
        exhaustive=exhaustive,
        pair_budget=int(_setting(args, config, "pair_budget", default=64)),
    )
    xi = xi_partition(p, level, _xi_prev(tower, level))
    dm = certify_discr_meas(
        p,
        level,
        xi,
        seed=derive_seed(seed, "discr", level),
        exhaustive=exhaustive,
        sample_budget=int(_setting(args, config, "sample_budget", default=12)),
    )
    rep = ExperimentReport(
        "certify",
        seed,
        {"level": level, "exhaustive": exhaustive, "r": ",".join(map(str, p.r))},
        [
            ("certificate", "str"),
            ("value", "frac"),
            ("threshold", "frac"),
            ("passed", "bool"),
        ],
    )
    rep.add("balanced", bal.deviation, bal.threshold, bal.passed)
    rep.add("djlem_max", dj.max_distance, dj.threshold, dj.passed)
    rep.add("discr_atom_max", dm.atom_max, dm.threshold, dm.passed_atoms)
    if dm.union_probe_max is not None:
        rep.add("discr_union_probe", dm.union_probe_max, dm.threshold, dm.passed_probe)
    if dm.sum_bound is not None:
        rep.add("discr_sum_bound", dm.sum_bound, dm.threshold, dm.sum_bound < dm.threshold)
    rep.notes.append(f"djlem rows: {len(dj.rows)}; skipped: {dj.skipped}")
    rep.notes.append(f"discr pairs: {dm.pair_count}; discarded: {dm.discarded}")
    detail = ExperimentReport(
        "certify_djlem_rows",
        seed,
        {"level": level},
        [
            ("N", "int"),
            ("h", "str"),
            ("h2", "str"),
            ("distance", "frac"),
        ],
    )
    for N, h, hp, d in dj.rows:
        detail.add(N, f"{h[0]},{h[1]}", f"{hp[0]},{hp[1]}", d)
    out = _out_dir(args, config)
    rep.write(out, f"certify_level{level}")
    detail.write(out, f"certify_level{level}_djlem")
    print(
        f"certified level {level}: balanced {decimal_str(bal.deviation)} "
        f"(threshold {bal.threshold}), djlem max "
        f"{decimal_str(dj.max_distance) if dj.max_distance is not None else 'n/a'}, "
        f"discr atom max {decimal_str(dm.atom_max) if dm.atom_max is not None else 'n/a'}"
    )
    return 0


def _xi_prev(tower: Tower, level: int):
    if level == 0:
        return None
    prev_xi = xi_partition(
        tower.params, level - 1, _xi_prev(tower, level - 1) if level > 1 else None
    )
    return (prev_xi, tower.maps[level - 1])


def cmd_mix(args, config) -> int:
    tower, seed = _tower(args, config)
    ctx = MeasureContext(tower)
    p = tower.params
    gs_raw = _setting(args, config, "g_values", default="0,1,2,3")
    gs = [int(x) for x in str(gs_raw).split(",")]
    for n in range(1, tower.depth):
        gs.append(2 * p.atilde[n])
    gs = sorted(set(gs))
    pairs = _default_cylinder_pairs(ctx)
    rep = mixing_scan(ctx, gs, pairs)
    rep.params["seed"] = seed
    out = _out_dir(args, config)
    rep.write(out, "mix")
    print(f"mixing scan over {len(gs)} translation amounts -> {out}/mix.json")
    return 0


def _default_cylinder_pairs(ctx: MeasureContext):
    full = ctx.full_cylinder()
    a1 = ctx.cylinder(1, BoxSet.from_box(0, 0, 1, 0, 1))
    b1 = ctx.cylinder(1, BoxSet.from_box(1, -1, 0, Fraction(-2), Fraction(-1)))
    return [(a1, a1), (a1, b1), (full, full)]


def cmd_joinings(args, config) -> int:
    tower, seed = _tower(args, config)
    ctx = MeasureContext(tower)
    rng = Random(derive_seed(seed, "joinings"))
    window_levels = [
        int(x)
        for x in str(_setting(args, config, "windows", default="1,2")).split(",")
    ]
    windows = [build_window(tower.params, n) for n in window_levels]
    mode = str(_setting(args, config, "pair_mode", default="shared"))
    x = sample_point(ctx, rng, conditioned=True)
    if mode == "shared":
        y = act(ctx, GroupElement(1, Fraction(0), 0), x)
    elif mode == "independent":
        y = sample_point(ctx, rng, conditioned=True)
    else:
        raise UsageError("pair_mode must be shared or independent")
    pairs = _default_cylinder_pairs(ctx)[:2]
    rep = joining_average(ctx, x, y, windows, pairs, infer_k=(mode == "shared"))
    rep.params["seed"] = seed
    rep.params["pair_mode"] = mode
    diag = shulman_diagnostic(windows)
    out = _out_dir(args, config)
    rep.write(out, "joinings")
    diag.write(out, "shulman")
    print(f"joining averages over windows {window_levels} -> {out}/joinings.json")
    return 0


def cmd_factor(args, config) -> int:
    tower, seed = _tower(args, config)
    ctx = MeasureContext(tower)
    bs_raw = str(_setting(args, config, "b_values", default="1/2,1,3/7"))
    b_values = [Fraction(x) for x in bs_raw.split(",")]
    if any(b == 0 for b in b_values):
        raise UsageError("factor experiments need b != 0 (the zero subgroup is not maximal)")
    count = int(_setting(args, config, "points", default=200))
    rng = Random(derive_seed(seed, "factor"))
    rep = ExperimentReport(
        "factor",
        seed,
        {"b_values": bs_raw, "points": count},
        [
            ("b", "frac"),
            ("involutions_ok", "int"),
            ("commutes_ok", "int"),
            ("fiber_size_2", "int"),
            ("total", "int"),
        ],
    )
    shift = GroupElement(1, Fraction(0), 0)
    for b in b_values:
        den = b.denominator
        inv_ok = comm_ok = fib_ok = 0
        for _ in range(count):
            x = sample_point(ctx, rng, extra_denominators=(den,))
            double = involution_apply(ctx, b, involution_apply(ctx, b, x))
            if points_equal(ctx, double, x):
                inv_ok += 1
            lhs = involution_apply(ctx, b, act(ctx, shift, x))
            rhs = act(ctx, shift, involution_apply(ctx, b, x))
            if points_equal(ctx, lhs, rhs):
                comm_ok += 1
            key_x = factor_key(ctx, b, x)
            key_y = factor_key(ctx, b, involution_apply(ctx, b, x))
            xn = normalize_point(ctx, x, ctx.depth)
            yn = normalize_point(ctx, involution_apply(ctx, b, x), ctx.depth)
            if key_x == key_y and xn != yn:
                fib_ok += 1
        rep.add(b, inv_ok, comm_ok, fib_ok, count)
    out = _out_dir(args, config)
    rep.write(out, "factor")
    print(f"factor involution checks for b in {bs_raw} -> {out}/factor.json")
    return 0


def cmd_techlem(args, config) -> int:
    seed = _seed(args, config)
    trials = int(_setting(args, config, "trials", default=5))
    mc_trials = int(_setting(args, config, "mc_trials", default=2))
    mc_samples = int(_setting(args, config, "mc_samples", default=1500))
    rng = Random(derive_seed(seed, "techlem"))
    rep = ExperimentReport(
        "techlem_battery",
        seed,
        {"trials": trials, "mc_trials": mc_trials},
        [
            ("trial", "int"),
            ("mode", "str"),
            ("lhs", "frac"),
            ("rhs", "frac"),
            ("equal_or_within", "bool"),
        ],
    )
    for t in range(trials):
        A = sample_boxset_in(rng, 3, 3)
        B = sample_boxset_in(rng, 3, 3)
        S = sample_boxset_in(rng, 2, 2)
        sub = techlem_check(A, B, S, mode="exact")
        lhs = sub.rows[0][1]
        rhs = sub.rows[1][1]
        rep.add(t, "exact", lhs, rhs, lhs == rhs)
    for t in range(mc_trials):
        A = sample_boxset_in(rng, 2, 2, rects=1)
        B = sample_boxset_in(rng, 2, 2, rects=1)
        S = sample_boxset_in(rng, 1, 1, rects=1)
        sub = techlem_check(
            A, B, S, mode="montecarlo", mc_samples=mc_samples,
            seed=derive_seed(seed, "techlem-mc", t),
        )
        within = all(row[3] for row in sub.rows if row[3] is not None)
        rep.add(t, "montecarlo", sub.rows[0][1], sub.rows[1][1], within)
    out = _out_dir(args, config)
    rep.write(out, "techlem")
    print(f"translate-correlation identity: {trials} exact + {mc_trials} MC -> {out}/techlem.json")
    return 0


def cmd_report(args, config) -> int:
    src = _setting(args, config, "input")
    with open(src) as fh:
        obj = json.load(fh)
    if obj.get("schema") != "cfaction.report/1":
        raise UsageError(f"{src} is not a cfaction report")
    rep = ExperimentReport(
        obj["kind"],
        obj["seed"],
        obj["params"],
        [tuple(c) for c in obj["columns"]],
        notes=obj.get("notes", []),
    )
    for row in obj["rows"]:
        vals = []
        for v, (_, typ) in zip(row, rep.columns):
            if typ == "frac" and v is not None:
                vals.append(Fraction(v))
            else:
                vals.append(v)
        rep.rows.append(tuple(vals))
    out = _out_dir(args, config)
    base = os.path.splitext(os.path.basename(src))[0]
    _, cpath = rep.write(out, base)
    print(f"re-rendered {src} -> {cpath}")
    return 0


# -- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="cfaction",
        description="exact tower-construction experiments on Z x (R x| Z/2)",
    )
    top.add_argument("--config", help="plain key = value configuration file")
    sub = top.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--r", help="comma-separated cut counts, e.g. 2,3,4")
        sp.add_argument("--depth", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    p = sub.add_parser("build", help="build the tower and verify its structure")
    common(p)
    p = sub.add_parser("sample", help="sample and serialize the spacer maps")
    common(p)
    p = sub.add_parser("certify", help="balance / pair / comb certificates at a level")
    common(p)
    p.add_argument("--level", type=int)
    p.add_argument("--exhaustive", action="store_true")
    p.add_argument("--pair-budget", dest="pair_budget", type=int)
    p.add_argument("--sample-budget", dest="sample_budget", type=int)
    p = sub.add_parser("mix", help="correlation decay scan")
    common(p)
    p.add_argument("--g-values", dest="g_values")
    p = sub.add_parser("joinings", help="orbit averages along the windows")
    common(p)
    p.add_argument("--windows")
    p.add_argument("--pair-mode", dest="pair_mode")
    p = sub.add_parser("factor", help="level-flip involution factor checks")
    common(p)
    p.add_argument("--b-values", dest="b_values")
    p.add_argument("--points", type=int)
    p = sub.add_parser("techlem", help="translate-correlation identity battery")
    common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--mc-trials", dest="mc_trials", type=int)
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p = sub.add_parser("report", help="re-render a stored JSON report as CSV")
    common(p)
    p.add_argument("--input")
    return top


_COMMANDS = {
    "build": cmd_build,
    "sample": cmd_sample,
    "certify": cmd_certify,
    "mix": cmd_mix,
    "joinings": cmd_joinings,
    "factor": cmd_factor,
    "techlem": cmd_techlem,
    "report": cmd_report,
}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        config = load_config(args.config) if args.config else {}
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2
    except (ConstructionError, PartitionBudgetError, TailExhausted) as exc:
        print(f"invariant failed [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
