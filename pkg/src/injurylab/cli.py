"""Command line front end: run scenarios, batch campaigns, verify traces.

Exit codes: 0 when every enabled check passes, 1 when a violation is
found, 2 on configuration or usage errors.
"""

import argparse
import hashlib
import sys

from . import low_alpha, nonlow_alpha, nonlow_low2
from .nonlow_low2 import injury_bound
from .ordinal import format_cnf, parse_cnf
from .scenario import load_scenario
from .trace import ConfigError, RunTrace, reduce_summary


def digest(trace: RunTrace) -> str:
    return hashlib.sha256(trace.to_text().encode()).hexdigest()[:16]


def worst_ratio(trace: RunTrace) -> float:
    """Largest observed injuries / closed-form ceiling over protected
    computations; 0.0 when nothing was hit or no finite ceiling applies."""
    worst = 0.0
    if trace.construction == "low-alpha":
        r = low_alpha._LowReplay(trace)
        for e, b in r.budgets.items():
            if b.value is not None and b.value.is_finite() \
                    and b.value.nat_value():
                worst = max(worst, len(r.own_injuries(e)) /
                            b.value.nat_value())
        return worst
    if trace.construction == "nonlow-low2":
        r = nonlow_low2._Replay(trace)
        etas = r.etas()
    else:
        r = nonlow_alpha._CombReplay(trace)
        etas = r.etas()
    for eta in etas:
        totals = {}
        for _, s, x, node, elem in r.counted_injuries(eta):
            totals[x] = totals.get(x, 0) + 1
        for x, n in totals.items():
            worst = max(worst, n / injury_bound(x))
    return worst


def report_lines(trace: RunTrace, checks) -> list:
    lines = [c.line() for c in checks]
    if trace.construction == "low-alpha":
        for ev in trace.by_kind("phi-set"):
            if ev.payload["e"] != "alpha" and "." not in ev.payload["e"]:
                lines.append(f"phi e={ev.payload['e']} "
                             f"value={ev.payload['value']}")
    elif trace.construction == "nonlow-alpha":
        lines += nonlow_alpha.bound_table(trace)
    return lines


def checks_for(trace: RunTrace, sc=None, psis=None) -> list:
    if sc is not None:
        return sc.checks(trace, psis)
    if trace.construction == "nonlow-low2":
        return nonlow_low2.verify_main_lemma_claims(trace, psis)
    if trace.construction == "low-alpha":
        return low_alpha.verify_lowness_budget(trace)
    if trace.construction == "nonlow-alpha":
        return nonlow_alpha.verify_combined_bounds(trace)
    raise ConfigError(f"unknown construction {trace.construction!r}")


def _load(path: str):
    try:
        with open(path) as fh:
            return load_scenario(fh.read())
    except OSError as ex:
        raise ConfigError(str(ex))


def cmd_run(args, out) -> int:
    sc = _load(args.scenario)
    if args.construction:
        sc.construction = args.construction
    if args.alpha:
        sc.alpha = parse_cnf(args.alpha)
    trace, psis = sc.execute(seed=args.seed, stages=args.stages)
    if trace.summary != reduce_summary(trace):
        raise ConfigError("trace summary does not replay")
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace.to_text())
    checks = checks_for(trace, sc, psis)
    lines = report_lines(trace, checks)
    text = "\n".join(lines) + "\n"
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    out.write(text)
    return 0 if all(c.passed for c in checks) else 1


def cmd_campaign(args, out) -> int:
    sc = _load(args.scenario)
    if args.seeds < 1:
        raise ConfigError("campaign wants at least one seed")
    failures = []
    errors = []
    digests = []
    worst = 0.0
    for seed in range(args.seed, args.seed + args.seeds):
        try:
            trace, psis = sc.execute(seed=seed, stages=args.stages)
            checks = checks_for(trace, sc, psis)
        except ConfigError as ex:
            errors.append((seed, str(ex)))
            out.write(f"seed {seed} error {ex}\n")
            continue
        d = digest(trace)
        digests.append(d)
        ratio = worst_ratio(trace)
        worst = max(worst, ratio)
        bad = [c for c in checks if not c.passed]
        out.write(f"seed {seed} digest={d} "
                  f"checks={len(checks) - len(bad)}/{len(checks)} "
                  f"worst-ratio={ratio:.3g}\n")
        for c in bad:
            failures.append((seed, c))
            out.write(f"fail seed={seed} check={c.name} "
                      f"witness={'-' if c.witness is None else c.witness}\n")
    out.write(f"campaign construction={sc.construction} "
              f"seeds={args.seeds} failures={len(failures)} "
              f"errors={len(errors)} worst-ratio={worst:.3g} "
              f"digest={hashlib.sha256(','.join(digests).encode()).hexdigest()[:16]}\n")
    return 1 if failures else 0


def cmd_verify_trace(args, out) -> int:
    try:
        with open(args.trace) as fh:
            trace = RunTrace.from_text(fh.read())
    except OSError as ex:
        raise ConfigError(str(ex))
    if trace.summary != reduce_summary(trace):
        out.write("check self-consistency fail witness ?\n")
        return 1
    checks = checks_for(trace)
    out.write("check self-consistency pass witness ?\n")
    text = "\n".join(report_lines(trace, checks)) + "\n"
    out.write(text)
    return 0 if all(c.passed for c in checks) else 1


def cmd_cnf_eval(args, out) -> int:
    toks = list(args.expr)
    if not toks:
        raise ConfigError("empty expression")
    try:
        acc = parse_cnf(toks[0])
        i = 1
        while i < len(toks):
            op, val = toks[i], toks[i + 1] if i + 1 < len(toks) else None
            if val is None:
                raise ConfigError(f"operator {op!r} wants an operand")
            if op == "+":
                acc = acc + parse_cnf(val)
            elif op == "*":
                acc = acc.times_nat(int(val))
            elif op == "cmp":
                other = parse_cnf(val)
                rel = "lt" if acc < other else (
                    "eq" if acc == other else "gt")
                out.write(rel + "\n")
                return 0
            else:
                raise ConfigError(f"unknown operator {op!r}")
            i += 2
    except (ValueError, IndexError) as ex:
        raise ConfigError(str(ex))
    out.write(format_cnf(acc) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="injury-lab")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="execute one scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--construction", choices=("nonlow-low2", "low-alpha",
                                              "nonlow-alpha"))
    r.add_argument("--alpha")
    r.add_argument("--stages", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--trace")
    r.add_argument("--report")
    r.set_defaults(fn=cmd_run)

    c = sub.add_parser("campaign", help="replay a scenario over many seeds")
    c.add_argument("--scenario", required=True)
    c.add_argument("--seeds", type=int, required=True)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--stages", type=int)
    c.set_defaults(fn=cmd_campaign)

    v = sub.add_parser("verify-trace", help="recheck a written trace")
    v.add_argument("--trace", required=True)
    v.set_defaults(fn=cmd_verify_trace)

    n = sub.add_parser("cnf", help="ordinal notation utilities")
    nsub = n.add_subparsers(dest="cnf_verb", required=True)
    ne = nsub.add_parser("eval")
    ne.add_argument("expr", nargs="+")
    ne.set_defaults(fn=cmd_cnf_eval)
    return p


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return 2 if ex.code else 0
    try:
        return args.fn(args, out)
    except ConfigError as ex:
        out.write(f"error {ex}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
