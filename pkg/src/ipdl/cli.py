"""Command line entry point: check case-study files and print bound reports."""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import frontend


def parse_rational(text: str) -> Fraction:
    """Accepts p, p/q, and a^-b forms (e.g. 2^-40)."""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        exponent = int(exp)
        b = Fraction(base)
        return b ** exponent if exponent >= 0 else 1 / (b ** (-exponent))
    return Fraction(text)


def parse_concrete(spec: str) -> dict:
    """Parse `--concrete n=4,msg=128,C_sem=1000,eta_sem=0,eps_CPA=2^-40`."""
    sizes = {}
    out = {"C_sem": 0, "C_adv": 0, "eta_sem": Fraction(0), "eps": {}, "sizes": sizes}
    for item in spec.split(","):
        if not item.strip():
            continue
        key, _, value = item.partition("=")
        key = key.strip()
        value = value.strip()
        if key in ("C_sem", "C_adv"):
            out[key] = int(value)
        elif key == "eta_sem":
            out["eta_sem"] = parse_rational(value)
        elif key.startswith("eps_"):
            out["eps"][key[4:]] = parse_rational(value)
        else:
            sizes[key] = int(value)
    # Type sizes are referenced as |name| by the cost evaluator.
    for key in list(sizes):
        sizes[f"|{key}|"] = sizes[key]
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ipdl",
        description="Check IPDL proof scripts and compute concrete security bounds.")
    sub = parser.add_subparsers(dest="command", required=True)
    check = sub.add_parser("check", help="check a case-study file")
    check.add_argument("file")
    check.add_argument("--report", help="write the bound report to a file")
    check.add_argument("--trace", action="store_true", help="print the derivation trace")
    check.add_argument("--concrete", help="sizes and bound parameters, k=v comma separated")
    check.add_argument("--stable", action="store_true",
                       help="byte-stable output for golden tests (omit the file path)")
    check.add_argument("--oracle-check", dest="oracle_check",
                       help="parameter values for the exact-step semantic audit, k=v list")
    check.add_argument("--interp", help="toy interpretation table file (JSON)")
    check.add_argument("--strategy-audit", dest="strategy_audit", action="store_true",
                       help="compare two evaluation strategies on the proof endpoints")
    args = parser.parse_args(argv)

    concrete = parse_concrete(args.concrete) if args.concrete else None
    try:
        source = frontend.parse_path(args.file)
    except frontend.IpdlError as exc:
        print(f"error: {exc.code}: {exc}", file=sys.stderr)
        return 1
    if not source.proofs:
        print("no proofs declared", file=sys.stderr)
        return 1

    chunks = []
    status = 0
    results = []
    for proof in source.proofs:
        result = frontend.run_proof(source, proof)
        results.append(result)
        chunks.append(frontend.emit_report(result, concrete, source.signature))
        if not result.ok:
            status = 1

    text = "\n".join(chunks)
    if not args.stable:
        text = f"file: {args.file}\n\n" + text
    print(text, end="")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)

    if args.trace:
        for result in results:
            if result.state is None:
                continue
            print(f"\ntrace for {result.name}:")
            for step in result.state.trace:
                print("  " + step.line())

    if args.oracle_check is not None or args.strategy_audit:
        status = max(status, _semantic_audits(args, source, results))
    return status


def _semantic_audits(args, source, results) -> int:
    from .semantics import load_interpretation, big_step
    from .syntax import desugar_families
    from . import oracle

    if not args.interp:
        print("semantic audits need --interp", file=sys.stderr)
        return 1
    interp = load_interpretation(args.interp)
    env = {}
    if args.oracle_check is not None:
        for item in args.oracle_check.split(","):
            if item.strip():
                k, _, v = item.partition("=")
                env[k.strip()] = int(v)
    failures = 0
    for result in results:
        if result.state is None:
            continue
        if args.strategy_audit:
            for side in ("left", "right"):
                p = desugar_families(result.state.current(side).to_protocol(), env)
                d1 = big_step(interp, p, "leftmost")
                d2 = big_step(interp, p, "rightmost")
                ok = d1 == d2
                print(f"strategy audit {result.name}/{side}: {'ok' if ok else 'MISMATCH'}")
                failures += 0 if ok else 1
        if args.oracle_check is not None:
            report = oracle.audit_exact_segments(result.state, interp, env)
            for line in report.lines:
                print(line)
            failures += report.failures
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
