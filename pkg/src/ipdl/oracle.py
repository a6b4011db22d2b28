"""Semantic audit: exact proof steps must give distinguishing advantage zero.

Perfect indistinguishability holds for every adversary when two protocols
are exactly equal, so replaying an enumerated adversary pool against the
endpoints of each maximal exact segment of a proof chain is an independent
check on the kernel (exact as rationals, no tolerance).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .semantics import advantage, enumerate_adversaries
from .syntax import Chan, SizeConst, desugar_families, size_eval


@dataclass
class AuditReport:
    lines: list = field(default_factory=list)
    failures: int = 0


def interface_channels(delta, declared, env):
    """Concrete (chan, type) pairs for the declared inputs and outputs."""
    def expand(entries):
        out = []
        for e in entries:
            ty, bound = delta.lookup(e.name)
            if bound is None:
                out.append((Chan(e.name), ty))
            else:
                for i in range(size_eval(bound, env)):
                    out.append((Chan(e.name, SizeConst(i)), ty))
        return out

    return expand(declared.inputs), expand(declared.outputs)


def exact_segments(links):
    """Endpoints of maximal runs of strict links in a chain."""
    out = []
    start = None
    last = None
    for link in links:
        if link.kind == "strict":
            if start is None:
                start = link.lhs
            last = link.rhs
        else:
            if start is not None:
                out.append((start, last))
            start = None
            last = None
    if start is not None:
        out.append((start, last))
    return out


def audit_exact_segments(state, interp, env, budget=2, cap=24) -> AuditReport:
    report = AuditReport()
    inputs, outputs = interface_channels(state.delta, state.declared, env)
    pool = enumerate_adversaries(outputs, inputs, interp, budget, cap=cap)
    for idx, (p, q) in enumerate(exact_segments(state.chain())):
        cp = desugar_families(p, env)
        cq = desugar_families(q, env)
        worst = Fraction(0)
        for adv in pool:
            worst = max(worst, advantage(adv, cp, cq, interp))
        ok = worst == 0
        report.lines.append(
            f"oracle segment {idx}: {'advantage 0 over ' + str(len(pool)) + ' adversaries' if ok else 'ADVANTAGE ' + str(worst)}")
        if not ok:
            report.failures += 1
    return report
