"""High-level proof steps.

Each tactic elaborates into kernel steps automatically: locating targets in
the flattened protocol, performing the scope and composition massaging, and
invoking the corresponding rewriting rule.  Proofs run two streams: plain
tactics rewrite the left protocol, and `sym from (...)` rewrites the right
one (its links are flipped when the chain is assembled).  The proof closes
when both streams meet up to the structural rules and the reaction checker.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import kernel as K
from .cost import CostExpr, cost_normalize, pretty_cost
from .kernel import (
    BoundLedger, ChainLink, KernelError, NormalForm, TraceStep, approx_axiom,
    approx_seq, comp_channel, comp_reads, sym_links,
)
from .syntax import (
    ChannelContext, IpdlError, Protocol, Reaction, SizeExpr, SizeParam,
    size_eq,
)
from .typecheck import ProtocolType, typecheck_protocol


class TacticError(IpdlError):
    code = "TACTIC"


# ---------------------------------------------------------------------------
# Tactic syntax.


@dataclass(frozen=True)
class Tactic:
    pass


@dataclass(frozen=True)
class Subst(Tactic):
    src: str
    dst: str


@dataclass(frozen=True)
class Fold(Tactic):
    src: str
    dst: str


@dataclass(frozen=True)
class Absorb(Tactic):
    target: str


@dataclass(frozen=True)
class AddInternal(Tactic):
    name: str
    ty: object
    bound: SizeExpr | None
    index_var: str
    reaction: Reaction


@dataclass(frozen=True)
class IntroduceInternal(Tactic):
    """Reverse fold: add an internal channel and reroute a reader through it."""

    name: str
    ty: object
    bound: SizeExpr | None
    reaction: Reaction
    via: str
    new_via_reaction: Reaction


@dataclass(frozen=True)
class Change(Tactic):
    target: str
    reaction: Reaction


@dataclass(frozen=True)
class UseAssumption(Tactic):
    name: str
    targets: tuple       # ((axiom output name, protocol channel name), ...)
    index: object = None  # generic index (set inside induction)


@dataclass(frozen=True)
class UseApproxAssumption(Tactic):
    name: str


@dataclass(frozen=True)
class Induction(Tactic):
    index_var: str
    generic_var: str
    body: tuple


@dataclass(frozen=True)
class SymFrom(Tactic):
    body: tuple


# ---------------------------------------------------------------------------
# Proof state.


@dataclass
class ProofState:
    sig: object
    delta: ChannelContext
    declared: ProtocolType
    axioms: dict
    left: NormalForm
    right: NormalForm
    left_links: list = field(default_factory=list)
    right_links: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    generic_index: str | None = None
    step_count: int = 0

    @classmethod
    def start(cls, sig, delta, declared, axioms, lhs: Protocol, rhs: Protocol):
        state = cls(sig, delta, declared, axioms, K.flatten(lhs), K.flatten(rhs))
        state._typecheck(state.left)
        state._typecheck(state.right)
        return state

    # -- bookkeeping ---------------------------------------------------

    def _typecheck(self, nf: NormalForm):
        ctx = ChannelContext()
        for name, (ty, bound) in self.delta.items():
            ctx.add(name, ty, bound)
        for b in nf.binders:
            if b.name not in ctx:
                ctx.add(b.name, b.ty, b.bound)
        typecheck_protocol(self.sig, ctx, nf.to_protocol(), self.declared)

    def _emit(self, side: str, old: NormalForm, new: NormalForm, step: TraceStep,
              axiom: str | None = None, psi: CostExpr | None = None):
        link = ChainLink("strict" if axiom is None else "approx",
                         old.to_protocol(), new.to_protocol(), axiom, psi)
        (self.left_links if side == "left" else self.right_links).append(link)
        if side == "right":
            step = TraceStep(step.rule, f"[sym] {step.detail}", step.psi_delta)
        self.trace.append(step)
        self.step_count += 1

    def current(self, side: str) -> NormalForm:
        return self.left if side == "left" else self.right

    def _set(self, side: str, nf: NormalForm):
        self._typecheck(nf)
        if side == "left":
            self.left = nf
        else:
            self.right = nf

    # -- ledger / finish -------------------------------------------------

    def ledger(self) -> BoundLedger:
        links = self.chain()
        names = [n for n, ax in self.axioms.items() if ax.kind == "approx"]
        return approx_seq(links, names)

    def chain(self) -> list:
        bridge = ChainLink("strict", self.left.to_protocol(), self.right.to_protocol())
        return [*self.left_links, bridge, *sym_links(self.right_links)]

    def finished(self) -> bool:
        return K.structural_eq(self.left.to_protocol(), self.right.to_protocol(),
                               canonical_reactions=True)

    def finish(self) -> BoundLedger:
        if not self.finished():
            raise TacticError("proof incomplete: the two sides do not meet",
                              code="QED/sides-differ")
        return self.ledger()


# ---------------------------------------------------------------------------
# Running tactics.


def run_tactic(state: ProofState, tactic: Tactic, side: str = "left") -> ProofState:
    match tactic:
        case Subst(src, dst):
            _simple(state, side, lambda nf: K.subst_step(nf, src, dst))
        case Fold(src, dst):
            _simple(state, side, lambda nf: K.fold_step(nf, src, dst))
        case Absorb(target):
            _simple(state, side, lambda nf: K.absorb_step(nf, target))
        case AddInternal(name, ty, bound, ivar, reaction):
            _simple(state, side, lambda nf: K.add_internal_step(nf, name, ty, bound,
                                                                ivar, reaction))
        case IntroduceInternal(name, ty, bound, reaction, via, new_via):
            _simple(state, side, lambda nf: K.unfold_step(nf, name, ty, bound,
                                                          reaction, via, new_via))
        case Change(target, reaction):
            _simple(state, side, lambda nf: K.change_step(nf, target, reaction))
        case UseAssumption(name, targets, index):
            _use_exact(state, side, name, dict(targets), index)
        case UseApproxAssumption(name):
            _use_approx(state, side, name)
        case Induction(ivar, gvar, body):
            _induction(state, side, ivar, gvar, body)
        case SymFrom(body):
            if side != "left":
                raise TacticError("sym from cannot nest", code="SYM/nested")
            for t in body:
                run_tactic(state, t, side="right")
        case _:
            raise TacticError(f"unknown tactic {tactic!r}", code="TACTIC/unknown")
    return state


def run_script(state: ProofState, tactics) -> ProofState:
    for t in tactics:
        run_tactic(state, t)
    return state


def run_induction(state: ProofState, index_var: str, generic_var: str,
                  body, side: str = "left") -> ProofState:
    """Check `body` once at a generic index below the family bound."""
    return run_tactic(state, Induction(index_var, generic_var, tuple(body)), side)


def _simple(state: ProofState, side: str, op):
    nf = state.current(side)
    new_nf, step = op(nf)
    state._set(side, new_nf)
    state._emit(side, nf, new_nf, step)


def _use_exact(state: ProofState, side: str, name: str, targets: dict, index):
    if name not in state.axioms:
        raise KernelError(f"AXIOM: no assumption named {name!r}", code="AXIOM/unknown")
    axiom = state.axioms[name]
    if index is not None and state.generic_index is None:
        raise TacticError("indexed assumption use outside induction",
                          code="INDUCTION/out-of-range")
    nf = state.current(side)
    new_nf, step = K.use_exact_axiom(nf, axiom, targets, index)
    state._set(side, new_nf)
    state._emit(side, nf, new_nf, step)


def _induction(state: ProofState, side: str, ivar: str, gvar: str, body):
    """Check the body once at a generic index; conclude for whole families.

    Rewrites established at smaller indices are available as hypotheses, but
    an independent per-session argument (the common case) never consults
    them.  References beyond the generic index are rejected.
    """
    if state.generic_index is not None:
        raise TacticError("nested induction is not supported", code="INDUCTION/nested")
    state.generic_index = gvar
    try:
        for t in body:
            resolved = _resolve_generic(t, gvar)
            run_tactic(state, resolved, side)
    finally:
        state.generic_index = None


def _resolve_generic(t: Tactic, gvar: str) -> Tactic:
    if isinstance(t, UseAssumption):
        if t.index is None:
            return t
        idx = t.index
        if isinstance(idx, SizeExpr):
            from .syntax import size_params
            params = size_params(idx)
            if params == {gvar}:
                if not size_eq(idx, SizeParam(gvar)):
                    raise TacticError(
                        f"index {idx!r} is outside the inductive hypothesis range",
                        code="INDUCTION/out-of-range")
                return t
            if not params:
                return t
            raise TacticError(f"index uses unknown variable(s) {params - {gvar}}",
                              code="INDUCTION/out-of-range")
    return t


# ---------------------------------------------------------------------------
# Approximate assumption application: locate the axiom occurrence, narrow
# binder scopes around it, absorb the remaining components, and record the
# ledger contribution.


def _use_approx(state: ProofState, side: str, name: str):
    judgment = approx_axiom(state.axioms, name)  # validates name and kind
    axiom = state.axioms[name]
    nf = state.current(side)

    pattern = K.flatten(axiom.lhs)
    flexible = {n for n, _, _ in axiom.delta} | pattern.binder_names()
    got = K.match_components(pattern, nf, flexible, canonical_reactions=True)
    if got is None:
        raise TacticError(f"left side of {name!r} does not occur in the protocol",
                          code="MATCH/lhs-not-found")
    mapping, used = got

    if any(v.index is not None for v in mapping.values()):
        raise TacticError("approximate assumptions apply to whole channels, not members",
                          code="MATCH/indexed-embedding")
    names = {k: v.name for k, v in mapping.items()}

    # Pattern binders must map to binders whose only uses are inside the
    # matched occurrence, otherwise the scope cannot be narrowed.
    matched_binders = set()
    for b in pattern.binders:
        target = names.get(b.name)
        if target is None or not nf.has_binder(target):
            raise TacticError(f"axiom channel {b.name!r} must match an internal channel",
                              code="MATCH/binder-mismatch")
        matched_binders.add(target)
    siblings = [c for j, c in enumerate(nf.comps) if j not in used]
    for c in siblings:
        uses = comp_reads(c) | {comp_channel(c)}
        leaked = uses & matched_binders
        if leaked:
            raise TacticError(
                f"cannot narrow scope of {sorted(leaked)}: used outside the occurrence",
                code="MATCH/scope-leak")

    # Assemble the judgment: axiom, embed, one composition per sibling; the
    # enclosing binders re-wrap at no cost.
    phi = {k: v for k, v in names.items() if k not in pattern.binder_names() and k != v}
    judgment = K.embed(judgment, phi) if phi else judgment
    psi = judgment.psi
    trace_bits = []
    for c in siblings:
        judgment = K.cong_comp(judgment, c)
        psi = judgment.psi
        trace_bits.append(comp_channel(c))

    # Replace the matched components by the axiom right side.
    from .syntax import rename_channels
    rename = {k: v for k, v in names.items() if k != v}
    rhs_renamed = K.flatten(rename_channels(rename, axiom.rhs) if rename else axiom.rhs)
    kept = [c for j, c in enumerate(nf.comps) if j not in used]
    new_binders = tuple(b for b in nf.binders if b.name not in matched_binders)
    new_binders = new_binders + rhs_renamed.binders
    new_nf = NormalForm(new_binders, tuple(kept) + rhs_renamed.comps)

    state._set(side, new_nf)
    psi = cost_normalize(psi)
    step = TraceStep("APPROX-CONG", f"{name} absorbing {', '.join(trace_bits) or 'nothing'}",
                     psi_delta=pretty_cost(psi))
    state._emit(side, nf, new_nf, step, axiom=name, psi=psi)


def tactic_context_norm(state: ProofState, axiom_name: str) -> CostExpr:
    """The context bound the ledger currently records for an axiom."""
    return state.ledger().psi(axiom_name)
