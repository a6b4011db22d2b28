"""Trusted proof core.

Exact equality steps validate the side conditions of the rewriting rules
(composition/scope motion, absorption, fold, substitution, drop, plus the
structural rules: associativity/commutativity of parallel composition, the
zero unit, binder exchange and elimination, alpha, and reaction rewriting by
the conservative equality checker).  Approximate judgments carry a ledger of
per-axiom invocation counts and symbolic context bounds; chaining sums the
counts and maxes the bounds.

Protocols are handled in a hoisted normal form: all `new` binders outermost,
parallel components in a flat list.  Moving between that form and any other
arrangement of the same binders and components is justified by the structural
rule set, so normal-form maintenance is itself kernel-checked territory.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from . import rewrite
from .cost import (
    Const, CostExpr, cost_degree, cost_eval, cost_max, cost_normalize,
    cost_variables, context_norm, soundness_poly,
)
from .syntax import (
    Assign, AssignValue, BindR, Chan, ChannelContext, Family, IfR, IpdlError,
    New, Par, Protocol, Reaction, Read, Ret, Samp, SizeExpr, SizeParam, Zero,
    alpha_eq, contains_samp, fresh_name, par, reaction_reads, size_eq,
    size_key, size_subst, subst_index_reaction,
)
from .typecheck import ChanSetEntry, ProtocolType, typecheck_protocol


class KernelError(IpdlError):
    code = "KERNEL"


def _fail(rule: str, condition: str, message: str):
    raise KernelError(f"{rule}: {message}", code=f"{rule}/{condition}")


# ---------------------------------------------------------------------------
# Axioms.


@dataclass(frozen=True)
class AxiomDecl:
    """A declared protocol equality: exact (`protocol-assumption`) or
    approximate (`approx-assumption`)."""

    name: str
    kind: str                  # "exact" | "approx"
    delta: tuple               # ((name, ty, bound|None), ...)
    inputs: tuple              # ChanSetEntry
    outputs: tuple             # ChanSetEntry
    lhs: Protocol
    rhs: Protocol

    def validate(self, sig):
        declared = ProtocolType.of(self.inputs, self.outputs)
        ctx = ChannelContext(self.delta)
        typecheck_protocol(sig, ctx, self.lhs, declared)
        typecheck_protocol(sig, ctx, self.rhs, declared)


# ---------------------------------------------------------------------------
# Normal form: hoisted binders + flat component list.


@dataclass(frozen=True)
class Binder:
    name: str
    ty: object
    bound: SizeExpr | None = None


@dataclass(frozen=True)
class NormalForm:
    binders: tuple
    comps: tuple

    def to_protocol(self) -> Protocol:
        body = par(*self.comps)
        for b in reversed(self.binders):
            body = New(b.name, b.ty, body, b.bound)
        return body

    def comp_channel(self, comp) -> str:
        return comp_channel(comp)

    def find(self, name: str) -> int:
        for i, c in enumerate(self.comps):
            if comp_channel(c) == name:
                return i
        _fail("TARGET", "not-found", f"no assignment to channel {name!r}")

    def binder_names(self):
        return {b.name for b in self.binders}

    def has_binder(self, name):
        return any(b.name == name for b in self.binders)

    def without_binder(self, name) -> "NormalForm":
        return NormalForm(tuple(b for b in self.binders if b.name != name), self.comps)

    def replace_comp(self, idx, comp) -> "NormalForm":
        comps = list(self.comps)
        comps[idx] = comp
        return NormalForm(self.binders, tuple(comps))

    def remove_comp(self, idx) -> "NormalForm":
        comps = list(self.comps)
        del comps[idx]
        return NormalForm(self.binders, tuple(comps))


def comp_channel(comp) -> str:
    match comp:
        case Assign(c, _) | AssignValue(c, _):
            return c.name
        case Family(name, _, _, _):
            return name
        case _:
            raise KernelError(f"not a flat component: {comp!r}", code="KERNEL/bad-component")


def comp_reads(comp) -> set:
    match comp:
        case Assign(_, r) | Family(_, _, _, r):
            return reaction_reads(r)
        case _:
            return set()


def flatten(p: Protocol) -> NormalForm:
    """Hoist binders outermost and flatten parallel composition.

    Justified by scope extrusion (binder names are freshened so the side
    condition always holds), binder exchange, associativity/commutativity,
    and the zero unit.
    """
    binders = []
    comps = []
    taken = set(_all_names(p))

    def walk(q):
        match q:
            case Zero():
                return
            case Par(a, b):
                walk(a)
                walk(b)
            case New(name, ty, body, bound):
                if any(b.name == name for b in binders):
                    fresh = fresh_name(name, taken | {b.name for b in binders})
                    taken.add(fresh)
                    from .syntax import rename_channels
                    body = rename_channels({name: fresh}, body)
                    name = fresh
                binders.append(Binder(name, ty, bound))
                walk(body)
            case Assign() | AssignValue() | Family():
                comps.append(q)
            case _:
                raise KernelError(f"cannot flatten {q!r}", code="KERNEL/bad-component")

    walk(p)
    return NormalForm(tuple(binders), tuple(comps))


def _all_names(p: Protocol) -> set:
    out = set()

    def walk(q):
        match q:
            case Par(a, b):
                walk(a)
                walk(b)
            case New(name, _, body, _):
                out.add(name)
                walk(body)
            case Assign(c, r):
                out.add(c.name)
                out.update(reaction_reads(r))
            case Family(name, _, _, r):
                out.add(name)
                out.update(reaction_reads(r))
            case AssignValue(c, _):
                out.add(c.name)
            case _:
                pass

    walk(p)
    return out


# ---------------------------------------------------------------------------
# Structural equality: the congruence closure of the structural rule set.
# Components are matched one-to-one under a unifier that may rename bound
# channels; free channels are rigid.


def _index_matches(i1, i2, ivars: dict) -> bool:
    if (i1 is None) != (i2 is None):
        return False
    if i1 is None:
        return True
    for src, dst in ivars.items():
        i1 = size_subst(i1, src, SizeParam(dst))
    return size_eq(i1, i2)


def _unify_chan(c1: Chan, c2: Chan, flexible: set, mapping: dict, ivars: dict):
    """Unify a pattern channel with a target channel.

    Flexible pattern names map injectively to target channels; a pattern
    reference without an index may map to an indexed target (embedding a
    single-channel axiom at a family member), while an indexed pattern
    reference renames the base only.
    """
    if c1.name in flexible:
        prior = mapping.get(c1.name)
        if c1.index is not None:
            if c2.index is None:
                return None
            if prior is not None:
                if prior.index is not None or prior.name != c2.name:
                    return None
            else:
                value = Chan(c2.name)
                if any(v.key() == value.key() for v in mapping.values()):
                    return None
                mapping = dict(mapping)
                mapping[c1.name] = value
            if not _index_matches(c1.index, c2.index, ivars):
                return None
            return mapping
        value = Chan(c2.name, c2.index)
        if prior is not None:
            return mapping if prior.key() == value.key() else None
        if any(v.key() == value.key() for v in mapping.values()):
            return None
        mapping = dict(mapping)
        mapping[c1.name] = value
        return mapping
    if c1.name != c2.name:
        return None
    if not _index_matches(c1.index, c2.index, ivars):
        return None
    return mapping


def _unify_reaction(r1, r2, flexible, mapping, ivars, venv1, venv2, depth):
    match r1, r2:
        case Ret(e1), Ret(e2):
            from .syntax import _expr_alpha
            return mapping if _expr_alpha(e1, e2, venv1, venv2) else None
        case Samp(d1, a1, t1, e1), Samp(d2, a2, t2, e2):
            from .syntax import _expr_alpha
            if d1 != d2 or a1 != a2 or t1 != t2:
                return None
            return mapping if _expr_alpha(e1, e2, venv1, venv2) else None
        case Read(c1, t1), Read(c2, t2):
            if t1 != t2:
                return None
            return _unify_chan(c1, c2, flexible, mapping, ivars)
        case IfR(e1, a1, b1), IfR(e2, a2, b2):
            from .syntax import _expr_alpha
            if not _expr_alpha(e1, e2, venv1, venv2):
                return None
            m = _unify_reaction(a1, a2, flexible, mapping, ivars, venv1, venv2, depth)
            if m is None:
                return None
            return _unify_reaction(b1, b2, flexible, m, ivars, venv1, venv2, depth)
        case BindR(x1, t1, rhs1, body1), BindR(x2, t2, rhs2, body2):
            if t1 != t2:
                return None
            m = _unify_reaction(rhs1, rhs2, flexible, mapping, ivars, venv1, venv2, depth)
            if m is None:
                return None
            v1 = dict(venv1)
            v2 = dict(venv2)
            v1[x1] = ("b", depth)
            v2[x2] = ("b", depth)
            return _unify_reaction(body1, body2, flexible, m, ivars, v1, v2, depth + 1)
        case _:
            return None


def _unify_comp(c1, c2, flexible, mapping, canonical_reactions):
    match c1, c2:
        case Assign(ch1, r1), Assign(ch2, r2):
            m = _unify_chan(ch1, ch2, flexible, mapping, {})
            if m is None:
                return None
            if canonical_reactions:
                r1 = rewrite.canonical(r1)
                r2 = rewrite.canonical(r2)
            return _unify_reaction(r1, r2, flexible, m, {}, {}, {}, 0)
        case AssignValue(ch1, v1), AssignValue(ch2, v2):
            if v1 != v2:
                return None
            return _unify_chan(ch1, ch2, flexible, mapping, {})
        case Family(n1, i1, b1, r1), Family(n2, i2, b2, r2):
            m = _unify_chan(Chan(n1), Chan(n2), flexible, mapping, {})
            if m is None:
                return None
            if not size_eq(b1, b2):
                return None
            if canonical_reactions:
                r1 = rewrite.canonical(r1)
                r2 = rewrite.canonical(r2)
            return _unify_reaction(r1, r2, flexible, m, {i1: i2}, {}, {}, 0)
        case _:
            return None


def match_components(pattern: NormalForm, target: NormalForm, flexible: set,
                     canonical_reactions=False, initial_mapping=None):
    """Match every pattern component to a distinct target component.

    Returns (mapping, matched target indices) or None.  `flexible` names in
    the pattern (its binders, or an axiom's declared channels) unify
    injectively with target channels; all other names are rigid.  Mapping
    values are `Chan`s: an index-free value renames the base name only.
    """

    def go(idx, mapping, used):
        if idx == len(pattern.comps):
            return mapping, used
        pc = pattern.comps[idx]
        for j, tc in enumerate(target.comps):
            if j in used:
                continue
            m = _unify_comp(pc, tc, flexible, mapping, canonical_reactions)
            if m is None:
                continue
            got = go(idx + 1, m, used | {j})
            if got is not None:
                return got
        return None

    return go(0, dict(initial_mapping or {}), frozenset())


def structural_eq(p: Protocol, q: Protocol, canonical_reactions=False) -> bool:
    """Equality modulo the structural rules (and, optionally, the reaction
    equality checker applied per component)."""
    nf1 = flatten(p)
    nf2 = flatten(q)
    if len(nf1.comps) != len(nf2.comps) or len(nf1.binders) != len(nf2.binders):
        return False
    shapes1 = sorted((b.ty, None if b.bound is None else size_key(b.bound))
                     for b in nf1.binders)
    shapes2 = sorted((b.ty, None if b.bound is None else size_key(b.bound))
                     for b in nf2.binders)
    if shapes1 != shapes2:
        return False
    got = match_components(nf1, nf2, flexible=nf1.binder_names(),
                           canonical_reactions=canonical_reactions)
    if got is None:
        return False
    mapping, used = got
    if len(used) != len(nf2.comps):
        return False
    # Binder bijection: mapped binder targets must be binders of q.
    qbinders = nf2.binder_names()
    for src, dst in mapping.items():
        if src in nf1.binder_names() and (dst.index is not None or dst.name not in qbinders):
            return False
    return True


# ---------------------------------------------------------------------------
# Exact rewriting steps.  Each function validates its side conditions and
# returns the rewritten normal form; a trace entry describes the step.


@dataclass
class TraceStep:
    rule: str
    detail: str
    psi_delta: str = "0"

    def line(self) -> str:
        return f"{self.rule: <18} {self.detail} [psi+{self.psi_delta}]"


def _reads_of_family_index(comp: Family, src: str):
    """Indices at which a family component reads channel `src`."""
    out = []

    def walk(r):
        match r:
            case Read(c, _) if c.name == src:
                out.append(c.index)
            case IfR(_, a, b):
                walk(a)
                walk(b)
            case BindR(_, _, rhs, body):
                walk(rhs)
                walk(body)
            case _:
                pass

    walk(comp.reaction)
    return out


def _total_reads(nf: NormalForm, src: str) -> int:
    return sum(rewrite.count_reads(c.reaction, src)
               for c in nf.comps if isinstance(c, (Assign, Family)))


def _member_reaction(fam: Family, index: SizeExpr) -> Reaction:
    return subst_index_reaction(fam.reaction, fam.index_var, index)


def _source_reaction(nf: NormalForm, src_idx: int, target_comp):
    """Reaction assigned to the source, instantiated at the reading index."""
    src_comp = nf.comps[src_idx]
    if isinstance(src_comp, Assign):
        return src_comp.reaction, None
    assert isinstance(src_comp, Family)
    if not isinstance(target_comp, Family):
        _fail("SUBST", "index-mismatch",
              "family source requires a family destination")
    idxs = _reads_of_family_index(target_comp, src_comp.chan_name)
    for idx in idxs:
        if idx is None or not size_eq(idx, SizeParam(target_comp.index_var)):
            _fail("SUBST", "index-mismatch",
                  f"read of {src_comp.chan_name!r} at a foreign index")
    if not size_eq(src_comp.bound, target_comp.bound):
        _fail("SUBST", "index-mismatch", "family bounds differ")
    return _member_reaction(src_comp, SizeParam(target_comp.index_var)), None


def subst_step(nf: NormalForm, src: str, dst: str) -> tuple:
    """Inline the deterministic reaction of `src` at the read in `dst`.

    The source keeps its assignment; duplicability requires it samp-free.
    """
    si = nf.find(src)
    di = nf.find(dst)
    src_comp = nf.comps[si]
    dst_comp = nf.comps[di]
    src_reaction = (src_comp.reaction if isinstance(src_comp, (Assign, Family))
                    else _fail("SUBST", "bad-source", f"{src!r} carries no reaction"))
    if contains_samp(src_reaction):
        _fail("SUBST", "duplicability",
              f"reaction of {src!r} samples; substitution needs a deterministic source")
    if rewrite.count_reads(dst_comp.reaction, src) == 0:
        _fail("SUBST", "no-read", f"{dst!r} does not read {src!r}")
    inline, _ = _source_reaction(nf, si, dst_comp)
    new_reaction = dst_comp.reaction
    while rewrite.count_reads(new_reaction, src) > 0:
        new_reaction = rewrite.inline_read(new_reaction, src, inline)
    new_comp = (Assign(dst_comp.chan, new_reaction) if isinstance(dst_comp, Assign)
                else Family(dst_comp.chan_name, dst_comp.index_var, dst_comp.bound,
                            new_reaction))
    step = TraceStep("SUBST", f"{src} into {dst}")
    return nf.replace_comp(di, new_comp), step


def fold_step(nf: NormalForm, src: str, dst: str) -> tuple:
    """Fold an internal channel read exactly once into its unique reader,
    removing the channel.  The source may be probabilistic."""
    si = nf.find(src)
    di = nf.find(dst)
    if not nf.has_binder(src):
        _fail("FOLD-BIND", "not-internal", f"{src!r} is not an internal channel")
    src_comp = nf.comps[si]
    dst_comp = nf.comps[di]
    total = _total_reads(nf, src)
    in_dst = rewrite.count_reads(dst_comp.reaction, src)
    if isinstance(src_comp, Family):
        if not isinstance(dst_comp, Family):
            _fail("FOLD-BIND", "index-mismatch", "family fold needs a family reader")
        if total != 1 or in_dst != 1:
            _fail("FOLD-BIND", "read-count",
                  f"{src!r} must be read exactly once (found {total})")
        idxs = _reads_of_family_index(dst_comp, src)
        if len(idxs) != 1 or idxs[0] is None or not size_eq(
                idxs[0], SizeParam(dst_comp.index_var)):
            _fail("FOLD-BIND", "index-mismatch",
                  f"member read of {src!r} must use the member's own index")
        if not size_eq(src_comp.bound, dst_comp.bound):
            _fail("FOLD-BIND", "index-mismatch", "family bounds differ")
        inline = _member_reaction(src_comp, SizeParam(dst_comp.index_var))
    else:
        # A read inside any family member happens once per index, so a single
        # channel read from a family is never read exactly once.
        fam_reader = any(isinstance(c, Family) and rewrite.count_reads(c.reaction, src)
                         for c in nf.comps)
        if fam_reader or total != 1 or in_dst != 1:
            _fail("FOLD-BIND", "read-count",
                  f"{src!r} must be read exactly once (found {total})")
        inline = src_comp.reaction
    new_reaction = rewrite.inline_read(dst_comp.reaction, src, inline)
    new_comp = (Assign(dst_comp.chan, new_reaction) if isinstance(dst_comp, Assign)
                else Family(dst_comp.chan_name, dst_comp.index_var, dst_comp.bound,
                            new_reaction))
    out = nf.replace_comp(di, new_comp)
    out = out.remove_comp(out.find(src))
    out = out.without_binder(src)
    step = TraceStep("FOLD-BIND", f"{src} into {dst}")
    return out, step


def unfold_step(nf: NormalForm, name: str, ty, bound: SizeExpr | None,
                reaction: Reaction, dst: str, new_dst_reaction: Reaction) -> tuple:
    """Reverse fold: introduce an internal channel carrying `reaction` and
    reroute `dst` through it.  Validated by folding the candidate back and
    checking reaction equality with the current state."""
    if name in nf.binder_names() or any(comp_channel(c) == name for c in nf.comps):
        _fail("FOLD-BIND", "name-taken", f"channel {name!r} already exists")
    di = nf.find(dst)
    dst_comp = nf.comps[di]
    reads = rewrite.count_reads(new_dst_reaction, name)
    if reads != 1:
        _fail("FOLD-BIND", "read-count",
              f"new reaction for {dst!r} must read {name!r} exactly once")
    if bound is not None:
        if not isinstance(dst_comp, Family):
            _fail("FOLD-BIND", "index-mismatch", "family introduction needs a family reader")
        if not size_eq(bound, dst_comp.bound):
            _fail("FOLD-BIND", "index-mismatch", "family bounds differ")
        # The source member reaction is expressed over the reader's index var,
        # so the member read must use exactly that index.
        probe = Family(dst_comp.chan_name, dst_comp.index_var, dst_comp.bound,
                       new_dst_reaction)
        idxs = _reads_of_family_index(probe, name)
        if idxs[0] is None or not size_eq(idxs[0], SizeParam(dst_comp.index_var)):
            _fail("FOLD-BIND", "index-mismatch",
                  "introduced read must use the member's own index")
        folded = rewrite.inline_read(new_dst_reaction, name, reaction)
    else:
        folded = rewrite.inline_read(new_dst_reaction, name, reaction)
    if not rewrite.reaction_eq(folded, dst_comp.reaction):
        _fail("FOLD-BIND", "not-equal",
              f"folding {name!r} back does not recover the current reaction of {dst!r}")
    new_dst = (Assign(dst_comp.chan, new_dst_reaction) if isinstance(dst_comp, Assign)
               else Family(dst_comp.chan_name, dst_comp.index_var, dst_comp.bound,
                           new_dst_reaction))
    if bound is None:
        new_src = Assign(Chan(name), reaction)
    else:
        new_src = Family(name, dst_comp.index_var if isinstance(dst_comp, Family) else "i",
                         bound, reaction)
    out = NormalForm(nf.binders + (Binder(name, ty, bound),),
                     nf.comps[:di] + (new_dst,) + nf.comps[di + 1:] + (new_src,))
    step = TraceStep("FOLD-BIND", f"sym: introduce {name} via {dst}")
    return out, step


def drop_step(nf: NormalForm, src: str, dst: str) -> tuple:
    """Drop a vacuous dependency of `dst` on `src`: the leading read of
    `src` is removed when the source reaction is deterministic and adds no
    reads beyond those `dst` already performs."""
    si = nf.find(src)
    di = nf.find(dst)
    src_comp = nf.comps[si]
    dst_comp = nf.comps[di]
    if contains_samp(src_comp.reaction):
        _fail("DROP", "duplicability", f"reaction of {src!r} samples")
    staged = rewrite.bring_read_to_head(dst_comp.reaction, src)
    head = rewrite.head_read(staged)
    var, _, _ = head
    rest = staged.body
    if var in rewrite.reaction_free_vars(rest):
        _fail("DROP", "dependency-used", f"{dst!r} uses the value read from {src!r}")
    if not reaction_reads(src_comp.reaction) <= reaction_reads(rest):
        _fail("DROP", "new-reads",
              f"dropping {src!r} would remove reads it performs on behalf of {dst!r}")
    new_comp = (Assign(dst_comp.chan, rest) if isinstance(dst_comp, Assign)
                else Family(dst_comp.chan_name, dst_comp.index_var, dst_comp.bound, rest))
    step = TraceStep("DROP", f"{src} from {dst}")
    return nf.replace_comp(di, new_comp), step


def absorb_step(nf: NormalForm, target: str) -> tuple:
    """Remove an internal channel nobody reads (scope narrowing + absorb)."""
    ti = nf.find(target)
    if not nf.has_binder(target):
        _fail("ABSORB", "not-internal", f"{target!r} is not an internal channel")
    readers = [comp_channel(c) for j, c in enumerate(nf.comps)
               if j != ti and target in comp_reads(c)]
    if readers:
        _fail("ABSORB", "has-readers", f"{target!r} is still read by {readers}")
    out = nf.remove_comp(ti).without_binder(target)
    step = TraceStep("ABSORB", target)
    return out, step


def add_internal_step(nf: NormalForm, name: str, ty, bound: SizeExpr | None,
                      index_var: str, reaction: Reaction) -> tuple:
    """Reverse absorb: compose with a fully hidden fresh channel."""
    if name in nf.binder_names() or any(comp_channel(c) == name for c in nf.comps):
        _fail("ABSORB", "name-taken", f"channel {name!r} already exists")
    comp = (Assign(Chan(name), reaction) if bound is None
            else Family(name, index_var, bound, reaction))
    out = NormalForm(nf.binders + (Binder(name, ty, bound),), nf.comps + (comp,))
    step = TraceStep("ABSORB", f"sym: add internal {name}")
    return out, step


def change_step(nf: NormalForm, target: str, new_reaction: Reaction) -> tuple:
    """Rewrite a reaction to an equal one (checker-validated)."""
    ti = nf.find(target)
    comp = nf.comps[ti]
    if not rewrite.reaction_eq(comp.reaction, new_reaction):
        _fail("CHANGE", "not-equal",
              f"candidate reaction for {target!r} is not provably equal")
    new_comp = (Assign(comp.chan, new_reaction) if isinstance(comp, Assign)
                else Family(comp.chan_name, comp.index_var, comp.bound, new_reaction))
    step = TraceStep("CHANGE", target)
    return nf.replace_comp(ti, new_comp), step


# ---------------------------------------------------------------------------
# Exact axioms (protocol assumptions), including the generic-index form used
# under induction over a family.


def _axiom_pattern(axiom: AxiomDecl, side: str) -> NormalForm:
    return flatten(axiom.lhs if side == "lhs" else axiom.rhs)


def _apply_mapping_reaction(r: Reaction, mapping: dict):
    """Rename channel reads along a Chan-valued mapping.

    An index-free mapping value renames the base name; an indexed value
    instantiates an index-free reference at that member.
    """
    match r:
        case Read(c, ty):
            m = mapping.get(c.name)
            if m is None:
                return r
            if m.index is None:
                return Read(Chan(m.name, c.index), ty)
            if c.index is not None:
                raise KernelError("cannot re-index an indexed reference",
                                  code="AXIOM/index-mismatch")
            return Read(Chan(m.name, m.index), ty)
        case IfR(e, a, b):
            return IfR(e, _apply_mapping_reaction(a, mapping),
                       _apply_mapping_reaction(b, mapping))
        case BindR(x, t, rhs, body):
            return BindR(x, t, _apply_mapping_reaction(rhs, mapping),
                         _apply_mapping_reaction(body, mapping))
        case _:
            return r


def use_exact_axiom(nf: NormalForm, axiom: AxiomDecl, targets: dict,
                    index: SizeExpr | None = None) -> tuple:
    """Rewrite by a declared exact axiom.

    `targets` maps the axiom's output channel names to protocol channel
    names.  With `index` set, the targets are family members: the axiom is
    applied schematically at that index, rewriting the whole families.
    """
    if axiom.kind != "exact":
        _fail("AXIOM", "kind-mismatch",
              f"{axiom.name!r} is approximate; use the approximate application")
    pattern = _axiom_pattern(axiom, "lhs")
    if pattern.binders:
        _fail("AXIOM", "binder-unsupported",
              "exact axioms with internal channels are applied via the occurrence matcher")

    # Build the member slice the axiom must match, seeding the unifier with
    # the explicitly given output targets.
    initial = {}
    slice_comps = []
    for pcomp in pattern.comps:
        pname = comp_channel(pcomp)
        tname = targets.get(pname)
        if tname is None:
            _fail("AXIOM", "target-missing", f"no target given for output {pname!r}")
        ti = nf.find(tname)
        tcomp = nf.comps[ti]
        if index is not None:
            if not isinstance(tcomp, Family):
                _fail("AXIOM", "index-mismatch", f"{tname!r} is not a family")
            initial[pname] = Chan(tcomp.chan_name, index)
            slice_comps.append(Assign(Chan(tcomp.chan_name, index),
                                      _member_reaction(tcomp, index)))
        else:
            if not isinstance(tcomp, Assign):
                _fail("AXIOM", "index-mismatch", f"{tname!r} is not a single channel")
            initial[pname] = Chan(tcomp.chan.name, tcomp.chan.index)
            slice_comps.append(tcomp)

    flexible = {name for name, _, _ in axiom.delta}
    slice_nf = NormalForm((), tuple(slice_comps))
    got = match_components(pattern, slice_nf, flexible, canonical_reactions=True,
                           initial_mapping=initial)
    if got is None:
        _fail("AXIOM", "lhs-mismatch",
              f"axiom {axiom.name!r} left side does not match at the given channels")
    mapping, _ = got

    # Rewrite each target with the corresponding axiom right side.
    rhs = _axiom_pattern(axiom, "rhs")
    out = nf
    for pcomp in rhs.comps:
        pname = comp_channel(pcomp)
        target_chan = mapping.get(pname, Chan(pname))
        ti = out.find(target_chan.name)
        tcomp = out.comps[ti]
        new_reaction = _apply_mapping_reaction(pcomp.reaction, mapping)
        if index is not None:
            assert isinstance(tcomp, Family)
            new_reaction = _reindex(new_reaction, index, tcomp.index_var)
            new_comp = Family(tcomp.chan_name, tcomp.index_var, tcomp.bound, new_reaction)
        else:
            assert isinstance(tcomp, Assign)
            new_comp = Assign(tcomp.chan, new_reaction)
        out = out.replace_comp(ti, new_comp)
    step = TraceStep("AXIOM", f"{axiom.name} at {', '.join(sorted(targets.values()))}")
    return out, step


def _reindex(r: Reaction, index: SizeExpr, ivar: str) -> Reaction:
    """Replace the generic index by the family's own index variable."""
    if isinstance(index, SizeParam):
        return subst_index_reaction(r, index.name, SizeParam(ivar))
    return r


# ---------------------------------------------------------------------------
# Approximate layer: single-axiom congruence judgments and chains.


@dataclass
class ApproxCong:
    """Single-axiom congruence judgment: lhs ~ rhs by `axiom` under a
    program context of size at most `psi`."""

    axiom: str
    lhs: Protocol
    rhs: Protocol
    inputs: tuple
    outputs: tuple
    psi: CostExpr


def approx_axiom(axioms: dict, name: str) -> ApproxCong:
    if name not in axioms:
        _fail("AXIOM", "unknown", f"no approximate assumption named {name!r}")
    ax = axioms[name]
    if ax.kind != "approx":
        _fail("AXIOM", "kind-mismatch",
              f"{name!r} is a protocol assumption, not an indistinguishability assumption")
    return ApproxCong(name, ax.lhs, ax.rhs, ax.inputs, ax.outputs, Const(0))


def cong_comp(j: ApproxCong, q: Protocol) -> ApproxCong:
    """Compose both sides with a common context; psi grows by ||q|| + 3."""
    qnf = flatten(q)
    hidden = qnf.binder_names()
    q_outputs = tuple(
        ChanSetEntry(c.chan_name, c.bound) if isinstance(c, Family)
        else ChanSetEntry(comp_channel(c))
        for c in qnf.comps if comp_channel(c) not in hidden)
    clash = {e.name for e in q_outputs} & {e.name for e in j.outputs}
    if clash:
        _fail("CONG-COMP", "output-clash",
              f"context re-assigns judgment outputs {sorted(clash)}")
    psi = cost_normalize(j.psi + context_norm(q) + Const(3))
    return ApproxCong(j.axiom, Par(j.lhs, q), Par(j.rhs, q), j.inputs,
                      j.outputs + q_outputs, psi)


def cong_new(j: ApproxCong, name: str, ty, bound=None) -> ApproxCong:
    outputs = tuple(e for e in j.outputs if e.name != name)
    return ApproxCong(j.axiom, New(name, ty, j.lhs, bound), New(name, ty, j.rhs, bound),
                      j.inputs, outputs, j.psi)


def input_unused(j: ApproxCong, name: str) -> ApproxCong:
    from .syntax import mentioned_channels
    if name in {e.name for e in j.inputs} | {e.name for e in j.outputs}:
        _fail("INPUT-UNUSED", "channel-free", f"{name!r} already occurs in the judgment")
    if name in mentioned_channels(j.lhs) | mentioned_channels(j.rhs):
        _fail("INPUT-UNUSED", "channel-free", f"{name!r} occurs free in the protocols")
    return ApproxCong(j.axiom, j.lhs, j.rhs, j.inputs + (ChanSetEntry(name),),
                      j.outputs, j.psi)


def embed(j: ApproxCong, phi: dict) -> ApproxCong:
    from .syntax import rename_channels
    values = list(phi.values())
    if len(set(values)) != len(values):
        _fail("EMBED", "not-injective", "renaming must be injective")
    ren = lambda e: ChanSetEntry(phi.get(e.name, e.name), e.bound)
    return ApproxCong(j.axiom, rename_channels(phi, j.lhs), rename_channels(phi, j.rhs),
                      tuple(ren(e) for e in j.inputs), tuple(ren(e) for e in j.outputs),
                      j.psi)


# ---------------------------------------------------------------------------
# Chains and the bound ledger.


@dataclass(frozen=True)
class ChainLink:
    kind: str            # "strict" | "approx"
    lhs: Protocol
    rhs: Protocol
    axiom: str | None = None
    psi: CostExpr | None = None


class BoundLedger:
    """Per-axiom invocation count (xi) and context bound (psi)."""

    def __init__(self, axiom_names=()):
        self.entries = {name: [0, Const(0)] for name in axiom_names}

    def record(self, axiom: str, psi: CostExpr):
        if axiom not in self.entries:
            self.entries[axiom] = [0, Const(0)]
        entry = self.entries[axiom]
        entry[0] += 1
        if entry[0] == 1:
            entry[1] = cost_normalize(psi)
        else:
            entry[1] = cost_normalize(cost_max(entry[1], psi))

    def xi(self, axiom: str) -> int:
        return self.entries.get(axiom, [0, Const(0)])[0]

    def psi(self, axiom: str) -> CostExpr:
        return self.entries.get(axiom, [0, Const(0)])[1]

    def items(self):
        return [(name, entry[0], entry[1]) for name, entry in self.entries.items()]

    def used(self):
        return [(name, xi, psi) for name, xi, psi in self.items() if xi > 0]

    def merge_max(self, other: "BoundLedger") -> "BoundLedger":
        out = BoundLedger()
        names = set(self.entries) | set(other.entries)
        for name in names:
            xi = self.xi(name) + other.xi(name)
            psi = cost_normalize(cost_max(self.psi(name), other.psi(name)))
            out.entries[name] = [xi, psi if xi else Const(0)]
        return out


def approx_seq(links: list, axiom_names=()) -> BoundLedger:
    """Validate a chain of strict/approximate links; fold the ledger.

    Counts add across links; context bounds take the per-axiom maximum.
    """
    for a, b in zip(links, links[1:]):
        if not (alpha_eq(a.rhs, b.lhs) or structural_eq(a.rhs, b.lhs)):
            _fail("TRANS", "chain-break",
                  f"link boundary mismatch between {a.kind} and {b.kind} steps")
    ledger = BoundLedger(axiom_names)
    for link in links:
        if link.kind == "approx":
            ledger.record(link.axiom, link.psi)
        elif link.kind != "strict":
            _fail("TRANS", "bad-link", f"unknown link kind {link.kind!r}")
    return ledger


def sym_links(links: list) -> list:
    return [ChainLink(l.kind, l.rhs, l.lhs, l.axiom, l.psi) for l in reversed(links)]


# ---------------------------------------------------------------------------
# Asymptotic well-formedness and the concrete bound.


def check_asymptotic(ledger: BoundLedger) -> dict:
    """Context bounds are polynomials by construction; report their degrees."""
    out = {}
    for name, xi, psi in ledger.items():
        out[name] = {
            "count": xi,
            "polynomial": True,
            "degree": cost_degree(psi),
            "variables": sorted(cost_variables(psi)),
        }
    return out


def concrete_bound(ledger: BoundLedger, c_sem: int, c_adv: int, sizes: dict,
                   eta_sem: Fraction, eps: dict, nf: int, nd: int):
    """Total advantage bound and per-axiom adversary budgets.

    bound = sum over axioms of xi * (eps + 2 * C_ctxt * eta_sem);
    budget per axiom = P(C_sem, C_adv, C_ctxt) for the fixed polynomial P.
    """
    eta_sem = Fraction(eta_sem)
    if eta_sem < 0:
        raise KernelError("eta_sem must be nonnegative", code="BOUND/negative")
    total = Fraction(0)
    budgets = {}
    contexts = {}
    for name, xi, psi in ledger.used():
        if name not in eps:
            raise KernelError(f"no axiom bound eps for {name!r}", code="BOUND/missing-eps")
        eps_k = Fraction(eps[name])
        if eps_k < 0:
            raise KernelError("eps must be nonnegative", code="BOUND/negative")
        c_ctxt = cost_eval(psi, sizes)
        contexts[name] = c_ctxt
        budgets[name] = soundness_poly(c_sem, c_adv, c_ctxt, nf, nd)
        total += xi * (eps_k + 2 * c_ctxt * eta_sem)
    return total, budgets, contexts

# ---------------------------------------------------------------------------
# Rule dispatcher: one entry point over the exact rewriting steps, keyed by
# rule name, for callers that drive the kernel directly.


EXACT_RULES = {
    "SUBST": lambda nf, a: subst_step(nf, a["src"], a["dst"]),
    "FOLD-BIND": lambda nf, a: fold_step(nf, a["src"], a["dst"]),
    "DROP": lambda nf, a: drop_step(nf, a["src"], a["dst"]),
    "ABSORB": lambda nf, a: absorb_step(nf, a["target"]),
    "CHANGE": lambda nf, a: change_step(nf, a["target"], a["reaction"]),
    "ADD-INTERNAL": lambda nf, a: add_internal_step(
        nf, a["name"], a["ty"], a.get("bound"), a.get("index_var", "i"), a["reaction"]),
    "UNFOLD": lambda nf, a: unfold_step(
        nf, a["name"], a["ty"], a.get("bound"), a["reaction"], a["dst"],
        a["new_dst_reaction"]),
    "AXIOM": lambda nf, a: use_exact_axiom(nf, a["axiom"], a["targets"], a.get("index")),
}


def check_exact_step(rule: str, protocol: Protocol, **args):
    """Validate one exact step; returns (rewritten protocol, trace step).

    Structural steps (associativity, commutativity, zero unit, binder motion,
    alpha) are checked as an equivalence via `structural_eq`: pass the
    candidate right side as `rhs`.
    """
    if rule == "STRUCTURAL":
        rhs = args["rhs"]
        if not structural_eq(protocol, rhs,
                             canonical_reactions=args.get("canonical", False)):
            _fail("STRUCTURAL", "not-equal", "sides differ beyond the structural rules")
        return rhs, TraceStep("STRUCTURAL", "rearrangement")
    if rule not in EXACT_RULES:
        _fail("KERNEL", "unknown-rule", f"no exact rule named {rule!r}")
    nf = flatten(protocol)
    out, step = EXACT_RULES[rule](nf, args)
    return out.to_protocol(), step
