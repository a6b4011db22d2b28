"""Typing judgments for expressions, reactions, and protocols.

A protocol judgment checks a protocol against a declared pair of disjoint
input/output channel sets: every output is assigned exactly once, every read
resolves to an input, an output, or a locally bound channel, and family
members are checked once, schematically, under their index variable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .syntax import (
    App, Assign, AssignValue, BindR, Bool, BoolLit, Chan, ChannelContext,
    DataType, Expr, Family, Fst, IfR, IpdlError, LitVal, New, NewIndexed, Pair,
    Par, Prod, Protocol, Reaction, Read, Ret, Samp, Signature, SizeConst,
    SizeExpr, SizeParam, Snd, Unit, UnitVal, ValR, Var, Zero,
    pretty_type, size_eq, size_key, size_params,
)


class TypeError_(IpdlError):
    code = "type"


class TypeContext:
    """Ordered variable typing context."""

    def __init__(self, entries=()):
        self._entries = {}
        for name, ty in entries:
            self.add(name, ty)

    def add(self, name, ty):
        if name in self._entries:
            raise TypeError_(f"duplicate variable {name!r}", code="type/duplicate-var")
        self._entries[name] = ty

    def lookup(self, name):
        if name not in self._entries:
            raise TypeError_(f"unbound variable {name!r}", code="type/unbound-var")
        return self._entries[name]

    def extended(self, name, ty):
        out = TypeContext()
        out._entries = dict(self._entries)
        # Parse-time shadowing resolution keeps names unique, but tolerate
        # rebinding here so hand-built trees can shadow.
        out._entries[name] = ty
        return out


@dataclass(frozen=True)
class ChanSetEntry:
    """One element of a channel I/O set: a single channel or a family."""

    name: str
    bound: SizeExpr | None = None

    def key(self):
        return (self.name, None if self.bound is None else size_key(self.bound))

    def __str__(self):
        if self.bound is None:
            return self.name
        from .syntax import pretty_size
        return f"{self.name}[i < {pretty_size(self.bound)}]"


@dataclass(frozen=True)
class ProtocolType:
    inputs: tuple
    outputs: tuple

    def __post_init__(self):
        in_names = {e.name for e in self.inputs}
        out_names = {e.name for e in self.outputs}
        if in_names & out_names:
            raise TypeError_(f"inputs and outputs overlap: {in_names & out_names}",
                             code="type/io-overlap")

    @classmethod
    def of(cls, inputs, outputs):
        return cls(tuple(inputs), tuple(outputs))


def chan_set(*entries) -> tuple:
    out = []
    for e in entries:
        if isinstance(e, ChanSetEntry):
            out.append(e)
        elif isinstance(e, str):
            out.append(ChanSetEntry(e))
        else:
            name, bound = e
            out.append(ChanSetEntry(name, bound))
    return tuple(out)


def typecheck_expr(sig: Signature, gamma: TypeContext, e: Expr) -> DataType:
    match e:
        case Var(x, ty):
            actual = gamma.lookup(x)
            if actual != ty:
                raise TypeError_(
                    f"variable {x!r} annotated {pretty_type(ty)} but bound at "
                    f"{pretty_type(actual)}", code="type/annotation-mismatch")
            return ty
        case UnitVal():
            return Unit()
        case BoolLit():
            return Bool()
        case App(f, arg_ty, res_ty, arg):
            if f not in sig.fun_symbols:
                raise TypeError_(f"unknown function symbol {f!r}", code="type/unknown-fun")
            decl_arg, decl_res = sig.fun_symbols[f]
            if (decl_arg, decl_res) != (arg_ty, res_ty):
                raise TypeError_(f"function {f!r} applied at wrong type",
                                 code="type/annotation-mismatch")
            actual = typecheck_expr(sig, gamma, arg)
            if actual != arg_ty:
                raise TypeError_(
                    f"argument of {f!r} has type {pretty_type(actual)}, expected "
                    f"{pretty_type(arg_ty)}", code="type/arg-mismatch")
            return res_ty
        case Pair(a, b):
            return Prod(typecheck_expr(sig, gamma, a), typecheck_expr(sig, gamma, b))
        case Fst(l, r, arg):
            actual = typecheck_expr(sig, gamma, arg)
            if actual != Prod(l, r):
                raise TypeError_("projection annotation mismatch",
                                 code="type/annotation-mismatch")
            return l
        case Snd(l, r, arg):
            actual = typecheck_expr(sig, gamma, arg)
            if actual != Prod(l, r):
                raise TypeError_("projection annotation mismatch",
                                 code="type/annotation-mismatch")
            return r
        case LitVal():
            raise TypeError_("runtime value in source expression", code="type/runtime-node")
        case _:
            raise TypeError_(f"not an expression: {e!r}", code="type/bad-node")


class _ChanEnv:
    """Resolves channel references during checking.

    Entries: name -> (ty, bound, index_domain) where bound is None for single
    channels; index_domain constrains which index expressions may be used
    (the ambient family index variable, or any constant below the bound).
    """

    def __init__(self, sig: Signature):
        self.sig = sig
        self.entries = {}

    def declare(self, name, ty, bound=None):
        if name in self.entries:
            raise TypeError_(f"channel {name!r} declared twice", code="type/duplicate-chan")
        self.entries[name] = (ty, bound)

    def child(self):
        out = _ChanEnv(self.sig)
        out.entries = dict(self.entries)
        return out

    def shadow(self, name, ty, bound=None):
        out = self.child()
        out.entries[name] = (ty, bound)
        return out

    def resolve(self, c: Chan, ambient_index: str | None) -> DataType:
        if c.name not in self.entries:
            raise TypeError_(f"read of undeclared channel {c}", code="type/unknown-chan")
        ty, bound = self.entries[c.name]
        if bound is None:
            if c.index is not None:
                raise TypeError_(f"channel {c.name!r} is not a family", code="type/not-family")
            return ty
        if c.index is None:
            raise TypeError_(f"family channel {c.name!r} used without an index",
                             code="type/missing-index")
        self._check_index(c, bound, ambient_index)
        return ty

    def _check_index(self, c: Chan, bound: SizeExpr, ambient_index):
        idx = c.index
        params = size_params(idx)
        if ambient_index is not None and params == {ambient_index}:
            # Schematic read at the ambient index; require the syntactic
            # index to be exactly the index variable (conservative).
            if size_key(idx) == size_key(SizeParam(ambient_index)):
                return
            raise TypeError_(
                f"index arithmetic on {c} is not supported schematically",
                code="type/index-arith")
        if not params:
            if isinstance(bound, SizeConst):
                from .syntax import size_eval
                if size_eval(idx, {}) >= bound.value:
                    raise TypeError_(f"index out of bounds in {c}", code="type/index-bounds")
            return
        raise TypeError_(f"index {c} does not match the ambient family index",
                         code="type/index-mismatch")


def typecheck_reaction(sig: Signature, delta, gamma: TypeContext, r: Reaction,
                       ambient_index: str | None = None):
    """Returns (set of channels read, result type)."""
    env = _as_chan_env(sig, delta)
    return _check_reaction(sig, env, gamma, r, ambient_index)


def _as_chan_env(sig, delta) -> _ChanEnv:
    if isinstance(delta, _ChanEnv):
        return delta
    env = _ChanEnv(sig)
    if isinstance(delta, ChannelContext):
        for name, (ty, bound) in delta.items():
            env.declare(name, ty, bound)
    else:
        for item in delta:
            if len(item) == 2:
                env.declare(item[0], item[1])
            else:
                env.declare(item[0], item[1], item[2])
    return env


def _check_reaction(sig, env: _ChanEnv, gamma, r, ambient_index):
    match r:
        case Ret(e):
            return set(), typecheck_expr(sig, gamma, e)
        case Samp(d, arg_ty, res_ty, e):
            if d not in sig.dist_symbols:
                raise TypeError_(f"unknown distribution symbol {d!r}", code="type/unknown-dist")
            decl = sig.dist_symbols[d]
            if decl != (arg_ty, res_ty):
                raise TypeError_(f"distribution {d!r} applied at wrong type",
                                 code="type/annotation-mismatch")
            actual = typecheck_expr(sig, gamma, e)
            if actual != arg_ty:
                raise TypeError_(f"argument of {d!r} has wrong type", code="type/arg-mismatch")
            return set(), res_ty
        case Read(c, ty):
            actual = env.resolve(c, ambient_index)
            if actual != ty:
                raise TypeError_(
                    f"read {c} annotated {pretty_type(ty)} but channel has type "
                    f"{pretty_type(actual)}", code="type/annotation-mismatch")
            return {c.key()}, ty
        case IfR(e, a, b):
            cond = typecheck_expr(sig, gamma, e)
            if cond != Bool():
                raise TypeError_("if condition is not boolean", code="type/cond-not-bool")
            r1, t1 = _check_reaction(sig, env, gamma, a, ambient_index)
            r2, t2 = _check_reaction(sig, env, gamma, b, ambient_index)
            if t1 != t2:
                raise TypeError_("if branches have different types", code="type/branch-mismatch")
            return r1 | r2, t1
        case BindR(x, var_ty, rhs, body):
            r1, t1 = _check_reaction(sig, env, gamma, rhs, ambient_index)
            if t1 != var_ty:
                raise TypeError_(
                    f"bound variable {x!r} annotated {pretty_type(var_ty)} but its "
                    f"reaction has type {pretty_type(t1)}", code="type/annotation-mismatch")
            r2, t2 = _check_reaction(sig, env, gamma.extended(x, var_ty), body, ambient_index)
            return r1 | r2, t2
        case ValR():
            raise TypeError_("runtime value in source reaction", code="type/runtime-node")
        case _:
            raise TypeError_(f"not a reaction: {r!r}", code="type/bad-node")


@dataclass
class _Collected:
    # Output entries assigned at this level, as ChanSetEntry keyed items.
    outputs: dict = field(default_factory=dict)


def typecheck_protocol(sig: Signature, delta, p: Protocol, declared: ProtocolType):
    """Checks `p` against the declared I/O sets; raises on failure."""
    env = _as_chan_env(sig, delta)
    for entry in declared.inputs + declared.outputs:
        if entry.name not in env.entries:
            raise TypeError_(f"declared channel {entry.name!r} missing from context",
                             code="type/unknown-chan")
        ty, bound = env.entries[entry.name]
        if (bound is None) != (entry.bound is None):
            raise TypeError_(f"channel {entry.name!r} family shape mismatch",
                             code="type/family-shape")
        if bound is not None and not size_eq(bound, entry.bound):
            raise TypeError_(f"channel {entry.name!r} bound mismatch", code="type/family-shape")

    readable = {e.name for e in declared.inputs} | {e.name for e in declared.outputs}
    outputs = _check_protocol(sig, env, p, readable)

    actual = set(outputs)
    for entry in declared.outputs:
        fam_key = entry.key()
        if fam_key in actual:
            actual.discard(fam_key)
            continue
        # A family declared at a constant bound may be assigned memberwise
        # (the shape a desugared protocol has).
        if entry.bound is not None:
            monos = dict([(m, c) for m, c in _size_const_monos(entry.bound)])
            k = monos.get((), 0) if set(monos) <= {()} else None
            if k is not None:
                member_keys = [("member", entry.name, size_key(SizeConst(i)))
                               for i in range(k)]
                if all(mk in actual for mk in member_keys):
                    actual.difference_update(member_keys)
                    continue
        raise TypeError_(f"unassigned output {entry}", code="type/output-mismatch")
    if actual:
        raise TypeError_(f"undeclared outputs {sorted(map(str, actual))}",
                         code="type/output-mismatch")
    return True


def _size_const_monos(bound):
    from .syntax import size_monomials
    return size_monomials(bound).items()


def _entry_key(name, bound):
    return (name, None if bound is None else size_key(bound))


def _check_protocol(sig, env: _ChanEnv, p: Protocol, readable: set) -> dict:
    """Returns the set of outputs assigned by p (key -> entry).

    `readable` is the set of channel names readable at this point: declared
    inputs and outputs plus any `new`-bound channels in scope.
    """
    match p:
        case Zero():
            return {}
        case Assign(c, r):
            if c.index is not None and size_params(c.index):
                raise TypeError_(f"assignment to symbolic index {c}", code="type/symbolic-assign")
            expected = env.resolve(c, None)
            reads, actual = _check_reaction(sig, env, TypeContext(), r, None)
            if actual != expected:
                raise TypeError_(
                    f"channel {c} has type {pretty_type(expected)} but its reaction "
                    f"returns {pretty_type(actual)}", code="type/assign-mismatch")
            _check_reads_visible(reads, readable)
            if c.index is None:
                return {_entry_key(c.name, None): ChanSetEntry(c.name)}
            # Concrete family member: track per-index assignment.
            return {("member", c.name, size_key(c.index)): c}
        case AssignValue(c, _):
            if c.index is None:
                return {_entry_key(c.name, None): ChanSetEntry(c.name)}
            return {("member", c.name, size_key(c.index)): c}
        case Family(name, ivar, bound, r):
            ty, decl_bound = env.entries.get(name, (None, None))
            if ty is None:
                raise TypeError_(f"family {name!r} not declared", code="type/unknown-chan")
            if decl_bound is None:
                raise TypeError_(f"channel {name!r} is not a family", code="type/not-family")
            if not size_eq(decl_bound, bound):
                raise TypeError_(f"family {name!r} bound mismatch", code="type/family-shape")
            reads, actual = _check_reaction(sig, env, TypeContext(), r, ivar)
            if actual != ty:
                raise TypeError_(
                    f"family {name!r} has type {pretty_type(ty)} but members return "
                    f"{pretty_type(actual)}", code="type/assign-mismatch")
            _check_reads_visible(reads, readable)
            return {_entry_key(name, bound): ChanSetEntry(name, bound)}
        case Par(a, b):
            o1 = _check_protocol(sig, env, a, readable)
            o2 = _check_protocol(sig, env, b, readable)
            dup = set(o1) & set(o2)
            if dup:
                raise TypeError_(f"duplicate assignment: {sorted(map(str, dup))}",
                                 code="type/duplicate-assignment")
            # Family vs single clashes on the same base name; overlapping
            # symbolic index patterns are rejected conservatively.
            overlap = {_base_name(k) for k in o1} & {_base_name(k) for k in o2}
            for name in overlap:
                keys = [k for k in (*o1, *o2) if _base_name(k) == name]
                if any(not _is_member_key(k) for k in keys):
                    raise TypeError_(f"duplicate assignment to {name!r}",
                                     code="type/duplicate-assignment")
            return {**o1, **o2}
        case New(name, ty, body, bound):
            child = env.shadow(name, ty, bound)
            inner_out = _check_protocol(sig, child, body, readable | {name})
            return _discharge_binder(inner_out, name, bound)
        case NewIndexed(name, idx, ty, body):
            child = env.shadow(name, ty, SizeConst(idx + 1))
            inner_out = _check_protocol(sig, child, body, readable | {name})
            key = ("member", name, size_key(SizeConst(idx)))
            if key not in inner_out:
                raise TypeError_(f"bound channel {name}[{idx}] never assigned",
                                 code="type/unassigned-new")
            out = dict(inner_out)
            del out[key]
            return out
        case _:
            raise TypeError_(f"not a protocol: {p!r}", code="type/bad-node")


def _base_name(key):
    if isinstance(key, tuple) and key and key[0] == "member":
        return key[1]
    return key[0]


def _is_member_key(key):
    return isinstance(key, tuple) and key and key[0] == "member"


def _discharge_binder(inner_out: dict, name: str, bound):
    """A new-bound channel must be assigned within its scope, then hidden."""
    out = dict(inner_out)
    if bound is None:
        key = _entry_key(name, None)
        if key not in out:
            raise TypeError_(f"bound channel {name!r} never assigned",
                             code="type/unassigned-new")
        del out[key]
        return out
    fam_key = _entry_key(name, bound)
    if fam_key in out:
        del out[fam_key]
        return out
    # Alternatively all concrete members were assigned individually.
    if isinstance(bound, SizeConst):
        member_keys = [("member", name, size_key(SizeConst(i))) for i in range(bound.value)]
        if all(k in out for k in member_keys):
            for k in member_keys:
                del out[k]
            return out
    raise TypeError_(f"bound family {name!r} never assigned", code="type/unassigned-new")


def _check_reads_visible(reads: set, readable: set):
    for key in reads:
        name = key[0]
        if name not in readable:
            raise TypeError_(f"read of undeclared channel {name!r}",
                             code="type/read-not-visible")
