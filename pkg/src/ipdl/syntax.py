"""Object-language syntax: data types, expressions, reactions, protocols.

Protocols are trees of channel assignments composed in parallel, with `new`
binding internal channels and `family` nodes describing bound-indexed groups
of assignments.  Everything here is immutable; operations return fresh trees.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field


class IpdlError(Exception):
    """Base error; `code` is a stable machine-readable identifier."""

    code = "error"

    def __init__(self, message, code=None):
        super().__init__(message)
        if code is not None:
            self.code = code


class SyntaxIssue(IpdlError):
    code = "syntax"


# ---------------------------------------------------------------------------
# Size expressions: symbolic naturals used for family bounds and indices.


@dataclass(frozen=True)
class SizeExpr:
    def __add__(self, other):
        return SizeSum((self, _as_size(other)))

    def __mul__(self, other):
        return SizeProd((self, _as_size(other)))


@dataclass(frozen=True)
class SizeConst(SizeExpr):
    value: int


@dataclass(frozen=True)
class SizeParam(SizeExpr):
    name: str


@dataclass(frozen=True)
class SizeSum(SizeExpr):
    parts: tuple


@dataclass(frozen=True)
class SizeProd(SizeExpr):
    parts: tuple


def _as_size(x) -> SizeExpr:
    if isinstance(x, SizeExpr):
        return x
    if isinstance(x, int):
        return SizeConst(x)
    raise TypeError(f"not a size: {x!r}")


def size_monomials(e: SizeExpr) -> dict:
    """Canonical form: map from sorted parameter-name tuples to coefficients."""
    match e:
        case SizeConst(v):
            return {(): v} if v else {}
        case SizeParam(name):
            return {(name,): 1}
        case SizeSum(parts):
            out = {}
            for p in parts:
                for mono, c in size_monomials(p).items():
                    out[mono] = out.get(mono, 0) + c
                    if out[mono] == 0:
                        del out[mono]
            return out
        case SizeProd(parts):
            out = {(): 1}
            for p in parts:
                nxt = {}
                for m1, c1 in out.items():
                    for m2, c2 in size_monomials(p).items():
                        mono = tuple(sorted(m1 + m2))
                        nxt[mono] = nxt.get(mono, 0) + c1 * c2
                out = nxt
            return {m: c for m, c in out.items() if c}
        case _:
            raise TypeError(f"not a size expression: {e!r}")


def size_key(e: SizeExpr) -> tuple:
    return tuple(sorted(size_monomials(e).items()))


def size_eq(a: SizeExpr, b: SizeExpr) -> bool:
    return size_key(a) == size_key(b)


def size_eval(e: SizeExpr, env: dict) -> int:
    total = 0
    for mono, c in size_monomials(e).items():
        term = c
        for name in mono:
            if name not in env:
                raise SyntaxIssue(f"unbound parameter {name!r}", code="size/unbound")
            term *= env[name]
        total += term
    if total < 0:
        raise SyntaxIssue(f"size expression is negative: {e!r}", code="size/negative")
    return total


def size_params(e: SizeExpr) -> set:
    return {name for mono in size_monomials(e) for name in mono}


def size_subst(e: SizeExpr, var: str, repl: SizeExpr) -> SizeExpr:
    match e:
        case SizeParam(name) if name == var:
            return repl
        case SizeSum(parts):
            return SizeSum(tuple(size_subst(p, var, repl) for p in parts))
        case SizeProd(parts):
            return SizeProd(tuple(size_subst(p, var, repl) for p in parts))
        case _:
            return e


# ---------------------------------------------------------------------------
# Data types.


@dataclass(frozen=True)
class DataType:
    pass


@dataclass(frozen=True)
class TConst(DataType):
    name: str


@dataclass(frozen=True)
class Unit(DataType):
    pass


@dataclass(frozen=True)
class Bool(DataType):
    pass


@dataclass(frozen=True)
class Prod(DataType):
    left: DataType
    right: DataType


UNIT = Unit()
BOOL = Bool()


def type_constants(ty: DataType) -> set:
    match ty:
        case TConst(name):
            return {name}
        case Prod(a, b):
            return type_constants(a) | type_constants(b)
        case _:
            return set()


# ---------------------------------------------------------------------------
# Signatures.


@dataclass(frozen=True)
class Signature:
    """Declared type constants plus function and distribution symbols."""

    type_symbols: tuple = ()
    fun_symbols: dict = field(default_factory=dict)   # name -> (arg ty, result ty)
    dist_symbols: dict = field(default_factory=dict)  # name -> (arg ty, result ty)

    def __post_init__(self):
        if len(set(self.type_symbols)) != len(self.type_symbols):
            raise SyntaxIssue("duplicate type symbol", code="signature/duplicate")
        overlap = set(self.fun_symbols) & set(self.dist_symbols)
        if overlap:
            raise SyntaxIssue(f"symbol declared as both function and distribution: {overlap}",
                              code="signature/duplicate")
        for name, (arg, res) in itertools.chain(self.fun_symbols.items(), self.dist_symbols.items()):
            for ty in (arg, res):
                unknown = type_constants(ty) - set(self.type_symbols)
                if unknown:
                    raise SyntaxIssue(f"symbol {name!r} uses undeclared types {unknown}",
                                      code="signature/unknown-type")


# ---------------------------------------------------------------------------
# Channels.  A reference is a base name plus an optional index expression.


@dataclass(frozen=True)
class Chan:
    name: str
    index: SizeExpr | None = None

    def key(self):
        return (self.name, None if self.index is None else size_key(self.index))

    def __str__(self):
        if self.index is None:
            return self.name
        return f"{self.name}[{pretty_size(self.index)}]"


def chan(name: str, index=None) -> Chan:
    if index is not None and not isinstance(index, SizeExpr):
        index = _as_size(index)
    return Chan(name, index)


# ---------------------------------------------------------------------------
# Expressions.  Every variable and application carries a typing annotation;
# the cost norm needs the annotations to size the tape encoding.


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Var(Expr):
    name: str
    ty: DataType


@dataclass(frozen=True)
class UnitVal(Expr):
    pass


@dataclass(frozen=True)
class BoolLit(Expr):
    value: bool


@dataclass(frozen=True)
class App(Expr):
    fn: str
    arg_ty: DataType
    res_ty: DataType
    arg: Expr


@dataclass(frozen=True)
class Pair(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Fst(Expr):
    left_ty: DataType
    right_ty: DataType
    arg: Expr


@dataclass(frozen=True)
class Snd(Expr):
    left_ty: DataType
    right_ty: DataType
    arg: Expr


@dataclass(frozen=True)
class LitVal(Expr):
    """Runtime-only: a bitstring substituted for a variable during evaluation."""

    value: str


# ---------------------------------------------------------------------------
# Reactions.


@dataclass(frozen=True)
class Reaction:
    pass


@dataclass(frozen=True)
class Ret(Reaction):
    expr: Expr


@dataclass(frozen=True)
class Samp(Reaction):
    dist: str
    arg_ty: DataType
    res_ty: DataType
    arg: Expr


@dataclass(frozen=True)
class Read(Reaction):
    chan: Chan
    ty: DataType


@dataclass(frozen=True)
class IfR(Reaction):
    cond: Expr
    then: Reaction
    els: Reaction


@dataclass(frozen=True)
class BindR(Reaction):
    var: str
    var_ty: DataType
    rhs: Reaction
    body: Reaction


@dataclass(frozen=True)
class ValR(Reaction):
    """Runtime-only: a computed bitstring value.  Never in source programs."""

    value: str


# ---------------------------------------------------------------------------
# Protocols.


@dataclass(frozen=True)
class Protocol:
    pass


@dataclass(frozen=True)
class Zero(Protocol):
    pass


@dataclass(frozen=True)
class Assign(Protocol):
    chan: Chan
    reaction: Reaction


@dataclass(frozen=True)
class AssignValue(Protocol):
    """Runtime-only: channel has fired and carries a concrete bitstring."""

    chan: Chan
    value: str


@dataclass(frozen=True)
class Par(Protocol):
    left: Protocol
    right: Protocol


@dataclass(frozen=True)
class New(Protocol):
    """Internal channel binder; with `bound` set it binds a whole family."""

    name: str
    ty: DataType
    body: Protocol
    bound: SizeExpr | None = None


@dataclass(frozen=True)
class Family(Protocol):
    """Indexed group of assignments: one member per index below `bound`."""

    chan_name: str
    index_var: str
    bound: SizeExpr
    reaction: Reaction


ZERO = Zero()


def par(*ps: Protocol) -> Protocol:
    """Right-nested parallel composition; empty input gives the zero protocol."""
    if not ps:
        return ZERO
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = Par(p, out)
    return out


# ---------------------------------------------------------------------------
# Channel contexts and renamings.


class ChannelContext:
    """Ordered map from channel names to types; family entries carry a bound."""

    def __init__(self, entries=()):
        self._entries = {}
        for item in entries:
            if len(item) == 2:
                name, ty = item
                self.add(name, ty)
            else:
                name, ty, bound = item
                self.add(name, ty, bound)

    def add(self, name: str, ty: DataType, bound: SizeExpr | None = None):
        if name in self._entries:
            raise SyntaxIssue(f"duplicate channel {name!r}", code="context/duplicate")
        self._entries[name] = (ty, bound)

    def lookup(self, name: str):
        if name not in self._entries:
            raise SyntaxIssue(f"channel {name!r} not declared", code="context/unknown")
        return self._entries[name]

    def __contains__(self, name):
        return name in self._entries

    def items(self):
        return self._entries.items()

    def extended(self, name, ty, bound=None) -> "ChannelContext":
        out = ChannelContext()
        out._entries = dict(self._entries)
        out.add(name, ty, bound)
        return out

    def renamed(self, mapping: dict) -> "ChannelContext":
        out = ChannelContext()
        for name, (ty, bound) in self._entries.items():
            out.add(mapping.get(name, name), ty, bound)
        return out


@dataclass(frozen=True)
class ChannelRenaming:
    """Injective, type-preserving map between channel base names."""

    mapping: tuple  # sorted tuple of (src, dst) pairs

    @classmethod
    def of(cls, mapping: dict) -> "ChannelRenaming":
        values = list(mapping.values())
        if len(set(values)) != len(values):
            raise SyntaxIssue("renaming is not injective", code="renaming/not-injective")
        return cls(tuple(sorted(mapping.items())))

    def as_dict(self) -> dict:
        return dict(self.mapping)

    def apply(self, name: str) -> str:
        return dict(self.mapping).get(name, name)

    def inverse(self) -> "ChannelRenaming":
        return ChannelRenaming.of({dst: src for src, dst in self.mapping})


# ---------------------------------------------------------------------------
# Traversals.


def reaction_reads(r: Reaction) -> set:
    """Base names of channels read anywhere inside a reaction."""
    match r:
        case Read(c, _):
            return {c.name}
        case IfR(_, a, b):
            return reaction_reads(a) | reaction_reads(b)
        case BindR(_, _, rhs, body):
            return reaction_reads(rhs) | reaction_reads(body)
        case _:
            return set()


def contains_samp(r: Reaction) -> bool:
    match r:
        case Samp():
            return True
        case IfR(_, a, b):
            return contains_samp(a) or contains_samp(b)
        case BindR(_, _, rhs, body):
            return contains_samp(rhs) or contains_samp(body)
        case _:
            return False


def free_channels(p: Protocol) -> tuple:
    """(reads, writes) as sets of base names.

    Writes are channels assigned and not hidden by `new`; reads are channels
    read and neither assigned nor hidden.
    """
    reads, writes = _free_channels(p)
    return (reads - writes, writes)


def _free_channels(p: Protocol):
    match p:
        case Zero():
            return set(), set()
        case Assign(c, r):
            return reaction_reads(r), {c.name}
        case AssignValue(c, _):
            return set(), {c.name}
        case Family(name, _, _, r):
            return reaction_reads(r), {name}
        case Par(a, b):
            r1, w1 = _free_channels(a)
            r2, w2 = _free_channels(b)
            return r1 | r2, w1 | w2
        case New(name, _, body, _):
            r, w = _free_channels(body)
            return r - {name}, w - {name}
        case NewIndexed(name, _, _, body):
            r, w = _free_channels(body)
            return r - {name}, w - {name}
        case _:
            raise TypeError(f"not a protocol: {p!r}")


def mentioned_channels(p: Protocol) -> set:
    r, w = _free_channels(p)
    return r | w


_fresh_counter = itertools.count()


def fresh_name(base: str, avoid: set) -> str:
    if base not in avoid:
        return base
    while True:
        candidate = f"{base}'{next(_fresh_counter)}"
        if candidate not in avoid:
            return candidate


def rename_reaction_channels(mapping: dict, r: Reaction) -> Reaction:
    match r:
        case Read(c, ty):
            return Read(Chan(mapping.get(c.name, c.name), c.index), ty)
        case IfR(e, a, b):
            return IfR(e, rename_reaction_channels(mapping, a), rename_reaction_channels(mapping, b))
        case BindR(x, ty, rhs, body):
            return BindR(x, ty, rename_reaction_channels(mapping, rhs),
                         rename_reaction_channels(mapping, body))
        case _:
            return r


def rename_channels(phi: ChannelRenaming | dict, p: Protocol) -> Protocol:
    """Rename free channels homomorphically, freshening binders on capture."""
    mapping = phi.as_dict() if isinstance(phi, ChannelRenaming) else dict(phi)
    return _rename(mapping, p)


def _rename(mapping: dict, p: Protocol) -> Protocol:
    match p:
        case Zero():
            return p
        case Assign(c, r):
            return Assign(Chan(mapping.get(c.name, c.name), c.index),
                          rename_reaction_channels(mapping, r))
        case AssignValue(c, v):
            return AssignValue(Chan(mapping.get(c.name, c.name), c.index), v)
        case Family(name, ivar, bound, r):
            return Family(mapping.get(name, name), ivar, bound,
                          rename_reaction_channels(mapping, r))
        case Par(a, b):
            return Par(_rename(mapping, a), _rename(mapping, b))
        case New(name, ty, body, bound):
            inner = {k: v for k, v in mapping.items() if k != name}
            targets = set(inner.values())
            if name in targets:
                # φ maps something onto the bound name: freshen the binder.
                avoid = targets | mentioned_channels(body) | set(inner)
                fresh = fresh_name(name, avoid)
                body = _rename({name: fresh}, body)
                return New(fresh, ty, _rename(inner, body), bound)
            return New(name, ty, _rename(inner, body), bound)
        case NewIndexed(name, idx, ty, body):
            inner = {k: v for k, v in mapping.items() if k != name}
            targets = set(inner.values())
            if name in targets:
                avoid = targets | mentioned_channels(body) | set(inner)
                fresh = fresh_name(name, avoid)
                body = _rename({name: fresh}, body)
                return NewIndexed(fresh, idx, ty, _rename(inner, body))
            return NewIndexed(name, idx, ty, _rename(inner, body))
        case _:
            raise TypeError(f"not a protocol: {p!r}")


# ---------------------------------------------------------------------------
# Family desugaring.


def subst_index_reaction(r: Reaction, var: str, repl: SizeExpr) -> Reaction:
    match r:
        case Read(c, ty):
            if c.index is not None:
                return Read(Chan(c.name, size_subst(c.index, var, repl)), ty)
            return r
        case IfR(e, a, b):
            return IfR(e, subst_index_reaction(a, var, repl), subst_index_reaction(b, var, repl))
        case BindR(x, ty, rhs, body):
            return BindR(x, ty, subst_index_reaction(rhs, var, repl),
                         subst_index_reaction(body, var, repl))
        case _:
            return r


def family_member(fam: Family, k: int) -> Assign:
    """The k-th instantiated member of an assignment family."""
    r = subst_index_reaction(fam.reaction, fam.index_var, SizeConst(k))
    return Assign(Chan(fam.chan_name, SizeConst(k)), r)


def desugar_families(p: Protocol, env: dict) -> Protocol:
    """Instantiate every family at its concrete bound.

    A family with bound k becomes the right-nested k-fold parallel composition
    of its members; k = 0 collapses to the zero protocol.  `new` families
    become nested binders over each index.
    """
    match p:
        case Zero() | AssignValue():
            return p
        case Assign(c, r):
            if c.index is not None:
                c = Chan(c.name, SizeConst(size_eval(c.index, env)))
            return Assign(c, _concretize_reaction(r, env))
        case Family(_, _, bound, _):
            k = size_eval(bound, env)
            if k == 0:
                return ZERO
            members = [
                Assign(m.chan, _concretize_reaction(m.reaction, env))
                for m in (family_member(p, i) for i in range(k))
            ]
            return par(*members)
        case Par(a, b):
            return Par(desugar_families(a, env), desugar_families(b, env))
        case New(name, ty, body, bound):
            if bound is None:
                return New(name, ty, desugar_families(body, env))
            k = size_eval(bound, env)
            out = desugar_families(body, env)
            for i in reversed(range(k)):
                out = _new_indexed(name, i, ty, out)
            return out
        case _:
            raise TypeError(f"not a protocol: {p!r}")


def _concretize_reaction(r: Reaction, env: dict) -> Reaction:
    match r:
        case Read(c, ty):
            if c.index is not None:
                return Read(Chan(c.name, SizeConst(size_eval(c.index, env))), ty)
            return r
        case IfR(e, a, b):
            return IfR(e, _concretize_reaction(a, env), _concretize_reaction(b, env))
        case BindR(x, ty, rhs, body):
            return BindR(x, ty, _concretize_reaction(rhs, env), _concretize_reaction(body, env))
        case _:
            return r


def _new_indexed(name: str, i: int, ty: DataType, body: Protocol) -> Protocol:
    # A desugared `new` family binds each indexed member channel in turn.
    # Indexed binders are represented by name#index since `new` binds a name.
    return NewIndexed(name, i, ty, body)


@dataclass(frozen=True)
class NewIndexed(Protocol):
    """Desugared member of a `new` family: binds channel name[index]."""

    name: str
    index: int
    ty: DataType
    body: Protocol


def is_concrete(p: Protocol) -> bool:
    """True when all families are desugared and all indices are constants."""
    match p:
        case Zero() | AssignValue():
            return True
        case Assign(c, r):
            return _chan_concrete(c) and _reaction_concrete(r)
        case Par(a, b):
            return is_concrete(a) and is_concrete(b)
        case New(_, _, body, bound):
            return bound is None and is_concrete(body)
        case NewIndexed(_, _, _, body):
            return is_concrete(body)
        case Family():
            return False
        case _:
            return False


def _chan_concrete(c: Chan) -> bool:
    return c.index is None or isinstance(c.index, SizeConst) or not size_params(c.index)


def _reaction_concrete(r: Reaction) -> bool:
    match r:
        case Read(c, _):
            return _chan_concrete(c)
        case IfR(_, a, b):
            return _reaction_concrete(a) and _reaction_concrete(b)
        case BindR(_, _, rhs, body):
            return _reaction_concrete(rhs) and _reaction_concrete(body)
        case _:
            return True


# ---------------------------------------------------------------------------
# Alpha equivalence.  Bound channel names, bound reaction variables, and
# family index variables may all differ between alpha-equal protocols.


def _chan_id(c: Chan, env: dict):
    idx = None
    if c.index is not None:
        monos = {}
        for mono, coeff in size_monomials(c.index).items():
            mapped = tuple(sorted(env.get(n, ("free", n)) for n in mono))
            monos[mapped] = monos.get(mapped, 0) + coeff
        idx = tuple(sorted(monos.items()))
    return (env.get(c.name, ("free", c.name)), idx)


def _expr_alpha(e1: Expr, e2: Expr, env1: dict, env2: dict) -> bool:
    match e1, e2:
        case Var(x, t1), Var(y, t2):
            return t1 == t2 and env1.get(x, ("free", x)) == env2.get(y, ("free", y))
        case (UnitVal(), UnitVal()):
            return True
        case BoolLit(a), BoolLit(b):
            return a == b
        case App(f, a1, r1, e1a), App(g, a2, r2, e2a):
            return f == g and a1 == a2 and r1 == r2 and _expr_alpha(e1a, e2a, env1, env2)
        case Pair(a1, b1), Pair(a2, b2):
            return _expr_alpha(a1, a2, env1, env2) and _expr_alpha(b1, b2, env1, env2)
        case Fst(l1, r1, a1), Fst(l2, r2, a2):
            return l1 == l2 and r1 == r2 and _expr_alpha(a1, a2, env1, env2)
        case Snd(l1, r1, a1), Snd(l2, r2, a2):
            return l1 == l2 and r1 == r2 and _expr_alpha(a1, a2, env1, env2)
        case LitVal(a), LitVal(b):
            return a == b
        case _:
            return False


def _reaction_alpha(r1, r2, env1, env2, depth) -> bool:
    match r1, r2:
        case Ret(e1), Ret(e2):
            return _expr_alpha(e1, e2, env1, env2)
        case Samp(d1, a1, t1, e1), Samp(d2, a2, t2, e2):
            return d1 == d2 and a1 == a2 and t1 == t2 and _expr_alpha(e1, e2, env1, env2)
        case Read(c1, t1), Read(c2, t2):
            return t1 == t2 and _chan_id(c1, env1) == _chan_id(c2, env2)
        case IfR(e1, a1, b1), IfR(e2, a2, b2):
            return (_expr_alpha(e1, e2, env1, env2)
                    and _reaction_alpha(a1, a2, env1, env2, depth)
                    and _reaction_alpha(b1, b2, env1, env2, depth))
        case BindR(x, t1, rhs1, body1), BindR(y, t2, rhs2, body2):
            if t1 != t2 or not _reaction_alpha(rhs1, rhs2, env1, env2, depth):
                return False
            e1 = dict(env1)
            e2 = dict(env2)
            e1[x] = ("bound", depth)
            e2[y] = ("bound", depth)
            return _reaction_alpha(body1, body2, e1, e2, depth + 1)
        case ValR(v1), ValR(v2):
            return v1 == v2
        case _:
            return False


def _protocol_alpha(p1, p2, env1, env2, depth) -> bool:
    match p1, p2:
        case (Zero(), Zero()):
            return True
        case Assign(c1, r1), Assign(c2, r2):
            return _chan_id(c1, env1) == _chan_id(c2, env2) and _reaction_alpha(r1, r2, env1, env2, 0)
        case AssignValue(c1, v1), AssignValue(c2, v2):
            return v1 == v2 and _chan_id(c1, env1) == _chan_id(c2, env2)
        case Family(n1, i1, b1, r1), Family(n2, i2, b2, r2):
            if _chan_id(Chan(n1), env1) != _chan_id(Chan(n2), env2):
                return False
            e1 = dict(env1)
            e2 = dict(env2)
            e1[i1] = ("idx", depth)
            e2[i2] = ("idx", depth)
            if size_key(_subst_env_size(b1, env1)) != size_key(_subst_env_size(b2, env2)):
                return False
            return _reaction_alpha(r1, r2, e1, e2, 0)
        case Par(a1, b1), Par(a2, b2):
            return (_protocol_alpha(a1, a2, env1, env2, depth)
                    and _protocol_alpha(b1, b2, env1, env2, depth))
        case New(n1, t1, body1, bd1), New(n2, t2, body2, bd2):
            if t1 != t2:
                return False
            if (bd1 is None) != (bd2 is None):
                return False
            if bd1 is not None and size_key(bd1) != size_key(bd2):
                return False
            e1 = dict(env1)
            e2 = dict(env2)
            e1[n1] = ("chan", depth)
            e2[n2] = ("chan", depth)
            return _protocol_alpha(body1, body2, e1, e2, depth + 1)
        case NewIndexed(n1, i1, t1, body1), NewIndexed(n2, i2, t2, body2):
            if t1 != t2 or i1 != i2:
                return False
            e1 = dict(env1)
            e2 = dict(env2)
            e1[n1] = ("chan", depth)
            e2[n2] = ("chan", depth)
            return _protocol_alpha(body1, body2, e1, e2, depth + 1)
        case _:
            return False


def _subst_env_size(e: SizeExpr, env: dict) -> SizeExpr:
    # Family bounds range over declared parameters, never bound names, so the
    # environment never rewrites them; kept for symmetry with channel ids.
    return e


def alpha_eq(p1: Protocol, p2: Protocol) -> bool:
    """Equality up to consistent renaming of bound channels and variables."""
    return _protocol_alpha(p1, p2, {}, {}, 0)


def reaction_alpha_eq(r1: Reaction, r2: Reaction) -> bool:
    return _reaction_alpha(r1, r2, {}, {}, 0)


# ---------------------------------------------------------------------------
# Nameless (de Bruijn style) conversion, used as an independent oracle for
# alpha equivalence in tests and to assign tape indices in the encoder.


def to_nameless(p: Protocol):
    return _nameless_protocol(p, {}, {})


def _nameless_protocol(p, cenv, venv):
    match p:
        case Zero():
            return ("zero",)
        case Assign(c, r):
            return ("assign", _nameless_chan(c, cenv), _nameless_reaction(r, cenv, venv))
        case AssignValue(c, v):
            return ("assign_value", _nameless_chan(c, cenv), v)
        case Family(name, ivar, bound, r):
            ienv = dict(cenv)
            ienv[("idx", ivar)] = len(cenv)
            return ("family", _nameless_chan(Chan(name), cenv), size_key(bound),
                    _nameless_reaction(r, ienv, venv))
        case Par(a, b):
            return ("par", _nameless_protocol(a, cenv, venv), _nameless_protocol(b, cenv, venv))
        case New(name, ty, body, bound):
            inner = dict(cenv)
            inner[name] = len(cenv)
            return ("new", ty, None if bound is None else size_key(bound),
                    _nameless_protocol(body, inner, venv))
        case NewIndexed(name, idx, ty, body):
            inner = dict(cenv)
            inner[name] = len(cenv)
            return ("new_indexed", idx, ty, _nameless_protocol(body, inner, venv))


def _nameless_chan(c: Chan, cenv):
    base = cenv.get(c.name, ("free", c.name))
    if c.index is None:
        return (base, None)
    monos = {}
    for mono, coeff in size_monomials(c.index).items():
        mapped = tuple(sorted(cenv.get(("idx", n), ("param", n)) if ("idx", n) in cenv
                              else ("param", n) for n in mono))
        monos[mapped] = monos.get(mapped, 0) + coeff
    return (base, tuple(sorted(monos.items())))


def _nameless_reaction(r, cenv, venv):
    match r:
        case Ret(e):
            return ("ret", _nameless_expr(e, venv))
        case Samp(d, a, t, e):
            return ("samp", d, a, t, _nameless_expr(e, venv))
        case Read(c, t):
            return ("read", _nameless_chan(c, cenv), t)
        case IfR(e, a, b):
            return ("if", _nameless_expr(e, venv), _nameless_reaction(a, cenv, venv),
                    _nameless_reaction(b, cenv, venv))
        case BindR(x, t, rhs, body):
            inner = dict(venv)
            inner[x] = len(venv)
            return ("bind", t, _nameless_reaction(rhs, cenv, venv),
                    _nameless_reaction(body, cenv, inner))
        case ValR(v):
            return ("val", v)


def _nameless_expr(e, venv):
    match e:
        case Var(x, t):
            return ("var", venv.get(x, ("free", x)), t)
        case UnitVal():
            return ("unit",)
        case BoolLit(b):
            return ("bool", b)
        case App(f, a, t, arg):
            return ("app", f, a, t, _nameless_expr(arg, venv))
        case Pair(a, b):
            return ("pair", _nameless_expr(a, venv), _nameless_expr(b, venv))
        case Fst(l, r, arg):
            return ("fst", l, r, _nameless_expr(arg, venv))
        case Snd(l, r, arg):
            return ("snd", l, r, _nameless_expr(arg, venv))
        case LitVal(v):
            return ("lit", v)


# ---------------------------------------------------------------------------
# Substitution of channel reads by values (operational semantics and the
# adversary game both use it).


def subst_read(p: Protocol, target: Chan, value: str) -> Protocol:
    """P[read target := val value]; stops at binders that shadow the name."""
    match p:
        case Zero() | AssignValue():
            return p
        case Assign(c, r):
            return Assign(c, _subst_read_reaction(r, target, value))
        case Family(name, ivar, bound, r):
            return Family(name, ivar, bound, _subst_read_reaction(r, target, value))
        case Par(a, b):
            return Par(subst_read(a, target, value), subst_read(b, target, value))
        case New(name, ty, body, bound):
            if name == target.name:
                return p
            return New(name, ty, subst_read(body, target, value), bound)
        case NewIndexed(name, idx, ty, body):
            if name == target.name:
                return p
            return NewIndexed(name, idx, ty, subst_read(body, target, value))
        case _:
            raise TypeError(f"not a protocol: {p!r}")


def _subst_read_reaction(r: Reaction, target: Chan, value: str) -> Reaction:
    match r:
        case Read(c, _) if c.key() == target.key():
            return ValR(value)
        case IfR(e, a, b):
            return IfR(e, _subst_read_reaction(a, target, value),
                       _subst_read_reaction(b, target, value))
        case BindR(x, t, rhs, body):
            return BindR(x, t, _subst_read_reaction(rhs, target, value),
                         _subst_read_reaction(body, target, value))
        case _:
            return r


def subst_var_reaction(r: Reaction, var: str, value: str) -> Reaction:
    """Substitute a computed bitstring for a bound variable."""
    match r:
        case Ret(e):
            return Ret(_subst_var_expr(e, var, value))
        case Samp(d, a, t, e):
            return Samp(d, a, t, _subst_var_expr(e, var, value))
        case Read():
            return r
        case IfR(e, a, b):
            return IfR(_subst_var_expr(e, var, value), subst_var_reaction(a, var, value),
                       subst_var_reaction(b, var, value))
        case BindR(x, t, rhs, body):
            rhs = subst_var_reaction(rhs, var, value)
            if x == var:
                return BindR(x, t, rhs, body)
            return BindR(x, t, rhs, subst_var_reaction(body, var, value))
        case ValR():
            return r


def _subst_var_expr(e: Expr, var: str, value: str) -> Expr:
    match e:
        case Var(x, _) if x == var:
            return LitVal(value)
        case App(f, a, t, arg):
            return App(f, a, t, _subst_var_expr(arg, var, value))
        case Pair(a, b):
            return Pair(_subst_var_expr(a, var, value), _subst_var_expr(b, var, value))
        case Fst(l, r, arg):
            return Fst(l, r, _subst_var_expr(arg, var, value))
        case Snd(l, r, arg):
            return Snd(l, r, _subst_var_expr(arg, var, value))
        case _:
            return e


# ---------------------------------------------------------------------------
# Pretty printing (surface syntax used by the parser round-trip and reports).


def pretty_size(e: SizeExpr) -> str:
    match e:
        case SizeConst(v):
            return str(v)
        case SizeParam(n):
            return n
        case SizeSum(parts):
            return " + ".join(pretty_size(p) for p in parts)
        case SizeProd(parts):
            return " * ".join(_size_atom(p) for p in parts)


def _size_atom(e: SizeExpr) -> str:
    s = pretty_size(e)
    return f"({s})" if isinstance(e, SizeSum) else s


def pretty_type(t: DataType) -> str:
    match t:
        case TConst(n):
            return n
        case Unit():
            return "unit"
        case Bool():
            return "bool"
        case Prod(a, b):
            return f"{_type_atom(a)} * {_type_atom(b)}"


def _type_atom(t: DataType) -> str:
    s = pretty_type(t)
    return f"({s})" if isinstance(t, Prod) else s


def pretty_expr(e: Expr) -> str:
    match e:
        case Var(x, _):
            return x
        case UnitVal():
            return "()"
        case BoolLit(b):
            return "true" if b else "false"
        case App(f, _, _, arg):
            return f"{f}({pretty_expr(arg)})"
        case Pair(a, b):
            return f"({pretty_expr(a)}, {pretty_expr(b)})"
        case Fst(_, _, arg):
            return f"fst({pretty_expr(arg)})"
        case Snd(_, _, arg):
            return f"snd({pretty_expr(arg)})"
        case LitVal(v):
            return f"#{v or 'empty'}#"


def pretty_reaction(r: Reaction) -> str:
    match r:
        case Ret(e):
            return f"return {pretty_expr(e)}"
        case Samp(d, _, _, e):
            return f"samp {d}({pretty_expr(e)})"
        case Read(c, _):
            return f"read {c}"
        case IfR(e, a, b):
            return f"if {pretty_expr(e)} then ({pretty_reaction(a)}) else ({pretty_reaction(b)})"
        case BindR(x, t, rhs, body):
            return f"{x} : {pretty_type(t)} <- {_reaction_atom(rhs)} ; {pretty_reaction(body)}"
        case ValR(v):
            return f"<{v}>"


def _reaction_atom(r: Reaction) -> str:
    if isinstance(r, BindR):
        return f"({pretty_reaction(r)})"
    return pretty_reaction(r)


def pretty_protocol(p: Protocol, indent: int = 0) -> str:
    pad = "  " * indent
    match p:
        case Zero():
            return f"{pad}0"
        case Assign(c, r):
            return f"{pad}({c} ::= {pretty_reaction(r)})"
        case AssignValue(c, v):
            return f"{pad}{c} ::= <{v}>"
        case Family(name, ivar, bound, r):
            return (f"{pad}(family {name}[{ivar} < {pretty_size(bound)}] ::= "
                    f"{pretty_reaction(r)})")
        case Par(a, b):
            return f"{pad}({_par_operand(a)} ||\n{_par_operand(b)})"
        case New(name, ty, body, None):
            return f"{pad}new {name} : {pretty_type(ty)} in\n{pretty_protocol(body, indent)}"
        case New(name, ty, body, bound):
            return (f"{pad}newfamily {name}[i < {pretty_size(bound)}] : {pretty_type(ty)} in\n"
                    f"{pretty_protocol(body, indent)}")
        case NewIndexed(name, idx, ty, body):
            return f"{pad}new {name}[{idx}] : {pretty_type(ty)} in\n{pretty_protocol(body, indent)}"


def _par_operand(p: Protocol) -> str:
    if isinstance(p, (New, NewIndexed)):
        return f"({pretty_protocol(p)})"
    return pretty_protocol(p)
