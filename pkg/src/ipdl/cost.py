"""Symbolic cost expressions and tape-size accounting.

The size of a construct is the number of symbols its tape encoding occupies.
Sizes of declared type constants stay symbolic (`|t|` variables), so a norm
is a polynomial over type sizes and declared parameters, possibly under `max`.

Two family accountings coexist:

* `norm` is exact with respect to desugaring: a family over bound b with
  member norm m costs max(1, b*(m+3) - 3), which matches the b-fold parallel
  composition for every b >= 0 (b = 0 collapses to the zero protocol, cost 1).
* `context_norm` is the monotone polynomial upper bound b*(m+3) + 1 used when
  a family is absorbed into an adversary context: b members, b composition
  glues, one terminator.  It dominates the exact norm at every instantiation
  and keeps context bounds max-free.
"""

from __future__ import annotations

from dataclasses import dataclass

from .syntax import (
    App, Assign, AssignValue, BindR, Bool, BoolLit, Chan, DataType, Expr, Family,
    Fst, IfR, IpdlError, LitVal, New, NewIndexed, Pair, Par, Prod, Protocol,
    Reaction, Read, Ret, Samp, SizeConst, SizeExpr, SizeParam, SizeProd, SizeSum,
    Snd, TConst, Unit, UnitVal, ValR, Var, Zero, size_monomials,
)


class CostError(IpdlError):
    code = "cost"


# ---------------------------------------------------------------------------
# Cost expressions.


@dataclass(frozen=True)
class CostExpr:
    def __add__(self, other):
        return CSum((self, as_cost(other)))

    def __radd__(self, other):
        return CSum((as_cost(other), self))

    def __mul__(self, other):
        return CProd((self, as_cost(other)))

    def __rmul__(self, other):
        return CProd((as_cost(other), self))


@dataclass(frozen=True)
class Const(CostExpr):
    value: int  # negative constants appear only as affine tails of sums


@dataclass(frozen=True)
class TypeSize(CostExpr):
    """|t| for a declared type constant t."""

    name: str


@dataclass(frozen=True)
class ParamVar(CostExpr):
    name: str


@dataclass(frozen=True)
class CSum(CostExpr):
    parts: tuple


@dataclass(frozen=True)
class CProd(CostExpr):
    parts: tuple


@dataclass(frozen=True)
class CMax(CostExpr):
    parts: tuple


def as_cost(x) -> CostExpr:
    if isinstance(x, CostExpr):
        return x
    if isinstance(x, int):
        return Const(x)
    if isinstance(x, SizeExpr):
        return cost_of_size(x)
    raise TypeError(f"not a cost expression: {x!r}")


def cost_max(*parts) -> CostExpr:
    return CMax(tuple(as_cost(p) for p in parts))


def cost_of_size(e: SizeExpr) -> CostExpr:
    match e:
        case SizeConst(v):
            return Const(v)
        case SizeParam(n):
            return ParamVar(n)
        case SizeSum(parts):
            return CSum(tuple(cost_of_size(p) for p in parts))
        case SizeProd(parts):
            return CProd(tuple(cost_of_size(p) for p in parts))
        case _:
            raise TypeError(f"not a size expression: {e!r}")


# ---------------------------------------------------------------------------
# Evaluation.  Sums are evaluated over the integers so affine tails like
# b*(m+3) - 3 work; a negative final value signals a malformed expression.


def cost_eval(c: CostExpr, env: dict) -> int:
    value = _eval(c, env)
    if value < 0:
        raise CostError(f"cost evaluated negative: {value}", code="cost/negative")
    return value


def _eval(c: CostExpr, env: dict) -> int:
    match c:
        case Const(v):
            return v
        case TypeSize(name):
            key = f"|{name}|"
            if key in env:
                return env[key]
            if name in env:
                return env[name]
            raise CostError(f"unbound type size |{name}|", code="cost/unbound")
        case ParamVar(name):
            if name not in env:
                raise CostError(f"unbound parameter {name!r}", code="cost/unbound")
            return env[name]
        case CSum(parts):
            return sum(_eval(p, env) for p in parts)
        case CProd(parts):
            out = 1
            for p in parts:
                out *= _eval(p, env)
            return out
        case CMax(parts):
            return max(_eval(p, env) for p in parts)
        case _:
            raise TypeError(f"not a cost expression: {c!r}")


def cost_variables(c: CostExpr) -> set:
    match c:
        case Const():
            return set()
        case TypeSize(name):
            return {("t", name)}
        case ParamVar(name):
            return {("p", name)}
        case CSum(parts) | CProd(parts) | CMax(parts):
            out = set()
            for p in parts:
                out |= cost_variables(p)
            return out


# ---------------------------------------------------------------------------
# Canonical normalization.  A normalized expression is either a polynomial
# (dict monomial -> coefficient) or a max of incomparable polynomials; `max`
# is pushed outermost by distributing sums and products over it, which is
# exact because all product factors are nonnegative.


Monomial = tuple  # sorted tuple of variable keys, with multiplicity


def _poly_add(p1: dict, p2: dict) -> dict:
    out = dict(p1)
    for m, c in p2.items():
        out[m] = out.get(m, 0) + c
        if out[m] == 0:
            del out[m]
    return out


def _poly_mul(p1: dict, p2: dict) -> dict:
    out = {}
    for m1, c1 in p1.items():
        for m2, c2 in p2.items():
            m = tuple(sorted(m1 + m2))
            out[m] = out.get(m, 0) + c1 * c2
            if out[m] == 0:
                del out[m]
    return out


def _poly_dominates(p1: dict, p2: dict) -> bool:
    """p1 >= p2 under every nonnegative assignment (sufficient check)."""
    diff = _poly_add(p1, {m: -c for m, c in p2.items()})
    return all(c >= 0 for c in diff.values())


def _to_polys(c: CostExpr) -> list:
    """Normalize to a list of polynomials whose pointwise max is the value."""
    match c:
        case Const(v):
            return [{(): v}] if v else [{}]
        case TypeSize(name):
            return [{(("t", name),): 1}]
        case ParamVar(name):
            return [{(("p", name),): 1}]
        case CSum(parts):
            branches = [{}]
            for p in parts:
                sub = _to_polys(p)
                branches = [_poly_add(b, s) for b in branches for s in sub]
            return branches
        case CProd(parts):
            branches = [{(): 1}]
            for p in parts:
                sub = _to_polys(p)
                branches = [_poly_mul(b, s) for b in branches for s in sub]
            return branches
        case CMax(parts):
            out = []
            for p in parts:
                out.extend(_to_polys(p))
            return out
        case _:
            raise TypeError(f"not a cost expression: {c!r}")


def _prune(branches: list) -> list:
    kept = []
    for cand in branches:
        if any(_poly_dominates(other, cand) for other in kept):
            continue
        kept = [k for k in kept if not _poly_dominates(cand, k)]
        kept.append(cand)
    return kept


def _mono_sort_key(item):
    mono, coeff = item
    return (-sum(1 for _ in mono), -coeff, mono)


def _poly_to_expr(p: dict) -> CostExpr:
    if not p:
        return Const(0)
    terms = []
    for mono, coeff in sorted(p.items(), key=_mono_sort_key):
        factors = []
        for kind, name in mono:
            factors.append(ParamVar(name) if kind == "p" else TypeSize(name))
        if not factors:
            terms.append(Const(coeff))
        elif coeff == 1:
            terms.append(factors[0] if len(factors) == 1 else CProd(tuple(factors)))
        else:
            terms.append(CProd(tuple(factors) + (Const(coeff),)))
    if len(terms) == 1:
        return terms[0]
    return CSum(tuple(terms))


def _branch_key(p: dict):
    return tuple(sorted(p.items()))


def cost_normalize(c: CostExpr) -> CostExpr:
    """Canonical form: max outermost over sums of sorted monomials.

    Value-preserving under every assignment of naturals to variables.
    """
    branches = _prune(_to_polys(c))
    if len(branches) == 1:
        return _poly_to_expr(branches[0])
    branches.sort(key=_branch_key)
    return CMax(tuple(_poly_to_expr(b) for b in branches))


def cost_equal(a: CostExpr, b: CostExpr) -> bool:
    return cost_normalize(a) == cost_normalize(b)


def cost_degree(c: CostExpr) -> int:
    """Total degree; max nodes take the maximum over branches."""
    return max((sum(1 for _ in mono) for branch in _to_polys(c) for mono in branch),
               default=0)


def cost_is_zero(c: CostExpr) -> bool:
    return cost_normalize(c) == Const(0)


# ---------------------------------------------------------------------------
# Surface printing, matching the bound-report style: products spelled
# `n * | msg | * 6`, constants folded last, max rendered as max(a, b).


def pretty_cost(c: CostExpr) -> str:
    norm = cost_normalize(c)
    return _pretty_norm(norm)


def _pretty_norm(c: CostExpr) -> str:
    if isinstance(c, CMax):
        return "max(" + ", ".join(_pretty_norm(p) for p in c.parts) + ")"
    return _pretty_poly_expr(c)


def _pretty_poly_expr(c: CostExpr) -> str:
    terms = c.parts if isinstance(c, CSum) else (c,)
    rendered = []
    for t in terms:
        neg, text = _pretty_term(t)
        if not rendered:
            rendered.append(f"-{text}" if neg else text)
        else:
            rendered.append(f"- {text}" if neg else f"+ {text}")
    return " ".join(rendered)


def _pretty_term(t: CostExpr):
    match t:
        case Const(v):
            return (v < 0, str(abs(v)))
        case TypeSize(name):
            return (False, f"| {name} |")
        case ParamVar(name):
            return (False, name)
        case CProd(parts):
            neg = False
            rendered = []
            for p in parts:
                n, s = _pretty_term(p)
                neg ^= n
                rendered.append(s)
            return (neg, " * ".join(rendered))
        case CMax(parts):
            return (False, "max(" + ", ".join(_pretty_norm(p) for p in parts) + ")")
        case CSum():
            return (False, f"({_pretty_poly_expr(t)})")


# ---------------------------------------------------------------------------
# Turing Machine norms.  One equation per construct; the counts are forced
# by the tape encoding below, and the test suite checks the two agree.


def norm_type(ty: DataType) -> CostExpr:
    match ty:
        case TConst(name):
            return TypeSize(name)
        case Unit():
            return Const(0)
        case Bool():
            return Const(1)
        case Prod(a, b):
            return norm_type(a) + norm_type(b)
        case _:
            raise TypeError(f"not a type: {ty!r}")


def norm_expr(e: Expr) -> CostExpr:
    match e:
        case Var(_, ty):
            return norm_type(ty) + Const(5)
        case UnitVal() | BoolLit():
            return Const(3)
        case App(_, arg_ty, res_ty, arg):
            return norm_type(arg_ty) + norm_type(res_ty) + norm_expr(arg) + Const(5)
        case Pair(a, b):
            return norm_expr(a) + norm_expr(b)
        case Fst(l, r, arg) | Snd(l, r, arg):
            return norm_type(l) + norm_type(r) + norm_expr(arg) + Const(5)
        case LitVal(v):
            return Const(len(v))
        case _:
            raise TypeError(f"not an expression: {e!r}")


def norm_reaction(r: Reaction) -> CostExpr:
    match r:
        case Ret(e):
            return norm_expr(e) + Const(3)
        case Samp(_, arg_ty, res_ty, e):
            return norm_type(arg_ty) + norm_type(res_ty) + norm_expr(e) + Const(5)
        case Read(_, ty):
            return norm_type(ty) + Const(6)
        case IfR(e, a, b):
            return norm_expr(e) + norm_reaction(a) + norm_reaction(b) + Const(5)
        case BindR(_, var_ty, rhs, body):
            return norm_type(var_ty) + norm_reaction(rhs) + norm_reaction(body) + Const(6)
        case ValR(v):
            return Const(len(v) + 2)
        case _:
            raise TypeError(f"not a reaction: {r!r}")


def _norm_protocol(p: Protocol, family_rule) -> CostExpr:
    match p:
        case Zero():
            return Const(1)
        case Assign(_, r):
            return norm_reaction(r) + Const(5)
        case AssignValue(_, v):
            return Const(len(v) + 4)
        case Par(a, b):
            return _norm_protocol(a, family_rule) + _norm_protocol(b, family_rule) + Const(3)
        case New(_, ty, body, bound):
            inner = norm_type(ty) + Const(5)
            if bound is None:
                return inner + _norm_protocol(body, family_rule)
            return cost_of_size(bound) * inner + _norm_protocol(body, family_rule)
        case NewIndexed(_, _, ty, body):
            return norm_type(ty) + _norm_protocol(body, family_rule) + Const(5)
        case Family(_, _, bound, r):
            member = norm_reaction(r) + Const(5)
            return family_rule(cost_of_size(bound), member)
        case _:
            raise TypeError(f"not a protocol: {p!r}")


def _family_exact(bound: CostExpr, member: CostExpr) -> CostExpr:
    # b*(member+3) - 3 for b >= 1; the empty family is the zero protocol.
    return cost_max(Const(1), bound * (member + Const(3)) + Const(-3))


def _family_context(bound: CostExpr, member: CostExpr) -> CostExpr:
    return bound * (member + Const(3)) + Const(1)


def norm(construct) -> CostExpr:
    """Tape-symbol count of a type, expression, reaction, or protocol."""
    if isinstance(construct, DataType):
        return norm_type(construct)
    if isinstance(construct, Expr):
        return norm_expr(construct)
    if isinstance(construct, Reaction):
        return norm_reaction(construct)
    if isinstance(construct, Protocol):
        return _norm_protocol(construct, _family_exact)
    raise TypeError(f"cannot take the norm of {construct!r}")


def context_norm(p: Protocol) -> CostExpr:
    """Upper bound on `norm` used when absorbing a protocol into a context.

    Identical to `norm` except on families, where the uniform polynomial
    b*(member+3) + 1 replaces the exact piecewise count.
    """
    return _norm_protocol(p, _family_context)


# ---------------------------------------------------------------------------
# Tape encoding.  Punctuation and keyword alphabets as fixed sets; their
# cardinalities (19 and 21) feed the soundness polynomial.  The assignment
# encoder additionally uses the marker "react", which is not a member of the
# keyword set; whether to count it there changes the polynomial's constant
# by one, so the counts are exposed as named constants.


PUNC = (
    "<ang", ">ang", "(", ")", "{", "}", "[", "]", "_", ":", "dot", ";",
    "->", "->>", "<-", "x", ":=", "||", "diamond",
)

KEYWORDS = (
    "var", "check", "true", "false", "app", "fst", "snd", "of", "ret", "samp",
    "read", "if", "then", "else", "0", "new", "in", "wen",
    "input-to-query", "input-queried", "input-not-to-query",
)

PUNC_COUNT = len(PUNC)          # 19
KEYWORDS_COUNT = len(KEYWORDS)  # 21; the assignment marker "react" is extra

QUERY_ANNOTATIONS = ("input-to-query", "input-queried", "input-not-to-query")


@dataclass(frozen=True)
class TapeSymbol:
    kind: str   # bit | placeholder | dot | punc | keyword | marker | fun | dist | index | space
    value: str | int | None = None


def _sym(kind, value=None):
    return TapeSymbol(kind, value)


def _chan_key(c: Chan):
    return (c.name, None if c.index is None else
            tuple(sorted(size_monomials(c.index).items())))


def _enc_value(v: str) -> list:
    out = []
    for ch in v:
        if ch in "01":
            out.append(_sym("bit", ch))
        elif ch == "*":
            out.append(_sym("placeholder"))
        else:
            raise CostError(f"bad value symbol {ch!r}", code="encode/bad-value")
    return out


class _Encoder:
    """Emits the symbol sequence; names become de Bruijn style indices."""

    def __init__(self, sizes: dict, annotations):
        self.sizes = sizes
        self.annotations = annotations or (lambda c: "input-not-to-query")
        self.free = {}

    def type_size(self, ty: DataType) -> int:
        return cost_eval(norm_type(ty), self.sizes)

    def enc_type(self, ty: DataType) -> list:
        return [_sym("dot")] * self.type_size(ty)

    def chan_index(self, c: Chan, cenv: dict) -> int:
        key = _chan_key(c)
        if key in cenv:
            return cenv[key]
        if key not in self.free:
            self.free[key] = len(self.free)
        # Free channels index past a fixed offset so they never collide with
        # binder indices (one symbol either way).
        return 1_000_000 + self.free[key]

    def enc_expr(self, e: Expr, venv: dict) -> list:
        match e:
            case LitVal(v):
                return _enc_value(v)
            case Var(x, ty):
                if x not in venv:
                    raise CostError(f"unbound variable {x!r} in encoder", code="encode/unbound")
                return ([_sym("punc", "("), _sym("keyword", "var"), _sym("index", venv[x]),
                         _sym("punc", ":")] + self.enc_type(ty) + [_sym("punc", ")")])
            case UnitVal():
                return [_sym("punc", "("), _sym("keyword", "check"), _sym("punc", ")")]
            case BoolLit(b):
                kw = "true" if b else "false"
                return [_sym("punc", "("), _sym("keyword", kw), _sym("punc", ")")]
            case App(f, arg_ty, res_ty, arg):
                return ([_sym("punc", "("), _sym("keyword", "app")] + self.enc_type(arg_ty)
                        + [_sym("punc", "->")] + self.enc_type(res_ty) + [_sym("fun", f)]
                        + self.enc_expr(arg, venv) + [_sym("punc", ")")])
            case Pair(a, b):
                return self.enc_expr(a, venv) + self.enc_expr(b, venv)
            case Fst(l, r, arg):
                return ([_sym("punc", "("), _sym("keyword", "fst")] + self.enc_type(l)
                        + [_sym("punc", "x")] + self.enc_type(r) + [_sym("keyword", "of")]
                        + self.enc_expr(arg, venv) + [_sym("punc", ")")])
            case Snd(l, r, arg):
                return ([_sym("punc", "("), _sym("keyword", "snd")] + self.enc_type(l)
                        + [_sym("punc", "x")] + self.enc_type(r) + [_sym("keyword", "of")]
                        + self.enc_expr(arg, venv) + [_sym("punc", ")")])
            case _:
                raise TypeError(f"not an expression: {e!r}")

    def enc_reaction(self, r: Reaction, cenv: dict, venv: dict) -> list:
        match r:
            case ValR(v):
                return [_sym("punc", "<ang")] + _enc_value(v) + [_sym("punc", ">ang")]
            case Ret(e):
                return ([_sym("punc", "("), _sym("keyword", "ret")]
                        + self.enc_expr(e, venv) + [_sym("punc", ")")])
            case Samp(d, arg_ty, res_ty, e):
                return ([_sym("punc", "("), _sym("keyword", "samp")] + self.enc_type(arg_ty)
                        + [_sym("punc", "->>")] + self.enc_type(res_ty) + [_sym("dist", d)]
                        + self.enc_expr(e, venv) + [_sym("punc", ")")])
            case Read(c, ty):
                ann = self.annotations(c)
                if ann not in QUERY_ANNOTATIONS:
                    raise CostError(f"bad query annotation {ann!r}", code="encode/bad-annotation")
                return ([_sym("punc", "("), _sym("keyword", "read"), _sym("keyword", ann),
                         _sym("index", self.chan_index(c, cenv)), _sym("punc", ":")]
                        + self.enc_type(ty) + [_sym("punc", ")")])
            case IfR(e, a, b):
                return ([_sym("punc", "("), _sym("keyword", "if")] + self.enc_expr(e, venv)
                        + [_sym("keyword", "then")] + self.enc_reaction(a, cenv, venv)
                        + [_sym("keyword", "else")] + self.enc_reaction(b, cenv, venv)
                        + [_sym("punc", ")")])
            case BindR(x, var_ty, rhs, body):
                inner = dict(venv)
                inner[x] = len(venv)
                return ([_sym("punc", "{"), _sym("punc", "_"), _sym("punc", ":")]
                        + self.enc_type(var_ty) + [_sym("punc", "<-")]
                        + self.enc_reaction(rhs, cenv, venv) + [_sym("punc", ";")]
                        + self.enc_reaction(body, cenv, inner) + [_sym("punc", "}")])
            case _:
                raise TypeError(f"not a reaction: {r!r}")

    def enc_protocol(self, p: Protocol, cenv: dict) -> list:
        match p:
            case Zero():
                return [_sym("keyword", "0")]
            case AssignValue(c, v):
                return ([_sym("punc", "["), _sym("index", self.chan_index(c, cenv)),
                         _sym("punc", ":=")] + _enc_value(v) + [_sym("punc", "]")])
            case Assign(c, r):
                return ([_sym("punc", "("), _sym("index", self.chan_index(c, cenv)),
                         _sym("punc", ":="), _sym("marker", "react")]
                        + self.enc_reaction(r, cenv, {}) + [_sym("punc", ")")])
            case Par(a, b):
                return ([_sym("punc", "(")] + self.enc_protocol(a, cenv)
                        + [_sym("punc", "||")] + self.enc_protocol(b, cenv)
                        + [_sym("punc", ")")])
            case New(name, ty, body, None):
                inner = dict(cenv)
                inner[(name, None)] = len(cenv)
                return ([_sym("keyword", "new"), _sym("punc", "_"), _sym("punc", ":")]
                        + self.enc_type(ty) + [_sym("keyword", "in")]
                        + self.enc_protocol(body, inner) + [_sym("keyword", "wen")])
            case NewIndexed(name, idx, ty, body):
                inner = dict(cenv)
                inner[_chan_key(Chan(name, SizeConst(idx)))] = len(cenv)
                return ([_sym("keyword", "new"), _sym("punc", "_"), _sym("punc", ":")]
                        + self.enc_type(ty) + [_sym("keyword", "in")]
                        + self.enc_protocol(body, inner) + [_sym("keyword", "wen")])
            case _:
                raise CostError(f"cannot encode non-concrete protocol node {p!r}",
                                code="encode/not-concrete")


def encode_tape(p: Protocol, sizes: dict, annotations=None) -> list:
    """Tape symbols of a concrete, well-typed protocol.

    `sizes` assigns a natural to every type constant; `annotations` optionally
    maps a channel to its query annotation (one extra symbol per read).
    """
    enc = _Encoder(sizes, annotations)
    return enc.enc_protocol(p, {})


# ---------------------------------------------------------------------------
# The soundness polynomial: bound on the resources of a reduced adversary in
# terms of semantics cost x, original adversary cost y, and context size z.


def soundness_poly(x: int, y: int, z: int, nf: int, nd: int) -> int:
    constant = PUNC_COUNT + KEYWORDS_COUNT + nf + nd + 161
    return (y * y + 8 * y * z + 15 * z * z + (nf + nd + 1) * x
            + 34 * y + 47 * z + constant)
