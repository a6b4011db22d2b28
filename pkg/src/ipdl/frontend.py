"""Case-study file format: declarations, protocols, and proof scripts.

Surface conventions: declarations end with a period, `--` starts a line
comment, whitespace is free-form.  Channel types inside protocol bodies come
from `new`/`newfamily` binders and from the type annotations on bind
variables; output channel types are inferred from reaction result types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .kernel import AxiomDecl, BoundLedger, check_asymptotic, concrete_bound
from .syntax import (
    App, Assign, BindR, Bool, BoolLit, Chan, ChannelContext, DataType, Expr,
    Family, Fst, IfR, IpdlError, New, Pair, Par, Prod, Protocol, Reaction,
    Read, Ret, Samp, SizeConst, SizeExpr, SizeParam, SizeProd, SizeSum, Snd,
    TConst, Unit, UnitVal, Var, Zero, pretty_size, pretty_type, size_eq,
)
from .typecheck import ChanSetEntry, ProtocolType
from . import tactics as T
from .cost import pretty_cost


class ParseError(IpdlError):
    code = "parse"

    def __init__(self, message, line=None, col=None, expected=None):
        loc = f" at {line}:{col}" if line is not None else ""
        exp = f" (expected {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message}{loc}{exp}")
        self.line = line
        self.col = col
        self.expected = expected or set()


class ResolveError(IpdlError):
    code = "resolve"


# ---------------------------------------------------------------------------
# Lexer.


@dataclass(frozen=True)
class Token:
    kind: str     # ident | nat | punct | eof
    text: str
    line: int
    col: int


_PUNCT = ["::=", "|=", "||", "->", "<-", "::", ":", ".", "(", ")", "[", "]",
          "<", ",", ";", "*", "~", "=", "+"]


def lex(src: str) -> list:
    tokens = []
    line = 1
    col = 1
    i = 0
    n = len(src)
    while i < n:
        ch = src[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if src.startswith("--", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n:
                c = src[i]
                if c.isalnum() or c in "_'":
                    i += 1
                elif c == "-" and i + 1 < n and (src[i + 1].isalnum() or src[i + 1] == "_"):
                    i += 2
                else:
                    break
            text = src[start:i]
            tokens.append(Token("ident", text, line, col))
            col += i - start
            continue
        if ch.isdigit():
            start = i
            while i < n and src[i].isdigit():
                i += 1
            tokens.append(Token("nat", src[start:i], line, col))
            col += i - start
            continue
        for p in _PUNCT:
            if src.startswith(p, i):
                tokens.append(Token("punct", p, line, col))
                i += len(p)
                col += len(p)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


# ---------------------------------------------------------------------------
# Parsed file.


@dataclass
class ProtocolDecl:
    name: str
    protocol: Protocol
    delta: ChannelContext
    ptype: ProtocolType


@dataclass
class ProofDecl:
    name: str
    lhs: str
    rhs: str
    script: tuple


@dataclass
class SourceFile:
    parameters: tuple = ()
    signature: object = None
    axioms: dict = field(default_factory=dict)
    protocols: dict = field(default_factory=dict)
    proofs: tuple = ()


class Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0
        self.params = []
        self.type_symbols = []
        self.fun_symbols = {}
        self.dist_symbols = {}

    # -- token helpers -------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        t = self.peek()
        return t.text == text and t.kind in ("ident", "punct")

    def eat(self, text: str) -> Token:
        t = self.peek()
        if t.text != text:
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, expected={text})
        return self.next()

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, expected={"identifier"})
        return self.next().text

    def nat(self) -> int:
        t = self.peek()
        if t.kind != "nat":
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col, expected={"number"})
        return int(self.next().text)

    # -- top level -------------------------------------------------------

    def parse_file(self) -> SourceFile:
        from .syntax import Signature
        out = SourceFile()
        protocols = {}
        axioms = {}
        proofs = []
        while not self.peek().kind == "eof":
            t = self.peek()
            if t.text == "parameter":
                self.next()
                name = self.ident()
                self.eat(":")
                self.eat("nat")
                self.eat(".")
                self.params.append(name)
            elif t.text == "type":
                self.next()
                self.type_symbols.append(self.ident())
                self.eat(".")
            elif t.text in ("function", "distribution"):
                kind = self.next().text
                name = self.ident()
                self.eat(":")
                arg = self.parse_type()
                self.eat("->")
                res = self.parse_type()
                self.eat(".")
                (self.fun_symbols if kind == "function" else self.dist_symbols)[name] = (arg, res)
            elif t.text in ("approx-assumption", "protocol-assumption"):
                decl = self.parse_assumption()
                axioms[decl.name] = decl
            elif t.text == "protocol":
                decl = self.parse_protocol_decl(protocols)
                protocols[decl.name] = decl
            elif t.text == "proof":
                proofs.append(self.parse_proof())
            else:
                raise ParseError(f"unexpected {t.text!r}", t.line, t.col,
                                 expected={"parameter", "type", "function", "distribution",
                                           "protocol", "proof", "approx-assumption",
                                           "protocol-assumption"})
        sig = Signature(tuple(self.type_symbols), dict(self.fun_symbols),
                        dict(self.dist_symbols))
        out.parameters = tuple(self.params)
        out.signature = sig
        out.axioms = axioms
        out.protocols = protocols
        out.proofs = tuple(proofs)
        return out

    # -- types and sizes ---------------------------------------------------

    def parse_type(self) -> DataType:
        left = self.parse_type_atom()
        if self.at("*"):
            self.next()
            return Prod(left, self.parse_type())
        return left

    def parse_type_atom(self) -> DataType:
        if self.at("("):
            self.next()
            ty = self.parse_type()
            self.eat(")")
            return ty
        name = self.ident()
        if name == "unit":
            return Unit()
        if name == "bool":
            return Bool()
        if name not in self.type_symbols:
            t = self.tokens[self.pos - 1]
            raise ParseError(f"unknown type {name!r}", t.line, t.col)
        return TConst(name)

    def parse_size(self) -> SizeExpr:
        left = self.parse_size_atom()
        while self.at("+") or self.at("*"):
            op = self.next().text
            right = self.parse_size_atom()
            left = SizeSum((left, right)) if op == "+" else SizeProd((left, right))
        return left

    def parse_size_atom(self) -> SizeExpr:
        t = self.peek()
        if t.kind == "nat":
            return SizeConst(self.nat())
        name = self.ident()
        return SizeParam(name)

    # -- expressions (types resolved bottom-up from the variable scope) ----

    def parse_expr(self, scope: dict) -> Expr:
        t = self.peek()
        if t.text == "(":
            self.next()
            if self.at(")"):
                self.next()
                return UnitVal()
            first = self.parse_expr(scope)
            if self.at(","):
                self.next()
                second = self.parse_expr(scope)
                self.eat(")")
                return Pair(first, second)
            self.eat(")")
            return first
        if t.text == "true":
            self.next()
            return BoolLit(True)
        if t.text == "false":
            self.next()
            return BoolLit(False)
        if t.text in ("fst", "snd"):
            which = self.next().text
            self.eat("(")
            arg = self.parse_expr(scope)
            self.eat(")")
            ty = self.expr_type(arg, t)
            if not isinstance(ty, Prod):
                raise ParseError("projection of a non-pair", t.line, t.col)
            cls = Fst if which == "fst" else Snd
            return cls(ty.left, ty.right, arg)
        name = self.ident()
        if self.at("("):
            if name not in self.fun_symbols:
                raise ParseError(f"unknown function {name!r}", t.line, t.col)
            self.next()
            if self.at(")"):
                self.next()
                arg = UnitVal()
            else:
                arg = self.parse_expr(scope)
                self.eat(")")
            a, r = self.fun_symbols[name]
            return App(name, a, r, arg)
        if name not in scope:
            raise ParseError(f"unbound variable {name!r}", t.line, t.col)
        return Var(name, scope[name])

    def expr_type(self, e: Expr, tok: Token) -> DataType:
        match e:
            case Var(_, ty):
                return ty
            case UnitVal():
                return Unit()
            case BoolLit(_):
                return Bool()
            case App(_, _, res, _):
                return res
            case Pair(a, b):
                return Prod(self.expr_type(a, tok), self.expr_type(b, tok))
            case Fst(l, _, _):
                return l
            case Snd(_, r, _):
                return r
        raise ParseError("cannot type expression", tok.line, tok.col)

    # -- reactions ---------------------------------------------------------

    def parse_reaction(self, scope: dict) -> Reaction:
        t = self.peek()
        if t.text == "(":
            # Either a parenthesized reaction or the start of a bind whose
            # right side is parenthesized; try a reaction group first.
            save = self.pos
            self.next()
            try:
                inner = self.parse_reaction(scope)
                self.eat(")")
            except ParseError:
                self.pos = save
            else:
                if self.at(";"):
                    raise ParseError("bind needs a variable", t.line, t.col)
                return inner
        if t.text == "samp":
            self.next()
            name = self.ident()
            if name not in self.dist_symbols:
                raise ParseError(f"unknown distribution {name!r}", t.line, t.col)
            self.eat("(")
            if self.at(")"):
                self.next()
                arg = UnitVal()
            else:
                arg = self.parse_expr(scope)
                self.eat(")")
            a, r = self.dist_symbols[name]
            return Samp(name, a, r, arg)
        if t.text == "read":
            self.next()
            chan = self.parse_chanref()
            return Read(chan, None)
        if t.text in ("return", "ret"):
            self.next()
            return Ret(self.parse_expr(scope))
        if t.text == "if":
            self.next()
            cond = self.parse_expr(scope)
            self.eat("then")
            then = self.parse_reaction(scope)
            self.eat("else")
            els = self.parse_reaction(scope)
            return IfR(cond, then, els)
        # bind: IDENT ':' type '<-' reaction ';' reaction
        name = self.ident()
        self.eat(":")
        ty = self.parse_type()
        self.eat("<-")
        rhs = self.parse_bind_rhs(scope)
        self.eat(";")
        inner_scope = dict(scope)
        inner_scope[name] = ty
        body = self.parse_reaction(inner_scope)
        rhs = self.annotate_read(rhs, ty, t)
        return BindR(name, ty, rhs, body)

    def parse_bind_rhs(self, scope: dict) -> Reaction:
        if self.at("("):
            save = self.pos
            self.next()
            try:
                inner = self.parse_reaction(scope)
                self.eat(")")
                return inner
            except ParseError:
                self.pos = save
        return self.parse_reaction_simple(scope)

    def parse_reaction_simple(self, scope: dict) -> Reaction:
        t = self.peek()
        if t.text in ("samp", "read", "return", "ret", "if"):
            return self.parse_reaction(scope)
        raise ParseError(f"unexpected {t.text!r} in reaction", t.line, t.col,
                         expected={"samp", "read", "return", "if"})

    def annotate_read(self, r: Reaction, ty: DataType, tok: Token) -> Reaction:
        """A bind annotation types a bare read on its right side."""
        if isinstance(r, Read) and r.ty is None:
            return Read(r.chan, ty)
        return r

    def parse_chanref(self) -> Chan:
        name = self.ident()
        if self.at("["):
            self.next()
            idx = self.parse_size()
            self.eat("]")
            return Chan(name, idx)
        return Chan(name)

    # -- protocols ---------------------------------------------------------

    def parse_protocol(self, refs: dict, binders: dict) -> Protocol:
        t = self.peek()
        if t.text == "new":
            self.next()
            name = self.ident()
            self.eat(":")
            ty = self.parse_type()
            self.eat("in")
            inner = dict(binders)
            inner[name] = (ty, None)
            return New(name, ty, self.parse_protocol(refs, inner))
        if t.text == "newfamily":
            self.next()
            name = self.ident()
            self.eat("[")
            self.ident()  # index name is cosmetic on binders
            self.eat("<")
            bound = self.parse_size()
            self.eat("]")
            self.eat(":")
            ty = self.parse_type()
            self.eat("in")
            inner = dict(binders)
            inner[name] = (ty, bound)
            return New(name, ty, self.parse_protocol(refs, inner), bound)
        left = self.parse_protocol_atom(refs, binders)
        while self.at("||"):
            self.next()
            right = self.parse_protocol_atom(refs, binders)
            left = Par(left, right)
        return left

    def parse_protocol_atom(self, refs: dict, binders: dict) -> Protocol:
        t = self.peek()
        if t.text == "(":
            self.next()
            inner = self.parse_protocol(refs, binders)
            self.eat(")")
            return inner
        if t.text == "0":
            self.next()
            return Zero()
        if t.text == "family":
            self.next()
            name = self.ident()
            self.eat("[")
            ivar = self.ident()
            self.eat("<")
            bound = self.parse_size()
            self.eat("]")
            self.eat("::=")
            reaction = self.parse_reaction({})
            return Family(name, ivar, bound, reaction)
        name = self.ident()
        if self.at("::="):
            self.next()
            reaction = self.parse_reaction({})
            return Assign(Chan(name), reaction)
        if name in refs:
            return refs[name]
        raise ParseError(f"unknown protocol reference {name!r}", t.line, t.col)

    def parse_protocol_decl(self, known: dict) -> ProtocolDecl:
        self.eat("protocol")
        name = self.ident()
        self.eat("=")
        refs = {}
        save = self.pos
        # Pre-scan where-bindings so forward references resolve.
        depth = 0
        while True:
            t = self.tokens[self.pos]
            if t.kind == "eof":
                break
            if t.text == "(":
                depth += 1
            elif t.text == ")":
                depth -= 1
            elif t.text in ("where", "and") and depth == 0:
                self.next()
                ref_name = self.ident()
                self.eat("=")
                refs[ref_name] = self.parse_protocol(refs, {})
                continue
            elif t.text == "." and depth == 0:
                break
            self.next()
        self.pos = save
        for decl in known.values():
            refs.setdefault(decl.name, decl.protocol)
        body = self.parse_protocol(refs, {})
        while self.at("where") or self.at("and"):
            self.next()
            self.ident()
            self.eat("=")
            self.parse_protocol(refs, {})
        self.eat(".")
        protocol, delta, ptype = resolve_protocol(
            body, self.type_symbols, self.params)
        return ProtocolDecl(name, protocol, delta, ptype)

    # -- assumptions ---------------------------------------------------------

    def parse_assumption(self) -> AxiomDecl:
        kind = "approx" if self.next().text == "approx-assumption" else "exact"
        name = self.ident()
        self.eat(":")
        delta = []
        while self.at("("):
            self.next()
            fam = self.peek().text == "fam"
            self.next()  # fam | chn
            cname = self.ident()
            bound = None
            if fam:
                self.eat("[")
                self.ident()
                self.eat("<")
                bound = self.parse_size()
                self.eat("]")
            self.eat("::")
            ty = self.parse_type()
            self.eat(")")
            delta.append((cname, ty, bound))
        self.eat("inputs")
        self.eat(":")
        inputs = []
        while True:
            fam = self.peek().text == "fam"
            self.next()
            cname = self.ident()
            bound = None
            if fam:
                self.eat("[")
                self.ident()
                self.eat("<")
                bound = self.parse_size()
                self.eat("]")
            inputs.append(ChanSetEntry(cname, bound))
            if self.at(","):
                self.next()
                continue
            break
        self.eat("|=")
        lhs = self.parse_protocol({}, {n: (t, b) for n, t, b in delta})
        self.eat("~" if kind == "approx" else "=")
        rhs = self.parse_protocol({}, {n: (t, b) for n, t, b in delta})
        self.eat(".")
        lhs = fill_read_types(lhs, {n: (t, b) for n, t, b in delta})
        rhs = fill_read_types(rhs, {n: (t, b) for n, t, b in delta})
        from .syntax import free_channels
        _, free_writes = free_channels(lhs)
        input_names = {e.name for e in inputs}
        outputs = tuple(ChanSetEntry(n, b) for n, t, b in delta
                        if n not in input_names and n in free_writes)
        return AxiomDecl(name, kind, tuple(delta), tuple(inputs), outputs, lhs, rhs)

    # -- proofs -------------------------------------------------------------

    def parse_proof(self) -> ProofDecl:
        self.eat("proof")
        name = self.ident()
        self.eat(":")
        lhs = self.ident()
        self.eat("~")
        rhs = self.ident()
        self.eat(":")
        self.eat("=")
        script = self.parse_script()
        self.eat(".")
        return ProofDecl(name, lhs, rhs, script)

    def parse_script(self) -> tuple:
        tacs = [self.parse_tactic()]
        while self.at("then"):
            self.next()
            tacs.append(self.parse_tactic())
        return tuple(tacs)

    def parse_target(self) -> str:
        t = self.peek()
        if t.text not in ("fam", "chn"):
            raise ParseError(f"unexpected {t.text!r}", t.line, t.col,
                             expected={"fam", "chn"})
        self.next()
        return self.ident()

    def parse_tactic(self) -> T.Tactic:
        t = self.peek()
        if t.text == "subst":
            self.next()
            src = self.parse_target()
            self.eat("into")
            dst = self.parse_target()
            return T.Subst(src, dst)
        if t.text == "fold":
            self.next()
            src = self.parse_target()
            self.eat("into")
            dst = self.parse_target()
            return T.Fold(src, dst)
        if t.text == "absorb":
            self.next()
            return T.Absorb(self.parse_target())
        if t.text == "add":
            self.next()
            self.eat("internal")
            name, ty, bound, ivar = self.parse_internal_header()
            self.eat("assigned")
            self.eat(":")
            reaction = self.parse_reaction({})
            return T.AddInternal(name, ty, bound, ivar, reaction)
        if t.text == "introduce":
            self.next()
            self.eat("internal")
            name, ty, bound, ivar = self.parse_internal_header()
            self.eat("assigned")
            self.eat(":")
            reaction = self.parse_reaction({})
            self.eat("via")
            via = self.parse_target()
            self.eat("reading")
            self.eat(":")
            new_via = self.parse_reaction({})
            return T.IntroduceInternal(name, ty, bound, reaction, via, new_via)
        if t.text == "change":
            self.next()
            target = self.parse_target()
            self.eat("with")
            self.eat(":")
            return T.Change(target, self.parse_reaction({}))
        if t.text == "use":
            self.next()
            if self.at("approx"):
                self.next()
                self.eat("assumption")
                return T.UseApproxAssumption(self.ident())
            self.eat("assumption")
            name = self.ident()
            self.eat("on")
            targets = []
            index = None
            while True:
                self.next()  # fam | chn
                cname = self.ident()
                if self.at("["):
                    self.next()
                    idx = self.parse_size()
                    self.eat("]")
                    if index is not None and not size_eq(index, idx):
                        t2 = self.peek()
                        raise ParseError("mixed indices in assumption use", t2.line, t2.col)
                    index = idx
                targets.append(cname)
                if self.at(","):
                    self.next()
                    continue
                break
            return T.UseAssumption(name, tuple((c, c) for c in targets), index)
        if t.text == "by":
            self.next()
            self.eat("induction")
            self.eat("on")
            ivar = self.ident()
            self.eat("with")
            self.eat("variable")
            gvar = self.ident()
            self.eat("(")
            body = self.parse_script()
            self.eat(")")
            return T.Induction(ivar, gvar, body)
        if t.text == "sym":
            self.next()
            self.eat("from")
            self.eat("(")
            body = self.parse_script()
            self.eat(")")
            return T.SymFrom(body)
        raise ParseError(f"unknown tactic {t.text!r}", t.line, t.col)

    def parse_internal_header(self):
        if self.at("family"):
            self.next()
            name = self.ident()
            self.eat("[")
            ivar = self.ident()
            self.eat("<")
            bound = self.parse_size()
            self.eat("]")
            self.eat(":")
            ty = self.parse_type()
            return name, ty, bound, ivar
        self.eat("chn")
        name = self.ident()
        self.eat(":")
        ty = self.parse_type()
        return name, ty, None, "i"


# ---------------------------------------------------------------------------
# Read-type resolution.  Bind-annotated reads are typed by the parser; tail
# reads are typed from the channel map (binders, declared contexts, and
# inferred output types), iterating to a fixpoint.


def reaction_result_type(r: Reaction):
    match r:
        case Ret(e):
            return _expr_type(e)
        case Samp(_, _, res, _):
            return res
        case Read(_, ty):
            return ty
        case IfR(_, a, b):
            return reaction_result_type(a) or reaction_result_type(b)
        case BindR(_, _, _, body):
            return reaction_result_type(body)


def _expr_type(e: Expr):
    match e:
        case Var(_, ty):
            return ty
        case UnitVal():
            return Unit()
        case BoolLit(_):
            return Bool()
        case App(_, _, res, _):
            return res
        case Pair(a, b):
            ta = _expr_type(a)
            tb = _expr_type(b)
            return Prod(ta, tb) if ta and tb else None
        case Fst(l, _, _):
            return l
        case Snd(_, r, _):
            return r


def fill_read_types(p: Protocol, chan_types: dict) -> Protocol:
    def fix_reaction(r):
        match r:
            case Read(c, None):
                if c.name not in chan_types:
                    raise ResolveError(f"cannot type read of {c.name!r}",
                                       code="resolve/untyped-read")
                return Read(c, chan_types[c.name][0])
            case IfR(e, a, b):
                return IfR(e, fix_reaction(a), fix_reaction(b))
            case BindR(x, t, rhs, body):
                return BindR(x, t, fix_reaction(rhs), fix_reaction(body))
            case _:
                return r

    match p:
        case Assign(c, r):
            return Assign(c, fix_reaction(r))
        case Family(n, i, b, r):
            return Family(n, i, b, fix_reaction(r))
        case Par(a, b):
            return Par(fill_read_types(a, chan_types), fill_read_types(b, chan_types))
        case New(n, t, body, bound):
            inner = dict(chan_types)
            inner[n] = (t, bound)
            return New(n, t, fill_read_types(body, inner), bound)
        case _:
            return p


def _collect_reads(p: Protocol, hidden: set, out: dict):
    def walk_reaction(r, ivar):
        match r:
            case Read(c, ty):
                if c.name not in hidden:
                    bound = "fam" if c.index is not None else None
                    prev = out.get(c.name)
                    entry = (ty, bound)
                    if prev is None:
                        out[c.name] = entry
                    elif prev[0] is not None and ty is not None and prev[0] != ty:
                        raise ResolveError(
                            f"channel {c.name!r} read at two types", code="resolve/type-clash")
                    elif prev[0] is None:
                        out[c.name] = entry
            case IfR(_, a, b):
                walk_reaction(a, ivar)
                walk_reaction(b, ivar)
            case BindR(_, _, rhs, body):
                walk_reaction(rhs, ivar)
                walk_reaction(body, ivar)
            case _:
                pass

    match p:
        case Assign(_, r):
            walk_reaction(r, None)
        case Family(_, i, _, r):
            walk_reaction(r, i)
        case Par(a, b):
            _collect_reads(a, hidden, out)
            _collect_reads(b, hidden, out)
        case New(n, _, body, _):
            _collect_reads(body, hidden | {n}, out)
        case _:
            pass


def _collect_writes(p: Protocol, hidden: set, out: dict):
    match p:
        case Assign(c, r):
            if c.name not in hidden:
                out[c.name] = (reaction_result_type(r), None)
        case Family(n, _, b, r):
            if n not in hidden:
                out[n] = (reaction_result_type(r), b)
        case Par(a, b):
            _collect_writes(a, hidden, out)
            _collect_writes(b, hidden, out)
        case New(n, _, body, _):
            _collect_writes(body, hidden | {n}, out)
        case _:
            pass


def _family_bounds(p: Protocol, hidden: set, out: dict):
    """Bound of each free family channel, from reads and assignments."""
    def walk_reaction(r, bound):
        match r:
            case Read(c, _):
                if c.index is not None and c.name not in hidden:
                    prev = out.get(c.name)
                    if prev is not None and bound is not None and not size_eq(prev, bound):
                        raise ResolveError(f"family {c.name!r} used at two bounds",
                                           code="resolve/bound-clash")
                    if bound is not None:
                        out[c.name] = bound
            case IfR(_, a, b):
                walk_reaction(a, bound)
                walk_reaction(b, bound)
            case BindR(_, _, rhs, body):
                walk_reaction(rhs, bound)
                walk_reaction(body, bound)
            case _:
                pass

    match p:
        case Assign(_, r):
            walk_reaction(r, None)
        case Family(n, _, b, r):
            if n not in hidden:
                out[n] = b
            walk_reaction(r, b)
        case Par(a, b):
            _family_bounds(a, hidden, out)
            _family_bounds(b, hidden, out)
        case New(n, _, body, _):
            _family_bounds(body, hidden | {n}, out)
        case _:
            pass


def resolve_protocol(p: Protocol, type_symbols, params):
    """Fill tail-read types, infer the channel context and the I/O sets."""
    # Iterate: assigned channel types feed tail reads feed result types.
    chan_types = {}
    for _ in range(8):
        reads = {}
        writes = {}
        _collect_reads(p, set(), reads)
        _collect_writes(p, set(), writes)
        known = dict(chan_types)
        for name, (ty, _) in reads.items():
            if ty is not None:
                known.setdefault(name, ty)
        for name, (ty, _) in writes.items():
            if ty is not None:
                known[name] = ty
        filled = fill_read_types(p, {n: (t, None) for n, t in known.items()})
        if filled == p and known == chan_types:
            break
        p = filled
        chan_types = known
    reads = {}
    writes = {}
    bounds = {}
    _collect_reads(p, set(), reads)
    _collect_writes(p, set(), writes)
    _family_bounds(p, set(), bounds)
    for name, (ty, _) in list(reads.items()) + list(writes.items()):
        if ty is None:
            raise ResolveError(f"could not infer a type for channel {name!r}",
                               code="resolve/untyped-read")

    delta = ChannelContext()
    inputs = []
    outputs = []
    for name, (ty, _) in sorted(writes.items()):
        delta.add(name, ty, bounds.get(name))
        outputs.append(ChanSetEntry(name, bounds.get(name)))
    for name, (ty, _) in sorted(reads.items()):
        if name in writes:
            continue
        delta.add(name, ty, bounds.get(name))
        inputs.append(ChanSetEntry(name, bounds.get(name)))
    return p, delta, ProtocolType.of(tuple(inputs), tuple(outputs))


# ---------------------------------------------------------------------------
# Parsing entry points.


def parse(text: str) -> SourceFile:
    return Parser(lex(text)).parse_file()


def parse_path(path) -> SourceFile:
    with open(path) as fh:
        return parse(fh.read())

# ---------------------------------------------------------------------------
# Running proofs and emitting the bound report.


@dataclass
class ProofResult:
    name: str
    ok: bool
    ledger: BoundLedger | None
    error: str | None
    state: object = None


def _tactic_internals(script) -> dict:
    """Channel types declared by introduce/add tactics, for read typing."""
    out = {}
    for t in script:
        if isinstance(t, (T.AddInternal, T.IntroduceInternal)):
            out[t.name] = (t.ty, t.bound)
        if isinstance(t, (T.Induction, T.SymFrom)):
            out.update(_tactic_internals(t.body))
    return out


def _fill_tactic_reads(t, chan_types):
    def fill(r):
        return _fill_reaction(r, chan_types)

    match t:
        case T.AddInternal(name, ty, bound, ivar, reaction):
            return T.AddInternal(name, ty, bound, ivar, fill(reaction))
        case T.IntroduceInternal(name, ty, bound, reaction, via, new_via):
            return T.IntroduceInternal(name, ty, bound, fill(reaction), via, fill(new_via))
        case T.Change(target, reaction):
            return T.Change(target, fill(reaction))
        case T.Induction(ivar, gvar, body):
            return T.Induction(ivar, gvar, tuple(_fill_tactic_reads(b, chan_types)
                                                 for b in body))
        case T.SymFrom(body):
            return T.SymFrom(tuple(_fill_tactic_reads(b, chan_types) for b in body))
        case _:
            return t


def _fill_reaction(r: Reaction, chan_types: dict) -> Reaction:
    match r:
        case Read(c, None):
            if c.name not in chan_types:
                raise ResolveError(f"cannot type read of {c.name!r} in tactic",
                                   code="resolve/untyped-read")
            return Read(c, chan_types[c.name][0])
        case IfR(e, a, b):
            return IfR(e, _fill_reaction(a, chan_types), _fill_reaction(b, chan_types))
        case BindR(x, t, rhs, body):
            return BindR(x, t, _fill_reaction(rhs, chan_types),
                         _fill_reaction(body, chan_types))
        case _:
            return r


def run_proof(source: SourceFile, proof: ProofDecl) -> ProofResult:
    try:
        lhs_decl = source.protocols[proof.lhs]
        rhs_decl = source.protocols[proof.rhs]
    except KeyError as missing:
        return ProofResult(proof.name, False, None, f"unknown protocol {missing}")
    try:
        _check_same_interface(lhs_decl, rhs_decl)
        delta = _merge_delta(lhs_decl, rhs_decl)
        for ax in source.axioms.values():
            ax.validate(source.signature)
        chan_types = {name: (ty, bound) for name, (ty, bound) in delta.items()}
        chan_types.update(_tactic_internals(proof.script))
        script = tuple(_fill_tactic_reads(t, chan_types) for t in proof.script)
        state = T.ProofState.start(source.signature, delta, lhs_decl.ptype,
                                   source.axioms, lhs_decl.protocol, rhs_decl.protocol)
        T.run_script(state, script)
        ledger = state.finish()
        return ProofResult(proof.name, True, ledger, None, state)
    except IpdlError as exc:
        return ProofResult(proof.name, False, None, f"{exc.code}: {exc}")


def _check_same_interface(a: ProtocolDecl, b: ProtocolDecl):
    keys = lambda entries: sorted(e.key() for e in entries)
    if keys(a.ptype.inputs) != keys(b.ptype.inputs) or \
            keys(a.ptype.outputs) != keys(b.ptype.outputs):
        raise ResolveError(
            f"protocols {a.name!r} and {b.name!r} have different interfaces",
            code="resolve/interface-mismatch")


def _merge_delta(a: ProtocolDecl, b: ProtocolDecl) -> ChannelContext:
    merged = ChannelContext()
    for name, (ty, bound) in a.delta.items():
        merged.add(name, ty, bound)
    for name, (ty, bound) in b.delta.items():
        if name not in merged:
            merged.add(name, ty, bound)
    return merged


def emit_report(result: ProofResult, concrete: dict | None = None,
                signature=None) -> str:
    """Bound report: per-assumption counts and normalized contexts, plus an
    optional concrete evaluation block."""
    lines = []
    if not result.ok:
        lines.append(f"proof {result.name}: FAILED")
        lines.append(f"error: {result.error}")
        return "\n".join(lines) + "\n"
    lines.append(f"proof {result.name}: ok")
    used = result.ledger.used()
    if not used:
        lines.append("no approximate assumptions used")
    for name, xi, psi in used:
        lines.append(f"indistinguishability assumption {name} :")
        lines.append(f"count: {xi}")
        lines.append(f"context: {pretty_cost(psi)}")
    degrees = check_asymptotic(result.ledger)
    for name, xi, _ in used:
        info = degrees[name]
        lines.append(f"asymptotics for {name}: polynomial, degree {info['degree']}")
    if concrete is not None and used:
        sizes = concrete["sizes"]
        c_sem = concrete["C_sem"]
        c_adv = concrete["C_adv"]
        eta = concrete["eta_sem"]
        eps = concrete["eps"]
        nf = len(signature.fun_symbols)
        nd = len(signature.dist_symbols)
        ledger = result.ledger
        total, budgets, contexts = concrete_bound(ledger, c_sem, c_adv, sizes,
                                                  eta, eps, nf, nd)
        pretty_env = ", ".join(f"{k} = {v}" for k, v in sorted(sizes.items())
                               if not k.startswith("|"))
        lines.append(f"concrete evaluation ({pretty_env}):")
        for name in sorted(budgets):
            lines.append(f"assumption {name} : C_ctxt = {contexts[name]}, "
                         f"adversary budget = {budgets[name]}")
        lines.append(f"advantage bound: {total}")
    return "\n".join(lines) + "\n"


def run_file(path, concrete: dict | None = None):
    """Parse, resolve, and run every proof in a file.

    Returns (report text, exit status): status 0 only when every proof ran
    its whole script and closed.
    """
    try:
        source = parse_path(path)
    except IpdlError as exc:
        return f"error: {exc.code}: {exc}\n", 1
    if not source.proofs:
        return "no proofs declared\n", 1
    chunks = []
    status = 0
    for proof in source.proofs:
        result = run_proof(source, proof)
        chunks.append(emit_report(result, concrete, source.signature))
        if not result.ok:
            status = 1
    return "\n".join(chunks), status

# ---------------------------------------------------------------------------
# Pretty printing a resolved source file back to parseable surface syntax
# (where-bindings are expanded; semantics are unchanged).


def _pretty_entry(e: ChanSetEntry, kind_fam="fam", kind_chn="chn") -> str:
    if e.bound is None:
        return f"{kind_chn} {e.name}"
    return f"{kind_fam} {e.name}[i < {pretty_size(e.bound)}]"


def _pretty_delta_entry(name, ty, bound) -> str:
    if bound is None:
        return f"(chn {name} :: {pretty_type(ty)})"
    return f"(fam {name}[i < {pretty_size(bound)}] :: {pretty_type(ty)})"


def pretty_tactic(t, indent="  ") -> str:
    from .syntax import pretty_reaction
    match t:
        case T.Subst(src, dst):
            return f"subst chn {src} into chn {dst}"
        case T.Fold(src, dst):
            return f"fold chn {src} into chn {dst}"
        case T.Absorb(target):
            return f"absorb chn {target}"
        case T.AddInternal(name, ty, bound, ivar, reaction):
            head = (f"chn {name} : {pretty_type(ty)}" if bound is None else
                    f"family {name}[{ivar} < {pretty_size(bound)}] : {pretty_type(ty)}")
            return f"add internal {head} assigned: {pretty_reaction(reaction)}"
        case T.IntroduceInternal(name, ty, bound, reaction, via, new_via):
            head = (f"chn {name} : {pretty_type(ty)}" if bound is None else
                    f"family {name}[i < {pretty_size(bound)}] : {pretty_type(ty)}")
            return (f"introduce internal {head} assigned: {pretty_reaction(reaction)} "
                    f"via chn {via} reading: {pretty_reaction(new_via)}")
        case T.Change(target, reaction):
            return f"change chn {target} with: {pretty_reaction(reaction)}"
        case T.UseAssumption(name, targets, index):
            suffix = "" if index is None else f"[{pretty_size(index)}]"
            refs = ", ".join(f"chn {c}{suffix}" for _, c in targets)
            return f"use assumption {name} on {refs}"
        case T.UseApproxAssumption(name):
            return f"use approx assumption {name}"
        case T.Induction(ivar, gvar, body):
            inner = f"\n{indent}then ".join(pretty_tactic(b, indent) for b in body)
            return f"by induction on {ivar} with variable {gvar} (\n{indent}{inner}\n)"
        case T.SymFrom(body):
            inner = f"\n{indent}then ".join(pretty_tactic(b, indent) for b in body)
            return f"sym from (\n{indent}{inner}\n)"
    raise ResolveError(f"cannot print tactic {t!r}", code="print/unknown-tactic")


def pretty_source(source: SourceFile) -> str:
    from .syntax import pretty_protocol
    lines = []
    for p in source.parameters:
        lines.append(f"parameter {p} : nat .")
    for t in source.signature.type_symbols:
        lines.append(f"type {t} .")
    for f, (a, r) in source.signature.fun_symbols.items():
        lines.append(f"function {f} : {pretty_type(a)} -> {pretty_type(r)} .")
    for d, (a, r) in source.signature.dist_symbols.items():
        lines.append(f"distribution {d} : {pretty_type(a)} -> {pretty_type(r)} .")
    for ax in source.axioms.values():
        head = "approx-assumption" if ax.kind == "approx" else "protocol-assumption"
        lines.append(f"{head} {ax.name} :")
        lines.append("  " + " ".join(_pretty_delta_entry(*entry) for entry in ax.delta))
        lines.append("  inputs: " + ", ".join(_pretty_entry(e) for e in ax.inputs) + " |=")
        lines.append(pretty_protocol(ax.lhs, 2))
        lines.append("  ~" if ax.kind == "approx" else "  =")
        lines.append(pretty_protocol(ax.rhs, 2))
        lines.append("  .")
    for decl in source.protocols.values():
        lines.append(f"protocol {decl.name} =")
        lines.append(pretty_protocol(decl.protocol, 1))
        lines.append("  .")
    for proof in source.proofs:
        lines.append(f"proof {proof.name} : {proof.lhs} ~ {proof.rhs} :=")
        lines.append("  " + "\n  then ".join(pretty_tactic(t) for t in proof.script))
        lines.append("  .")
    return "\n".join(lines) + "\n"
