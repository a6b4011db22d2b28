"""Reaction-level equational reasoning.

The checker decides a conservative fragment of exact reaction equality:
monad laws (associativity, left unit, right unit), reduction of literal
conditionals and projections of pairs, and exchange of independent binds.
Two reactions are accepted as equal when their canonical forms coincide up
to alpha; every transformation used is a sound exact equality, so the check
never accepts inequivalent reactions.

`simplify` applies only the cleanups that inlining steps want (associativity,
left unit, reductions) and deliberately skips eta so that surface shapes
like `e : ctxt <- read Enc[i] ; return e` survive into cost accounting.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .syntax import (
    App, BindR, BoolLit, Expr, Fst, IfR, IpdlError, Pair, Reaction, Read,
    Ret, Samp, Snd, ValR, Var, reaction_alpha_eq,
)


class RewriteError(IpdlError):
    code = "rewrite"


_fresh = itertools.count()


def _fresh_var(base: str) -> str:
    return f"{base}~{next(_fresh)}"


# ---------------------------------------------------------------------------
# Variables.


def expr_free_vars(e: Expr) -> set:
    match e:
        case Var(x, _):
            return {x}
        case App(_, _, _, arg) | Fst(_, _, arg) | Snd(_, _, arg):
            return expr_free_vars(arg)
        case Pair(a, b):
            return expr_free_vars(a) | expr_free_vars(b)
        case _:
            return set()


def reaction_free_vars(r: Reaction) -> set:
    match r:
        case Ret(e):
            return expr_free_vars(e)
        case Samp(_, _, _, e):
            return expr_free_vars(e)
        case Read() | ValR():
            return set()
        case IfR(e, a, b):
            return expr_free_vars(e) | reaction_free_vars(a) | reaction_free_vars(b)
        case BindR(x, _, rhs, body):
            return reaction_free_vars(rhs) | (reaction_free_vars(body) - {x})


def rename_bound_var(r: BindR, fresh: str) -> BindR:
    """Alpha-rename the binder of a single bind node."""
    return BindR(fresh, r.var_ty, r.rhs,
                 subst_expr_var(r.body, r.var, Var(fresh, r.var_ty)))


def subst_expr_var(r: Reaction, var: str, e: Expr) -> Reaction:
    """Capture-avoiding substitution of an expression for a variable."""
    match r:
        case Ret(ex):
            return Ret(_subst_expr(ex, var, e))
        case Samp(d, a, t, ex):
            return Samp(d, a, t, _subst_expr(ex, var, e))
        case Read() | ValR():
            return r
        case IfR(ex, a, b):
            return IfR(_subst_expr(ex, var, e), subst_expr_var(a, var, e),
                       subst_expr_var(b, var, e))
        case BindR(x, t, rhs, body):
            rhs = subst_expr_var(rhs, var, e)
            if x == var:
                return BindR(x, t, rhs, body)
            if x in expr_free_vars(e):
                fresh = _fresh_var(x)
                body = subst_expr_var(body, x, Var(fresh, t))
                return BindR(fresh, t, rhs, subst_expr_var(body, var, e))
            return BindR(x, t, rhs, subst_expr_var(body, var, e))


def _subst_expr(ex: Expr, var: str, e: Expr) -> Expr:
    match ex:
        case Var(x, _) if x == var:
            return e
        case App(f, a, t, arg):
            return App(f, a, t, _subst_expr(arg, var, e))
        case Pair(a, b):
            return Pair(_subst_expr(a, var, e), _subst_expr(b, var, e))
        case Fst(l, rr, arg):
            return Fst(l, rr, _subst_expr(arg, var, e))
        case Snd(l, rr, arg):
            return Snd(l, rr, _subst_expr(arg, var, e))
        case _:
            return ex


# ---------------------------------------------------------------------------
# Expression reductions: projections of literal pairs.


def reduce_expr(e: Expr) -> Expr:
    match e:
        case App(f, a, t, arg):
            return App(f, a, t, reduce_expr(arg))
        case Pair(a, b):
            return Pair(reduce_expr(a), reduce_expr(b))
        case Fst(l, r, arg):
            arg = reduce_expr(arg)
            if isinstance(arg, Pair):
                return arg.left
            return Fst(l, r, arg)
        case Snd(l, r, arg):
            arg = reduce_expr(arg)
            if isinstance(arg, Pair):
                return arg.right
            return Snd(l, r, arg)
        case _:
            return e


# ---------------------------------------------------------------------------
# Simplification: associativity + left unit + reductions (no eta).


def simplify(r: Reaction) -> Reaction:
    match r:
        case Ret(e):
            return Ret(reduce_expr(e))
        case Samp(d, a, t, e):
            return Samp(d, a, t, reduce_expr(e))
        case Read() | ValR():
            return r
        case IfR(e, a, b):
            e = reduce_expr(e)
            if isinstance(e, BoolLit):
                return simplify(a if e.value else b)
            return IfR(e, simplify(a), simplify(b))
        case BindR(x, t, rhs, body):
            rhs = simplify(rhs)
            if isinstance(rhs, Ret):
                return simplify(subst_expr_var(body, x, rhs.expr))
            if isinstance(rhs, BindR):
                # (x <- (y <- R; S); T)  ==>  y <- R; (x <- S; T)
                inner = rhs
                if inner.var in reaction_free_vars(body) | {x}:
                    inner = rename_bound_var(inner, _fresh_var(inner.var))
                return simplify(BindR(inner.var, inner.var_ty, inner.rhs,
                                      BindR(x, t, inner.body, body)))
            return BindR(x, t, rhs, simplify(body))


# ---------------------------------------------------------------------------
# Spine view: a simplified reaction is a list of bind steps over prims
# (read / samp / if / val) followed by a tail prim or return.


@dataclass
class Spine:
    steps: list   # list of (var, var_ty, prim reaction)
    tail: Reaction

    def rebuild(self) -> Reaction:
        out = self.tail
        for var, ty, prim in reversed(self.steps):
            out = BindR(var, ty, prim, out)
        return out


def to_spine(r: Reaction) -> Spine:
    steps = []
    while isinstance(r, BindR):
        steps.append((r.var, r.var_ty, r.rhs))
        r = r.body
    return Spine(steps, r)


def _canonical_prim(prim: Reaction) -> Reaction:
    """Canonicalize the sub-reactions inside an if-prim."""
    if isinstance(prim, IfR):
        return IfR(reduce_expr(prim.cond), canonical(prim.then), canonical(prim.els))
    return prim


def _prim_key(prim: Reaction, var_pos: dict):
    from .syntax import _nameless_reaction
    env = {v: ("step", i) for v, i in var_pos.items()}
    return repr(_nameless_reaction(prim, {}, env))


def canonical(r: Reaction) -> Reaction:
    """Canonical form under monad laws, reductions, and exchange."""
    spine = to_spine(simplify(r))
    spine.steps = [(v, t, _canonical_prim(p)) for v, t, p in spine.steps]

    # Right unit: `x <- R; ret x` collapses to R whenever x is used nowhere
    # else; the freed prim becomes the tail.
    changed = True
    while changed:
        changed = False
        if isinstance(spine.tail, Ret) and isinstance(spine.tail.expr, Var):
            x = spine.tail.expr.name
            uses = sum(1 for _, _, p in spine.steps if x in reaction_free_vars(p))
            for i, (v, t, p) in enumerate(spine.steps):
                if v == x and uses == 0:
                    del spine.steps[i]
                    spine.tail = p
                    changed = True
                    break

    # Exchange: emit independent steps in a canonical order.
    remaining = list(spine.steps)
    emitted = []
    var_pos = {}
    while remaining:
        ready = []
        for item in remaining:
            _, _, prim = item
            if reaction_free_vars(prim) <= set(var_pos):
                ready.append(item)
        if not ready:
            raise RewriteError("cyclic variable dependency", code="rewrite/cycle")
        chosen = min(ready, key=lambda it: _prim_key(it[2], var_pos))
        remaining.remove(chosen)
        var_pos[chosen[0]] = len(emitted)
        emitted.append(chosen)

    return Spine(emitted, spine.tail).rebuild()


def reaction_eq(r1: Reaction, r2: Reaction) -> bool:
    """Sound, incomplete exact equality of reactions."""
    if reaction_alpha_eq(r1, r2):
        return True
    return reaction_alpha_eq(canonical(r1), canonical(r2))


# ---------------------------------------------------------------------------
# Helpers used by substitution/fold steps.


def count_reads(r: Reaction, name: str) -> int:
    match r:
        case Read(c, _):
            return 1 if c.name == name else 0
        case IfR(_, a, b):
            return count_reads(a, name) + count_reads(b, name)
        case BindR(_, _, rhs, body):
            return count_reads(rhs, name) + count_reads(body, name)
        case _:
            return 0


def head_read(r: Reaction):
    """The (var, ty, chan) of the leading bind when it is a read."""
    if isinstance(r, BindR) and isinstance(r.rhs, Read):
        return (r.var, r.var_ty, r.rhs.chan)
    return None


def bring_read_to_head(r: Reaction, name: str) -> Reaction:
    """Equivalent reaction whose leading bind reads `name`.

    Uses eta expansion when the whole reaction is the read, and exchange to
    hoist an independent read step.  Fails when the read sits under an `if`
    or depends on earlier binds.
    """
    if isinstance(r, Read) and r.chan.name == name:
        var = _fresh_var("x")
        return BindR(var, r.ty, r, Ret(Var(var, r.ty)))
    spine = to_spine(simplify(r))
    if isinstance(spine.tail, Read) and spine.tail.chan.name == name:
        var = _fresh_var("x")
        spine.steps.append((var, spine.tail.ty, spine.tail))
        spine.tail = Ret(Var(var, spine.tail.ty))
    for i, (v, t, prim) in enumerate(spine.steps):
        if isinstance(prim, Read) and prim.chan.name == name:
            # A read has no variable dependencies, so it commutes to the front.
            step = spine.steps.pop(i)
            spine.steps.insert(0, step)
            return Spine(spine.steps, spine.tail).rebuild()
    raise RewriteError(f"no movable read of {name!r}", code="rewrite/no-head-read")


def inline_read(r: Reaction, name: str, replacement: Reaction) -> Reaction:
    """Replace the leading read of `name` by `replacement`, then simplify."""
    staged = bring_read_to_head(r, name)
    head = head_read(staged)
    if head is None or head[2].name != name:
        raise RewriteError(f"read of {name!r} is not at the head", code="rewrite/no-head-read")
    assert isinstance(staged, BindR)
    return simplify(BindR(staged.var, staged.var_ty, replacement, staged.body))
