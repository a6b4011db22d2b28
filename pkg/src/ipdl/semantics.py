"""Concrete semantics: exact rational distributions over protocol states,
plus the round-based adversary interaction game.

Values are bitstrings over {0, 1, *} ('*' is the placeholder symbol); the
unit value is the empty string and booleans are single symbols.  All weights
are `Fraction`s, so every probability in a test is exact.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass
from fractions import Fraction

from .syntax import (
    App, Assign, AssignValue, BindR, Bool, BoolLit, ChannelRenaming,
    DataType, Expr, Fst, IfR, IpdlError, LitVal, New, NewIndexed, Pair, Par,
    Prod, Protocol, Reaction, Read, Ret, Samp, Snd, TConst, Unit, UnitVal,
    ValR, Var, Zero, rename_channels, subst_read, subst_var_reaction,
)

DEFAULT_STEP_BUDGET = 10**6
STEP_BUDGET_ENV = "IPDL_STEP_BUDGET"


class SemanticsError(IpdlError):
    code = "semantics"


def step_budget() -> int:
    raw = os.environ.get(STEP_BUDGET_ENV)
    return int(raw) if raw else DEFAULT_STEP_BUDGET


# ---------------------------------------------------------------------------
# Distributions: finite maps outcome -> positive rational weight.  Total
# weight may fall short of one; the shortfall is halt-without-decision mass.


class Dist:
    def __init__(self, weights=None):
        self.weights = {}
        if weights:
            for outcome, w in (weights.items() if isinstance(weights, dict) else weights):
                self.add(outcome, w)

    @classmethod
    def unit(cls, outcome) -> "Dist":
        return cls({outcome: Fraction(1)})

    def add(self, outcome, weight):
        weight = Fraction(weight)
        if weight < 0:
            raise SemanticsError("negative weight", code="dist/negative")
        if weight == 0:
            return
        self.weights[outcome] = self.weights.get(outcome, Fraction(0)) + weight

    def total(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    def items(self):
        return self.weights.items()

    def map(self, f) -> "Dist":
        out = Dist()
        for outcome, w in self.weights.items():
            out.add(f(outcome), w)
        return out

    def bind(self, f) -> "Dist":
        out = Dist()
        for outcome, w in self.weights.items():
            for o2, w2 in f(outcome).items():
                out.add(o2, w * w2)
        return out

    def scaled(self, factor) -> "Dist":
        out = Dist()
        for outcome, w in self.weights.items():
            out.add(outcome, w * Fraction(factor))
        return out

    def __eq__(self, other):
        return isinstance(other, Dist) and self.weights == other.weights

    def __repr__(self):
        items = ", ".join(f"{o!r}: {w}" for o, w in sorted(self.weights.items(), key=repr))
        return f"Dist({{{items}}})"


# ---------------------------------------------------------------------------
# Interpretations.


@dataclass
class Interpretation:
    """Concrete meanings: value sets per type constant, tables per symbol."""

    sizes: dict                 # type constant -> bitstring length
    type_values: dict           # type constant -> tuple of admissible strings
    functions: dict             # fun symbol -> dict value -> value
    distributions: dict         # dist symbol -> dict value -> Dist(value)

    def type_size(self, ty: DataType) -> int:
        match ty:
            case TConst(name):
                if name not in self.sizes:
                    raise SemanticsError(f"no size for type {name!r}", code="interp/unknown-type")
                return self.sizes[name]
            case Unit():
                return 0
            case Bool():
                return 1
            case Prod(a, b):
                return self.type_size(a) + self.type_size(b)

    def values_of(self, ty: DataType) -> tuple:
        match ty:
            case TConst(name):
                return tuple(self.type_values[name])
            case Unit():
                return ("",)
            case Bool():
                return ("0", "1")
            case Prod(a, b):
                return tuple(x + y for x in self.values_of(a) for y in self.values_of(b))

    def apply_fun(self, name: str, value: str) -> str:
        table = self.functions.get(name)
        if table is None:
            raise SemanticsError(f"no interpretation for function {name!r}",
                                 code="interp/unknown-fun")
        if value not in table:
            raise SemanticsError(f"function {name!r} undefined at {value!r}",
                                 code="interp/partial-fun")
        return table[value]

    def apply_dist(self, name: str, value: str) -> Dist:
        table = self.distributions.get(name)
        if table is None:
            raise SemanticsError(f"no interpretation for distribution {name!r}",
                                 code="interp/unknown-dist")
        if value not in table:
            raise SemanticsError(f"distribution {name!r} undefined at {value!r}",
                                 code="interp/partial-dist")
        return table[value]


def load_interpretation(path) -> Interpretation:
    """Read a declarative table file (JSON): sizes, value sets, tables.

    Distribution weights are rational strings like "1/2".
    """
    with open(path) as fh:
        raw = json.load(fh)
    type_values = {name: tuple(vals) for name, vals in raw.get("types", {}).items()}
    sizes = {name: len(vals[0]) if vals else 0 for name, vals in type_values.items()}
    sizes.update(raw.get("sizes", {}))
    functions = {name: dict(table) for name, table in raw.get("functions", {}).items()}
    distributions = {}
    for name, table in raw.get("distributions", {}).items():
        distributions[name] = {
            arg: Dist({out: Fraction(w) for out, w in weights.items()})
            for arg, weights in table.items()
        }
    return Interpretation(sizes, type_values, functions, distributions)


# ---------------------------------------------------------------------------
# Expression evaluation.  Expressions in runtime position are closed: every
# variable has been substituted by a literal value.


def eval_expr(interp: Interpretation, env: dict, e: Expr) -> str:
    match e:
        case Var(x, _):
            if x not in env:
                raise SemanticsError(f"unbound variable {x!r} at runtime",
                                     code="eval/unbound")
            return env[x]
        case LitVal(v):
            return v
        case UnitVal():
            return ""
        case BoolLit(b):
            return "1" if b else "0"
        case App(f, _, _, arg):
            return interp.apply_fun(f, eval_expr(interp, env, arg))
        case Pair(a, b):
            return eval_expr(interp, env, a) + eval_expr(interp, env, b)
        case Fst(l, _, arg):
            v = eval_expr(interp, env, arg)
            return v[: interp.type_size(l)]
        case Snd(l, _, arg):
            v = eval_expr(interp, env, arg)
            return v[interp.type_size(l):]
        case _:
            raise SemanticsError(f"cannot evaluate {e!r}", code="eval/bad-node")


# ---------------------------------------------------------------------------
# Reaction small step.  Reads block until substituted away.


def step_reaction(interp: Interpretation, r: Reaction) -> Dist | None:
    match r:
        case ValR():
            return None
        case Ret(e):
            return Dist.unit(ValR(eval_expr(interp, {}, e)))
        case Samp(d, _, _, e):
            return interp.apply_dist(d, eval_expr(interp, {}, e)).map(ValR)
        case Read():
            return None
        case IfR(e, a, b):
            return Dist.unit(a if eval_expr(interp, {}, e) == "1" else b)
        case BindR(x, ty, rhs, body):
            if isinstance(rhs, ValR):
                return Dist.unit(subst_var_reaction(body, x, rhs.value))
            inner = step_reaction(interp, rhs)
            if inner is None:
                return None
            return inner.map(lambda r2: BindR(x, ty, r2, body))
        case _:
            raise SemanticsError(f"cannot step {r!r}", code="step/bad-node")


# ---------------------------------------------------------------------------
# Protocol steps (internal + output), then big-step to quiescence.


def _output_step(p: Protocol):
    """First available output step: returns (chan, value, successor) or None."""
    match p:
        case Assign(c, ValR(v)):
            return (c, v, AssignValue(c, v))
        case Par(a, b):
            got = _output_step(a)
            if got:
                c, v, a2 = got
                return (c, v, Par(a2, subst_read(b, c, v)))
            got = _output_step(b)
            if got:
                c, v, b2 = got
                return (c, v, Par(subst_read(a, c, v), b2))
            return None
        case New(name, ty, body, bound):
            got = _output_step(body)
            if got and got[0].name != name:
                c, v, body2 = got
                return (c, v, New(name, ty, body2, bound))
            return None
        case NewIndexed(name, idx, ty, body):
            got = _output_step(body)
            if got and got[0].name != name:
                c, v, body2 = got
                return (c, v, NewIndexed(name, idx, ty, body2))
            return None
        case _:
            return None


def step_protocol(interp: Interpretation, p: Protocol) -> Dist | None:
    """One internal step in leftmost-innermost order; None when quiescent."""
    return _step(interp, p, leftmost=True)


def _step(interp, p, leftmost=True):
    match p:
        case Zero() | AssignValue():
            return None
        case Assign(c, r):
            inner = step_reaction(interp, r)
            if inner is None:
                return None
            return inner.map(lambda r2: Assign(c, r2))
        case Par(a, b):
            first, second = (a, b) if leftmost else (b, a)
            got = _step(interp, first, leftmost)
            if got is not None:
                if leftmost:
                    return got.map(lambda x: Par(x, b))
                return got.map(lambda x: Par(a, x))
            got = _step(interp, second, leftmost)
            if got is not None:
                if leftmost:
                    return got.map(lambda x: Par(a, x))
                return got.map(lambda x: Par(x, b))
            return None
        case New(name, ty, body, bound):
            # Hiding: a completed output on the bound channel is absorbed,
            # substituting the value into the remaining readers.
            got = _output_step(body)
            if got and got[0].name == name:
                c, v, body2 = got
                return Dist.unit(New(name, ty, subst_read(body2, c, v), bound))
            inner = _step(interp, body, leftmost)
            if inner is None:
                return None
            return inner.map(lambda x: New(name, ty, x, bound))
        case NewIndexed(name, idx, ty, body):
            got = _output_step(body)
            if got and got[0].name == name:
                c, v, body2 = got
                return Dist.unit(NewIndexed(name, idx, ty, subst_read(body2, c, v)))
            inner = _step(interp, body, leftmost)
            if inner is None:
                return None
            return inner.map(lambda x: NewIndexed(name, idx, ty, x))
        case _:
            raise SemanticsError(f"cannot step protocol {p!r}", code="step/bad-node")


def _toplevel_output(p: Protocol):
    """Fire a pending top-level output so queried channels carry values."""
    got = _output_step(p)
    if got is None:
        return None
    return got[2]


def big_step(interp: Interpretation, p: Protocol, strategy: str = "leftmost") -> Dist:
    """Run internal and output steps to quiescence; exact distribution.

    Well-typed protocols are single-assignment, so this terminates; the step
    budget guards against internal errors.
    """
    leftmost = strategy == "leftmost"
    budget = step_budget()
    pending = [(p, Fraction(1))]
    done = Dist()
    steps = 0
    while pending:
        current, weight = pending.pop()
        while True:
            steps += 1
            if steps > budget:
                raise SemanticsError("step budget exceeded", code="step/budget")
            fired = _toplevel_output(current)
            if fired is not None:
                current = fired
                continue
            dist = _step(interp, current, leftmost)
            if dist is None:
                done.add(current, weight)
                break
            items = list(dist.items())
            if len(items) == 1:
                current = items[0][0]
                weight = weight * items[0][1]
                continue
            for nxt, w in items:
                pending.append((nxt, weight * w))
            break
    return done


def quiescent_values(p: Protocol) -> dict:
    """Channel -> value for every fired (visible) output in a quiescent state."""
    out = {}

    def walk(q, hidden):
        match q:
            case AssignValue(c, v):
                if c.name not in hidden:
                    out[c.key()] = v
            case Par(a, b):
                walk(a, hidden)
                walk(b, hidden)
            case New(name, _, body, _):
                walk(body, hidden | {name})
            case NewIndexed(name, _, _, body):
                walk(body, hidden | {name})
            case _:
                pass

    walk(p, set())
    return out


# ---------------------------------------------------------------------------
# Adversaries.  The Turing Machine layer exists only for cost accounting,
# which is symbolic here; execution needs just the functional pieces.


@dataclass
class AbstractAdversary:
    """State machine playing the round-based distinguishing game.

    `transition` maps a state to a Dist over (action, next state) pairs,
    where an action is None, ("query", chan), ("assign", chan), or "halt";
    total weight below one is additional halt mass.  `on_input` folds a
    queried value into the state, `output_value` produces the value for an
    assignment (or None), and `decide` yields the final decision bit.
    """

    rounds: int
    query_channels: tuple      # I': protocol outputs the adversary may query
    assign_channels: tuple     # O': protocol inputs the adversary may drive
    initial_state: object
    transition: object         # state -> Dist[(action, state)]
    on_input: object           # (chan, value, state) -> state
    output_value: object       # (chan, state) -> value | None
    decide: object             # state -> bool
    renaming: ChannelRenaming | None = None
    name: str = "adv"

    def err_mass(self) -> Fraction:
        # Upper bound on per-round halt probability, probed at the initial state.
        return Fraction(1) - self.transition(self.initial_state).total()


def interact(adv: AbstractAdversary, p: Protocol, interp: Interpretation) -> Dist:
    """Exact sub-distribution over decision bits from the round-based game."""
    if adv.renaming is not None:
        p = rename_channels(adv.renaming, p)
    _check_channel_sets(adv, p)

    states = Dist.unit((adv.initial_state, p))
    for _ in range(adv.rounds):
        nxt = Dist()
        for (s, prot), w in states.items():
            evolved = big_step(interp, prot)
            trans = adv.transition(s)
            for (prot2, wp) in evolved.items():
                for (action, s2), wa in trans.items():
                    weight = w * wp * wa
                    if action == "halt":
                        continue  # mass dropped: game ends without a decision
                    if action is None:
                        nxt.add((s2, prot2), weight)
                    elif action[0] == "assign":
                        c = action[1]
                        v = adv.output_value(c, s2)
                        if v is not None:
                            nxt.add((s2, subst_read(prot2, c, v)), weight)
                        else:
                            nxt.add((s2, prot2), weight)
                    elif action[0] == "query":
                        c = action[1]
                        values = quiescent_values(prot2)
                        if c.key() in values:
                            nxt.add((adv.on_input(c, values[c.key()], s2), prot2), weight)
                        else:
                            nxt.add((s2, prot2), weight)
                    else:
                        raise SemanticsError(f"bad adversary action {action!r}",
                                             code="adv/bad-action")
        states = nxt
    decisions = Dist()
    for (s, _), w in states.items():
        decisions.add(bool(adv.decide(s)), w)
    return decisions


def _check_channel_sets(adv: AbstractAdversary, p: Protocol):
    from .syntax import free_channels
    reads, writes = free_channels(p)
    for c in adv.query_channels:
        if c.name not in writes:
            raise SemanticsError(
                f"adversary queries {c} which is not a protocol output",
                code="adv/channel-mismatch")
    for c in adv.assign_channels:
        if c.name in writes:
            raise SemanticsError(
                f"adversary assigns {c} which the protocol outputs",
                code="adv/channel-mismatch")


def advantage(adv: AbstractAdversary, p: Protocol, q: Protocol,
              interp: Interpretation) -> Fraction:
    """|Pr[game(P) = 1] - Pr[game(Q) = 1]| as an exact rational."""
    d1 = interact(adv, p, interp)
    d2 = interact(adv, q, interp)
    p1 = d1.weights.get(True, Fraction(0))
    p2 = d2.weights.get(True, Fraction(0))
    return abs(p1 - p2)


# ---------------------------------------------------------------------------
# Table-driven adversary pools for the exact-equality oracle.


def _table_adversary(actions, decision_table, query_channels, assign_channels, name):
    rounds = len(actions)

    def transition(state):
        step = state[0]
        if step >= rounds:
            return Dist.unit((None, state))
        action = actions[step]
        if action is None:
            return Dist.unit((None, (step + 1,) + state[1:]))
        kind = action[0]
        if kind == "query":
            return Dist.unit((("query", action[1]), (step + 1,) + state[1:]))
        if kind == "assign":
            stored = (step + 1,) + state[1:] + ((action[1].key(), action[2]),)
            return Dist.unit((("assign", action[1]), stored))
        raise SemanticsError(f"bad table action {action!r}", code="adv/bad-action")

    def on_input(c, v, state):
        return state + ((("obs", c.key(), v)),)

    def output_value(c, state):
        for item in reversed(state[1:]):
            if isinstance(item, tuple) and len(item) == 2 and item[0] == c.key():
                return item[1]
        return None

    def decide(state):
        obs = tuple(item for item in state[1:]
                    if isinstance(item, tuple) and len(item) == 3 and item[0] == "obs")
        key = tuple((c, v) for _, c, v in obs)
        return decision_table.get(key, False)

    return AbstractAdversary(
        rounds=rounds,
        query_channels=tuple(query_channels),
        assign_channels=tuple(assign_channels),
        initial_state=(0,),
        transition=transition,
        on_input=on_input,
        output_value=output_value,
        decide=decide,
        name=name,
    )


def enumerate_adversaries(outputs, inputs, interp: Interpretation, budget: int,
                          cap: int = 512) -> list:
    """Deterministic pool: all action sequences up to `budget` rounds and all
    decision tables over the observations each sequence can produce.

    `outputs` / `inputs` are (Chan, DataType) pairs: the protocol outputs the
    adversary may query and the protocol inputs it may assign.
    """
    actions = [None]
    actions += [("query", c) for c, _ in outputs]
    for c, ty in inputs:
        for v in interp.values_of(ty):
            actions.append(("assign", c, v))

    pool = []
    for length in range(1, budget + 1):
        for seq in itertools.product(actions, repeat=length):
            queries = [a[1] for a in seq if a is not None and a[0] == "query"]
            # Possible observation tuples: each query either misses (absent
            # from the tuple) or yields one value of the channel's type.
            obs_space = [()]
            for c in queries:
                ty = dict((ch.key(), t) for ch, t in outputs)[c.key()]
                branches = [None] + list(interp.values_of(ty))
                obs_space = [prev + ((c.key(), v),) if v is not None else prev
                             for prev in obs_space for v in branches]
            obs_space = sorted(set(obs_space))
            if len(obs_space) > 16:
                raise SemanticsError("observation domain too large for cap",
                                     code="adv/domain-too-large")
            for bits in itertools.product((False, True), repeat=len(obs_space)):
                table = dict(zip(obs_space, bits))
                pool.append(_table_adversary(
                    seq, table, [c for c, _ in outputs], [c for c, _ in inputs],
                    name=f"adv{len(pool)}"))
                if len(pool) >= cap:
                    return pool
    return pool
