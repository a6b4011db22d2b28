import random
from fractions import Fraction

import pytest

from ipdl.syntax import (
    App, Assign, BindR, Bool, BoolLit, Fst, IfR, New, Pair, Par, Prod,
    Read, Ret, Samp, Signature, Snd, TConst, Unit, UnitVal, Var, chan,
)
from ipdl.semantics import Dist, Interpretation

BIT = TConst("bit")
UNIT = Unit()
BOOL = Bool()


@pytest.fixture
def bit_sig():
    return Signature(
        ("bit",),
        fun_symbols={
            "xor": (Prod(BOOL, BOOL), BOOL),
            "neg": (BOOL, BOOL),
            "id_bit": (BIT, BIT),
        },
        dist_symbols={"flip": (UNIT, BOOL), "pick_bit": (UNIT, BIT)},
    )


@pytest.fixture
def bit_interp():
    half = Fraction(1, 2)
    return Interpretation(
        sizes={"bit": 1},
        type_values={"bit": ("0", "1")},
        functions={
            "xor": {"00": "0", "01": "1", "10": "1", "11": "0"},
            "neg": {"0": "1", "1": "0"},
            "id_bit": {"0": "0", "1": "1"},
        },
        distributions={
            "flip": {"": Dist({"0": half, "1": half})},
            "pick_bit": {"": Dist({"0": half, "1": half})},
        },
    )


def flip_assign(name="o"):
    return Assign(chan(name), Samp("flip", UNIT, BOOL, UnitVal()))


def ret_true(name="o"):
    return Assign(chan(name), Ret(BoolLit(True)))


# ---------------------------------------------------------------------------
# Random well-typed concrete protocols for the encode/norm agreement checks.


class ProtocolGen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.type_symbols = ("t0", "t1", "t2")
        base = [Unit(), Bool()] + [TConst(n) for n in self.type_symbols]
        self.base_types = base
        self.fun_symbols = {}
        self.dist_symbols = {}
        for name in self.type_symbols:
            self.fun_symbols[f"mk_{name}"] = (Unit(), TConst(name))
        for k in range(3):
            self.fun_symbols[f"f{k}"] = (rng.choice(base), rng.choice(base))
        for k in range(2):
            self.dist_symbols[f"d{k}"] = (rng.choice(base), rng.choice(base))

    @property
    def sig(self):
        return Signature(self.type_symbols, dict(self.fun_symbols),
                         dict(self.dist_symbols))

    def random_type(self, depth=1):
        if depth > 0 and self.rng.random() < 0.25:
            return Prod(self.random_type(depth - 1), self.random_type(depth - 1))
        return self.rng.choice(self.base_types)

    def ground(self, ty):
        match ty:
            case Unit():
                return UnitVal()
            case Bool():
                return BoolLit(self.rng.random() < 0.5)
            case Prod(a, b):
                return Pair(self.ground(a), self.ground(b))
            case TConst(name):
                a, r = self.fun_symbols[f"mk_{name}"]
                return App(f"mk_{name}", a, r, UnitVal())

    def random_expr(self, ty, scope, depth):
        rng = self.rng
        options = ["ground"]
        names = [n for n, t in scope.items() if t == ty]
        if names:
            options += ["var", "var"]
        if depth > 0:
            options += [n for n, (a, r) in self.fun_symbols.items() if r == ty]
            options.append("proj")
            if isinstance(ty, Prod):
                options.append("pair")
        pick = rng.choice(options)
        if pick == "ground":
            return self.ground(ty)
        if pick == "var":
            return Var(rng.choice(names), ty)
        if pick == "pair":
            return Pair(self.random_expr(ty.left, scope, depth - 1),
                        self.random_expr(ty.right, scope, depth - 1))
        if pick == "proj":
            other = rng.choice(self.base_types)
            if rng.random() < 0.5:
                return Fst(ty, other, self.random_expr(Prod(ty, other), scope, depth - 1))
            return Snd(other, ty, self.random_expr(Prod(other, ty), scope, depth - 1))
        a, r = self.fun_symbols[pick]
        return App(pick, a, r, self.random_expr(a, scope, depth - 1))

    def random_reaction(self, ty, chans, scope, depth):
        rng = self.rng
        readable = [(c, t) for c, t in chans if t == ty]
        options = ["ret"]
        if readable:
            options += ["read", "read"]
        if depth > 0:
            options += ["bind", "bind", "if"]
            options += [n for n, (a, r) in self.dist_symbols.items() if r == ty]
        pick = rng.choice(options)
        if pick == "ret":
            return Ret(self.random_expr(ty, scope, min(depth, 2)))
        if pick == "read":
            c, t = rng.choice(readable)
            return Read(c, t)
        if pick == "if":
            return IfR(self.random_expr(Bool(), scope, 1),
                       self.random_reaction(ty, chans, scope, depth - 1),
                       self.random_reaction(ty, chans, scope, depth - 1))
        if pick == "bind":
            var_ty = self.random_type(1)
            var = f"v{rng.randrange(10**6)}"
            rhs = self.random_reaction(var_ty, chans, scope, depth - 1)
            inner = dict(scope)
            inner[var] = var_ty
            return BindR(var, var_ty, rhs, self.random_reaction(ty, chans, inner, depth - 1))
        a, r = self.dist_symbols[pick]
        return Samp(pick, a, r, self.random_expr(a, scope, 1))

    def random_protocol(self, max_channels=6, depth=6):
        rng = self.rng
        n_out = rng.randint(1, max_channels - 1)
        n_in = rng.randint(0, max_channels - n_out)
        inputs = [(chan(f"in{k}"), self.random_type(1)) for k in range(n_in)]
        outputs = [(chan(f"out{k}"), self.random_type(1)) for k in range(n_out)]
        comps = []
        visible = list(inputs)
        for c, ty in outputs:
            comps.append(Assign(c, self.random_reaction(ty, visible, {}, depth)))
            visible.append((c, ty))
        p = comps[-1]
        for comp in reversed(comps[:-1]):
            p = Par(comp, p)
        if rng.random() < 0.5:
            name, ty = outputs[-1]
            p = New(name.name, ty, p)
            outputs = outputs[:-1]
        return p, inputs, outputs

    def random_sizes(self):
        return {name: self.rng.randint(0, 8) for name in self.type_symbols}
