"""Binding discipline: free channels, renaming, desugaring, alpha."""

import random

import pytest

from ipdl.syntax import (
    Assign, BindR, Bool, BoolLit, Chan, ChannelRenaming, Family, New, Par,
    Read, Ret, Samp, SizeConst, SizeParam, SizeSum, TConst, Unit, UnitVal,
    Var, Zero, alpha_eq, chan, desugar_families, free_channels, par,
    rename_channels, size_eval, to_nameless,
)

UNIT = Unit()
BOOL = Bool()
MSG = TConst("msg")


def bind_read(var, src, ty, body):
    return BindR(var, ty, Read(chan(src), ty), body)


class TestFreeChannels:
    def test_zero(self):
        assert free_channels(Zero()) == (set(), set())

    def test_read_write(self):
        p = Assign(chan("o"), bind_read("x", "c", BOOL, Ret(Var("x", BOOL))))
        assert free_channels(p) == ({"c"}, {"o"})

    def test_new_hides(self):
        p = New("k", BOOL, Par(Assign(chan("k"), Samp("d", UNIT, BOOL, UnitVal())),
                               Assign(chan("o"), Read(chan("k"), BOOL))))
        assert free_channels(p) == (set(), {"o"})

    def test_family_write(self):
        fam = Family("o", "i", SizeParam("n"), Read(Chan("In", SizeParam("i")), MSG))
        assert free_channels(fam) == ({"In"}, {"o"})


class TestRenameChannels:
    def test_identity(self):
        p = Assign(chan("o"), Read(chan("c"), BOOL))
        assert rename_channels({}, p) == p

    def test_simple(self):
        p = Assign(chan("o"), Read(chan("c"), BOOL))
        q = rename_channels({"c": "d"}, p)
        assert q == Assign(chan("o"), Read(chan("d"), BOOL))

    def test_capture_avoidance(self):
        # phi maps c onto a bound name: the binder must be freshened.
        p = New("o2", BOOL, Par(Assign(chan("o2"), Read(chan("c"), BOOL)),
                                Assign(chan("out"), Read(chan("o2"), BOOL))))
        q = rename_channels({"c": "o2"}, p)
        expected = New("o3", BOOL, Par(Assign(chan("o3"), Read(chan("o2"), BOOL)),
                                       Assign(chan("out"), Read(chan("o3"), BOOL))))
        assert alpha_eq(q, expected)
        reads, writes = free_channels(q)
        assert reads == {"o2"}

    def test_inverse_roundtrip(self):
        phi = ChannelRenaming.of({"c": "d", "o": "p"})
        p = Par(Assign(chan("o"), Read(chan("c"), BOOL)),
                New("h", BOOL, Par(Assign(chan("h"), Ret(BoolLit(True))),
                                   Assign(chan("q"), Read(chan("h"), BOOL)))))
        there = rename_channels(phi, p)
        back = rename_channels(phi.inverse(), there)
        assert alpha_eq(back, p)

    def test_not_injective_rejected(self):
        with pytest.raises(Exception):
            ChannelRenaming.of({"a": "x", "b": "x"})


class TestDesugar:
    def test_singleton(self):
        fam = Family("o", "i", SizeConst(1), Ret(BoolLit(True)))
        assert desugar_families(fam, {}) == Assign(Chan("o", SizeConst(0)),
                                                   Ret(BoolLit(True)))

    def test_empty(self):
        fam = Family("o", "i", SizeConst(0), Ret(BoolLit(True)))
        assert desugar_families(fam, {}) == Zero()

    def test_three_fold_right_nested(self):
        fam = Family("o", "i", SizeParam("n"), Read(Chan("In", SizeParam("i")), MSG))
        got = desugar_families(fam, {"n": 3})
        members = [Assign(Chan("o", SizeConst(k)), Read(Chan("In", SizeConst(k)), MSG))
                   for k in range(3)]
        assert got == Par(members[0], Par(members[1], members[2]))

    def test_unbound_parameter(self):
        fam = Family("o", "i", SizeParam("n"), Ret(BoolLit(True)))
        with pytest.raises(Exception):
            desugar_families(fam, {})

    def test_commutes_with_rename(self):
        fam = Family("o", "i", SizeParam("n"), Read(Chan("In", SizeParam("i")), MSG))
        p = Par(fam, Assign(chan("x"), Read(chan("c"), BOOL)))
        phi = {"c": "c2", "In": "In2", "o": "o2", "x": "x2"}
        a = desugar_families(rename_channels(phi, p), {"n": 2})
        b = rename_channels(phi, desugar_families(p, {"n": 2}))
        assert alpha_eq(a, b)

    def test_free_channels_match_instantiation(self):
        fam = Family("o", "i", SizeParam("n"), Read(Chan("In", SizeParam("i")), MSG))
        reads, writes = free_channels(fam)
        creads, cwrites = free_channels(desugar_families(fam, {"n": 3}))
        assert reads == creads and writes == cwrites

    def test_size_arithmetic(self):
        bound = SizeSum((SizeParam("n"), SizeConst(1)))
        assert size_eval(bound, {"n": 2}) == 3
        fam = Family("o", "i", bound, Ret(BoolLit(True)))
        got = desugar_families(fam, {"n": 0})
        assert got == Assign(Chan("o", SizeConst(0)), Ret(BoolLit(True)))


class TestAlphaEq:
    def test_bound_names_irrelevant(self):
        a = New("a", UNIT, Assign(chan("a"), Ret(UnitVal())))
        b = New("b", UNIT, Assign(chan("b"), Ret(UnitVal())))
        assert alpha_eq(a, b)

    def test_different_bodies(self):
        a = Assign(chan("o"), Ret(BoolLit(True)))
        b = Assign(chan("o"), Ret(BoolLit(False)))
        assert not alpha_eq(a, b)

    def test_free_names_rigid(self):
        a = Assign(chan("o"), Read(chan("c"), BOOL))
        b = Assign(chan("o"), Read(chan("d"), BOOL))
        assert not alpha_eq(a, b)

    def test_double_binder_permutation(self):
        def proto(x, y):
            return New(x, BOOL, New(y, BOOL, par(
                Assign(chan(x), Ret(BoolLit(True))),
                Assign(chan(y), Ret(BoolLit(False))),
                Assign(chan("o"), Read(chan(x), BOOL)))))

        p = proto("a", "b")
        q = proto("c", "d")
        swapped = proto("b", "a")
        # Independent oracle: compare nameless conversions.
        assert (to_nameless(p) == to_nameless(q)) == alpha_eq(p, q)
        assert (to_nameless(p) == to_nameless(swapped)) == alpha_eq(p, swapped)
        assert alpha_eq(p, q)
        assert alpha_eq(p, swapped)
        # Swapping which binder carries `true` is a real difference.
        r = New("a", BOOL, New("b", BOOL, par(
            Assign(chan("a"), Ret(BoolLit(False))),
            Assign(chan("b"), Ret(BoolLit(True))),
            Assign(chan("o"), Read(chan("a"), BOOL)))))
        assert (to_nameless(p) == to_nameless(r)) == alpha_eq(p, r)
        assert not alpha_eq(p, r)

    def test_bind_variables(self):
        a = Assign(chan("o"), BindR("x", BOOL, Read(chan("c"), BOOL), Ret(Var("x", BOOL))))
        b = Assign(chan("o"), BindR("y", BOOL, Read(chan("c"), BOOL), Ret(Var("y", BOOL))))
        assert alpha_eq(a, b)

    def test_family_index_var(self):
        a = Family("o", "i", SizeParam("n"), Read(Chan("In", SizeParam("i")), MSG))
        b = Family("o", "j", SizeParam("n"), Read(Chan("In", SizeParam("j")), MSG))
        assert alpha_eq(a, b)

    def test_rename_then_alpha(self, ):
        rng = random.Random(7)
        for _ in range(25):
            names = [f"c{k}" for k in range(4)]
            rng.shuffle(names)
            p = par(*[Assign(chan(n), Ret(BoolLit(True))) for n in names[:2]],
                    Assign(chan("o"), Read(chan(names[0]), BOOL)))
            phi = ChannelRenaming.of({names[0]: "zz", "o": "oo"})
            q = rename_channels(phi, p)
            back = rename_channels(phi.inverse(), q)
            assert alpha_eq(p, back)
