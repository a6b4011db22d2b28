"""The conservative reaction equality checker."""

import pytest

from ipdl.rewrite import (
    RewriteError, bring_read_to_head, canonical, count_reads, inline_read,
    reaction_eq, simplify,
)
from ipdl.syntax import (
    App, BindR, Bool, BoolLit, Fst, IfR, Pair, Read, Ret, Samp, TConst,
    Unit, UnitVal, Var, chan,
)

UNIT = Unit()
BOOL = Bool()
T = TConst("t")


def rd(name, ty=BOOL):
    return Read(chan(name), ty)


class TestMonadLaws:
    def test_left_unit(self):
        r = BindR("x", BOOL, Ret(BoolLit(True)), Ret(Var("x", BOOL)))
        assert reaction_eq(r, Ret(BoolLit(True)))

    def test_right_unit(self):
        r = BindR("x", BOOL, rd("c"), Ret(Var("x", BOOL)))
        assert reaction_eq(r, rd("c"))

    def test_associativity(self):
        inner = BindR("y", BOOL, rd("c"), Ret(Var("y", BOOL)))
        left = BindR("x", BOOL, inner, Samp("flip", UNIT, BOOL, UnitVal()))
        right = BindR("y", BOOL, rd("c"),
                      BindR("x", BOOL, Ret(Var("y", BOOL)),
                            Samp("flip", UNIT, BOOL, UnitVal())))
        assert reaction_eq(left, right)

    def test_simplify_keeps_eta(self):
        # Inlining cleanups must not collapse `x <- read c; ret x` to a bare
        # read; that shape carries different cost.
        r = BindR("x", BOOL, rd("c"), Ret(Var("x", BOOL)))
        assert simplify(r) == r


class TestReductions:
    def test_if_true(self):
        r = IfR(BoolLit(True), Ret(BoolLit(False)), rd("c"))
        assert reaction_eq(r, Ret(BoolLit(False)))

    def test_proj_of_pair(self):
        e = Fst(BOOL, BOOL, Pair(BoolLit(True), BoolLit(False)))
        assert reaction_eq(Ret(e), Ret(BoolLit(True)))


class TestExchange:
    def test_independent_reads_commute(self):
        a = BindR("x", BOOL, rd("c1"), BindR("y", BOOL, rd("c2"),
                  Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        b = BindR("y", BOOL, rd("c2"), BindR("x", BOOL, rd("c1"),
                  Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        assert reaction_eq(a, b)

    def test_read_and_samp_commute(self):
        s = Samp("flip", UNIT, BOOL, UnitVal())
        a = BindR("x", BOOL, rd("c"), BindR("y", BOOL, s,
                  Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        b = BindR("y", BOOL, s, BindR("x", BOOL, rd("c"),
                  Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        assert reaction_eq(a, b)

    def test_dependent_binds_do_not_commute(self):
        a = BindR("x", BOOL, rd("c"),
            BindR("y", BOOL, Ret(App("neg", BOOL, BOOL, Var("x", BOOL))),
                   Ret(Var("y", BOOL))))
        b = BindR("x", BOOL, rd("d"),
            BindR("y", BOOL, Ret(App("neg", BOOL, BOOL, Var("x", BOOL))),
                   Ret(Var("y", BOOL))))
        assert not reaction_eq(a, b)

    def test_different_payloads_not_equal(self):
        a = Ret(BoolLit(True))
        b = Samp("flip", UNIT, BOOL, UnitVal())
        assert not reaction_eq(a, b)
        assert not reaction_eq(rd("c"), rd("d"))

    def test_duplicate_sampling_not_merged(self):
        # x <- flip; (x, x) versus x <- flip; y <- flip; (x, y): different
        # distributions, and the checker must not identify them.
        one = BindR("x", BOOL, Samp("flip", UNIT, BOOL, UnitVal()),
                    Ret(Pair(Var("x", BOOL), Var("x", BOOL))))
        two = BindR("x", BOOL, Samp("flip", UNIT, BOOL, UnitVal()),
              BindR("y", BOOL, Samp("flip", UNIT, BOOL, UnitVal()),
                    Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        assert not reaction_eq(one, two)


class TestHelpers:
    def test_count_reads(self):
        r = BindR("x", BOOL, rd("c"), BindR("y", BOOL, rd("c"), Ret(Var("x", BOOL))))
        assert count_reads(r, "c") == 2
        assert count_reads(r, "d") == 0

    def test_bring_read_to_head(self):
        r = BindR("a", BOOL, rd("first"), BindR("b", BOOL, rd("second"),
                  Ret(Pair(Var("a", BOOL), Var("b", BOOL)))))
        staged = bring_read_to_head(r, "second")
        assert isinstance(staged, BindR) and staged.rhs == rd("second")
        assert reaction_eq(staged, r)

    def test_bring_read_to_head_eta_expands_tail(self):
        staged = bring_read_to_head(rd("c"), "c")
        assert isinstance(staged, BindR) and staged.rhs == rd("c")
        assert reaction_eq(staged, rd("c"))

    def test_bring_read_fails_under_if(self):
        r = BindR("w", BOOL, rd("d"),
                  IfR(Var("w", BOOL), rd("c"), Ret(BoolLit(False))))
        with pytest.raises(RewriteError) as err:
            bring_read_to_head(r, "c")
        assert err.value.code == "rewrite/no-head-read"

    def test_inline_read(self):
        r = BindR("x", BOOL, rd("c"), Ret(Var("x", BOOL)))
        body = Samp("flip", UNIT, BOOL, UnitVal())
        got = inline_read(r, "c", body)
        assert reaction_eq(got, BindR("x", BOOL, body, Ret(Var("x", BOOL))))

    def test_canonical_deterministic(self):
        r = BindR("x", BOOL, rd("c1"), BindR("y", BOOL, rd("c2"),
                  Ret(Pair(Var("x", BOOL), Var("y", BOOL)))))
        assert canonical(r) == canonical(canonical(r))
