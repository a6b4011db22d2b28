"""High-level proof steps: elaboration, determinism, trace replay."""

import pytest

from ipdl.cost import Const
from ipdl.kernel import AxiomDecl, KernelError
from ipdl.syntax import (
    App, Assign, BindR, Bool, BoolLit, Chan, ChannelContext, Family, New,
    Par, Read, Ret, Samp, Signature, SizeConst, SizeParam, Unit,
    UnitVal, Var, alpha_eq, chan, par,
)
from ipdl.tactics import (
    Absorb, Change, Fold, Induction, IntroduceInternal, ProofState,
    SymFrom, TacticError, UseApproxAssumption, UseAssumption, run_script,
    run_tactic, tactic_context_norm,
)
from ipdl.typecheck import ProtocolType, chan_set

UNIT = Unit()
BOOL = Bool()


@pytest.fixture
def sig():
    return Signature((), fun_symbols={"neg": (BOOL, BOOL)},
                     dist_symbols={"flip": (UNIT, BOOL)})


def flip():
    return Samp("flip", UNIT, BOOL, UnitVal())


def simple_state(sig, lhs, rhs, axioms=None, inputs=(), outputs=("o",),
                 delta_entries=None):
    delta = ChannelContext(delta_entries or [("o", BOOL)] + [(i, BOOL) for i in inputs])
    declared = ProtocolType.of(chan_set(*inputs), chan_set(*outputs))
    return ProofState.start(sig, delta, declared, axioms or {}, lhs, rhs)


class TestBasicTactics:
    def test_fold_then_close(self, sig):
        lhs = New("c", BOOL, Par(Assign(chan("c"), flip()),
                                 Assign(chan("o"), BindR("x", BOOL, Read(chan("c"), BOOL),
                                                         Ret(Var("x", BOOL))))))
        rhs = Assign(chan("o"), BindR("x", BOOL, flip(), Ret(Var("x", BOOL))))
        state = simple_state(sig, lhs, rhs)
        run_tactic(state, Fold("c", "o"))
        assert state.finished()
        ledger = state.finish()
        assert ledger.used() == []

    def test_absorb_missing_channel_fails(self, sig):
        lhs = Assign(chan("o"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs)
        with pytest.raises(KernelError) as err:
            run_tactic(state, Absorb("ghost"))
        assert err.value.code == "TARGET/not-found"

    def test_change_requires_equality(self, sig):
        lhs = Assign(chan("o"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs)
        with pytest.raises(KernelError) as err:
            run_tactic(state, Change("o", Ret(BoolLit(False))))
        assert err.value.code == "CHANGE/not-equal"

    def test_determinism_and_replay(self, sig):
        def build():
            lhs = New("c", BOOL, Par(Assign(chan("c"), flip()),
                                     Assign(chan("o"), BindR("x", BOOL,
                                            Read(chan("c"), BOOL), Ret(Var("x", BOOL))))))
            rhs = Assign(chan("o"), BindR("x", BOOL, flip(), Ret(Var("x", BOOL))))
            state = simple_state(sig, lhs, rhs)
            run_script(state, [Fold("c", "o")])
            return state

        one = build()
        two = build()
        assert one.left == two.left
        assert [s.line() for s in one.trace] == [s.line() for s in two.trace]
        # Replay: every link endpoint chains and the final states agree.
        for a, b in zip(one.chain(), one.chain()[1:]):
            assert alpha_eq(a.rhs, b.lhs)

    def test_sym_from_rewrites_right_stream(self, sig):
        lhs = Assign(chan("o"), BindR("x", BOOL, flip(), Ret(Var("x", BOOL))))
        rhs = New("c", BOOL, Par(Assign(chan("c"), flip()),
                                 Assign(chan("o"), BindR("x", BOOL, Read(chan("c"), BOOL),
                                                         Ret(Var("x", BOOL))))))
        state = simple_state(sig, lhs, rhs)
        run_tactic(state, SymFrom((Fold("c", "o"),)))
        assert state.finished()

    def test_introduce_internal_is_reverse_fold(self, sig):
        lhs = Assign(chan("o"), BindR("x", BOOL, flip(),
                                      Ret(App("neg", BOOL, BOOL, Var("x", BOOL)))))
        state = simple_state(sig, lhs, lhs)
        run_tactic(state, IntroduceInternal(
            "c", BOOL, None, flip(), "o",
            BindR("x", BOOL, Read(chan("c"), BOOL),
                  Ret(App("neg", BOOL, BOOL, Var("x", BOOL))))))
        assert state.left.has_binder("c")
        # Folding back recovers the start, so the proof closes.
        run_tactic(state, Fold("c", "o"))
        assert state.finished()

    def test_introduce_rejects_wrong_body(self, sig):
        lhs = Assign(chan("o"), BindR("x", BOOL, flip(), Ret(Var("x", BOOL))))
        state = simple_state(sig, lhs, lhs)
        with pytest.raises(KernelError) as err:
            run_tactic(state, IntroduceInternal(
                "c", BOOL, None, Ret(BoolLit(True)), "o",
                BindR("x", BOOL, Read(chan("c"), BOOL), Ret(Var("x", BOOL)))))
        assert err.value.code == "FOLD-BIND/not-equal"


def session_axiom():
    lhs = Assign(chan("O"), BindR("x", BOOL, Read(chan("I"), BOOL),
                                  BindR("y", BOOL, flip(), Ret(Var("y", BOOL)))))
    rhs = Assign(chan("O"), BindR("x", BOOL, Read(chan("I"), BOOL), flip()))
    return AxiomDecl("per-session", "exact",
                     (("I", BOOL, None), ("O", BOOL, None)),
                     chan_set("I"), chan_set("O"), lhs, rhs)


class TestExactAxiom:
    def test_single_channel_use(self, sig):
        ax = session_axiom()
        lhs = Assign(chan("O"), BindR("x", BOOL, Read(chan("I"), BOOL),
                                      BindR("y", BOOL, flip(), Ret(Var("y", BOOL)))))
        rhs = Assign(chan("O"), BindR("x", BOOL, Read(chan("I"), BOOL), flip()))
        state = simple_state(sig, lhs, rhs, axioms={"per-session": ax},
                             inputs=("I",), outputs=("O",),
                             delta_entries=[("O", BOOL), ("I", BOOL)])
        run_tactic(state, UseAssumption("per-session", (("O", "O"),), None))
        assert state.finished()

    def test_lhs_mismatch(self, sig):
        ax = session_axiom()
        lhs = Assign(chan("O"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs, axioms={"per-session": ax},
                             outputs=("O",), delta_entries=[("O", BOOL)])
        with pytest.raises(KernelError) as err:
            run_tactic(state, UseAssumption("per-session", (("O", "O"),), None))
        assert err.value.code == "AXIOM/lhs-mismatch"

    def test_induction_rewrites_family(self, sig):
        ax = session_axiom()
        n = SizeParam("n")
        i = SizeParam("i")
        fam_lhs = Family("O", "i", n,
                         BindR("x", BOOL, Read(Chan("I", i), BOOL),
                               BindR("y", BOOL, flip(), Ret(Var("y", BOOL)))))
        fam_rhs = Family("O", "i", n,
                         BindR("x", BOOL, Read(Chan("I", i), BOOL), flip()))
        delta = ChannelContext([("O", BOOL, n), ("I", BOOL, n)])
        declared = ProtocolType.of(chan_set(("I", n)), chan_set(("O", n)))
        state = ProofState.start(sig, delta, declared, {"per-session": ax},
                                 fam_lhs, fam_rhs)
        run_tactic(state, Induction("i", "x", (
            UseAssumption("per-session", (("O", "O"),), SizeParam("x")),)))
        assert state.finished()

    def test_indexed_use_outside_induction(self, sig):
        ax = session_axiom()
        lhs = Assign(chan("O"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs, axioms={"per-session": ax},
                             outputs=("O",), delta_entries=[("O", BOOL)])
        with pytest.raises(TacticError) as err:
            run_tactic(state, UseAssumption("per-session", (("O", "O"),),
                                            SizeParam("x")))
        assert err.value.code == "INDUCTION/out-of-range"

    def test_induction_body_index_out_of_range(self, sig):
        ax = session_axiom()
        lhs = Assign(chan("O"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs, axioms={"per-session": ax},
                             outputs=("O",), delta_entries=[("O", BOOL)])
        bad = SizeParam("x") + SizeConst(1)
        with pytest.raises(TacticError) as err:
            run_tactic(state, Induction("i", "x", (
                UseAssumption("per-session", (("O", "O"),), bad),)))
        assert err.value.code == "INDUCTION/out-of-range"

    def test_vacuous_induction(self, sig):
        lhs = Assign(chan("o"), Ret(BoolLit(True)))
        state = simple_state(sig, lhs, lhs)
        before = state.left
        run_tactic(state, Induction("i", "x", ()))
        assert state.left == before


def approx_axiom_decl():
    lhs = Assign(chan("O"), BindR("a", BOOL, Read(chan("I"), BOOL),
                 BindR("b", BOOL, flip(), Ret(Var("b", BOOL)))))
    rhs = Assign(chan("O"), BindR("a", BOOL, Read(chan("I"), BOOL),
                 Ret(BoolLit(False))))
    return AxiomDecl("blind", "approx", (("I", BOOL, None), ("O", BOOL, None)),
                     chan_set("I"), chan_set("O"), lhs, rhs)


class TestApproxTactic:
    def build_state(self, sig, extra_comp=None):
        ax = approx_axiom_decl()
        comps = [ax.lhs]
        rhs_comps = [ax.rhs]
        outputs = ["O"]
        entries = [("O", BOOL), ("I", BOOL)]
        if extra_comp is not None:
            comps.append(extra_comp)
            rhs_comps.append(extra_comp)
            outputs.append("p")
            entries.append(("p", BOOL))
        delta = ChannelContext(entries)
        declared = ProtocolType.of(chan_set("I"), chan_set(*outputs))
        return ProofState.start(sig, delta, declared, {"blind": ax},
                                par(*comps), par(*rhs_comps)), ax

    def test_top_level_zero_context(self, sig):
        state, _ = self.build_state(sig)
        run_tactic(state, UseApproxAssumption("blind"))
        ledger = state.finish()
        assert ledger.xi("blind") == 1
        assert ledger.psi("blind") == Const(0)

    def test_one_sibling_cost(self, sig):
        extra = Assign(chan("p"), BindR("v", BOOL, Read(chan("O"), BOOL),
                                        Ret(Var("v", BOOL))))
        state, _ = self.build_state(sig, extra)
        run_tactic(state, UseApproxAssumption("blind"))
        ledger = state.finish()
        # sibling norm 28 = bind(1 + read 7 + ret 9 + 6) + assign 5; plus 3.
        assert ledger.psi("blind") == Const(31)
        assert tactic_context_norm(state, "blind") == Const(31)

    def test_two_uses_sum_and_max(self, sig):
        ax = approx_axiom_decl()
        # Both streams start at the axiom's left side in context; rewriting
        # each meets in the middle, using the axiom once forward and once
        # under sym.
        lhs = par(ax.lhs, Assign(chan("p"), Ret(BoolLit(True))))
        delta = ChannelContext([("O", BOOL), ("I", BOOL), ("p", BOOL)])
        declared = ProtocolType.of(chan_set("I"), chan_set("O", "p"))
        state = ProofState.start(sig, delta, declared, {"blind": ax}, lhs, lhs)
        run_tactic(state, UseApproxAssumption("blind"))
        run_tactic(state, SymFrom((UseApproxAssumption("blind"),)))
        ledger = state.finish()
        assert ledger.xi("blind") == 2
        # Both invocations absorb the same sibling: max of equal bounds.
        assert ledger.psi("blind") == Const(14)

    def test_unknown_approx(self, sig):
        state, _ = self.build_state(sig)
        with pytest.raises(KernelError) as err:
            run_tactic(state, UseApproxAssumption("ghost"))
        assert err.value.code == "AXIOM/unknown"

    def test_exact_axiom_used_approximately(self, sig):
        ax = session_axiom()
        lhs = ax.lhs
        delta = ChannelContext([("O", BOOL), ("I", BOOL)])
        declared = ProtocolType.of(chan_set("I"), chan_set("O"))
        state = ProofState.start(sig, delta, declared, {"per-session": ax}, lhs, lhs)
        with pytest.raises(KernelError) as err:
            run_tactic(state, UseApproxAssumption("per-session"))
        assert err.value.code == "AXIOM/kind-mismatch"

    def test_lhs_not_found(self, sig):
        ax = approx_axiom_decl()
        lhs = Assign(chan("O"), Ret(BoolLit(True)))
        delta = ChannelContext([("O", BOOL)])
        declared = ProtocolType.of((), chan_set("O"))
        state = ProofState.start(sig, delta, declared, {"blind": ax}, lhs, lhs)
        with pytest.raises(TacticError) as err:
            run_tactic(state, UseApproxAssumption("blind"))
        assert err.value.code == "MATCH/lhs-not-found"
