"""Typing judgments over expressions, reactions, and protocols."""

import pytest

from ipdl.syntax import (
    App, Assign, BindR, Bool, BoolLit, Chan, ChannelContext, Family, Fst, IfR,
    New, Pair, Par, Prod, Read, Ret, Samp, Signature, SizeConst, SizeParam,
    TConst, Unit, UnitVal, Var, Zero, alpha_eq, chan, desugar_families, par,
    rename_channels,
)
from ipdl.typecheck import (
    ProtocolType, TypeContext, TypeError_, chan_set, typecheck_expr,
    typecheck_protocol, typecheck_reaction,
)

UNIT = Unit()
BOOL = Bool()
MSG = TConst("msg")
KEY = TConst("key")
CTXT = TConst("ctxt")
N = SizeParam("n")
I = SizeParam("i")


@pytest.fixture
def sig():
    return Signature(
        ("msg", "key", "ctxt"),
        fun_symbols={"zeros": (UNIT, MSG), "dec": (Prod(CTXT, KEY), MSG)},
        dist_symbols={"gen_key": (UNIT, KEY), "enc": (Prod(MSG, KEY), CTXT)},
    )


class TestExpr:
    def test_unit(self, sig):
        assert typecheck_expr(sig, TypeContext(), UnitVal()) == UNIT

    def test_fst_of_pair(self, sig):
        e = Fst(BOOL, UNIT, Pair(BoolLit(True), UnitVal()))
        assert typecheck_expr(sig, TypeContext(), e) == BOOL

    def test_app_enc_shape(self, sig):
        gamma = TypeContext([("m", MSG), ("k", KEY)])
        e = App("dec", Prod(CTXT, KEY), MSG, Pair(Var("c", CTXT), Var("k", KEY)))
        gamma2 = TypeContext([("c", CTXT), ("k", KEY)])
        assert typecheck_expr(sig, gamma2, e) == MSG

    def test_unbound_variable(self, sig):
        with pytest.raises(TypeError_) as err:
            typecheck_expr(sig, TypeContext(), Var("x", BOOL))
        assert err.value.code == "type/unbound-var"

    def test_annotation_mismatch(self, sig):
        gamma = TypeContext([("x", BOOL)])
        with pytest.raises(TypeError_) as err:
            typecheck_expr(sig, gamma, Var("x", MSG))
        assert err.value.code == "type/annotation-mismatch"

    def test_app_outside_declared_type(self, sig):
        e = App("zeros", UNIT, KEY, UnitVal())
        with pytest.raises(TypeError_) as err:
            typecheck_expr(sig, TypeContext(), e)
        assert err.value.code == "type/annotation-mismatch"


class TestReaction:
    def test_ret_true(self, sig):
        reads, ty = typecheck_reaction(sig, [], TypeContext(), Ret(BoolLit(True)))
        assert reads == set() and ty == BOOL

    def test_read(self, sig):
        reads, ty = typecheck_reaction(sig, [("c", MSG)], TypeContext(),
                                       Read(chan("c"), MSG))
        assert reads == {("c", None)} and ty == MSG

    def test_alice_reaction(self, sig):
        r = BindR("m", MSG, Read(chan("In"), MSG),
            BindR("k", KEY, Read(chan("Key"), KEY),
            Samp("enc", Prod(MSG, KEY), CTXT, Pair(Var("m", MSG), Var("k", KEY)))))
        reads, ty = typecheck_reaction(sig, [("In", MSG), ("Key", KEY)],
                                       TypeContext(), r)
        assert {k[0] for k in reads} == {"In", "Key"} and ty == CTXT

    def test_branch_mismatch(self, sig):
        r = IfR(BoolLit(True), Ret(BoolLit(True)), Ret(UnitVal()))
        with pytest.raises(TypeError_) as err:
            typecheck_reaction(sig, [], TypeContext(), r)
        assert err.value.code == "type/branch-mismatch"

    def test_channel_not_declared(self, sig):
        with pytest.raises(TypeError_) as err:
            typecheck_reaction(sig, [], TypeContext(), Read(chan("nope"), MSG))
        assert err.value.code == "type/unknown-chan"


def secure_channel_real():
    keygen = Assign(Chan("Key"), Samp("gen_key", UNIT, KEY, UnitVal()))
    alice = Family("Send", "i", N,
            BindR("m", MSG, Read(Chan("In", I), MSG),
            BindR("k", KEY, Read(Chan("Key"), KEY),
            Samp("enc", Prod(MSG, KEY), CTXT, Pair(Var("m", MSG), Var("k", KEY))))))
    leak = Family("Leak", "i", N, Read(Chan("Send", I), CTXT))
    recv = Family("Recv", "i", N,
           BindR("c", CTXT, Read(Chan("Send", I), CTXT),
           BindR("ok", UNIT, Read(Chan("Ok", I), UNIT), Ret(Var("c", CTXT)))))
    bob = Family("Out", "i", N,
          BindR("c", CTXT, Read(Chan("Recv", I), CTXT),
          BindR("k", KEY, Read(Chan("Key"), KEY),
          Ret(App("dec", Prod(CTXT, KEY), MSG, Pair(Var("c", CTXT), Var("k", KEY)))))))
    return New("Key", KEY, New("Recv", CTXT, New("Send", CTXT,
               par(keygen, alice, leak, recv, bob), bound=N), bound=N))


def real_context():
    return ChannelContext([
        ("In", MSG, N), ("Ok", UNIT, N), ("Out", MSG, N), ("Leak", CTXT, N)])


def real_type():
    return ProtocolType.of(chan_set(("In", N), ("Ok", N)),
                           chan_set(("Out", N), ("Leak", N)))


class TestProtocol:
    def test_zero(self, sig):
        assert typecheck_protocol(sig, [], Zero(), ProtocolType.of((), ()))

    def test_forwarder(self, sig):
        p = Assign(chan("o"), Read(chan("i"), MSG))
        ctx = ChannelContext([("i", MSG), ("o", MSG)])
        assert typecheck_protocol(sig, ctx, p, ProtocolType.of(chan_set("i"), chan_set("o")))

    def test_real_protocol(self, sig):
        assert typecheck_protocol(sig, real_context(), secure_channel_real(), real_type())

    def test_io_overlap_rejected(self, sig):
        with pytest.raises(TypeError_) as err:
            ProtocolType.of(chan_set("a"), chan_set("a"))
        assert err.value.code == "type/io-overlap"

    def test_unassigned_output(self, sig):
        p = Zero()
        ctx = ChannelContext([("o", MSG)])
        with pytest.raises(TypeError_) as err:
            typecheck_protocol(sig, ctx, p, ProtocolType.of((), chan_set("o")))
        assert err.value.code == "type/output-mismatch"

    def test_duplicate_assignment(self, sig):
        p = Par(Assign(chan("o"), Ret(BoolLit(True))),
                Assign(chan("o"), Ret(BoolLit(False))))
        ctx = ChannelContext([("o", BOOL)])
        with pytest.raises(TypeError_) as err:
            typecheck_protocol(sig, ctx, p, ProtocolType.of((), chan_set("o")))
        assert err.value.code == "type/duplicate-assignment"

    def test_read_of_undeclared(self, sig):
        p = Assign(chan("o"), Read(chan("ghost"), MSG))
        ctx = ChannelContext([("o", MSG), ("ghost", MSG)])
        with pytest.raises(TypeError_) as err:
            typecheck_protocol(sig, ctx, p, ProtocolType.of((), chan_set("o")))
        assert err.value.code == "type/read-not-visible"

    def test_new_channel_must_be_assigned(self, sig):
        p = New("c", BOOL, Assign(chan("o"), Read(chan("c"), BOOL)))
        ctx = ChannelContext([("o", BOOL)])
        with pytest.raises(TypeError_) as err:
            typecheck_protocol(sig, ctx, p, ProtocolType.of((), chan_set("o")))
        assert err.value.code == "type/unassigned-new"

    def test_cross_index_read_rejected(self, sig):
        fam = Family("o", "i", N, Read(Chan("In", I + SizeConst(1)), MSG))
        ctx = ChannelContext([("In", MSG, N), ("o", MSG, N)])
        with pytest.raises(TypeError_) as err:
            typecheck_protocol(sig, ctx, fam,
                               ProtocolType.of(chan_set(("In", N)), chan_set(("o", N))))
        assert err.value.code == "type/index-arith"

    def test_stable_under_alpha(self, sig):
        p = secure_channel_real()
        q = rename_channels({}, p)  # structural copy
        assert alpha_eq(p, q)
        assert typecheck_protocol(sig, real_context(), q, real_type())

    def test_stable_under_renaming(self, sig):
        p = secure_channel_real()
        phi = {"In": "Input", "Ok": "Approve", "Out": "Output", "Leak": "Spy"}
        q = rename_channels(phi, p)
        ctx = ChannelContext([
            ("Input", MSG, N), ("Approve", UNIT, N), ("Output", MSG, N), ("Spy", CTXT, N)])
        pt = ProtocolType.of(chan_set(("Input", N), ("Approve", N)),
                             chan_set(("Output", N), ("Spy", N)))
        assert typecheck_protocol(sig, ctx, q, pt)

    @pytest.mark.parametrize("k", [0, 1, 2, 3, 4])
    def test_symbolic_iff_desugared(self, sig, k):
        p = secure_channel_real()
        conc = desugar_families(p, {"n": k})
        ctx = ChannelContext([
            ("In", MSG, SizeConst(k)), ("Ok", UNIT, SizeConst(k)),
            ("Out", MSG, SizeConst(k)), ("Leak", CTXT, SizeConst(k))])
        pt = ProtocolType.of(chan_set(("In", SizeConst(k)), ("Ok", SizeConst(k))),
                             chan_set(("Out", SizeConst(k)), ("Leak", SizeConst(k))))
        assert typecheck_protocol(sig, ctx, conc, pt)
