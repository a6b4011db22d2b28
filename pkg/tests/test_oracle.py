"""Cross-module audit: every exact segment of a checked proof is perfectly
indistinguishable at a toy interpretation, and the checked approximate step
behaves like the axiom it invokes."""

from pathlib import Path

from ipdl.frontend import parse_path, run_proof
from ipdl.oracle import audit_exact_segments, interface_channels
from ipdl.semantics import advantage, big_step, enumerate_adversaries, load_interpretation
from ipdl.syntax import desugar_families

CASES = Path(__file__).resolve().parent.parent / "case_studies"


def checked_state(path):
    source = parse_path(path)
    result = run_proof(source, source.proofs[0])
    assert result.ok
    return result.state


class TestCoinFlipOracle:
    def test_whole_proof_advantage_zero(self):
        state = checked_state(CASES / "coin_flip.ipdl")
        interp = load_interpretation(CASES / "bool_world.json")
        report = audit_exact_segments(state, interp, {})
        assert report.failures == 0
        assert len(report.lines) >= 1


class TestSecureChannelOracle:
    def test_exact_segments_advantage_zero(self):
        state = checked_state(CASES / "secure_channel.ipdl")
        interp = load_interpretation(CASES / "xor_world.json")
        report = audit_exact_segments(state, interp, {"n": 1}, budget=2, cap=24)
        # One approximate link splits the chain into two exact segments.
        assert len(report.lines) == 2
        assert report.failures == 0

    def test_cpa_step_matches_axiom_behavior(self):
        # The toy encryption is a one-time pad, for which the CPA axiom holds
        # perfectly, so even the approximate link has advantage zero here.
        state = checked_state(CASES / "secure_channel.ipdl")
        interp = load_interpretation(CASES / "xor_world.json")
        env = {"n": 1}
        inputs, outputs = interface_channels(state.delta, state.declared, env)
        pool = enumerate_adversaries(outputs, inputs, interp, budget=2, cap=16)
        lhs = desugar_families(state.chain()[0].lhs, env)
        rhs = desugar_families(state.chain()[-1].rhs, env)
        for adv in pool:
            assert advantage(adv, lhs, rhs, interp) == 0

    def test_strategy_audit_on_endpoints(self):
        state = checked_state(CASES / "secure_channel.ipdl")
        interp = load_interpretation(CASES / "xor_world.json")
        for side in ("left", "right"):
            p = desugar_families(state.current(side).to_protocol(), {"n": 1})
            assert big_step(interp, p, "leftmost") == big_step(interp, p, "rightmost")
