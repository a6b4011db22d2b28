"""Proof checker and concrete security bound calculator for IPDL protocols."""

from .syntax import (
    Assign, AssignValue, BindR, Bool, BoolLit, Chan, ChannelContext,
    ChannelRenaming, Family, Fst, IfR, IpdlError, New, Pair, Par, Prod,
    Protocol, Read, Ret, Samp, Signature, SizeConst, SizeExpr, SizeParam,
    Snd, TConst, Unit, UnitVal, ValR, Var, Zero, alpha_eq, chan,
    desugar_families, free_channels, par, rename_channels,
)
from .typecheck import (
    ChanSetEntry, ProtocolType, TypeContext, chan_set, typecheck_expr,
    typecheck_protocol, typecheck_reaction,
)
from .cost import (
    CostExpr, context_norm, cost_eval, cost_normalize, encode_tape, norm,
    pretty_cost, soundness_poly,
)
from .semantics import (
    AbstractAdversary, Dist, Interpretation, advantage, big_step,
    enumerate_adversaries, eval_expr, interact, load_interpretation,
    step_protocol,
)
from .kernel import AxiomDecl, BoundLedger, check_asymptotic, concrete_bound
from .tactics import ProofState, run_script, run_tactic
from .frontend import emit_report, parse, parse_path, run_file

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
