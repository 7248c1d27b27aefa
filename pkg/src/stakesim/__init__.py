"""stakesim: cryptoeconomic safety of hybrid on/off-chain transactions.

Models a proof-of-stake chain whose transactors may act on finalized but not
yet irreversible blocks, the slashing that punishes equivocating validators,
an attack-insurance market funded by earmarked stake, and the profit/cost
accounting that decides whether corrupting the validator set can ever pay.
"""

from __future__ import annotations

from .chain import (
    ChainTimeline,
    ConfirmationRule,
    EconParams,
    ForkRevealEvent,
    GammaFilter,
    TimingParams,
    TransactionRecord,
    TxKind,
    ValidatorState,
    build_timeline,
    epoch_bounds,
    epoch_of,
    gamma_set,
    gamma_value,
)
from .confirmation import (
    ConfirmationDecision,
    DecisionStatus,
    contests,
    decide_bridge,
    decide_bridge_naive,
    decide_secure,
)
from .econ import (
    AttackOutcome,
    Mechanism,
    PfcBound,
    PfcKind,
    SafetyVerdict,
    ValidatorChoice,
    bribe_is_dominant,
    cost_of_corruption,
    payoff,
    pfc_ladder,
    safety_verdict,
    token_toxicity_bribe_outlay,
    window_sup,
)
from .engine import SimTrace, TraceRecord, run, sweep
from .errors import (
    InvariantBreachError,
    InvariantViolationError,
    ScenarioError,
    StakesimError,
)
from .insurance import (
    PURCHASE_LEAD_EPOCHS,
    RELEASE_LAG_EPOCHS,
    Claim,
    HarmedExecution,
    InsuranceBid,
    InsuranceLedger,
    InsuranceLot,
    KarmaEntry,
    KarmaSummary,
    LotState,
    RevertedExecution,
    SettlementRecord,
    coverage_check,
    karma_report,
    purchase_window_check,
    release_lots,
    run_auction,
    settle_slash,
)
from .policies import AdversaryStrategy, PolicyKind, StrategyKind, default_rule
from .rational import as_fraction, frac_decimal, frac_str
from .report import ReportDocument, build_report, recompute_from_trace, render_text
from .resolution import (
    SLASHABLE_CLASSES,
    ResolutionOutcome,
    RevealClass,
    classify_reveal,
    resolve,
)
from .scenario import (
    ForkEventMeta,
    Scenario,
    canonical_json,
    load_scenario,
    parse_scenario,
    scenario_hash,
    scenario_to_doc,
)
from .version import SCHEMA_VERSION, __version__

__all__ = [
    "AdversaryStrategy",
    "AttackOutcome",
    "ChainTimeline",
    "Claim",
    "ConfirmationDecision",
    "ConfirmationRule",
    "DecisionStatus",
    "EconParams",
    "ForkEventMeta",
    "ForkRevealEvent",
    "GammaFilter",
    "HarmedExecution",
    "InsuranceBid",
    "InsuranceLedger",
    "InsuranceLot",
    "InvariantBreachError",
    "InvariantViolationError",
    "KarmaEntry",
    "KarmaSummary",
    "LotState",
    "Mechanism",
    "PfcBound",
    "PfcKind",
    "ReportDocument",
    "ResolutionOutcome",
    "RevealClass",
    "SLASHABLE_CLASSES",
    "SCHEMA_VERSION",
    "SafetyVerdict",
    "Scenario",
    "ScenarioError",
    "PURCHASE_LEAD_EPOCHS",
    "RELEASE_LAG_EPOCHS",
    "RevertedExecution",
    "SettlementRecord",
    "SimTrace",
    "StakesimError",
    "TimingParams",
    "TraceRecord",
    "TransactionRecord",
    "TxKind",
    "ValidatorChoice",
    "ValidatorState",
    "as_fraction",
    "bribe_is_dominant",
    "build_report",
    "build_timeline",
    "canonical_json",
    "classify_reveal",
    "cost_of_corruption",
    "coverage_check",
    "decide_bridge",
    "decide_bridge_naive",
    "contests",
    "decide_secure",
    "default_rule",
    "epoch_bounds",
    "epoch_of",
    "frac_decimal",
    "frac_str",
    "gamma_set",
    "gamma_value",
    "karma_report",
    "load_scenario",
    "parse_scenario",
    "payoff",
    "pfc_ladder",
    "purchase_window_check",
    "recompute_from_trace",
    "release_lots",
    "render_text",
    "resolve",
    "run",
    "run_auction",
    "safety_verdict",
    "scenario_hash",
    "scenario_to_doc",
    "settle_slash",
    "sweep",
    "token_toxicity_bribe_outlay",
    "window_sup",
    "__version__",
]
