"""Corruption economics: attack-game payoffs, cost and profit bounds.

The attack game is played by one validator choosing to stay honest or take
the adversary's bribe, against two outcomes (attack fails / succeeds):

    token toxicity            honest      bribed
        attack fails          S + R       S + B1
        attack succeeds       0           B2

    slashing (text)           honest      bribed
        attack fails          S + R       B1
        attack succeeds       S           B2

Token toxicity prices a successful attack at a collapsed token (the honest
column loses everything); slashing burns the bribed validator's stake even
when the attack fails. The slashing table has a variant reading in which the
failed bribed validator keeps its stake (S + B1); it is available behind
matrix="table" but the text reading above is the default.

Cost of corruption and profit from corruption are both exact rationals.
Corruption profit is bounded by what fits inside one reversion window, with
progressively tighter transaction filters; see `pfc_ladder`.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Optional

from .chain import (
    ChainTimeline,
    ConfirmationRule,
    EconParams,
    GammaFilter,
    Tick,
    TimingParams,
    TxKind,
    epoch_of,
    gamma_set,
    gamma_value,
)
from .errors import EmptyIntervalError, LedgerMismatchError
from .insurance import InsuranceLedger, coverage_check


class Mechanism(str, Enum):
    TOKEN_TOXICITY = "token_toxicity"
    SLASHING = "slashing"


class ValidatorChoice(str, Enum):
    HONEST = "honest"
    BRIBED = "bribed"


class AttackOutcome(str, Enum):
    FAILED = "failed"
    SUCCEEDED = "succeeded"


def payoff(
    mech: Mechanism,
    choice: ValidatorChoice,
    outcome: AttackOutcome,
    ep: EconParams,
    *,
    matrix: str = "text",
) -> Fraction:
    """One cell of the attack-game payoff matrix."""
    if matrix not in ("text", "table"):
        raise ValueError(f"matrix must be 'text' or 'table', got {matrix!r}")
    s, r = ep.stake_per_validator, ep.reward
    b1, b2 = ep.bribe_fail, ep.bribe_success
    if mech is Mechanism.TOKEN_TOXICITY:
        if choice is ValidatorChoice.HONEST:
            return s + r if outcome is AttackOutcome.FAILED else Fraction(0)
        return s + b1 if outcome is AttackOutcome.FAILED else b2
    if choice is ValidatorChoice.HONEST:
        return s + r if outcome is AttackOutcome.FAILED else s
    if outcome is AttackOutcome.FAILED:
        return s + b1 if matrix == "table" else b1
    return b2


def bribe_is_dominant(mech: Mechanism, ep: EconParams, *, matrix: str = "text") -> bool:
    """True iff taking the bribe strictly beats honesty in both outcomes."""
    return all(
        payoff(mech, ValidatorChoice.BRIBED, o, ep, matrix=matrix)
        > payoff(mech, ValidatorChoice.HONEST, o, ep, matrix=matrix)
        for o in AttackOutcome
    )


def cost_of_corruption(mech: Mechanism, ep: EconParams) -> Fraction:
    """What an attack destroys for the adversary, per mechanism.

    Token toxicity costs nothing in the limit: bribes of B1 > R and any
    B2 > 0 make bribery dominant, and the success bribe needs only be an
    epsilon since bribed validators are never slashed. Slashing destroys the
    equivocation threshold's worth of stake.
    """
    if mech is Mechanism.TOKEN_TOXICITY:
        return Fraction(0)
    return ep.adversary_threshold * ep.s_tot


def token_toxicity_bribe_outlay(ep: EconParams) -> Fraction:
    """Pre-limit diagnostic: total success bribes, (N/3) * B2."""
    return Fraction(ep.n_validators, 3) * ep.bribe_success


class PfcKind(str, Enum):
    """The bound ladder, loosest to tightest.

    STEAL_TVL: everything of value on the chain is up for grabs.
    REORG_WINDOW: at most one reversion window's flow can be double-spent.
    REORG_HYBRID_WINDOW: only flow with an off-chain leg is irreversible.
    REORG_HYBRID_SECURE_RULE: flow waiting out the reversion window drops out.
    UNINSURED_LOAD: insured flow is made whole from slashed stake, so only
        uninsured immediate flow remains at risk.
    """

    STEAL_TVL = "steal_tvl"
    REORG_WINDOW = "reorg_window"
    REORG_HYBRID_WINDOW = "reorg_hybrid_window"
    REORG_HYBRID_SECURE_RULE = "reorg_hybrid_secure_rule"
    UNINSURED_LOAD = "uninsured_load"


_KIND_FILTER = {
    PfcKind.REORG_WINDOW: GammaFilter.ALL,
    PfcKind.REORG_HYBRID_WINDOW: GammaFilter.HYBRID_ONLY,
    PfcKind.REORG_HYBRID_SECURE_RULE: GammaFilter.HYBRID_NOT_SECURE,
    PfcKind.UNINSURED_LOAD: GammaFilter.UNINSURED,
}


@dataclass(frozen=True)
class PfcBound:
    kind: PfcKind
    value: Fraction
    witness_window_start: Optional[Tick] = None


def window_sup(
    timeline: ChainTimeline,
    t_rev: int,
    selector: GammaFilter = GammaFilter.ALL,
) -> PfcBound:
    """Largest filtered value inside any window [t, t + t_rev).

    Candidate starts {0} union {finalized_at of each record} suffice: a
    maximizing window shifted right until its earliest record sits at the
    start keeps every record it had. The witness is the smallest maximizing
    candidate; an empty selection has value 0 and no witness.
    """
    if t_rev < 1:
        raise EmptyIntervalError(f"window length must be >= 1, got {t_rev}")
    kind = next((k for k, f in _KIND_FILTER.items() if f is selector), PfcKind.REORG_WINDOW)
    starts = sorted({0} | {tx.finalized_at for tx in timeline.transactions})
    best = Fraction(0)
    witness: Optional[Tick] = None
    for t in starts:
        total = gamma_value(timeline, t, t + t_rev, selector)
        if total > best:
            best, witness = total, t
    return PfcBound(kind=kind, value=best, witness_window_start=witness)


def pfc_ladder(timeline: ChainTimeline, tp: TimingParams, ep: EconParams) -> tuple[PfcBound, ...]:
    """All five bounds, loosest to tightest; the window bounds never increase."""
    ladder = [PfcBound(kind=PfcKind.STEAL_TVL, value=ep.tvl, witness_window_start=None)]
    for kind, selector in _KIND_FILTER.items():
        bound = window_sup(timeline, tp.t_rev, selector)
        ladder.append(PfcBound(kind=kind, value=bound.value, witness_window_start=bound.witness_window_start))
    return tuple(ladder)


@dataclass(frozen=True)
class SafetyVerdict:
    """Safety of one timeline against one profit bound.

    cryptoeconomically_safe: destroying the attack costs strictly more than
        the bound says it can yield.
    strong_safety: additionally, no honest transactor can end up net losing
        funds: every hybrid transaction either waits out the reversion
        window or is covered by verified insurance, and the burn share of a
        maximal slash strictly exceeds the worst uninsured load.
    """

    bound_kind: PfcKind
    coc: Fraction
    pfc: PfcBound
    cryptoeconomically_safe: bool
    strong_safety: bool
    uninsured_buffer_ok: bool

    def __post_init__(self):
        if self.cryptoeconomically_safe != (self.coc > self.pfc.value):
            raise LedgerMismatchError("verdict flag contradicts its own numbers")


def _insured_groups(timeline: ChainTimeline, t_rev: int):
    groups: dict[tuple[str, int], list] = {}
    for tx in timeline.transactions:
        if tx.kind is TxKind.HYBRID and tx.rule is ConfirmationRule.INSURED_IMMEDIATE:
            groups.setdefault((tx.transactor, epoch_of(tx.finalized_at, t_rev)), []).append(tx)
    return groups


def safety_verdict(
    timeline: ChainTimeline,
    tp: TimingParams,
    ep: EconParams,
    ledger: Optional[InsuranceLedger],
    bound_kind: PfcKind,
) -> SafetyVerdict:
    """Judge one timeline against the chosen profit bound.

    Raises LedgerMismatchError if the ledger was built for a different
    timeline or does not know a transactor the timeline insures.
    """
    ladder = {b.kind: b for b in pfc_ladder(timeline, tp, ep)}
    bound = ladder[bound_kind]
    coc = cost_of_corruption(Mechanism.SLASHING, ep)

    groups = _insured_groups(timeline, tp.t_rev)
    if ledger is not None:
        if ledger.timeline != timeline:
            raise LedgerMismatchError("ledger belongs to a different timeline")
        unknown = sorted({tr for tr, _ in groups} - ledger.transactors)
        if unknown:
            raise LedgerMismatchError(f"ledger does not know insured transactors {unknown}")
        last_epoch = epoch_of(timeline.horizon, tp.t_rev)
        bad_epochs = sorted(e for _, e in groups if e > last_epoch)
        if bad_epochs:
            raise LedgerMismatchError(f"insured epochs beyond horizon: {bad_epochs}")

    # burn share of a maximal slash must strictly cover the uninsured load
    uninsured_buffer_ok = (1 - ep.gamma) * coc > ladder[PfcKind.UNINSURED_LOAD].value

    strong = uninsured_buffer_ok
    for tx in timeline.transactions:
        if tx.kind is not TxKind.HYBRID or tx.rule in (
            ConfirmationRule.SECURE_RULE,
            ConfirmationRule.BRIDGE_RULE,
        ):
            continue
        if tx.rule is ConfirmationRule.IMMEDIATE:
            strong = False
            break
    if strong:
        for (tr, e), txs in sorted(groups.items()):
            if ledger is None or not coverage_check(tr, e, txs, ledger):
                strong = False
                break

    return SafetyVerdict(
        bound_kind=bound_kind,
        coc=coc,
        pfc=bound,
        cryptoeconomically_safe=coc > bound.value,
        strong_safety=strong,
        uninsured_buffer_ok=uninsured_buffer_ok,
    )
