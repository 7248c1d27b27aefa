"""Core chain-state types and the event timeline every other module reads.

Conventions used throughout the package:

* Time is a discrete integer tick; all windows are half-open [t0, t1).
* Monetary quantities (stake, transaction value, bribes, TVL) are exact
  rationals; see `rational.as_fraction`.
* Types are immutable after construction. Shared freely across analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .errors import (
    DuplicateIdError,
    EmptyIntervalError,
    InvariantViolationError,
    TimestampOutOfRangeError,
)
from .rational import as_fraction

Tick = int
EpochIndex = int

# Hard ceiling on timeline length; anything larger is a scenario bug.
MAX_HORIZON: Tick = 2**32


def epoch_of(tick: Tick, t_rev: int) -> EpochIndex:
    """Epoch index covering `tick`; epoch e spans [e*t_rev, (e+1)*t_rev)."""
    return tick // t_rev


def epoch_bounds(epoch: EpochIndex, t_rev: int) -> tuple[Tick, Tick]:
    return epoch * t_rev, (epoch + 1) * t_rev


@dataclass(frozen=True)
class TimingParams:
    """Protocol timing constants, all in ticks.

    t_fin: finality latency of a single block.
    t_rev: reversion period; also the insurance epoch length.
    t_ws:  weak-subjectivity horizon.
    t_cr:  maximum censorship delay for cross-chain header posts.
    slash_delay: ticks between a reveal and the slashing stake snapshot.
    """

    t_fin: int
    t_rev: int
    t_ws: int
    t_cr: int = 0
    slash_delay: int = 0

    def __post_init__(self):
        if self.t_fin < 1:
            raise InvariantViolationError(f"t_fin must be >= 1, got {self.t_fin}")
        if self.t_rev < 1:
            raise InvariantViolationError(f"t_rev must be >= 1, got {self.t_rev}")
        if self.t_cr < 0:
            raise InvariantViolationError(f"t_cr must be >= 0, got {self.t_cr}")
        if self.slash_delay < 0:
            raise InvariantViolationError(f"slash_delay must be >= 0, got {self.slash_delay}")
        if self.t_fin + self.t_rev > self.t_ws:
            raise InvariantViolationError(
                f"t_fin + t_rev must be <= t_ws, got {self.t_fin} + {self.t_rev} > {self.t_ws}"
            )


@dataclass(frozen=True)
class EconParams:
    """Economic constants of one analysis.

    stake_per_validator and n_validators describe the nominal validator set;
    reward is the per-validator honest payoff R for the attack game, and
    bribe_fail / bribe_success are the adversary's B1 / B2 offers.
    gamma is the slashed-stake share routed to insurance payouts (the
    remainder burns). adversary_threshold is the equivocation threshold and
    is fixed at 1/3 of total stake.
    """

    stake_per_validator: Fraction
    n_validators: int
    reward: Fraction = Fraction(0)
    bribe_fail: Fraction = Fraction(0)
    bribe_success: Fraction = Fraction(0)
    gamma: Fraction = Fraction(0)
    tvl: Fraction = Fraction(0)

    adversary_threshold = Fraction(1, 3)

    def __post_init__(self):
        for name in ("stake_per_validator", "reward", "bribe_fail", "bribe_success", "gamma", "tvl"):
            object.__setattr__(self, name, as_fraction(getattr(self, name)))
        if self.stake_per_validator <= 0:
            raise InvariantViolationError("stake_per_validator must be > 0")
        if self.n_validators < 1:
            raise InvariantViolationError("n_validators must be >= 1")
        if not 0 <= self.gamma <= 1:
            raise InvariantViolationError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("reward", "bribe_fail", "bribe_success", "tvl"):
            if getattr(self, name) < 0:
                raise InvariantViolationError(f"{name} must be >= 0")

    @property
    def s_tot(self) -> Fraction:
        """Total nominal stake securing the chain."""
        return self.stake_per_validator * self.n_validators


class TxKind(str, Enum):
    PURE = "pure"
    HYBRID = "hybrid"


class ConfirmationRule(str, Enum):
    """How a transactor treats a finalized transaction off-chain.

    IMMEDIATE: act as soon as the transaction finalizes (no protection).
    SECURE_RULE: wait out one full reversion period with no conflicting fork.
    BRIDGE_RULE: cross-chain variant; wait t_rev + t_cr past the header post.
    INSURED_IMMEDIATE: act immediately, backed by purchased insurance.
    """

    IMMEDIATE = "immediate"
    SECURE_RULE = "secure"
    BRIDGE_RULE = "bridge"
    INSURED_IMMEDIATE = "insured_immediate"


@dataclass(frozen=True)
class TransactionRecord:
    """One finalized transaction as seen by the settlement layer.

    Pure transactions have no off-chain leg: their rule is normalized to
    IMMEDIATE and any off-chain execution tick is dropped. Hybrid
    transactions trigger an irreversible off-chain action whose timing is
    governed by `rule`.
    """

    id: str
    transactor: str
    value: Fraction
    kind: TxKind
    finalized_at: Tick
    rule: ConfirmationRule = ConfirmationRule.IMMEDIATE
    offchain_executed_at: Optional[Tick] = None
    insured_epoch: Optional[EpochIndex] = None

    def __post_init__(self):
        object.__setattr__(self, "value", as_fraction(self.value))
        object.__setattr__(self, "kind", TxKind(self.kind))
        object.__setattr__(self, "rule", ConfirmationRule(self.rule))
        if self.value < 0:
            raise InvariantViolationError(f"transaction {self.id!r}: value must be >= 0")
        if self.finalized_at < 0:
            raise TimestampOutOfRangeError(f"transaction {self.id!r}: finalized_at < 0")
        if self.kind is TxKind.PURE:
            # no off-chain leg: rule is irrelevant, normalize
            object.__setattr__(self, "rule", ConfirmationRule.IMMEDIATE)
            object.__setattr__(self, "offchain_executed_at", None)
            object.__setattr__(self, "insured_epoch", None)
            return
        if self.offchain_executed_at is not None and self.offchain_executed_at < self.finalized_at:
            raise InvariantViolationError(
                f"transaction {self.id!r}: offchain_executed_at precedes finalized_at"
            )
        if self.rule is ConfirmationRule.INSURED_IMMEDIATE and self.insured_epoch is None:
            raise InvariantViolationError(
                f"transaction {self.id!r}: insured_immediate requires insured_epoch"
            )


@dataclass(frozen=True)
class ValidatorState:
    """One validator's stake position.

    exit_tick is None while staked; an exited validator cannot be slashed at
    or after exit_tick. earmarked_fraction is the share of its stake pledged
    as insurance backing.
    """

    id: str
    stake: Fraction
    earmarked_fraction: Fraction = Fraction(0)
    exit_tick: Optional[Tick] = None

    def __post_init__(self):
        object.__setattr__(self, "stake", as_fraction(self.stake))
        object.__setattr__(self, "earmarked_fraction", as_fraction(self.earmarked_fraction))
        if self.stake <= 0:
            raise InvariantViolationError(f"validator {self.id!r}: stake must be > 0")
        if not 0 <= self.earmarked_fraction <= 1:
            raise InvariantViolationError(
                f"validator {self.id!r}: earmarked_fraction must lie in [0, 1]"
            )
        if self.exit_tick is not None and self.exit_tick < 0:
            raise TimestampOutOfRangeError(f"validator {self.id!r}: exit_tick < 0")

    def active_at(self, tick: Tick) -> bool:
        return self.exit_tick is None or tick < self.exit_tick


@dataclass(frozen=True)
class ForkRevealEvent:
    """A competing fork becoming visible to observers.

    diverges_from_block_finalized_at is the finalization tick of the common
    ancestor block (the fork builds on that block; everything strictly after
    it is contested). double_signer_stake is the summed stake of the signers
    and is cross-checked against the validator set by build_timeline.
    """

    id: str
    diverges_from_block_finalized_at: Tick
    revealed_at: Tick
    double_signers: frozenset[str] = frozenset()
    double_signer_stake: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "double_signers", frozenset(self.double_signers))
        object.__setattr__(self, "double_signer_stake", as_fraction(self.double_signer_stake))
        if self.diverges_from_block_finalized_at < 0:
            raise TimestampOutOfRangeError(f"fork event {self.id!r}: divergence tick < 0")
        if self.revealed_at < self.diverges_from_block_finalized_at:
            raise InvariantViolationError(
                f"fork event {self.id!r}: revealed_at precedes the divergence tick"
            )
        if self.double_signer_stake < 0:
            raise InvariantViolationError(f"fork event {self.id!r}: negative signer stake")


@dataclass(frozen=True)
class ChainTimeline:
    """Immutable, horizon-bounded record of everything one run observed."""

    horizon: Tick
    transactions: tuple[TransactionRecord, ...] = ()
    fork_events: tuple[ForkRevealEvent, ...] = ()
    validators: tuple[ValidatorState, ...] = ()

    def validators_by_id(self) -> dict[str, ValidatorState]:
        return {v.id: v for v in self.validators}

    def transactions_by_id(self) -> dict[str, TransactionRecord]:
        return {t.id: t for t in self.transactions}


def _check_unique(kind: str, ids: Iterable[str]) -> None:
    seen = set()
    for i in ids:
        if i in seen:
            raise DuplicateIdError(f"duplicate {kind} id {i!r}")
        seen.add(i)


def build_timeline(
    *,
    horizon: Tick,
    transactions: Sequence[TransactionRecord] = (),
    fork_events: Sequence[ForkRevealEvent] = (),
    validators: Sequence[ValidatorState] = (),
) -> ChainTimeline:
    """Validate, normalize and freeze a timeline.

    Sorts transactions by (finalized_at, id) and fork events by
    (revealed_at, id), rejects duplicate ids and out-of-horizon timestamps,
    and fills or cross-checks each fork event's double_signer_stake against
    the validator set. Idempotent: feeding a built timeline's fields back in
    yields an equal timeline.
    """
    if not 0 < horizon <= MAX_HORIZON:
        raise TimestampOutOfRangeError(f"horizon must lie in (0, {MAX_HORIZON}], got {horizon}")

    _check_unique("transaction", (t.id for t in transactions))
    _check_unique("fork event", (e.id for e in fork_events))
    _check_unique("validator", (v.id for v in validators))

    vmap = {v.id: v for v in validators}
    for v in validators:
        if v.exit_tick is not None and v.exit_tick > horizon:
            raise TimestampOutOfRangeError(f"validator {v.id!r}: exit_tick beyond horizon")

    for t in transactions:
        if t.finalized_at > horizon:
            raise TimestampOutOfRangeError(f"transaction {t.id!r}: finalized_at beyond horizon")
        if t.offchain_executed_at is not None and t.offchain_executed_at > horizon:
            raise TimestampOutOfRangeError(f"transaction {t.id!r}: offchain tick beyond horizon")

    checked_events = []
    for e in fork_events:
        if e.revealed_at > horizon:
            raise TimestampOutOfRangeError(f"fork event {e.id!r}: revealed_at beyond horizon")
        unknown = sorted(s for s in e.double_signers if s not in vmap)
        if unknown:
            raise InvariantViolationError(
                f"fork event {e.id!r}: unknown double signers {unknown}"
            )
        signed = sum((vmap[s].stake for s in e.double_signers), Fraction(0))
        if e.double_signers and e.double_signer_stake == 0:
            e = replace(e, double_signer_stake=signed)
        elif e.double_signer_stake != signed:
            raise InvariantViolationError(
                f"fork event {e.id!r}: double_signer_stake {e.double_signer_stake} "
                f"!= sum of signer stakes {signed}"
            )
        checked_events.append(e)

    return ChainTimeline(
        horizon=horizon,
        transactions=tuple(sorted(transactions, key=lambda t: (t.finalized_at, t.id))),
        fork_events=tuple(sorted(checked_events, key=lambda e: (e.revealed_at, e.id))),
        validators=tuple(sorted(validators, key=lambda v: v.id)),
    )


class GammaFilter(str, Enum):
    """Transaction-set filters used by the corruption-profit bounds.

    ALL: every transaction.
    HYBRID_ONLY: transactions with an off-chain leg.
    HYBRID_NOT_SECURE: hybrid flow not protected by a waiting rule
        (immediate and insured-immediate execution).
    UNINSURED: hybrid flow executed immediately with no insurance either.

    By construction UNINSURED <= HYBRID_NOT_SECURE <= HYBRID_ONLY <= ALL.
    """

    ALL = "all"
    HYBRID_ONLY = "hybrid_only"
    HYBRID_NOT_SECURE = "hybrid_not_secure"
    UNINSURED = "uninsured"


_WAITING_RULES = (ConfirmationRule.SECURE_RULE, ConfirmationRule.BRIDGE_RULE)


def _matches(tx: TransactionRecord, selector: GammaFilter) -> bool:
    if selector is GammaFilter.ALL:
        return True
    if tx.kind is not TxKind.HYBRID:
        return False
    if selector is GammaFilter.HYBRID_ONLY:
        return True
    if tx.rule in _WAITING_RULES:
        return False
    if selector is GammaFilter.HYBRID_NOT_SECURE:
        return True
    # UNINSURED: immediate execution without coverage
    return tx.rule is not ConfirmationRule.INSURED_IMMEDIATE


def gamma_set(
    timeline: ChainTimeline,
    t0: Tick,
    t1: Tick,
    selector: GammaFilter = GammaFilter.ALL,
) -> tuple[TransactionRecord, ...]:
    """Transactions finalized in [t0, t1) passing `selector`, sorted."""
    if t0 >= t1:
        raise EmptyIntervalError(f"empty interval [{t0}, {t1})")
    return tuple(
        tx
        for tx in timeline.transactions
        if t0 <= tx.finalized_at < t1 and _matches(tx, selector)
    )


def gamma_value(
    timeline: ChainTimeline,
    t0: Tick,
    t1: Tick,
    selector: GammaFilter = GammaFilter.ALL,
) -> Fraction:
    """Total value of gamma_set(timeline, t0, t1, selector)."""
    return sum((tx.value for tx in gamma_set(timeline, t0, t1, selector)), Fraction(0))
