"""Per-client link model: loss-window rate adaptation and a seedable loss table.

The adaptation is frame-loss driven with two thresholds: above the maximum
tolerable loss the rate steps down (immediately when the short window already
shows it), below the opportunistic threshold it steps up, in between it holds.
Stepping down doubles the retry window of the rate stepped down to; a held
(successful) window halves it, which damps oscillation between two adjacent
rates instead of resetting the history outright.  Receptions overheard at
rates above the current one act as free probes: a losing probe vetoes the
next opportunistic increase.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Sequence

from .model import ContractError

P_MTL = 0.10  # maximum tolerable loss
P_ORI = 0.03  # opportunistic rate increase threshold
MAX_BACKOFF = 64


@dataclass(frozen=True)
class RateAdaptConfig:
    p_mtl: float = P_MTL
    p_ori: float = P_ORI
    rate_count: int = 8
    min_window: int = 1  # estimation windows are multiples of one allocation interval
    max_backoff: int = MAX_BACKOFF

    def __post_init__(self):
        if not 0 <= self.p_ori < self.p_mtl <= 1:
            raise ContractError("need 0 <= P_ORI < P_MTL <= 1")


@dataclass(frozen=True)
class RateAdaptState:
    rate_index: int = 0
    backoff: tuple = ()  # window multiplier per rate index, power of two
    probe_failures: int = 0
    probe_successes: int = 0

    def multiplier(self, rate_index: int) -> int:
        if rate_index < len(self.backoff):
            return self.backoff[rate_index]
        return 1

    def window_size(self, cfg: RateAdaptConfig) -> int:
        return cfg.min_window * self.multiplier(self.rate_index)


def _with_backoff(state: RateAdaptState, rate_index: int, value: int, cfg: RateAdaptConfig) -> tuple:
    backoff = list(state.backoff) + [1] * (cfg.rate_count - len(state.backoff))
    backoff[rate_index] = max(1, min(cfg.max_backoff, value))
    return tuple(backoff)


def ha_rraa_step(
    state: RateAdaptState,
    loss_rate: float,
    small_window_loss: float,
    cfg: RateAdaptConfig = RateAdaptConfig(),
) -> RateAdaptState:
    """Advance the rate state by one estimation window.

    ``loss_rate`` is the loss fraction over the full window; a short-window
    loss above P_MTL forces the step down regardless of the full window.
    """
    if not 0 <= loss_rate <= 1:
        raise ContractError("loss rate must be in [0, 1]")
    idx = state.rate_index
    if small_window_loss > cfg.p_mtl or loss_rate > cfg.p_mtl:
        new_idx = max(0, idx - 1)
        backoff = _with_backoff(state, new_idx, state.multiplier(new_idx) * 2, cfg)
        return RateAdaptState(rate_index=new_idx, backoff=backoff)
    if loss_rate < cfg.p_ori and state.probe_failures <= state.probe_successes:
        new_idx = min(cfg.rate_count - 1, idx + 1)
        return RateAdaptState(rate_index=new_idx, backoff=state.backoff)
    # hold: a tolerable window halves the retry window instead of resetting it
    backoff = _with_backoff(state, idx, state.multiplier(idx) // 2, cfg)
    return RateAdaptState(rate_index=idx, backoff=backoff)


def free_probe_observe(state: RateAdaptState, received_at_rate: int, success: bool) -> RateAdaptState:
    """Record an overheard transmission at a rate above the current one."""
    if received_at_rate <= state.rate_index:
        raise ContractError("free probes are transmissions above the current rate")
    if success:
        return replace(state, probe_successes=state.probe_successes + 1)
    return replace(state, probe_failures=state.probe_failures + 1)


class RateController:
    """Accumulates per-interval loss observations and steps the state machine.

    One allocation interval is both the minimum estimation window and the
    short window; an interval whose own loss already exceeds P_MTL triggers
    the immediate step down without waiting for the window to fill.
    """

    def __init__(self, initial_rate_index: int, cfg: RateAdaptConfig = RateAdaptConfig()):
        self.cfg = cfg
        self.state = RateAdaptState(rate_index=initial_rate_index)
        self._lost = 0
        self._sent = 0
        self._filled = 0

    @property
    def rate_index(self) -> int:
        return self.state.rate_index

    def observe_probe(self, rate_index: int, success: bool) -> None:
        if rate_index > self.state.rate_index:
            self.state = free_probe_observe(self.state, rate_index, success)

    def observe_interval(self, lost: int, sent: int) -> None:
        small = lost / sent if sent else 0.0
        if small > self.cfg.p_mtl:
            self.state = ha_rraa_step(self.state, small, small, self.cfg)
            self._lost = self._sent = self._filled = 0
            return
        self._lost += lost
        self._sent += sent
        self._filled += 1
        if self._filled >= self.state.window_size(self.cfg):
            loss = self._lost / self._sent if self._sent else 0.0
            self.state = ha_rraa_step(self.state, loss, small, self.cfg)
            self._lost = self._sent = self._filled = 0


@dataclass
class LossModel:
    """Per-(user, rate-index) loss probabilities for the simulator.

    Probabilities must be non-decreasing in the rate index: a higher PHY rate
    is never more reliable.  A probability of 1.0 marks a rate the client
    cannot decode at all.
    """

    table: dict  # (user_id, rate_index) -> loss probability
    rate_count: int

    def __post_init__(self):
        users = {uid for uid, _ in self.table}
        for uid in users:
            prev = 0.0
            for ri in range(self.rate_count):
                p = self.loss(uid, ri)
                if not 0 <= p <= 1:
                    raise ContractError(f"loss probability {p} out of range")
                if p < prev:
                    raise ContractError(
                        f"user {uid}: loss must be non-decreasing in rate index"
                    )
                prev = p

    def loss(self, user_id: int, rate_index: int) -> float:
        return self.table.get((user_id, rate_index), 1.0)

    def set_row(self, user_id: int, losses: Sequence[float]) -> None:
        if len(losses) != self.rate_count:
            raise ContractError("loss row length must match the rate set")
        for ri, p in enumerate(losses):
            self.table[(user_id, ri)] = float(p)
        self.__post_init__()


def sample_reception(loss: LossModel, user_id: int, rate_index: int, rng) -> bool:
    """One Bernoulli reception draw; deterministic for a seeded ``rng``."""
    p = loss.loss(user_id, rate_index)
    if p <= 0.0:
        return True
    if p >= 1.0:
        return False
    return rng.random() >= p
