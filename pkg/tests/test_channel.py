"""Rate adaptation state machine and loss model tests."""

import numpy as np
import pytest

from tilecast.channel import (
    LossModel,
    RateAdaptConfig,
    RateAdaptState,
    RateController,
    free_probe_observe,
    ha_rraa_step,
    sample_reception,
)
from tilecast.model import ContractError

CFG = RateAdaptConfig()


def test_decrease_above_mtl_doubles_backoff():
    state = RateAdaptState(rate_index=3)
    out = ha_rraa_step(state, 0.12, 0.12, CFG)
    assert out.rate_index == 2
    assert out.multiplier(2) == 2
    again = ha_rraa_step(out, 0.2, 0.2, CFG)
    assert again.rate_index == 1
    # repeated failure: stepping down to rate 1, then failing there again,
    # keeps doubling that rate's window
    third = ha_rraa_step(again, 0.2, 0.2, CFG)
    assert third.rate_index == 0
    fourth = ha_rraa_step(third, 0.2, 0.2, CFG)
    assert fourth.rate_index == 0
    assert fourth.multiplier(0) == 4


def test_increase_below_ori():
    state = RateAdaptState(rate_index=3)
    assert ha_rraa_step(state, 0.02, 0.02, CFG).rate_index == 4


def test_hold_halves_window():
    state = RateAdaptState(rate_index=2, backoff=(1, 1, 8))
    out = ha_rraa_step(state, 0.05, 0.05, CFG)
    assert out.rate_index == 2
    assert out.multiplier(2) == 4
    # halving floors at 1
    floored = RateAdaptState(rate_index=2, backoff=(1, 1, 1))
    assert ha_rraa_step(floored, 0.05, 0.05, CFG).multiplier(2) == 1


def test_small_window_forces_immediate_decrease():
    state = RateAdaptState(rate_index=5)
    out = ha_rraa_step(state, 0.0, 0.5, CFG)
    assert out.rate_index == 4


def test_rate_index_saturates():
    top = RateAdaptState(rate_index=CFG.rate_count - 1)
    assert ha_rraa_step(top, 0.0, 0.0, CFG).rate_index == CFG.rate_count - 1
    bottom = RateAdaptState(rate_index=0)
    assert ha_rraa_step(bottom, 0.9, 0.9, CFG).rate_index == 0


def test_failed_probe_suppresses_one_increase():
    state = RateAdaptState(rate_index=2)
    state = free_probe_observe(state, 3, success=False)
    held = ha_rraa_step(state, 0.0, 0.0, CFG)
    assert held.rate_index == 2  # suppressed despite loss below ORI
    # counters reset with the window: the next clean window increases
    assert ha_rraa_step(held, 0.0, 0.0, CFG).rate_index == 3


def test_successful_probes_allow_increase():
    state = RateAdaptState(rate_index=2)
    state = free_probe_observe(state, 3, success=False)
    state = free_probe_observe(state, 4, success=True)
    assert ha_rraa_step(state, 0.0, 0.0, CFG).rate_index == 3


def test_probe_must_be_above_current_rate():
    state = RateAdaptState(rate_index=4)
    with pytest.raises(ContractError):
        free_probe_observe(state, 4, success=True)


def test_loss_rate_validated():
    with pytest.raises(ContractError):
        ha_rraa_step(RateAdaptState(), 1.5, 0.0, CFG)


def test_controller_waits_for_backed_off_window():
    ctl = RateController(initial_rate_index=1, cfg=CFG)
    ctl.state = RateAdaptState(rate_index=1, backoff=(1, 2))
    ctl.observe_interval(0, 100)  # window of 2: no decision yet
    assert ctl.rate_index == 1
    ctl.observe_interval(0, 100)
    assert ctl.rate_index == 2


def test_controller_immediate_drop_on_bad_interval():
    ctl = RateController(initial_rate_index=5, cfg=CFG)
    ctl.observe_interval(40, 100)
    assert ctl.rate_index == 4


def test_convergence_to_unique_sustainable_rate():
    # below rate 3 the loss invites an increase, above it the loss forces a
    # decrease, and at rate 3 itself the loss sits between the thresholds
    row = [0.01, 0.01, 0.01, 0.05, 0.2, 0.3, 0.4, 0.5]
    ctl = RateController(initial_rate_index=0, cfg=CFG)
    visits = []
    for _ in range(200):
        # drain however many intervals the current window needs
        for _ in range(ctl.state.window_size(CFG)):
            p = row[ctl.rate_index]
            ctl.observe_interval(round(p * 1000), 1000)
        visits.append(ctl.rate_index)
    tail = visits[-50:]
    assert tail.count(3) / len(tail) >= 0.9


def test_oscillation_damping_with_probes():
    # no hold zone: rate 3 looks clean, rate 4 is hopeless; failed overheard
    # probes at rate 4 are what keep the client pinned at 3
    row = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0]
    ctl = RateController(initial_rate_index=3, cfg=CFG)
    visits = []
    for _ in range(200):
        for _ in range(ctl.state.window_size(CFG)):
            ctl.observe_probe(4, success=False)
            p = row[ctl.rate_index]
            ctl.observe_interval(round(p * 1000), 1000)
        visits.append(ctl.rate_index)
    assert visits[-50:].count(3) / 50 >= 0.9


def test_loss_model_validation():
    LossModel({(1, 0): 0.1, (1, 1): 0.2}, 2)
    with pytest.raises(ContractError):
        LossModel({(1, 0): 0.5, (1, 1): 0.2}, 2)
    with pytest.raises(ContractError):
        LossModel({(1, 0): 1.5}, 1)
    m = LossModel({}, 2)
    assert m.loss(7, 0) == 1.0  # unknown users decode nothing
    with pytest.raises(ContractError):
        m.set_row(1, [0.1])


def test_sample_reception_endpoints():
    rng = np.random.default_rng(0)
    model = LossModel({(1, 0): 0.0, (1, 1): 1.0}, 2)
    assert all(sample_reception(model, 1, 0, rng) for _ in range(50))
    assert not any(sample_reception(model, 1, 1, rng) for _ in range(50))


def test_sample_reception_law_of_large_numbers():
    rng = np.random.default_rng(1234)
    model = LossModel({(1, 0): 0.1}, 1)
    draws = 10_000
    losses = sum(not sample_reception(model, 1, 0, rng) for _ in range(draws))
    assert abs(losses / draws - 0.1) < 0.01


def test_sample_reception_deterministic_per_seed():
    model = LossModel({(1, 0): 0.4}, 1)
    a = [sample_reception(model, 1, 0, np.random.default_rng(5)) for _ in range(1)]
    b = [sample_reception(model, 1, 0, np.random.default_rng(5)) for _ in range(1)]
    assert a == b
