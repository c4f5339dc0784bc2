import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import chisquare

from itimap.scenarios import BLE_HOPS_MHZ, BT_HOPS_MHZ, BT_SLOT_US, office_scenario, profile, training_scenario
from itimap.scene import (
    BurstEvent,
    BurstLedger,
    Distribution,
    EmitterSpec,
    PathLoss,
    Position,
    Scenario,
    Technology,
    generate_ledger,
    parse_tech_selection,
    received_power,
)

ORIGIN = Position(0.0, 0.0)


def test_empty_scenario_gives_empty_ledger():
    led = generate_ledger([], 10_000_000, seed=3)
    assert len(led) == 0
    assert led.horizon == 10_000_000


def test_zigbee_max_frames_last_4256_us():
    # 127-byte PSDU plus 6 bytes of PHY overhead = 133 bytes at 250 kbit/s
    zb = profile(Technology.Zigbee802154, 1, ORIGIN,
                 duration=Distribution("frame", {"bytes_low": 127, "bytes_high": 127, "kbps": 250.0,
                                                 "overhead_bytes": 6}))
    led = generate_ledger([zb], 2_000_000, seed=1)
    assert len(led) > 10
    assert np.all(led.duration == 133 * 8 * 1000 // 250)
    assert np.all(led.duration == 4256)


def test_saturated_bt_single_slot():
    bt = profile(Technology.Bt802151, 1, ORIGIN, duration=Distribution.constant(366),
                 interarrival=Distribution.constant(0))
    led = generate_ledger([bt], 1_000_000, seed=0)
    assert len(led) == 1_000_000 // BT_SLOT_US == 1600
    assert np.all(led.t_start % BT_SLOT_US == 0)
    assert np.all(led.duration == 366)
    assert np.all(np.diff(led.t_start) == BT_SLOT_US)


def test_received_power_examples():
    pl = PathLoss(40.0, 1.0, 3.0)
    assert received_power(20.0, Position(1.0, 0.0), ORIGIN, pl) == pytest.approx(20.0 - 40.0)
    assert received_power(20.0, Position(10.0, 0.0), ORIGIN, pl) == pytest.approx(-50.0)
    assert received_power(20.0, ORIGIN, ORIGIN, pl) == received_power(20.0, Position(1.0, 0.0), ORIGIN, pl)
    ev = BurstEvent(1, Technology.Ble, 0, 500, 2440.0, 2.0, 20.0)
    assert received_power(ev, Position(0.0, 10.0), ORIGIN, pl) == pytest.approx(-50.0)


@given(st.floats(1.0001, 500.0), st.floats(0.001, 10.0))
def test_received_power_strictly_decreasing_beyond_d0(d, step):
    near = received_power(0.0, Position(d, 0.0), ORIGIN)
    far = received_power(0.0, Position(d + step, 0.0), ORIGIN)
    assert far < near


def test_ledger_is_byte_identical_for_same_seed():
    sc = office_scenario(20_000_000, seed=4)
    a = generate_ledger(sc.emitters, sc.horizon_us, sc.seed).to_csv()
    b = generate_ledger(sc.emitters, sc.horizon_us, sc.seed).to_csv()
    c = generate_ledger(sc.emitters, sc.horizon_us, sc.seed + 1).to_csv()
    assert a == b
    assert a != c
    assert a.splitlines()[0] == "emitter_id,tech,t_start_us,duration_us,center_mhz,bw_mhz,tx_dbm"


def test_ledger_is_time_sorted_and_in_band():
    sc = training_scenario(5_000_000, seed=2)
    led = generate_ledger(sc.emitters, sc.horizon_us, sc.seed)
    assert np.all(np.diff(led.t_start) >= 0)
    assert np.all(led.duration > 0)
    assert np.all(led.center - led.bandwidth / 2 >= 2400.0)
    assert np.all(led.center + led.bandwidth / 2 <= 2485.0)


_tech = st.sampled_from(list(Technology))


@given(_tech, st.integers(0, 2**31 - 1), st.integers(0, 3000))
def test_emitter_bursts_never_overlap(tech, seed, gap):
    spec = profile(tech, 1, ORIGIN, interarrival=Distribution("exponential", {"mean": gap + 1}))
    led = generate_ledger([spec], 300_000, seed)
    assert np.all(led.t_start[1:] >= led.t_start[:-1] + led.duration[:-1])


@pytest.mark.parametrize("tech, hops", [(Technology.Bt802151, BT_HOPS_MHZ), (Technology.Ble, BLE_HOPS_MHZ)])
def test_hop_distribution_is_uniform(tech, hops):
    spec = profile(tech, 1, ORIGIN, interarrival=Distribution("exponential", {"mean": 200}))
    led = generate_ledger([spec], 40_000_000, seed=11)
    assert len(led) >= 10_000
    counts = np.array([np.sum(led.center == f) for f in hops])
    assert counts.sum() == len(led)
    assert chisquare(counts).pvalue > 0.05


def test_rejects_out_of_band_emitters():
    bad = profile(Technology.Wlan11g, 1, ORIGIN, center=2480.0)
    with pytest.raises(ValueError, match="exceeds"):
        generate_ledger([bad], 1_000_000, 0)
    hop = profile(Technology.Ble, 2, ORIGIN, hop_set=(2400.5, 2440.0))
    with pytest.raises(ValueError, match="exceeds"):
        generate_ledger([hop], 1_000_000, 0)


@pytest.mark.parametrize("kind, params", [
    ("exponential", {"mean": 0}),
    ("uniform", {"low": 0, "high": 10}),
    ("loguniform", {"low": 5, "high": 1}),
    ("constant", {"value": -1}),
    ("frame", {"bytes_low": 0, "bytes_high": 10}),
])
def test_rejects_non_positive_distribution_parameters(kind, params):
    with pytest.raises(ValueError):
        Distribution(kind, params)


def test_rejects_bad_power_and_horizon():
    with pytest.raises(ValueError, match="tx_power"):
        generate_ledger([profile(Technology.Ble, 1, ORIGIN, tx_power=31.0)], 1_000_000, 0)
    with pytest.raises(ValueError, match="horizon"):
        generate_ledger([], 0, 0)


def test_scenario_json_round_trip(tmp_path):
    sc = office_scenario(1_000_000, seed=9)
    path = tmp_path / "s.json"
    sc.save(path)
    back = Scenario.load(path)
    assert back.to_dict() == sc.to_dict()
    assert json.loads(path.read_text())["horizon_us"] == 1_000_000


def test_ledger_csv_round_trip(tmp_path):
    sc = office_scenario(3_000_000, seed=1)
    led = generate_ledger(sc.emitters, sc.horizon_us, sc.seed)
    led.to_csv(tmp_path / "l.csv")
    back = BurstLedger.from_csv(tmp_path / "l.csv", led.horizon)
    assert back.to_csv() == led.to_csv()


def test_active_interval_limits_bursts():
    spec = profile(Technology.Wlan11g, 1, ORIGIN, active_us=(500_000, 800_000))
    led = generate_ledger([spec], 1_000_000, 0)
    assert len(led)
    assert led.t_start.min() >= 500_000 and led.t_start.max() < 800_000


def test_tech_selection_names():
    assert parse_tech_selection("wlan") == (Technology.Wlan11b, Technology.Wlan11g, Technology.Wlan11n)
    assert parse_tech_selection("Ble") == (Technology.Ble,)
    with pytest.raises(ValueError):
        parse_tech_selection("lte")


def test_position_rejects_non_finite():
    with pytest.raises(ValueError):
        Position(math.nan, 0.0)


def test_emitter_spec_dict_round_trip():
    spec = profile(Technology.Bt802151, 7, Position(1.0, 2.0))
    assert EmitterSpec.from_dict(spec.to_dict()) == spec
