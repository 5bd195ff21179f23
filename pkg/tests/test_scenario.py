import json
import math

import numpy as np
import pytest

from satentangle import quantum as q
from satentangle.geometry import write_ephemeris
from satentangle.scenario import (
    SCHEMA,
    ScenarioError,
    load_scenario,
    parse_scenario,
    reference_scenario,
    reference_scenario_data,
    with_overrides,
)
from satentangle.spacetime import C_KM_S


@pytest.fixture
def data():
    return reference_scenario_data()


def error_for(data):
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(data)
    return str(exc.value)


def test_reference_loads(reference):
    assert reference.mode == "bell"
    assert reference.handedness() == -1
    assert reference.seed == 20170616
    assert len(reference.stations) == 2
    assert reference.resolved()["schema"] == SCHEMA


def test_fidelity_variant_loads():
    scn = reference_scenario("micius-1203km-fidelity.json")
    assert scn.mode == "fidelity"
    assert scn.handedness() == 1
    assert np.allclose(scn.angles[0], [0.0, math.pi / 4])


def test_unknown_key_is_named(data):
    data["links"][1]["aperture"] = 1.0
    assert error_for(data) == "links[1].aperture: unknown key"
    data = reference_scenario_data()
    data["colour"] = "blue"
    assert error_for(data) == "colour: unknown key"


def test_missing_station_key_is_named(data):
    del data["stations"][1]["latitude_deg"]
    assert error_for(data) == "stations[1].latitude_deg: missing required key"


def test_schema_mismatch(data):
    data["schema"] = "satentangle.scenario/99"
    assert error_for(data).startswith("schema:")


@pytest.mark.parametrize(
    "key, value, where",
    [
        ("seed", -1, "seed"),
        ("seed", 2**64, "seed"),
        ("window_ps", 0, "window_ps"),
        ("window_convention", "wide", "window_convention"),
        ("experiment.mode", "chsh", "experiment.mode"),
        ("experiment.handedness2", 2, "experiment.handedness2"),
        ("experiment.angles1_rad", [4.0], "experiment.angles1_rad"),
        ("source.noise_model", "pink", "source.noise_model"),
        ("polarization.compensation_contrast", 0.5, "polarization.compensation_contrast"),
        ("measurement_lag_s", -1e-9, "measurement_lag_s"),
    ],
)
def test_invalid_values_named(data, key, value, where):
    assert error_for(with_overrides(data, **{key: value})).startswith(where + ":")


def test_component_validation_carries_path(data):
    assert error_for(with_overrides(data, **{"detectors.0.1.efficiency": 1.5})).startswith("detectors")


def test_orbit_or_ephemeris_required(data):
    del data["orbit"]
    assert error_for(data).startswith("orbit:")


def test_overrides_do_not_touch_original(data):
    new = with_overrides(data, **{"source.pair_rate_hz": 1e6, "stations.0.name": "A"})
    assert new["source"]["pair_rate_hz"] == 1e6 and new["stations"][0]["name"] == "A"
    assert data["source"]["pair_rate_hz"] == 5.9e6


def test_load_from_file_and_bad_json(tmp_path, data):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(data))
    assert load_scenario(path).name == data["name"]
    path.write_text("{ not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(path)


def test_relative_ephemeris_resolves_next_to_file(tmp_path, reference, reference_samples, data):
    write_ephemeris(reference_samples, tmp_path / "eph.csv")
    del data["orbit"]
    data["ephemeris"] = "eph.csv"
    (tmp_path / "s.json").write_text(json.dumps(data))
    scn = load_scenario(tmp_path / "s.json")
    samples = scn.pass_samples()
    assert len(samples) == len(reference_samples)
    assert samples[5].range2 == pytest.approx(reference_samples[5].range2)


def test_source_state(reference, data):
    state = reference.source_state()
    # dephasing leaves the populations and so the H/V fidelity contribution alone
    assert q.exact_fidelity(state) < q.exact_fidelity(q.make_colored(0.907))
    werner = parse_scenario(with_overrides(data, **{"source.noise_model": "werner", "polarization.residual_model": "none"}))
    assert q.exact_fidelity(werner.source_state()) == pytest.approx(0.907)


def test_station_configs(reference, reference_samples):
    cfgs = reference.station_configs(reference_samples)
    mid = reference_samples[len(reference_samples) // 2]
    assert cfgs[0].delay_ps == pytest.approx(mid.range1 / C_KM_S * 1e12)
    assert [c.handedness_sign for c in cfgs] == [1, -1]
    assert cfgs[1].clock.offset == 2718281.0
    assert cfgs[0].angles == tuple(reference.angles[0])
