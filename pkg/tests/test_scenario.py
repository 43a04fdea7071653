import math

import pytest

from macap.constellation import GAUSSIAN
from macap.errors import InvalidArgument, ParseError
from macap.scenario import DEFAULTS, PRESET_SCENARIOS, parse_scenario


def test_minimal_scenario_gets_defaults():
    sc = parse_scenario("pbar_db: 0\ninputs: [bpsk, bpsk]\n")
    (case,) = sc.cases
    assert case.params.pbar == 1.0
    assert case.params.bandwidth_hz == 100.0 and case.params.frame_seconds == 1.0
    assert case.qos.theta1 == case.qos.theta2 == 0.01
    assert case.qos.n == 100.0
    assert case.spec1.k_factor_db == pytest.approx(-6.88)
    assert sc.lambda_points == 21 and sc.samples == 2000 and sc.seed == 1


def test_db_converted_once():
    (case,) = parse_scenario("pbar_db: 10\n").cases
    assert case.params.pbar == pytest.approx(10.0)
    (case,) = parse_scenario("pbar_db: -5\nk_factor_db: -inf\n").cases
    assert case.params.pbar == pytest.approx(10 ** -0.5)
    assert case.spec1.k_linear == 0.0


def test_unknown_key_names_key_and_line():
    with pytest.raises(ParseError) as ei:
        parse_scenario("pbar_db: 0\nthetaa1: 0.1\n")
    assert ei.value.key == "thetaa1" and ei.value.line == 2
    assert "thetaa1" in str(ei.value)


def test_bad_custom_constellation():
    text = "inputs:\n  - {label: odd, points: [[1, 0, 0.5], [-2, 0, 0.5]]}\n  - bpsk\n"
    with pytest.raises(ParseError) as ei:
        parse_scenario(text)
    assert ei.value.key == "inputs"
    assert "energy" in str(ei.value)


def test_custom_constellation_accepted():
    text = "inputs:\n  - {label: ook, points: [[0, 0, 0.5], [1.4142135623730951, 0, 0.5]]}\n  - gaussian\n"
    (case,) = parse_scenario(text).cases
    assert case.inputs[0].label == "ook" and case.inputs[1] is GAUSSIAN


@pytest.mark.parametrize("text", ["pbar_db: [\n", "- a\n- b\n", "samples: 0\n", "lambda_points: 1\n",
                                  "inputs: [bpsk, nosuch]\n", "preset: fig9\n", "theta: -1\n",
                                  "psi_update: newton\n", "lambda1: 2\n", "queue_user: 3\n"])
def test_rejects_bad_input(text):
    with pytest.raises(ParseError):
        parse_scenario(text)


def test_sweeps_form_cartesian_product():
    sc = parse_scenario("pbar_db: [-5, 0]\ntheta: [0.001, 0.1]\ninputs: [[bpsk, bpsk], [4qam, 4qam]]\n")
    assert len(sc.cases) == 8
    assert len({c.name for c in sc.cases}) == 8


@pytest.mark.parametrize("name", sorted(PRESET_SCENARIOS))
def test_presets_parse(name):
    sc = parse_scenario(f"preset: {name}\nsamples: 50\n")
    assert sc.preset == name and sc.samples == 50 and sc.cases


def test_fig1_preset_values():
    sc = parse_scenario("preset: fig1\n")
    ks = sorted({c.spec1.k_factor_db for c in sc.cases})
    assert ks == pytest.approx([-6.88, 4.97, 8.61])
    assert sorted({round(10 * math.log10(c.params.pbar), 6) for c in sc.cases}) == [-5.0, 0.0]


def test_preset_keys_can_be_overridden():
    sc = parse_scenario("preset: fig4\ntheta: 0.05\n")
    assert sc.cases[0].qos.theta1 == 0.05


def test_fingerprint_tracks_content_not_output_dir():
    a = parse_scenario("seed: 3\n")
    assert a.fingerprint() == parse_scenario("seed: 3\nout: elsewhere\n").fingerprint()
    assert a.fingerprint() != parse_scenario("seed: 4\n").fingerprint()
    assert a.with_overrides(seed=4).fingerprint() == parse_scenario("seed: 4\n").fingerprint()
    with pytest.raises(InvalidArgument):
        a.with_overrides(lambda_points=1)


def test_defaults_documented():
    import macap.scenario as mod
    for key in DEFAULTS:
        assert key in mod.__doc__
