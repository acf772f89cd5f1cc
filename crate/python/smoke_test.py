"""Smoke test for the Python extension: run with `python -m pytest python/`."""

import json

import tofprep


def test_threshold_and_rates():
    assert abs(tofprep.threshold() * 75873 - 1) < 1e-12
    table = tofprep.rate_table(5)
    assert len(table) == 6
    assert table[0] == [6.5, 9.1, 20.0, 18.0, 13.0, 10.0]


def test_code():
    code = tofprep.Code.steane()
    assert code.n == 7
    assert code.syndrome("IIIIIII") == (0, 0)
    assert code.logical_effect("IIXIIII") == "I"
    assert code.logical_effect("XXXIIII") != "I"


def test_circuit_round_trip():
    c = tofprep.shor_prep(3)
    assert c.num_locations() == 2115
    back = tofprep.Circuit.from_text(c.to_text())
    assert back.to_text() == c.to_text()


def test_shor_prep_is_not_fault_tolerant():
    report = json.loads(tofprep.analyze(tofprep.shor_prep(3)))
    assert report["scenarios"] == 6345
    assert not report["fault_tolerant"]
    assert report["max_logical_probability"] == 1.0


def test_noiseless_prep_outputs():
    outs = tofprep.logical_outputs(tofprep.modified_prep(3))
    assert outs
    for record, prob, amps in outs:
        assert prob > 0
        assert len(amps) == 8
        for k in (0, 1, 2, 7):
            assert abs(abs(amps[k]) - 0.5) < 1e-9


if __name__ == "__main__":
    import pytest
    raise SystemExit(pytest.main([__file__, "-q"]))
