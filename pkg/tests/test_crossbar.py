import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sotmlp import crossbar as xb
from sotmlp.device import MagState, MaterialParams, SotMramCell, conductance, resistance

dims = st.tuples(st.integers(1, 12), st.integers(1, 8))


def programmed(n, m, rng, bias=True, variation_sigma=0.0):
    a = xb.CrossbarArray(n, m, bias=bias, variation_sigma=variation_sigma, rng=rng)
    w = rng.choice([-1, 1], size=(m, a.n_cols))
    a.set_phase(xb.Phase.TRAINING)
    xb.program_array(a, w)
    a.set_phase(xb.Phase.INFERENCE)
    xb.calibrate(a)
    return a, w


@settings(max_examples=40, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_programming_costs_one_clock_per_row(shape, seed):
    n, m = shape
    rng = np.random.default_rng(seed)
    a = xb.CrossbarArray(n, m)
    w = rng.choice([-1, 1], size=(m, n + 1))
    a.set_phase(xb.Phase.TRAINING)
    xb.program_array(a, w)
    assert a.cycle_count == m
    np.testing.assert_array_equal(a.weights(), w)
    assert a.programmed


@settings(max_examples=40, deadline=None)
@given(dims, st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_inference_costs_one_clock_per_vector(shape, batch, seed):
    n, m = shape
    rng = np.random.default_rng(seed)
    a, _ = programmed(n, m, rng)
    before = a.cycle_count
    _, clocks = xb.infer(a, rng.uniform(0, 0.1, n))
    assert clocks == 1 and a.cycle_count == before + 1
    _, clocks = xb.infer(a, rng.uniform(0, 0.1, (batch, n)))
    assert clocks == batch and a.cycle_count == before + 1 + batch


@settings(max_examples=40, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.data())
def test_program_row_isolation(shape, seed, data):
    n, m = shape
    rng = np.random.default_rng(seed)
    a, w = programmed(n, m, rng)
    a.set_phase(xb.Phase.TRAINING)
    r = data.draw(st.integers(0, m - 1))
    new = -w[r]
    before = a.states.copy()
    xb.program_row(a, r, new)
    after = a.states
    mask = np.ones(m, bool)
    mask[r] = False
    np.testing.assert_array_equal(after[mask], before[mask])
    np.testing.assert_array_equal(a.weights()[r], new)
    # idempotent
    xb.program_row(a, r, new)
    np.testing.assert_array_equal(a.states, after)


def test_program_row_validation():
    a = xb.CrossbarArray(3, 2)
    with pytest.raises(xb.PhaseError):
        xb.program_row(a, 0, [1, 1, 1, 1])
    a.set_phase(xb.Phase.TRAINING)
    with pytest.raises(IndexError):
        xb.program_row(a, 2, [1, 1, 1, 1])
    with pytest.raises(ValueError):
        xb.program_row(a, 0, [1, 0, 1, 1])
    with pytest.raises(ValueError):
        xb.program_row(a, 0, [1, 1, 1])
    assert a.cycle_count == 0


def test_infer_guards(rng):
    a = xb.CrossbarArray(2, 2)
    a.set_phase(xb.Phase.INFERENCE)
    with pytest.raises(xb.UnprogrammedError):
        xb.infer(a, [0.0, 0.0])
    a, _ = programmed(2, 2, rng)
    with pytest.raises(ValueError):
        xb.infer(a, [0.0, 0.2])
    with pytest.raises(ValueError):
        xb.infer(a, [0.0, -0.01])
    with pytest.raises(ValueError):
        xb.infer(a, [0.0, 0.0, 0.0])
    a.set_phase(xb.Phase.TRAINING)
    with pytest.raises(xb.PhaseError):
        xb.infer(a, [0.0, 0.0])


def test_unwritten_synapse_raises():
    a = xb.CrossbarArray(2, 2)
    a.set_phase(xb.Phase.TRAINING)
    xb.program_row(a, 0, [1, -1, 1])
    with pytest.raises(xb.UnprogrammedError):
        a.weights()
    with pytest.raises(xb.UnprogrammedError):
        a.synapse(1, 0)
    assert a.synapse(0, 1).weight == -1


def _ref_currents(a, applied):
    """Per-cell sum built from the single-device model."""
    n_rows, cols = a.m_rows, a.n_cols
    v = list(applied) + ([a.calib.v_read] if a.bias else [])
    ip, im = np.zeros(n_rows), np.zeros(n_rows)
    for r in range(n_rows):
        for c in range(cols):
            plus = SotMramCell(a.geometry, a.params, MagState(int(a.states[r, c, 0])), a.variation[r, c, 0])
            minus = SotMramCell(a.geometry, a.params, MagState(int(a.states[r, c, 1])), a.variation[r, c, 1])
            ip[r] += v[c] * conductance(plus, v[c])
            im[r] += v[c] * conductance(minus, v[c])
    return ip, im


@settings(max_examples=25, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.floats(0, 10))
def test_row_currents_match_cell_sum(shape, seed, sigma):
    n, m = shape
    rng = np.random.default_rng(seed)
    a, _ = programmed(n, m, rng, variation_sigma=sigma)
    applied = rng.uniform(0, 0.1, n)
    ip, im = xb.row_currents(a, applied[None, :], a.calib.v_read)
    rp, rm = _ref_currents(a, applied)
    np.testing.assert_allclose(ip[0], rp, rtol=1e-12)
    np.testing.assert_allclose(im[0], rm, rtol=1e-12)


@given(st.floats(0, 0.1))
def test_drive_inputs_linearises_cell_current(v):
    a, _ = programmed(1, 1, np.random.default_rng(0))
    calib = a.calib
    u = float(xb.drive_inputs(v, calib, a.params))
    p = SotMramCell(state=MagState.PARALLEL)
    ap = SotMramCell(state=MagState.ANTIPARALLEL)
    diff = u * (conductance(p, u) - conductance(ap, u))
    assert diff == pytest.approx(v / 0.1 * calib.unit_current, rel=1e-12, abs=1e-20)
    assert 0.0 <= u <= v + 1e-15


def test_drive_inputs_identity_without_linearisation(rng):
    a, _ = programmed(3, 2, rng)
    calib = xb.calibrate(a, linearize_inputs=False)
    v = rng.uniform(0, 0.1, 5)
    np.testing.assert_array_equal(xb.drive_inputs(v, calib, a.params), v)


def test_calibration_examples():
    a = xb.CrossbarArray(2, 1)
    c = xb.calibrate(a, v_read=0.1, pre_activation_scale=0.01)
    g_p = 1 / resistance(SotMramCell(state=MagState.PARALLEL))
    g_ap = 1 / resistance(SotMramCell(state=MagState.ANTIPARALLEL), 0.1)
    assert c.unit_conductance_delta == pytest.approx(g_p - g_ap, rel=1e-13)
    assert c.transimpedance_gain == pytest.approx(0.01 / (0.1 * (g_p - g_ap)), rel=1e-13)
    assert c.gain_k == pytest.approx(100.0)
    with pytest.raises(ValueError):
        xb.calibrate(xb.CrossbarArray(2, 1, params=MaterialParams(tmr0=0.0)))
    with pytest.raises(ValueError, match="peak"):
        xb.calibrate(xb.CrossbarArray(2, 1, params=MaterialParams(v0=0.05)), v_read=0.1)
    with pytest.raises(ValueError):
        xb.calibrate(a, v_read=0.9)


@settings(max_examples=100, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_analog_matches_ideal(shape, seed):
    n, m = shape
    rng = np.random.default_rng(seed)
    a, w = programmed(n, m, rng)
    v = rng.uniform(0, 0.1, (4, n))
    out, _ = xb.infer(a, v)
    ideal = xb.ideal_row_forward(w, v / 0.1)
    np.testing.assert_allclose(out, 0.8 * ideal, rtol=0, atol=1e-6 * 0.8)


def test_pre_activations_are_dot_products(rng):
    a, w = programmed(6, 4, rng)
    x = rng.uniform(0, 1, (3, 6))
    pre = xb.pre_activations(a, 0.1 * x)
    np.testing.assert_allclose(pre, x @ w[:, :-1].T + w[:, -1], atol=1e-9)


def test_unlinearised_read_is_close_but_not_exact(rng):
    a, w = programmed(20, 5, rng)
    xb.calibrate(a, linearize_inputs=False)
    x = rng.uniform(0, 1, (8, 20))
    pre = xb.pre_activations(a, 0.1 * x)
    exact = x @ w[:, :-1].T + w[:, -1]
    err = np.abs(pre - exact).max()
    assert 0 < err < 0.05 * np.abs(exact).max() + 0.05


def test_ideal_row_forward_example():
    w = np.array([[1, -1, 1]])
    assert float(xb.ideal_row_forward(w, [1.0, 0.0])[0]) == pytest.approx(0.119202922022118, rel=1e-12)
    assert xb.ideal_row_forward(w, [[1.0, 0.0], [0.0, 1.0]]).shape == (2, 1)


def test_training_signals_conform_and_encode_weights():
    a = xb.CrossbarArray(3, 2)
    a.set_phase(xb.Phase.TRAINING)
    row = np.array([1, -1, 1, -1])
    xb.program_row(a, 1, row)
    s = a.last_signals
    assert s.wwl == [xb.GND, xb.VDD]
    assert s.rwl == xb.GND
    assert s.bl == [xb.VDD, xb.GND, xb.VDD, xb.GND]
    assert s.sl == [xb.GND, xb.VDD, xb.GND, xb.VDD]
    assert all(x == xb.HIZ for x in s.inputs)
    assert (s.neuron_bl, s.neuron_sl) == (xb.VDD, xb.GND)
    assert xb.validate_signals(s, xb.Phase.TRAINING, n_inputs=3, m_rows=2, weight_row=row) == []


def test_inference_signals_conform(rng):
    a, _ = programmed(3, 2, rng)
    xb.infer(a, [0.0, 0.05, 0.1])
    s = a.last_signals
    assert all(x == xb.GND for x in s.wwl)
    assert s.rwl == xb.VDD
    assert all(x == xb.HIZ for x in s.bl + s.sl)
    assert all(x.kind is xb.LineKind.VIN for x in s.inputs)
    assert xb.validate_signals(s, xb.Phase.INFERENCE, n_inputs=3, m_rows=2) == []


def _train_sig():
    return xb.ControlSignals(
        wwl=[xb.VDD, xb.GND], rwl=xb.GND, bl=[xb.VDD, xb.GND], sl=[xb.GND, xb.VDD],
        inputs=[xb.HIZ], bias_in=xb.HIZ, neuron_bl=xb.VDD, neuron_sl=xb.GND,
    )


def _infer_sig():
    return xb.ControlSignals(
        wwl=[xb.GND, xb.GND], rwl=xb.VDD, bl=[xb.HIZ, xb.HIZ], sl=[xb.HIZ, xb.HIZ],
        inputs=[xb.vin(0.05)], bias_in=xb.vin(0.1),
    )


@pytest.mark.parametrize(
    "mutate,line",
    [
        (lambda s: setattr(s, "wwl", [xb.VDD, xb.VDD]), "WWL"),
        (lambda s: setattr(s, "wwl", [xb.GND, xb.GND]), "WWL"),
        (lambda s: setattr(s, "rwl", xb.VDD), "RWL"),
        (lambda s: setattr(s, "inputs", [xb.vin(0.1)]), "IN[0]"),
        (lambda s: setattr(s, "bl", [xb.VDD, xb.VDD]), "BL/SL[1]"),
        (lambda s: setattr(s, "neuron_bl", xb.HIZ), "BL[neuron]"),
    ],
)
def test_training_violations_named(mutate, line):
    s = _train_sig()
    assert xb.validate_signals(s, xb.Phase.TRAINING) == []
    mutate(s)
    names = [v.line for v in xb.validate_signals(s, xb.Phase.TRAINING)]
    assert line in names


def test_training_weight_mismatch_named():
    s = _train_sig()
    v = xb.validate_signals(s, xb.Phase.TRAINING, weight_row=[1, 1])
    assert [x.line for x in v] == ["BL[1]", "SL[1]"]


@pytest.mark.parametrize(
    "mutate,line",
    [
        (lambda s: setattr(s, "wwl", [xb.GND, xb.VDD]), "WWL[1]"),
        (lambda s: setattr(s, "rwl", xb.GND), "RWL"),
        (lambda s: setattr(s, "bl", [xb.VDD, xb.HIZ]), "BL[0]"),
        (lambda s: setattr(s, "sl", [xb.HIZ, xb.GND]), "SL[1]"),
        (lambda s: setattr(s, "inputs", [xb.HIZ]), "IN[0]"),
        (lambda s: setattr(s, "inputs", [xb.vin(1.5)]), "IN[0]"),
        (lambda s: setattr(s, "neuron_sl", xb.GND), "SL[neuron]"),
    ],
)
def test_inference_violations_named(mutate, line):
    s = _infer_sig()
    assert xb.validate_signals(s, xb.Phase.INFERENCE) == []
    mutate(s)
    names = [v.line for v in xb.validate_signals(s, xb.Phase.INFERENCE)]
    assert line in names


def test_commit_rejects_violation():
    a = xb.CrossbarArray(1, 2)
    s = _infer_sig()
    s.rwl = xb.GND
    with pytest.raises(xb.SignalingError, match="RWL"):
        xb._commit_signals(a, s, xb.Phase.INFERENCE)


@settings(max_examples=25, deadline=None)
@given(dims, st.integers(0, 2**32 - 1), st.booleans(), st.sampled_from([0.0, 5.0]))
def test_snapshot_round_trip(shape, seed, bias, sigma):
    n, m = shape
    rng = np.random.default_rng(seed)
    a, _ = programmed(n, m, rng, bias=bias, variation_sigma=sigma)
    b = xb.load_snapshot(xb.dump_snapshot(a))
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.variation, b.variation)
    assert (b.cycle_count, b.phase, b.bias) == (a.cycle_count, a.phase, a.bias)
    assert xb.dump_snapshot(b) == xb.dump_snapshot(a)


def test_snapshot_partial_rows():
    a = xb.CrossbarArray(2, 3)
    a.set_phase(xb.Phase.TRAINING)
    xb.program_row(a, 1, [1, -1, 1])
    text = xb.dump_snapshot(a)
    assert "row 0 -- -- --" in text
    b = xb.load_snapshot(text)
    np.testing.assert_array_equal(a.states, b.states)
    with pytest.raises(ValueError):
        xb.load_snapshot("garbage\n")
