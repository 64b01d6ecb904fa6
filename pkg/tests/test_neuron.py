import json
import math
from dataclasses import replace

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given
from scipy.integrate import quad

from sbneuro import neuron as nu
from sbneuro.errors import InconsistentRatio, InputError, NonFiniteState, NonPositiveCurrent
from sbneuro.extract import VccsModel
from sbneuro.neuron import NeuronConfig, NeuronState
from sbneuro.sbmodel import BiasPoint, DeviceParams, drain_current


def const_cfg(i, **kw):
    return NeuronConfig(source=VccsModel.constant(i), **kw)


def quadrature_frequency(cfg, v_tg):
    """1 / (C * integral dV / (I(V) - g V) + t_ref) for a device-driven neuron."""
    def inv_drive(v):
        i = drain_current(cfg.source, BiasPoint(v_tg, cfg.v_bg, cfg.v_d - v))
        return cfg.c_total / (i - cfg.g_leak * v)
    t, _ = quad(inv_drive, cfg.v_reset, cfg.v_th, epsabs=0, epsrel=1e-12, limit=200)
    return 1.0 / (t + cfg.t_refractory)


# ---- step -------------------------------------------------------------------

@pytest.mark.parametrize("dt", [1e-6, 1e-2, 10.0])
def test_no_drive_holds_voltage(dt):
    s = NeuronState(v_mem=0.3)
    out = nu.step(s, const_cfg(0.0), dt, 0.0)
    assert out.v_mem == 0.3 and out.t == dt and out.spike_times == ()


def test_constant_current_ramp_is_exact():
    cfg = const_cfg(1e-9)
    s = NeuronState()
    for k in range(1, 101):
        s = nu.step(s, cfg, 1e-2, 0.0)
        assert s.v_mem == pytest.approx(1e-9 * s.t / cfg.c_total, rel=1e-13)


def test_leaky_charging_matches_closed_form():
    i, g, c = 1e-9, 1e-8, 4.7e-9
    cfg = const_cfg(i, c_ext=c, g_leak=g)
    tau = c / g
    s = NeuronState()
    for _ in range(500):
        s = nu.step(s, cfg, tau / 100, 0.0)
        exact = (i / g) * (1 - math.exp(-g * s.t / c))
        assert s.v_mem == pytest.approx(exact, rel=1e-10)


def test_spike_resets_and_continues_within_step():
    cfg = const_cfg(2.82e-9)  # 1 Hz
    s = nu.step(NeuronState(), cfg, 1.25, 0.0)
    assert s.spike_times == pytest.approx((1.0,), rel=1e-12)
    assert s.v_mem == pytest.approx(0.25 * 0.6, rel=1e-12)


def test_refractory_holds_reset_level():
    cfg = const_cfg(2.82e-9, t_refractory=0.5)
    s = nu.step(NeuronState(), cfg, 1.25, 0.0)
    assert s.refractory_until == pytest.approx(1.5)
    assert s.v_mem == cfg.v_reset
    s = nu.step(s, cfg, 0.5, 0.0)
    assert s.v_mem == pytest.approx(0.25 * 0.6, rel=1e-12)


def test_huge_dt_is_non_finite():
    cfg = const_cfg(1e-9, c_ext=1e-12, g_leak=1e-6)
    with pytest.raises(NonFiniteState):
        nu.run(cfg, 0.0, 100.0, 1.0)


# ---- run --------------------------------------------------------------------

def test_short_run_has_no_spikes_and_monotone_trace():
    cfg = NeuronConfig()
    res = nu.run(cfg, 2.0, 1e-3, 1e-5)
    assert res.spike_times == ()
    assert np.all(np.diff(res.v) > 0)
    assert res.t[-1] == pytest.approx(1e-3)


def test_higher_gate_voltage_fires_earlier():
    cfg = NeuronConfig()
    firsts = []
    for v_tg in (2.0, 2.5, 3.0, 3.5):
        m = nu.measure_frequency(cfg, v_tg)
        firsts.append(m.spike_times[0])
    assert all(a > b for a, b in zip(firsts, firsts[1:]))


def test_below_turn_on_never_fires():
    vccs = VccsModel(((0.0, 0.0), (1.0, 0.0), (2.0, 5e-9)))
    res = nu.run(NeuronConfig(source=vccs), 0.5, 10.0, 1e-2)
    assert res.spike_times == () and np.all(res.v == 0.0)


def test_decimation_keeps_spike_samples():
    cfg = const_cfg(2.82e-9)
    full = nu.run(cfg, 0.0, 3.5, 1e-3)
    dec = nu.run(cfg, 0.0, 3.5, 1e-3, decimate=50)
    assert dec.spike_times == full.spike_times
    assert len(dec.t) < len(full.t) / 10
    assert dec.t[-1] == full.t[-1]


def test_run_is_deterministic():
    cfg = NeuronConfig()
    a = nu.run(cfg, 3.0, 0.2, 1e-4)
    b = nu.run(cfg, 3.0, 0.2, 1e-4)
    assert a.spike_times == b.spike_times and np.array_equal(a.v, b.v)


# ---- ideal frequency ----------------------------------------------------------

def test_ideal_one_hertz():
    assert nu.ideal_frequency(2.82e-9, const_cfg(0.0)) == pytest.approx(1.0, rel=1e-12)


def test_ideal_one_kilohertz():
    assert nu.ideal_frequency(2.82e-6, const_cfg(0.0)) == pytest.approx(1000.0, rel=1e-12)


def test_ideal_long_refractory():
    assert nu.ideal_frequency(2.82e-9, const_cfg(0.0, t_refractory=1e12)) < 1e-11


def test_ideal_rejects_zero_current():
    with pytest.raises(NonPositiveCurrent):
        nu.ideal_frequency(0.0, const_cfg(0.0))


# ---- measured frequency -------------------------------------------------------

@pytest.mark.parametrize("i", [2.82e-9, 1e-7, 2e-6])
def test_measured_matches_ideal(i):
    cfg = const_cfg(i)
    f0 = nu.ideal_frequency(i, cfg)
    m = nu.measure_frequency(cfg, 0.0, dt=1 / f0 / 1000)
    assert not m.timed_out
    assert m.f_hz == pytest.approx(f0, rel=5e-3)


def test_subnormal_current_times_out():
    m = nu.measure_frequency(const_cfg(5e-324), 0.0)
    assert m.f_hz == 0.0 and m.timed_out


def test_zero_current_times_out():
    m = nu.measure_frequency(const_cfg(0.0), 0.0)
    assert m.f_hz == 0.0 and m.timed_out


def test_leak_below_threshold_times_out():
    m = nu.measure_frequency(const_cfg(1e-9, g_leak=1e-8), 0.0)
    assert m.f_hz == 0.0 and m.timed_out


@pytest.mark.parametrize("v_d,v_tg", [(1.5, 3.0), (2.5, 1.0), (2.5, 3.0)])
def test_device_neuron_matches_quadrature(v_d, v_tg):
    cfg = NeuronConfig(v_d=v_d)
    assert nu.measure_frequency(cfg, v_tg).f_hz == pytest.approx(quadrature_frequency(cfg, v_tg), rel=1e-4)


def test_leaky_device_neuron_matches_quadrature():
    cfg = NeuronConfig(v_d=2.5, g_leak=2e-8, t_refractory=1e-3)
    assert nu.measure_frequency(cfg, 2.0).f_hz == pytest.approx(quadrature_frequency(cfg, 2.0), rel=1e-4)


@pytest.mark.parametrize("v_tg", [1.0, 2.0, 3.0])
def test_higher_drain_voltage_fires_faster(v_tg):
    lo = nu.measure_frequency(NeuronConfig(v_d=1.5), v_tg).f_hz
    hi = nu.measure_frequency(NeuronConfig(v_d=2.5), v_tg).f_hz
    assert hi > lo > 0


def test_dt_convergence():
    cfg = NeuronConfig()
    dt = nu.default_dt(cfg, 3.0)
    f1 = nu.measure_frequency(cfg, 3.0, dt=dt).f_hz
    f2 = nu.measure_frequency(cfg, 3.0, dt=dt / 2).f_hz
    assert abs(f1 - f2) < 1e-3 * f1


def test_interspike_intervals_are_constant():
    cfg = NeuronConfig(v_d=2.5)
    dt = nu.default_dt(cfg, 1.5)
    res = nu.run(cfg, 1.5, 40 / nu.measure_frequency(cfg, 1.5).f_hz, dt, record=False)
    isi = np.diff(res.spike_times)
    assert len(isi) >= 30
    assert isi.std() / isi.mean() < 1e-6


@pytest.mark.parametrize("cfg,v_tg", [
    (NeuronConfig(), 3.0),
    (NeuronConfig(v_d=2.5, c_ext=10e-12), 1.0),
    (const_cfg(7e-9, c_par=1e-9), 0.0),
    (const_cfg(7e-9, t_refractory=0.05), 0.0),
])
def test_charge_per_interval(cfg, v_tg):
    f = nu.measure_frequency(cfg, v_tg).f_hz
    res = nu.run(cfg, v_tg, 6 / f, nu.default_dt(cfg, v_tg))
    q = nu.interval_charges(res, cfg, v_tg)
    assert len(q) >= 4
    target = cfg.c_total * (cfg.v_th - cfg.v_reset)
    for qk in q:
        assert qk == pytest.approx(target, rel=5e-3)


# ---- sweeps -------------------------------------------------------------------

def test_empty_sweep():
    assert nu.frequency_sweep(NeuronConfig(), []).points == ()


def test_sweep_of_monotone_vccs_is_monotone():
    vccs = VccsModel(((0.0, 0.0), (1.0, 1e-9), (2.0, 1e-8), (3.0, 1e-7)))
    curve = nu.frequency_sweep(NeuronConfig(source=vccs), np.linspace(-0.5, 3.5, 17))
    f = [p[1] for p in curve.points]
    assert all(b >= a for a, b in zip(f, f[1:]))
    assert f[0] == 0.0 and curve.timed_out[0]


def test_pure_capacitance_scaling():
    vccs = VccsModel(((0.0, 1e-9), (3.0, 1e-7)))
    v = [0.5, 1.5, 2.5]
    big = nu.frequency_sweep(NeuronConfig(source=vccs, c_ext=4.7e-9), v)
    small = nu.frequency_sweep(NeuronConfig(source=vccs, c_ext=10e-12), v)
    for (_, fb), (_, fs) in zip(big.points, small.points):
        assert fs / fb == pytest.approx(470.0, rel=1e-9)


@st.composite
def monotone_vccs(draw):
    incs = draw(st.lists(st.floats(0, 1e-7), min_size=2, max_size=6))
    i = np.cumsum(incs)
    return VccsModel(tuple(zip(np.linspace(0, 3, len(i)).tolist(), i.tolist())))


@given(monotone_vccs(), st.floats(-1, 4), st.floats(0, 1))
def test_frequency_non_decreasing_in_vtg(vccs, v, dv):
    cfg = NeuronConfig(source=vccs)
    assert nu.measure_frequency(cfg, v + dv).f_hz >= nu.measure_frequency(cfg, v).f_hz * (1 - 1e-9)


@given(st.floats(1e-12, 1e-8), st.floats(1.01, 10), st.floats(0, 1e-2), st.floats(1.01, 10))
def test_frequency_non_increasing_in_c_and_refractory(c, kc, t_ref, kt):
    cfg = const_cfg(1e-8, c_ext=c, t_refractory=t_ref)
    f = nu.measure_frequency(cfg, 0.0).f_hz
    assert nu.measure_frequency(replace(cfg, c_ext=c * kc), 0.0).f_hz <= f * (1 + 1e-9)
    assert nu.measure_frequency(replace(cfg, t_refractory=t_ref * kt + 1e-6), 0.0).f_hz <= f * (1 + 1e-9)


# ---- parasitic capacitance ----------------------------------------------------

def test_fit_parasitic_measured_ratio():
    c_par = nu.fit_parasitic(5.4, 10e-12, 4.7e-9)
    assert c_par == pytest.approx((4.7e-9 - 5.4 * 10e-12) / 4.4, rel=1e-14)
    assert c_par == pytest.approx(1.0556e-9, rel=1e-3)


def test_fit_parasitic_ideal_ratio():
    assert nu.fit_parasitic(4.7e-9 / 10e-12, 10e-12, 4.7e-9) == 0.0


def test_fit_parasitic_inconsistent():
    with pytest.raises(InconsistentRatio):
        nu.fit_parasitic(470.0001, 10e-12, 4.7e-9)


def test_parasitic_round_trip_reproduces_ratio():
    c_par = nu.fit_parasitic(5.4, 10e-12, 4.7e-9)
    vccs = VccsModel.constant(5e-9)
    f_small = nu.measure_frequency(NeuronConfig(source=vccs, c_ext=10e-12, c_par=c_par), 0.0).f_hz
    f_large = nu.measure_frequency(NeuronConfig(source=vccs, c_ext=4.7e-9, c_par=c_par), 0.0).f_hz
    assert f_small / f_large == pytest.approx(5.4, rel=1e-6)


# ---- config I/O ---------------------------------------------------------------

def test_config_json_inline_vccs_round_trip():
    cfg = NeuronConfig(source=VccsModel(((0.0, 0.0), (2.0, 1e-8))), c_ext=10e-12, v_d=2.5)
    doc = json.loads(json.dumps(cfg.to_dict()))
    assert doc["schema"] == "neuron-v1"
    assert NeuronConfig.from_dict(doc) == cfg


def test_config_json_params_by_path(tmp_path):
    p = DeviceParams(phi_b0=0.7)
    (tmp_path / "dev.json").write_text(json.dumps(p.to_dict()))
    cfg = NeuronConfig(source=p)
    (tmp_path / "n.json").write_text(json.dumps(cfg.to_dict(params_path="dev.json")))
    assert NeuronConfig.from_json(tmp_path / "n.json") == cfg


@pytest.mark.parametrize("bad", [
    {"schema": "neuron-v1", "c_ext": 1e-9},
    {"schema": "neuron-v0", "source": {"vccs": {"schema": "vccs-v1", "knots": [[0, 1e-9]]}}},
    {"schema": "neuron-v1", "c_ext": -1.0, "source": {"vccs": {"schema": "vccs-v1", "knots": [[0, 1e-9]]}}},
])
def test_config_rejects_bad_documents(bad):
    with pytest.raises(InputError):
        NeuronConfig.from_dict(bad)
