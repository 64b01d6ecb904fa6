import math
from dataclasses import replace

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from conftest import biases, device_params
from sbneuro import sbmodel as sb
from sbneuro.errors import InputError, ThresholdOutOfRange
from sbneuro.sbmodel import BiasPoint, DeviceParams, IVCurve

# relative slack for comparing two independent solves; the solver itself is
# accurate to ~1e-15 V on the KVL residual
REL = 1e-12


def isat_oracle(p, phi):
    return p.a_eff * p.a_star * p.temperature ** 2 * math.exp(-sb.Q * phi / (sb.K_B * p.temperature))


def diode_oracle(p, phi, v):
    kt_q = sb.K_B * p.temperature / sb.Q
    return isat_oracle(p, phi) * (math.exp(v / (p.n_ideality * kt_q)) - 1.0)


# ---- effective_barrier ----------------------------------------------------

def test_barrier_zero_overdrive():
    p = DeviceParams(v_t0=0.3)
    assert sb.effective_barrier(p, BiasPoint(0.3, 0.0, 1.0)) == p.phi_b0


def test_barrier_clamped():
    p = DeviceParams(phi_b0=0.45, gamma_tg=0.1, phi_min=0.05, v_t0=0.0)
    assert sb.effective_barrier(p, BiasPoint(10.0, 0.0, 0.0)) == 0.05


def test_barrier_arithmetic():
    p = DeviceParams(phi_b0=0.45, gamma_tg=0.1, phi_min=0.05, v_t0=0.0)
    assert sb.effective_barrier(p, BiasPoint(2.0, 0.0, 0.0)) == pytest.approx(0.25, abs=1e-15)


@given(device_params(), biases, st.floats(0, 3), st.floats(0, 3))
def test_barrier_non_increasing(p, b, dtg, dbg):
    moved = BiasPoint(b.v_tg + dtg, b.v_bg + (dbg if p.gamma_bg >= 0 else -dbg), b.v_ds)
    assert sb.effective_barrier(p, moved) <= sb.effective_barrier(p, b)


# ---- diode_current --------------------------------------------------------

def test_diode_equilibrium():
    p = DeviceParams()
    assert sb.diode_current(p, 0.4, 0.0) == 0.0


def test_diode_reverse_saturation():
    p = DeviceParams(n_ideality=1.0)
    kt_q = sb.K_B * p.temperature / sb.Q
    i = sb.diode_current(p, 0.4, -10 * kt_q)
    isat = isat_oracle(p, 0.4)
    assert i < 0
    assert abs(i + isat) / isat < 5e-5


def test_diode_high_barrier_is_sub_picoamp():
    p = DeviceParams(a_eff=1e-12, a_star=1.12e6, temperature=300.0, n_ideality=1.0)
    for v in np.linspace(-0.1, 0.1, 21):
        assert abs(sb.diode_current(p, 1.5, v)) < 1e-12


@pytest.mark.parametrize("v", [-0.3, -0.01, 0.02, 0.2, 0.5])
def test_diode_matches_formula(v):
    p = DeviceParams(n_ideality=1.7)
    assert sb.diode_current(p, 0.5, v) == pytest.approx(diode_oracle(p, 0.5, v), rel=1e-12)


def test_diode_saturates_instead_of_overflowing():
    p = DeviceParams(n_ideality=1.0)
    i = sb.diode_current(p, 0.0, 1e4)
    assert math.isfinite(i) and i > 0


# ---- drain_current --------------------------------------------------------

@given(device_params(), st.floats(-5, 5), st.floats(-5, 5))
def test_zero_vds_gives_zero_current(p, vtg, vbg):
    assert sb.drain_current(p, BiasPoint(vtg, vbg, 0.0)) == 0.0


@pytest.mark.parametrize("v_ds", [-0.5, -0.05, 0.05, 0.3, 1.5])
def test_zero_resistance_limit_is_diode(v_ds):
    p = DeviceParams(rho_sheet=0.0, r_sd_ext=1e-6)
    b = BiasPoint(0.5, 0.0, v_ds)
    phi = sb.effective_barrier(p, b)
    expected = diode_oracle(p, phi, v_ds)
    assert sb.drain_current(p, b) == pytest.approx(expected, rel=1e-9)
    exact = replace(p, r_sd_ext=0.0)
    assert sb.drain_current(exact, b) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("frac", [0.1, 0.5, 1.0])
def test_transparent_barrier_is_resistor(frac):
    p = DeviceParams(phi_b0=0.0, phi_min=0.0, n_ideality=1.0)
    kt_q = sb.K_B * p.temperature / sb.Q
    v = frac * 10 * kt_q * p.n_ideality
    r = p.rho_sheet * p.l_g / p.w + p.r_sd_ext
    assert sb.drain_current(p, BiasPoint(0.0, 0.0, v)) == pytest.approx(v / r, rel=1e-3)


@given(device_params(), biases)
def test_kvl_residual_bound(p, b):
    i = sb.drain_current(p, b)
    assert math.isfinite(i)
    assert abs(sb.kvl_residual(p, b, i)) <= 1e-15 * max(1.0, abs(b.v_ds))


@given(device_params(), biases)
def test_current_sign_follows_vds(p, b):
    i = sb.drain_current(p, b)
    assert i * b.v_ds >= 0


@given(device_params(), biases, st.floats(0, 2))
def test_monotone_in_vtg(p, b, dv):
    # forward bias: I rises with V_TG; reverse bias: |I| rises with V_TG
    s = 1.0 if b.v_ds >= 0 else -1.0
    i1 = s * sb.drain_current(p, b)
    i2 = s * sb.drain_current(p, BiasPoint(b.v_tg + dv, b.v_bg, b.v_ds))
    assert i2 >= i1 - REL * max(abs(i1), abs(i2))


@given(device_params(), biases, st.floats(0, 2))
def test_monotone_in_vds(p, b, dv):
    i1 = sb.drain_current(p, b)
    i2 = sb.drain_current(p, BiasPoint(b.v_tg, b.v_bg, b.v_ds + dv))
    assert i2 >= i1 - REL * max(abs(i1), abs(i2))


def test_continuous_across_barrier_clamp():
    p = DeviceParams()
    v_clamp = p.v_t0 + (p.phi_b0 - p.phi_min) / p.gamma_tg
    below = sb.drain_current(p, BiasPoint(v_clamp - 1e-9, 0.0, 1.0))
    above = sb.drain_current(p, BiasPoint(v_clamp + 1e-9, 0.0, 1.0))
    assert abs(above - below) <= 1e-6 * above
    far = sb.drain_current(p, BiasPoint(v_clamp + 3.0, 0.0, 1.0))
    assert far == above


def test_doubling_sheet_resistance_halves_ohmic_current():
    p = DeviceParams(phi_b0=0.0, phi_min=0.0, r_sd_ext=0.0)
    b = BiasPoint(0.0, 0.0, 0.1)
    i1 = sb.drain_current(p, b)
    i2 = sb.drain_current(replace(p, rho_sheet=2 * p.rho_sheet), b)
    assert i2 == pytest.approx(i1 / 2, rel=1e-3)


def test_gate_leak_is_constant_and_separate():
    p = DeviceParams()
    assert p.i_gate_leak == 1e-12
    for v in (0.0, 1.0, 2.5):
        assert sb.gate_leakage(p, BiasPoint(0.0, 1.0, v)) == 1e-12
    b = BiasPoint(1.0, 0.0, 1.0)
    assert sb.drain_current(p, b) == sb.drain_current(replace(p, i_gate_leak=1e-6), b)


def test_default_device_is_ultra_low_current():
    p = DeviceParams()
    i = sb.drain_current(p, BiasPoint(0.0, 0.0, 1.5))
    assert 1e-12 < i < 1e-9


# ---- curves ---------------------------------------------------------------

def test_single_point_sweep():
    p = DeviceParams()
    c = sb.transfer_curve(p, [1.2], 0.0, 1.0)
    assert len(c) == 1
    assert c.i_d[0] == sb.drain_current(p, BiasPoint(1.2, 0.0, 1.0))


def test_transfer_curve_monotone():
    c = sb.transfer_curve(DeviceParams(), np.linspace(-1, 5, 61), 0.0, 1.0)
    assert np.all(np.diff(c.i_d) >= 0)


def test_reversed_sweep_reverses_records():
    p = DeviceParams()
    v = list(np.linspace(0, 2, 7))
    fwd = sb.output_curve(p, v, 1.0, 0.5)
    rev = sb.output_curve(p, v[::-1], 1.0, 0.5)
    assert list(rev.i_d) == list(fwd.i_d[::-1])


@pytest.mark.parametrize("sweep", [[], [0.0, 1.0, 0.5], [0.1, 0.1]])
def test_bad_sweep_rejected(sweep):
    with pytest.raises(InputError):
        sb.transfer_curve(DeviceParams(), sweep, 0.0, 1.0)


def test_back_gate_curve_sweeps_vbg():
    c = sb.back_gate_curve(DeviceParams(), np.linspace(-5, 5, 11), 1.0, 1.0)
    assert c.meta["sweep"] == "v_bg"
    assert np.all(np.diff(c.i_d) > 0)


# ---- gate-length scaling --------------------------------------------------

def test_ion_points_decrease_with_length():
    p, b = sb.channel_limited_preset()
    pts = sb.ion_vs_inverse_length(p, sb.GATE_LENGTHS, b)
    assert len(pts) == 4
    ion = [i for _, i in pts]
    assert all(a > b for a, b in zip(ion, ion[1:]))


def test_ion_ratio_is_length_ratio_without_contact_resistance():
    p, b = sb.channel_limited_preset()
    p = replace(p, r_sd_ext=0.0)
    (_, i10), (_, i20) = sb.ion_vs_inverse_length(p, [10e-6, 20e-6], b)
    assert i10 / i20 == pytest.approx(2.0, rel=1e-4)


def test_ion_linear_in_inverse_length():
    p, b = sb.channel_limited_preset()
    x, y = np.array(sb.ion_vs_inverse_length(p, sb.GATE_LENGTHS, b)).T
    slope, icpt = np.polyfit(x, y, 1)
    r2 = 1 - np.sum((y - (slope * x + icpt)) ** 2) / np.sum((y - y.mean()) ** 2)
    assert r2 >= 0.99


def test_single_length():
    p, b = sb.channel_limited_preset()
    assert len(sb.ion_vs_inverse_length(p, [10e-6], b)) == 1


# ---- back-gate threshold shift --------------------------------------------

def test_vt_shift_self_reference():
    assert sb.back_gate_vt_shift(DeviceParams(), 0.0) == 0.0


def test_vt_shift_decoupled_back_gate():
    p = DeviceParams(gamma_bg=0.0)
    assert sb.back_gate_vt_shift(p, 3.0) == pytest.approx(0.0, abs=1e-9)


def test_vt_shift_barrier_composition():
    p = DeviceParams(gamma_bg=0.05)
    expected = -(0.05 / p.gamma_tg) * 2.0
    assert sb.back_gate_vt_shift(p, 2.0) == pytest.approx(expected, rel=1e-2)


def test_vt_shift_monotone_in_vbg():
    p = DeviceParams(gamma_bg=0.05)
    shifts = [sb.back_gate_vt_shift(p, v) for v in (-4, -2, 0, 2, 4)]
    assert all(a > b for a, b in zip(shifts, shifts[1:]))


def test_vt_out_of_range():
    with pytest.raises(ThresholdOutOfRange):
        sb.back_gate_vt_shift(DeviceParams(), 1.0, i_crit=1.0)


# ---- serialization --------------------------------------------------------

def test_params_json_round_trip():
    p = DeviceParams(phi_b0=0.61, l_g=75e-6)
    d = p.to_dict()
    assert d["schema"] == "sbmodel-params-v1"
    assert DeviceParams.from_dict(d) == p


@pytest.mark.parametrize("doc", [
    {"phi_b0": 0.5},
    {"schema": "sbmodel-params-v1", "bogus": 1.0},
    {"schema": "sbmodel-params-v1", "phi_b0": 0.1, "phi_min": 0.3},
])
def test_params_json_rejects_bad_documents(doc):
    with pytest.raises(InputError):
        DeviceParams.from_dict(doc)


def test_curve_csv_round_trip(tmp_path):
    c = sb.transfer_curve(DeviceParams(), np.linspace(0, 3, 13), 0.5, 1.0)
    path = c.to_csv(tmp_path / "c.csv")
    raw = path.read_bytes()
    assert raw.startswith(b"v_tg,v_bg,v_ds,i_d\n")
    assert b"\r" not in raw
    back = IVCurve.from_csv(path)
    assert back.meta["sweep"] == "v_tg"
    assert [r[1] for r in back.records] == [r[1] for r in c.records]
    assert [r[0] for r in back.records] == [r[0] for r in c.records]


def test_curve_csv_malformed_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("v_tg,v_bg,v_ds,i_d\n0,0,1,1e-9\n0.1,0,1,abc\n")
    with pytest.raises(InputError, match=":3:"):
        IVCurve.from_csv(path)
