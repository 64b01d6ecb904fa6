"""Compact model of a Schottky-barrier MOSFET.

The drain current is thermionic emission over a gate-lowered source barrier
in series with the channel sheet resistance and a fixed contact resistance.
Everything is SI except barrier heights, which are in eV.

The series network

    v_ds = n*kT/q * log1p(I / I_sat) + I * (R_ch + r_sd_ext)

has a closed-form solution in terms of the Lambert W function. It seeds a
Newton iteration safeguarded by bisection on ``[0, v_ds / R]``, which
polishes the current until the KVL residual is at rounding level.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError, NonConvergence, ThresholdOutOfRange
from .io import check_schema, read_csv, write_csv

Q = 1.602176634e-19
K_B = 1.380649e-23

# |exponent| cap; exp(500) ~ 1e217 keeps every product finite
EXP_ARG_MAX = 500.0
MAX_ITER = 100
RESIDUAL_SCALE = 1e-15

GATE_LENGTHS = (10e-6, 20e-6, 25e-6, 75e-6)
CHANNEL_WIDTH = 33e-6

PARAMS_SCHEMA = "sbmodel-params-v1"
CSV_HEADER = ("v_tg", "v_bg", "v_ds", "i_d")


@dataclass(frozen=True)
class DeviceParams:
    """Physical and geometric constants of the device.

    Defaults describe a 20/33 um device with a 16 nm HfO2 top gate. The
    barrier, coupling and resistance values are illustrative presets chosen
    to land in the nA range; fits are expected to override them.
    """

    phi_b0: float = 0.75
    gamma_tg: float = 0.08
    gamma_bg: float = 0.02
    phi_min: float = 0.35
    v_t0: float = 0.0
    n_ideality: float = 8.0
    temperature: float = 300.0
    a_star: float = 1.12e6
    a_eff: float = CHANNEL_WIDTH * 40e-9
    rho_sheet: float = 2.0e6
    r_sd_ext: float = 1.0e5
    l_g: float = 20e-6
    w: float = CHANNEL_WIDTH
    t_ox: float = 16e-9
    eps_ox_rel: float = 20.0
    i_gate_leak: float = 1e-12

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InputError(f"DeviceParams.{f.name} must be a finite number, got {v!r}")
        if self.phi_min < 0:
            raise InputError("phi_min must be >= 0")
        if self.phi_b0 < self.phi_min:
            raise InputError("phi_b0 must be >= phi_min")
        if self.gamma_tg <= 0:
            raise InputError("gamma_tg must be > 0")
        if self.n_ideality < 1:
            raise InputError("n_ideality must be >= 1")
        for name in ("temperature", "a_star", "a_eff", "l_g", "w", "t_ox", "eps_ox_rel"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be > 0")
        for name in ("rho_sheet", "r_sd_ext", "i_gate_leak"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")

    @property
    def thermal_voltage(self) -> float:
        return K_B * self.temperature / Q

    @property
    def channel_resistance(self) -> float:
        return self.rho_sheet * self.l_g / self.w

    @property
    def series_resistance(self) -> float:
        return self.channel_resistance + self.r_sd_ext

    def to_dict(self) -> dict:
        d = {k: float(v) for k, v in asdict(self).items()}
        d["schema"] = PARAMS_SCHEMA
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "DeviceParams":
        check_schema(doc, PARAMS_SCHEMA, "device params")
        names = {f.name for f in fields(cls)}
        extra = set(doc) - names - {"schema"}
        if extra:
            raise InputError(f"unknown device parameter(s): {sorted(extra)}")
        try:
            return cls(**{k: float(v) for k, v in doc.items() if k != "schema"})
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad device params: {exc}") from exc


@dataclass(frozen=True)
class BiasPoint:
    v_tg: float = 0.0
    v_bg: float = 0.0
    v_ds: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.v_tg, self.v_bg, self.v_ds)):
            raise InputError(f"non-finite bias {self!r}")


@dataclass(frozen=True)
class IVCurve:
    """Ordered (bias, drain current) records plus a free-form label map.

    ``meta["sweep"]`` names the swept terminal when known; records must be
    strictly monotone in it.
    """

    records: tuple = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple((b, float(i)) for b, i in self.records))
        for _, i in self.records:
            if not math.isfinite(i):
                raise InputError("IVCurve currents must be finite")
        sweep = self.meta.get("sweep")
        if sweep is not None and len(self.records) > 1:
            d = np.diff([getattr(b, sweep) for b, _ in self.records])
            if not (np.all(d > 0) or np.all(d < 0)):
                raise InputError(f"IVCurve records not strictly monotone in {sweep}")

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        if name == "i_d":
            return np.array([i for _, i in self.records], dtype=float)
        return np.array([getattr(b, name) for b, _ in self.records], dtype=float)

    @property
    def v_tg(self):
        return self.column("v_tg")

    @property
    def v_bg(self):
        return self.column("v_bg")

    @property
    def v_ds(self):
        return self.column("v_ds")

    @property
    def i_d(self):
        return self.column("i_d")

    def to_csv(self, path):
        rows = ((b.v_tg, b.v_bg, b.v_ds, i) for b, i in self.records)
        return write_csv(path, CSV_HEADER, rows)

    @classmethod
    def from_csv(cls, path, meta: dict | None = None) -> "IVCurve":
        header, rows = read_csv(path, required=CSV_HEADER)
        idx = [header.index(c) for c in CSV_HEADER]
        records = [(BiasPoint(r[idx[0]], r[idx[1]], r[idx[2]]), r[idx[3]]) for r in rows]
        meta = dict(meta or {})
        meta.setdefault("source", str(path))
        if "sweep" not in meta and len(records) > 1:
            varying = [c for c in CSV_HEADER[:3] if len({getattr(b, c) for b, _ in records}) > 1]
            if len(varying) == 1:
                meta["sweep"] = varying[0]
        return cls(tuple(records), meta)


def effective_barrier(params: DeviceParams, bias: BiasPoint) -> float:
    """Source barrier in eV after top- and back-gate lowering, floored at phi_min."""
    phi = (params.phi_b0
           - params.gamma_tg * (bias.v_tg - params.v_t0)
           - params.gamma_bg * bias.v_bg)
    return max(params.phi_min, phi)


def saturation_current(params: DeviceParams, phi_eff: float) -> float:
    vt = params.thermal_voltage
    arg = max(-phi_eff / vt, -2 * EXP_ARG_MAX)
    return params.a_eff * params.a_star * params.temperature ** 2 * math.exp(arg)


def diode_current(params: DeviceParams, phi_eff: float, v_junction: float) -> float:
    """Thermionic-emission current through the source junction.

    The junction exponent is clamped to ``EXP_ARG_MAX`` so that the result
    saturates instead of overflowing.
    """
    if phi_eff < 0:
        raise InputError("phi_eff must be >= 0")
    arg = v_junction / (params.n_ideality * params.thermal_voltage)
    arg = min(max(arg, -EXP_ARG_MAX), EXP_ARG_MAX)
    return saturation_current(params, phi_eff) * math.expm1(arg)


def _lambertw_exp(log_z: float) -> float:
    """Principal Lambert W of ``exp(log_z)`` without forming the exponential."""
    if log_z < -30.0:
        z = math.exp(log_z)
        return z - z * z
    w = log_z - math.log(log_z) if log_z > 1.0 else math.exp(log_z) / (1.0 + math.exp(log_z) * 0.5)
    if w <= 0.0:
        w = 1e-300
    for _ in range(50):
        # Newton on w + ln(w) = log_z
        step = (w + math.log(w) - log_z) / (1.0 + 1.0 / w)
        w_new = w - step
        if w_new <= 0.0:
            w_new = 0.5 * w
        if abs(w_new - w) <= 4e-16 * w_new:
            return w_new
        w = w_new
    return w


def _network(params: DeviceParams, bias: BiasPoint):
    phi = effective_barrier(params, bias)
    nvt = params.n_ideality * params.thermal_voltage
    return saturation_current(params, phi), nvt, params.series_resistance


def _mismatch(i, v, i_sat, nvt, r):
    """Current mismatch at ``i`` and its volts-equivalent.

    The junction takes ``v - i*r``; the mismatch ``i - I_diode`` divided by
    the network conductance is the Newton correction to the junction voltage.
    """
    arg = min(max((v - i * r) / nvt, -EXP_ARG_MAX), EXP_ARG_MAX)
    e = math.exp(arg)
    delta = i - i_sat * math.expm1(arg)
    g_j = i_sat * e / nvt
    return delta, delta / (g_j + 1.0 / r), 1.0 + r * g_j


def kvl_residual(params: DeviceParams, bias: BiasPoint, i_d: float) -> float:
    """KVL mismatch of the series network at current ``i_d``, in volts.

    Recomputed from scratch: the junction voltage implied by the resistive
    drop is fed back through the diode law, and the current mismatch is
    converted to the junction-voltage correction that would cancel it.
    """
    i_sat, nvt, r = _network(params, bias)
    if r == 0.0:
        phi = effective_barrier(params, bias)
        return diode_current(params, phi, bias.v_ds) - i_d
    return _mismatch(i_d, bias.v_ds, i_sat, nvt, r)[1]


def drain_current(params: DeviceParams, bias: BiasPoint) -> float:
    v = bias.v_ds
    if v == 0.0:
        return 0.0
    r = params.series_resistance
    if r == 0.0:
        return diode_current(params, effective_barrier(params, bias), v)
    i_sat, nvt, _ = _network(params, bias)
    if i_sat == 0.0:
        return 0.0
    # stricter than the 1e-15*max(1, |v_ds|) contract so tiny biases stay resolved
    tol = RESIDUAL_SCALE * abs(v)

    # closed form: I = nVt/R * W(I_sat*R/nVt * exp((v + I_sat*R)/nVt)) - I_sat
    log_z = math.log(i_sat * r / nvt) + (v + i_sat * r) / nvt
    x = nvt / r * _lambertw_exp(log_z) - i_sat

    if v > 0:
        lo, hi = 0.0, v / r
    else:
        lo, hi = max(v / r, -i_sat), 0.0
    if not lo <= x <= hi:
        x = min(max(x, lo), hi)

    best_x, best_m = x, math.inf
    for _ in range(MAX_ITER):
        delta, m, slope = _mismatch(x, v, i_sat, nvt, r)
        if abs(m) < abs(best_m):
            best_x, best_m = x, m
        if abs(m) <= tol:
            return x
        if delta < 0:
            lo = x
        else:
            hi = x
        x_new = x - delta / slope
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if x_new == x or x_new in (lo, hi):
            # bracket has collapsed to adjacent floats
            return best_x
        x = x_new
    raise NonConvergence(
        f"drain_current did not converge at {bias} (residual {best_m:.3g} V)",
        residual=best_m, bias=bias)


def gate_leakage(params: DeviceParams, bias: BiasPoint | None = None) -> float:
    """Gate/box leakage: a constant magnitude, kept out of the drain current."""
    return params.i_gate_leak


def _check_sweep(sweep: Sequence[float]) -> list[float]:
    sweep = [float(v) for v in sweep]
    if not sweep:
        raise InputError("sweep must be non-empty")
    d = np.diff(sweep)
    if len(sweep) > 1 and not (np.all(d > 0) or np.all(d < 0)):
        raise InputError("sweep must be strictly monotone")
    return sweep


def _curve(params, biases, meta):
    records = []
    for b in biases:
        try:
            records.append((b, drain_current(params, b)))
        except NonConvergence as exc:
            exc.bias = b
            raise
    return IVCurve(tuple(records), meta)


def transfer_curve(params: DeviceParams, v_tg_sweep, v_bg: float, v_ds: float) -> IVCurve:
    sweep = _check_sweep(v_tg_sweep)
    return _curve(params, [BiasPoint(v, v_bg, v_ds) for v in sweep],
                  {"sweep": "v_tg", "v_bg": v_bg, "v_ds": v_ds})


def output_curve(params: DeviceParams, v_ds_sweep, v_tg: float, v_bg: float) -> IVCurve:
    sweep = _check_sweep(v_ds_sweep)
    return _curve(params, [BiasPoint(v_tg, v_bg, v) for v in sweep],
                  {"sweep": "v_ds", "v_tg": v_tg, "v_bg": v_bg})


def back_gate_curve(params: DeviceParams, v_bg_sweep, v_tg: float, v_ds: float) -> IVCurve:
    """I_D versus V_BG with the top gate held fixed."""
    sweep = _check_sweep(v_bg_sweep)
    return _curve(params, [BiasPoint(v_tg, v, v_ds) for v in sweep],
                  {"sweep": "v_bg", "v_tg": v_tg, "v_ds": v_ds})


def ion_vs_inverse_length(params: DeviceParams, lengths: Iterable[float],
                          bias: BiasPoint) -> list[tuple[float, float]]:
    out = []
    for l_g in lengths:
        if l_g <= 0:
            raise InputError("gate lengths must be positive")
        out.append((1.0 / l_g, drain_current(replace(params, l_g=l_g), bias)))
    return out


def channel_limited_preset() -> tuple[DeviceParams, BiasPoint]:
    """Device and bias where the barrier is fully collapsed and the channel dominates."""
    params = DeviceParams(phi_b0=0.45, phi_min=0.0, gamma_tg=0.1, v_t0=0.0, r_sd_ext=1e4)
    return params, BiasPoint(v_tg=10.0, v_bg=0.0, v_ds=0.1)


def threshold_voltage_cc(params: DeviceParams, v_bg: float, v_ds: float = 0.5,
                         i_crit: float = 1e-9, window=(-20.0, 20.0), tol=1e-12) -> float:
    """Constant-current threshold: the V_TG at which I_D reaches ``i_crit``."""
    lo, hi = window
    f = lambda vtg: drain_current(params, BiasPoint(vtg, v_bg, v_ds)) - i_crit
    if f(lo) >= 0 or f(hi) < 0:
        raise ThresholdOutOfRange(
            f"I_D={i_crit:g} A not crossed for V_TG in [{lo}, {hi}] at V_BG={v_bg}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def back_gate_vt_shift(params: DeviceParams, v_bg: float, v_ds: float = 0.5,
                       i_crit: float = 1e-9, window=(-20.0, 20.0)) -> float:
    if v_bg == 0.0:
        return 0.0
    ref = threshold_voltage_cc(params, 0.0, v_ds, i_crit, window)
    return threshold_voltage_cc(params, v_bg, v_ds, i_crit, window) - ref
