"""Capacitor integrate-and-fire neuron driven by a voltage-controlled current source.

The membrane obeys

    (c_ext + c_par) dV/dt = I_source(v_tg, v_d - V) - g_leak * V

and is integrated with classical RK4. A step that carries V across v_th is
split at the crossing (found by linear interpolation): a spike is logged,
V is reset and held for t_refractory, and the rest of the step is
integrated from the reset level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InconsistentRatio, InputError, NonFiniteState, NonPositiveCurrent
from .extract import VccsModel
from .io import check_schema, read_json, write_csv
from .sbmodel import BiasPoint, DeviceParams, drain_current

NEURON_SCHEMA = "neuron-v1"

CAPACITORS = (10e-12, 4.7e-9)
DRAIN_VOLTAGES = (1.5, 2.5)

# spikes allowed inside one RK4 step before dt is declared unusable
MAX_SPIKES_PER_STEP = 10_000

Source = Union[VccsModel, DeviceParams]


@dataclass(frozen=True)
class NeuronConfig:
    c_ext: float = 4.7e-9
    source: Source = field(default_factory=DeviceParams)
    v_d: float = 1.5
    v_th: float = 0.6
    v_reset: float = 0.0
    c_par: float = 0.0
    t_refractory: float = 0.0
    g_leak: float = 0.0
    v_bg: float = 0.0

    def __post_init__(self):
        if not isinstance(self.source, (VccsModel, DeviceParams)):
            raise InputError("source must be a VccsModel or DeviceParams")
        for f in fields(self):
            if f.name != "source" and not math.isfinite(getattr(self, f.name)):
                raise InputError(f"NeuronConfig.{f.name} must be finite")
        if self.c_ext <= 0:
            raise InputError("c_ext must be > 0")
        if self.c_par < 0 or self.t_refractory < 0 or self.g_leak < 0:
            raise InputError("c_par, t_refractory and g_leak must be >= 0")
        if self.v_th <= self.v_reset:
            raise InputError("v_th must exceed v_reset")

    @property
    def c_total(self) -> float:
        return self.c_ext + self.c_par

    def to_dict(self, params_path: str | None = None) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "source"}
        d["schema"] = NEURON_SCHEMA
        if isinstance(self.source, VccsModel):
            d["source"] = {"vccs": self.source.to_dict()}
        elif params_path is not None:
            d["source"] = {"device_params": str(params_path)}
        else:
            d["source"] = {"device_params": self.source.to_dict()}
        return d

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "NeuronConfig":
        check_schema(doc, NEURON_SCHEMA, "neuron config")
        src = doc.get("source")
        if not isinstance(src, dict) or len(src) != 1:
            raise InputError("neuron config needs exactly one source: 'vccs' or 'device_params'")
        if "vccs" in src:
            source = VccsModel.from_dict(src["vccs"])
        elif "device_params" in src:
            ref = src["device_params"]
            if isinstance(ref, str):
                path = Path(ref)
                if base_dir is not None and not path.is_absolute():
                    path = Path(base_dir) / path
                ref = read_json(path)
            source = DeviceParams.from_dict(ref)
        else:
            raise InputError(f"unknown neuron source {sorted(src)}")
        names = {f.name for f in fields(cls)} - {"source"}
        extra = set(doc) - names - {"schema", "source"}
        if extra:
            raise InputError(f"unknown neuron config key(s): {sorted(extra)}")
        try:
            kw = {k: float(v) for k, v in doc.items() if k in names}
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad neuron config: {exc}") from exc
        return cls(source=source, **kw)

    @classmethod
    def from_json(cls, path) -> "NeuronConfig":
        return cls.from_dict(read_json(path), Path(path).parent)


@dataclass(frozen=True)
class NeuronState:
    v_mem: float = 0.0
    t: float = 0.0
    refractory_until: float = 0.0
    spike_times: tuple = ()


@dataclass(frozen=True)
class RunResult:
    spike_times: tuple
    t: np.ndarray
    v: np.ndarray
    state: NeuronState
    # trace index of the post-reset sample of each spike
    reset_index: tuple = ()

    def trace_rows(self):
        return zip(self.t.tolist(), self.v.tolist())


@dataclass(frozen=True)
class FrequencyMeasurement:
    f_hz: float
    timed_out: bool
    spike_times: tuple
    dt: float


@dataclass(frozen=True)
class FrequencyCurve:
    points: tuple
    config: NeuronConfig
    timed_out: tuple = ()

    def to_csv(self, path):
        return write_csv(path, ("v_tg", "f_hz"), self.points)


def current_source(config: NeuronConfig, v_tg: float) -> Callable[[float], float]:
    """Charging current as a function of membrane voltage at fixed v_tg."""
    src = config.source
    if isinstance(src, VccsModel):
        i = src(v_tg)
        return lambda v: i
    v_d, v_bg = config.v_d, config.v_bg
    return lambda v: drain_current(src, BiasPoint(v_tg, v_bg, v_d - v))


def _rk4(f, v, h, g, c):
    def dv(x):
        return (f(x) - g * x) / c
    k1 = dv(v)
    k2 = dv(v + 0.5 * h * k1)
    k3 = dv(v + 0.5 * h * k2)
    k4 = dv(v + h * k3)
    return v + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0


def _advance(f, cfg: NeuronConfig, v, t, refr, t_end, spikes, on_spike=None):
    c, g = cfg.c_total, cfg.g_leak
    fired = 0
    while True:
        if refr > t:
            v = cfg.v_reset
            if refr >= t_end:
                return v, t_end, refr
            t = refr
        h = t_end - t
        if h <= 0:
            return v, t_end, refr
        v_new = _rk4(f, v, h, g, c)
        if not math.isfinite(v_new):
            raise NonFiniteState(f"membrane voltage became {v_new} at t={t:g} s; reduce dt")
        if v_new < cfg.v_th:
            return v_new, t_end, refr
        frac = (cfg.v_th - v) / (v_new - v) if v < cfg.v_th else 0.0
        t_cross = t + frac * h
        spikes.append(t_cross)
        if on_spike is not None:
            on_spike(t_cross)
        fired += 1
        if fired > MAX_SPIKES_PER_STEP:
            raise NonFiniteState("too many spikes in one step; reduce dt")
        v, t, refr = cfg.v_reset, t_cross, t_cross + cfg.t_refractory


def step(state: NeuronState, config: NeuronConfig, dt: float, v_tg: float) -> NeuronState:
    """Advance by one RK4 step of length dt.

    Guidance: dt <= c_total * v_th / (10 * I_max) keeps at least ten steps
    per charging ramp.
    """
    if not dt > 0:
        raise InputError("dt must be > 0")
    spikes = list(state.spike_times)
    v, t, refr = _advance(current_source(config, v_tg), config, state.v_mem, state.t,
                          state.refractory_until, state.t + dt, spikes)
    return NeuronState(v, t, refr, tuple(spikes))


def run(config: NeuronConfig, v_tg: float, duration: float, dt: float, *,
        decimate: int = 1, record: bool = True, state: NeuronState | None = None,
        max_spikes: int | None = None) -> RunResult:
    """Integrate for ``duration`` seconds (or until ``max_spikes`` spikes).

    Every ``decimate``-th step end is kept in the trace; each spike also adds
    a (t_spike, v_th) and a (t_spike, v_reset) sample.
    """
    if not 0 < duration < math.inf:
        raise InputError("duration must be finite and > 0")
    if not 0 < dt < math.inf:
        raise InputError("dt must be finite and > 0")
    if decimate < 1:
        raise InputError("decimate must be >= 1")
    state = state or NeuronState(v_mem=config.v_reset)
    f = current_source(config, v_tg)
    v, t0, refr = state.v_mem, state.t, state.refractory_until
    spikes = list(state.spike_times)
    ts, vs, reset_idx = ([t0], [v], []) if record else ([], [], [])

    def mark(t_cross):
        if record:
            ts.extend((t_cross, t_cross))
            vs.extend((config.v_th, config.v_reset))
            reset_idx.append(len(ts) - 1)

    n_steps = max(1, math.ceil(duration / dt - 1e-9))
    t = t0
    for k in range(1, n_steps + 1):
        t_end = t0 + duration if k == n_steps else t0 + k * dt
        v, t, refr = _advance(f, config, v, t, refr, t_end, spikes, mark)
        if record and (k % decimate == 0 or k == n_steps):
            ts.append(t)
            vs.append(v)
        if max_spikes is not None and len(spikes) >= max_spikes:
            if record and ts[-1] != t:
                ts.append(t)
                vs.append(v)
            break
    return RunResult(tuple(spikes), np.array(ts), np.array(vs),
                     NeuronState(v, t, refr, tuple(spikes)), tuple(reset_idx))


def ideal_frequency(i_const: float, config: NeuronConfig) -> float:
    """Firing rate of a leak-free neuron charged by a constant current."""
    if not i_const > 0:
        raise NonPositiveCurrent(f"i_const must be > 0, got {i_const}")
    return 1.0 / (config.c_total * (config.v_th - config.v_reset) / i_const + config.t_refractory)


def net_drive(config: NeuronConfig, v_tg: float, v_mem: float) -> float:
    return current_source(config, v_tg)(v_mem) - config.g_leak * v_mem


def default_dt(config: NeuronConfig, v_tg: float, steps_per_period: int = 200) -> float:
    """Step size from the fastest possible period (drive at the reset level)."""
    i0 = net_drive(config, v_tg, config.v_reset)
    if i0 <= 0:
        return math.inf
    return (config.c_total * (config.v_th - config.v_reset) / i0 + config.t_refractory) / steps_per_period


def measure_frequency(config: NeuronConfig, v_tg: float, dt: float | None = None,
                      timeout: float | None = None, n_spikes: int = 3) -> FrequencyMeasurement:
    """Steady-state rate 1/(t_3 - t_2) from a run started at the reset level.

    Returns 0 Hz with ``timed_out`` set when fewer than ``n_spikes`` spikes
    occur before ``timeout``. Sources here never increase with V_mem, so a
    net drive <= 0 at v_reset or at v_th means the threshold is unreachable
    and no simulation is needed.
    """
    d_reset = net_drive(config, v_tg, config.v_reset)
    if d_reset <= 0 or net_drive(config, v_tg, config.v_th) <= 0:
        return FrequencyMeasurement(0.0, True, (), 0.0 if dt is None else dt)
    t_min = config.c_total * (config.v_th - config.v_reset) / d_reset + config.t_refractory
    if not math.isfinite(t_min):
        # drive so small (subnormal) that the period overflows
        return FrequencyMeasurement(0.0, True, (), 0.0 if dt is None else dt)
    if dt is None:
        dt = t_min / 200
    if timeout is None:
        timeout = 100 * n_spikes * t_min
    res = run(config, v_tg, timeout, dt, record=False, max_spikes=n_spikes)
    sp = res.spike_times
    if len(sp) < n_spikes:
        return FrequencyMeasurement(0.0, True, sp, dt)
    return FrequencyMeasurement(1.0 / (sp[n_spikes - 1] - sp[n_spikes - 2]), False, sp, dt)


def frequency_sweep(config: NeuronConfig, v_tgs: Sequence[float], dt: float | None = None,
                    timeout: float | None = None) -> FrequencyCurve:
    pts, flags = [], []
    for v in v_tgs:
        m = measure_frequency(config, float(v), dt, timeout)
        pts.append((float(v), m.f_hz))
        flags.append(m.timed_out)
    return FrequencyCurve(tuple(pts), config, tuple(flags))


def fit_parasitic(f_ratio: float, c_small: float, c_large: float) -> float:
    """Parallel capacitance that turns an ideal C ratio into the observed rate ratio.

    Solves (c_large + c_par) = f_ratio * (c_small + c_par).
    """
    if not f_ratio > 1:
        raise InconsistentRatio("f_ratio must be > 1")
    if not c_large > c_small > 0:
        raise InconsistentRatio("need c_large > c_small > 0")
    c_par = (c_large - f_ratio * c_small) / (f_ratio - 1.0)
    if c_par < 0:
        # absorb rounding when f_ratio == c_large / c_small
        if -c_par <= 1e-12 * c_large:
            return 0.0
        raise InconsistentRatio(
            f"f_ratio={f_ratio} exceeds c_large/c_small={c_large / c_small}; c_par would be negative")
    return c_par


def interval_charges(result: RunResult, config: NeuronConfig, v_tg: float) -> list[float]:
    """Trapezoid integral of the source current over each complete charging ramp.

    A ramp runs from the end of the refractory hold after one spike to the
    next threshold crossing; current during the hold does not reach the
    capacitor and is excluded.
    """
    f = current_source(config, v_tg)
    idx = result.reset_index
    out = []
    for a, b in zip(idx, idx[1:]):
        # a: post-reset sample of spike k; b - 1: threshold sample of spike k+1
        t, v = result.t[a:b], result.v[a:b]
        t_start = t[0] + config.t_refractory
        keep = t > t_start
        t = np.concatenate(([t_start], t[keep]))
        v = np.concatenate(([config.v_reset], v[keep]))
        i = np.array([f(x) for x in v])
        out.append(float(np.trapezoid(i, t)))
    return out


def spikes_csv(path, spike_times):
    return write_csv(path, ("t_spike",), ((t,) for t in spike_times))


def trace_csv(path, result: RunResult):
    return write_csv(path, ("t", "v_mem"), result.trace_rows())
