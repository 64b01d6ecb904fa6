"""Named experiment presets, one per figure panel.

Sweep presets return plain tables so the command line can emit them as CSV
or JSON. Neuron and frequency presets return configurations plus the V_TG
values they are meant to be run at.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import extract, sbmodel
from .extract import VccsModel
from .neuron import NeuronConfig
from .sbmodel import BiasPoint, DeviceParams


@dataclass(frozen=True)
class Table:
    name: str
    header: tuple
    rows: tuple


def _grid(start, stop, num):
    return np.linspace(start, stop, num).tolist()


def _iv_table(name, curves):
    rows = tuple(tuple(map(float, (b.v_tg, b.v_bg, b.v_ds, i))) for c in curves for b, i in c.records)
    return Table(name, sbmodel.CSV_HEADER, rows)


# ---- device sweeps ----------------------------------------------------------

def fig4a(p: DeviceParams):
    """Back-gate transfer curves of the 20/33 um device."""
    p = replace(p, l_g=20e-6, w=sbmodel.CHANNEL_WIDTH)
    curves = [sbmodel.back_gate_curve(p, _grid(-10, 10, 41), 0.0, vd) for vd in (0.1, 1.0)]
    return [_iv_table("fig4a_id_vbg", curves)]


def fig4b(p: DeviceParams):
    p = replace(p, l_g=20e-6, w=sbmodel.CHANNEL_WIDTH)
    curves = [sbmodel.output_curve(p, _grid(0, 3, 31), 0.0, vbg) for vbg in (0.0, 5.0, 10.0)]
    return [_iv_table("fig4b_id_vd", curves)]


def fig4c(p: DeviceParams):
    """Back-gate oxide leakage against drain voltage."""
    rows = tuple((vd, sbmodel.gate_leakage(p, BiasPoint(0.0, 0.0, vd))) for vd in _grid(0, 3, 31))
    return [Table("fig4c_ibg_vd", ("v_ds", "i_bg_leak"), rows)]


def fig5a(p: DeviceParams):
    p = replace(p, l_g=10e-6, w=sbmodel.CHANNEL_WIDTH)
    curves = [sbmodel.transfer_curve(p, _grid(-2, 6, 41), 0.0, vd) for vd in (0.1, 1.0, 1.5)]
    return [_iv_table("fig5a_id_vtg", curves)]


def fig5b(p: DeviceParams):
    p = replace(p, l_g=10e-6, w=sbmodel.CHANNEL_WIDTH)
    curves = [sbmodel.output_curve(p, _grid(0, 3, 31), vtg, 0.0) for vtg in (2.0, 3.0, 4.0, 5.0)]
    return [_iv_table("fig5b_id_vd", curves)]


def fig5ce(p: DeviceParams):
    """Transconductance, effective mobility and R_SD extracted from simulated curves."""
    p = replace(p, l_g=10e-6, w=sbmodel.CHANNEL_WIDTH)
    transfer = sbmodel.transfer_curve(p, _grid(-2, 8, 101), 0.0, 0.1)
    v_t = extract.extract_vt(transfer)
    low = [sbmodel.output_curve(p, _grid(0.01, 0.05, 5), v_t + k, 0.0) for k in (1.0, 2.0, 3.0, 4.0)]
    ex = extract.extract_all(transfer, low, p)
    _, fit = extract.extract_rsd(low, v_t)
    return [
        Table("fig5c_gm", ("v_tg", "g_m"), ex.gm_curve),
        Table("fig5d_mobility", ("v_tg", "mu_eff"), ex.mu_eff_curve),
        Table("fig5e_rsd", ("inv_overdrive", "r_tot"), tuple(zip(fit["inv_overdrive"], fit["r_tot"]))),
        Table("fig5e_rsd_summary", ("v_t", "r_sd", "slope", "r2"),
              ((ex.v_t_extracted, ex.r_sd, fit["slope"], fit["r2"]),)),
    ]


def fig6a(p: DeviceParams):
    """Drain current tuned by the back gate at a fixed top gate, and the V_T shift it causes."""
    p = replace(p, l_g=20e-6, w=sbmodel.CHANNEL_WIDTH)
    curves = [sbmodel.back_gate_curve(p, _grid(-10, 10, 41), vtg, 1.0) for vtg in (1.0, 2.0, 3.0)]
    shift = tuple((vbg, sbmodel.back_gate_vt_shift(p, vbg)) for vbg in _grid(-10, 10, 5))
    return [_iv_table("fig6a_id_vbg", curves), Table("fig6a_vt_shift", ("v_bg", "delta_v_t"), shift)]


def fig6b(p: DeviceParams):
    curves = [sbmodel.transfer_curve(replace(p, l_g=l, w=sbmodel.CHANNEL_WIDTH), _grid(-2, 6, 41), 0.0, 1.0)
              for l in sbmodel.GATE_LENGTHS]
    rows = tuple((l, b.v_tg, i) for l, c in zip(sbmodel.GATE_LENGTHS, curves) for b, i in c.records)
    return [Table("fig6b_id_vtg_by_length", ("l_g", "v_tg", "i_d"), rows)]


def fig6c(p: DeviceParams | None = None):
    """On-current against inverse gate length for the channel-limited device."""
    cp, bias = sbmodel.channel_limited_preset()
    cp = replace(cp, w=sbmodel.CHANNEL_WIDTH)
    pts = sbmodel.ion_vs_inverse_length(cp, sbmodel.GATE_LENGTHS, bias)
    rows = tuple((l, inv, i) for l, (inv, i) in zip(sbmodel.GATE_LENGTHS, pts))
    return [Table("fig6c_ion_inv_lg", ("l_g", "inv_l_g", "i_on"), rows)]


SWEEPS = {
    "fig4a": fig4a, "fig4b": fig4b, "fig4c": fig4c,
    "fig5a": fig5a, "fig5b": fig5b, "fig5c-e": fig5ce,
    "fig6a": fig6a, "fig6b": fig6b, "fig6c": fig6c,
}


# ---- neuron -----------------------------------------------------------------

@lru_cache(maxsize=8)
def hardware_vccs(params: DeviceParams | None = None, v_ds: float = 1.5, n_knots: int = 36) -> VccsModel:
    """Piecewise-linear source fitted to the simulated transfer curve at drain bias v_ds."""
    params = params or DeviceParams()
    curve = sbmodel.transfer_curve(params, _grid(-1, 6, 71), 0.0, v_ds)
    return extract.fit_vccs(curve, n_knots)


FIG7B_VTG = (2.5, 3.0, 3.5, 4.0)
FIG7C_VTG = tuple(_grid(0, 4, 17))


@dataclass(frozen=True)
class NeuronPreset:
    config: NeuronConfig
    v_tg: tuple
    duration: float


def neuron_preset(name: str) -> NeuronPreset:
    if name == "fig7b":
        return NeuronPreset(NeuronConfig(c_ext=4.7e-9, v_d=1.5, v_th=0.6), FIG7B_VTG, 0.25)
    raise KeyError(name)


NEURON_PRESETS = ("fig7b",)


def freq_preset(name: str) -> tuple[list[tuple[str, NeuronConfig]], tuple]:
    """(label, config) pairs and the V_TG grid for a frequency preset."""
    dev = DeviceParams()
    if name == "fig7c":
        return [("vccs_c4.7n", NeuronConfig(source=hardware_vccs(), c_ext=4.7e-9, v_d=1.5))], \
            tuple(_grid(-1, 6, 29))
    if name == "fig7c-vd":
        return [(f"vd{vd}", NeuronConfig(source=dev, c_ext=4.7e-9, v_d=vd)) for vd in (1.5, 2.5)], FIG7C_VTG
    if name == "fig7c-c":
        return [(f"c{lab}", NeuronConfig(source=dev, c_ext=c, v_d=2.5))
                for lab, c in (("10p", 10e-12), ("4.7n", 4.7e-9))], FIG7C_VTG
    if name == "fig7d":
        return [("device", NeuronConfig(source=dev, c_ext=4.7e-9, v_d=1.5)),
                ("vccs", NeuronConfig(source=hardware_vccs(), c_ext=4.7e-9, v_d=1.5))], FIG7C_VTG
    raise KeyError(name)


FREQ_PRESETS = ("fig7c", "fig7c-vd", "fig7c-c", "fig7d")
SNN_PRESETS = ("fig7e",)
