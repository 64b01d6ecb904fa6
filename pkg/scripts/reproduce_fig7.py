"""Neuron experiments: charging traces, frequency against V_TG and the capacitor-ratio fit.

Writes CSV tables to --out-dir and prints a short summary.
"""

import argparse
from dataclasses import replace
from pathlib import Path

from sbneuro import neuron, presets
from sbneuro.extract import VccsModel
from sbneuro.neuron import NeuronConfig


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("results/fig7"))
    ap.add_argument("--ratio", type=float, default=5.4, help="observed 10 pF / 4.7 nF rate ratio")
    return ap.parse_args()


def main():
    args = parse_args()
    out = args.out_dir

    pre = presets.neuron_preset("fig7b")
    for v in pre.v_tg:
        res = neuron.run(pre.config, v, pre.duration, neuron.default_dt(pre.config, v), decimate=10)
        neuron.trace_csv(out / f"fig7b_trace_vtg{v}.csv", res)
        first = f"{res.spike_times[0] * 1e3:.2f} ms" if res.spike_times else "none"
        print(f"fig7b  V_TG={v:.1f} V: first spike {first}, {len(res.spike_times)} spikes")

    for name in ("fig7c-vd", "fig7c-c", "fig7d"):
        runs, grid = presets.freq_preset(name)
        for label, cfg in runs:
            curve = neuron.frequency_sweep(cfg, grid)
            curve.to_csv(out / f"{name}_{label}.csv")
            f = [p[1] for p in curve.points]
            print(f"{name:8s} {label:8s}: f from {f[0]:.4g} to {f[-1]:.4g} Hz")

    c_small, c_large = neuron.CAPACITORS
    c_par = neuron.fit_parasitic(args.ratio, c_small, c_large)
    src = VccsModel.constant(10e-9)
    base = NeuronConfig(source=src, c_par=c_par)
    ratio = (neuron.measure_frequency(replace(base, c_ext=c_small), 0.0).f_hz
             / neuron.measure_frequency(replace(base, c_ext=c_large), 0.0).f_hz)
    print(f"parasitic: c_par = {c_par:.4g} F; simulated ratio with it = {ratio:.6f} "
          f"(ideal ratio without it = {c_large / c_small:.0f})")


if __name__ == "__main__":
    main()
