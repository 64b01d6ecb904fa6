"""Command-line front end.

Every command writes its results plus ``manifest_<command>.json`` (``manifest_snn-train.json`` / ``manifest_snn-eval.json`` for snn) into
``--out-dir``. The manifest records the resolved arguments, so
``sbneuro replay <manifest>`` re-runs the command and ``--verify`` checks the
new outputs against the recorded digests.

Exit codes: 0 success, 1 replay verification mismatch, 2 input or
configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, extract, neuron, presets, sbmodel, snn
from .errors import InputError, NumericalError
from .io import check_schema, fmt, read_csv, read_json, sha256_file, write_csv, write_json
from .neuron import NeuronConfig
from .sbmodel import DeviceParams, IVCurve

MANIFEST_SCHEMA = "run-manifest-v1"
EXIT_OK, EXIT_MISMATCH, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3

# argument names holding input file paths; stored absolute in the manifest
_PATH_ARGS = ("params", "config", "data", "weights", "csvs", "csv", "manifest")


@dataclass
class Outcome:
    outputs: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seed: int | None = None


def _table(out_dir: Path, stem: str, header, rows, form: str) -> Path:
    rows = [tuple(float(v) for v in r) for r in rows]
    if form == "json":
        return write_json(out_dir / f"{stem}.json", {"columns": list(header), "rows": [list(r) for r in rows]})
    return write_csv(out_dir / f"{stem}.csv", header, rows)


def _float_list(text: str) -> list[float]:
    """Comma list ``a,b,c`` or inclusive grid ``start:stop:num``."""
    try:
        if ":" in text:
            a, b, n = text.split(":")
            return np.linspace(float(a), float(b), int(n)).tolist()
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad value list {text!r}: {exc}") from exc


def _load_params(path) -> DeviceParams:
    return DeviceParams.from_dict(read_json(path)) if path else DeviceParams()


# ---- commands -----------------------------------------------------------------

def cmd_sweep(args) -> Outcome:
    out = Outcome(inputs=[args.params] if args.params else [])
    p = _load_params(args.params)
    out.config = {"params": p.to_dict(), "preset": args.preset}
    if args.preset:
        tables = presets.SWEEPS[args.preset](p)
    else:
        if not args.sweep:
            raise InputError("sweep needs --preset or --sweep {v_tg,v_ds,v_bg}")
        values = np.linspace(args.start, args.stop, args.num).tolist()
        if args.sweep == "v_tg":
            curve = sbmodel.transfer_curve(p, values, args.v_bg, args.v_ds)
        elif args.sweep == "v_ds":
            curve = sbmodel.output_curve(p, values, args.v_tg, args.v_bg)
        else:
            curve = sbmodel.back_gate_curve(p, values, args.v_tg, args.v_ds)
        tables = [presets._iv_table("iv", [curve])]
        out.config["sweep"] = {"variable": args.sweep, "start": args.start, "stop": args.stop,
                               "num": args.num, "v_tg": args.v_tg, "v_bg": args.v_bg, "v_ds": args.v_ds}
    for t in tables:
        out.outputs.append(_table(args.out_dir, t.name, t.header, t.rows, args.format))
        print(f"{t.name}: {len(t.rows)} rows")
    return out


def cmd_fit(args) -> Outcome:
    initial = _load_params(args.params)
    free = [s.strip() for s in args.free.split(",") if s.strip()]
    curves = [IVCurve.from_csv(p) for p in args.csvs]
    rep = extract.fit_device(curves, initial, free, max_iter=args.max_iter)
    out = Outcome(inputs=[*args.csvs, *([args.params] if args.params else [])],
                  config={"initial": initial.to_dict(), "free": free, "max_iter": args.max_iter})
    out.outputs.append(write_json(args.out_dir / "fit_report.json", rep.to_dict()))
    out.outputs.append(write_json(args.out_dir / "fitted_params.json", rep.fitted.to_dict()))
    print(f"converged={rep.converged} iterations={rep.iterations} "
          f"rms_log10={rep.residual_rms_log:.3g} (initial {rep.initial_rms_log:.3g})")
    for n in free:
        print(f"  {n} = {getattr(rep.fitted, n)!r}")
    return out


def _neuron_config(args) -> NeuronConfig:
    return NeuronConfig.from_json(args.config) if args.config else NeuronConfig()


def cmd_neuron(args) -> Outcome:
    cfg, v_tgs, duration = _neuron_config(args), args.v_tg, args.duration
    if args.preset:
        pre = presets.neuron_preset(args.preset)
        cfg = pre.config if not args.config else cfg
        v_tgs = v_tgs or list(pre.v_tg)
        duration = duration or pre.duration
    if not v_tgs or not duration:
        raise InputError("neuron needs --v-tg and --duration (or a --preset)")
    out = Outcome(inputs=[args.config] if args.config else [],
                  config={"neuron": cfg.to_dict(), "v_tg": v_tgs, "duration": duration,
                          "dt": args.dt, "decimate": args.decimate, "preset": args.preset})
    for v in v_tgs:
        dt = args.dt or min(neuron.default_dt(cfg, v), duration / 1000)
        res = neuron.run(cfg, v, duration, dt, decimate=args.decimate)
        tag = fmt(v)
        out.outputs.append(_table(args.out_dir, f"trace_vtg{tag}", ("t", "v_mem"), res.trace_rows(), args.format))
        out.outputs.append(_table(args.out_dir, f"spikes_vtg{tag}", ("t_spike",),
                                  [(t,) for t in res.spike_times], args.format))
        print(f"v_tg={tag}: {len(res.spike_times)} spikes in {fmt(duration)} s (dt={dt:.3g} s)")
    return out


def cmd_freq(args) -> Outcome:
    out = Outcome(inputs=[args.config] if args.config else [], config={"preset": args.preset})
    if args.fit_parasitic is not None:
        c_par = neuron.fit_parasitic(args.fit_parasitic, args.c_small, args.c_large)
        doc = {"f_ratio": args.fit_parasitic, "c_small": args.c_small, "c_large": args.c_large, "c_par": c_par}
        out.config["parasitic"] = doc
        out.outputs.append(write_json(args.out_dir / "parasitic.json", doc))
        print(f"c_par = {c_par:.5g} F")
    if args.preset:
        runs, grid = presets.freq_preset(args.preset)
        if args.config:
            runs = [("curve", _neuron_config(args))]
    elif args.config or args.v_tg_list:
        runs, grid = [("curve", _neuron_config(args))], ()
    else:
        runs, grid = [], ()
    v_tgs = args.v_tg_list if args.v_tg_list is not None else list(grid)
    if runs and not v_tgs and args.v_tg_list is None:
        raise InputError("freq needs --v-tg-list (or a --preset)")
    out.config["v_tg"] = v_tgs
    out.config["curves"] = {lab: cfg.to_dict() for lab, cfg in runs}
    for lab, cfg in runs:
        curve = neuron.frequency_sweep(cfg, v_tgs, dt=args.dt)
        out.outputs.append(_table(args.out_dir, f"freq_{lab}", ("v_tg", "f_hz"), curve.points, args.format))
        f = [p[1] for p in curve.points]
        print(f"{lab}: {len(f)} points, f_max={max(f, default=0.0):.4g} Hz, "
              f"{sum(curve.timed_out)} timed out")
    return out


def _dataset(args):
    data = snn.load_iris(args.data)
    return data, ([args.data] if args.data else [])


def cmd_snn(args) -> Outcome:
    data, inputs = _dataset(args)
    if args.action == "train":
        cfg = snn.TrainConfig.from_dict(read_json(args.config)) if args.config else snn.TrainConfig()
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.dt is not None:
            cfg = replace(cfg, dt=args.dt)
        res = snn.train(data, cfg)
        rep = res.report()
        out = Outcome(inputs=inputs + ([args.config] if args.config else []),
                      config={"train": cfg.to_dict(), "dataset": data.source}, seed=cfg.seed)
        out.outputs.append(write_json(args.out_dir / "weights.json", snn.weights_to_dict(res.w, res.network)))
        out.outputs.append(_table(args.out_dir, "history", ("epoch", "train_acc", "test_acc"),
                                  res.history, args.format))
        out.outputs.append(write_json(args.out_dir / "report.json", rep))
        print(f"final test accuracy {rep['final_test_acc']:.4f} ({rep['final_correct']}/{rep['n_test']})")
        print(f"peak test accuracy {rep['peak_test_acc']:.4f}; "
              f"29/30 reached: {'yes' if rep['target_29_of_30_peak'] else 'no'}")
        return out
    if not args.weights:
        raise InputError("snn eval needs --weights")
    w, net = snn.load_weights(args.weights)
    tr, te = snn.stratified_split(data, net.cfg.split, net.cfg.seed)
    doc = {"train_acc": snn.evaluate(tr, w, net), "test_acc": snn.evaluate(te, w, net),
           "n_train": len(tr), "n_test": len(te)}
    out = Outcome(inputs=inputs + [args.weights], config={"train": net.cfg.to_dict()}, seed=net.cfg.seed)
    out.outputs.append(write_json(args.out_dir / "evaluation.json", doc))
    print(f"test accuracy {doc['test_acc']:.4f}, train accuracy {doc['train_acc']:.4f}")
    return out


def cmd_plotdata(args) -> Outcome:
    header, rows = read_csv(args.csv)
    out = Outcome(inputs=[args.csv], config={"log": args.log})
    if not rows:
        print("no data rows; nothing written")
        return out
    a = np.array(rows)
    varying = [k for k in range(a.shape[1]) if np.ptp(a[:, k]) > 0]
    x = varying[0] if varying else 0
    series = [k for k in varying if k != x] or ([a.shape[1] - 1] if a.shape[1] - 1 != x else [])
    stem = Path(args.csv).stem
    for k in series:
        xs, ys = a[:, x], a[:, k]
        name = header[k]
        if args.log:
            keep = ys != 0
            xs, ys, name = xs[keep], np.log10(np.abs(ys[keep])), f"log10_{name}"
        path = args.out_dir / f"{stem}_{header[k]}.dat"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n", encoding="utf-8") as f:
            f.write(f"{header[x]} {name}\n")
            f.writelines(f"{fmt(u)} {fmt(v)}\n" for u, v in zip(xs, ys))
        out.outputs.append(path)
        print(f"{path.name}: {len(xs)} points")
    return out


COMMANDS = {"sweep": cmd_sweep, "fit": cmd_fit, "neuron": cmd_neuron, "freq": cmd_freq,
            "snn": cmd_snn, "plotdata": cmd_plotdata}


# ---- manifests ------------------------------------------------------------------

def _jsonable_args(args) -> dict:
    d = {}
    for k, v in vars(args).items():
        if k == "func":
            continue
        if isinstance(v, Path):
            v = str(v)
        elif isinstance(v, list):
            v = [str(x) if isinstance(x, Path) else x for x in v]
        d[k] = v
    return d


def _execute(args, argv) -> int:
    args.out_dir = Path(args.out_dir).resolve()
    started = time.time()
    res = COMMANDS[args.command](args)
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "command": args.command,
        "argv": list(argv),
        "args": _jsonable_args(args),
        "config": res.config,
        "inputs": {str(p): sha256_file(p) for p in res.inputs},
        "outputs": {Path(p).relative_to(args.out_dir).as_posix(): sha256_file(p) for p in res.outputs},
        "seed": res.seed,
        "version": __version__,
        "wall_clock": {
            "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
            "elapsed_s": time.time() - started,
        },
    }
    write_json(args.out_dir / f"manifest_{_manifest_name(args)}.json", manifest)
    return EXIT_OK


def cmd_replay(args) -> int:
    man = read_json(args.manifest)
    check_schema(man, MANIFEST_SCHEMA, "manifest")
    if man.get("command") not in COMMANDS:
        raise InputError(f"manifest names unknown command {man.get('command')!r}")
    for path, digest in man.get("inputs", {}).items():
        if not Path(path).is_file():
            raise InputError(f"replay input {path} is missing")
        if sha256_file(path) != digest:
            raise InputError(f"replay input {path} changed since the recorded run")
    ns = argparse.Namespace(**man["args"])
    for k in _PATH_ARGS:
        v = getattr(ns, k, None)
        if isinstance(v, str):
            setattr(ns, k, Path(v))
        elif isinstance(v, list):
            setattr(ns, k, [Path(x) for x in v])
    if args.out_dir is not None:
        ns.out_dir = args.out_dir
    _execute(ns, man.get("argv", []))
    if not args.verify:
        return EXIT_OK
    bad = [rel for rel, digest in man["outputs"].items()
           if not (Path(ns.out_dir) / rel).is_file() or sha256_file(Path(ns.out_dir) / rel) != digest]
    for rel in bad:
        print(f"MISMATCH {rel}", file=sys.stderr)
    print(f"replay verified {len(man['outputs']) - len(bad)}/{len(man['outputs'])} outputs")
    return EXIT_MISMATCH if bad else EXIT_OK


# ---- argument parsing --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv", help="table output format")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--dt", type=float, default=None, help="integration step in s")

    ap = argparse.ArgumentParser(prog="sbneuro", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", parents=[common], help="simulate I-V sweeps")
    p.add_argument("--params", type=Path, help="device params JSON")
    p.add_argument("--preset", choices=sorted(presets.SWEEPS))
    p.add_argument("--sweep", choices=("v_tg", "v_ds", "v_bg"), help="swept bias")
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--stop", type=float, default=1.0)
    p.add_argument("--num", type=int, default=11)
    p.add_argument("--v-tg", type=float, default=0.0)
    p.add_argument("--v-bg", type=float, default=0.0)
    p.add_argument("--v-ds", type=float, default=1.0)

    p = sub.add_parser("fit", parents=[common], help="fit device params to measured I-V CSVs")
    p.add_argument("csvs", type=Path, nargs="+")
    p.add_argument("--params", type=Path, help="initial device params JSON")
    p.add_argument("--free", default="", help=f"comma list from {','.join(extract.FITTABLE)}")
    p.add_argument("--max-iter", type=int, default=200)

    p = sub.add_parser("neuron", parents=[common], help="membrane traces and spike trains")
    p.add_argument("--config", type=Path, help="neuron config JSON")
    p.add_argument("--preset", choices=presets.NEURON_PRESETS)
    p.add_argument("--v-tg", type=float, nargs="+")
    p.add_argument("--duration", type=float)
    p.add_argument("--decimate", type=int, default=1)

    p = sub.add_parser("freq", parents=[common], help="firing frequency against V_TG")
    p.add_argument("--config", type=Path, help="neuron config JSON")
    p.add_argument("--preset", choices=presets.FREQ_PRESETS)
    p.add_argument("--v-tg-list", type=_float_list, help="a,b,c or start:stop:num")
    p.add_argument("--fit-parasitic", type=float, metavar="RATIO",
                   help="solve for the parallel capacitance giving this small/large-C rate ratio")
    p.add_argument("--c-small", type=float, default=neuron.CAPACITORS[0])
    p.add_argument("--c-large", type=float, default=neuron.CAPACITORS[1])

    p = sub.add_parser("snn", parents=[common], help="train or evaluate the Iris classifier")
    p.add_argument("action", choices=("train", "eval"))
    p.add_argument("--config", type=Path, help="train config JSON")
    p.add_argument("--preset", choices=presets.SNN_PRESETS, help="fig7e is the default configuration")
    p.add_argument("--data", type=Path, help="iris CSV (default: $SBNEURO_DATA_DIR/iris.csv or bundled)")
    p.add_argument("--weights", type=Path, help="weights JSON for eval")

    p = sub.add_parser("plotdata", parents=[common], help="split a result CSV into two-column series")
    p.add_argument("csv", type=Path)
    p.add_argument("--log", action="store_true", help="write log10|y|, dropping zeros")

    p = sub.add_parser("replay", help="re-run a command from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out-dir", type=Path, default=None, help="default: the recorded output directory")
    p.add_argument("--verify", action="store_true", help="compare outputs with the recorded digests")
    return ap


def _manifest_name(args: argparse.Namespace) -> str:
    # snn train and eval may share an out dir
    return f"snn-{args.action}" if args.command == "snn" else args.command


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    for k in _PATH_ARGS:
        v = getattr(args, k, None)
        if isinstance(v, Path):
            setattr(args, k, v.resolve())
        elif isinstance(v, list) and v and isinstance(v[0], Path):
            setattr(args, k, [x.resolve() for x in v])
    try:
        if args.command == "replay":
            return cmd_replay(args)
        return _execute(args, argv)
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
