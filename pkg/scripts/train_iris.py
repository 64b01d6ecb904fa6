"""Train the 16x3 classifier on Iris over several seeds and summarise held-out accuracy."""

import argparse
from dataclasses import replace
from pathlib import Path

import numpy as np

from sbneuro import snn
from sbneuro.io import write_json


def parse_args():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[42])
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--out-dir", type=Path, default=Path("results/iris"))
    return ap.parse_args()


def main():
    args = parse_args()
    data = snn.load_iris()
    finals = []
    for seed in args.seeds:
        cfg = replace(snn.TrainConfig(), seed=seed)
        if args.epochs is not None:
            cfg = replace(cfg, epochs=args.epochs)
        res = snn.train(data, cfg)
        rep = res.report()
        snn.history_csv(args.out_dir / f"history_seed{seed}.csv", res.history)
        write_json(args.out_dir / f"weights_seed{seed}.json", snn.weights_to_dict(res.w, res.network))
        finals.append(rep["final_test_acc"])
        print(f"seed {seed:4d}: test {rep['final_test_acc']:.4f} ({rep['final_correct']}/{rep['n_test']}), "
              f"peak {rep['peak_test_acc']:.4f}, train {rep['final_train_acc']:.4f}")
    if len(finals) > 1:
        print(f"mean held-out accuracy {np.mean(finals):.4f} +/- {np.std(finals):.4f} over {len(finals)} seeds")


if __name__ == "__main__":
    main()
