"""16x3 rate-coded spiking classifier for the Iris data.

Each of the four features is spread over four Gaussian receptive fields,
giving 16 input rates. An output neuron sees the weighted, normalised input
as a gate voltage

    V_eff_i = v_bias + v_scale * sum_j w_ij * rate_j / r_max

held constant for one sample window, and its spike count over that window is
its response. Training is a supervised delta rule on output rates.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyPartition, InputError
from .io import check_schema, read_json, write_csv
from .neuron import NeuronConfig, run

WEIGHTS_SCHEMA = "snn-weights-v1"
TRAIN_SCHEMA = "snn-train-v1"
ENCODER_SCHEMA = "snn-encoder-v1"

CLASSES = ("setosa", "versicolor", "virginica")
FEATURES = ("sepal_length", "sepal_width", "petal_length", "petal_width")
N_OUT = len(CLASSES)
DATA_ENV = "SBNEURO_DATA_DIR"
TARGET_CORRECT = 29  # of a 30-sample held-out set


# ---- data -------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.size == 0:
            x = x.reshape(0, len(FEATURES))
        if x.ndim != 2 or len(x) != len(self.y):
            raise InputError(f"partition needs one feature row per label, got {x.shape} for {len(self.y)}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=int))

    def __len__(self):
        return len(self.y)


@dataclass(frozen=True)
class IrisDataset(Partition):
    source: str = "embedded"

    def __post_init__(self):
        super().__post_init__()
        if self.x.shape != (150, 4):
            raise InputError(f"{self.source}: expected 150 rows of 4 features, got {self.x.shape}")
        counts = np.bincount(self.y, minlength=N_OUT)
        if counts.tolist() != [50, 50, 50]:
            raise InputError(f"{self.source}: expected 50 samples per class, got {counts.tolist()}")
        if np.any(self.x <= 0):
            raise InputError(f"{self.source}: features must be positive")


def _parse_iris(text: str, source: str) -> IrisDataset:
    reader = csv.reader(io.StringIO(text))
    header = [h.strip() for h in next(reader, [])]
    if header != [*FEATURES, "label"]:
        raise InputError(f"{source}: header must be {','.join([*FEATURES, 'label'])}")
    xs, ys = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 5:
            raise InputError(f"{source}:{lineno}: expected 5 fields, got {len(row)}")
        label = row[4].strip()
        if label not in CLASSES:
            raise InputError(f"{source}:{lineno}: unknown label {label!r}")
        try:
            xs.append([float(v) for v in row[:4]])
        except ValueError as exc:
            raise InputError(f"{source}:{lineno}: {exc}") from exc
        ys.append(CLASSES.index(label))
    return IrisDataset(np.array(xs), np.array(ys), source)


def load_iris(path=None) -> IrisDataset:
    """Load Iris from ``path``, else from ``$SBNEURO_DATA_DIR/iris.csv``, else the bundled copy."""
    if path is None and os.environ.get(DATA_ENV):
        path = Path(os.environ[DATA_ENV]) / "iris.csv"
    if path is None:
        text = resources.files("sbneuro").joinpath("data/iris.csv").read_text(encoding="utf-8")
        return _parse_iris(text, "embedded iris.csv")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return _parse_iris(text, str(path))


def stratified_split(data: Partition, split: float, seed: int) -> tuple[Partition, Partition]:
    """Per-class seeded split; round(split * n_class) samples of each class go to training."""
    rng = np.random.default_rng(seed)
    tr, te = [], []
    for c in range(N_OUT):
        idx = rng.permutation(np.flatnonzero(data.y == c))
        k = int(round(split * len(idx)))
        tr.extend(idx[:k].tolist())
        te.extend(idx[k:].tolist())
    tr, te = np.array(tr, dtype=int), np.array(te, dtype=int)
    return Partition(data.x[tr], data.y[tr]), Partition(data.x[te], data.y[te])


# ---- encoder ------------------------------------------------------------------

@dataclass(frozen=True)
class EncoderConfig:
    """Gaussian receptive fields; ``centers[k]`` and ``sigma[k]`` belong to feature k."""

    centers: tuple
    sigma: tuple
    r_max: float = 200.0

    def __post_init__(self):
        c = tuple(tuple(float(v) for v in row) for row in self.centers)
        s = tuple(float(v) for v in self.sigma)
        if not c or len(c) != len(s) or len({len(row) for row in c}) != 1:
            raise InputError("encoder needs one equal-length center row and one sigma per feature")
        if not all(v > 0 for v in s) or not self.r_max > 0:
            raise InputError("encoder sigma and r_max must be > 0")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "sigma", s)

    @classmethod
    def from_data(cls, x, fields_per_feature: int = 4, r_max: float = 200.0,
                  width_factor: float = 0.8) -> "EncoderConfig":
        if fields_per_feature < 2:
            raise InputError("fields_per_feature must be >= 2")
        x = np.asarray(x, dtype=float)
        lo, hi = x.min(axis=0), x.max(axis=0)
        centers = tuple(tuple(np.linspace(a, b, fields_per_feature).tolist()) for a, b in zip(lo, hi))
        sigma = tuple(((hi - lo) / (fields_per_feature - 1) * width_factor).tolist())
        return cls(centers, sigma, r_max)

    @property
    def n_inputs(self) -> int:
        return len(self.centers) * len(self.centers[0])

    def to_dict(self) -> dict:
        return {"schema": ENCODER_SCHEMA, "centers": [list(r) for r in self.centers],
                "sigma": list(self.sigma), "r_max": self.r_max}

    @classmethod
    def from_dict(cls, doc: dict) -> "EncoderConfig":
        check_schema(doc, ENCODER_SCHEMA, "encoder")
        try:
            return cls(doc["centers"], doc["sigma"], float(doc["r_max"]))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad encoder: {exc}") from exc


def encode(sample: Sequence[float], enc: EncoderConfig) -> np.ndarray:
    x = np.asarray(sample, dtype=float)
    if x.shape != (len(enc.centers),):
        raise InputError(f"sample needs {len(enc.centers)} features, got shape {x.shape}")
    c = np.array(enc.centers)
    s = np.array(enc.sigma)[:, None]
    return (enc.r_max * np.exp(-((x[:, None] - c) ** 2) / (2 * s**2))).ravel()


# ---- synapses and training configuration --------------------------------------

@dataclass(frozen=True)
class SynapseMatrix:
    w: np.ndarray
    w_min: float = 0.0
    w_max: float = 1.0

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.ndim != 2 or w.shape[1] != N_OUT:
            raise InputError(f"weights must be n_in x {N_OUT}, got shape {w.shape}")
        if not self.w_max > self.w_min:
            raise InputError("w_max must exceed w_min")
        if not np.all(np.isfinite(w)) or np.any(w < self.w_min) or np.any(w > self.w_max):
            raise InputError("weights must be finite and inside [w_min, w_max]")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    def updated(self, dw: np.ndarray) -> "SynapseMatrix":
        return SynapseMatrix(np.clip(self.w + dw, self.w_min, self.w_max), self.w_min, self.w_max)


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 5e-4           # weight change per (Hz of rate error x normalised input)
    epochs: int = 30
    seed: int = 42
    split: float = 0.8
    sim_window: float = 0.5     # s per sample
    r_target_hi: float = 100.0  # Hz, true class
    r_target_lo: float = 10.0   # Hz, other classes
    dt: float = 0.05
    v_bias: float = 0.0
    v_scale: float = 0.8
    w_min: float = 0.0
    w_max: float = 1.0
    fields_per_feature: int = 4
    r_max: float = 200.0
    sigma_factor: float = 0.8

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise InputError("split must be in (0, 1)")
        if not self.eta > 0:
            raise InputError("eta must be > 0")
        if self.epochs < 0 or self.seed < 0:
            raise InputError("epochs and seed must be >= 0")
        if not (self.sim_window > 0 and self.dt > 0):
            raise InputError("sim_window and dt must be > 0")
        if not self.w_max > self.w_min:
            raise InputError("w_max must exceed w_min")

    def to_dict(self) -> dict:
        return {"schema": TRAIN_SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        check_schema(doc, TRAIN_SCHEMA, "train config")
        types = {f.name: (int if f.type in ("int", int) else float) for f in fields(cls)}
        extra = set(doc) - set(types) - {"schema"}
        if extra:
            raise InputError(f"unknown train config key(s): {sorted(extra)}")
        try:
            kw = {k: types[k](v) for k, v in doc.items() if k in types}
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad train config: {exc}") from exc
        return cls(**kw)


def default_neuron() -> NeuronConfig:
    """Output neuron: 4.7 nF, V_D = 1.5 V, driven by the VCCS fitted to the default device."""
    from .presets import hardware_vccs
    return NeuronConfig(source=hardware_vccs(), c_ext=4.7e-9, v_d=1.5, v_th=0.6)


# ---- network ------------------------------------------------------------------

@dataclass(frozen=True)
class Readout:
    label: int
    no_spike: bool


def gate_voltages(rates, w: SynapseMatrix, cfg: TrainConfig, r_max: float) -> np.ndarray:
    return cfg.v_bias + cfg.v_scale * (np.asarray(rates) / r_max) @ w.w


def forward(rates, w: SynapseMatrix, neuron: NeuronConfig, window: float, *,
            cfg: TrainConfig | None = None, r_max: float | None = None) -> np.ndarray:
    """Spike counts of the output neurons for one sample.

    Each neuron is simulated with its gate voltage held for ``window``; the
    window should span several interspike intervals for the counts to
    resolve rate differences.
    """
    cfg = cfg or TrainConfig()
    r_max = cfg.r_max if r_max is None else r_max
    dt = min(cfg.dt, window)
    counts = [len(run(neuron, float(v), window, dt, record=False).spike_times)
              for v in gate_voltages(rates, w, cfg, r_max)]
    return np.array(counts, dtype=int)


def predict(counts) -> Readout:
    counts = np.asarray(counts)
    return Readout(int(np.argmax(counts)), bool(np.all(counts == 0)))


@dataclass(frozen=True)
class Network:
    """Encoder, output neuron and training settings bundled for one experiment."""

    encoder: EncoderConfig
    cfg: TrainConfig = field(default_factory=TrainConfig)
    neuron: NeuronConfig = field(default_factory=default_neuron)

    def counts(self, x, w: SynapseMatrix) -> np.ndarray:
        return forward(encode(x, self.encoder), w, self.neuron, self.cfg.sim_window,
                       cfg=self.cfg, r_max=self.encoder.r_max)


def train_epoch(part: Partition, w: SynapseMatrix, net: Network, epoch: int = 0) -> SynapseMatrix:
    """One pass of the delta rule over ``part`` in an order seeded by (seed, epoch)."""
    cfg = net.cfg
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(part))
    for k in order:
        u = encode(part.x[k], net.encoder) / net.encoder.r_max
        r = net.counts(part.x[k], w) / cfg.sim_window
        target = np.full(N_OUT, cfg.r_target_lo)
        target[part.y[k]] = cfg.r_target_hi
        w = w.updated(cfg.eta * np.outer(u, target - r))
    return w


def evaluate(part: Partition, w: SynapseMatrix, net: Network) -> float:
    if len(part) == 0:
        raise EmptyPartition("cannot evaluate an empty partition")
    hits = sum(predict(net.counts(x, w)).label == int(y) for x, y in zip(part.x, part.y))
    return hits / len(part)


def initial_weights(cfg: TrainConfig, n_inputs: int) -> SynapseMatrix:
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    return SynapseMatrix(rng.uniform(cfg.w_min, cfg.w_max, size=(n_inputs, N_OUT)), cfg.w_min, cfg.w_max)


@dataclass(frozen=True)
class TrainResult:
    w: SynapseMatrix
    history: tuple          # (epoch, train_acc, test_acc); epoch 0 is the untrained network
    test_acc: float
    train_acc: float
    peak_test_acc: float
    n_test: int
    network: Network

    @property
    def target_reached(self) -> bool:
        """Whether the held-out accuracy ever reaches 29/30 (96.7%)."""
        return self.peak_test_acc >= TARGET_CORRECT / 30 - 1e-12

    def report(self) -> dict:
        return {
            "final_test_acc": self.test_acc,
            "final_train_acc": self.train_acc,
            "peak_test_acc": self.peak_test_acc,
            "peak_train_acc": max(h[1] for h in self.history),
            "n_test": self.n_test,
            "final_correct": int(round(self.test_acc * self.n_test)),
            "target_29_of_30_final": bool(self.test_acc >= TARGET_CORRECT / 30 - 1e-12),
            "target_29_of_30_peak": self.target_reached,
        }


def make_network(data: Partition, cfg: TrainConfig, neuron: NeuronConfig | None = None) -> Network:
    # encoder ranges come from the whole dataset so they do not depend on the split
    enc = EncoderConfig.from_data(data.x, cfg.fields_per_feature, cfg.r_max, cfg.sigma_factor)
    return Network(enc, cfg, neuron or default_neuron())


def train(data: Partition, cfg: TrainConfig | None = None, neuron: NeuronConfig | None = None) -> TrainResult:
    cfg = cfg or TrainConfig()
    net = make_network(data, cfg, neuron)
    tr, te = stratified_split(data, cfg.split, cfg.seed)
    w = initial_weights(cfg, net.encoder.n_inputs)
    history = [(0, evaluate(tr, w, net), evaluate(te, w, net))]
    for epoch in range(1, cfg.epochs + 1):
        w = train_epoch(tr, w, net, epoch)
        history.append((epoch, evaluate(tr, w, net), evaluate(te, w, net)))
    return TrainResult(w, tuple(history), history[-1][2], history[-1][1],
                       max(h[2] for h in history), len(te), net)


# ---- serialization -------------------------------------------------------------

def history_csv(path, history):
    return write_csv(path, ("epoch", "train_acc", "test_acc"), history)


def weights_to_dict(w: SynapseMatrix, net: Network) -> dict:
    return {
        "schema": WEIGHTS_SCHEMA,
        "shape": list(w.w.shape),
        "w": w.w.ravel(order="C").tolist(),
        "bounds": [w.w_min, w.w_max],
        "encoder": net.encoder.to_dict(),
        "train_config": net.cfg.to_dict(),
        "neuron": net.neuron.to_dict(),
    }


def weights_from_dict(doc: dict, base_dir=None) -> tuple[SynapseMatrix, Network]:
    check_schema(doc, WEIGHTS_SCHEMA, "weights")
    try:
        shape = tuple(int(n) for n in doc["shape"])
        flat = np.array(doc["w"], dtype=float)
        lo, hi = (float(b) for b in doc["bounds"])
        if len(shape) != 2 or flat.size != math.prod(shape):
            raise InputError(f"weights: {flat.size} values do not fill shape {shape}")
        w = SynapseMatrix(flat.reshape(shape), lo, hi)
        net = Network(EncoderConfig.from_dict(doc["encoder"]), TrainConfig.from_dict(doc["train_config"]),
                      NeuronConfig.from_dict(doc["neuron"], base_dir))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"bad weights document: {exc}") from exc
    if w.w.shape[0] != net.encoder.n_inputs:
        raise InputError(f"weights have {w.w.shape[0]} inputs, encoder has {net.encoder.n_inputs}")
    return w, net


def load_weights(path) -> tuple[SynapseMatrix, Network]:
    return weights_from_dict(read_json(path), Path(path).parent)
