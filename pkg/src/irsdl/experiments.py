"""Datasets, metrics, baselines and the evaluation/sweep drivers."""
from __future__ import annotations

import csv
import json
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import ChannelRealization, cascade, draw_channel, los_channel_br
from .config import SystemConfig, derive_seed, sample_rng
from .errors import DimensionError
from .estimation import (PhaseBeamSolution, direct_path_rate, downlink_rate, linear_snr,
                         ls_operator, matched_beam, optimize_phases)
from .nn import (MlpModel, TrainConfig, complex_to_real_stack, fit_regressor,
                 predict_solutions, real_to_complex_stack)
from .pilots import dft_phase_matrix, observation_matrix, pilot_amplitude, simulate_pilot_rx, unstack_channels

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_NAMES = {TRAIN: "train", VAL: "val", TEST: "test"}
# Train and validation samples share one random stream, test samples use another.
STREAMS = {TRAIN: "train", VAL: "train", TEST: "test"}

DATASET_MAGIC = b"IRSDLDS\x00"
DATASET_VERSION = 1

METHODS = ("DL1", "DL2", "LS", "optimum", "random", "direct")


@dataclass
class Dataset:
    """Pilot inputs, optimal-configuration labels and the true channels.

    ``inputs`` rows are real stacks of the received pilots, ``labels`` rows
    are real stacks of ``[phi_opt; w_opt]`` computed from perfect CSI.
    ``index`` is the position of each sample in its random stream, which
    lets the pilots be re-simulated for another pilot length or power.
    """

    cfg: SystemConfig
    seed: int
    inputs: np.ndarray
    labels: np.ndarray
    h_d: np.ndarray
    h_ru: np.ndarray
    ue_position: np.ndarray
    split: np.ndarray
    index: np.ndarray

    def __len__(self):
        return len(self.inputs)

    @property
    def M(self) -> int:
        return self.cfg.M

    @property
    def N(self) -> int:
        return self.cfg.N

    @property
    def T(self) -> int:
        return self.cfg.T

    def V(self, i: int) -> np.ndarray:
        return cascade(los_channel_br(self.cfg), self.h_ru[i])

    def channel(self, i: int) -> ChannelRealization:
        H_br = los_channel_br(self.cfg)
        return ChannelRealization(self.h_d[i], H_br, self.h_ru[i], cascade(H_br, self.h_ru[i]),
                                  self.ue_position[i])

    def solution(self, i: int) -> PhaseBeamSolution:
        return PhaseBeamSolution.from_stacked(real_to_complex_stack(self.labels[i]), self.N)

    def subset(self, which) -> "Dataset":
        """Samples of one split code, or of a boolean/integer index array."""
        mask = self.split == which if np.isscalar(which) else which
        return Dataset(self.cfg, self.seed, self.inputs[mask], self.labels[mask], self.h_d[mask],
                       self.h_ru[mask], self.ue_position[mask], self.split[mask], self.index[mask])

    def counts(self) -> dict:
        return {name: int(np.sum(self.split == code)) for code, name in SPLIT_NAMES.items()}

    @classmethod
    def concat(cls, parts) -> "Dataset":
        first = parts[0]
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        return cls(first.cfg, first.seed, *(cat(n) for n in
                   ("inputs", "labels", "h_d", "h_ru", "ue_position", "split", "index")))


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

def _simulate_sample(cfg, seed, stream, i, Phi):
    ch = draw_channel(cfg, sample_rng(seed, f"{stream}/channel", i))
    obs = simulate_pilot_rx(ch, Phi, cfg, sample_rng(seed, f"{stream}/noise", i), realization_id=i)
    return ch, obs


def _generate_chunk(cfg: SystemConfig, seed: int, stream: str, indices):
    Phi = dft_phase_matrix(cfg.T, cfg.N)
    rows = []
    for i in indices:
        ch, obs = _simulate_sample(cfg, seed, stream, i, Phi)
        sol = optimize_phases(ch.h_d, ch.V)
        rows.append((complex_to_real_stack(obs.y_p), complex_to_real_stack(sol.stacked()),
                     ch.h_d, ch.h_ru, ch.ue_position))
    return rows


def generate_dataset(cfg: SystemConfig, n_samples: int, seed: int, split: int = TRAIN,
                     workers: int = 1, start: int = 0) -> Dataset:
    """Draw ``n_samples`` channels, pilots and perfect-CSI labels.

    Sample ``k`` depends only on ``(cfg, seed, stream, start + k)``, so any
    ``workers`` count gives the same arrays bit for bit.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    stream = STREAMS[split]
    indices = np.arange(start, start + n_samples)
    if workers > 1 and n_samples > 1:
        chunks = np.array_split(indices, min(workers * 4, n_samples))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_generate_chunk, [cfg] * len(chunks), [seed] * len(chunks),
                             [stream] * len(chunks), chunks)
            rows = [r for part in parts for r in part]
    else:
        rows = _generate_chunk(cfg, seed, stream, indices)
    cols = list(zip(*rows))
    return Dataset(cfg, int(seed), np.array(cols[0]), np.array(cols[1]), np.array(cols[2]),
                   np.array(cols[3]), np.array(cols[4]), np.full(n_samples, split, dtype=np.int8),
                   indices)


def make_experiment_dataset(cfg: SystemConfig, n_train: int, n_test: int, seed: int,
                            train_fraction: float = 0.8, workers: int = 1) -> Dataset:
    """Training pool split into train/validation, plus an independent test set."""
    pool = generate_dataset(cfg, n_train, seed, TRAIN, workers)
    rng = np.random.default_rng(derive_seed(seed, "split"))
    n_val = n_train - min(max(int(round(train_fraction * n_train)), 1), n_train - 1)
    pool.split[rng.permutation(n_train)[:n_val]] = VAL
    test = generate_dataset(cfg, n_test, seed, TEST, workers)
    return Dataset.concat([pool, test])


def simulate_inputs(ds: Dataset, T: int | None = None, pilot_dBm: float | None = None,
                    force: bool = False) -> np.ndarray:
    """Re-run the pilot phase for the stored channels.

    Uses each sample's own noise stream, so with the dataset's ``T`` and
    pilot power this reproduces ``ds.inputs`` exactly.
    """
    T = ds.T if T is None else T
    cfg = ds.cfg.replace(T=T, pilot_dBm=ds.cfg.pilot_dBm if pilot_dBm is None else pilot_dBm)
    if not force and T == ds.T and cfg.pilot_dBm == ds.cfg.pilot_dBm:
        return ds.inputs.copy()
    Phi = dft_phase_matrix(T, ds.N)
    out = np.empty((len(ds), 2 * T * ds.M))
    for k in range(len(ds)):
        rng = sample_rng(ds.seed, f"{STREAMS[int(ds.split[k])]}/noise", int(ds.index[k]))
        out[k] = complex_to_real_stack(simulate_pilot_rx(ds.channel(k), Phi, cfg, rng).y_p)
    return out


# ---------------------------------------------------------------------------
# Metrics and baselines
# ---------------------------------------------------------------------------

def nmse(truth, pred) -> float:
    """Mean over samples of ``||phi_opt - phi_hat||^2 / ||phi_opt||^2``."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise DimensionError(f"shape mismatch {truth.shape} vs {pred.shape}")
    truth = truth.reshape(len(truth), -1)
    pred = pred.reshape(len(pred), -1)
    err = np.sum(np.abs(truth - pred) ** 2, axis=1)
    return float(np.mean(err / np.sum(np.abs(truth) ** 2, axis=1)))


def beamforming_mismatch(w_opt, w_x, tol: float = 1e-6) -> float:
    w_opt = np.asarray(w_opt)
    w_x = np.asarray(w_x)
    for w in (w_opt, w_x):
        if abs(np.linalg.norm(w) - 1) > tol:
            raise ValueError(f"beam must have unit norm, got {np.linalg.norm(w)}")
    return float(np.linalg.norm(w_opt - w_x) ** 2)


def rate_cdf(rates):
    """Empirical CDF support: sorted samples and levels ``k/n``."""
    x = np.sort(np.asarray(rates, dtype=float))
    return x, np.arange(1, len(x) + 1) / len(x)


def baseline_random_phi(ch: ChannelRealization, rng: np.random.Generator) -> PhaseBeamSolution:
    """Uniformly random IRS phases with the beam matched to them."""
    phi = np.exp(2j * np.pi * rng.random(ch.V.shape[1]))
    return PhaseBeamSolution(phi=phi, w=matched_beam(ch.h_d, ch.V, phi))


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------

def layer_sizes(T: int, M: int, N: int, hidden) -> list:
    return [2 * T * M, *hidden, 2 * (N + M)]


def check_method(method: int, T: int, N: int) -> None:
    if method == 1 and T != N + 1:
        raise DimensionError(f"method 1 needs T = N + 1 = {N + 1}, dataset has T = {T}")
    if method == 2 and not T < N + 1:
        raise DimensionError(f"method 2 needs T < N + 1 = {N + 1}, dataset has T = {T}")
    if method not in (1, 2):
        raise ValueError(f"unknown method {method}")


def train_method(ds: Dataset, method: int, hidden, tc: TrainConfig = TrainConfig(), log=None):
    """Train DL method 1 or 2 on the train/val splits of ``ds``."""
    check_method(method, ds.T, ds.N)
    tr, va = ds.split == TRAIN, ds.split == VAL
    if not tr.any() or not va.any():
        raise ValueError("dataset needs both train and validation samples")
    meta = {"method": method, "T": ds.T, "M": ds.M, "N": ds.N, "pilot_dBm": ds.cfg.pilot_dBm}
    return fit_regressor(layer_sizes(ds.T, ds.M, ds.N, hidden), ds.inputs[tr], ds.labels[tr],
                         ds.inputs[va], ds.labels[va], tc, meta=meta, log=log)


@dataclass
class EvalReport:
    """Per-sample rates and mismatches and per-method NMSE on one test set."""

    rates: dict = field(default_factory=dict)
    nmse: dict = field(default_factory=dict)
    mismatch: dict = field(default_factory=dict)
    phis: dict = field(default_factory=dict)
    beams: dict = field(default_factory=dict)
    pilot_dBm: float = 0.0

    def median_rate(self, method: str) -> float:
        return float(np.median(self.rates[method]))


def _add_method(report, name, sols, test, gamma, phi_opt, w_opt):
    phis = np.array([s.phi for s in sols])
    beams = np.array([s.w for s in sols])
    report.phis[name] = phis
    report.beams[name] = beams
    report.rates[name] = np.array([downlink_rate(test.h_d[k], test.V(k), s, gamma)
                                   for k, s in enumerate(sols)])
    report.nmse[name] = nmse(phi_opt, phis)
    report.mismatch[name] = np.array([beamforming_mismatch(w_opt[k], beams[k])
                                      for k in range(len(sols))])


def ls_solutions(test: Dataset, inputs=None) -> list:
    """LS-estimate the channels, then optimize as if the estimates were exact."""
    T = test.N + 1
    if inputs is None:
        inputs = simulate_inputs(test, T=T)
    amp = pilot_amplitude(test.cfg)
    P = observation_matrix(dft_phase_matrix(T, test.N), test.M, amp)
    h_hat = real_to_complex_stack(inputs) @ ls_operator(P).T
    sols = []
    for row in h_hat:
        h_d, V = unstack_channels(row, test.M, test.N)
        sols.append(optimize_phases(h_d, V))
    return sols


def model_inputs(test: Dataset, model: MlpModel) -> np.ndarray:
    meta = model.meta
    if meta.get("M", test.M) != test.M or meta.get("N", test.N) != test.N:
        raise DimensionError(f"model for M={meta.get('M')}, N={meta.get('N')} cannot be "
                             f"evaluated on a dataset with M={test.M}, N={test.N}")
    T = int(meta.get("T", test.T))
    if model.input_width != 2 * T * test.M or model.output_width != 2 * (test.N + test.M):
        raise DimensionError("model widths do not match the dataset dimensions")
    return simulate_inputs(test, T=T, pilot_dBm=meta.get("pilot_dBm"))


def evaluate(test: Dataset, models: dict | None = None, ls: bool = True,
             baselines: bool = True, gamma: float | None = None) -> EvalReport:
    """Score every method on the true channels of ``test``.

    ``models`` maps method tags (e.g. ``"DL1"``) to trained networks. Rates
    of learned and LS configurations are always computed on the true
    channels.
    """
    if test.split.size and np.any(test.split != TEST):
        test = test.subset(TEST)
    if len(test) == 0:
        raise ValueError("no test samples to evaluate")
    if gamma is None:
        gamma = linear_snr(test.cfg.downlink_dBm, test.cfg.noise_dBm)
    report = EvalReport(pilot_dBm=test.cfg.pilot_dBm)
    opt = [test.solution(k) for k in range(len(test))]
    phi_opt = np.array([s.phi for s in opt])
    w_opt = np.array([s.w for s in opt])
    _add_method(report, "optimum", opt, test, gamma, phi_opt, w_opt)

    if baselines:
        rnd = [baseline_random_phi(test.channel(k), sample_rng(test.seed, "test/random", int(test.index[k])))
               for k in range(len(test))]
        _add_method(report, "random", rnd, test, gamma, phi_opt, w_opt)
        report.rates["direct"] = np.array([direct_path_rate(h, gamma) for h in test.h_d])
    if ls:
        _add_method(report, "LS", ls_solutions(test), test, gamma, phi_opt, w_opt)
    for name, model in (models or {}).items():
        sols = predict_solutions(model, model_inputs(test, model), test.N)
        _add_method(report, name, sols, test, gamma, phi_opt, w_opt)
    return report


def pilot_power_sweep(powers, cfg: SystemConfig, n_train: int, n_test: int, seed: int,
                      hidden, tc: TrainConfig = TrainConfig(), workers: int = 1, log=None):
    """NMSE of LS and DL method 1 versus pilot power, retraining per power.

    Every power point reuses the same channel and noise streams, so only
    the pilot power differs between points. Returns ``(table, models)``
    with ``table[(method, power)] = nmse``.
    """
    cfg = cfg.replace(T=cfg.N + 1)
    table, models = {}, {}
    for p in powers:
        ds = make_experiment_dataset(cfg.replace(pilot_dBm=float(p)), n_train, n_test, seed,
                                     tc.train_fraction, workers)
        model, _ = train_method(ds, 1, hidden, tc)
        report = evaluate(ds, {"DL1": model}, baselines=False)
        table[("LS", p)] = report.nmse["LS"]
        table[("DL1", p)] = report.nmse["DL1"]
        models[p] = model
        if log is not None:
            log(p, report.nmse)
    return table, models


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def _record_layout(cfg: SystemConfig) -> list:
    T, M, N = cfg.T, cfg.M, cfg.N
    return [["split", 1], ["index", 1], ["input", 2 * T * M], ["label", 2 * (N + M)],
            ["h_d", 2 * M], ["h_ru", 2 * N], ["ue_position", 3]]


def save_dataset(ds: Dataset, path) -> None:
    """Binary container: magic, version, JSON header, fixed-width ``<f8`` records."""
    layout = _record_layout(ds.cfg)
    header = json.dumps({"format_version": DATASET_VERSION, "cfg": ds.cfg.to_dict(),
                         "seed": ds.seed, "counts": ds.counts(), "n_records": len(ds),
                         "record_layout": layout}, sort_keys=True).encode()
    records = np.concatenate([
        ds.split[:, None].astype(float), ds.index[:, None].astype(float), ds.inputs, ds.labels,
        complex_to_real_stack(ds.h_d), complex_to_real_stack(ds.h_ru), ds.ue_position], axis=1)
    assert records.shape[1] == sum(w for _, w in layout)
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<II", DATASET_VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(records, dtype="<f8").tobytes())


def _read_header(path):
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:8] != DATASET_MAGIC:
            raise ValueError(f"{path} is not a dataset file")
        version, hlen = struct.unpack("<II", head[8:])
        if version != DATASET_VERSION:
            raise ValueError(f"unsupported dataset format version {version}")
        return json.loads(fh.read(hlen)), hlen


def read_dataset_header(path) -> dict:
    return _read_header(path)[0]


def load_dataset(path) -> Dataset:
    header, hlen = _read_header(path)
    cfg = SystemConfig(**header["cfg"])
    width = sum(w for _, w in header["record_layout"])
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8", offset=16 + hlen).astype(float)
    if raw.size != width * header["n_records"]:
        raise ValueError(f"{path}: truncated or corrupt record block")
    rec = raw.reshape(header["n_records"], width)
    cols, pos = {}, 0
    for name, w in header["record_layout"]:
        cols[name] = rec[:, pos:pos + w]
        pos += w
    return Dataset(cfg, header["seed"], cols["input"].copy(), cols["label"].copy(),
                   real_to_complex_stack(cols["h_d"]), real_to_complex_stack(cols["h_ru"]),
                   cols["ue_position"].copy(), cols["split"][:, 0].astype(np.int8),
                   cols["index"][:, 0].astype(np.int64))


def export_dataset_csv(ds: Dataset, directory) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, arr in (("inputs", ds.inputs), ("labels", ds.labels)):
        path = directory / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["split", "index"] + [f"{name[0]}{j}" for j in range(arr.shape[1])])
            for k in range(len(ds)):
                writer.writerow([SPLIT_NAMES[int(ds.split[k])], int(ds.index[k])]
                                + [repr(float(v)) for v in arr[k]])
        paths.append(path)
    return paths
