"""Datasets: seeded synthetic generators plus npz / CSV loaders.

Array format (``.npz``): ``x_train``, ``y_train``, ``x_test``, ``y_test`` and
optionally ``x_ood``, ``y_ood``. Images are NCHW, either uint8 (scaled by
1/255) or float in [0, 1]; tabular inputs are (N, tokens, features).

Delimited format: a directory with ``train.csv`` and ``test.csv`` (optional
``ood.csv``); one header row, feature columns flattened row-major over
``input_shape``, label in the last column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from ..errors import DatasetError, InvalidProbes


@dataclass
class Dataset:
    kind: str  # "image" or "tabular"
    input_shape: tuple
    num_classes: int
    x_train: torch.Tensor
    y_train: torch.Tensor
    x_test: torch.Tensor
    y_test: torch.Tensor
    ood: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("train", "test"):
            x, y = getattr(self, f"x_{name}"), getattr(self, f"y_{name}")
            if x.shape[0] != y.shape[0]:
                raise DatasetError(f"{name}: {x.shape[0]} inputs but {y.shape[0]} labels")
            if tuple(x.shape[1:]) != tuple(self.input_shape):
                raise DatasetError(f"{name}: sample shape {tuple(x.shape[1:])} != {tuple(self.input_shape)}")


@dataclass(frozen=True)
class Probes:
    x: torch.Tensor
    ids: tuple

    def __post_init__(self):
        if self.x.shape[0] == 0:
            raise InvalidProbes("probe set is empty")
        if len(self.ids) != self.x.shape[0]:
            raise InvalidProbes("one id per probe sample required")


def select_probes(x: torch.Tensor, count: int, seed: int) -> Probes:
    """Fixed, seeded subset of ``x``, kept in ascending index order."""
    if count < 1 or x.shape[0] == 0:
        raise InvalidProbes("need at least one probe sample")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(x.shape[0], size=min(count, x.shape[0]), replace=False))
    return Probes(x[torch.from_numpy(idx)], tuple(int(i) for i in idx))


def _t(x, dtype=torch.float32):
    return torch.as_tensor(np.ascontiguousarray(x), dtype=dtype)


# -- synthetic images ---------------------------------------------------------


def _image_templates(rng, num_classes, channels, size):
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    templates = np.zeros((num_classes, channels, size, size))
    for c in range(num_classes):
        for _ in range(3):
            fx, fy = 0, 0
            while fx == 0 and fy == 0:
                fx, fy = rng.integers(-2, 3, size=2)
            phase = rng.uniform(0, 2 * np.pi)
            color = rng.uniform(-1, 1, size=channels)
            wave = np.sin(2 * np.pi * (fx * xx + fy * yy) / size + phase)
            templates[c] += color[:, None, None] * wave
        templates[c] /= np.abs(templates[c]).max()
    return templates


def _render_images(rng, templates, n, amp=(0.4, 0.9), noise=0.25, tint=0.0, max_shift=2):
    k, ch, size, _ = templates.shape
    labels = rng.integers(0, k, size=n)
    a = rng.uniform(*amp, size=n)[:, None, None, None]
    shifts = rng.integers(-max_shift, max_shift + 1, size=(n, 2))
    base = templates[labels]
    out = np.empty_like(base)
    for i in range(n):
        out[i] = np.roll(base[i], tuple(shifts[i]), axis=(1, 2))
    x = 0.5 + 0.35 * a * out + noise * rng.standard_normal(out.shape)
    if tint:
        x += rng.uniform(-tint, tint, size=(n, ch, 1, 1))
    return np.clip(x, 0.0, 1.0).astype(np.float32), labels


def synthetic_images(n_train=10000, n_test=2000, image_size=16, channels=3, num_classes=10, seed=0) -> Dataset:
    """Class-specific colored grating mixtures with random shift, contrast and noise.

    The ``"shifted"`` OOD split draws from the same classes with lower
    contrast, stronger noise and a per-image color tint.
    """
    templates = _image_templates(np.random.default_rng(seed), num_classes, channels, image_size)
    xtr, ytr = _render_images(np.random.default_rng(seed + 1), templates, n_train)
    xte, yte = _render_images(np.random.default_rng(seed + 2), templates, n_test)
    xo, yo = _render_images(np.random.default_rng(seed + 3), templates, n_test, amp=(0.3, 0.6), noise=0.3, tint=0.1)
    return Dataset(
        "image", (channels, image_size, image_size), num_classes,
        _t(xtr), _t(ytr, torch.long), _t(xte), _t(yte, torch.long),
        ood={"shifted": (_t(xo), _t(yo, torch.long))},
    )


# -- synthetic tabular (wearable-sensor-like windows) --------------------------


def synthetic_tabular(n_train=4000, n_test=1000, seq_len=16, features=6, num_classes=6, seed=0) -> Dataset:
    """Multichannel sinusoid windows; each class has its own per-channel
    frequencies and amplitudes, phases are random per sample."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.5, 3.0, size=(num_classes, features))
    amps = rng.uniform(0.3, 1.0, size=(num_classes, features))
    t = np.arange(seq_len)[:, None] / seq_len

    def render(r, n, noise, scale):
        labels = r.integers(0, num_classes, size=n)
        phase = r.uniform(0, 2 * np.pi, size=(n, 1, features))
        x = scale * amps[labels][:, None, :] * np.sin(2 * np.pi * freqs[labels][:, None, :] * t[None] + phase)
        x = x + noise * r.standard_normal(x.shape)
        return x.astype(np.float32), labels

    xtr, ytr = render(np.random.default_rng(seed + 1), n_train, 0.3, 1.0)
    xte, yte = render(np.random.default_rng(seed + 2), n_test, 0.3, 1.0)
    xo, yo = render(np.random.default_rng(seed + 3), n_test, 0.45, 0.8)
    return Dataset(
        "tabular", (seq_len, features), num_classes,
        _t(xtr), _t(ytr, torch.long), _t(xte), _t(yte, torch.long),
        ood={"shifted": (_t(xo), _t(yo, torch.long))},
    )


# -- on-disk formats ----------------------------------------------------------


def _scaled(x):
    x = np.asarray(x)
    return x.astype(np.float32) / 255.0 if x.dtype == np.uint8 else x.astype(np.float32)


def load_npz(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    with np.load(path) as z:
        try:
            xtr, ytr, xte, yte = (z[k] for k in ("x_train", "y_train", "x_test", "y_test"))
        except KeyError as exc:
            raise DatasetError(f"{path}: missing array {exc}") from exc
        ood = {"shifted": (_t(_scaled(z["x_ood"])), _t(z["y_ood"], torch.long))} if "x_ood" in z.files else {}
    kind = "image" if xtr.ndim == 4 else "tabular"
    num_classes = int(max(ytr.max(), yte.max())) + 1
    return Dataset(kind, tuple(xtr.shape[1:]), num_classes, _t(_scaled(xtr)), _t(ytr, torch.long),
                   _t(_scaled(xte)), _t(yte, torch.long), ood)


def save_npz(ds: Dataset, path) -> None:
    arrays = {
        "x_train": ds.x_train.numpy(), "y_train": ds.y_train.numpy(),
        "x_test": ds.x_test.numpy(), "y_test": ds.y_test.numpy(),
    }
    if "shifted" in ds.ood:
        arrays["x_ood"], arrays["y_ood"] = (t.numpy() for t in ds.ood["shifted"])
    np.savez(path, **arrays)


def _read_csv(path: Path, input_shape):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise DatasetError(f"{path}: expected a header row and at least one sample")
    data = np.asarray(rows[1:], dtype=np.float64)
    width = int(np.prod(input_shape))
    if data.shape[1] != width + 1:
        raise DatasetError(f"{path}: {data.shape[1]} columns, expected {width} features + label")
    x = data[:, :-1].reshape((-1, *input_shape)).astype(np.float32)
    return _t(x), _t(data[:, -1].astype(np.int64), torch.long)


def load_csv_dir(path, input_shape) -> Dataset:
    path = Path(path)
    if not (path / "train.csv").exists() or not (path / "test.csv").exists():
        raise FileNotFoundError(f"dataset not found: expected train.csv and test.csv in {path}")
    input_shape = tuple(input_shape)
    xtr, ytr = _read_csv(path / "train.csv", input_shape)
    xte, yte = _read_csv(path / "test.csv", input_shape)
    ood = {"shifted": _read_csv(path / "ood.csv", input_shape)} if (path / "ood.csv").exists() else {}
    kind = "image" if len(input_shape) == 3 else "tabular"
    num_classes = int(max(ytr.max(), yte.max())) + 1
    return Dataset(kind, input_shape, num_classes, xtr, ytr, xte, yte, ood)


def save_csv_dir(ds: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    splits = {"train": (ds.x_train, ds.y_train), "test": (ds.x_test, ds.y_test)}
    if "shifted" in ds.ood:
        splits["ood"] = ds.ood["shifted"]
    width = int(np.prod(ds.input_shape))
    for name, (x, y) in splits.items():
        with open(path / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"f{i}" for i in range(width)] + ["label"])
            for xi, yi in zip(x.reshape(len(x), -1).tolist(), y.tolist()):
                w.writerow([repr(v) for v in xi] + [yi])
