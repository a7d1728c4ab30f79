"""Adversarial and distribution-shift evaluation.

Attacks operate in pixel space ([0, 1]) before any normalization. Accuracy
is reported in percent and deltas in percentage points, pruned minus
unpruned: negative means the pruned model got worse.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .errors import AttackFailed, InvalidParameter, ReportMismatch, UnknownCorruption

FGSM_EPSILON = 16 / 255
CORRUPTION_SEVERITY = 4

# parameter per severity 1..5, strictly monotone towards harsher corruption
SEVERITY_TABLE: dict[str, tuple[float, ...]] = {
    "gaussian_noise": (0.04, 0.06, 0.08, 0.10, 0.12),  # noise std
    "impulse_noise": (0.01, 0.02, 0.04, 0.06, 0.09),  # salt-and-pepper fraction
    "gaussian_blur": (0.5, 0.75, 1.0, 1.25, 1.5),  # kernel std in pixels
    "brightness": (0.1, 0.2, 0.3, 0.4, 0.5),  # additive shift
    "contrast": (0.75, 0.6, 0.45, 0.3, 0.2),  # scale about the image mean
}
NEUTRAL_PARAM = {"gaussian_noise": 0.0, "impulse_noise": 0.0, "gaussian_blur": 0.0, "brightness": 0.0, "contrast": 1.0}
CORRUPTIONS = tuple(SEVERITY_TABLE)


# -- FGSM -----------------------------------------------------------------------


def fgsm_attack(model, x: torch.Tensor, y: torch.Tensor, epsilon: float = FGSM_EPSILON, clip=(0.0, 1.0)) -> torch.Tensor:
    """``clip(x + eps * sign(grad_x CE(model(x), y)))``."""
    if epsilon < 0:
        raise InvalidParameter("epsilon must be non-negative")
    if epsilon == 0:
        return x.detach().clone()
    model.eval()
    x_in = x.detach().clone().requires_grad_(True)
    try:
        loss = F.cross_entropy(model(x_in), y, reduction="sum")
        (grad,) = torch.autograd.grad(loss, x_in)
    except RuntimeError as exc:
        raise AttackFailed(f"no gradient path to the input: {exc}") from exc
    adv = x.detach() + epsilon * grad.sign()
    return adv.clamp(*clip) if clip is not None else adv


# -- corruptions ----------------------------------------------------------------


def _gaussian_kernel(sigma: float) -> torch.Tensor:
    radius = max(1, math.ceil(3 * sigma))
    t = torch.arange(-radius, radius + 1, dtype=torch.float64)
    k = torch.exp(-0.5 * (t / sigma) ** 2)
    return (k / k.sum()).float()


def _blur(x: torch.Tensor, sigma: float) -> torch.Tensor:
    k = _gaussian_kernel(sigma)
    c, r = x.shape[1], (len(k) - 1) // 2
    pad_mode = "reflect" if min(x.shape[2:]) > r else "replicate"
    x = F.pad(x, (r, r, r, r), mode=pad_mode)
    x = F.conv2d(x, k.view(1, 1, 1, -1).expand(c, 1, 1, -1), groups=c)
    return F.conv2d(x, k.view(1, 1, -1, 1).expand(c, 1, -1, 1), groups=c)


def apply_corruption(x: torch.Tensor, name: str, param: float, gen: torch.Generator) -> torch.Tensor:
    """Corrupt an NCHW batch with an explicit strength; output clipped to [0, 1]."""
    if name == "gaussian_noise":
        out = x + param * torch.randn(x.shape, generator=gen)
    elif name == "impulse_noise":
        u = torch.rand(x.shape, generator=gen)
        out = torch.where(u < param / 2, torch.zeros_like(x), x)
        out = torch.where((u >= param / 2) & (u < param), torch.ones_like(x), out)
    elif name == "gaussian_blur":
        out = x.clone() if param == 0 else _blur(x, param)
    elif name == "brightness":
        out = x + param
    elif name == "contrast":
        mean = x.mean(dim=(1, 2, 3), keepdim=True)
        out = (x - mean) * param + mean
    else:
        raise UnknownCorruption(name)
    return out.clamp(0.0, 1.0)


def corrupt(x: torch.Tensor, name: str, severity: int, seed: int = 0) -> torch.Tensor:
    if name not in SEVERITY_TABLE:
        raise UnknownCorruption(name)
    if not 1 <= severity <= 5:
        raise InvalidParameter(f"severity must be in 1..5, got {severity}")
    gen = torch.Generator().manual_seed(seed)
    return apply_corruption(x, name, SEVERITY_TABLE[name][severity - 1], gen)


# -- configs and reports ------------------------------------------------------------


@dataclass(frozen=True)
class AttackConfig:
    kind: str  # fgsm | corruption | ood_split
    epsilon: float = FGSM_EPSILON
    corruption_name: Optional[str] = None
    severity: int = CORRUPTION_SEVERITY
    split_id: str = "shifted"

    def __post_init__(self):
        if self.kind not in ("fgsm", "corruption", "ood_split"):
            raise InvalidParameter(f"unknown attack kind {self.kind!r}")
        if self.kind == "fgsm" and not 0.0 <= self.epsilon <= 1.0:
            raise InvalidParameter("epsilon must lie in [0, 1]")
        if self.kind == "corruption":
            if self.corruption_name not in SEVERITY_TABLE:
                raise UnknownCorruption(str(self.corruption_name))
            if not 1 <= self.severity <= 5:
                raise InvalidParameter("severity must be in 1..5")

    @property
    def key(self) -> str:
        if self.kind == "fgsm":
            return "fgsm" if self.epsilon == FGSM_EPSILON else f"fgsm@{self.epsilon:.4g}"
        if self.kind == "corruption":
            return f"{self.corruption_name}@{self.severity}"
        return f"ood:{self.split_id}"


def standard_suite(severity: int = CORRUPTION_SEVERITY, ood: bool = False) -> list[AttackConfig]:
    """FGSM at 16/255 plus every built-in corruption at ``severity``."""
    suite = [AttackConfig("fgsm")]
    suite += [AttackConfig("corruption", corruption_name=n, severity=severity) for n in CORRUPTIONS]
    if ood:
        suite.append(AttackConfig("ood_split"))
    return suite


@dataclass
class RobustnessReport:
    clean_acc: float
    attack_acc: dict = field(default_factory=dict)
    mean_corruption_acc: Optional[float] = None
    delta_pp: dict = field(default_factory=dict)

    def accuracies(self) -> dict:
        """Clean accuracy plus one entry per attack (the corruption mean is kept apart)."""
        return {"clean": self.clean_acc, **self.attack_acc}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "RobustnessReport":
        return cls(d["clean_acc"], dict(d.get("attack_acc", {})), d.get("mean_corruption_acc"), dict(d.get("delta_pp", {})))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "RobustnessReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def delta_pp(report: RobustnessReport, baseline: RobustnessReport) -> dict:
    ours, theirs = report.accuracies(), baseline.accuracies()
    if set(ours) != set(theirs):
        raise ReportMismatch(f"attack sets differ: {sorted(set(ours) ^ set(theirs))}")
    out = {k: ours[k] - theirs[k] for k in ours}
    if report.mean_corruption_acc is not None and baseline.mean_corruption_acc is not None:
        out["mean_corruption"] = report.mean_corruption_acc - baseline.mean_corruption_acc
    return out


def format_delta(value: float) -> str:
    """Explicit sign: ``+0.99`` improvement, ``-0.58`` degradation."""
    rounded = round(value, 2)
    return "0.00" if rounded == 0 else f"{rounded:+.2f}"


def _accuracy(model, x, y, batch_size, transform=None) -> float:
    if len(x) == 0:
        return 0.0
    correct = 0
    model.eval()
    for i in range(0, len(x), batch_size):
        xb, yb = x[i:i + batch_size], y[i:i + batch_size]
        if transform is not None:
            xb = transform(xb, yb, i // batch_size)
        with torch.no_grad():
            correct += (model(xb).argmax(1) == yb).sum().item()
    return 100.0 * correct / len(x)


def _attack_seed(seed: int, key: str) -> int:
    return (seed * 1_000_003 + zlib.crc32(key.encode())) % (2**63)


def evaluate(
    model,
    x: torch.Tensor,
    y: torch.Tensor,
    attacks: Sequence[AttackConfig] = (),
    baseline: Optional[RobustnessReport] = None,
    ood: Optional[Mapping[str, tuple]] = None,
    seed: int = 0,
    batch_size: int = 256,
    clip=(0.0, 1.0),
) -> RobustnessReport:
    """Clean accuracy plus one accuracy per attack; deltas only with a baseline.

    Corruptions assume NCHW images. Pass ``clip=None`` for inputs that are
    not confined to [0, 1] (tabular features).
    """
    clean = _accuracy(model, x, y, batch_size)
    per_attack, corr = {}, []
    for atk in attacks:
        if atk.kind == "fgsm":
            fn = lambda xb, yb, _, eps=atk.epsilon: fgsm_attack(model, xb, yb, eps, clip)
            acc = _accuracy(model, x, y, batch_size, fn)
        elif atk.kind == "corruption":
            base_seed = _attack_seed(seed, atk.key)
            fn = lambda xb, yb, b, a=atk, s=base_seed: corrupt(xb, a.corruption_name, a.severity, s + b)
            acc = _accuracy(model, x, y, batch_size, fn)
            corr.append(acc)
        else:
            if not ood or atk.split_id not in ood:
                raise InvalidParameter(f"no OOD split named {atk.split_id!r}")
            xo, yo = ood[atk.split_id]
            acc = _accuracy(model, xo, yo, batch_size)
        if atk.key in per_attack:
            raise InvalidParameter(f"duplicate attack {atk.key}")
        per_attack[atk.key] = acc
    report = RobustnessReport(clean, per_attack, float(np.mean(corr)) if corr else None)
    if baseline is not None:
        report.delta_pp = delta_pp(report, baseline)
    return report


def severity_curve(model, x, y, names: Sequence[str] = CORRUPTIONS, seed: int = 0, batch_size: int = 256) -> dict[int, float]:
    """Mean accuracy over ``names`` at each severity 1..5."""
    out = {}
    for sev in range(1, 6):
        attacks = [AttackConfig("corruption", corruption_name=n, severity=sev) for n in names]
        out[sev] = evaluate(model, x, y, attacks, seed=seed, batch_size=batch_size).mean_corruption_acc
    return out


# -- plots ----------------------------------------------------------------------------


def plot_tradeoff(reductions: Sequence[float], deltas: Mapping[str, Sequence[float]], path, title: str = "") -> None:
    """Delta accuracy (pp) against FLOP reduction (%), one curve per benchmark,
    with a dashed zero-drop reference line."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, ys in deltas.items():
        ax.plot(reductions, ys, marker="o", label=name)
    ax.axhline(0.0, color="black", linestyle="--", linewidth=1)
    ax.set_xlabel("FLOP reduction (%)")
    ax.set_ylabel("Δ accuracy (pp)")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
