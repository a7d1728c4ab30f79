"""Iterative prune / fine-tune campaigns with on-disk, resumable state.

Run directory layout::

    config.yaml              resolved configuration
    state.json               PruneCampaignState, rewritten atomically per iteration
    campaign.lock            held while a process works on the directory
    checkpoints/iter_000/    unpruned model, then one directory per removal
    audit/iter_001.json      consensus decision record for removal 1
    eval/iter_000.json       robustness report, deltas against iteration 0

Everything except latency is a pure function of the config, so a resumed
campaign ends in the same state as an uninterrupted one.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import torch
from filelock import FileLock, Timeout

from ..accounting import CostReport, cost_report, estimate_carbon, flops_count, measure_latency, training_hours
from ..consensus import prune_iteration
from ..errors import CampaignLocked, ConfigError, ReportError
from ..netlib import (
    Dataset,
    ModelCheckpoint,
    build_model,
    finetune,
    load_checkpoint,
    save_checkpoint,
    select_probes,
    train,
)
from ..robustness import RobustnessReport, delta_pp, evaluate
from ..surgery import eligible_layers, remove_block
from .config import ExperimentConfig, dump_config, load_config

log = logging.getLogger(__name__)

STATE_FILE = "state.json"
CONFIG_FILE = "config.yaml"
LOCK_FILE = "campaign.lock"


@dataclass
class IterationRecord:
    iteration: int
    victim: Optional[str]
    checkpoint: str
    audit: Optional[str]
    cost: dict
    robustness: dict
    co2_kg: float


@dataclass
class PruneCampaignState:
    """Append-only history; record 0 is the unpruned model."""

    status: str = "running"  # running | completed | target_reached | exhausted
    iterations: list[IterationRecord] = field(default_factory=list)

    @property
    def victims(self) -> list[str]:
        return [r.victim for r in self.iterations[1:]]

    @property
    def removals(self) -> int:
        return max(0, len(self.iterations) - 1)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PruneCampaignState":
        return cls(d["status"], [IterationRecord(**r) for r in d["iterations"]])

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        os.replace(tmp, path)

    @classmethod
    def load(cls, path) -> "PruneCampaignState":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise ReportError(f"no campaign state at {path}") from None
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ReportError(f"corrupt campaign state {path}: {exc}") from exc


# -- shared pieces ---------------------------------------------------------------


def train_base(cfg: ExperimentConfig, data: Dataset) -> ModelCheckpoint:
    spec = cfg.arch.to_spec(data.input_shape, data.num_classes)
    return train(build_model(spec, cfg.seed), data, cfg.train.to_train_config(cfg.seed))


@dataclass
class EvalContext:
    x: torch.Tensor
    y: torch.Tensor
    attacks: list
    ood: dict
    clip: Optional[tuple]
    seed: int
    batch_size: int

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, data: Dataset) -> "EvalContext":
        n = cfg.attacks.eval_samples or len(data.x_test)
        ood = {k: (x[:n], y[:n]) for k, (x, y) in data.ood.items()}
        attacks = [a for a in cfg.attacks.build(data.kind) if a.kind != "ood_split" or a.split_id in ood]
        clip = (0.0, 1.0) if data.kind == "image" else None
        return cls(data.x_test[:n], data.y_test[:n], attacks, ood, clip, cfg.seed, cfg.attacks.batch_size)

    def run(self, model, baseline: Optional[RobustnessReport] = None) -> RobustnessReport:
        return evaluate(model, self.x, self.y, self.attacks, baseline, self.ood, self.seed, self.batch_size, self.clip)


def training_co2(cfg: ExperimentConfig, flops_per_sample: int, samples: int) -> float:
    """Estimated emissions of one full training run of an architecture."""
    hours = training_hours(flops_per_sample, samples, cfg.train.epochs, cfg.carbon.throughput_flops)
    c = cfg.carbon
    return estimate_carbon(c.power_watts, hours, c.intensity_kg_per_kwh, c.usd_per_hour).co2_kg


def _account(cfg, ckpt, data, ctx, base_cost, base_report):
    model = ckpt.to_model()
    spec = ckpt.architecture
    latency = measure_latency(model, spec.input_shape, cfg.latency_repeats) if cfg.latency_repeats else None
    cost = cost_report(spec, base_cost, latency)
    report = ctx.run(model, base_report)
    if base_report is None:
        report.delta_pp = delta_pp(report, report)
    return cost, report, training_co2(cfg, flops_count(spec), len(data.x_train))


def _stop_reason(cfg: ExperimentConfig, state: PruneCampaignState) -> Optional[str]:
    rule = cfg.stop
    if rule.rule == "flop_target" and state.iterations[-1].cost["flop_reduction_pct"] >= rule.flop_target_pct:
        return "target_reached"
    if rule.rule == "max_iterations" and state.removals >= rule.max_iterations:
        return "completed"
    return None


# -- the loop -------------------------------------------------------------------------


def run_campaign(
    cfg: ExperimentConfig,
    out_dir,
    base: Optional[ModelCheckpoint] = None,
    resume: bool = False,
    data: Optional[Dataset] = None,
    base_dir: Optional[Path] = None,
) -> PruneCampaignState:
    """Score, remove, fine-tune, account and evaluate until the stop rule fires.

    ``base`` is the unpruned checkpoint; without it one is trained from the
    config. With ``resume=True`` the campaign continues from the last
    recorded iteration in ``out_dir``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lock = FileLock(str(out / LOCK_FILE), timeout=0)
    try:
        lock.acquire()
    except Timeout:
        raise CampaignLocked(f"{out} is in use by another campaign") from None
    try:
        return _run_locked(cfg, out, base, resume, data, base_dir)
    finally:
        lock.release()


def _run_locked(cfg, out, base, resume, data, base_dir):
    state_path = out / STATE_FILE
    if state_path.exists():
        if not resume:
            raise ConfigError(f"{out} already holds a campaign; pass --resume to continue it")
        stored = out / CONFIG_FILE
        if stored.exists():
            if load_config(stored).to_dict() != cfg.to_dict():
                raise ConfigError(f"config differs from the one stored in {stored}")
        state = PruneCampaignState.load(state_path)
    else:
        if resume:
            raise ConfigError(f"nothing to resume in {out}")
        state = None
    dump_config(cfg, out / CONFIG_FILE)

    data = data if data is not None else cfg.data.load(base_dir)
    probes = select_probes(data.x_train, cfg.probes.count, cfg.seed)
    metrics = cfg.metric_descriptors()
    ctx = EvalContext.from_config(cfg, data)

    if state is None:
        if base is None:
            log.info("training the unpruned model")
            base = train_base(cfg, data)
        path = save_checkpoint(base, out / "checkpoints" / "iter_000")
        cost, report, co2 = _account(cfg, base, data, ctx, None, None)
        report.save(_eval_path(out, 0))
        state = PruneCampaignState("running", [IterationRecord(
            0, None, str(path.relative_to(out)), None, cost.to_dict(), report.to_dict(), co2)])
        state.save(state_path)
    elif state.status != "running":
        log.info("campaign already finished (%s)", state.status)
        return state

    first = state.iterations[0]
    base_cost = CostReport(**first.cost)
    base_report = RobustnessReport.from_dict(first.robustness)
    ckpt = load_checkpoint(out / state.iterations[-1].checkpoint)

    while True:
        reason = _stop_reason(cfg, state)
        if reason:
            state.status = reason
            break
        eligible = eligible_layers(ckpt.architecture).eligible
        if not eligible:
            state.status = "completed" if cfg.stop.rule == "until_no_eligible" else "exhausted"
            break
        it = len(state.iterations)
        audit = prune_iteration(ckpt, eligible, probes, metrics, iteration=it)
        audit_path = out / "audit" / f"iter_{it:03d}.json"
        audit_path.parent.mkdir(exist_ok=True)
        audit_path.write_text(json.dumps(audit.to_json(), indent=2) + "\n")
        log.info("iteration %d: removing %s", it, audit.victim)

        ckpt = finetune(remove_block(ckpt, audit.victim), data, cfg.finetune.to_train_config(cfg.seed + it))
        path = save_checkpoint(ckpt, out / "checkpoints" / f"iter_{it:03d}")
        cost, report, co2 = _account(cfg, ckpt, data, ctx, base_cost, base_report)
        report.save(_eval_path(out, it))
        state.iterations.append(IterationRecord(
            it, str(audit.victim), str(path.relative_to(out)), str(audit_path.relative_to(out)),
            cost.to_dict(), report.to_dict(), co2,
        ))
        state.save(state_path)
        log.info("iteration %d: flops -%.2f%%, clean acc %.2f", it, cost.flop_reduction_pct, report.clean_acc)

    state.save(state_path)
    log.info("campaign %s after %d removals", state.status, state.removals)
    return state


def _eval_path(out: Path, it: int) -> Path:
    path = out / "eval" / f"iter_{it:03d}.json"
    path.parent.mkdir(exist_ok=True)
    return path
