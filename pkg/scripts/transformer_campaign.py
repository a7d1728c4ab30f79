"""Prune the tabular transformer with the consensus criterion.

    python3 scripts/transformer_campaign.py [--out runs/transformer_tabular]
"""

import argparse
import logging
from pathlib import Path

import torch

from consensus_prune.expcli import load_config, run_campaign, write_report
from consensus_prune.robustness import format_delta

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "transformer_tabular.yaml"))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)
    cfg = load_config(args.config)
    out = Path(args.out or cfg.out_dir)
    state = run_campaign(cfg, out)
    write_report(out)

    print(f"\n{'iter':>4}  {'victim':>6}  {'FLOPs %':>8}  {'clean':>6}  deltas (pp)")
    for rec in state.iterations:
        deltas = " ".join(f"{k}={format_delta(v)}" for k, v in rec.robustness["delta_pp"].items())
        print(f"{rec.iteration:>4}  {rec.victim or '-':>6}  {rec.cost['flop_reduction_pct']:>8.2f}  "
              f"{rec.robustness['clean_acc']:>6.2f}  {deltas}")


if __name__ == "__main__":
    main()
