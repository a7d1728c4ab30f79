"""Train the desk ResNet, prune it until no block is removable, and report.

    python3 scripts/desk_campaign.py [--config configs/desk_resnet.yaml] [--out runs/desk_resnet]
"""

import argparse
import dataclasses
import logging
import time
from pathlib import Path

import torch

from consensus_prune.expcli import load_config, run_campaign, write_report

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk_resnet.yaml"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    out = Path(args.out or cfg.out_dir)

    t0 = time.perf_counter()
    state = run_campaign(cfg, out, resume=args.resume)
    minutes = (time.perf_counter() - t0) / 60
    csv_path, plot_path = write_report(out)

    base, final = state.iterations[0], state.iterations[-1]
    drop = base.robustness["clean_acc"] - final.robustness["clean_acc"]
    print(f"\nstatus          {state.status}")
    print(f"removed         {', '.join(state.victims) or '(none)'}")
    print(f"flop reduction  {final.cost['flop_reduction_pct']:.2f}%")
    print(f"clean accuracy  {base.robustness['clean_acc']:.2f}% -> {final.robustness['clean_acc']:.2f}% "
          f"(drop {drop:.2f} pp)")
    print(f"wall time       {minutes:.1f} min")
    print(f"report          {csv_path}\nplot            {plot_path}")


if __name__ == "__main__":
    main()
