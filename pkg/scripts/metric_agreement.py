"""How much do the individual similarity metrics agree on which block to drop?

Scores every eligible block of a checkpoint once, prints each metric's rank
table next to the consensus total, and the victim each metric would pick on
its own.

    python3 scripts/metric_agreement.py --checkpoint runs/desk_resnet/checkpoints/iter_000
"""

import argparse
from pathlib import Path

import torch

from consensus_prune.consensus import prune_iteration
from consensus_prune.expcli import load_config
from consensus_prune.netlib import load_checkpoint, select_probes
from consensus_prune.surgery import eligible_layers

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--checkpoint", required=True)
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk_resnet.yaml"))
    args = ap.parse_args()

    torch.set_num_threads(1)
    cfg = load_config(args.config)
    data = cfg.data.load(Path(args.config).resolve().parent)
    ckpt = load_checkpoint(args.checkpoint)
    probes = select_probes(data.x_train, cfg.probes.count, cfg.seed)
    eligible = eligible_layers(ckpt.architecture).eligible
    audit = prune_iteration(ckpt, eligible, probes, cfg.metric_descriptors())

    names = [t.metric_name for t in audit.tables]
    print(f"{'block':>6}  " + "  ".join(f"{n[:12]:>12}" for n in names) + f"  {'total':>6}")
    for layer in audit.eligible:
        ranks = "  ".join(f"{t.ranks[layer]:>12}" for t in audit.tables)
        print(f"{str(layer):>6}  {ranks}  {audit.score.totals[layer]:>6}")
    print()
    for t in audit.tables:
        print(f"{t.metric_name:>16} alone would remove {min(t.ranks, key=t.ranks.get)}")
    print(f"{'consensus':>16} removes {audit.victim}")


if __name__ == "__main__":
    main()
