"""Energy, emissions and cost of training the unpruned vs the final pruned model.

Training time is derived from FLOPs at the throughput set in the config, so
the numbers compare architectures rather than the machine the campaign ran on.

    python3 scripts/carbon_summary.py runs/desk_resnet [--usd-per-hour 1.2]
"""

import argparse
from pathlib import Path

from consensus_prune.accounting import estimate_carbon, format_pct, reduction_pct, training_hours
from consensus_prune.expcli import PruneCampaignState, load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("campaign")
    ap.add_argument("--usd-per-hour", type=float, default=None)
    args = ap.parse_args()

    run = Path(args.campaign)
    cfg = load_config(run / "config.yaml")
    state = PruneCampaignState.load(run / "state.json")
    c = cfg.carbon
    rate = c.usd_per_hour if args.usd_per_hour is None else args.usd_per_hour

    def estimate(rec):
        hours = training_hours(rec.cost["flops"], cfg.data.n_train, cfg.train.epochs, c.throughput_flops)
        return estimate_carbon(c.power_watts, hours, c.intensity_kg_per_kwh, rate)

    base, final = estimate(state.iterations[0]), estimate(state.iterations[-1])
    print(f"{'':>10}  {'hours':>10}  {'kWh':>10}  {'kg CO2':>10}  {'USD':>8}")
    for name, e in (("unpruned", base), ("pruned", final)):
        print(f"{name:>10}  {e.wall_hours:>10.4g}  {e.energy_kwh:>10.4g}  {e.co2_kg:>10.4g}  {e.cost_usd:>8.4g}")
    print(f"\ncarbon reduction  {format_pct(reduction_pct(base.co2_kg, final.co2_kg))}%")
    if rate > 0:
        print(f"cost reduction    {format_pct(reduction_pct(base.cost_usd, final.cost_usd))}%")


if __name__ == "__main__":
    main()
