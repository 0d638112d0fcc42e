"""Run a scaled-down optimization campaign and compare against random picks.

Uses the synthetic affinity oracle with a small pool, few rounds, and small
batches so the whole comparison finishes in under a minute. Writes the round
log for the guided method next to this script as small_campaign_rounds.csv.

Run with: python3 demos/small_campaign.py
"""

from pathlib import Path

from abbo import CampaignConfig, run_campaign
from abbo.campaign import ProtocolConfig, write_rounds_csv

PARENTAL = "EVQLVESGGGLVQPGGSLRLSCAASGFTFSSYAMSWVRQAPGK"

PROTOCOL = ProtocolConfig(
    initial_pool_size=120,
    initial_sample_size=24,
    rounds=3,
    batch_size=24,
    drop_count=8,
    repeats=1,
)


def main():
    results = {}
    for method in ("OneHot-T", "C-OneHot-T", "Random"):
        config = CampaignConfig(
            parental=PARENTAL, method=method, seed=4, protocol=PROTOCOL
        )
        results[method] = run_campaign(config)
        series = results[method].logs[0].best_so_far_series()
        trace = " -> ".join(f"{v:6.2f}" for v in series)
        print(f"{method:12s} best so far: {trace}")

    out = Path(__file__).parent / "small_campaign_rounds.csv"
    write_rounds_csv(out, results["OneHot-T"])
    print(f"\nround log for OneHot-T written to {out.name}")

    final = {m: r.logs[0].records[-1].best_so_far for m, r in results.items()}
    best = max(final, key=final.get)
    print(f"best final value: {final[best]:.2f} ({best})")


if __name__ == "__main__":
    main()
