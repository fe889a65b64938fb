#!/usr/bin/env python3
"""Compare print-enhancement chains: for each preset, build a small dataset,
then report real/fake segmentation rates and attack success at FAR = 1%.

Reproduces the enhancement-option comparison experiment shape: which chain
leaves recaptured fakes most usable to an attacker under this simulator.

Example:
    python scripts/compare_preprocessing.py --users 4 --seed 3
"""

import argparse
import sys
import tempfile
from pathlib import Path

from irisbench.evaluation import (
    EmptyAfterSegmentation,
    EmptyScores,
    run_protocol,
    threshold_at_far,
)
from irisbench.spoofsim import CHAIN_PRESETS, RECAPTURE_PRESETS, build_dataset


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=4)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--recapture", default="default", choices=sorted(RECAPTURE_PRESETS))
    ap.add_argument("--jobs", type=int, default=2)
    ap.add_argument("--workdir", help="keep datasets here instead of a temp dir")
    args = ap.parse_args()

    rows = []
    with tempfile.TemporaryDirectory() as td:
        base = Path(args.workdir) if args.workdir else Path(td)
        for name, chain in CHAIN_PRESETS.items():
            manifest = build_dataset(
                args.users,
                base / name,
                rp=RECAPTURE_PRESETS[args.recapture],
                chain=chain,
                seed=args.seed,
                jobs=args.jobs,
            )
            try:
                scores = run_protocol(manifest, protocol_seed=args.seed, jobs=args.jobs)
            except EmptyAfterSegmentation:
                rows.append((name, "0.0", "0.0", "--", "--"))
                continue
            f = scores.failures
            real_rate = 100.0 * f.real_segmented / f.real_total
            fake_rate = 100.0 * f.fake_segmented / f.fake_total
            try:
                op = threshold_at_far(scores, 1.0)
                sr1 = "--" if op.sr_attack1 is None else f"{op.sr_attack1:.1f}"
                sr2 = "--" if op.sr_attack2 is None else f"{op.sr_attack2:.1f}"
            except EmptyScores:
                sr1 = sr2 = "--"
            rows.append((name, f"{real_rate:.1f}", f"{fake_rate:.1f}", sr1, sr2))
            print(f"done: {name}", file=sys.stderr)

    print(f"{'chain':<14}{'seg real %':>12}{'seg fake %':>12}{'SR1@1% %':>10}{'SR2@1% %':>10}")
    for name, rr, fr, sr1, sr2 in rows:
        print(f"{name:<14}{rr:>12}{fr:>12}{sr1:>10}{sr2:>10}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
