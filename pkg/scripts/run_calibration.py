#!/usr/bin/env python3
"""Calibrate the mock transmon and compare recovered to true parameters.

Writes calibration.json and silhouette_heatmap.csv under --out, prints a
recovered-vs-true summary.
"""
import argparse
import json
import os

from nuqutrit.device import (
    MockTransmon,
    calibration_report,
    device_from_json,
    heatmap_to_csv,
    silhouette_optimize,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=os.environ.get("NUQUTRIT_OUT", "runs"))
    ap.add_argument("--device", default=None, help="Device JSON file.")
    ap.add_argument("--shots", type=int, default=8192)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    device = device_from_json(args.device) if args.device else MockTransmon()
    out_dir = os.path.join(args.out, "calibration")
    os.makedirs(out_dir, exist_ok=True)

    report = calibration_report(device, shots=args.shots, seed=args.seed)
    with open(os.path.join(out_dir, "calibration.json"), "w") as fh:
        json.dump(report, fh, indent=2)
    sil = silhouette_optimize(device, seed=args.seed)
    heatmap_to_csv(sil, os.path.join(out_dir, "silhouette_heatmap.csv"))

    for key in ("f12_ghz", "a_pi_01", "a_pi_12", "under_rotation_12",
                "decay_rate_khz"):
        entry = report[key]
        if isinstance(entry, dict):
            print(f"{key}: estimated {entry['estimated']:.6g} "
                  f"(true {entry['true']:.6g})")
    opt = report["readout_optimum"]
    print(f"readout optimum: estimated {opt['estimated']} (true {opt['true']})")
    acc = report["readout_accuracies"]
    print(f"readout accuracies: estimated {[round(a, 4) for a in acc['estimated']]} "
          f"(true {acc['true']})")
    print(f"outputs in {out_dir}")


if __name__ == "__main__":
    main()
