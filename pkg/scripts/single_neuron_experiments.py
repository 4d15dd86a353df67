"""Run every single-neuron experiment through the CLI, writing CSV/JSON under out/.

Covers the stability sweeps, resonance curves for tonic and SFM input, the
gradient probe and the BHRF maps for both schemes. Takes under a minute.

Usage: python3 scripts/single_neuron_experiments.py [--out DIR]
"""
import argparse
import json
import tempfile
from pathlib import Path

from adlif_lab.cli import main as cli


def run(*argv):
    code = cli([str(a) for a in argv])
    if code != 0:
        raise SystemExit(f"{' '.join(map(str, argv))} exited with {code}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/single_neuron")
    out = Path(ap.parse_args().out)
    with tempfile.TemporaryDirectory() as tmp:
        sfm = Path(tmp) / "sfm.json"
        sfm.write_text(json.dumps({"input": "sfm"}))
        fmax = Path(tmp) / "fmax.json"
        fmax.write_text(json.dumps({"mode": "ef_max_frequency", "tau_u_range": [1, 100], "tau_w_range": [1, 500],
                                    "n_points": [50, 50, 1]}))
        run("stability-sweep", "--out", out / "sweep")
        run("stability-sweep", "--config", fmax, "--out", out / "ef_max_frequency")
        run("resonance", "--out", out / "resonance_tonic")
        run("resonance", "--config", sfm, "--out", out / "resonance_sfm")
        run("gradient-probe", "--out", out / "gradient_probe")
        for scheme in ("se", "ef"):
            run("bhrf-map", "--scheme", scheme, "--out", out / f"bhrf_{scheme}")
    for name in ("sweep", "gradient_probe", "bhrf_se", "bhrf_ef"):
        print(name, (out / name / "summary.json").read_text().strip().replace("\n", " "))


if __name__ == "__main__":
    main()
