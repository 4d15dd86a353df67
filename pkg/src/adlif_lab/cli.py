"""Command-line entry point: one subcommand per experiment.

Every subcommand writes its outputs plus ``manifest.json`` (config echo,
seed, code version) into ``--out``. Exit codes: 0 success, 2 config or
usage error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 2, 3
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS")


class UsageError(Exception):
    pass


def configure_threads(strict: bool) -> int | None:
    """Cap BLAS threads; must run before numpy is first imported to take effect."""
    raw = os.environ.get("ADLIF_LAB_THREADS", "")
    n = None
    if raw:
        try:
            n = int(raw)
        except ValueError as e:
            raise UsageError("ADLIF_LAB_THREADS must be an integer") from e
        if n < 1:
            raise UsageError("ADLIF_LAB_THREADS must be >= 1")
    if strict:
        n = 1
    if n is not None:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)
    return n


def load_json_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            d = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(d, dict):
        raise UsageError("config must be a JSON object")
    return d


def merged(defaults: dict, overrides: dict) -> dict:
    unknown = set(overrides) - set(defaults)
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = dict(defaults)
    out.update(overrides)
    return out


def _range(v, name) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in v)
    except (TypeError, ValueError) as e:
        raise UsageError(f"{name} must be a [min, max] pair") from e
    if not lo <= hi:
        raise UsageError(f"{name} is empty")
    return lo, hi


def _finish(args, command: str, config: dict, outputs: list[str]) -> None:
    from .artifacts import run_manifest, write_json

    write_json(Path(args.out) / "manifest.json", run_manifest(command, config, args.seed, outputs))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

SWEEP_DEFAULTS = {
    "mode": "grid",
    "tau_u_range": [5.0, 25.0],
    "tau_w_range": [60.0, 300.0],
    "a_range": [0.0, 120.0],
    "n_points": [10, 10, 10],
    "schemes": ["ef", "se", "continuous"],
    "form": "exponential",
    "dt": 1.0,
}


def cmd_stability_sweep(args, cfg: dict) -> int:
    import numpy as np

    from .artifacts import write_csv, write_json
    from .stability import ef_max_frequency, sweep_grid

    c = merged(SWEEP_DEFAULTS, cfg)
    if args.scheme:
        c["schemes"] = [args.scheme]
    if args.dt is not None:
        c["dt"] = args.dt
    if not c["dt"] > 0:
        raise UsageError("dt must be positive")
    n = c["n_points"]
    n = [int(n)] * 3 if isinstance(n, (int, float)) else [int(x) for x in n]
    if len(n) != 3 or min(n) < 1:
        raise UsageError("n_points must be a positive int or three positive ints")
    tu, tw, ar = (_range(c[k], k) for k in ("tau_u_range", "tau_w_range", "a_range"))
    if tu[0] <= 0 or tw[0] <= 0:
        raise UsageError("time constants must be positive")
    out = Path(args.out)
    if c["mode"] == "ef_max_frequency":
        TU, TW = np.meshgrid(np.linspace(*tu, n[0]), np.linspace(*tw, n[1]), indexing="ij")
        f = ef_max_frequency(TU, TW, c["dt"], c["form"])
        rows = [{"tau_u": a, "tau_w": b, "f_max_hz": v} for a, b, v in zip(TU.ravel(), TW.ravel(), np.ravel(f))]
        write_csv(out / "ef_max_frequency.csv", rows)
        _finish(args, "stability-sweep", c, ["ef_max_frequency.csv"])
        return EXIT_OK
    if c["mode"] != "grid":
        raise UsageError("mode must be 'grid' or 'ef_max_frequency'")
    rows, summary = [], {}
    for scheme in c["schemes"]:
        if scheme not in ("ef", "se", "continuous"):
            raise UsageError(f"unknown scheme {scheme!r} for a sweep")
        part = sweep_grid(tu, tw, ar, scheme, tuple(n), c["dt"], c["form"])
        for r in part:
            # decay per millisecond, comparable across dt
            r["r_per_ms"] = r["r"] ** (1.0 / c["dt"])
        rows += part
        summary[scheme] = {"points": len(part), "stable": sum(r["stable"] for r in part)}
    write_csv(out / "sweep.csv", rows)
    write_json(out / "summary.json", summary)
    _finish(args, "stability-sweep", c, ["sweep.csv", "summary.json"])
    return EXIT_OK


RESONANCE_DEFAULTS = {
    "input": "tonic",
    "freqs": [1.0, 200.0, 1.0],
    "duration": 10000,  # ms
    "weight": 1.0,
    "models": None,
}


def _default_models(inp: str) -> list[dict]:
    if inp == "sfm":
        return [
            {"name": "adlif_slow", "tau_u": 125.0, "tau_w": 200.0, "a": 100.0, "scheme": "se"},
            {"name": "lif", "tau_u": 125.0, "scheme": "lif"},
        ]
    return [
        {"name": "adlif", "tau_u": 15.0, "tau_w": 60.0, "a": 120.0, "scheme": "se"},
        {"name": "lif", "tau_u": 125.0, "scheme": "lif"},
    ]


def cmd_resonance(args, cfg: dict) -> int:
    import numpy as np

    from .artifacts import write_csv, write_json
    from .neuron import NeuronParams, build_discrete_system
    from .signals import sfm_encode, rms_response, tonic_train
    from .stability import analyze

    c = merged(RESONANCE_DEFAULTS, cfg)
    if c["input"] not in ("tonic", "sfm"):
        raise UsageError("input must be 'tonic' or 'sfm'")
    if c["input"] == "sfm" and "freqs" not in cfg:
        c["freqs"] = [1.0, 20.0, 1.0]
    start, stop, step = (float(x) for x in c["freqs"])
    if not (0 < start <= stop and step > 0):
        raise UsageError("freqs must be [start, stop, step] with 0 < start <= stop")
    freqs = np.arange(start, stop + step / 2, step)
    models = c["models"] or _default_models(c["input"])
    dt = args.dt if args.dt is not None else 1.0
    duration = int(round(c["duration"] / dt))
    rows, summary = [], {}
    for m in models:
        m = dict(m)
        name = m.pop("name")
        scheme = m.pop("scheme", "se")
        if args.scheme and scheme != "lif":
            scheme = args.scheme
        p = NeuronParams(dt=dt, **m)
        rms = []
        for f in freqs:
            inp = tonic_train(f, duration, dt) if c["input"] == "tonic" else sfm_encode(f, duration, dt)
            rms.append(rms_response(p, scheme, inp, c["weight"]))
            rows.append({"model": name, "scheme": scheme, "drive_hz": f, "rms": rms[-1]})
        intrinsic = analyze(build_discrete_system(p, scheme)).f_hz if scheme != "lif" else 0.0
        summary[name] = {"scheme": scheme, "peak_hz": float(freqs[int(np.argmax(rms))]), "intrinsic_hz": intrinsic}
    write_csv(Path(args.out) / "resonance.csv", rows)
    write_json(Path(args.out) / "summary.json", summary)
    _finish(args, "resonance", c, ["resonance.csv", "summary.json"])
    return EXIT_OK


def _experiment_config(args):
    from .experiments import with_seed
    from .trainer.config import load_config

    if args.config is None:
        raise UsageError("train needs --config")
    cfg = load_config(args.config)
    return with_seed(cfg, args.seed)


def cmd_train(args, cfg: dict) -> int:
    from .experiments import resolve_data, run_experiment
    from .trainer.network import NumericalDivergence

    ecfg = _experiment_config(args)
    resolve_data(ecfg)
    try:
        summary = run_experiment(ecfg, args.out, progress=(lambda r: print(r, flush=True)) if args.verbose else None)
    except NumericalDivergence as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    print(json.dumps({k: summary[k] for k in ("best_epoch", "best_val", "test_at_best", "diverged")}, default=str))
    return EXIT_DIVERGED if summary["diverged"] else EXIT_OK


def _run_dir(path) -> Path:
    if path is None:
        raise UsageError("--checkpoint is required")
    p = Path(path)
    if (p / "checkpoint" / "manifest.json").exists():
        return p
    if (p / "manifest.json").exists() and p.name == "checkpoint":
        return p.parent
    raise UsageError(f"no checkpoint at {p}")


def cmd_autoregress(args, cfg: dict) -> int:
    from .artifacts import read_json, write_csv, write_json
    from .experiments import SPRING_EVAL_DEFAULTS, autoregress_summary, resolve_data
    from .systems import spring_mass_generate
    from .trainer.config import ExperimentConfig
    from .trainer.network import NumericalDivergence, load_network

    run = _run_dir(args.checkpoint)
    net, _ = load_network(run / "checkpoint")
    ecfg = ExperimentConfig.from_dict(read_json(run / "manifest.json")["config"])
    d = resolve_data(ecfg)
    if d["kind"] != "spring_mass":
        raise UsageError("autoregress needs a spring-mass checkpoint")
    seed = ecfg.train.seed if d["seed"] is None else d["seed"]
    system = spring_mass_generate(d["n_masses"], tuple(d["spring_range"]), seed=seed, dt_sim=d["dt_sim"])
    e = merged(SPRING_EVAL_DEFAULTS, {**ecfg.eval, **cfg})
    if args.seed is not None:
        e["seed"] = args.seed
    try:
        s = autoregress_summary(net, system, e)
    except NumericalDivergence as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    rows = [
        {"bucket_start_ms": t, "mse": m, "baseline_mse": s["baseline_mse"]}
        for t, m in zip(s["bucket_start_ms"], s["bucket_mse"])
    ]
    write_csv(Path(args.out) / "autoregress.csv", rows)
    write_json(Path(args.out) / "summary.json", s)
    _finish(args, "autoregress", {"checkpoint": str(run), "eval": e}, ["autoregress.csv", "summary.json"])
    return EXIT_OK


BSD_GEN_DEFAULTS = {"n_classes": 10, "n_samples": 4000, "T": 200, "spec_seed": 0}


def cmd_bsd_generate(args, cfg: dict) -> int:
    from .systems import bsd_generate, expected_burst_spikes, make_bsd_spec, save_bsd

    c = merged(BSD_GEN_DEFAULTS, cfg)
    seed = 0 if args.seed is None else args.seed
    spec = make_bsd_spec(int(c["n_classes"]), seed=int(c["spec_seed"]), T=int(c["T"]))
    ds = bsd_generate(spec, int(c["n_samples"]), seed)
    meta = {"mean_rate": ds.mean_rate(), "burst_spikes_pm5": expected_burst_spikes(spec)}
    save_bsd(Path(args.out) / "dataset", ds, meta)
    _finish(args, "bsd-generate", c, ["dataset/manifest.json"])
    return EXIT_OK


SPRING_GEN_DEFAULTS = {"n_masses": 4, "spring_range": [500.0, 10000.0], "n_samples": 4096, "T_steps": 200, "dt_sim": 2.5}


def cmd_springmass_generate(args, cfg: dict) -> int:
    from .systems import save_trajectories, spring_mass_dataset, spring_mass_generate

    c = merged(SPRING_GEN_DEFAULTS, cfg)
    seed = 0 if args.seed is None else args.seed
    dt_sim = args.dt if args.dt is not None else c["dt_sim"]
    system = spring_mass_generate(int(c["n_masses"]), _range(c["spring_range"], "spring_range"), seed=seed, dt_sim=dt_sim)
    ds = spring_mass_dataset(system, int(c["n_samples"]), int(c["T_steps"]), seed)
    meta = {"eigenfrequencies_hz": (system.eigenfrequencies() / (2.0 * math.pi)).tolist()}
    save_trajectories(Path(args.out) / "dataset", ds, meta)
    _finish(args, "springmass-generate", {**c, "dt_sim": dt_sim}, ["dataset/manifest.json"])
    return EXIT_OK


VISUALIZE_DEFAULTS = {
    "T": 200,
    "n_iter": 400,
    "eta": 0.1,
    "nu": 0.891,
    "gamma_s": 0.1,
    "sigma_init": 5.0,
    "smoothing": "time",
    "burn_in": 0.8,
    "loss": "sum_softmax_ce",
    "renormalize": True,
}


def cmd_visualize(args, cfg: dict) -> int:
    import numpy as np

    from .artifacts import save_arrays, write_csv, write_json
    from .probe import VisualizationConfig, feature_visualize, heatmap_rows
    from .trainer.network import load_network

    run = _run_dir(args.checkpoint)
    net, meta = load_network(run / "checkpoint")
    c = merged(VISUALIZE_DEFAULTS, cfg)
    if not 0 <= args.target < net.config.n_outputs:
        raise UsageError("target class out of range")
    mean_rate = None
    if c["renormalize"]:
        mean_rate = meta.get("summary", {}).get("mean_rate")
        if mean_rate is None:
            raise UsageError("checkpoint has no mean input rate; set renormalize to false")
    vc = VisualizationConfig(
        n_iter=int(c["n_iter"]), eta=c["eta"], nu=c["nu"], gamma_s=c["gamma_s"], sigma_init=c["sigma_init"],
        smoothing=c["smoothing"], burn_in=c["burn_in"], loss=c["loss"], target=args.target,
        mean_rate=mean_rate, seed=0 if args.seed is None else args.seed,
    )
    res = feature_visualize(net, int(c["T"]), vc)
    out = Path(args.out)
    save_arrays(out / "sample", {"x": res.x.astype("<f8")}, {"target": args.target})
    write_csv(out / "heatmap.csv", heatmap_rows(res.x), ["t", "channel", "value"])
    write_csv(out / "losses.csv", [{"iteration": i, "loss": v} for i, v in enumerate(res.losses)])
    summary = {"target": args.target, "target_score": res.target_score, "mean": float(np.mean(res.x)),
               "min": float(np.min(res.x)), "loss_first": float(res.losses[0]), "loss_last": float(res.losses[-1])}
    write_json(out / "summary.json", summary)
    _finish(args, "visualize", {**c, "checkpoint": str(run), "target": args.target},
            ["sample/manifest.json", "heatmap.csv", "losses.csv", "summary.json"])
    return EXIT_OK


PROBE_DEFAULTS = {"tau_u": 100.0, "tau_w": 300.0, "a": 300.0, "lif_tau_u": 100.0, "T": 330, "freq_hz": 17.0,
                  "amplitude": 1.0, "constant": 1.0}


def cmd_gradient_probe(args, cfg: dict) -> int:
    from .artifacts import write_csv, write_json
    from .neuron import NeuronParams
    from .probe import inductive_bias_probe, state_derivative_trace

    c = merged(PROBE_DEFAULTS, cfg)
    scheme = args.scheme or "se"
    if scheme == "lif":
        raise UsageError("the probe compares an adLIF scheme against LIF; pick ef or se")
    dt = args.dt if args.dt is not None else 1.0
    p = NeuronParams(tau_u=c["tau_u"], tau_w=c["tau_w"], a=c["a"], dt=dt)
    lp = NeuronParams(tau_u=c["lif_tau_u"], dt=dt)
    T = int(c["T"])
    res = inductive_bias_probe(p, lp, scheme, T, c["freq_hz"], c["amplitude"], c["constant"])
    lif_d = state_derivative_trace(lp, "lif", T)
    out = Path(args.out)
    write_csv(out / "derivative.csv",
              [{"k": k + 1, "adlif": res.derivative[k], "lif": lif_d[k]} for k in range(T)])
    write_csv(out / "gradients.csv", [{"condition": k, "gradient": v} for k, v in res.gradients.items()])
    write_json(out / "summary.json", {"period_ms": res.period_ms, "aligned_center_ms": res.aligned_center_ms,
                                      **res.gradients})
    _finish(args, "gradient-probe", {**c, "scheme": scheme, "dt": dt},
            ["derivative.csv", "gradients.csv", "summary.json"])
    return EXIT_OK


BHRF_DEFAULTS = {"omega_range": [1.0, 300.0], "damping_range": [0.0, 50.0], "n_points": [30, 26],
                 "delta": 1e-3, "decay": "exponential", "literal": False}


def cmd_bhrf_map(args, cfg: dict) -> int:
    import numpy as np

    from .artifacts import write_csv, write_json
    from .stability import bhrf_effective_map

    c = merged(BHRF_DEFAULTS, cfg)
    if args.dt is not None:
        c["delta"] = args.dt / 1000.0
    scheme = args.scheme or "se"
    if scheme not in ("ef", "se"):
        raise UsageError("bhrf-map supports ef and se")
    om, dm = _range(c["omega_range"], "omega_range"), _range(c["damping_range"], "damping_range")
    n_om, n_dm = (int(x) for x in c["n_points"])
    if min(n_om, n_dm) < 1 or not c["delta"] > 0:
        raise UsageError("n_points and delta must be positive")
    rows = bhrf_effective_map(np.linspace(*om, n_om), np.linspace(*dm, n_dm), c["delta"], scheme,
                              c["decay"], bool(c["literal"]))
    write_csv(Path(args.out) / "bhrf_map.csv", rows)
    write_json(Path(args.out) / "summary.json",
               {"scheme": scheme, "points": len(rows), "unstable": sum(r["unstable"] for r in rows)})
    _finish(args, "bhrf-map", {**c, "scheme": scheme}, ["bhrf_map.csv", "summary.json"])
    return EXIT_OK


COMMANDS = {
    "stability-sweep": (cmd_stability_sweep, "eigenvalue sweep over a (tau_u, tau_w, a) grid"),
    "resonance": (cmd_resonance, "membrane RMS against drive frequency"),
    "train": (cmd_train, "train a network from an experiment config"),
    "autoregress": (cmd_autoregress, "closed-loop evaluation of a spring-mass checkpoint"),
    "bsd-generate": (cmd_bsd_generate, "generate a burst sequence detection dataset"),
    "springmass-generate": (cmd_springmass_generate, "generate spring-mass trajectories"),
    "visualize": (cmd_visualize, "optimize an input sample for a target class"),
    "gradient-probe": (cmd_gradient_probe, "state-derivative and weight-gradient probe"),
    "bhrf-map": (cmd_bhrf_map, "effective frequency and damping of a discretized BHRF neuron"),
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adlif-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help=f"output directory (default out/{name})")
        p.add_argument("--strict", action="store_true", help="single-threaded deterministic reductions")
        p.add_argument("--scheme", choices=["lif", "ef", "se"], default=None)
        p.add_argument("--dt", type=float, default=None, help="time step in ms")
        if name in ("autoregress", "visualize"):
            p.add_argument("--checkpoint", default=None, help="run directory written by 'train'")
        if name == "visualize":
            p.add_argument("--target", type=int, default=0, help="target class")
        if name == "train":
            p.add_argument("--verbose", action="store_true", help="print one line per epoch")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    if args.out is None:
        args.out = str(Path("out") / args.command)
    try:
        configure_threads(args.strict)
        cfg = {} if args.command == "train" else load_json_config(args.config)
        from .neuron import InvalidParameterError
        from .trainer.config import ConfigError

        fn = COMMANDS[args.command][0]
        try:
            return fn(args, cfg)
        except (ConfigError, InvalidParameterError) as e:
            raise UsageError(str(e)) from e
    except UsageError as e:
        print(f"adlif-lab {args.command}: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
