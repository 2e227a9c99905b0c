"""Command line entry point: ``evobrain <command> ...``.

Every command prints tab-separated result lines on stdout and writes its
JSON report (and figures where relevant) under the output directory.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, stats
from .evolution import ExperimentConfig


def _onoff(v: str) -> bool:
    if v not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return v == "on"


def _overrides(args) -> dict:
    d = {}
    for key in ("generations", "population", "games"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    for key in ("hebbian", "imagination"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    return d


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable); replaces the manifest seeds")
    p.add_argument("--generations", type=int)
    p.add_argument("--population", type=int)
    p.add_argument("--games", type=int)
    p.add_argument("--hebbian", type=_onoff, metavar="on|off")
    p.add_argument("--imagination", type=_onoff, metavar="on|off")
    p.add_argument("--out", help=f"output directory (default: ${harness.OUTPUT_ENV} or ./runs)")


def _config(args, base: dict | None = None) -> ExperimentConfig:
    d = {**harness.DESK_DEFAULTS, **harness.SET_OVERRIDES["set1-on"], **(base or {}), **_overrides(args)}
    if args.seed:
        d["seed"] = args.seed[0]
    return ExperimentConfig.from_dict(d)


def _out_dir(args, default_name: str) -> Path:
    out = Path(args.out) if args.out else harness.output_root() / default_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(*fields) -> None:
    print("\t".join(str(f) for f in fields))


def cmd_run(args) -> int:
    m = harness.RunManifest.load(args.manifest).to_dict()
    m["overrides"] = {**m.get("overrides", {}), **_overrides(args)}
    if args.seed:
        m["seeds"] = args.seed
    if args.out:
        m["output_dir"] = args.out
    manifest = harness.RunManifest.from_dict(m)

    def progress(rec):
        _emit("gen", rec.generation, f"{rec.best_agreement:.4f}", f"{rec.best_fitness:.4f}", f"{rec.mean_fitness:.4f}")

    harness.run_set(manifest, progress=progress if args.verbose else None)
    out = manifest.directory()
    _render(out)
    _emit("set", "seed", "final_best_A", "final_best_F")
    for p in sorted(out.glob("*_seed*.csv")):
        s = stats.series_from_log(p)
        _emit(p.stem.rpartition("_seed")[0], s.seed, f"{s.agreement[-1]:.4f}", f"{s.fitness[-1]:.4f}")
    _emit("report", out / "report.json")
    return 0


def _render(out: Path) -> None:
    from . import plotting

    series: dict = {}
    for p in sorted(out.glob("*_seed*.csv")):
        set_id, _, seed = p.stem.rpartition("_seed")
        series.setdefault(set_id, []).append(stats.series_from_log(p, int(seed)))
    if series:
        plotting.plot_trajectories(series, out / "trajectories.png")
    if len(series.get("set1-on", [])) >= 2 and len(series.get("set1-off", [])) >= 2:
        _, rows = stats.crossover_report(series["set1-on"], series["set1-off"], iters=1000)
        plotting.plot_variance(rows, out / "set1_variance.png")


def cmd_baselines(args) -> int:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    cfg = _config(args, base)
    rep = harness.run_baselines(cfg)
    out = _out_dir(args, "baselines")
    stats.write_report(out / "baselines.json", rep)
    _emit("baseline", "delta_t", "A", "W")
    _emit("null", "", f"{rep['null']['A']:.4f}", f"{rep['null']['W']:.3f}")
    _emit("random", "", f"{rep['random']['A']:.4f}", f"{rep['random']['W']:.3f}")
    for row in rep["temperature"]:
        _emit("temperature", row["delta_t"], f"{row['A']:.4f}", f"{row['W']:.3f}")
    return 0


def cmd_ablate(args) -> int:
    genome = harness.load_checkpoint(args.checkpoint)
    cfg = _config(args)
    rep = harness.run_hebbian_ablation(genome, args.opponents.split(","), cfg)
    out = _out_dir(args, "ablation")
    stats.write_report(out / "ablation.json", rep)
    _emit("opponent", "hebbian", "A", "W", "wins", "draws", "losses")
    for c in rep["cells"]:
        _emit(c["opponent"], c["hebbian"], f"{c['A']:.4f}", f"{c['W']:.3f}", c["wins"], c["draws"], c["losses"])
    return 0


def cmd_probe(args) -> int:
    genomes = [harness.load_checkpoint(p) for p in args.checkpoint]
    fens = [ln.strip() for ln in Path(args.positions).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    cfg = _config(args)
    rep = harness.probe(genomes, fens, cfg)
    out = _out_dir(args, "probe")
    stats.write_report(out / "probe.json", rep)
    _emit("genome", "position", "move")
    for g in rep["genomes"]:
        for i, mv in enumerate(g["choices"]):
            _emit(g["lineage_id"], i, mv)
    _emit("disagreements", len(rep["disagreements"]))
    return 0


def cmd_stats(args) -> int:
    rep = harness.stats_from_logs(args.logs)
    out = Path(args.out) if args.out else Path(args.logs)
    out.mkdir(parents=True, exist_ok=True)
    stats.write_report(out / "stats_report.json", rep)
    _render(Path(args.logs))
    _emit("set", "n_seeds", "mean_final_A", "sd_final_A")
    for set_id, entry in rep.items():
        if "endpoint_agreement" in entry:
            _emit(set_id, len(entry["endpoint_agreement"]), f"{entry['mean']:.4f}", f"{entry['sd']:.4f}")
    if "set1" in rep:
        _emit("set1_crossover_generation", rep["set1"]["crossover_generation"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evobrain", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the sets listed in a manifest")
    p.add_argument("--manifest", required=True)
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baselines", help="null, random-parameter and temperature-only baselines")
    p.add_argument("--config", help="JSON experiment config (fields of ExperimentConfig)")
    _add_overrides(p)
    p.set_defaults(func=cmd_baselines)

    p = sub.add_parser("ablate", help="evaluate a checkpoint with plasticity off and on")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--opponents", default="opponent-A,opponent-B", help="comma separated profile names")
    _add_overrides(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("probe", help="behavioural probe of one or more checkpoints")
    p.add_argument("--checkpoint", required=True, action="append")
    p.add_argument("--positions", required=True, help="file with one FEN per line")
    _add_overrides(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("stats", help="set reports from a directory of generation logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"evobrain: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
