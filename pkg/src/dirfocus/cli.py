"""Command line entry point: ``dirfocus {spectrum,synth,run,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .audio_io import read_audio
from .dataset.io import MANIFEST, DatasetFormatError, read_manifest, save_dataset
from .dataset.synth import SynthConfig, synth_generate
from .experiment import ExperimentConfig, ExperimentError, run_experiment
from .report import collect_results, write_report
from .spatial import DEFAULT_LOADING, ArrayGeometry, save_spectrum, spectrum_from_audio

__all__ = ["main", "build_parser"]

log = logging.getLogger("dirfocus")


def cmd_spectrum(args) -> int:
    """Compute one MVDR spectrum per trial with audio.

    Existing spectrum files are kept unless ``--force``. When the output is
    the dataset itself, the manifest gains ``spectrum_file`` entries;
    otherwise ``spectra.json`` in the output lists the files.
    """
    root = Path(args.in_dir)
    manifest = read_manifest(root)
    out = Path(args.out) if args.out else root
    in_place = out.resolve() == root.resolve()
    geom = ArrayGeometry(args.mic_distance, args.speed_of_sound)
    index, n_new, n_skip = {}, 0, 0
    for entry in manifest["trials"]:
        tid = entry["trial_id"]
        if not entry.get("audio_file"):
            log.warning("trial %s has no audio; skipped", tid)
            continue
        rel = f"spectra/t{tid:05d}.f64"
        target = out / rel
        if target.is_file() and target.with_suffix(".json").is_file() and not args.force:
            n_skip += 1
        else:
            spec = spectrum_from_audio(read_audio(root / entry["audio_file"]), geom, loading=args.loading)
            save_spectrum(target, spec, tid, args.loading, geom)
            n_new += 1
        index[str(tid)] = rel
        if in_place:
            entry["spectrum_file"] = rel
    if in_place:
        (root / MANIFEST).write_text(json.dumps(manifest, indent=1))
    else:
        (out / "spectra.json").write_text(json.dumps({"dataset": str(root.resolve()), "spectra": index}, indent=1))
    print(f"spectra: {n_new} written, {n_skip} already present")
    return 0


def cmd_synth(args) -> int:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    config = SynthConfig(**cfg)
    out = Path(args.out or "synth_data")
    if (out / MANIFEST).exists() and not args.force:
        print(f"{out / MANIFEST} exists; use --force to overwrite", file=sys.stderr)
        return 1
    trials = synth_generate(config, args.seed)
    path = save_dataset(out, trials, metadata={"synth": config.to_dict(), "seed": args.seed})
    print(f"wrote {len(trials)} trials to {path}")
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_json(args.config)
    if args.seed is not None:
        config.rng_seed = args.seed
    out = Path(args.out or config.output_dir)
    results = run_experiment(config, out, jobs=args.jobs, resume=args.resume)
    print(
        f"{results['model']} {results['paradigm']} {results['n_class']}-class, "
        f"{results['window_seconds']} s windows: balanced accuracy {results['balanced_acc_mean']:.4f} "
        f"{results.get('stars', '')}".rstrip()
    )
    print(f"results in {out}")
    return 0


def cmd_report(args) -> int:
    results = collect_results(args.results)
    if not results:
        print("no results.json files matched", file=sys.stderr)
        return 1
    written = write_report(results, args.out or "report", plots=not args.no_plots)
    for name, path in written.items():
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dirfocus", description="Directional focus decoding experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="precompute MVDR spatial spectra for a dataset")
    p.add_argument("in_dir", help="dataset root with manifest.json and audio")
    p.add_argument("--out", "--spectrum-out", dest="out", help="output directory (default: the dataset)")
    p.add_argument("--force", action="store_true", help="recompute existing spectra")
    p.add_argument("--mic-distance", type=float, default=0.18, help="microphone spacing in m")
    p.add_argument("--speed-of-sound", type=float, default=343.0)
    p.add_argument("--loading", type=float, default=DEFAULT_LOADING, help="relative diagonal loading")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--config", help="JSON with SynthConfig fields")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="dataset directory (default: synth_data)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="cross-validated training and evaluation")
    p.add_argument("--config", required=True, help="experiment JSON")
    p.add_argument("--seed", type=int, help="override the config's rng_seed")
    p.add_argument("--jobs", type=int, default=1, help="folds trained in parallel")
    p.add_argument("--resume", action="store_true", help="skip folds with saved results")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="consolidate results into CSV and SVG plots")
    p.add_argument("results", nargs="+", help="results.json globs or result directories")
    p.add_argument("--out", help="report directory (default: report)")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ExperimentError, DatasetFormatError, FileNotFoundError, ValueError) as exc:
        print(f"dirfocus {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
