"""``audit`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 a run or
report finished but contains failed trials.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (ArgumentError, AuditError, ConfigError, EnumerationError,
                     ManifestError)

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PARTIAL = 0, 2, 3, 4

log = logging.getLogger("harbias")


def _dataset_args(p, required=True):
    p.add_argument("--dataset", "--root", dest="root", required=required,
                   help="dataset directory")
    p.add_argument("--kind", default="canonical",
                   choices=("canonical", "lara_omocap", "motionsense"))
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--channels", default=None, help="comma-separated channel names")


def _load(args):
    from .ingestion import IngestConfig, load_dataset

    channels = tuple(args.channels.split(",")) if args.channels else None
    return load_dataset(IngestConfig(args.kind, Path(args.root), args.downsample, channels))


def _describe(ds) -> str:
    from .curation import binarize_profiles, profile_counts

    counts = profile_counts(binarize_profiles(ds.subjects))
    return (f"{ds.name}: {len(ds.subjects)} subjects, {len(ds.recordings)} recordings, "
            f"{len(ds.channels)} channels @ {ds.sampling_rate:g} Hz, "
            f"{len(ds.class_names)} classes; profiles "
            + ", ".join(f"{k}={counts.get(k, 0)}" for k in ("YF", "OF", "YM", "OM")))


def cmd_ingest(args) -> int:
    from .core import save_dataset

    ds = _load(args)
    print(_describe(ds))
    if args.out:
        save_dataset(ds, args.out)
        print(f"wrote {args.out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .core import save_dataset
    from .synthetic import SynthConfig, generate_synthetic

    counts = {"YF": 4, "OF": 4, "YM": 4, "OM": 4}
    if args.profiles:
        try:
            counts = {k: int(v) for k, v in (item.split("=") for item in args.profiles.split(","))}
        except ValueError as exc:
            raise ArgumentError("bad_profile", f"expected CODE=N,... got {args.profiles!r}") from exc
    cfg = SynthConfig(n_subjects_per_profile=counts, n_classes=args.classes,
                      frames_per_recording=args.frames, channels=args.n_channels,
                      idiosyncrasy_strength=args.strength, noise_sd=args.noise, seed=args.seed)
    ds = generate_synthetic(cfg)
    save_dataset(ds, args.out)
    print(_describe(ds))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_enumerate(args) -> int:
    from .curation import (HMLabel, binarize_profiles, check_manifest, enumerate_settings,
                           feasible_subsets, save_manifest)

    ds = _load(args)
    if args.verify:
        entries = json.loads(Path(args.verify).read_text())
        bad = check_manifest(entries, ds.subjects)
        for sid, declared, computed in bad:
            print(f"{sid}: declared {declared}, computed {computed}")
        print(f"{len(entries) - len(bad)}/{len(entries)} settings verified")
        return EXIT_OK if not bad else EXIT_DATA
    profiles = binarize_profiles(ds.subjects)
    labels = [HMLabel.parse(h) for h in args.hm] if args.hm else list(HMLabel)
    settings = []
    for hm in labels:
        n = len(feasible_subsets(profiles, hm))
        try:
            chosen = enumerate_settings(profiles, hm, args.max_settings, seed=args.seed)
        except EnumerationError as exc:
            print(f"{hm.value}: 0 feasible ({exc.reason})")
            continue
        print(f"{hm.value}: {n} feasible, {len(chosen)} selected")
        settings.extend(chosen)
    if args.out:
        save_manifest(settings, args.out)
        print(f"wrote {len(settings)} settings to {args.out}")
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import load_experiment_manifest, read_results, run_experiment

    manifest = load_experiment_manifest(args.manifest)
    path = run_experiment(manifest, args.out, workers=args.workers)
    records = [r for r in read_results(path) if r.get("manifest_hash") == manifest.hash]
    failed = [r for r in records if r.get("status") != "ok"]
    print(f"{len(records)} records in {path} ({len(failed)} failed)")
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_report(args) -> int:
    from .experiment import report

    bundle = report(args.inp, group_by=args.group_by, out_dir=args.out, plots=args.plots,
                    level=args.level)
    header = f"{'group':6s}{'settings':>9s}{'acc':>8s}{'sd':>7s}{'wF1':>8s}{'sd':>7s}"
    print(header)
    for s in bundle.summaries:
        print(f"{s.hm:6s}{s.n_settings:9d}{100 * s.mean_acc:8.2f}{100 * s.sd_acc:7.2f}"
              f"{100 * s.mean_wf1:8.2f}{100 * s.sd_wf1:7.2f}")
    if args.out:
        print(f"wrote {bundle.csv_path} and {bundle.json_path}"
              + (f" plus {len(bundle.figures)} figures" if bundle.figures else ""))
    return EXIT_PARTIAL if bundle.n_failed else EXIT_OK


def cmd_characteristics(args) -> int:
    from .experiment import audit_characteristics
    from . import reference

    if args.reference:
        cohorts = {"lara": [reference.lara_subjects()],
                   "motionsense": [reference.motionsense_subjects()],
                   "combined": [reference.lara_subjects(), reference.motionsense_subjects()],
                   }[args.reference]
    elif args.root:
        cohorts = [_load(args)]
    else:
        raise ArgumentError("no_dataset", "give --dataset or --reference")
    print(audit_characteristics(cohorts, alpha=args.alpha).format())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="audit",
                                     description="Training-set heterogeneity audit for HAR models.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset and optionally convert it to canonical form")
    _dataset_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--strength", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--frames", type=int, default=3000)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--classes", type=int, default=6)
    p.add_argument("--n-channels", type=int, default=6)
    p.add_argument("--profiles", default=None, help="e.g. YF=4,OF=4,YM=4,OM=4")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enumerate", help="draw training sets per HM label, or verify a manifest")
    _dataset_args(p)
    p.add_argument("--hm", nargs="*", default=None)
    p.add_argument("--max-settings", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--verify", default=None, help="settings JSON to re-check")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("run", help="run an experiment manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="summarize a results file")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--group-by", default="hm", choices=("hm", "hm_subgroup"))
    p.add_argument("--level", default="setting", choices=("setting", "trial"))
    p.add_argument("--out", default=None)
    p.add_argument("--plots", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("characteristics", help="cross-tabulate subject characteristics")
    _dataset_args(p, required=False)
    p.add_argument("--reference", choices=("lara", "motionsense", "combined"), default=None)
    p.add_argument("--alpha", type=float, default=0.05)
    p.set_defaults(func=cmd_characteristics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ArgumentError, ManifestError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AuditError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
