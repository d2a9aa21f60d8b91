"""Command-line entry point: ``gazeprint <subcommand> ...``.

Exit status: 0 success, 2 usage error, 3 data error, 4 degenerate evaluation.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .core import degrees_to_pixels, load_manifest
from .dissimilarity import DEFAULT_EPSILON, METRICS, FeatureGrid, build_matrix, parse_matrix, serialize_matrix
from .evaluation import evaluate, serialize_curve
from .exceptions import DataError, DegenerateGroundTruth
from .fdm import DEFAULT_GRID, DEFAULT_SIGMA, parse_fdm, serialize_fdm
from .fixations import ClusterParams, parse_fixations, serialize_fixations
from .pipeline import (DOMAINS, PipelineConfig, normalize_domain, run_pipeline, stage_fdm,
                       stage_fixations, stage_recalibrate)
from .spectral import parse_spectrum, serialize_spectrum, spectral_feature
from .synth import SubjectProfile, generate_dataset, paper_presets
from .ttt import DEFAULT_WINDOW, extract_ttt, serialize_records, serialize_stats, ttt_stats

log = logging.getLogger("gazeprint")

EXIT_USAGE, EXIT_DATA, EXIT_DEGENERATE = 2, 3, 4


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def _cluster_params(args, geometry) -> ClusterParams:
    return ClusterParams.default(geometry, args.eps_deg, min_points=args.min_points,
                                 min_duration=args.min_duration, max_gap=args.max_gap)


def _add_cluster_flags(p):
    p.add_argument("--eps-deg", dest="eps_deg", type=float, default=1.0)
    p.add_argument("--min-points", dest="min_points", type=int, default=5)
    p.add_argument("--min-duration", dest="min_duration", type=float, default=0.1)
    p.add_argument("--max-gap", dest="max_gap", type=float, default=0.1)


# -- subcommands -------------------------------------------------------------------

def cmd_synth(args) -> int:
    profiles = None
    if args.profile:
        profiles = {}
        for spec in args.profile:
            name, _, path = spec.partition("=")
            if not path:
                raise ValueError(f"--profile expects NAME=PATH, got {spec!r}")
            profiles[name] = SubjectProfile.from_json(Path(path).read_text(encoding="utf-8"))
    elif args.write_presets:
        a, b = paper_presets()
        _emit(a.to_json(), str(Path(args.out) / "profile_A.json"))
        _emit(b.to_json(), str(Path(args.out) / "profile_B.json"))
    weeks = tuple(w for w in args.weeks.split(",") if w)
    paths = generate_dataset(args.out, args.seed, profiles, trials=args.trials, weeks=weeks)
    for p in paths:
        print(p)
    return 0


def cmd_fixations(args) -> int:
    man = load_manifest(args.manifest)
    fixs = stage_fixations(man, _cluster_params(args, man.geometry))
    _emit(serialize_fixations(fixs), args.out)
    return 0


def cmd_recalibrate(args) -> int:
    man = load_manifest(args.manifest)
    fixs = parse_fixations(Path(args.fixations).read_bytes())
    rc = stage_recalibrate(fixs, man.load_events(), degrees_to_pixels(args.radius_deg, man.geometry), args.trim)
    if rc.fallback:
        log.warning("%s: too few usable pairs (%d); identity transform written", man.label, rc.n_pairs)
    _emit(serialize_fixations(rc.fixations), args.out)
    if args.transform_out:
        _emit(rc.transform.to_json(), args.transform_out)
    return 0


def cmd_fdm(args) -> int:
    man = load_manifest(args.manifest)
    fixs = parse_fixations(Path(args.fixations).read_bytes())
    _emit(serialize_fdm(stage_fdm(man, fixs, args.grid_n, args.sigma)), args.out)
    return 0


def cmd_dft(args) -> int:
    m = parse_fdm(Path(args.fdm).read_bytes())
    _emit(serialize_spectrum(spectral_feature(m, args.box_limit)), args.out)
    return 0


def cmd_dissim(args) -> int:
    domain = normalize_domain(args.domain)
    parse = parse_spectrum if domain.startswith("dft") else parse_fdm
    feats = [FeatureGrid.from_map(parse(Path(p).read_bytes())) for p in args.inputs]
    if any(f.label is None for f in feats):
        raise DataError("every feature file needs subject/week/trial metadata")
    _emit(serialize_matrix(build_matrix(feats, args.metric, args.epsilon)), args.out)
    return 0


def cmd_evaluate(args) -> int:
    rep = evaluate(parse_matrix(Path(args.matrix).read_bytes()), hull=args.hull)
    if args.curve_out:
        _emit(serialize_curve(rep.curve), args.curve_out)
    _emit(rep.to_json(), args.out)
    return 0


def cmd_ttt(args) -> int:
    records = []
    for path in args.manifests:
        man = load_manifest(path)
        g = man.geometry
        if args.fixations_dir:
            fixs = parse_fixations((Path(args.fixations_dir) / f"{man.label.slug}.csv").read_bytes())
        else:
            fixs = stage_fixations(man, _cluster_params(args, g))
        records += extract_ttt(fixs, man.load_events(), degrees_to_pixels(args.radius_deg, g),
                               tuple(args.window), screen_center=g.center, label=man.label)
    out = Path(args.out_dir)
    _emit(serialize_records(records), str(out / "records.csv"))
    for grouping in ("all", "direction", "trial"):
        _emit(serialize_stats(ttt_stats(records, grouping)), str(out / f"stats_{grouping}.csv"))
    return 0


_PIPELINE_OVERRIDES = ("output_dir", "seed", "grid_n", "sigma", "box_limit", "epsilon",
                       "ttt_radius_deg", "domains", "metrics", "recalibrate")


def cmd_pipeline(args) -> int:
    if args.config is None:
        raise ValueError("pipeline needs --config")
    path = Path(args.config)
    doc = json.loads(path.read_text(encoding="utf-8"))
    for key in _PIPELINE_OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            doc[key] = value
    cfg = PipelineConfig.from_dict(doc, base_dir=path.parent)
    res = run_pipeline(cfg)
    print((cfg.output_path / "summary.csv").read_text(encoding="utf-8"), end="")
    if res.excluded:
        log.warning("%d trial/domain entries excluded; see excluded.csv", len(res.excluded))
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gazeprint", description="Gaze-pattern biometric toolkit.")
    parser.add_argument("--config", help="JSON file; its keys become defaults for the subcommand's flags")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic two-subject dataset")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=8, help="trials per subject per week")
    p.add_argument("--weeks", default="1,2")
    p.add_argument("--profile", action="append", metavar="NAME=PATH", help="subject profile JSON (repeatable)")
    p.add_argument("--write-presets", action="store_true", help="also write the preset profiles as JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fixations", help="detect fixations in one trial")
    p.add_argument("manifest")
    _add_cluster_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fixations)

    p = sub.add_parser("recalibrate", help="fit and apply a per-trial affine correction")
    p.add_argument("manifest")
    p.add_argument("--fixations", required=True)
    p.add_argument("--radius-deg", dest="radius_deg", type=float, default=3.0)
    p.add_argument("--trim", type=float, default=0.0)
    p.add_argument("--out")
    p.add_argument("--transform-out", dest="transform_out")
    p.set_defaults(func=cmd_recalibrate)

    p = sub.add_parser("fdm", help="blank-screen fixation density map")
    p.add_argument("manifest")
    p.add_argument("--fixations", required=True)
    p.add_argument("--grid-n", dest="grid_n", type=int, default=DEFAULT_GRID)
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fdm)

    p = sub.add_parser("dft", help="low-pass magnitude spectrum of a density map")
    p.add_argument("fdm")
    p.add_argument("--box-limit", dest="box_limit", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dft)

    p = sub.add_parser("dissim", help="pairwise dissimilarity matrix")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--metric", choices=METRICS, required=True)
    p.add_argument("--domain", default="fdm", help=f"one of {', '.join(DOMAINS)}")
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--out")
    p.set_defaults(func=cmd_dissim)

    p = sub.add_parser("evaluate", help="ACC/AUC/EER from a labeled matrix")
    p.add_argument("matrix")
    p.add_argument("--hull", action="store_true", help="use the ROC convex hull")
    p.add_argument("--curve-out", dest="curve_out")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ttt", help="time-to-target records and statistics")
    p.add_argument("manifests", nargs="+")
    p.add_argument("--fixations-dir", dest="fixations_dir")
    p.add_argument("--radius-deg", dest="radius_deg", type=float, default=3.0)
    p.add_argument("--window", type=float, nargs=2, default=list(DEFAULT_WINDOW), metavar=("LO", "HI"))
    _add_cluster_flags(p)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_ttt)

    p = sub.add_parser("pipeline", help="full run from a config file")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--box-limit", dest="box_limit", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--ttt-radius-deg", dest="ttt_radius_deg", type=float)
    p.add_argument("--domains", type=lambda s: s.split(","))
    p.add_argument("--metrics", type=lambda s: s.split(","))
    p.add_argument("--no-recalibrate", dest="recalibrate", action="store_const", const=False)
    p.set_defaults(func=cmd_pipeline)
    for sp in sub.choices.values():
        sp.add_argument("--config", default=argparse.SUPPRESS, help="JSON config; flags override it")
    return parser


def _apply_config_defaults(parser: argparse.ArgumentParser, argv) -> None:
    """Feed keys of ``--config`` into the chosen subcommand's flag defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if known.config is None:
        return
    command = next((a for a in rest if not a.startswith("-")), None)
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    if command not in subparsers.choices or command == "pipeline":
        return
    doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    sp = subparsers.choices[command]
    dests = {a.dest for a in sp._actions}
    sp.set_defaults(**{k: v for k, v in doc.items() if k in dests})


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config_defaults(parser, argv)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"gazeprint: {exc}", file=sys.stderr)
        return EXIT_DATA
    except json.JSONDecodeError as exc:
        print(f"gazeprint: config is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DegenerateGroundTruth as exc:
        print(f"gazeprint: degenerate evaluation: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"gazeprint: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gazeprint: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
