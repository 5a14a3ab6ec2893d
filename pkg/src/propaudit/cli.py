"""Command-line front end: reproducible audits, analytics, and calibration runs.

Every command accepts ``--seed``; all randomness is derived from it, so a rerun
with the same flags reproduces byte-identical result files (the run manifest
records inputs and a timestamp alongside them).
"""

import argparse
import datetime
import json
import os
import sys
import tempfile

from . import __version__
from .cmiknn import CmiknnConfig, cmiknn_test
from .committee import AuditConfig, aggregate_usage, export_table, run_audit
from .dataset import load_dataset, standardize, stratify
from .errors import (
    AuditError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)
from .kernels import ChsicConfig, chsic_test
from .rcot import RcotConfig, rcot_test
from .scm import (
    ScmSpec,
    calibration_run,
    generate_pipeline_fixture,
    generate_scm_dataset,
)
from .dataset import export_dataset, export_manifest
from .symmetry import load_landmarks, read_pgm, symmetry_records, write_symmetry_csv
from .trends import (
    accuracy_to_csv,
    binary_group_summary,
    groups_to_json,
    render_trend_svg,
    render_violin_svg,
    sliding_gaussian_trend,
    subpopulation_accuracy,
    trend_to_csv,
)
from .utils import file_digest

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_INSUFFICIENT = 3

SCM_KIND_ALIASES = {
    "null": "null_common_cause",
    "null_common_cause": "null_common_cause",
    "direct": "direct_dependence",
    "direct_dependence": "direct_dependence",
    "pipeline": "pipeline_fixture",
    "pipeline_fixture": "pipeline_fixture",
}


def _write_text(path, content):
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", prefix=".tmp_")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(content)
    os.replace(tmp, path)


def _write_manifest(out_dir, command, config, inputs, seed):
    config = {k: v for k, v in config.items() if k != "fn"}
    manifest = {
        "command": command,
        "config": {k: v if isinstance(v, (int, float, str, bool, type(None))) else str(v)
                   for k, v in config.items()},
        "inputs": {str(p): file_digest(p) for p in inputs},
        "seed": seed,
        "toolkit_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    _write_text(
        os.path.join(out_dir, "run_manifest.json"),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def _committee_tests(test_ids, B, k_perm, epsilon, rcot_null):
    fns = {}
    if "chsic" in test_ids:
        fns["chsic"] = lambda x, y, z, seed: chsic_test(
            x, y, z, ChsicConfig(B=B, epsilon=epsilon, k_perm=k_perm, seed=seed)
        )
    if "rcot" in test_ids:
        fns["rcot"] = lambda x, y, z, seed: rcot_test(
            x, y, z, RcotConfig(null_method=rcot_null, B=B, seed=seed)
        )
    if "cmiknn" in test_ids:
        fns["cmiknn"] = lambda x, y, z, seed: cmiknn_test(
            x, y, z, CmiknnConfig(k_perm=k_perm, B=B, seed=seed)
        )
    return fns


def cmd_audit(args) -> int:
    dataset = load_dataset(args.data, args.manifest)
    config = AuditConfig(
        alpha=args.alpha,
        mode=args.mode,
        tests=tuple(args.tests.split(",")),
        consensus=args.consensus,
        correction=args.correction,
        B=args.B,
        seed=args.seed,
        min_stratum=args.min_stratum,
        jobs=args.jobs,
        rcot_null=args.rcot_null,
    )
    table = run_audit(dataset, config, run_label=args.run_label)
    os.makedirs(args.out, exist_ok=True)
    for fmt, ext in (("csv", "csv"), ("json", "json"), ("text_grid", "txt")):
        _write_text(os.path.join(args.out, f"significance.{ext}"), export_table(table, fmt))
    skipped = {
        f"{abbr}|{name}": cell.skip_reason
        for (abbr, name), cell in sorted(table.cells.items())
        if cell.skipped
    }
    _write_text(
        os.path.join(args.out, "skipped.json"),
        json.dumps(skipped, indent=2, sort_keys=True) + "\n",
    )
    _write_text(
        os.path.join(args.out, "usage.json"),
        json.dumps(aggregate_usage(table), indent=2, sort_keys=True) + "\n",
    )
    _write_manifest(args.out, "audit", vars(args), [args.data, args.manifest], args.seed)
    if table.total[1] == 0:
        print("all cells skipped: insufficient data", file=sys.stderr)
        return EXIT_INSUFFICIENT
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.trials < 50:
        print(
            f"warning: trials={args.trials} is below the recommended minimum of 50",
            file=sys.stderr,
        )
    spec = ScmSpec(
        kind=SCM_KIND_ALIASES[args.kind],
        n=args.n,
        effect_size=args.effect_size,
        noise_std=args.noise_std,
        property_kind=args.property_kind,
        seed=args.seed,
    )
    tests = _committee_tests(
        tuple(args.tests.split(",")), args.B, args.k_perm, args.epsilon, args.rcot_null
    )
    report = calibration_run(tests, spec, args.trials, args.alpha)
    os.makedirs(args.out, exist_ok=True)
    _write_text(
        os.path.join(args.out, "calibration_report.json"),
        json.dumps(report, indent=2, sort_keys=True) + "\n",
    )
    _write_manifest(args.out, "calibrate", vars(args), [], args.seed)
    return EXIT_OK


def cmd_accuracy(args) -> int:
    dataset = load_dataset(args.data, args.manifest)
    group_by = tuple(g for g in args.group_by.split(",") if g) if args.group_by else ()
    table = subpopulation_accuracy(dataset, group_by)
    os.makedirs(args.out, exist_ok=True)
    _write_text(os.path.join(args.out, "accuracy.csv"), accuracy_to_csv(table))
    _write_manifest(args.out, "accuracy", vars(args), [args.data, args.manifest], args.seed)
    return EXIT_OK


def cmd_trend(args) -> int:
    dataset = load_dataset(args.data, args.manifest)
    if args.class_name not in dataset.class_names:
        raise SchemaError(f"unknown class {args.class_name!r}")
    spec = next(
        (s for s in dataset.property_specs if s.abbreviation == args.property), None
    )
    if spec is None:
        raise SchemaError(f"unknown property abbreviation {args.property!r}")
    class_index = dataset.class_names.index(args.class_name)
    sub = stratify(dataset, class_index, args.min_stratum)
    prop = sub.properties[args.property]
    logit = sub.logits[:, class_index]

    os.makedirs(args.out, exist_ok=True)
    stem = f"{args.property}_{args.class_name}"
    if spec.kind == "binary":
        summaries = binary_group_summary(prop, logit)
        _write_text(os.path.join(args.out, f"groups_{stem}.json"), groups_to_json(summaries))
        if args.svg:
            _write_text(os.path.join(args.out, f"groups_{stem}.svg"), render_violin_svg(summaries))
    else:
        curve = sliding_gaussian_trend(
            prop, logit, window_frac=args.window_frac, stride_frac=args.stride_frac
        )
        _write_text(os.path.join(args.out, f"trend_{stem}.csv"), trend_to_csv(curve))
        if args.svg:
            _write_text(os.path.join(args.out, f"trend_{stem}.svg"), render_trend_svg(curve))
    _write_manifest(args.out, "trend", vars(args), [args.data, args.manifest], args.seed)
    return EXIT_OK


def cmd_symmetry(args) -> int:
    landmarks = load_landmarks(args.landmarks)
    images = {}
    if args.images:
        for sid in landmarks:
            path = os.path.join(args.images, f"{sid}.pgm")
            if os.path.exists(path):
                images[sid] = read_pgm(path)
    records = symmetry_records(landmarks, images)
    os.makedirs(args.out, exist_ok=True)
    write_symmetry_csv(records, os.path.join(args.out, "symmetry.csv"))
    _write_manifest(args.out, "symmetry", vars(args), [args.landmarks], args.seed)
    return EXIT_OK


def cmd_fixture(args) -> int:
    kind = SCM_KIND_ALIASES[args.kind]
    spec = ScmSpec(
        kind=kind,
        n=args.n,
        effect_size=args.effect_size,
        noise_std=args.noise_std,
        property_kind=args.property_kind,
        classes=args.classes,
        seed=args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    if kind == "pipeline_fixture":
        dataset, truth = generate_pipeline_fixture(spec)
        export_dataset(dataset, os.path.join(args.out, "fixture.csv"))
        export_manifest(dataset, os.path.join(args.out, "fixture_manifest.json"))
        truth_obj = {f"{p}|{c}": bool(v) for (p, c), v in sorted(truth.cells.items())}
        _write_text(
            os.path.join(args.out, "ground_truth.json"),
            json.dumps(truth_obj, indent=2, sort_keys=True) + "\n",
        )
    else:
        x, y, z, truth = generate_scm_dataset(spec)
        lines = ["x,y,z"]
        lines += [f"{repr(float(a))},{repr(float(b))},{repr(float(c))}" for a, b, c in zip(x, y, z)]
        _write_text(os.path.join(args.out, "fixture.csv"), "\n".join(lines) + "\n")
        _write_text(
            os.path.join(args.out, "ground_truth.json"),
            json.dumps({"x|y": truth.dependent("x", "y")}, indent=2) + "\n",
        )
    _write_manifest(args.out, "fixture", vars(args), [], args.seed)
    return EXIT_OK


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="propaudit",
        description="Audit whether a classifier's logits depend on sample-level properties.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="run the conditional-independence committee")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--mode", choices=("stratify", "condition_on_label"), default="stratify")
    p.add_argument("--tests", default="chsic,rcot,cmiknn")
    p.add_argument("--consensus", choices=("majority", "unanimous", "any"), default="majority")
    p.add_argument("--correction", choices=("none", "benjamini_hochberg"), default="none")
    p.add_argument("--B", type=int, default=500, help="surrogate count for permutation nulls")
    p.add_argument("--min-stratum", dest="min_stratum", type=int, default=25)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--rcot-null", dest="rcot_null", choices=("hbe", "permutation"), default="hbe")
    p.add_argument("--run-label", dest="run_label", default="run")
    _add_common(p)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("calibrate", help="measure test error rates on synthetic data")
    p.add_argument("--kind", choices=sorted(set(SCM_KIND_ALIASES) - {"pipeline", "pipeline_fixture"}),
                   default="null")
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--effect-size", dest="effect_size", type=float, default=0.5)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=1.0)
    p.add_argument("--property-kind", dest="property_kind",
                   choices=("scalar", "binary"), default="scalar")
    p.add_argument("--tests", default="chsic,rcot,cmiknn")
    p.add_argument("--B", type=int, default=199)
    p.add_argument("--k-perm", dest="k_perm", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--rcot-null", dest="rcot_null", choices=("hbe", "permutation"), default="hbe")
    _add_common(p)
    p.set_defaults(fn=cmd_calibrate)

    p = sub.add_parser("accuracy", help="subpopulation accuracy table")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--group-by", dest="group_by", default="")
    _add_common(p)
    p.set_defaults(fn=cmd_accuracy)

    p = sub.add_parser("trend", help="sliding-window trend / group summary for one cell")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--property", required=True)
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--window-frac", dest="window_frac", type=float, default=0.1)
    p.add_argument("--stride-frac", dest="stride_frac", type=float, default=0.025)
    p.add_argument("--min-stratum", dest="min_stratum", type=int, default=25)
    p.add_argument("--svg", action="store_true")
    _add_common(p)
    p.set_defaults(fn=cmd_trend)

    p = sub.add_parser("symmetry", help="landmark symmetry properties")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--images", default=None, help="directory of <sample_id>.pgm images")
    _add_common(p)
    p.set_defaults(fn=cmd_symmetry)

    p = sub.add_parser("fixture", help="emit a synthetic dataset")
    p.add_argument("--kind", choices=sorted(SCM_KIND_ALIASES), default="pipeline")
    p.add_argument("--n", type=int, default=700)
    p.add_argument("--classes", type=int, default=7)
    p.add_argument("--effect-size", dest="effect_size", type=float, default=0.5)
    p.add_argument("--noise-std", dest="noise_std", type=float, default=1.0)
    p.add_argument("--property-kind", dest="property_kind",
                   choices=("scalar", "binary"), default="scalar")
    _add_common(p)
    p.set_defaults(fn=cmd_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except InsufficientDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
