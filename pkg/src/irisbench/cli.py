"""Command-line entry point: synth, segment, normalize, encode, match, eval,
preset-list.

Exit codes: 0 success, 1 domain failure (e.g. unsegmentable image), 2 usage
or configuration error. Diagnostics go to stderr prefixed `error:`; data goes
to files or stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import encoding, evaluation, imagecore, matching, normalization, segmentation
from .config import AppConfig, load_config
from .errors import ConfigError, PipelineError
from .spoofsim import (
    CHAIN_PRESETS,
    RECAPTURE_PRESETS,
    build_dataset,
    load_manifest_csv,
)

# stable one-line diagnostics per domain error class
_ERROR_PHRASES: list[tuple[type, str]] = [
    (segmentation.SegmentationFailure, "segmentation failure"),
    (segmentation.NoCircleFound, "no circle found"),
    (segmentation.NoLineFound, "no line found"),
    (imagecore.MalformedHeader, "malformed image header"),
    (imagecore.TruncatedData, "truncated image data"),
    (normalization.DegenerateGeometry, "degenerate segmentation geometry"),
    (encoding.AllMasked, "pattern fully masked"),
    (encoding.TemplateFormatError, "bad template file"),
    (matching.ShapeMismatch, "template shape mismatch"),
    (matching.AllBitsMasked, "all bits masked"),
    (evaluation.ManifestInvalid, "invalid manifest"),
    (evaluation.EmptyAfterSegmentation, "no usable comparisons after segmentation"),
    (evaluation.EmptyScores, "not enough scores"),
]


def _fail_message(exc: PipelineError) -> str:
    for klass, phrase in _ERROR_PHRASES:
        if isinstance(exc, klass):
            return phrase
    return str(exc) or exc.__class__.__name__


def _read_image(path: str) -> imagecore.GrayImage:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise PipelineError(f"cannot read {path}: {exc}") from None
    return imagecore.load_pgm(data)


def _segment(path: str, cfg: AppConfig):
    img = _read_image(path)
    return img, segmentation.segment_eye(img, cfg.segmentation)


def _seg_summary(seg: segmentation.SegmentationResult) -> str:
    def line_str(line):
        if line is None:
            return "none"
        return f"{line.a:.3f},{line.b:.3f},{line.c:.3f},{line.side}"

    return (
        f"pupil={seg.pupil.cx},{seg.pupil.cy},{seg.pupil.r} "
        f"iris={seg.iris.cx},{seg.iris.cy},{seg.iris.r} "
        f"upper_eyelid={line_str(seg.upper_eyelid)} "
        f"lower_eyelid={line_str(seg.lower_eyelid)}"
    )


def cmd_synth(args, cfg: AppConfig) -> int:
    chain = CHAIN_PRESETS[args.chain if args.chain else cfg.chain]
    rp = RECAPTURE_PRESETS[args.recapture] if args.recapture else cfg.recapture
    jobs = args.jobs or cfg.jobs
    manifest = build_dataset(
        n_users=args.users,
        out_dir=Path(args.out),
        dist=cfg.distribution,
        rp=rp,
        chain=chain,
        seed=args.seed,
        jobs=jobs,
    )
    reals = sum(1 for e in manifest.entries if e.kind == "real")
    fakes = len(manifest.entries) - reals
    print(f"{manifest.root / 'manifest.csv'} real={reals} fake={fakes}")
    return 0


def cmd_segment(args, cfg: AppConfig) -> int:
    img, seg = _segment(args.image, cfg)
    if args.overlay:
        overlay = segmentation.draw_overlay(img, seg)
        Path(args.overlay).write_bytes(imagecore.save_pgm(overlay))
    print(_seg_summary(seg))
    return 0


def cmd_normalize(args, cfg: AppConfig) -> int:
    img, seg = _segment(args.image, cfg)
    pattern = normalization.normalize(img, seg, cfg.radial_res, cfg.angular_res)
    sample_img, mask_img = normalization.pattern_to_pgm_arrays(pattern)
    Path(args.out).write_bytes(imagecore.save_pgm(sample_img))
    if args.mask:
        Path(args.mask).write_bytes(imagecore.save_pgm(mask_img))
    return 0


def cmd_encode(args, cfg: AppConfig) -> int:
    img, seg = _segment(args.image, cfg)
    pattern = normalization.normalize(img, seg, cfg.radial_res, cfg.angular_res)
    template = encoding.encode(pattern, cfg.gabor)
    Path(args.out).write_bytes(encoding.save_template(template))
    return 0


def _read_template(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise PipelineError(f"cannot read {path}: {exc}") from None
    return encoding.load_template(data)


def cmd_match(args, cfg: AppConfig) -> int:
    a = _read_template(args.template_a)
    b = _read_template(args.template_b)
    budget = cfg.shift_budget if args.shift_budget is None else args.shift_budget
    score = matching.match_templates(a, b, budget)
    print(f"hd={score.hd:.6f} shift={score.best_shift} bits={score.effective_bits}")
    return 0


def cmd_eval(args, cfg: AppConfig) -> int:
    manifest = load_manifest_csv(Path(args.manifest))
    jobs = args.jobs or cfg.jobs
    scores = evaluation.run_protocol(
        manifest,
        seg_cfg=cfg.segmentation,
        radial_res=cfg.radial_res,
        angular_res=cfg.angular_res,
        gabor=cfg.gabor,
        shift_budget=cfg.shift_budget,
        protocol_seed=cfg.protocol_seed,
        jobs=jobs,
    )
    report = evaluation.build_report(scores, targets=list(cfg.far_targets))
    if args.scores:
        Path(args.scores).write_text(evaluation.write_scores_csv(scores))
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n")
    table = report.to_table()
    if args.table:
        Path(args.table).write_text(table)
    print(table, end="")
    return 0


def cmd_preset_list(args, cfg: AppConfig) -> int:
    print("preprocessing chains:")
    for name, chain in CHAIN_PRESETS.items():
        steps = ", ".join(
            s.kind if s.kind == "histeq" else f"{s.kind}({s.se_shape} {s.radius})"
            for s in chain.steps
        )
        print(f"  {name:<12} [{steps or 'identity'}]")
    print("recapture presets:")
    for name, rp in RECAPTURE_PRESETS.items():
        print(
            f"  {name:<15} pitch={rp.dot_pitch} blur={rp.blur_sigma} "
            f"contrast={rp.contrast} noise={rp.noise_sigma}"
        )
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="irisbench",
        description="Iris verification engine and print-recapture attack benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument(
            "--set",
            dest="sets",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )

    p = sub.add_parser("synth", help="render a synthetic real+fake dataset")
    p.add_argument("--users", type=int, required=True, help="number of users (2 eyes each)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master dataset seed")
    p.add_argument("--chain", choices=sorted(CHAIN_PRESETS), help="preprocessing chain preset")
    p.add_argument(
        "--recapture", choices=sorted(RECAPTURE_PRESETS), help="recapture degradation preset"
    )
    p.add_argument("--jobs", type=int, help="parallel render workers")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("segment", help="locate pupil, iris, eyelids in a PGM image")
    p.add_argument("image")
    p.add_argument("--overlay", help="write debug overlay PGM here")
    common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("normalize", help="unwrap the iris annulus to a polar pattern")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="pattern PGM output path")
    p.add_argument("--mask", help="mask PGM output path (white = occluded)")
    common(p)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("encode", help="encode an eye image into a bit template")
    p.add_argument("image")
    p.add_argument("--out", required=True, help="template output path")
    common(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("match", help="masked Hamming distance between two templates")
    p.add_argument("template_a")
    p.add_argument("template_b")
    p.add_argument("--shift-budget", type=int, help="angular shift budget")
    common(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="run the NOM/attack protocol over a manifest")
    p.add_argument("manifest")
    p.add_argument("--report", help="write JSON report here")
    p.add_argument("--scores", help="write score CSV here")
    p.add_argument("--table", help="write the plain-text table here")
    p.add_argument("--jobs", type=int, help="parallel segmentation workers")
    common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("preset-list", help="list chain and recapture presets")
    common(p)
    p.set_defaults(func=cmd_preset_list)

    return parser


def run_cli(argv: list[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = load_config(getattr(args, "config", None), getattr(args, "sets", []))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {_fail_message(exc)}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli(sys.argv[1:]))
