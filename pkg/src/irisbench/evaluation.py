"""Verification-attack experiment protocol and reporting.

Scenario definitions over a dataset manifest, treating each (user, eye) as a
distinct subject and session 1 as the enrollment set:

- genuine:  every real session-1 template vs every real session-2 image of
  the same subject (all pairs),
- impostor: one seeded-random session-1 template of subject a vs one
  seeded-random session-2 image of subject b, per ordered pair (a, b),
- attack1:  every fake session-1 template vs every fake session-2 image of
  the same subject (fake enrollment, fake probe),
- attack2:  every real session-1 template vs every fake session-2 image of
  the same subject (real enrollment, fake probe).

Images that fail segmentation are excluded from matching but fully tallied;
success rates are SR1 = share of attack1 accepts (1 - fake FRR) and
SR2 = share of attack2 accepts (fake FAR), at a threshold fixed from the
impostor distribution. Acceptance rule: hd <= threshold.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoding import IrisTemplate, LogGaborParams, encode
from .errors import PipelineError
from .imagecore import load_pgm
from .matching import AllBitsMasked, match_templates
from .normalization import normalize
from .segmentation import SegmentationConfig, SegmentationFailure, segment_eye
from .spoofsim import DatasetManifest, ManifestEntry, stable_seed


class ManifestInvalid(PipelineError):
    """Manifest is empty, malformed, or references unreadable files."""


class EmptyAfterSegmentation(PipelineError):
    """No subject yielded a single usable comparison pair."""


class EmptyScores(PipelineError):
    """The requested statistic needs scores that are not present."""


REPORT_SCHEMA = "irisbench-report/1"
SCORE_KINDS = ("genuine", "impostor", "attack1", "attack2")


@dataclass(frozen=True)
class Comparison:
    kind: str
    subject_a: str
    subject_b: str
    hd: float
    shift: int

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"bad comparison kind {self.kind!r}")
        if not 0.0 <= self.hd <= 1.0:
            raise ValueError("hd must lie in [0, 1]")


@dataclass(frozen=True)
class FailureCounts:
    real_total: int = 0
    real_segmented: int = 0
    fake_total: int = 0
    fake_segmented: int = 0
    # comparison pairs never attempted because a side failed segmentation
    skipped_genuine: int = 0
    skipped_impostor: int = 0
    skipped_attack1: int = 0
    skipped_attack2: int = 0
    # attempted comparisons that raised AllBitsMasked, excluded from scores
    match_errors_genuine: int = 0
    match_errors_impostor: int = 0
    match_errors_attack1: int = 0
    match_errors_attack2: int = 0

    def __post_init__(self):
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.real_segmented > self.real_total or self.fake_segmented > self.fake_total:
            raise ValueError("segmented counts cannot exceed totals")


@dataclass(frozen=True)
class ScoreSet:
    genuine: tuple[Comparison, ...]
    impostor: tuple[Comparison, ...]
    attack1: tuple[Comparison, ...]
    attack2: tuple[Comparison, ...]
    failures: FailureCounts = field(default_factory=FailureCounts)

    def hds(self, kind: str) -> np.ndarray:
        return np.array([c.hd for c in getattr(self, kind)], dtype=np.float64)

    def all_comparisons(self):
        for kind in SCORE_KINDS:
            yield from getattr(self, kind)


# ---------------------------------------------------------------------------
# Protocol execution
# ---------------------------------------------------------------------------


def _template_task(args):
    """Segment+normalize+encode one image; None marks a segmentation failure."""
    path, seg_cfg, radial_res, angular_res, gabor = args
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        return path, "error", f"cannot read {path}: {exc}"
    try:
        img = load_pgm(data)
    except PipelineError as exc:
        return path, "error", f"bad image {path}: {exc}"
    try:
        seg = segment_eye(img, seg_cfg)
    except SegmentationFailure:
        return path, "failed", None
    template = encode(normalize(img, seg, radial_res, angular_res), gabor)
    return path, "ok", template


def compute_templates(
    manifest: DatasetManifest,
    seg_cfg: SegmentationConfig = SegmentationConfig(),
    radial_res: int = 20,
    angular_res: int = 240,
    gabor: LogGaborParams = LogGaborParams(),
    jobs: int = 1,
) -> dict[str, IrisTemplate | None]:
    """Template (or None on segmentation failure) for every manifest entry,
    keyed by entry path. Deterministic for any job count."""
    if not manifest.entries:
        raise ManifestInvalid("manifest has no entries")
    tasks = [
        (str(manifest.full_path(e)), seg_cfg, radial_res, angular_res, gabor)
        for e in manifest.entries
    ]
    results: dict[str, IrisTemplate | None] = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_template_task, tasks, chunksize=8))
    else:
        outcomes = [_template_task(t) for t in tasks]
    for entry, (_, status, payload) in zip(manifest.entries, outcomes):
        if status == "error":
            raise ManifestInvalid(payload)
        results[entry.path] = payload if status == "ok" else None
    return results


def run_protocol(
    manifest: DatasetManifest,
    seg_cfg: SegmentationConfig = SegmentationConfig(),
    radial_res: int = 20,
    angular_res: int = 240,
    gabor: LogGaborParams = LogGaborParams(),
    shift_budget: int = 8,
    protocol_seed: int = 0,
    jobs: int = 1,
) -> ScoreSet:
    """Execute all four scenarios over the manifest and tally every
    exclusion. Deterministic given the manifest and protocol_seed."""
    templates = compute_templates(manifest, seg_cfg, radial_res, angular_res, gabor, jobs)

    def tmpl(entry: ManifestEntry) -> IrisTemplate | None:
        return templates[entry.path]

    subjects = manifest.subjects()
    per_subject: dict[str, dict] = {}
    for subj in subjects:
        user_id, eye = subj.rsplit("_", 1)
        slot = {}
        for kind in ("real", "fake"):
            for session in (1, 2):
                entries = sorted(
                    manifest.select(user_id=user_id, eye=eye, kind=kind, session=session),
                    key=lambda e: e.idx,
                )
                slot[(kind, session)] = entries
        per_subject[subj] = slot

    real_entries = manifest.select(kind="real")
    fake_entries = manifest.select(kind="fake")
    counts = dict(
        real_total=len(real_entries),
        real_segmented=sum(1 for e in real_entries if tmpl(e) is not None),
        fake_total=len(fake_entries),
        fake_segmented=sum(1 for e in fake_entries if tmpl(e) is not None),
    )

    scores = {kind: [] for kind in SCORE_KINDS}
    skipped = {kind: 0 for kind in SCORE_KINDS}
    errors = {kind: 0 for kind in SCORE_KINDS}

    def attempt(kind, subj_a, subj_b, ta, tb):
        try:
            m = match_templates(ta, tb, shift_budget)
        except AllBitsMasked:
            errors[kind] += 1
            return
        scores[kind].append(Comparison(kind, subj_a, subj_b, m.hd, m.best_shift))

    # same-subject scenarios: all session-1 x session-2 pairs
    plans = (("genuine", "real", "real"), ("attack1", "fake", "fake"), ("attack2", "real", "fake"))
    for subj in subjects:
        slot = per_subject[subj]
        for kind, enroll_kind, probe_kind in plans:
            enroll = slot[(enroll_kind, 1)]
            probe = slot[(probe_kind, 2)]
            for ea in enroll:
                for eb in probe:
                    ta, tb = tmpl(ea), tmpl(eb)
                    if ta is None or tb is None:
                        skipped[kind] += 1
                        continue
                    attempt(kind, subj, subj, ta, tb)

    # impostor: one seeded-random comparison per ordered subject pair, drawn
    # among successfully segmented candidates
    for subj_a in subjects:
        enroll_ok = [e for e in per_subject[subj_a][("real", 1)] if tmpl(e) is not None]
        for subj_b in subjects:
            if subj_b == subj_a:
                continue
            probe_ok = [e for e in per_subject[subj_b][("real", 2)] if tmpl(e) is not None]
            if not enroll_ok or not probe_ok:
                skipped["impostor"] += 1
                continue
            rng = np.random.default_rng(
                stable_seed("impostor", protocol_seed, subj_a, subj_b)
            )
            ea = enroll_ok[int(rng.integers(len(enroll_ok)))]
            eb = probe_ok[int(rng.integers(len(probe_ok)))]
            attempt("impostor", subj_a, subj_b, tmpl(ea), tmpl(eb))

    if not any(scores[k] for k in SCORE_KINDS):
        raise EmptyAfterSegmentation("no comparison survived segmentation")

    failures = FailureCounts(
        **counts,
        skipped_genuine=skipped["genuine"],
        skipped_impostor=skipped["impostor"],
        skipped_attack1=skipped["attack1"],
        skipped_attack2=skipped["attack2"],
        match_errors_genuine=errors["genuine"],
        match_errors_impostor=errors["impostor"],
        match_errors_attack1=errors["attack1"],
        match_errors_attack2=errors["attack2"],
    )
    return ScoreSet(
        genuine=tuple(scores["genuine"]),
        impostor=tuple(scores["impostor"]),
        attack1=tuple(scores["attack1"]),
        attack2=tuple(scores["attack2"]),
        failures=failures,
    )


# ---------------------------------------------------------------------------
# Rates, thresholds, operating points
# ---------------------------------------------------------------------------


def far_frr_at(scores: ScoreSet, threshold: float) -> tuple[float, float]:
    """(FAR %, FRR %) under the acceptance rule hd <= threshold."""
    gen, imp = scores.hds("genuine"), scores.hds("impostor")
    if gen.size == 0 or imp.size == 0:
        raise EmptyScores("need nonempty genuine and impostor scores")
    far = 100.0 * float((imp <= threshold).sum()) / imp.size
    frr = 100.0 * float((gen > threshold).sum()) / gen.size
    return far, frr


def success_rates(scores: ScoreSet, threshold: float) -> tuple[float, float]:
    """(SR attack1 %, SR attack2 %): the share of attack comparisons accepted
    at the threshold. SR1 = 100 - FRR of fake-vs-fake genuine matchings;
    SR2 = FAR of fake-vs-real matchings."""
    a1, a2 = scores.hds("attack1"), scores.hds("attack2")
    if a1.size == 0 or a2.size == 0:
        raise EmptyScores("need nonempty attack score sets")
    sr1 = 100.0 * float((a1 <= threshold).sum()) / a1.size
    sr2 = 100.0 * float((a2 <= threshold).sum()) / a2.size
    return sr1, sr2


def threshold_candidates(scores: ScoreSet) -> np.ndarray:
    """Canonical threshold grid: midpoints between consecutive distinct
    impostor scores plus an accept-none and an accept-all extreme."""
    imp = np.unique(scores.hds("impostor"))
    if imp.size == 0:
        raise EmptyScores("need impostor scores")
    mids = (imp[:-1] + imp[1:]) / 2.0
    return np.concatenate(([imp[0] - 1.0], mids, [imp[-1] + 1.0]))


@dataclass(frozen=True)
class OperatingPoint:
    target_far: float
    threshold: float
    far: float
    frr: float
    sr_attack1: float | None = None
    sr_attack2: float | None = None

    def __post_init__(self):
        for name in ("target_far", "far", "frr", "sr_attack1", "sr_attack2"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100]")


def threshold_at_far(scores: ScoreSet, target_far: float) -> OperatingPoint:
    """Largest candidate threshold whose measured FAR stays at or below the
    target; records the realized rates and the attack success rates there."""
    cands = threshold_candidates(scores)
    best = None
    for t in cands:  # ascending; keep the last satisfying one
        far, frr = far_frr_at(scores, float(t))
        if far <= target_far:
            best = (float(t), far, frr)
    # the accept-none extreme has FAR 0, so a candidate always qualifies
    threshold, far, frr = best
    sr1 = sr2 = None
    if scores.attack1 and scores.attack2:
        sr1, sr2 = success_rates(scores, threshold)
    return OperatingPoint(
        target_far=target_far, threshold=threshold, far=far, frr=frr,
        sr_attack1=sr1, sr_attack2=sr2,
    )


def equal_error_rate(scores: ScoreSet) -> float:
    """EER %: midpoint of (FAR, FRR) at the threshold where the two rates
    come closest. Probes midpoints over the union of both score sets (the
    impostor-only grid of threshold_at_far is too coarse to find the
    crossing between separated clouds)."""
    merged = np.unique(np.concatenate([scores.hds("genuine"), scores.hds("impostor")]))
    if merged.size == 0:
        raise EmptyScores("need genuine and impostor scores")
    cands = np.concatenate(
        ([merged[0] - 1.0], (merged[:-1] + merged[1:]) / 2.0, [merged[-1] + 1.0])
    )
    best = None
    for t in cands:
        far, frr = far_frr_at(scores, float(t))
        gap = abs(far - frr)
        if best is None or gap < best[0]:
            best = (gap, (far + frr) / 2.0)
    return best[1]


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationReport:
    schema: str
    n_subjects: int
    real_total: int
    real_segmented: int
    fake_total: int
    fake_segmented: int
    score_stats: dict
    operating_points: tuple[OperatingPoint, ...]
    det: tuple[tuple[float, float, float], ...]  # (threshold, far, frr)

    @property
    def seg_rate_real(self) -> float:
        return 100.0 * self.real_segmented / self.real_total if self.real_total else 0.0

    @property
    def seg_rate_fake(self) -> float:
        return 100.0 * self.fake_segmented / self.fake_total if self.fake_total else 0.0

    def to_json(self) -> str:
        doc = {
            "schema": self.schema,
            "dataset": {
                "subjects": self.n_subjects,
                "real_images": self.real_total,
                "fake_images": self.fake_total,
            },
            "segmentation": {
                "real_segmented": self.real_segmented,
                "fake_segmented": self.fake_segmented,
                "real_rate_pct": round(self.seg_rate_real, 4),
                "fake_rate_pct": round(self.seg_rate_fake, 4),
            },
            "scores": self.score_stats,
            "operating_points": [
                {
                    "target_far_pct": op.target_far,
                    "threshold": round(op.threshold, 9),
                    "far_pct": round(op.far, 4),
                    "frr_pct": round(op.frr, 4),
                    "sr_attack1_pct": None if op.sr_attack1 is None else round(op.sr_attack1, 4),
                    "sr_attack2_pct": None if op.sr_attack2 is None else round(op.sr_attack2, 4),
                }
                for op in self.operating_points
            ],
            "det": [
                {"threshold": round(t, 9), "far_pct": round(far, 4), "frr_pct": round(frr, 4)}
                for t, far, frr in self.det
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_table(self) -> str:
        lines = [
            f"segmented: real {self.real_segmented}/{self.real_total} "
            f"({self.seg_rate_real:.2f}%), fake {self.fake_segmented}/{self.fake_total} "
            f"({self.seg_rate_fake:.2f}%)",
            "",
            f"{'NOM':<16}{'Attack 1':>10}{'Attack 2':>10}",
            f"{'FAR - FRR (%)':<16}{'SR (%)':>10}{'SR (%)':>10}",
        ]
        for op in self.operating_points:
            nom = f"{op.far:.2f} - {op.frr:.2f}"
            sr1 = "--" if op.sr_attack1 is None else f"{op.sr_attack1:.2f}"
            sr2 = "--" if op.sr_attack2 is None else f"{op.sr_attack2:.2f}"
            lines.append(f"{nom:<16}{sr1:>10}{sr2:>10}")
        return "\n".join(lines) + "\n"


def build_report(scores: ScoreSet, targets: list[float] = (0.1, 1.0, 2.0, 5.0)) -> EvaluationReport:
    """Operating point per FAR target plus a DET sample per candidate
    threshold, with segmentation-rate accounting."""
    stats = {}
    for kind in SCORE_KINDS:
        hds = scores.hds(kind)
        stats[kind] = {
            "count": int(hds.size),
            "mean": round(float(hds.mean()), 6) if hds.size else None,
            "min": round(float(hds.min()), 6) if hds.size else None,
            "max": round(float(hds.max()), 6) if hds.size else None,
        }
    f = scores.failures
    stats["skipped"] = {
        "genuine": f.skipped_genuine,
        "impostor": f.skipped_impostor,
        "attack1": f.skipped_attack1,
        "attack2": f.skipped_attack2,
    }
    stats["match_errors"] = {
        "genuine": f.match_errors_genuine,
        "impostor": f.match_errors_impostor,
        "attack1": f.match_errors_attack1,
        "attack2": f.match_errors_attack2,
    }

    ops = tuple(threshold_at_far(scores, t) for t in sorted(targets))
    det = tuple(
        (float(t),) + far_frr_at(scores, float(t)) for t in threshold_candidates(scores)
    )
    subjects = {c.subject_a for c in scores.all_comparisons()} | {
        c.subject_b for c in scores.all_comparisons()
    }
    return EvaluationReport(
        schema=REPORT_SCHEMA,
        n_subjects=len(subjects),
        real_total=f.real_total,
        real_segmented=f.real_segmented,
        fake_total=f.fake_total,
        fake_segmented=f.fake_segmented,
        score_stats=stats,
        operating_points=ops,
        det=det,
    )


def write_scores_csv(scores: ScoreSet) -> str:
    """Canonical score dump: kind,subject_a,subject_b,hd,shift."""
    lines = ["kind,subject_a,subject_b,hd,shift"]
    for c in scores.all_comparisons():
        lines.append(f"{c.kind},{c.subject_a},{c.subject_b},{c.hd:.6f},{c.shift}")
    return "\n".join(lines) + "\n"
