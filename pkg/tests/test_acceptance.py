"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s`. The end-to-end criteria
build a seeded 30-subject synthetic dataset once (module fixture) and share
it; worker parallelism (jobs=2) never changes any output byte.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from irisbench.cli import run_cli
from irisbench.encoding import IrisTemplate, quantize_phase
from irisbench.evaluation import (
    Comparison,
    FailureCounts,
    ScoreSet,
    build_report,
    compute_templates,
    equal_error_rate,
    far_frr_at,
    run_protocol,
    success_rates,
    threshold_at_far,
    write_scores_csv,
)
from irisbench.imagecore import (
    GrayImage,
    StructuringElement,
    load_pgm,
    morph,
    save_pgm,
    top_hat,
)
from irisbench.matching import hamming_distance, match_templates, rotate_template
from irisbench.segmentation import Circle, hough_circle, render_circle
from irisbench.spoofsim import RecaptureParams, build_dataset

JOBS = 2
DATASET_SEED = 2024
N_USERS = 15  # 30 subjects: each (user, eye) is a distinct subject


def ok(n, text):
    print(f"\nACCEPTANCE {n}: PASS - {text}")


@pytest.fixture(scope="module")
def benchmark_scores(tmp_path_factory):
    """Seeded 30-subject dataset + full protocol run (criteria 6 and 7)."""
    out = tmp_path_factory.mktemp("bench")
    t0 = time.perf_counter()
    manifest = build_dataset(N_USERS, out / "ds", seed=DATASET_SEED, jobs=JOBS)
    scores = run_protocol(manifest, protocol_seed=DATASET_SEED, jobs=JOBS)
    elapsed = time.perf_counter() - t0
    return scores, elapsed


# ---------------------------------------------------------------------------
# 1. Table 2 arithmetic replay
# ---------------------------------------------------------------------------

TABLE2_ROWS = [
    # (target FAR %, FRR %, SR attack1 %, SR attack2 %)
    (0.1, 12.71, 57.41, 49.32),
    (1.0, 8.70, 74.07, 66.06),
    (2.0, 7.86, 76.85, 68.78),
    (5.0, 6.19, 82.41, 73.30),
]


def scoreset_with_marginals(far, frr, sr1, sr2, threshold=0.4):
    """10000 scores per kind placed around the threshold so every marginal
    rate is exact in hundredths of a percent."""

    def split(kind, accept_pct):
        n_accept = round(accept_pct * 100)  # out of 10000
        vals = [threshold - 0.1] * n_accept + [threshold + 0.1] * (10000 - n_accept)
        return tuple(
            Comparison(kind, f"s{i}", f"s{i}", v, 0) for i, v in enumerate(vals)
        )

    return ScoreSet(
        genuine=split("genuine", 100.0 - frr),
        impostor=split("impostor", far),
        attack1=split("attack1", sr1),
        attack2=split("attack2", sr2),
    )


def test_criterion_1_table2_arithmetic_replay():
    t0 = time.perf_counter()
    for far_t, frr, sr1_expect, sr2_expect in TABLE2_ROWS:
        scores = scoreset_with_marginals(far_t, frr, sr1_expect, sr2_expect)
        far, frr_got = far_frr_at(scores, 0.4)
        assert round(far, 2) == far_t
        assert round(frr_got, 2) == frr
        sr1, sr2 = success_rates(scores, 0.4)
        assert round(sr1, 2) == sr1_expect, f"SR1 at NOM FAR {far_t}"
        assert round(sr2, 2) == sr2_expect, f"SR2 at NOM FAR {far_t}"
        # SR1 is literally 100 - FRR of the fake-fake genuine matchings
        fake_frr = 100.0 * float((scores.hds("attack1") > 0.4).sum()) / 10000
        assert round(100.0 - fake_frr, 2) == sr1_expect
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"criterion runtime {elapsed:.2f}s"
    ok(1, f"all eight SR cells reproduced exactly ({elapsed * 1000:.0f} ms)")


# ---------------------------------------------------------------------------
# 2. HD oracle equivalence
# ---------------------------------------------------------------------------


def random_template(rng, noise_p):
    bits = rng.random((20, 480)) < 0.5
    noise = np.repeat(rng.random((20, 240)) < noise_p, 2, axis=1)
    return IrisTemplate(bits=bits, noise=noise)


def test_criterion_2_hd_oracle_equivalence():
    rng = np.random.default_rng(99)
    t0 = time.perf_counter()
    mismatches = 0
    for trial in range(1000):
        x = random_template(rng, rng.uniform(0, 0.4))
        y = random_template(rng, rng.uniform(0, 0.4))
        hd, bits = hamming_distance(x, y)
        usable = ~(x.noise | y.noise)
        denom = int(usable.sum())
        diff = int(((x.bits ^ y.bits) & usable).sum())
        if bits != denom or hd != diff / denom:
            mismatches += 1
    elapsed = time.perf_counter() - t0
    assert mismatches == 0
    assert elapsed < 10.0, f"criterion runtime {elapsed:.2f}s"
    ok(2, f"packed == per-bit oracle on 1000 random 9600-bit pairs ({elapsed:.2f} s)")


# ---------------------------------------------------------------------------
# 3. Rotation invariance
# ---------------------------------------------------------------------------


def test_criterion_3_rotation_invariance():
    rng = np.random.default_rng(123)
    for trial in range(100):
        t = random_template(rng, 0.1)
        for k in range(-8, 9):
            score = match_templates(t, rotate_template(t, k), shift_budget=8)
            assert score.hd == 0.0, f"trial {trial}, shift {k}"
    ok(3, "hd == 0 for 100 templates x all shifts in [-8, 8]")


# ---------------------------------------------------------------------------
# 4. Grey-code adjacency
# ---------------------------------------------------------------------------


def test_criterion_4_grey_code_adjacency():
    # dense sweep across the circle: codes change only at quadrant
    # boundaries, and always by exactly one bit
    degrees = np.arange(0.125, 360.0, 0.25)
    responses = np.exp(1j * np.deg2rad(degrees))
    re_bits, im_bits = quantize_phase(responses)
    codes = np.stack([re_bits, im_bits], axis=1).astype(int)
    for i in range(len(degrees)):
        j = (i + 1) % len(degrees)
        flips = int(np.sum(codes[i] != codes[j]))
        same_quadrant = int(degrees[i] // 90) == int(degrees[j] // 90)
        if same_quadrant:
            assert flips == 0
        else:
            assert flips == 1, f"{degrees[i]} -> {degrees[j]} flipped {flips} bits"
    # and the exact boundary phases themselves never sit 2 bits from a neighbor
    for boundary in (0.0, 90.0, 180.0, 270.0):
        z = np.exp(1j * np.deg2rad([boundary - 0.01, boundary, boundary + 0.01]))
        re, im = quantize_phase(z)
        trio = np.stack([re, im], axis=1).astype(int)
        assert int(np.sum(trio[0] != trio[1])) <= 1
        assert int(np.sum(trio[1] != trio[2])) <= 1
    ok(4, "adjacent quadrant codes differ in exactly one bit, everywhere")


# ---------------------------------------------------------------------------
# 5. Hough accuracy
# ---------------------------------------------------------------------------


def test_criterion_5_hough_accuracy():
    rng = np.random.default_rng(500)
    worst = 0
    for trial in range(100):
        r = int(rng.integers(15, 61))
        cx = int(rng.integers(r + 2, 150 - r - 2))
        cy = int(rng.integers(r + 2, 150 - r - 2))
        mask = render_circle((150, 150), Circle(cx, cy, r))
        edges = GrayImage(np.where(mask, 255, 0).astype(np.uint8))
        found, score = hough_circle(edges, 13, 62)  # no NoCircleFound allowed
        err = max(abs(found.cx - cx), abs(found.cy - cy), abs(found.r - r))
        worst = max(worst, err)
        assert err <= 2, f"trial {trial}: {found} vs ({cx},{cy},{r})"
    ok(5, f"100/100 rendered circles recovered, max parameter error {worst} px")


# ---------------------------------------------------------------------------
# 6. End-to-end pipeline separation
# ---------------------------------------------------------------------------


def test_criterion_6_pipeline_separation(benchmark_scores):
    scores, elapsed = benchmark_scores
    gen, imp = scores.hds("genuine"), scores.hds("impostor")
    assert gen.size >= 200 and imp.size >= 400
    eer = equal_error_rate(scores)
    assert eer <= 5.0, f"EER {eer:.3f}%"
    assert gen.mean() < 0.25, f"mean genuine {gen.mean():.4f}"
    assert 0.42 <= imp.mean() <= 0.52, f"mean impostor {imp.mean():.4f}"
    assert elapsed < 300.0, f"pipeline took {elapsed:.0f}s"
    ok(
        6,
        f"EER {eer:.3f}%, genuine mean {gen.mean():.3f}, impostor mean "
        f"{imp.mean():.3f}, {elapsed:.0f}s for 30 subjects",
    )


# ---------------------------------------------------------------------------
# 7. Attack-protocol direction check
# ---------------------------------------------------------------------------


def test_criterion_7_attack_direction(benchmark_scores):
    scores, _ = benchmark_scores
    op = threshold_at_far(scores, 1.0)
    assert op.sr_attack1 is not None and op.sr_attack2 is not None
    assert op.sr_attack1 > 0.0
    assert op.sr_attack2 > 0.0
    assert op.sr_attack1 >= op.sr_attack2
    ok(
        7,
        f"at FAR=1% (thr {op.threshold:.3f}): SR1 {op.sr_attack1:.2f}% >= "
        f"SR2 {op.sr_attack2:.2f}%, both positive",
    )


# ---------------------------------------------------------------------------
# 8. Degradation effect on segmentation
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("pitch,blur,users", [(4, 2.0, 4), (6, 2.5, 2)])
def test_criterion_8_degradation_effect(tmp_path, pitch, blur, users):
    rp = replace(RecaptureParams(), dot_pitch=pitch, blur_sigma=blur)
    manifest = build_dataset(users, tmp_path / "ds", rp=rp, seed=77, jobs=JOBS)
    templates = compute_templates(manifest, jobs=JOBS)
    real = [e for e in manifest.entries if e.kind == "real"]
    fake = [e for e in manifest.entries if e.kind == "fake"]
    real_rate = sum(1 for e in real if templates[e.path] is not None) / len(real)
    fake_rate = sum(1 for e in fake if templates[e.path] is not None) / len(fake)
    assert fake_rate < real_rate, f"fake {fake_rate:.2%} !< real {real_rate:.2%}"
    ok(
        8,
        f"pitch {pitch}px, blur {blur}px: fake seg rate {fake_rate:.1%} < "
        f"real {real_rate:.1%}",
    )


# ---------------------------------------------------------------------------
# 9. Morphology/filter law suite
# ---------------------------------------------------------------------------


def test_criterion_9_imagecore_law_suite():
    rng = np.random.default_rng(9)
    ses = [StructuringElement("disk", 1), StructuringElement("square", 1),
           StructuringElement("disk", 2)]
    for trial in range(200):
        h, w = rng.integers(4, 24, size=2)
        img = GrayImage(rng.integers(0, 256, size=(h, w), dtype=np.uint8))
        assert load_pgm(save_pgm(img)) == img
        se = ses[trial % len(ses)]
        px = img.pixels.astype(int)
        er = morph(img, se, "erode").pixels.astype(int)
        di = morph(img, se, "dilate").pixels.astype(int)
        opened = morph(img, se, "open")
        closed = morph(img, se, "close")
        th = top_hat(img, se).pixels.astype(int)
        assert (er <= px).all() and (px <= di).all()
        assert (opened.pixels.astype(int) <= px).all()
        assert (closed.pixels.astype(int) >= px).all()
        assert morph(opened, se, "open") == opened
        assert morph(closed, se, "close") == closed
        assert (th >= 0).all()
        assert (th + opened.pixels.astype(int) == px).all()
    ok(9, "PGM round-trip + morphology laws hold on 200 random images")


# ---------------------------------------------------------------------------
# 10. Determinism end to end
# ---------------------------------------------------------------------------

SMALL_SETS = [
    "--set", "synth.width=192",
    "--set", "synth.height=168",
    "--set", "synth.iris_r_min=48",
    "--set", "synth.iris_r_max=58",
    "--set", "segmentation.iris_r_min=35",
    "--set", "segmentation.iris_r_max=75",
    "--set", "segmentation.pupil_r_min=12",
    "--set", "segmentation.pupil_r_max=34",
    "--set", "protocol.seed=11",
]


def test_criterion_10_determinism(tmp_path):
    trees = {}
    outputs = {}
    for run, jobs in (("a", 1), ("b", 2)):
        root = tmp_path / run
        data = root / "ds"
        rc = run_cli(
            ["synth", "--users", "1", "--out", str(data), "--seed", "11",
             "--jobs", str(jobs)] + SMALL_SETS
        )
        assert rc == 0
        rc = run_cli(
            ["eval", str(data / "manifest.csv"),
             "--report", str(root / "report.json"),
             "--scores", str(root / "scores.csv"),
             "--table", str(root / "table.txt"),
             "--jobs", str(jobs)] + SMALL_SETS
        )
        assert rc == 0
        tree = {}
        for p in sorted(data.rglob("*")):
            if p.is_file():
                tree[str(p.relative_to(data))] = p.read_bytes()
        trees[run] = tree
        outputs[run] = {
            name: (root / name).read_bytes()
            for name in ("report.json", "scores.csv", "table.txt")
        }
    assert trees["a"].keys() == trees["b"].keys()
    for name in trees["a"]:
        assert trees["a"][name] == trees["b"][name], f"dataset file differs: {name}"
    for name in outputs["a"]:
        assert outputs["a"][name] == outputs["b"][name], f"output differs: {name}"
    ok(10, "synth + eval byte-identical across runs and worker counts")


# ---------------------------------------------------------------------------
# 11. Matching throughput floor
# ---------------------------------------------------------------------------


def test_criterion_11_matching_throughput():
    rng = np.random.default_rng(7)
    pairs = [(random_template(rng, 0.1), random_template(rng, 0.1)) for _ in range(64)]
    n = 0
    # warmup
    for x, y in pairs[:8]:
        match_templates(x, y, 8)
    t0 = time.perf_counter()
    while time.perf_counter() - t0 < 0.5:
        x, y = pairs[n % len(pairs)]
        match_templates(x, y, 8)
        n += 1
    rate = n / (time.perf_counter() - t0)
    assert rate >= 2000, f"only {rate:.0f} matches/s"
    ok(11, f"{rate:.0f} full 17-shift matchings/s single-threaded (floor 2000)")
