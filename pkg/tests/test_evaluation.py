import numpy as np
import pytest

from irisbench.evaluation import (
    Comparison,
    EmptyAfterSegmentation,
    EmptyScores,
    FailureCounts,
    ManifestInvalid,
    OperatingPoint,
    ScoreSet,
    build_report,
    equal_error_rate,
    far_frr_at,
    run_protocol,
    success_rates,
    threshold_at_far,
    threshold_candidates,
    write_scores_csv,
)
from irisbench.segmentation import SegmentationConfig
from irisbench.spoofsim import (
    DatasetManifest,
    EyeDistribution,
    ManifestEntry,
    RecaptureParams,
    build_dataset,
)


def make_scores(genuine=(), impostor=(), attack1=(), attack2=(), failures=None):
    def wrap(kind, vals):
        out = []
        for i, v in enumerate(vals):
            out.append(Comparison(kind, f"a{i}", f"b{i}", float(v), 0))
        return tuple(out)

    return ScoreSet(
        genuine=wrap("genuine", genuine),
        impostor=wrap("impostor", impostor),
        attack1=wrap("attack1", attack1),
        attack2=wrap("attack2", attack2),
        failures=failures or FailureCounts(),
    )


# ---------------------------------------------------------------------------
# far_frr_at / success_rates
# ---------------------------------------------------------------------------


def test_far_frr_textbook_cases():
    s = make_scores(genuine=[0.20, 0.30], impostor=[0.45, 0.55])
    assert far_frr_at(s, 0.40) == (0.0, 0.0)
    assert far_frr_at(s, 0.50) == (50.0, 0.0)
    assert far_frr_at(s, 0.10) == (0.0, 100.0)


def test_far_frr_empty_raises():
    with pytest.raises(EmptyScores):
        far_frr_at(make_scores(impostor=[0.5]), 0.4)


def test_far_frr_monotone_over_sweep():
    rng = np.random.default_rng(4)
    s = make_scores(genuine=rng.uniform(0, 0.5, 50), impostor=rng.uniform(0.2, 1.0, 60))
    fars, frrs = [], []
    for t in np.linspace(0, 1, 101):
        far, frr = far_frr_at(s, t)
        fars.append(far)
        frrs.append(frr)
    assert all(a <= b for a, b in zip(fars, fars[1:]))
    assert all(a >= b for a, b in zip(frrs, frrs[1:]))


def test_success_rates_table2_row():
    # NOM row "1 - 8.70 | 74.07 | 66.06": a fake-genuine FRR of 25.93% means
    # SR1 = 74.07; an attack-2 acceptance of 66.06% is SR2 directly.
    a1 = [0.1] * 7407 + [0.9] * 2593
    a2 = [0.1] * 6606 + [0.9] * 3394
    s = make_scores(genuine=[0.1], impostor=[0.9], attack1=a1, attack2=a2)
    sr1, sr2 = success_rates(s, 0.5)
    assert sr1 == pytest.approx(74.07, abs=1e-9)
    assert sr2 == pytest.approx(66.06, abs=1e-9)


def test_success_rates_edges():
    s = make_scores(genuine=[0.1], impostor=[0.9], attack1=[0.8, 0.9], attack2=[0.7])
    assert success_rates(s, 0.5) == (0.0, 0.0)
    assert success_rates(s, 1.0) == (100.0, 100.0)
    with pytest.raises(EmptyScores):
        success_rates(make_scores(genuine=[0.1], impostor=[0.9]), 0.5)


# ---------------------------------------------------------------------------
# threshold_at_far
# ---------------------------------------------------------------------------


IMP5 = [0.30, 0.35, 0.40, 0.45, 0.50]


def test_threshold_at_far_candidate_grid_rule():
    s = make_scores(genuine=[0.2], impostor=IMP5)
    op = threshold_at_far(s, 20.0)
    assert op.threshold == pytest.approx(0.325)
    assert op.far == pytest.approx(20.0)


def test_threshold_at_far_zero_target():
    s = make_scores(genuine=[0.2], impostor=IMP5)
    op = threshold_at_far(s, 0.0)
    assert op.threshold < 0.30
    assert op.far == 0.0


def test_threshold_at_far_hundred_target():
    s = make_scores(genuine=[0.2], impostor=IMP5)
    op = threshold_at_far(s, 100.0)
    assert op.threshold > 0.50
    assert op.far == 100.0


def test_threshold_at_far_contract_next_candidate_violates():
    s = make_scores(genuine=[0.2], impostor=IMP5)
    cands = threshold_candidates(s)
    for target in (0.0, 10.0, 20.0, 40.0, 50.0, 99.0):
        op = threshold_at_far(s, target)
        assert op.far <= target
        larger = cands[cands > op.threshold + 1e-12]
        if larger.size:
            far_next, _ = far_frr_at(s, float(larger[0]))
            assert far_next > target


def test_operating_point_validation():
    with pytest.raises(ValueError):
        OperatingPoint(target_far=1.0, threshold=0.4, far=101.0, frr=0.0)


# ---------------------------------------------------------------------------
# EER
# ---------------------------------------------------------------------------


def test_eer_on_separated_sets_is_zero():
    s = make_scores(genuine=[0.1, 0.15, 0.2], impostor=[0.5, 0.6, 0.7])
    assert equal_error_rate(s) == 0.0


def test_eer_on_overlapping_sets():
    # one of four genuine above 0.45, one of four impostor below it
    s = make_scores(
        genuine=[0.1, 0.2, 0.3, 0.5], impostor=[0.4, 0.6, 0.7, 0.8]
    )
    assert equal_error_rate(s) == pytest.approx(25.0)


# ---------------------------------------------------------------------------
# build_report / serialization
# ---------------------------------------------------------------------------


def full_scores():
    failures = FailureCounts(
        real_total=432, real_segmented=348, fake_total=432, fake_segmented=166
    )
    rng = np.random.default_rng(6)
    return make_scores(
        genuine=rng.uniform(0.05, 0.3, 100),
        impostor=rng.uniform(0.35, 0.55, 200),
        attack1=rng.uniform(0.2, 0.5, 80),
        attack2=rng.uniform(0.25, 0.55, 80),
        failures=failures,
    )


def test_report_four_targets_ascending_thresholds():
    rep = build_report(full_scores(), targets=[0.1, 1, 2, 5])
    assert len(rep.operating_points) == 4
    ths = [op.threshold for op in rep.operating_points]
    assert ths == sorted(ths)
    for op in rep.operating_points:
        assert op.far <= op.target_far


def test_report_segmentation_rates_match_paper_arithmetic():
    rep = build_report(full_scores())
    assert f"{rep.seg_rate_fake:.2f}" == "38.43"
    assert f"{rep.seg_rate_real:.2f}" == "80.56"


def test_report_empty_targets_gives_det_only():
    rep = build_report(full_scores(), targets=[])
    assert rep.operating_points == ()
    assert len(rep.det) >= 2
    ths = [t for t, _, _ in rep.det]
    assert ths == sorted(ths)


def test_report_json_and_table_render():
    rep = build_report(full_scores())
    doc = rep.to_json()
    assert '"schema": "irisbench-report/1"' in doc
    table = rep.to_table()
    assert "FAR - FRR (%)" in table
    assert "Attack 1" in table and "Attack 2" in table
    assert "80.56" in table and "38.43" in table


def test_scores_csv_format():
    s = make_scores(genuine=[0.125], impostor=[0.5])
    text = write_scores_csv(s)
    lines = text.strip().split("\n")
    assert lines[0] == "kind,subject_a,subject_b,hd,shift"
    assert lines[1] == "genuine,a0,b0,0.125000,0"


# ---------------------------------------------------------------------------
# run_protocol on a toy manifest
# ---------------------------------------------------------------------------

TOY_DIST = EyeDistribution(
    width=192,
    height=168,
    iris_r=(48.0, 58.0),
    pupil_ratio=(0.30, 0.42),
    center_jitter=4.0,
)
TOY_SEG = SegmentationConfig(iris_r_min=35, iris_r_max=75, pupil_r_min=12, pupil_r_max=34)
TOY_RP = RecaptureParams(dot_pitch=0, blur_sigma=1.0, contrast=0.8, noise_sigma=2.0)


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    manifest = build_dataset(1, out, dist=TOY_DIST, rp=TOY_RP, seed=3, jobs=2)
    # keep only 2 images per session: the spec's toy counting example
    entries = tuple(e for e in manifest.entries if e.idx <= 2)
    return DatasetManifest(root=manifest.root, entries=entries)


def test_toy_protocol_counts(toy_dataset):
    scores = run_protocol(toy_dataset, seg_cfg=TOY_SEG, jobs=2)
    f = scores.failures
    assert f.real_total == f.fake_total == 8
    # 2 subjects x (2 s1-templates x 2 s2-images) per scenario when all segment
    attempted_genuine = len(scores.genuine) + f.skipped_genuine
    attempted_attack1 = len(scores.attack1) + f.skipped_attack1
    attempted_attack2 = len(scores.attack2) + f.skipped_attack2
    attempted_impostor = len(scores.impostor) + f.skipped_impostor
    assert attempted_genuine == 8
    assert attempted_attack1 == 8
    assert attempted_attack2 == 8
    assert attempted_impostor == 2  # ordered pairs of 2 subjects
    if f.real_segmented == 8 and f.fake_segmented == 8:
        assert len(scores.genuine) == 8
        assert len(scores.impostor) == 2


def test_protocol_determinism(toy_dataset):
    a = run_protocol(toy_dataset, seg_cfg=TOY_SEG, protocol_seed=5)
    b = run_protocol(toy_dataset, seg_cfg=TOY_SEG, protocol_seed=5, jobs=2)
    assert a == b
    assert write_scores_csv(a) == write_scores_csv(b)


def test_protocol_seed_changes_impostor_selection(toy_dataset):
    a = run_protocol(toy_dataset, seg_cfg=TOY_SEG, protocol_seed=1)
    b = run_protocol(toy_dataset, seg_cfg=TOY_SEG, protocol_seed=2)
    assert a.genuine == b.genuine  # genuine pairs are exhaustive, seed-free
    assert len(a.impostor) == len(b.impostor)


def test_manifest_invalid_on_missing_file(toy_dataset, tmp_path):
    bad = DatasetManifest(
        root=tmp_path,
        entries=(ManifestEntry("u01", "L", 1, 1, "real", "nope/missing.pgm"),),
    )
    with pytest.raises(ManifestInvalid):
        run_protocol(bad, seg_cfg=TOY_SEG)


def test_empty_manifest_rejected():
    with pytest.raises(ManifestInvalid):
        run_protocol(DatasetManifest(root=".", entries=()))


def test_empty_after_segmentation(tmp_path):
    # flat images segment nowhere -> protocol has nothing to compare
    from irisbench.imagecore import GrayImage, save_pgm
    import numpy as np

    entries = []
    for session in (1, 2):
        rel = f"u01/L/real/s{session}_1.pgm"
        p = tmp_path / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(save_pgm(GrayImage(np.full((64, 64), 128, dtype=np.uint8))))
        entries.append(ManifestEntry("u01", "L", session, 1, "real", rel))
    manifest = DatasetManifest(root=tmp_path, entries=tuple(entries))
    with pytest.raises(EmptyAfterSegmentation):
        run_protocol(manifest, seg_cfg=SegmentationConfig(
            iris_r_min=10, iris_r_max=30, pupil_r_min=3, pupil_r_max=9))
