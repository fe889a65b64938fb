"""Synthetic eye rendering and print-recapture simulation.

Stands in for a physical fake-iris capture chain: render a clean eye image
per identity, optionally enhance it with a preprocessing chain, then push it
through a printer/sensor degradation model (halftone dither, optical blur,
contrast loss, sensor noise, optional specular highlight).

Iris texture is seeded multi-octave value noise laid out in pupil-referenced
polar coordinates, so the same texture seed renders the same identity under
session jitter (translation, scale, rotation, illumination).
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import PipelineError
from .imagecore import (
    GrayImage,
    StructuringElement,
    gaussian_blur,
    histogram_equalize,
    median_filter,
    morph,
    save_pgm,
    top_hat,
)


class IoError(PipelineError):
    """Dataset files could not be written or read."""


def stable_seed(*parts) -> int:
    """Order-stable 64-bit seed from string-able parts (not Python hash())."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# Eye rendering
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EyeParams:
    width: int = 320
    height: int = 280
    iris_cx: float = 160.0
    iris_cy: float = 140.0
    iris_r: float = 90.0
    pupil_cx: float = 160.0
    pupil_cy: float = 140.0
    pupil_r: float = 34.0
    texture_seed: int = 0
    octave_weights: tuple[float, ...] = (0.32, 0.28, 0.24, 0.16)
    texture_amplitude: float = 45.0
    limbus_strength: float = 30.0  # darkening of the outer iris rim
    texture_rotation_deg: float = 0.0
    eyelid_coverage: float = 0.0
    pupil_level: float = 30.0
    iris_level: float = 110.0
    sclera_level: float = 200.0
    eyelid_level: float = 175.0

    def __post_init__(self):
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if not 0 < self.pupil_r < self.iris_r:
            raise ValueError("need 0 < pupil_r < iris_r")
        off = np.hypot(self.pupil_cx - self.iris_cx, self.pupil_cy - self.iris_cy)
        if off + self.pupil_r >= self.iris_r:
            raise ValueError("pupil disk must lie strictly inside the iris")
        if not (self.pupil_level < self.iris_level < self.sclera_level):
            raise ValueError("need pupil < iris < sclera intensity ordering")
        if not 0.0 <= self.eyelid_coverage <= 1.0:
            raise ValueError("eyelid_coverage must be in [0, 1]")
        if not self.octave_weights or any(w <= 0 for w in self.octave_weights):
            raise ValueError("octave weights must be positive")


def _polar_value_noise(rho, phi, cells_r, cells_a, seed):
    """Bilinear value noise on a polar lattice, periodic in angle.

    rho in [0, 1], phi in radians; lattice values in [-1, 1] drawn from the
    seed only, independent of eye geometry.
    """
    rng = np.random.default_rng(seed)
    lattice = rng.uniform(-1.0, 1.0, size=(cells_r + 1, cells_a))
    u = np.clip(rho, 0.0, 1.0) * cells_r
    v = (phi % (2.0 * np.pi)) / (2.0 * np.pi) * cells_a
    u0 = np.clip(np.floor(u).astype(np.int64), 0, cells_r - 1)
    v0 = np.floor(v).astype(np.int64) % cells_a
    v1 = (v0 + 1) % cells_a
    fu = u - u0
    fv = v - v0
    # smoothstep fade removes lattice creases
    fu = fu * fu * (3 - 2 * fu)
    fv = fv * fv * (3 - 2 * fv)
    a = lattice[u0, v0] * (1 - fv) + lattice[u0, v1] * fv
    b = lattice[u0 + 1, v0] * (1 - fv) + lattice[u0 + 1, v1] * fv
    return a * (1 - fu) + b * fu


def _iris_texture(rho, phi, p: EyeParams):
    # both frequencies double per octave (radial capped near the row count)
    # with fairly flat weights: the encoder's passband needs enough
    # independent angular-radial cells for cross-identity codes to sit at
    # chance level
    total = np.zeros_like(rho)
    wsum = sum(p.octave_weights)
    for octave, weight in enumerate(p.octave_weights):
        cells_r = min(3 * (2**octave), 24)
        cells_a = 16 * (2**octave)
        seed = stable_seed("texture", p.texture_seed, octave)
        total += weight * _polar_value_noise(rho, phi, cells_r, cells_a, seed)
    return total / wsum


def render_synthetic_eye(p: EyeParams) -> GrayImage:
    """Deterministic eye render: dark pupil disk, value-noise iris annulus,
    bright sclera, optional eyelid arcs covering the stated fraction of the
    iris from above and below."""
    yy, xx = np.mgrid[0 : p.height, 0 : p.width].astype(np.float64)
    dxp = xx - p.pupil_cx
    dyp = yy - p.pupil_cy
    dist_pupil = np.hypot(dxp, dyp)
    dist_iris = np.hypot(xx - p.iris_cx, yy - p.iris_cy)

    img = np.full((p.height, p.width), p.sclera_level, dtype=np.float64)

    iris_mask = (dist_pupil > p.pupil_r) & (dist_iris <= p.iris_r)
    phi = np.arctan2(dyp, dxp)
    ox = p.iris_cx - p.pupil_cx
    oy = p.iris_cy - p.pupil_cy
    ou = ox * np.cos(phi) + oy * np.sin(phi)
    disc = np.maximum(ou * ou - (ox * ox + oy * oy) + p.iris_r**2, 0.0)
    d_outer = ou + np.sqrt(disc)
    rho = (dist_pupil - p.pupil_r) / np.maximum(d_outer - p.pupil_r, 1e-9)
    tex = _iris_texture(rho, phi + np.deg2rad(p.texture_rotation_deg), p)
    # a darkened limbus rim keeps the outer boundary contrast uniform
    rim = np.clip((rho - 0.82) / 0.18, 0.0, 1.0)
    rim = rim * rim * (3 - 2 * rim)
    iris_vals = p.iris_level + p.texture_amplitude * tex * (1.0 - 0.5 * rim)
    iris_vals -= p.limbus_strength * rim
    img[iris_mask] = iris_vals[iris_mask]

    img[dist_pupil <= p.pupil_r] = p.pupil_level

    if p.eyelid_coverage > 0:
        # near-straight arcs: huge circles dipping to the coverage cut line
        lid_r = 40.0 * p.iris_r
        y_cut_u = p.iris_cy - p.iris_r + p.eyelid_coverage * p.iris_r
        y_cut_l = p.iris_cy + p.iris_r - p.eyelid_coverage * p.iris_r
        upper = (xx - p.iris_cx) ** 2 + (yy - (y_cut_u - lid_r)) ** 2 <= lid_r**2
        lower = (xx - p.iris_cx) ** 2 + (yy - (y_cut_l + lid_r)) ** 2 <= lid_r**2
        img[upper | lower] = p.eyelid_level

    return GrayImage.from_float(img)


# ---------------------------------------------------------------------------
# Preprocessing chains (print-enhancement options)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainStep:
    kind: str  # histeq | median | open | close | tophat
    radius: int = 3
    se_shape: str = "disk"

    def __post_init__(self):
        if self.kind not in ("histeq", "median", "open", "close", "tophat"):
            raise ValueError(f"unknown chain step: {self.kind!r}")
        if self.kind != "histeq" and self.radius < 1:
            raise ValueError("step radius must be >= 1")

    def apply(self, img: GrayImage) -> GrayImage:
        if self.kind == "histeq":
            return histogram_equalize(img)
        if self.kind == "median":
            return median_filter(img, self.radius)
        se = StructuringElement(self.se_shape, self.radius)
        if self.kind == "tophat":
            return top_hat(img, se)
        return morph(img, se, self.kind)


@dataclass(frozen=True)
class PreprocessChain:
    steps: tuple[ChainStep, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))


def apply_chain(img: GrayImage, chain: PreprocessChain) -> GrayImage:
    out = img
    for step in chain.steps:
        out = step.apply(out)
    return out


CHAIN_PRESETS: dict[str, PreprocessChain] = {
    "none": PreprocessChain(()),
    "histeq": PreprocessChain((ChainStep("histeq"),)),
    "median": PreprocessChain((ChainStep("median", 2),)),
    "open": PreprocessChain((ChainStep("open", 3),)),
    "close": PreprocessChain((ChainStep("close", 3),)),
    "tophat": PreprocessChain((ChainStep("tophat", 3),)),
    "open-tophat": PreprocessChain((ChainStep("open", 3), ChainStep("tophat", 3))),
}


# ---------------------------------------------------------------------------
# Print-recapture degradation
# ---------------------------------------------------------------------------


_BAYER4 = np.array(
    [[0, 8, 2, 10], [12, 4, 14, 6], [3, 11, 1, 9], [15, 7, 13, 5]], dtype=np.int64
)


@dataclass(frozen=True)
class Highlight:
    cx: float
    cy: float
    r: float
    intensity: float = 250.0

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("highlight radius must be > 0")
        if not 0 <= self.intensity <= 255:
            raise ValueError("highlight intensity must be in [0, 255]")


@dataclass(frozen=True)
class RecaptureParams:
    dot_pitch: int = 1  # 0 disables halftoning
    blur_sigma: float = 1.8  # 0 disables the optical blur
    contrast: float = 0.65  # retention toward mid-gray, (0, 1]
    noise_sigma: float = 2.5  # additive gaussian noise, gray levels
    highlight: Highlight | None = None
    seed: int = 0

    def __post_init__(self):
        if self.dot_pitch < 0:
            raise ValueError("dot_pitch must be >= 0")
        if self.blur_sigma < 0:
            raise ValueError("blur_sigma must be >= 0")
        if not 0 < self.contrast <= 1:
            raise ValueError("contrast retention must be in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


RECAPTURE_PRESETS: dict[str, RecaptureParams] = {
    # the default models the paper's best fabrication choice (inkjet printer,
    # high-resolution paper): dots near sensor resolution, mild optics loss
    "default": RecaptureParams(),
    "inkjet-high": RecaptureParams(dot_pitch=1, blur_sigma=1.5, contrast=0.75, noise_sigma=2.0),
    "laser-recycled": RecaptureParams(dot_pitch=5, blur_sigma=2.5, contrast=0.45, noise_sigma=9.0),
}


def simulate_print_recapture(img: GrayImage, rp: RecaptureParams) -> GrayImage:
    """Degradation chain: halftone dither -> optical blur -> contrast
    compression toward mid-gray -> additive noise -> optional highlight.
    Deterministic given rp (seed included); identity parameters pass the
    image through bit-exact."""
    rng = np.random.default_rng(rp.seed)
    out = img

    if rp.dot_pitch >= 1:
        # Ordered-dither halftone: a tiled Bayer threshold matrix (seeded
        # phase plus small per-cell jitter) at the dot pitch. The pattern is
        # mean-preserving, so optical blur recovers local tone like a real
        # printed-and-photographed image.
        p = rp.dot_pitch
        ch = -(-img.height // p)
        cw = -(-img.width // p)
        # screen phase is fixed (one printer, one screen); only the per-cell
        # jitter varies with the seed, like paper grain
        cy, cx = np.mgrid[0:ch, 0:cw]
        base = _BAYER4[cy % 4, cx % 4] * 16 + 8
        jitter = rng.integers(-8, 9, size=(ch, cw))
        thresholds = np.clip(base + jitter, 1, 255)
        grid = np.repeat(np.repeat(thresholds, p, axis=0), p, axis=1)
        grid = grid[: img.height, : img.width]
        out = GrayImage(np.where(out.pixels > grid, 255, 0).astype(np.uint8))

    if rp.blur_sigma > 0:
        out = gaussian_blur(out, rp.blur_sigma)

    if rp.contrast != 1.0:
        comp = 128.0 + rp.contrast * (out.pixels.astype(np.float64) - 128.0)
        out = GrayImage.from_float(comp)

    if rp.noise_sigma > 0:
        noisy = out.pixels.astype(np.float64) + rng.normal(
            0.0, rp.noise_sigma, size=out.pixels.shape
        )
        out = GrayImage.from_float(noisy)

    if rp.highlight is not None:
        h = rp.highlight
        yy, xx = np.mgrid[0 : out.height, 0 : out.width]
        disk = (xx - h.cx) ** 2 + (yy - h.cy) ** 2 <= h.r**2
        px = out.pixels.copy()
        px[disk] = int(round(h.intensity))
        out = GrayImage(px)

    return out


# ---------------------------------------------------------------------------
# Dataset builder
# ---------------------------------------------------------------------------

EYES = ("L", "R")
SESSIONS = (1, 2)
IMAGES_PER_SESSION = 4


@dataclass(frozen=True)
class EyeDistribution:
    """Sampling ranges for per-identity geometry and per-session jitter."""

    width: int = 320
    height: int = 280
    iris_r: tuple[float, float] = (75.0, 105.0)
    pupil_ratio: tuple[float, float] = (0.30, 0.45)
    center_jitter: float = 6.0
    pupil_offset: float = 2.0
    eyelid_coverage: tuple[float, float] = (0.05, 0.30)
    session_translate: float = 3.0
    session_scale: float = 0.02
    session_rotate_deg: float = 3.0
    session_illum: float = 5.0


@dataclass(frozen=True)
class ManifestEntry:
    user_id: str
    eye: str
    session: int
    idx: int
    kind: str  # real | fake
    path: str  # POSIX-style, relative to the manifest root

    @property
    def subject(self) -> str:
        return f"{self.user_id}_{self.eye}"


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[ManifestEntry, ...]

    def subjects(self) -> list[str]:
        return sorted({e.subject for e in self.entries})

    def select(self, **fields) -> list[ManifestEntry]:
        out = [
            e
            for e in self.entries
            if all(getattr(e, k) == v for k, v in fields.items())
        ]
        return out

    def full_path(self, entry: ManifestEntry) -> Path:
        return self.root / entry.path


MANIFEST_FIELDS = ["user_id", "eye", "session", "idx", "kind", "path"]


def write_manifest_csv(manifest: DatasetManifest, path: Path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(MANIFEST_FIELDS)
            for e in manifest.entries:
                writer.writerow([e.user_id, e.eye, e.session, e.idx, e.kind, e.path])
    except OSError as exc:
        raise IoError(f"cannot write manifest: {exc}") from exc


def load_manifest_csv(path: Path) -> DatasetManifest:
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != MANIFEST_FIELDS:
                raise IoError(f"manifest {path} has unexpected header {header}")
            entries = []
            for row in reader:
                if len(row) != 6:
                    raise IoError(f"manifest row malformed: {row}")
                user, eye, session, idx, kind, rel = row
                if kind not in ("real", "fake") or eye not in EYES:
                    raise IoError(f"manifest row malformed: {row}")
                entries.append(
                    ManifestEntry(user, eye, int(session), int(idx), kind, rel)
                )
    except OSError as exc:
        raise IoError(f"cannot read manifest: {exc}") from exc
    return DatasetManifest(root=path.parent, entries=tuple(entries))


def _identity_params(dist: EyeDistribution, seed: int, user: int, eye: str) -> EyeParams:
    rng = np.random.default_rng(stable_seed("identity", seed, user, eye))
    iris_r = rng.uniform(*dist.iris_r)
    pupil_r = iris_r * rng.uniform(*dist.pupil_ratio)
    icx = dist.width / 2 + rng.uniform(-dist.center_jitter, dist.center_jitter)
    icy = dist.height / 2 + rng.uniform(-dist.center_jitter, dist.center_jitter)
    max_off = max(0.0, min(dist.pupil_offset, iris_r - pupil_r - 2))
    pcx = icx + rng.uniform(-max_off, max_off)
    pcy = icy + rng.uniform(-max_off, max_off)
    coverage = rng.uniform(*dist.eyelid_coverage)
    return EyeParams(
        width=dist.width,
        height=dist.height,
        iris_cx=icx,
        iris_cy=icy,
        iris_r=iris_r,
        pupil_cx=pcx,
        pupil_cy=pcy,
        pupil_r=pupil_r,
        texture_seed=stable_seed("texture-id", seed, user, eye),
        eyelid_coverage=coverage,
    )


def _session_variant(
    base: EyeParams, dist: EyeDistribution, seed: int, user: int, eye: str, session: int, idx: int
) -> EyeParams:
    rng = np.random.default_rng(stable_seed("session", seed, user, eye, session, idx))
    tx = rng.uniform(-dist.session_translate, dist.session_translate)
    ty = rng.uniform(-dist.session_translate, dist.session_translate)
    scale = 1.0 + rng.uniform(-dist.session_scale, dist.session_scale)
    rot = rng.uniform(-dist.session_rotate_deg, dist.session_rotate_deg)
    illum = rng.uniform(-dist.session_illum, dist.session_illum)
    # scale about the iris center so the whole eye breathes together
    pcx = base.iris_cx + (base.pupil_cx - base.iris_cx) * scale + tx
    pcy = base.iris_cy + (base.pupil_cy - base.iris_cy) * scale + ty
    return replace(
        base,
        iris_cx=base.iris_cx + tx,
        iris_cy=base.iris_cy + ty,
        iris_r=base.iris_r * scale,
        pupil_cx=pcx,
        pupil_cy=pcy,
        pupil_r=base.pupil_r * scale,
        texture_rotation_deg=base.texture_rotation_deg + rot,
        pupil_level=base.pupil_level + illum,
        iris_level=base.iris_level + illum,
        sclera_level=base.sclera_level + illum,
        eyelid_level=base.eyelid_level + illum,
    )


def _render_task(args) -> None:
    eye_params, chain, rp, real_path, fake_path = args
    real = render_synthetic_eye(eye_params)
    fake = simulate_print_recapture(apply_chain(real, chain), rp)
    try:
        Path(real_path).write_bytes(save_pgm(real))
        Path(fake_path).write_bytes(save_pgm(fake))
    except OSError as exc:
        raise IoError(f"cannot write dataset image: {exc}") from exc


def build_dataset(
    n_users: int,
    out_dir: Path,
    dist: EyeDistribution = EyeDistribution(),
    rp: RecaptureParams = RecaptureParams(),
    chain: PreprocessChain = CHAIN_PRESETS["none"],
    seed: int = 0,
    jobs: int = 1,
) -> DatasetManifest:
    """Render n_users x 2 eyes x 2 sessions x 4 images of real eyes plus the
    corresponding print-recaptured fakes; write PGMs and manifest.csv.

    Per-image seeds are derived by stable hashing of (seed, user, eye,
    session, idx), so the output tree is byte-identical for any job count.
    """
    if n_users < 1:
        raise ValueError("n_users must be >= 1")
    out_dir = Path(out_dir)
    entries: list[ManifestEntry] = []
    tasks = []
    for user in range(1, n_users + 1):
        user_id = f"u{user:02d}"
        for eye in EYES:
            base = _identity_params(dist, seed, user, eye)
            for session in SESSIONS:
                for idx in range(1, IMAGES_PER_SESSION + 1):
                    params = _session_variant(base, dist, seed, user, eye, session, idx)
                    rel_dir = Path(user_id) / eye
                    name = f"s{session}_{idx}.pgm"
                    real_rel = rel_dir / "real" / name
                    fake_rel = rel_dir / "fake" / name
                    rp_img = replace(
                        rp, seed=stable_seed("recapture", seed, user, eye, session, idx)
                    )
                    tasks.append(
                        (params, chain, rp_img, out_dir / real_rel, out_dir / fake_rel)
                    )
                    entries.append(
                        ManifestEntry(user_id, eye, session, idx, "real", real_rel.as_posix())
                    )
                    entries.append(
                        ManifestEntry(user_id, eye, session, idx, "fake", fake_rel.as_posix())
                    )

    try:
        for task in tasks:
            Path(task[3]).parent.mkdir(parents=True, exist_ok=True)
            Path(task[4]).parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create dataset directories: {exc}") from exc

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_render_task, tasks, chunksize=4))
    else:
        for task in tasks:
            _render_task(task)

    entries.sort(key=lambda e: (e.user_id, e.eye, e.session, e.idx, e.kind))
    manifest = DatasetManifest(root=out_dir, entries=tuple(entries))
    write_manifest_csv(manifest, out_dir / "manifest.csv")
    return manifest
