"""Synthetic phantom data, intensity normalization, the wavelet
high-frequency preprocessing pass, and image file I/O.

Phantoms are piecewise-constant ellipse arrangements on a CT-like
intensity scale (air around -1000, tissue around 0). Low-dose noise is
zero-mean, purely high-frequency by construction: white noise with its own
coarse LL band removed, rescaled to the requested sigma. That makes the
wavelet-residual assumption exact on the desk task; ``noise_ll_fraction``
deliberately violates it for robustness studies.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractError, DimensionError, FormatError
from .wavelet import highfreq_extract, lowfreq_extract

IMAGE_MAGIC = b"SWGAN-IMAGE-0001"  # exactly 16 bytes: magic + version
INTENSITY_DIVISOR = 1024.0
HIGH_DOSE = "high_dose"
LOW_DOSE = "low_dose"


@dataclass
class ImageRecord:
    pixels: np.ndarray
    domain_tag: str
    id: str
    noise_sigma: float = 0.0


@dataclass
class DatasetPools:
    """Unpaired training pools of high-frequency images."""

    pool_x: list[np.ndarray]
    pool_y: list[np.ndarray]
    ids_x: list[str] = field(default_factory=list)
    ids_y: list[str] = field(default_factory=list)


# -- synthetic phantoms ---------------------------------------------------------


def _ellipse_mask(size: int, cx: float, cy: float, a: float, b: float,
                  theta: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size]
    dx = xx - cx
    dy = yy - cy
    ct, st = np.cos(theta), np.sin(theta)
    u = dx * ct + dy * st
    v = -dx * st + dy * ct
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def synth_phantom(rng: np.random.Generator, size: int) -> np.ndarray:
    """A random overlapping-ellipse phantom; later ellipses paint over earlier.

    The outer body ellipse is the same across phantoms (like the shared
    gross anatomy of a scan series); organ count, placement and intensity
    vary per sample. Air sits at -1000, the body near water, organs at
    soft-tissue contrast.
    """
    img = np.full((size, size), -1000.0)
    center = size / 2.0
    body = _ellipse_mask(size, center, center, 0.46 * size, 0.42 * size, 0.0)
    img[body] = rng.uniform(-40.0, 20.0)
    for _ in range(int(rng.integers(3, 8))):
        cx = center + rng.uniform(-0.24, 0.24) * size
        cy = center + rng.uniform(-0.22, 0.22) * size
        a = rng.uniform(0.05, 0.16) * size
        b = rng.uniform(0.05, 0.16) * size
        theta = rng.uniform(0.0, np.pi)
        value = rng.uniform(-120.0, 160.0)
        organ = _ellipse_mask(size, cx, cy, a, b, theta) & body
        img[organ] = value
    return img


def _highfreq_noise(rng: np.random.Generator, size: int, sigma: float,
                    levels: int, wavelet: str) -> np.ndarray:
    white = rng.standard_normal((size, size))
    hf = highfreq_extract(white, levels, wavelet)
    scale = hf.std()
    if scale == 0.0:
        return np.zeros_like(hf)
    return hf * (sigma / scale)


def synth_phantom_pair(rng: np.random.Generator, size: int, noise_sigma: float,
                       *, levels: int = 6, wavelet: str = "haar",
                       hd_noise_sigma: float = 0.0, noise_ll_fraction: float = 0.0,
                       psf_sigma: float = 0.7,
                       pair_id: str = "p0") -> tuple[ImageRecord, ImageRecord]:
    """One (high-dose, low-dose) phantom pair sharing the same anatomy.

    ``psf_sigma`` models the scanner's point-spread blur on the
    piecewise-constant anatomy. The high-dose record can carry a small
    noise floor of its own (``hd_noise_sigma``), like a routine-dose scan
    would. Pairing is for evaluation only; training pools never see it.
    """
    if size < (1 << levels):
        raise ContractError(f"size {size} smaller than 2^levels = {1 << levels}")
    anatomy = synth_phantom(rng, size)
    if psf_sigma > 0.0:
        anatomy = gaussian_filter(anatomy, sigma=psf_sigma, mode="nearest")
    hd = anatomy.copy()
    if hd_noise_sigma > 0.0:
        hd = hd + _highfreq_noise(rng, size, hd_noise_sigma, levels, wavelet)
    ld = hd.copy()
    if noise_sigma > 0.0:
        ld = ld + _highfreq_noise(rng, size, noise_sigma, levels, wavelet)
        if noise_ll_fraction > 0.0:
            low = lowfreq_extract(rng.standard_normal((size, size)), levels, wavelet)
            if low.std() > 0.0:
                ld = ld + low * (noise_ll_fraction * noise_sigma / low.std())
    clean = ImageRecord(pixels=hd, domain_tag=HIGH_DOSE, id=f"{pair_id}_hd",
                        noise_sigma=hd_noise_sigma)
    noisy = ImageRecord(pixels=ld, domain_tag=LOW_DOSE, id=f"{pair_id}_ld",
                        noise_sigma=noise_sigma)
    return clean, noisy


# -- normalization and pools -----------------------------------------------------


def normalize_intensity(x) -> np.ndarray:
    """Map the CT-like scale to network units by dividing by 1024."""
    pixels = x.pixels if isinstance(x, ImageRecord) else np.asarray(x, dtype=np.float64)
    return pixels / INTENSITY_DIVISOR


def prepare_pools(records: list[ImageRecord], levels: int, *, wavelet: str = "haar",
                  rng: np.random.Generator | None = None) -> DatasetPools:
    """Normalize each record, keep only its high-frequency part, and group
    by domain; the two pools are shuffled with independent streams."""
    xs: list[tuple[str, np.ndarray]] = []
    ys: list[tuple[str, np.ndarray]] = []
    for rec in records:
        hf = highfreq_extract(normalize_intensity(rec), levels, wavelet)
        if rec.domain_tag == HIGH_DOSE:
            xs.append((rec.id, hf))
        elif rec.domain_tag == LOW_DOSE:
            ys.append((rec.id, hf))
        else:
            raise ContractError(f"record {rec.id!r} has unknown domain tag {rec.domain_tag!r}")
    if rng is not None:
        seed_x, seed_y = rng.integers(0, 2 ** 63 - 1, size=2)
        np.random.default_rng(seed_x).shuffle(xs)
        np.random.default_rng(seed_y).shuffle(ys)
    return DatasetPools(
        pool_x=[hf for _, hf in xs],
        pool_y=[hf for _, hf in ys],
        ids_x=[rid for rid, _ in xs],
        ids_y=[rid for rid, _ in ys],
    )


# -- flat image file format --------------------------------------------------------


def write_image(path, tensor) -> None:
    arr = np.ascontiguousarray(np.asarray(tensor, dtype="<f8"))
    if arr.ndim != 2:
        raise DimensionError(f"image files are 2D, got shape {arr.shape}")
    with open(path, "wb") as f:
        f.write(IMAGE_MAGIC)
        f.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        f.write(arr.tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(len(IMAGE_MAGIC))
        if head != IMAGE_MAGIC:
            raise FormatError(f"{path}: bad magic, not an image file")
        dims = f.read(8)
        if len(dims) != 8:
            raise FormatError(f"{path}: truncated header")
        h, w = struct.unpack("<II", dims)
        payload = f.read(8 * h * w)
        if len(payload) != 8 * h * w:
            raise FormatError(f"{path}: truncated pixel data")
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after pixel data")
    return np.frombuffer(payload, dtype="<f8").reshape(h, w).astype(np.float64)


def export_gray(path, tensor, window: tuple[float, float] = (-500.0, 500.0)) -> None:
    """8-bit PGM export with a display window (lo, hi): lo -> 0, hi -> 255."""
    lo, hi = float(window[0]), float(window[1])
    if hi <= lo:
        raise ContractError(f"window must satisfy lo < hi, got {window}")
    arr = np.asarray(tensor, dtype=np.float64)
    scaled = (arr - lo) / (hi - lo) * 255.0
    u8 = np.clip(np.rint(scaled), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{arr.shape[1]} {arr.shape[0]}\n255\n".encode("ascii"))
        f.write(u8.tobytes())


# -- dataset directories ------------------------------------------------------------


def _write_split(split_dir: str, records: list[ImageRecord]) -> None:
    os.makedirs(split_dir, exist_ok=True)
    lines = ["id\tdomain_tag\tpath\tnoise_sigma"]
    for rec in records:
        fname = f"{rec.id}.img"
        write_image(os.path.join(split_dir, fname), rec.pixels)
        lines.append(f"{rec.id}\t{rec.domain_tag}\t{fname}\t{rec.noise_sigma:.17g}")
    with open(os.path.join(split_dir, "manifest.tsv"), "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def generate_dataset(out_dir: str, *, seed: int, n_train: int, n_eval: int,
                     size: int = 64, noise_sigma: float = 60.0,
                     hd_noise_sigma: float = 0.0, noise_ll_fraction: float = 0.0,
                     psf_sigma: float = 0.7, levels: int = 6,
                     wavelet: str = "haar") -> None:
    """Write train/ and eval/ splits with disjoint record ids."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    kwargs = dict(levels=levels, wavelet=wavelet, hd_noise_sigma=hd_noise_sigma,
                  noise_ll_fraction=noise_ll_fraction, psf_sigma=psf_sigma)
    train: list[ImageRecord] = []
    for i in range(n_train):
        clean, noisy = synth_phantom_pair(rng, size, noise_sigma,
                                          pair_id=f"t{i:04d}", **kwargs)
        train.extend([clean, noisy])
    evals: list[ImageRecord] = []
    for i in range(n_eval):
        clean, noisy = synth_phantom_pair(rng, size, noise_sigma,
                                          pair_id=f"e{i:04d}", **kwargs)
        evals.extend([clean, noisy])
    _write_split(os.path.join(out_dir, "train"), train)
    _write_split(os.path.join(out_dir, "eval"), evals)


def load_records(manifest_path) -> list[ImageRecord]:
    base = os.path.dirname(manifest_path)
    records = []
    with open(manifest_path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != "id\tdomain_tag\tpath\tnoise_sigma":
        raise FormatError(f"{manifest_path}: missing or malformed header")
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise FormatError(f"{manifest_path}: bad manifest row {line!r}")
        rid, tag, rel, sigma = parts
        records.append(ImageRecord(pixels=read_image(os.path.join(base, rel)),
                                   domain_tag=tag, id=rid, noise_sigma=float(sigma)))
    return records


def paired_records(records: list[ImageRecord]) -> list[tuple[ImageRecord, ImageRecord]]:
    """Match *_hd and *_ld records by shared stem (evaluation only)."""
    by_stem: dict[str, dict[str, ImageRecord]] = {}
    for rec in records:
        stem, _, suffix = rec.id.rpartition("_")
        by_stem.setdefault(stem, {})[suffix] = rec
    pairs = []
    for stem in sorted(by_stem):
        entry = by_stem[stem]
        if "hd" in entry and "ld" in entry:
            pairs.append((entry["hd"], entry["ld"]))
    if not pairs:
        raise ContractError("no (high-dose, low-dose) pairs found in records")
    return pairs
