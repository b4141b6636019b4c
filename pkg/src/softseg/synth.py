"""Synthetic multi-annotator dataset generator.

Each case is built from a smooth latent shape field (an ellipse or a
harmonic blob), positive inside the structure and zero at its boundary.
Simulated annotators threshold that field at individual offsets, drawn
once per annotator per case, plus a smooth per-annotator noise field, so
their masks agree on the interior and disagree in a band around the
boundary, mimicking intergrader variability. The image channel is a
monotone intensity function of the same field plus pixel noise, which
keeps the fused soft label learnable from the image.

Everything derives from per-case RNG substreams, so a dataset is a pure
function of its config and byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .dataio import CaseRecord, write_manifest, write_pgm, write_raster
from .masks import AnnotationSet, BinaryMask, fuse_mean
from .rng import stream

VAL_FRACTION = 0.15


@dataclass(frozen=True)
class SynthConfig:
    size: int = 32
    cases: int = 48
    annotators: int = 5
    shape_family: str = "ellipse"  # "ellipse" | "blob"
    boundary_noise: float = 0.05
    annotator_bias: float = 0.06
    image_noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.size < 4:
            raise ValueError(f"size must be >= 4, got {self.size}")
        if self.cases < 1:
            raise ValueError(f"cases must be >= 1, got {self.cases}")
        if self.annotators < 1:
            raise ValueError(f"annotators must be >= 1, got {self.annotators}")
        if self.shape_family not in ("ellipse", "blob"):
            raise ValueError(f"unknown shape family {self.shape_family!r}")
        for field_name in ("boundary_noise", "annotator_bias", "image_noise"):
            if getattr(self, field_name) < 0:
                raise ValueError(f"{field_name} must be >= 0")

    def to_dict(self) -> dict:
        return {
            "size": self.size,
            "cases": self.cases,
            "annotators": self.annotators,
            "shape_family": self.shape_family,
            "boundary_noise": self.boundary_noise,
            "annotator_bias": self.annotator_bias,
            "image_noise": self.image_noise,
            "seed": self.seed,
        }


def _latent_field(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """Smooth shape field: ~1 at the center, 0 at the boundary, <0 outside."""
    n = config.size
    ys, xs = np.mgrid[0:n, 0:n].astype(np.float64)
    cx = rng.uniform(0.38, 0.62) * n
    cy = rng.uniform(0.38, 0.62) * n
    if config.shape_family == "ellipse":
        a = rng.uniform(0.18, 0.30) * n
        b = rng.uniform(0.18, 0.30) * n
        theta = rng.uniform(0.0, np.pi)
        dx = xs - cx
        dy = ys - cy
        u = (dx * np.cos(theta) + dy * np.sin(theta)) / a
        v = (-dx * np.sin(theta) + dy * np.cos(theta)) / b
        return 1.0 - np.sqrt(u * u + v * v)
    # blob: base radius modulated by low-order harmonics of the polar angle
    r0 = rng.uniform(0.20, 0.30) * n
    amps = rng.uniform(-0.12, 0.12, size=3)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=3)
    dx = xs - cx
    dy = ys - cy
    rho = np.hypot(dx, dy)
    phi = np.arctan2(dy, dx)
    radius = r0 * (
        1.0
        + sum(a * np.cos((k + 2) * phi + p) for k, (a, p) in enumerate(zip(amps, phases)))
    )
    return (radius - rho) / r0


def _annotator_masks(
    config: SynthConfig, field: np.ndarray, rng: np.random.Generator
) -> list[BinaryMask]:
    masks = []
    for _ in range(config.annotators):
        bias = rng.normal(0.0, config.annotator_bias)
        noise = rng.standard_normal(field.shape)
        smooth = gaussian_filter(noise, sigma=2.0)
        spread = smooth.std()
        if spread > 0:
            smooth = smooth / spread
        perturbed = field + config.boundary_noise * smooth
        masks.append(BinaryMask((perturbed >= bias).astype(np.uint8)))
    return masks


def _case_image(
    config: SynthConfig, field: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    interior = 1.0 / (1.0 + np.exp(-field / 0.10))
    image = 0.15 + 0.70 * interior + config.image_noise * rng.standard_normal(field.shape)
    return np.clip(image, 0.0, 1.0)


def generate_case(config: SynthConfig, index: int) -> tuple[np.ndarray, AnnotationSet]:
    """Image and annotation set for case `index`, from its own RNG stream."""
    rng = stream(config.seed, "synth", index)
    field = _latent_field(config, rng)
    masks = _annotator_masks(config, field, rng)
    image = _case_image(config, field, rng)
    return image, AnnotationSet(masks)


def split_counts(cases: int) -> tuple[int, int]:
    """(train, val) case counts: ~15% validation, never an empty train split."""
    if cases < 2:
        return cases, 0
    val = min(max(1, round(VAL_FRACTION * cases)), cases - 1)
    return cases - val, val


def generate_synthetic(config: SynthConfig, out_dir) -> Path:
    """Write the dataset (SSEG images + PGM annotations + manifest) to disk.

    Returns the manifest path. The leading cases form the training split,
    the trailing ones validation.
    """
    out_dir = Path(out_dir)
    n_train, _ = split_counts(config.cases)
    records = []
    granularity_levels = []
    for index in range(config.cases):
        image, annotations = generate_case(config, index)
        case_id = f"case_{index:03d}"
        image_rel = f"{case_id}/image.sseg"
        write_raster(out_dir / image_rel, image.astype(np.float32))
        annotation_rels = []
        for k, mask in enumerate(annotations):
            rel = f"{case_id}/annotator_{k}.pgm"
            write_pgm(out_dir / rel, mask)
            annotation_rels.append(rel)
        granularity_levels.append(np.unique(fuse_mean(annotations).values).size)
        records.append(
            CaseRecord(
                case_id=case_id,
                image=image_rel,
                annotations=tuple(annotation_rels),
                split="train" if index < n_train else "val",
            )
        )
    manifest_path = out_dir / "manifest.json"
    write_manifest(
        manifest_path,
        records,
        meta={
            "seed": config.seed,
            "generator": config.to_dict(),
            "mean_granularity_levels": float(np.mean(granularity_levels)),
        },
    )
    return manifest_path
