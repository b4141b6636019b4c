"""Online affine augmentation and the growing-batch regime.

One random draw produces translation (up to +-10% of each dimension),
rotation (+-15 degrees), zoom (+-10%), a horizontal flip at 50% and a
vertical flip at configurable probability (0 for anatomies with a fixed
left/right axis). The transforms are composed into a single matrix about
the image center, in the order translate -> rotate -> zoom -> flips, so the
image is resampled only once: image and soft label are pulled through the
inverse map with bilinear interpolation, zero-filled outside the frame.

Batches grow by keeping the originals and appending three augmented copies
of each image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import SoftMask

TRANSLATE_LIMIT = 0.10
ROTATE_LIMIT_DEG = 15.0
ZOOM_LIMITS = (0.90, 1.10)
GROW_COPIES = 3


@dataclass(frozen=True)
class AugmentParams:
    """One sampled transform. `tx`/`ty` are fractions of width/height."""

    tx: float
    ty: float
    angle: float
    zoom: float
    hflip: bool
    vflip: bool

    @classmethod
    def identity(cls) -> "AugmentParams":
        return cls(tx=0.0, ty=0.0, angle=0.0, zoom=1.0, hflip=False, vflip=False)


def sample_params(rng: np.random.Generator, vflip_prob: float = 0.5) -> AugmentParams:
    """Draw one transform uniformly within the augmentation ranges."""
    if not 0.0 <= vflip_prob <= 1.0:
        raise ValueError(f"vflip_prob must lie in [0, 1], got {vflip_prob}")
    return AugmentParams(
        tx=float(rng.uniform(-TRANSLATE_LIMIT, TRANSLATE_LIMIT)),
        ty=float(rng.uniform(-TRANSLATE_LIMIT, TRANSLATE_LIMIT)),
        angle=float(rng.uniform(-ROTATE_LIMIT_DEG, ROTATE_LIMIT_DEG)),
        zoom=float(rng.uniform(*ZOOM_LIMITS)),
        hflip=bool(rng.random() < 0.5),
        vflip=bool(rng.random() < vflip_prob),
    )


def _forward_matrix(params: AugmentParams, width: int, height: int) -> np.ndarray:
    """Homogeneous 3x3 matrix mapping input (x, y) to output (x, y)."""
    cx = (width - 1) / 2.0
    cy = (height - 1) / 2.0
    to_center = np.array([[1, 0, -cx], [0, 1, -cy], [0, 0, 1]], dtype=np.float64)
    from_center = np.array([[1, 0, cx], [0, 1, cy], [0, 0, 1]], dtype=np.float64)

    def centered(m: np.ndarray) -> np.ndarray:
        return from_center @ m @ to_center

    translate = np.array(
        [[1, 0, params.tx * width], [0, 1, params.ty * height], [0, 0, 1]],
        dtype=np.float64,
    )
    theta = np.deg2rad(params.angle)
    c, s = np.cos(theta), np.sin(theta)
    rotate = centered(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64))
    zoom = centered(
        np.array([[params.zoom, 0, 0], [0, params.zoom, 0], [0, 0, 1]], dtype=np.float64)
    )
    matrix = zoom @ rotate @ translate
    if params.hflip:
        matrix = centered(np.array([[-1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)) @ matrix
    if params.vflip:
        matrix = centered(np.array([[1, 0, 0], [0, -1, 0], [0, 0, 1]], dtype=np.float64)) @ matrix
    return matrix


def _bilinear(plane: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample a (H, W) plane at fractional coords, zero outside the frame."""
    h, w = plane.shape
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros(sx.shape, dtype=np.float64)
    for dy in (0, 1):
        wy = fy if dy else 1.0 - fy
        yi = y0 + dy
        for dx in (0, 1):
            wx = fx if dx else 1.0 - fx
            xi = x0 + dx
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            xc = np.clip(xi, 0, w - 1).astype(np.intp)
            yc = np.clip(yi, 0, h - 1).astype(np.intp)
            out += np.where(inside, wy * wx * plane[yc, xc], 0.0)
    return out


def _warp_plane(plane: np.ndarray, inverse: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    ys, xs = np.mgrid[0:h, 0:w]
    coords = np.stack([xs.ravel(), ys.ravel(), np.ones(h * w)])
    src = inverse @ coords
    return _bilinear(plane, src[0], src[1]).reshape(h, w)


def apply(image: np.ndarray, label, params: AugmentParams):
    """Warp an image and its soft label through one sampled transform.

    `image` is (H, W) or (C, H, W); `label` is a :class:`SoftMask` or a
    (H, W) array and is returned as the same type, clamped to [0, 1].
    """
    image = np.asarray(image, dtype=np.float64)
    label_is_mask = isinstance(label, SoftMask)
    label_values = label.values if label_is_mask else np.asarray(label, dtype=np.float64)
    spatial = image.shape[-2:]
    if spatial != label_values.shape:
        raise ValueError(
            f"image spatial dims {spatial} differ from label dims {label_values.shape}"
        )
    h, w = spatial
    inverse = np.linalg.inv(_forward_matrix(params, w, h))
    if image.ndim == 2:
        warped_image = _warp_plane(image, inverse)
    else:
        warped_image = np.stack([_warp_plane(ch, inverse) for ch in image])
    warped_label = np.clip(_warp_plane(label_values, inverse), 0.0, 1.0)
    return warped_image, (SoftMask(warped_label) if label_is_mask else warped_label)


def grow_batch(
    images: np.ndarray,
    labels: np.ndarray,
    rng: np.random.Generator,
    vflip_prob: float = 0.5,
    enabled: bool = True,
):
    """Keep the originals and append GROW_COPIES augmented copies of each image.

    `images` is (B, C, H, W) and `labels` (B, H, W); the output batch is
    4x the input size with the originals first, bit-identical, in input
    order, then the copies of image 0, image 1, ... in draw order. With
    `enabled=False` the inputs are returned unchanged.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if images.shape[0] == 0:
        raise ValueError("grow_batch needs a non-empty batch")
    if not enabled:
        return images, labels
    extra_images = []
    extra_labels = []
    for i in range(images.shape[0]):
        for _ in range(GROW_COPIES):
            params = sample_params(rng, vflip_prob)
            img, lab = apply(images[i], labels[i], params)
            extra_images.append(img)
            extra_labels.append(lab)
    return (
        np.concatenate([images, np.stack(extra_images)]),
        np.concatenate([labels, np.stack(extra_labels)]),
    )
