"""Dot detection on ball images."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .render import BallImage, sphere_points

DARKNESS_THRESHOLD = 0.35
MIN_PIXELS = 3
# dots whose centroid sits this close to the limb are too foreshortened to trust
MIN_CENTROID_Z = 0.2
LIMB_MARGIN_PX = 1.0


def detect_dots(image: BallImage, closing_size: int | None = None) -> np.ndarray:
    """Directions ``(M, 3)`` of dark dots on the visible hemisphere, ball-camera frame.

    The local background is estimated with a grey closing, which removes dark
    blobs smaller than the structuring element. Pixels darker than the background
    by ``DARKNESS_THRESHOLD`` (relative) form connected components; each one is
    back-projected to the sphere and averaged with weights ``darkness / sqrt(z)``.
    Full ``1 / z`` weighting would undo the orthographic foreshortening exactly for
    continuous images but over-weights the coarse rim pixels of oblique dots.
    Components touching the limb are dropped.
    """
    img = image.pixels
    h, w = img.shape
    if closing_size is None:
        closing_size = max(5, int(round(image.radius * 0.35)) | 1)
    v, u = np.mgrid[0:h, 0:w] + 0.5
    xyz, inside = sphere_points(u, v, image.center, image.radius)
    rho = np.hypot(xyz[..., 0], xyz[..., 1])
    # pixels whose footprint lies entirely on the ball; limb pixels mix in the background
    core = inside & (rho < 1.0 - LIMB_MARGIN_PX / image.radius)

    # extend the ball outwards before the closing so the limb does not darken the background
    _, (iy, ix) = ndimage.distance_transform_edt(~core, return_indices=True)
    padded = img[iy, ix]
    background = ndimage.grey_closing(padded, size=(closing_size, closing_size))
    with np.errstate(divide="ignore", invalid="ignore"):
        darkness = np.where(core & (background > 0), 1.0 - img / background, 0.0)
    darkness = np.clip(darkness, 0.0, 1.0)
    labels, n = ndimage.label(darkness > DARKNESS_THRESHOLD)
    if n == 0:
        return np.zeros((0, 3))

    # grow each component by one pixel so anti-aliased rims contribute to the centroid
    grown = ndimage.grey_dilation(labels, size=(3, 3))
    grown = np.where((labels == 0) & (darkness > 0.02), grown, labels)

    weighted = xyz / np.sqrt(np.maximum(xyz[..., 2:], 1e-3))
    out = []
    for k in range(1, n + 1):
        if np.count_nonzero(labels == k) < MIN_PIXELS:
            continue
        m = grown == k
        if np.any(ndimage.binary_dilation(labels == k) & ~core):
            continue
        c = (weighted[m] * darkness[m][:, None]).sum(axis=0)
        norm = np.linalg.norm(c)
        if norm == 0:
            continue
        c = c / norm
        if c[2] < MIN_CENTROID_Z:
            continue
        out.append(c)
    return np.array(out).reshape(-1, 3)
