"""Segment versus box intersection tests.

All functions are vectorised over leading axes. Boxes are either
axis-aligned (buildings) or yaw-rotated about their vertical axis
(moving obstacles); both stand on the ground plane z = 0.
"""

from __future__ import annotations

import numpy as np

# Hits closer than this (in segment parameter units) to an endpoint are ignored,
# so a reflection point lying on a wall face does not block its own legs.
ENDPOINT_EPS = 1e-9


def canonical_order(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Swap endpoints so that ``a`` is lexicographically not greater than ``b``.

    Running every test on the canonical orientation makes the result exactly
    symmetric in the endpoints, independent of floating point rounding.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a, b = np.broadcast_arrays(a, b)
    swap = (b[..., 0] < a[..., 0]) | (
        (b[..., 0] == a[..., 0])
        & ((b[..., 1] < a[..., 1]) | ((b[..., 1] == a[..., 1]) & (b[..., 2] < a[..., 2])))
    )
    swap = swap[..., None]
    return np.where(swap, b, a), np.where(swap, a, b)


def slab_hit(a: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """True where the open segment (a, b) passes through the box [lo, hi].

    Inputs broadcast against each other with a trailing axis of length 3.
    The caller is responsible for canonical endpoint ordering.
    """
    d = b - a
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (lo - a) / d
        t2 = (hi - a) / d
    parallel = d == 0
    inside = (a >= lo) & (a <= hi)
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    t_enter = t_near.max(axis=-1)
    t_exit = t_far.min(axis=-1)
    return (t_enter < t_exit) & (t_enter < 1.0 - ENDPOINT_EPS) & (t_exit > ENDPOINT_EPS)


def segment_hits_aabb(a, b, box_lo, box_hi) -> np.ndarray:
    """Segment against axis-aligned boxes; returns the broadcast boolean array."""
    a, b = canonical_order(a, b)
    return slab_hit(a, b, np.asarray(box_lo, dtype=float), np.asarray(box_hi, dtype=float))


def segment_hits_oriented(a, b, center, heading, length, width, height) -> np.ndarray:
    """Segment against yaw-rotated boxes.

    ``center`` (..., 2) is the footprint centre, ``heading`` (..., 2) a unit
    vector along the box length. ``length``, ``width`` and ``height`` broadcast
    against the leading axes.
    """
    a, b = canonical_order(a, b)
    center = np.asarray(center, dtype=float)
    heading = np.asarray(heading, dtype=float)
    hx, hy = heading[..., 0], heading[..., 1]

    def to_local(p):
        dx = p[..., 0] - center[..., 0]
        dy = p[..., 1] - center[..., 1]
        return np.stack([dx * hx + dy * hy, -dx * hy + dy * hx, np.broadcast_to(p[..., 2], dx.shape)], axis=-1)

    la, lb = to_local(a), to_local(b)
    half_l = np.asarray(length, dtype=float) / 2.0
    half_w = np.asarray(width, dtype=float) / 2.0
    h = np.asarray(height, dtype=float)
    zero = np.zeros(np.broadcast_shapes(half_l.shape, half_w.shape, h.shape))
    lo = np.stack([-half_l + zero, -half_w + zero, zero], axis=-1)
    hi = np.stack([half_l + zero, half_w + zero, h + zero], axis=-1)
    return slab_hit(la, lb, lo, hi)


def low_part_bounds(a: np.ndarray, b: np.ndarray, z_max: float) -> np.ndarray:
    """2-D bounding rectangle of the part of each segment lying at z <= z_max.

    Returns (..., 4) as (xmin, ymin, xmax, ymax); segments entirely above
    ``z_max`` get an empty rectangle (+inf, +inf, -inf, -inf).
    """
    za, zb = a[..., 2], b[..., 2]
    dz = zb - za
    with np.errstate(divide="ignore", invalid="ignore"):
        t_cross = np.clip((z_max - za) / dz, 0.0, 1.0)
    # parameter interval [t0, t1] where z <= z_max
    t0 = np.where(za <= z_max, 0.0, t_cross)
    t1 = np.where(zb <= z_max, 1.0, t_cross)
    t0 = np.where(dz == 0, 0.0, t0)
    t1 = np.where(dz == 0, 1.0, t1)
    empty = (za > z_max) & (zb > z_max)
    p0 = a[..., :2] + t0[..., None] * (b[..., :2] - a[..., :2])
    p1 = a[..., :2] + t1[..., None] * (b[..., :2] - a[..., :2])
    lo = np.minimum(p0, p1)
    hi = np.maximum(p0, p1)
    out = np.concatenate([lo, hi], axis=-1)
    out[empty] = [np.inf, np.inf, -np.inf, -np.inf]
    return out
