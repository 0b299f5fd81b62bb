"""Planar geometry on numpy arrays: oriented boxes, SAT, polylines."""
import math
from typing import Tuple

import numpy as np


def normalize_angle(angle: float) -> float:
    """Wrap to [-pi, pi)."""
    wrapped = (angle + math.pi) % (2 * math.pi) - math.pi
    # float modulo can land exactly on +pi
    return -math.pi if wrapped >= math.pi else wrapped


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def heading_from_displacement(delta: np.ndarray, fallback: float) -> float:
    if math.hypot(delta[0], delta[1]) <= 1e-9:
        return fallback
    return normalize_angle(math.atan2(delta[1], delta[0]))


def box_corners(center: np.ndarray, length: float, width: float, heading: float) -> np.ndarray:
    """(4, 2) corners of a box whose length runs along `heading`."""
    half = np.array(
        [[length / 2, width / 2], [length / 2, -width / 2], [-length / 2, -width / 2], [-length / 2, width / 2]]
    )
    return half @ rotation(heading).T + np.asarray(center, dtype=float)


def points_in_box(points: np.ndarray, center: np.ndarray, length: float, width: float, heading: float) -> np.ndarray:
    local = (points - np.asarray(center, dtype=float)) @ rotation(heading)
    return (np.abs(local[:, 0]) <= length / 2) & (np.abs(local[:, 1]) <= width / 2)


def _edge_normals(polygon: np.ndarray) -> np.ndarray:
    edges = np.roll(polygon, -1, axis=0) - polygon
    normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
    lengths = np.linalg.norm(normals, axis=1)
    return normals[lengths > 1e-12] / lengths[lengths > 1e-12, None]


def convex_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for convex polygons (a segment is a 2-gon).

    Touching shapes overlap.
    """
    for axis in np.concatenate([_edge_normals(a), _edge_normals(b)]):
        pa, pb = a @ axis, b @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def point_segment_distance(points: np.ndarray, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    d = end - start
    denom = float(d @ d)
    if denom <= 1e-18:
        return np.linalg.norm(points - start, axis=1)
    t = np.clip((points - start) @ d / denom, 0.0, 1.0)
    return np.linalg.norm(points - (start + t[:, None] * d), axis=1)


def project_on_polyline(points: np.ndarray, vertices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance to a polyline, arc length of the closest point, and the
    signed along-track offset from the start on the first moving segment
    (negative = behind the start).
    """
    n = len(points)
    best = np.full(n, np.inf)
    progress = np.zeros(n)
    behind = np.zeros(n)
    travelled = 0.0
    if len(vertices) == 1:
        vertices = np.vstack([vertices, vertices])
    steps = np.diff(vertices, axis=0)
    moving = np.linalg.norm(steps, axis=1) > 1e-12
    if moving.any():
        lead = steps[int(np.argmax(moving))]
        behind = (points - vertices[0]) @ lead / np.linalg.norm(lead)
    for k in range(len(vertices) - 1):
        start, end = vertices[k], vertices[k + 1]
        d = end - start
        seg_len = math.hypot(d[0], d[1])
        if seg_len > 1e-12:
            along = (points - start) @ d / seg_len
        else:
            along = np.zeros(n)
        t = np.clip(along, 0.0, seg_len)
        if seg_len > 1e-12:
            closest = start + (t / seg_len)[:, None] * d
        else:
            closest = np.broadcast_to(start, points.shape)
        dist = np.linalg.norm(points - closest, axis=1)
        better = dist < best
        best = np.where(better, dist, best)
        progress = np.where(better, travelled + t, progress)
        travelled += seg_len
    return best, progress, behind


def polyline_length(vertices: np.ndarray) -> float:
    return float(np.linalg.norm(np.diff(vertices, axis=0), axis=1).sum())


def resample_polyline(vertices: np.ndarray, arc_lengths: np.ndarray) -> np.ndarray:
    """Points at the given arc lengths along a polyline, clamped to its ends."""
    seg = np.linalg.norm(np.diff(vertices, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.clip(np.asarray(arc_lengths, dtype=float), 0.0, cumulative[-1])
    return np.stack([np.interp(s, cumulative, vertices[:, 0]), np.interp(s, cumulative, vertices[:, 1])], axis=1)


def sector_index(offsets: np.ndarray, heading: float, sectors: int = 8) -> np.ndarray:
    """Angular bin of each offset relative to `heading`; bin 0 straddles
    straight ahead and indices grow counter-clockwise (2 = left, 6 = right).
    """
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    bearing = np.arctan2(offsets[:, 1], offsets[:, 0]) - heading
    width = 2 * math.pi / sectors
    return np.floor(np.mod(bearing + width / 2, 2 * math.pi) / width).astype(np.int64) % sectors
