"""Painted-line track geometry on a bounded mat.

A track is a closed polyline of waypoints with a per-segment tag
("straight" or "turn"). Queries return the perpendicular distance from a
world point to the polyline, the closest point itself, the unit tangent of
the closest segment, and that segment's tag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ConfigurationError

DEFAULT_MAT = (3.5, 4.0)  # meters


@dataclass
class TrackQuery:
    distance: float
    point: tuple[float, float]
    tangent: tuple[float, float]
    tag: str
    segment: int


class Track:
    def __init__(self, waypoints, tags, line_width: float = 0.018,
                 mat_size: tuple[float, float] = DEFAULT_MAT, closed: bool = True):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ConfigurationError("track needs at least two 2-D waypoints")
        if line_width <= 0:
            raise ConfigurationError("line_width must be positive")
        w, h = mat_size
        if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > w) or np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > h):
            raise ConfigurationError("track waypoints must lie inside the mat bounds")
        self.waypoints = pts
        self.closed = closed
        self.line_width = float(line_width)
        self.mat_size = (float(w), float(h))

        if closed:
            self._a = pts
            self._b = np.roll(pts, -1, axis=0)
        else:
            self._a = pts[:-1]
            self._b = pts[1:]
        n_seg = len(self._a)
        tags = list(tags)
        if len(tags) != n_seg:
            raise ConfigurationError(f"expected {n_seg} segment tags, got {len(tags)}")
        for t in tags:
            if t not in ("straight", "turn"):
                raise ConfigurationError(f"unknown segment tag {t!r}")
        self.tags = tags

        self._d = self._b - self._a
        self._len2 = np.einsum("ij,ij->i", self._d, self._d)
        self._len2[self._len2 == 0.0] = 1e-30
        seg_len = np.sqrt(self._len2)
        self._tangents = self._d / seg_len[:, None]
        self.length = float(seg_len.sum())

    def query(self, x: float, y: float) -> TrackQuery:
        """Closest point on the polyline to (x, y)."""
        p = np.array([x, y])
        t = np.clip(np.einsum("ij,ij->i", p[None, :] - self._a, self._d) / self._len2, 0.0, 1.0)
        proj = self._a + t[:, None] * self._d
        diff = proj - p
        dist2 = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(dist2))
        return TrackQuery(
            distance=float(math.sqrt(dist2[i])),
            point=(float(proj[i, 0]), float(proj[i, 1])),
            tangent=(float(self._tangents[i, 0]), float(self._tangents[i, 1])),
            tag=self.tags[i],
            segment=i,
        )

    def on_mat(self, x: float, y: float) -> bool:
        w, h = self.mat_size
        return 0.0 <= x <= w and 0.0 <= y <= h


def rounded_rect_track(x0: float = 0.6, y0: float = 0.6, x1: float = 2.9, y1: float = 3.4,
                       corner_radius: float = 0.35, arc_points: int = 6,
                       line_width: float = 0.018, mat_size=DEFAULT_MAT) -> Track:
    """Rectangle with rounded corners; edges tagged straight, corner arcs turn."""
    r = corner_radius
    if 2 * r >= min(x1 - x0, y1 - y0):
        raise ConfigurationError("corner radius too large for rectangle")
    centers = [
        (x1 - r, y1 - r, 0.0),          # top-right, arc 0 -> 90 deg
        (x0 + r, y1 - r, math.pi / 2),  # top-left
        (x0 + r, y0 + r, math.pi),      # bottom-left
        (x1 - r, y0 + r, 1.5 * math.pi)  # bottom-right
    ]
    pts: list[tuple[float, float]] = []
    tags: list[str] = []
    for cx, cy, start in centers:
        # straight edge leading into this corner is appended implicitly by
        # the polyline closure; tag boundaries are tracked per appended point
        for k in range(arc_points + 1):
            ang = start + (math.pi / 2) * k / arc_points
            pts.append((cx + r * math.cos(ang), cy + r * math.sin(ang)))
            tags.append("turn" if k < arc_points else "straight")
    return Track(pts, tags, line_width=line_width, mat_size=mat_size, closed=True)
