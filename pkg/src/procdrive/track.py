"""Piecewise straight/arc track geometry.

A track is a chain of straight and constant-curvature arc segments plus a
width and a lane count. The compiled Track offers pose/curvature queries by
arc length, lane-center offsets, exact ray casting against the two edge
curves (for range sensors), and polyline sampling for plots. Instances are
immutable after construction and safe to share across threads.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

TWO_PI = 2.0 * math.pi
CLOSURE_TOL = 1e-6


class GeometryError(ValueError):
    """Raised when a track specification is geometrically inconsistent."""


@dataclass(frozen=True)
class Straight:
    length: float

    def __post_init__(self):
        if not (math.isfinite(self.length) and self.length > 0.0):
            raise GeometryError(f"straight length must be > 0, got {self.length!r}")


@dataclass(frozen=True)
class Arc:
    radius: float
    sweep: float  # radians, > 0; direction carried separately
    turn: str     # "left" or "right"

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0.0):
            raise GeometryError(f"arc radius must be > 0, got {self.radius!r}")
        if not (math.isfinite(self.sweep) and 0.0 < self.sweep <= TWO_PI):
            raise GeometryError(f"arc sweep must be in (0, 2*pi], got {self.sweep!r}")
        if self.turn not in ("left", "right"):
            raise GeometryError(f"arc turn must be 'left' or 'right', got {self.turn!r}")


Segment = Union[Straight, Arc]


@dataclass(frozen=True)
class TrackSpec:
    segments: tuple[Segment, ...]
    width: float
    lanes: int = 1
    closed: bool = True

    def __post_init__(self):
        if not self.segments:
            raise GeometryError("track needs at least one segment")
        if not (math.isfinite(self.width) and self.width > 0.0):
            raise GeometryError(f"track width must be > 0, got {self.width!r}")
        if self.lanes < 1:
            raise GeometryError(f"track needs >= 1 lane, got {self.lanes!r}")


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a > math.pi:
        a -= TWO_PI
    elif a <= -math.pi:
        a += TWO_PI
    return a


class _Seg:
    __slots__ = ("kind", "s0", "length", "x0", "y0", "h0", "kappa", "cx", "cy")

    def __init__(self, kind, s0, length, x0, y0, h0, kappa=0.0, cx=0.0, cy=0.0):
        self.kind = kind
        self.s0 = s0
        self.length = length
        self.x0 = x0
        self.y0 = y0
        self.h0 = h0
        self.kappa = kappa
        self.cx = cx
        self.cy = cy


class Track:
    """Compiled track geometry. Build via Track(spec)."""

    def __init__(self, spec: TrackSpec):
        self.spec = spec
        self.width = float(spec.width)
        self.half_width = 0.5 * self.width
        self.lanes = int(spec.lanes)
        self.closed = bool(spec.closed)
        self._segs: list[_Seg] = []
        self._cum: list[float] = [0.0]

        x, y, h = 0.0, 0.0, 0.0
        s = 0.0
        for seg in spec.segments:
            if isinstance(seg, Straight):
                self._segs.append(_Seg("straight", s, seg.length, x, y, h))
                x += seg.length * math.cos(h)
                y += seg.length * math.sin(h)
                s += seg.length
            else:
                kappa = (1.0 / seg.radius) if seg.turn == "left" else (-1.0 / seg.radius)
                cx = x - math.sin(h) / kappa
                cy = y + math.cos(h) / kappa
                arc_len = seg.radius * seg.sweep
                self._segs.append(_Seg("arc", s, arc_len, x, y, h, kappa, cx, cy))
                h_end = h + kappa * arc_len
                x = cx + math.sin(h_end) / kappa
                y = cy - math.cos(h_end) / kappa
                h = h_end
                s += arc_len
            self._cum.append(s)
        self.length = s

        if self.closed:
            gap = math.hypot(x, y)
            if gap > CLOSURE_TOL:
                raise GeometryError(
                    f"closed track does not return to start: endpoint gap {gap:.3e} m")
            h_gap = abs(wrap_angle(h))
            if h_gap > CLOSURE_TOL:
                raise GeometryError(
                    f"closed track heading mismatch at seam: {h_gap:.3e} rad")

        self._build_edges()

    # ------------------------------------------------------------ queries

    def _wrap_s(self, s: float) -> float:
        if self.closed:
            s = math.fmod(s, self.length)
            if s < 0.0:
                s += self.length
            return s
        return min(max(s, 0.0), self.length)

    def segment_index(self, s: float, hint: int | None = None) -> int:
        s = self._wrap_s(s)
        if hint is not None and 0 <= hint < len(self._segs):
            seg = self._segs[hint]
            if seg.s0 <= s and s - seg.s0 < seg.length:
                return hint
        idx = bisect.bisect_right(self._cum, s) - 1
        return min(idx, len(self._segs) - 1)

    def curvature_at(self, s: float, hint: int | None = None) -> float:
        return self._segs[self.segment_index(s, hint)].kappa

    def pose_at(self, s: float, hint: int | None = None) -> tuple[float, float, float]:
        """Centerline (x, y, heading) at arc length s."""
        s = self._wrap_s(s)
        seg = self._segs[self.segment_index(s, hint)]
        u = s - seg.s0
        if seg.kind == "straight":
            return (seg.x0 + u * math.cos(seg.h0),
                    seg.y0 + u * math.sin(seg.h0),
                    seg.h0)
        h = seg.h0 + seg.kappa * u
        inv_k = 1.0 / seg.kappa
        return (seg.cx + math.sin(h) * inv_k,
                seg.cy - math.cos(h) * inv_k,
                h)

    def tangent_at(self, s: float, hint: int | None = None) -> float:
        seg = self._segs[self.segment_index(s, hint)]
        u = self._wrap_s(s) - seg.s0
        return seg.h0 + seg.kappa * u

    def position(self, s: float, lat: float) -> tuple[float, float]:
        """World point at arc length s, offset lat meters (positive left)."""
        x, y, h = self.pose_at(s)
        return (x - lat * math.sin(h), y + lat * math.cos(h))

    def lane_center_p(self, lane: int) -> float:
        """Lateral fraction of a lane center; p=-1 left edge, +1 right edge.

        Lane 0 is the leftmost lane.
        """
        if not (0 <= lane < self.lanes):
            raise GeometryError(f"lane {lane} out of range for {self.lanes} lanes")
        return (2 * lane + 1) / self.lanes - 1.0

    def lane_center_lat(self, lane: int) -> float:
        return -self.lane_center_p(lane) * self.half_width

    def delta_s(self, s_from: float, s_to: float) -> float:
        """Signed along-track distance from s_from to s_to (shortest way)."""
        d = s_to - s_from
        if self.closed:
            d = math.fmod(d, self.length)
            if d > 0.5 * self.length:
                d -= self.length
            elif d < -0.5 * self.length:
                d += self.length
        return d

    # ------------------------------------------------------------ edges

    def _build_edges(self):
        lines_a, lines_e = [], []
        circ_c, circ_r, circ_h0, circ_sweep, circ_flip, circ_kdir = [], [], [], [], [], []
        for seg in self._segs:
            for lat in (self.half_width, -self.half_width):
                if seg.kind == "straight":
                    nx, ny = -math.sin(seg.h0), math.cos(seg.h0)
                    ax = seg.x0 + lat * nx
                    ay = seg.y0 + lat * ny
                    ex = seg.length * math.cos(seg.h0)
                    ey = seg.length * math.sin(seg.h0)
                    lines_a.append((ax, ay))
                    lines_e.append((ex, ey))
                else:
                    # edge point = center + (1/kappa - lat) * (sin h, -cos h)
                    rad = 1.0 / seg.kappa - lat
                    circ_c.append((seg.cx, seg.cy))
                    circ_r.append(abs(rad))
                    circ_h0.append(seg.h0)
                    circ_sweep.append(seg.kappa * seg.length)  # signed sweep
                    circ_flip.append(rad < 0.0)
                    circ_kdir.append(1.0 if seg.kappa > 0 else -1.0)
        self._lines_a = np.asarray(lines_a, dtype=float).reshape(-1, 2)
        self._lines_e = np.asarray(lines_e, dtype=float).reshape(-1, 2)
        self._circ_c = np.asarray(circ_c, dtype=float).reshape(-1, 2)
        self._circ_r = np.asarray(circ_r, dtype=float)
        self._circ_h0 = np.asarray(circ_h0, dtype=float)
        self._circ_sweep = np.asarray(circ_sweep, dtype=float)
        self._circ_flip = np.asarray(circ_flip, dtype=bool)

    def raycast(self, origin: tuple[float, float], angles: np.ndarray,
                max_range: float) -> np.ndarray:
        """Distances from origin to the first edge crossing along each angle.

        Args:
            origin: world (x, y), expected inside the corridor.
            angles: world-frame ray angles, shape (B,).
            max_range: cap applied when no edge is hit.

        Returns:
            Array (B,) of distances in (0, max_range].
        """
        angles = np.asarray(angles, dtype=float)
        ox, oy = float(origin[0]), float(origin[1])
        dx = np.cos(angles)
        dy = np.sin(angles)
        best = np.full(angles.shape, float(max_range))
        t_min = 1e-9

        if len(self._lines_a):
            ax = self._lines_a[:, 0][None, :] - ox   # (1, L) broadcast
            ay = self._lines_a[:, 1][None, :] - oy
            ex = self._lines_e[:, 0][None, :]
            ey = self._lines_e[:, 1][None, :]
            denom = dx[:, None] * ey - dy[:, None] * ex
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (ax * ey - ay * ex) / denom
                w = (ax * dy[:, None] - ay * dx[:, None]) / denom
            ok = np.isfinite(t) & (t > t_min) & (w >= 0.0) & (w <= 1.0)
            t = np.where(ok, t, np.inf)
            best = np.minimum(best, t.min(axis=1, initial=np.inf))

        if len(self._circ_c):
            fx = ox - self._circ_c[:, 0][None, :]   # (1, C)
            fy = oy - self._circ_c[:, 1][None, :]
            b = dx[:, None] * fx + dy[:, None] * fy
            c = fx * fx + fy * fy - (self._circ_r ** 2)[None, :]
            disc = b * b - c
            sq = np.sqrt(np.maximum(disc, 0.0))
            for root in (-b - sq, -b + sq):
                t = np.where((disc >= 0.0) & (root > t_min), root, np.inf)
                px = ox + t * dx[:, None]
                py = oy + t * dy[:, None]
                # angle of the hit point along the arc, measured from h0
                phi = np.arctan2(py - self._circ_c[:, 1][None, :],
                                 px - self._circ_c[:, 0][None, :])
                h_hit = phi + 0.5 * math.pi
                h_hit = np.where(self._circ_flip[None, :], h_hit + math.pi, h_hit)
                sweep = self._circ_sweep[None, :]
                rel = (h_hit - self._circ_h0[None, :]) * np.sign(sweep)
                rel = np.mod(rel, TWO_PI)
                span_ok = rel <= np.abs(sweep) + 1e-9
                t = np.where(span_ok & np.isfinite(t), t, np.inf)
                best = np.minimum(best, t.min(axis=1, initial=np.inf))

        return np.minimum(best, max_range)

    # ------------------------------------------------------------ sampling

    def sample_centerline(self, ds: float = 1.0) -> np.ndarray:
        """Polyline (N, 2) of centerline points every ds meters."""
        n = max(2, int(math.ceil(self.length / ds)) + 1)
        ss = np.linspace(0.0, self.length, n)
        return np.asarray([self.pose_at(float(s))[:2] for s in ss])

    def sample_edge(self, side: str, ds: float = 1.0) -> np.ndarray:
        """Polyline (N, 2) of the left or right edge."""
        lat = self.half_width if side == "left" else -self.half_width
        n = max(2, int(math.ceil(self.length / ds)) + 1)
        ss = np.linspace(0.0, self.length, n)
        return np.asarray([self.position(float(s), lat) for s in ss])
