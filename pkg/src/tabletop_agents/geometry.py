"""Yaw-oriented box geometry: footprints, overlap tests, and overlap volumes.

All boxes are right prisms: a rectangle footprint rotated by yaw about z,
extruded over a z interval. Intersection volume of two such prisms is exactly
(footprint intersection area) x (z interval overlap), which keeps every
collision/containment test in this package analytic.
"""

from __future__ import annotations

import math

Vec2 = tuple[float, float]

OVERLAP_TOL = 1e-9


def footprint_corners(cx: float, cy: float, dx: float, dy: float, yaw: float) -> list[Vec2]:
    """Corners of a dx-by-dy rectangle centered at (cx, cy), rotated by yaw, CCW order."""
    c, s = math.cos(yaw), math.sin(yaw)
    hx, hy = dx / 2.0, dy / 2.0
    corners = []
    for lx, ly in ((-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)):
        corners.append((cx + lx * c - ly * s, cy + lx * s + ly * c))
    return corners


def point_in_footprint(px: float, py: float, cx: float, cy: float,
                       dx: float, dy: float, yaw: float, strict: bool = False) -> bool:
    """Test (px, py) against an oriented rectangle; strict=True excludes the boundary."""
    c, s = math.cos(yaw), math.sin(yaw)
    rx = (px - cx) * c + (py - cy) * s
    ry = -(px - cx) * s + (py - cy) * c
    hx, hy = dx / 2.0, dy / 2.0
    if strict:
        return abs(rx) < hx and abs(ry) < hy
    return abs(rx) <= hx + 1e-12 and abs(ry) <= hy + 1e-12


def polygon_area(poly: list[Vec2]) -> float:
    """Shoelace area of a simple polygon (vertices in order)."""
    area = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        area += x0 * y1 - x1 * y0
    return abs(area) / 2.0


def clip_polygon(subject: list[Vec2], clip: list[Vec2]) -> list[Vec2]:
    """Sutherland-Hodgman clip of a polygon by a convex CCW clip polygon."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            return []
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        # inside = left of directed edge a->b for CCW clip polygons
        input_poly = output
        output = []
        ex, ey = bx - ax, by - ay

        def side(p: Vec2) -> float:
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        for j in range(len(input_poly)):
            cur = input_poly[j]
            prev = input_poly[j - 1]
            cur_in = side(cur) >= 0.0
            prev_in = side(prev) >= 0.0
            if cur_in:
                if not prev_in:
                    output.append(_intersect(prev, cur, (ax, ay), (bx, by)))
                output.append(cur)
            elif prev_in:
                output.append(_intersect(prev, cur, (ax, ay), (bx, by)))
    return output


def _intersect(p0: Vec2, p1: Vec2, a: Vec2, b: Vec2) -> Vec2:
    """Intersection of segment p0-p1 with the infinite line a-b."""
    dx1, dy1 = p1[0] - p0[0], p1[1] - p0[1]
    dx2, dy2 = b[0] - a[0], b[1] - a[1]
    denom = dx1 * dy2 - dy1 * dx2
    if denom == 0.0:
        return p1
    t = ((a[0] - p0[0]) * dy2 - (a[1] - p0[1]) * dx2) / denom
    return (p0[0] + t * dx1, p0[1] + t * dy1)


def footprint_overlap_area(a: list[Vec2], b: list[Vec2]) -> float:
    """Exact intersection area of two convex footprints."""
    return polygon_area(clip_polygon(a, b))


def interval_overlap(lo0: float, hi0: float, lo1: float, hi1: float) -> float:
    return max(0.0, min(hi0, hi1) - max(lo0, lo1))


def footprint_contains(outer: list[Vec2], inner: list[Vec2]) -> bool:
    """True when every vertex of `inner` lies inside convex `outer` (with slack)."""
    n = len(outer)
    for px, py in inner:
        for i in range(n):
            ax, ay = outer[i]
            bx, by = outer[(i + 1) % n]
            if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -1e-9:
                return False
    return True


def footprints_disjoint(a: list[Vec2], b: list[Vec2]) -> bool:
    """Separating-axis test for two convex footprints (boundary contact counts as disjoint)."""
    for poly_a, poly_b in ((a, b), (b, a)):
        n = len(poly_a)
        for i in range(n):
            ax, ay = poly_a[i]
            bx, by = poly_a[(i + 1) % n]
            nx, ny = -(by - ay), bx - ax
            amin, amax = _project(poly_a, nx, ny)
            bmin, bmax = _project(poly_b, nx, ny)
            if amax <= bmin + 1e-12 or bmax <= amin + 1e-12:
                return True
    return False


def _project(poly: list[Vec2], nx: float, ny: float) -> tuple[float, float]:
    dots = [px * nx + py * ny for px, py in poly]
    return min(dots), max(dots)
