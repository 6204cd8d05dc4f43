"""Small 2D geometry kit for the gaze fusion stage."""

from __future__ import annotations

Point = tuple[float, float]

_EPS = 1e-12


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: list[Point]) -> list[Point]:
    """Andrew's monotone chain; collinear points are dropped.

    Returns the hull in counter-clockwise order (y up); degenerate inputs
    (all collinear) come back with fewer than 3 vertices.
    """
    pts = sorted(set(points))
    if len(pts) <= 2:
        return pts
    lower: list[Point] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Point] = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _on_segment(p: Point, a: Point, b: Point) -> bool:
    if abs(_cross(a, b, p)) > _EPS:
        return False
    return (
        min(a[0], b[0]) - _EPS <= p[0] <= max(a[0], b[0]) + _EPS
        and min(a[1], b[1]) - _EPS <= p[1] <= max(a[1], b[1]) + _EPS
    )


def point_in_polygon(p: Point, vertices: list[Point]) -> bool:
    """Ray-casting containment; points on the boundary count as inside."""
    n = len(vertices)
    if n < 3:
        return False
    inside = False
    j = n - 1
    for i in range(n):
        a, b = vertices[i], vertices[j]
        if _on_segment(p, a, b):
            return True
        if (a[1] > p[1]) != (b[1] > p[1]):
            x_cross = b[0] + (p[1] - b[1]) * (a[0] - b[0]) / (a[1] - b[1])
            if p[0] < x_cross:
                inside = not inside
        j = i
    return inside


def clip_to_unit_square(vertices: list[Point]) -> list[Point]:
    """Sutherland-Hodgman clip of a convex polygon against [0,1]^2."""
    def clip(poly: list[Point], inside, intersect) -> list[Point]:
        out: list[Point] = []
        for i, cur in enumerate(poly):
            prev = poly[i - 1]
            cur_in, prev_in = inside(cur), inside(prev)
            if cur_in:
                if not prev_in:
                    out.append(intersect(prev, cur))
                out.append(cur)
            elif prev_in:
                out.append(intersect(prev, cur))
        return out

    def x_cut(level: float, keep_ge: bool):
        def inside(p: Point) -> bool:
            return p[0] >= level if keep_ge else p[0] <= level

        def intersect(a: Point, b: Point) -> Point:
            t = (level - a[0]) / (b[0] - a[0])
            return (level, a[1] + t * (b[1] - a[1]))

        return inside, intersect

    def y_cut(level: float, keep_ge: bool):
        def inside(p: Point) -> bool:
            return p[1] >= level if keep_ge else p[1] <= level

        def intersect(a: Point, b: Point) -> Point:
            t = (level - a[1]) / (b[1] - a[1])
            return (a[0] + t * (b[0] - a[0]), level)

        return inside, intersect

    poly = list(vertices)
    for inside, intersect in (x_cut(0.0, True), x_cut(1.0, False), y_cut(0.0, True), y_cut(1.0, False)):
        if not poly:
            return []
        poly = clip(poly, inside, intersect)
    # Clipping can introduce duplicate vertices at square corners.
    dedup: list[Point] = []
    for p in poly:
        if not dedup or (abs(p[0] - dedup[-1][0]) > _EPS or abs(p[1] - dedup[-1][1]) > _EPS):
            dedup.append(p)
    if len(dedup) > 1 and abs(dedup[0][0] - dedup[-1][0]) <= _EPS and abs(dedup[0][1] - dedup[-1][1]) <= _EPS:
        dedup.pop()
    return dedup
