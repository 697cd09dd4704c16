"""Synthetic inspection targets used as fixtures and demo scenes.

All generators return ``(vertices, triangles)`` arrays with outward-facing
winding. Buildings have no base faces: they stand on the ground plane z = 0.
"""

from __future__ import annotations

import numpy as np


class _Builder:
    def __init__(self):
        self.vertices: list = []
        self.triangles: list = []

    def quad(self, p0, p1, p2, p3):
        """Add a planar quad given counter-clockwise as seen from outside."""
        base = len(self.vertices)
        self.vertices.extend([p0, p1, p2, p3])
        self.triangles.append([base, base + 1, base + 2])
        self.triangles.append([base, base + 2, base + 3])

    def box(self, lo, hi, faces=("-x", "+x", "-y", "+y", "-z", "+z")):
        x0, y0, z0 = lo
        x1, y1, z1 = hi
        q = {
            "-x": [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],
            "+x": [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],
            "-y": [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],
            "+y": [(x0, y1, z0), (x0, y1, z1), (x1, y1, z1), (x1, y1, z0)],
            "-z": [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)],
            "+z": [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],
        }
        for f in faces:
            self.quad(*q[f])

    def arrays(self):
        return np.array(self.vertices, dtype=float), np.array(self.triangles, dtype=np.int64)


def box(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """Closed axis-aligned box with 8 shared vertices and 12 triangles."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    v = np.array(
        [
            [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
            [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
        ],
        dtype=float,
    )
    t = np.array(
        [
            [0, 3, 2], [0, 2, 1],  # -z
            [4, 5, 6], [4, 6, 7],  # +z
            [0, 1, 5], [0, 5, 4],  # -y
            [3, 7, 6], [3, 6, 2],  # +y
            [0, 4, 7], [0, 7, 3],  # -x
            [1, 2, 6], [1, 6, 5],  # +x
        ],
        dtype=np.int64,
    )
    return v, t


def courtyard_building(width=24.0, wing=7.0, height=8.0):
    """Square block with an open central courtyard (a ring-shaped building).

    Returns ``(vertices, triangles, n_triangles)``; the last value is the
    count the generator declares, for load round-trip checks.
    """
    w, a, h = width, wing, height
    b = _Builder()
    # outer walls
    b.box((0, 0, 0), (w, w, h), faces=("-x", "+x", "-y", "+y"))
    # courtyard walls face inward, toward the courtyard center
    b.quad((a, a, 0), (a, a, h), (w - a, a, h), (w - a, a, 0))
    b.quad((a, w - a, 0), (w - a, w - a, 0), (w - a, w - a, h), (a, w - a, h))
    b.quad((a, a, 0), (a, w - a, 0), (a, w - a, h), (a, a, h))
    b.quad((w - a, a, 0), (w - a, a, h), (w - a, w - a, h), (w - a, w - a, 0))
    # roof ring
    for lo, hi in (
        ((0, 0), (w, a)),
        ((0, w - a), (w, w)),
        ((0, a), (a, w - a)),
        ((w - a, a), (w, w - a)),
    ):
        b.quad((lo[0], lo[1], h), (hi[0], lo[1], h), (hi[0], hi[1], h), (lo[0], hi[1], h))
    v, t = b.arrays()
    return v, t, len(t)


def twin_towers(side=10.0, gap=12.0, height=30.0, bridge_z=(18.0, 21.0), bridge_width=4.0):
    """Two towers joined by an enclosed sky bridge.

    Returns ``(vertices, triangles, n_triangles)``.
    """
    b = _Builder()
    b.box((0, 0, 0), (side, side, height), faces=("-x", "+x", "-y", "+y", "+z"))
    x2 = side + gap
    b.box((x2, 0, 0), (x2 + side, side, height), faces=("-x", "+x", "-y", "+y", "+z"))
    y0 = (side - bridge_width) / 2
    b.box((side, y0, bridge_z[0]), (x2, y0 + bridge_width, bridge_z[1]), faces=("-y", "+y", "-z", "+z"))
    v, t = b.arrays()
    return v, t, len(t)


SCENES = {
    "box": lambda: box((0, 0, 0), (10.0, 10.0, 10.0)),
    "courtyard": lambda: courtyard_building()[:2],
    "twin_towers": lambda: twin_towers()[:2],
}
