"""Camera visibility of surface patches from viewpoints and path primitives."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .geometry import SurfacePatchSet, TriangleMesh, cast_rays


@dataclass(frozen=True)
class CameraModel:
    diagonal_fov: float = 94.0  # degrees
    max_view_angle: float = 75.0  # degrees, incidence vs. patch normal
    d_vis: float = 50.0  # meters
    d_safe: float = 2.0  # meters
    aspect_ratio: float = 4.0 / 3.0  # width / height

    def __post_init__(self):
        if not 0 < self.diagonal_fov < 180:
            raise ValueError("diagonal_fov must lie in (0, 180) degrees")
        if not 0 < self.max_view_angle < 90:
            raise ValueError("max_view_angle must lie in (0, 90) degrees")
        if not 0 < self.d_safe < self.d_vis:
            raise ValueError("need 0 < d_safe < d_vis")
        if not self.aspect_ratio > 0:
            raise ValueError("aspect_ratio must be positive")

    @property
    def half_fov_tangents(self) -> tuple[float, float]:
        """tan of the horizontal and vertical half-angles of the frustum."""
        t = math.tan(math.radians(self.diagonal_fov) / 2)
        diag = math.hypot(self.aspect_ratio, 1.0)
        return t * self.aspect_ratio / diag, t / diag


@dataclass(frozen=True)
class CoverageBits:
    """Length-m bit vector; bit k set means patch k is seen."""

    value: int
    m: int

    @classmethod
    def empty(cls, m: int) -> "CoverageBits":
        return cls(0, m)

    @classmethod
    def full(cls, m: int) -> "CoverageBits":
        return cls((1 << m) - 1, m)

    @classmethod
    def from_mask(cls, mask) -> "CoverageBits":
        mask = np.asarray(mask, dtype=bool)
        packed = np.packbits(mask, bitorder="little")
        return cls(int.from_bytes(packed.tobytes(), "little"), len(mask))

    @classmethod
    def from_indices(cls, indices, m: int) -> "CoverageBits":
        v = 0
        for k in indices:
            if not 0 <= k < m:
                raise IndexError(k)
            v |= 1 << int(k)
        return cls(v, m)

    def to_mask(self) -> np.ndarray:
        nbytes = (self.m + 7) // 8
        raw = np.frombuffer(self.value.to_bytes(nbytes, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.m).astype(bool)

    def indices(self) -> list[int]:
        return np.flatnonzero(self.to_mask()).tolist()

    def count(self) -> int:
        return self.value.bit_count()

    def _check(self, other: "CoverageBits"):
        if self.m != other.m:
            raise ValueError(f"coverage length mismatch: {self.m} vs {other.m}")

    def __or__(self, other: "CoverageBits") -> "CoverageBits":
        self._check(other)
        return CoverageBits(self.value | other.value, self.m)

    def __and__(self, other: "CoverageBits") -> "CoverageBits":
        self._check(other)
        return CoverageBits(self.value & other.value, self.m)

    def __getitem__(self, k: int) -> bool:
        return bool((self.value >> k) & 1)

    def issuperset(self, other: "CoverageBits") -> bool:
        self._check(other)
        return other.value & ~self.value == 0


def coverage_ratio(bits: CoverageBits) -> float:
    if bits.m <= 0:
        raise ValueError("coverage ratio undefined for m = 0")
    return bits.count() / bits.m


def camera_basis(direction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(right, up, forward) for a view direction, keeping the image upright."""
    f = np.asarray(direction, dtype=float)
    f = f / np.linalg.norm(f)
    ref = np.array([0.0, 0.0, 1.0])
    right = np.cross(f, ref)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(f, np.array([0.0, 1.0, 0.0]))
    right /= np.linalg.norm(right)
    up = np.cross(right, f)
    return right, up, f


def slerp(a, b, s: float) -> np.ndarray:
    """Spherical interpolation between unit vectors a (s=0) and b (s=1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dot = float(np.clip(a @ b, -1.0, 1.0))
    if dot > 1 - 1e-12:
        v = a + s * (b - a)
        return v / np.linalg.norm(v)
    if dot < -1 + 1e-12:
        # antipodal: rotate about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        th = math.pi * s
        return a * math.cos(th) + np.cross(axis, a) * math.sin(th)
    om = math.acos(dot)
    so = math.sin(om)
    return (math.sin((1 - s) * om) / so) * a + (math.sin(s * om) / so) * b


def visibility_matrix(
    positions, directions, patches: SurfacePatchSet, mesh: TriangleMesh, cam: CameraModel
) -> np.ndarray:
    """(P, m) bool matrix: entry [p, k] is True iff pose p sees patch k.

    A patch counts as seen when its centroid is within [d_safe, d_vis], inside
    the rectangular frustum, viewed at incidence <= max_view_angle from the
    front side, and the first surface hit along the ray is the patch's own
    source triangle.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    P, m = len(pos), patches.m
    out = np.zeros((P, m), dtype=bool)
    if P == 0 or m == 0:
        return out
    tan_h, tan_v = cam.half_fov_tangents
    cos_max = math.cos(math.radians(cam.max_view_angle))

    vec = patches.centroids[None, :, :] - pos[:, None, :]  # (P, m, 3)
    rng = np.linalg.norm(vec, axis=2)
    cand = (rng >= cam.d_safe) & (rng <= cam.d_vis)
    with np.errstate(invalid="ignore", divide="ignore"):
        u = vec / rng[..., None]
    # incidence and back-face tests: -u . n is the cosine between ray and normal
    facing = -np.einsum("pmk,mk->pm", u, patches.normals)
    cand &= (facing > 0) & (facing >= cos_max)
    for p in range(P):
        right, up, fwd = camera_basis(dirs[p])
        z = u[p] @ fwd
        x = u[p] @ right
        y = u[p] @ up
        cand[p] &= (z > 0) & (np.abs(x) <= tan_h * z) & (np.abs(y) <= tan_v * z)

    pi, ki = np.nonzero(cand)
    if pi.size == 0:
        return out
    reach = rng[pi, ki]
    t, tri = cast_rays(mesh, pos[pi], u[pi, ki], reach * (1 + 1e-9) + 1e-6)
    ok = tri == patches.source[ki]
    out[pi[ok], ki[ok]] = True
    return out


def viewpoint_visibility(position, direction, patches, mesh, cam) -> CoverageBits:
    return CoverageBits.from_mask(visibility_matrix(position, direction, patches, mesh, cam)[0])


def sample_poses(polyline, start_dir, end_dir, spacing: float):
    """Positions every ``spacing`` meters of arc length (both ends included) with slerped view directions."""
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = np.atleast_2d(np.asarray(polyline, dtype=float))
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0:
        return pts[:1].copy(), np.asarray(start_dir, float)[None].copy()
    s = np.arange(0.0, total, spacing)
    s = np.append(s, total)
    positions = np.empty((len(s), 3))
    for i in range(3):
        positions[:, i] = np.interp(s, cum, pts[:, i])
    dirs = np.array([slerp(start_dir, end_dir, x / total) for x in s])
    return positions, dirs


def path_visibility(polyline, start_dir, end_dir, patches, mesh, cam, spacing: float = 2.0) -> CoverageBits:
    """OR of viewpoint visibility over poses sampled along a polyline.

    The polyline is put in a canonical direction first, so a leg flown
    either way yields exactly the same poses and the same bits.
    """
    pts = np.atleast_2d(np.asarray(polyline, dtype=float))
    a = (tuple(pts[0].tolist()), tuple(np.asarray(start_dir, float).tolist()))
    b = (tuple(pts[-1].tolist()), tuple(np.asarray(end_dir, float).tolist()))
    if b < a:
        pts, start_dir, end_dir = pts[::-1], end_dir, start_dir
    positions, dirs = sample_poses(pts, start_dir, end_dir, spacing)
    vis = visibility_matrix(positions, dirs, patches, mesh, cam)
    return CoverageBits.from_mask(vis.any(axis=0))


def dump_edge_popcounts(rows, path) -> None:
    """Debug CSV of per-edge coverage counts; rows are (edge_id, u, v, length, bits)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "u", "v", "length", "popcount", "m"])
        for eid, a, b, length, bits in rows:
            w.writerow([eid, a, b, repr(float(length)), bits.count(), bits.m])
