import itertools
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macpp import scenes
from macpp.geometry import (
    GridError,
    MeshError,
    VoxelGrid,
    _rle,
    _unrle,
    cast_rays,
    cast_rays_brute,
    dilate,
    grid_frame,
    load_grid,
    load_mesh,
    mesh_from_arrays,
    ray_hit,
    sample_surface_patches,
    save_grid,
    save_obj,
    save_stl,
    segment_collision_free,
    traverse_cells,
    triangle_box_overlap,
    voxel_subtract,
    voxelize,
)


def brute_dilate(cells: np.ndarray, r_cells: float) -> np.ndarray:
    out = np.zeros_like(cells)
    occ = np.argwhere(cells)
    if len(occ) == 0:
        return out
    for idx in itertools.product(*(range(d) for d in cells.shape)):
        d2 = ((occ - np.array(idx)) ** 2).sum(axis=1)
        out[idx] = bool((d2 <= r_cells * r_cells + 1e-9).any())
    return out


def unit_box():
    v, t = scenes.box((0, 0, 0), (10, 10, 10))
    return mesh_from_arrays(v, t)


# ---------------------------------------------------------------- meshes


def test_obj_quads_are_fan_triangulated(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    mesh = load_mesh(p)
    assert mesh.n_triangles == 2
    assert np.allclose(mesh.normals, [0, 0, 1])


def test_obj_and_stl_round_trip(tmp_path):
    mesh = unit_box()
    save_obj(mesh, tmp_path / "b.obj")
    save_stl(mesh, tmp_path / "b.stl")
    a = load_mesh(tmp_path / "b.obj")
    b = load_mesh(tmp_path / "b.stl")
    assert a.n_triangles == b.n_triangles == 12
    assert len(b.vertices) == 8  # STL corners are welded
    assert np.allclose(np.sort(a.corners.reshape(-1, 9), axis=0), np.sort(b.corners.reshape(-1, 9), axis=0))


def test_missing_and_bad_mesh_files(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "nope.obj")
    bad = tmp_path / "bad.stl"
    bad.write_bytes(b"\0" * 80 + struct.pack("<I", 5))
    with pytest.raises(MeshError):
        load_mesh(bad)
    odd = tmp_path / "x.ply"
    odd.write_text("ply\n")
    with pytest.raises(MeshError):
        load_mesh(odd)


def test_degenerate_triangles_dropped():
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]]
    mesh = mesh_from_arrays(v, [[0, 1, 2], [0, 1, 3]])
    assert mesh.n_triangles == 1 and mesh.dropped == 1
    with pytest.raises(MeshError):
        mesh_from_arrays(v, [[0, 1, 3]])


@pytest.mark.parametrize("name", sorted(scenes.SCENES))
def test_scene_normals_point_outward(name):
    v, t = scenes.SCENES[name]()
    mesh = mesh_from_arrays(v, t)
    # rays leaving each face along its normal must not run into the same solid right away
    cen = mesh.corners.mean(axis=1)
    hits = cast_rays(mesh, cen + 1e-3 * mesh.normals, mesh.normals, 0.5)[1]
    assert (hits < 0).all()


# ---------------------------------------------------------------- patches


def test_patch_areas_near_target_and_total_preserved():
    mesh = unit_box()
    ps = sample_surface_patches(mesh, 4.0)
    assert ps.m > 0
    assert np.all(ps.areas > 0.5 * 4.0) and np.all(ps.areas <= 2.0 * 4.0 + 1e-9)
    assert ps.areas.sum() == pytest.approx(600.0)
    assert np.allclose(np.linalg.norm(ps.normals, axis=1), 1.0)


def test_small_triangle_is_a_single_patch():
    mesh = mesh_from_arrays([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    ps = sample_surface_patches(mesh, 4.0)
    assert ps.m == 1 and ps.areas[0] == pytest.approx(0.5)


# ---------------------------------------------------------------- voxels


def test_grid_frame_centered():
    origin, dims = grid_frame([0, 0, 0], [10, 4, 1], 1.0, 2.0)
    assert dims == (14, 8, 5)
    assert np.allclose(origin + np.array(dims) / 2, [5, 2, 0.5])


def test_voxelize_matches_point_sampling_and_plane_distance():
    mesh = mesh_from_arrays([[0.3, 0.2, 0.1], [6.7, 1.9, 2.2], [2.1, 5.6, 4.4]], [[0, 1, 2]])
    g = voxelize(mesh, 0.5, padding=1.0)
    # every sampled surface point lies in an occupied cell
    rng = np.random.default_rng(0)
    uv = rng.random((4000, 2))
    uv[uv.sum(1) > 1] = 1 - uv[uv.sum(1) > 1]
    a, b, c = mesh.corners[0]
    pts = a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a)
    idx = g.world_to_index(pts)
    assert g.cells[tuple(idx.T)].all()
    # a cell whose center is further from the plane than its half-diagonal cannot touch it
    n = mesh.normals[0]
    centers = g.index_to_world(np.argwhere(g.cells))
    assert np.all(np.abs((centers - a) @ n) <= 0.5 * g.resolution * np.sqrt(3) + 1e-9)


def test_triangle_box_overlap_cases():
    tri = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
    assert triangle_box_overlap(tri, [0.2, 0.2, 0.0], 0.1)
    assert not triangle_box_overlap(tri, [0.2, 0.2, 0.5], 0.1)
    assert not triangle_box_overlap(tri, [0.9, 0.9, 0.0], 0.1)  # beyond the hypotenuse
    assert triangle_box_overlap(tri, [0.0, 0.0, 0.1], 0.1)  # touching counts


def test_voxelize_budget_refused():
    with pytest.raises(GridError, match="budget"):
        voxelize(unit_box(), 0.1, cell_budget=1000)


@pytest.mark.parametrize("radius", [0.0, 1.0, 1.5, 2.5])
def test_dilate_matches_double_loop(radius):
    rng = np.random.default_rng(int(radius * 10))
    cells = rng.random((9, 8, 7)) < 0.03
    g = VoxelGrid(np.zeros(3), 1.0, cells)
    out = dilate(g, radius)
    assert out.same_frame(g)
    assert np.array_equal(out.cells, brute_dilate(cells, radius))


def test_dilate_respects_resolution_and_empty_grid():
    cells = np.zeros((7, 7, 7), bool)
    g = VoxelGrid(np.zeros(3), 0.5, cells)
    assert not dilate(g, 2.0).cells.any()
    cells[3, 3, 3] = True
    out = dilate(g.with_cells(cells), 1.0)  # two cells at 0.5 m
    assert out.cells[5, 3, 3] and not out.cells[6, 3, 3]
    with pytest.raises(ValueError):
        dilate(g, -1)


def test_subtract_and_frames():
    a = VoxelGrid(np.zeros(3), 1.0, np.ones((3, 3, 3), bool))
    b = a.with_cells(np.zeros((3, 3, 3), bool))
    b.cells[1, 1, 1] = True
    d = voxel_subtract(a, b)
    assert d.count() == 26 and not d.cells[1, 1, 1]
    with pytest.raises(GridError):
        voxel_subtract(a, VoxelGrid(np.ones(3), 1.0, np.ones((3, 3, 3), bool)))


def test_grid_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    g = VoxelGrid(np.array([-1.25, 0.1, 3.0]), 0.5, rng.random((5, 6, 7)) < 0.4)
    save_grid(g, tmp_path / "g.txt")
    h = load_grid(tmp_path / "g.txt")
    assert h.same_frame(g) and np.array_equal(h.cells, g.cells)


@given(st.lists(st.booleans(), max_size=60))
def test_rle_round_trip(bits):
    arr = np.array(bits, dtype=bool)
    assert np.array_equal(_unrle(_rle(arr), arr.size), arr)


# ---------------------------------------------------------------- rays


def test_ray_hit_box_face():
    mesh = unit_box()
    hit = ray_hit(mesh, [5, 5, -3], [0, 0, 1], 100)
    assert hit is not None
    d, k = hit
    assert d == pytest.approx(3.0)
    assert mesh.normals[k][2] == pytest.approx(-1.0)
    assert ray_hit(mesh, [5, 5, -3], [0, 0, 1], 2.9) is None
    assert ray_hit(mesh, [5, 5, -3], [0, 0, -1], 100) is None


def test_bvh_matches_brute_force(courtyard_mesh):
    rng = np.random.default_rng(7)
    lo, hi = courtyard_mesh.bounds
    o = rng.uniform(lo - 5, hi + 5, size=(300, 3))
    d = rng.normal(size=(300, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    t1, k1 = cast_rays(courtyard_mesh, o, d, 60.0)
    t2, k2 = cast_rays_brute(courtyard_mesh, o, d, 60.0)
    assert np.array_equal(k1, k2)
    assert np.allclose(t1[k1 >= 0], t2[k2 >= 0], atol=1e-9, rtol=0)


def test_axis_parallel_rays_through_bvh():
    # zero direction components exercise the slab test's infinite reciprocals
    mesh = unit_box()
    o = np.array([[5.0, 5.0, -1.0], [-1.0, 5.0, 5.0], [5.0, -1.0, 5.0]])
    d = np.array([[0, 0, 1.0], [1.0, 0, 0], [0, 1.0, 0]])
    t, k = cast_rays(mesh, o, d, 50.0)
    assert np.allclose(t, 1.0) and (k >= 0).all()


# ---------------------------------------------------------------- segments


def test_traverse_cells_covers_dense_samples():
    g = VoxelGrid(np.zeros(3), 1.0, np.zeros((10, 10, 10), bool))
    rng = np.random.default_rng(11)
    for _ in range(50):
        p0, p1 = rng.uniform(0.01, 9.99, size=(2, 3))
        cells = set(traverse_cells(g, p0, p1))
        s = np.linspace(0, 1, 2000)[:, None]
        sampled = {tuple(i) for i in g.world_to_index(p0 + s * (p1 - p0)).tolist()}
        assert sampled <= cells
        # cells are face-adjacent steps, no jumps
        assert len(cells) == sum(np.abs(g.world_to_index(p1) - g.world_to_index(p0))) + 1


def test_segment_collision_free():
    cells = np.zeros((10, 10, 10), bool)
    cells[5, 5, :] = True
    g = VoxelGrid(np.zeros(3), 1.0, cells)
    assert not segment_collision_free(g, [0.5, 5.5, 3.2], [9.5, 5.5, 3.2])
    assert segment_collision_free(g, [0.5, 0.5, 3.2], [9.5, 0.5, 3.2])
    assert not segment_collision_free(g, [5.5, 5.5, 5.5], [5.5, 5.5, 5.5])
    with pytest.raises(GridError):
        list(traverse_cells(g, [-1, 0, 0], [1, 1, 1]))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 7.99), min_size=6, max_size=6))
def test_segment_check_agrees_with_sampling(coords):
    rng = np.random.default_rng(5)
    g = VoxelGrid(np.zeros(3), 1.0, rng.random((8, 8, 8)) < 0.1)
    p0, p1 = np.array(coords[:3]), np.array(coords[3:])
    s = np.linspace(0, 1, 4000)[:, None]
    hit_by_sampling = g.cells[tuple(g.world_to_index(p0 + s * (p1 - p0)).T)].any()
    # the traversal is conservative: anything sampling sees, it sees too
    if hit_by_sampling:
        assert not segment_collision_free(g, p0, p1)
