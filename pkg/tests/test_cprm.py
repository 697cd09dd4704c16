import numpy as np
import pytest

from macpp import scenes
from macpp.cprm import (
    CPRM,
    CPRMBuildError,
    PathPrimitive,
    SamplingParams,
    ViaPoint,
    assign_orientation,
    build_cprm,
    dual_sample_viapoints,
    largest_component,
    load_cprm,
    local_plan,
    polyline_length,
    prepare_scene,
    random_sample_viapoints,
    required_count,
    save_cprm,
)
from macpp.geometry import VoxelGrid, mesh_from_arrays, segment_collision_free
from macpp.visibility import CameraModel, CoverageBits, path_visibility

from conftest import abstract_cprm

PARAMS = SamplingParams(
    d_vis=12, d_safe=2, d_max=10, n_desired=0, target_patch_area=6, initial_sample_count=20,
    dual_batch_size=8, max_iterations=6, min_altitude=1.0,
)
CAM = CameraModel(d_vis=12, d_safe=2)


@pytest.fixture(scope="module")
def box_mesh():
    v, t = scenes.box((0, 0, 0), (8, 8, 6))
    return mesh_from_arrays(v, t)


@pytest.fixture(scope="module")
def box_scene(box_mesh):
    return prepare_scene(box_mesh, PARAMS)


@pytest.fixture(scope="module")
def box_build(box_mesh, box_scene):
    return build_cprm(box_mesh, PARAMS, CAM, np.random.default_rng(0), scene=box_scene)


def test_params_validation():
    with pytest.raises(ValueError):
        SamplingParams(d_vis=2, d_safe=2)
    with pytest.raises(ValueError):
        SamplingParams(d_max=0)
    with pytest.raises(ValueError):
        SamplingParams(dual_batch_size=-1)


def test_required_count():
    assert required_count(0.0, 10) == 0
    assert required_count(0.98, 100) == 98
    assert required_count(0.981, 100) == 99
    assert required_count(1.0, 7) == 7


def test_shell_lies_between_dilations(box_scene):
    sh = box_scene.shell
    assert sh.same_frame(box_scene.safegrid)
    assert not (sh.cells & box_scene.safegrid.cells).any()
    centers = sh.index_to_world(box_scene.shell_cells)
    assert (centers[:, 2] >= PARAMS.min_altitude).all()
    # every shell cell is within d_vis (plus a cell diagonal) of the box
    nearest = np.clip(centers, [0, 0, 0], [8, 8, 6])
    assert (np.linalg.norm(centers - nearest, axis=1) <= PARAMS.d_vis + np.sqrt(3)).all()


def test_assign_orientation_faces_visible_patch(box_mesh, box_scene):
    p = np.array([4.0, -5.0, 3.0])
    d = assign_orientation(p, box_mesh, box_scene.patches, 12)
    assert np.linalg.norm(d) == pytest.approx(1.0)
    assert d[1] > 0.5  # toward the -y face


def test_random_samples_in_shell(box_scene):
    pts = random_sample_viapoints(box_scene, 30, np.random.default_rng(1), start_id=5)
    assert [p.id for p in pts] == list(range(5, 35))
    for p in pts:
        assert box_scene.shell.occupied_at(p.position)
    assert random_sample_viapoints(box_scene, 0, np.random.default_rng(1)) == []


def test_dual_samples_see_their_targets(box_mesh, box_scene):
    rng = np.random.default_rng(3)
    unseen = [0, 5, 9]
    pts = dual_sample_viapoints(box_scene, unseen, 6, rng, CAM, attempts=40)
    assert len(pts) == 6
    for p in pts:
        assert box_scene.shell.occupied_at(p.position)
    with pytest.raises(ValueError):
        dual_sample_viapoints(box_scene, [], 1, rng, CAM)


def test_local_plan_straight_and_detour():
    cells = np.zeros((20, 20, 20), bool)
    cells[10, 2:18, 0:15] = True  # a wall with a gap above it
    grid = VoxelGrid(np.zeros(3), 1.0, cells)
    a = ViaPoint(0, np.array([3.5, 5.5, 5.5]), np.array([1.0, 0, 0]))
    b = ViaPoint(1, np.array([3.5, 12.5, 5.5]), np.array([1.0, 0, 0]))
    e = local_plan(a, b, grid, 30)
    assert len(e.polyline) == 2 and e.length == pytest.approx(7.0)

    c = ViaPoint(2, np.array([16.5, 5.5, 5.5]), np.array([1.0, 0, 0]))
    e = local_plan(a, c, grid, 40)
    assert e is not None and len(e.polyline) > 2
    assert np.allclose(e.polyline[0], a.position) and np.allclose(e.polyline[-1], c.position)
    assert e.length == pytest.approx(polyline_length(e.polyline)) and e.length <= 40
    for p0, p1 in zip(e.polyline, e.polyline[1:]):
        assert segment_collision_free(grid, p0, p1)
    assert local_plan(a, c, grid, 14) is None  # detour longer than the cap
    assert local_plan(a, c, grid, 5) is None  # straight-line distance already too long


def test_build_cprm_invariants(box_mesh, box_scene, box_build):
    graph, report = box_build
    assert graph.is_connected()
    assert report.n_nodes == graph.n and report.n_edges == len(graph.edges)
    assert report.nodes_before_restriction >= graph.n
    assert 0 < report.ceiling <= 1
    rng = np.random.default_rng(0)
    for eid in rng.choice(len(graph.edges), size=min(15, len(graph.edges)), replace=False):
        e = graph.edges[eid]
        assert e.length <= PARAMS.d_max + 1e-9
        assert e.length == pytest.approx(polyline_length(e.polyline))
        for p0, p1 in zip(e.polyline, e.polyline[1:]):
            assert segment_collision_free(box_scene.safegrid, p0, p1)
        bits = path_visibility(
            e.polyline, graph.nodes[e.u].orientation, graph.nodes[e.v].orientation,
            box_scene.patches, box_mesh, CAM, PARAMS.path_spacing,
        )
        assert bits == e.coverage


def test_build_is_deterministic(box_mesh, box_scene, box_build, tmp_path):
    again, _ = build_cprm(box_mesh, PARAMS, CAM, np.random.default_rng(0), scene=box_scene)
    save_cprm(box_build[0], tmp_path / "a.cprm")
    save_cprm(again, tmp_path / "b.cprm")
    assert (tmp_path / "a.cprm").read_bytes() == (tmp_path / "b.cprm").read_bytes()


def test_unreachable_target_lists_uncoverable_patches(box_mesh, box_scene):
    # the underside faces the ground and nothing above min_altitude sees it
    with pytest.raises(CPRMBuildError) as err:
        build_cprm(box_mesh, PARAMS, CAM, np.random.default_rng(0), delta_d=1.0, scene=box_scene)
    under = np.flatnonzero(box_scene.patches.normals[:, 2] < -0.5)
    assert set(under) <= set(err.value.uncoverable)


def test_no_iterations_when_nothing_required(box_mesh, box_scene):
    params = SamplingParams(
        d_vis=12, d_safe=2, d_max=10, m_min=box_scene.patches.m, n_desired=0,
        target_patch_area=6, initial_sample_count=10, min_altitude=1.0,
    )
    _, report = build_cprm(box_mesh, params, CAM, np.random.default_rng(0), scene=box_scene)
    assert report.iterations == 0 and report.nodes_before_restriction == 10


def test_mismatched_camera_rejected(box_mesh):
    with pytest.raises(ValueError):
        build_cprm(box_mesh, PARAMS, CameraModel(d_vis=20, d_safe=2))


def test_cprm_round_trip_is_exact(box_build, tmp_path):
    graph = box_build[0]
    save_cprm(graph, tmp_path / "g.cprm")
    back = load_cprm(tmp_path / "g.cprm")
    assert back.n == graph.n and len(back.edges) == len(graph.edges)
    assert back.edge_bits == graph.edge_bits and back.edge_length == graph.edge_length
    for a, b in zip(graph.nodes, back.nodes):
        assert np.array_equal(a.position, b.position) and np.array_equal(a.orientation, b.orientation)
    for a, b in zip(graph.edges, back.edges):
        assert np.array_equal(a.polyline, b.polyline)
    assert np.array_equal(back.mesh.vertices, graph.mesh.vertices)
    assert np.array_equal(back.patches.centroids, graph.patches.centroids)
    save_cprm(back, tmp_path / "h.cprm")
    assert (tmp_path / "g.cprm").read_bytes() == (tmp_path / "h.cprm").read_bytes()


def test_corrupt_cprm_file(tmp_path):
    p = tmp_path / "x.cprm"
    p.write_text("something else\n")
    with pytest.raises(ValueError):
        load_cprm(p)
    p.write_text("macpp-cprm 1\npatches 2\npatch 0 0 0 0 0 0 1 1.0 0\n")
    with pytest.raises(ValueError):
        load_cprm(p)


def test_largest_component_relabels():
    g = abstract_cprm(6, [(0, 1, 1.0, [0]), (3, 4, 1.0, [1]), (4, 5, 2.0, [2]), (3, 5, 1.0, [])], 3)
    h = largest_component(g)
    assert h.n == 3 and len(h.edges) == 3
    assert h.is_connected()
    assert sorted((e.u, e.v) for e in h.edges) == [(0, 1), (0, 2), (1, 2)]
    assert h.ceiling().indices() == [1, 2]


def test_graph_queries():
    g = abstract_cprm(3, [(2, 0, 1.5, [0]), (0, 1, 2.0, [1])], 2)
    assert g.neighbors[0] == [1, 2] and g.neighbor_edges[0] == [1, 0]
    assert g.edge_between(2, 0) == 0 and g.edge_between(1, 2) is None
    assert g.total_length() == 3.5 and g.degree(0) == 2
    assert g.edges[0].oriented(0)[0].tolist() == g.nodes[0].position.tolist()
    with pytest.raises(ValueError):
        g.edges[0].oriented(1)
    with pytest.raises(ValueError):
        CPRM(g.nodes, list(g.edges) + [PathPrimitive(0, 2, g.edges[0].polyline, 1.0, CoverageBits.empty(2))], g.patches)
