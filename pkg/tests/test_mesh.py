import numpy as np
import pytest

from lutpoint.errors import OFFParseError
from lutpoint.mesh import TriangleMesh, parse_off, sample_surface

TRIANGLE = b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n"


def test_minimal_off():
    mesh = parse_off(TRIANGLE)
    assert mesh.vertices.shape == (3, 3)
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_fused_modelnet_header():
    mesh = parse_off(b"OFF3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")
    assert mesh.faces.tolist() == [[0, 1, 2]]


def test_quad_is_fan_triangulated():
    src = "OFF\n4 1 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n"
    assert parse_off(src).faces.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_comments_and_blank_lines():
    src = b"OFF\n# a comment\n\n3 1 0\n0 0 0  # origin\n1 0 0\n\n0 1 0\n3 0 1 2 255 0 0\n"
    assert parse_off(src).faces.tolist() == [[0, 1, 2]]


def test_face_index_out_of_range_names_line():
    src = b"OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n"
    with pytest.raises(OFFParseError) as exc:
        parse_off(src)
    assert exc.value.line == 6
    assert "line 6" in str(exc.value)


def test_malformed_counts():
    with pytest.raises(OFFParseError) as exc:
        parse_off(b"OFF\nthree 1 0\n")
    assert exc.value.line == 2


def test_truncated_stream():
    with pytest.raises(OFFParseError, match="unexpected end"):
        parse_off(TRIANGLE[:-8])


def test_missing_header():
    with pytest.raises(OFFParseError):
        parse_off(b"PLY\n")


def test_samples_lie_in_triangle_plane():
    mesh = TriangleMesh([[0, 0, 0], [2, 0, 1], [0, 3, 1]], [[0, 1, 2]])
    pts = sample_surface(mesh, 1000, seed=4)
    a, b, c = mesh.vertices
    # solve for barycentric coordinates in the triangle's own frame
    basis = np.column_stack([b - a, c - a])
    uv, *_ = np.linalg.lstsq(basis, (pts - a).T, rcond=None)
    bary = np.vstack([1 - uv.sum(axis=0), uv])
    np.testing.assert_allclose(bary.sum(axis=0), 1.0)
    assert bary.min() >= -1e-12
    np.testing.assert_allclose(basis @ uv + a[:, None], pts.T, atol=1e-12)


def test_area_proportional_sampling():
    # areas 1 and 3; binomial(40000, 0.75) has sigma ~86.6, 5 sigma < 600
    mesh = TriangleMesh([[0, 0, 0], [2, 0, 0], [0, 1, 0],
                         [10, 0, 0], [16, 0, 0], [10, 1, 0]],
                        [[0, 1, 2], [3, 4, 5]])
    np.testing.assert_allclose(mesh.triangle_areas(), [1, 3])
    pts = sample_surface(mesh, 40000, seed=0)
    assert len(pts) == 40000
    assert abs(int((pts[:, 0] >= 10).sum()) - 30000) <= 600


def test_sampling_is_deterministic():
    mesh = parse_off(TRIANGLE)
    np.testing.assert_array_equal(sample_surface(mesh, 77, 9), sample_surface(mesh, 77, 9))


def test_zero_area_faces_dropped_with_warning():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], [[0, 1, 2], [0, 1, 3]])
    with pytest.warns(UserWarning, match="zero-area"):
        pts = sample_surface(mesh, 10, 0)
    assert len(pts) == 10


def test_zero_total_area():
    mesh = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
    with pytest.raises(ValueError, match="zero total"), pytest.warns(UserWarning):
        sample_surface(mesh, 10, 0)
