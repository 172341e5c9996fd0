import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fichera.geometry import (Geometry2D, Geometry3D, GradingSpec, MeshError, build_guide_mesh,
                              build_layer_grid, build_mixed_square_mesh,
                              build_quarter_disk_mesh, build_reference_guide_mesh,
                              check_jacobians, cross_subdivision, default_bc, domain_measure,
                              layer_subdivision, map_quad, map_reference_to_physical,
                              read_mesh_dump)

KINDS_2D = ["broken-guide", "rounded-guide", "scaled-broken-guide"]


@given(st.sampled_from(KINDS_2D), st.floats(0.3, 15.0), st.integers(0, 4),
       st.sampled_from([2, 4]))
@settings(max_examples=25, deadline=None)
def test_guide_area_identity(kind, R, layers, base):
    m = build_guide_mesh(Geometry2D(kind, R), GradingSpec(layers, 0.1), base)
    assert abs(m.element_measures().sum() - domain_measure(kind, R)) < 1e-12 * (2 * R + 1)


@pytest.mark.parametrize("kind", KINDS_2D)
def test_guide_tags_and_jacobians(kind):
    m = build_guide_mesh(Geometry2D(kind, 3.0), GradingSpec(4, 0.1), 2)
    check_jacobians(m)
    assert {"outer", "inner", "sigma1", "sigma2"} <= set(m.tags()) | {"outer"}
    bc = default_bc(kind, "N")
    assert bc["sigma1"] == "N" and bc["inner"] == "D"


def test_rounded_arc_is_exact():
    m = build_guide_mesh(Geometry2D("rounded-guide", 2.0), GradingSpec(2, 0.1), 2)
    t = np.linspace(-1, 1, 9)
    for k, tag in enumerate(m.facet_tags):
        if tag != "outer":
            continue
        e, f = m.facets[k]
        if m.mapping[e] != "polar":
            continue
        xi, eta = {0: (t, -np.ones_like(t)), 1: (np.ones_like(t), t),
                   2: (t, np.ones_like(t)), 3: (-np.ones_like(t), t)}[f]
        x, _ = map_quad(m, e, xi, eta)
        r = np.hypot(x[:, 0], x[:, 1])
        if np.all((x[:, 0] < 1e-14) & (x[:, 1] < 1e-14)):
            np.testing.assert_allclose(r, 1.0, atol=1e-14)


def test_quarter_disk_area():
    m = build_quarter_disk_mesh(GradingSpec(4, 0.1), 4)
    assert abs(m.element_measures().sum() - math.pi / 4) < 1e-13
    assert set(m.tags()) == {"arc", "side1", "side2"}


def test_mixed_square():
    m = build_mixed_square_mesh(0.5, GradingSpec(2, 0.1), 2)
    assert abs(m.element_measures().sum() - 0.25) < 1e-14


def test_reference_maps_to_physical():
    ref = build_reference_guide_mesh(GradingSpec(4, 0.1), 2)
    phys = map_reference_to_physical(ref, 7.0)
    assert abs(phys.element_measures().sum() - 15.0) < 1e-12


def test_layer_subdivision_and_volume():
    S = layer_subdivision(10.0)
    assert S[0] == -1 and S[-1] == 10 and 0.0 in S
    assert len(layer_subdivision(10.0, 2)) == 2 * len(S) - 1
    for kind, R in [("fichera-layer", 2.0), ("fichera-layer", 7.5), ("scaled-fichera-layer", 0.5),
                    ("scaled-fichera-layer", 8.0)]:
        m = build_layer_grid(Geometry3D(kind, R))
        assert abs(m.element_measures().sum() - domain_measure(kind, R)) < 1e-11 * R**2
    with pytest.raises(MeshError):
        layer_subdivision(1.5)


def test_cross_subdivision_drops_points_beyond_R():
    assert cross_subdivision(8.0) == [-0.5, -0.05, 0.0, 0.1, 1.0, 4.0, 8.0]
    assert cross_subdivision(0.5) == [-0.5, -0.05, 0.0, 0.1, 0.5]
    S = cross_subdivision(3.0)
    assert S == sorted(set(S)) and S[-1] == 3.0


def test_mesh_dump_roundtrip():
    m = build_guide_mesh(Geometry2D("rounded-guide", 2.0), GradingSpec(1, 0.1), 2)
    buf = io.StringIO()
    m.dump(buf)
    buf.seek(0)
    dim, nodes, elems, codes, facets = read_mesh_dump(buf)
    assert dim == 2
    np.testing.assert_array_equal(nodes, m.nodes)
    np.testing.assert_array_equal(elems, m.elements)
    assert len(facets) == len(m.facets)
    buf2 = io.StringIO()
    m.dump(buf2)
    assert buf.getvalue() == buf2.getvalue()


def test_invalid_geometry():
    with pytest.raises(Exception):
        Geometry2D("broken-guide", -1.0)
    with pytest.raises(Exception):
        GradingSpec(2, 1.5)
