"""Grid arithmetic: cell location, periodic wrap, CFL time step."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from slar.mesh import BoundaryRule, PhaseGrid, UniformGrid1D, time_step_from_cfl


def test_basic_geometry():
    g = UniformGrid1D(8, 0.0, 2.0)
    assert g.delta == 0.25
    assert g.length == 2.0
    assert g.centers[0] == pytest.approx(0.125)
    assert g.centers[-1] == pytest.approx(1.875)


def test_rejects_degenerate():
    with pytest.raises(ValueError):
        UniformGrid1D(0, 0.0, 1.0)
    with pytest.raises(ValueError):
        UniformGrid1D(4, 1.0, 1.0)


def test_locate_interior_points():
    g = UniformGrid1D(10, 0.0, 1.0)
    i, frac = g.locate(np.array([0.05, 0.55, 0.95]))
    assert list(i) == [0, 5, 9]
    np.testing.assert_allclose(frac, 0.0, atol=1e-12)


def test_locate_offsets_are_half_cell_bounded():
    g = UniformGrid1D(16, -1.0, 1.0)
    pts = np.linspace(-0.999, 0.999, 101)
    i, frac = g.locate(pts)
    assert np.all(np.abs(frac) <= 0.5 + 1e-12)
    recon = g.lo + (i + 0.5 + frac) * g.delta
    np.testing.assert_allclose(recon, pts, atol=1e-12)


def test_locate_snaps_near_ties():
    # a foot within 1e-9 cells of a face must not flip the host cell by
    # roundoff; either neighbor is acceptable but the offset stays bounded
    g = UniformGrid1D(8, 0.0, 8.0)
    x = np.array([1.0 - 1e-12, 1.0 + 1e-12])
    i, frac = g.locate(x)
    assert np.all(np.abs(frac) <= 0.5 + 1e-9)


def test_wrap_periodic():
    g = UniformGrid1D(8, 0.0, 2 * np.pi)
    assert g.wrap(2 * np.pi + 0.1) == pytest.approx(0.1)
    assert g.wrap(-0.1) == pytest.approx(2 * np.pi - 0.1)
    assert g.wrap_index(9) == 1
    assert g.wrap_index(-1) == 7


def test_phase_grid_shape_and_area():
    pg = PhaseGrid(UniformGrid1D(8, 0.0, 1.0), UniformGrid1D(4, 0.0, 2.0),
                   BoundaryRule.PERIODIC, BoundaryRule.ZERO)
    assert pg.shape == (8, 4)
    assert pg.cell_area == pytest.approx(0.125 * 0.5)


def test_time_step_from_cfl_arithmetic():
    # cfl=10, amax=2*pi, per the strong-Landau 256^2 grid
    dx = 4 * np.pi / 256
    dv = 4 * np.pi / 256
    bmax = 0.5
    dt = time_step_from_cfl(10.0, 2 * np.pi, bmax, dx, dv)
    assert dt == pytest.approx(10.0 / (2 * np.pi / dx + bmax / dv))


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_locate_roundtrip_property(x):
    g = UniformGrid1D(32, -3.0, 5.0)
    xx = g.wrap(np.array([x]))
    i, frac = g.locate(xx)
    assert 0 <= i[0] < 32
    recon = g.lo + (i[0] + 0.5 + frac[0]) * g.delta
    assert abs(recon - xx[0]) < 1e-10
