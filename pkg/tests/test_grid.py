import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from ccbe.errors import ConfigurationError, DomainError
from ccbe.grid import (
    ABOVE,
    BELOW,
    TruncationConfig,
    build_grid,
    cell_weight_integral,
    default_v_min,
    locate,
    power_integrals,
    weight_integrals,
)

grids = st.builds(
    build_grid,
    n=st.floats(1.5, 500.0),
    cells=st.integers(8, 300),
    v_min=st.floats(1e-6, 0.5),
)


def test_ratio_example():
    g = build_grid(10.0, 100, 1e-3)
    assert g.ratio == pytest.approx(1.0964781961431851, rel=1e-14)
    assert g.cells == 100 and g.edges.size == 101


def test_endpoints_exact():
    g = build_grid(10.0, 37, 3e-4)
    assert g.edges[0] == 3e-4 and g.edges[-1] == 10.0


def test_default_v_min_below_cutoff():
    for n in (0.5, 2.0, 10.0, 1e4, 1e6):
        assert default_v_min(n) < 1.0 / n
    assert build_grid(10.0, 64).v_min == 1e-4


@pytest.mark.parametrize("kw", [dict(n=10.0, cells=7), dict(n=1.0, cells=16, v_min=1.0), dict(n=1.0, cells=16, v_min=-1.0)])
def test_rejects(kw):
    with pytest.raises(ConfigurationError):
        build_grid(**kw)


def test_truncation_config():
    t = TruncationConfig(8.0, 0)
    assert t.cutoff_low == 1.0 / 8.0
    with pytest.raises(ConfigurationError):
        TruncationConfig(8.0, 2)


def test_locate_examples():
    g = build_grid(10.0, 64)
    assert locate(g, g.v_min) == 0
    assert locate(g, 10.0) == ABOVE
    assert locate(g, 0.5 * g.v_min) == BELOW
    assert locate(g, g.reps[5]) == 5


def test_grid_is_read_only():
    g = build_grid(10.0, 16)
    with pytest.raises(ValueError):
        g.edges[3] = 1.0


def test_cell_weight_examples():
    g = build_grid(4.0, 8, 0.5)
    assert cell_weight_integral(g, 2, 0.0) == pytest.approx(g.widths[2])
    assert float(power_integrals(1.0, 2.0, 1.0)) == pytest.approx(1.5)
    assert float(power_integrals(1.0, 4.0, -0.5)) == pytest.approx(2.0)
    ref, _ = quad(lambda v: v**-0.5, 1.0, 4.0)
    assert float(power_integrals(1.0, 4.0, -0.5)) == pytest.approx(ref, rel=1e-12)
    with pytest.raises(DomainError):
        cell_weight_integral(g, 0, -1.0)


@settings(max_examples=60, deadline=None)
@given(grids)
def test_invariants(g):
    assert np.all(np.diff(g.edges) > 0)
    assert np.all((g.reps > g.edges[:-1]) & (g.reps < g.edges[1:]))
    assert g.widths.sum() == pytest.approx(g.n - g.v_min, rel=1e-12)
    assert [locate(g, x) for x in g.reps] == list(range(g.cells))
    assert weight_integrals(g, 1.0).sum() == pytest.approx((g.n**2 - g.v_min**2) / 2, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(grids)
def test_refinement_keeps_endpoints(g):
    fine = build_grid(g.n, 2 * g.cells, g.v_min)
    assert fine.edges[0] == g.edges[0] and fine.edges[-1] == g.edges[-1]
    # every coarse edge is (numerically) a fine edge
    assert np.allclose(fine.edges[::2], g.edges, rtol=1e-12)
