import math

import numpy as np
import pytest

from heisenberg_fujita.axial import AxialField
from heisenberg_fujita.hgroup import GroupPoint, compose, inverse
from heisenberg_fujita.semigroup import (ConfigurationError, DiscreteMeasure, Field, GridSpec,
                                         apply_to_measure, cfl_time_step, flow, frac_evolve, heat_evolve,
                                         heat_kernel, heat_kernel_axial, horizontal_brownian_endpoints,
                                         mc_heat_kernel, sample_on_grid, sublaplacian_apply)
from oracles import exact_heat_kernel, small_axial_grid

SMALL = GridSpec((3.0, 3.0, 6.0), (25, 25, 49))


def test_gridspec_validation():
    with pytest.raises(ValueError):
        GridSpec((1, 1, 1), (4, 5, 5))
    with pytest.raises(ValueError):
        GridSpec((1, -1, 1), (5, 5, 5))
    with pytest.raises(ValueError):
        GridSpec((1, 1), (5, 5))
    g = GridSpec((2, 2, 4), (5, 5, 9))
    assert g.spacings == (1.0, 1.0, 1.0)
    assert g.dilated(2.0).half_widths == (4.0, 4.0, 16.0)
    assert g.contains(GroupPoint([1.0], [-2.0], 4.0))
    assert not g.contains(GroupPoint([1.0], [-2.0], 4.5))


def test_field_validation():
    with pytest.raises(ValueError):
        Field(SMALL, np.zeros(10))
    with pytest.raises(ValueError):
        Field(SMALL, np.full(SMALL.points, np.inf))
    assert Field.delta(SMALL, 2.5).mass() == pytest.approx(2.5)


def test_snapshot_roundtrip(tmp_path):
    f = Field(SMALL, np.random.default_rng(1).random(SMALL.points))
    f.save(tmp_path / "u.bin")
    g = Field.load(tmp_path / "u.bin")
    assert g.spec == f.spec and np.array_equal(g.values, f.values)
    (tmp_path / "bad.bin").write_bytes(b"NOTAFIELD" + bytes(64))
    with pytest.raises(ValueError):
        Field.load(tmp_path / "bad.bin")


def test_csv_export(tmp_path):
    spec = GridSpec((1, 1, 1), (3, 3, 3))
    Field(spec, np.arange(27.0)).to_csv(tmp_path / "u.csv")
    rows = (tmp_path / "u.csv").read_text().splitlines()
    assert rows[0] == "x,y,tau,value" and len(rows) == 28
    assert [float(v) for v in rows[-1].split(",")] == [1.0, 1.0, 1.0, 26.0]


@pytest.mark.parametrize("f,expected", [
    (lambda X, Y, T: X ** 2, lambda X, Y, T: 2 + 0 * X),
    (lambda X, Y, T: T ** 2, lambda X, Y, T: 8 * (X ** 2 + Y ** 2)),
    (lambda X, Y, T: X * T, lambda X, Y, T: -4 * Y),
    (lambda X, Y, T: Y * T, lambda X, Y, T: 4 * X),
])
def test_stencil_is_exact_on_quadratics(f, expected):
    X, Y, T = SMALL.mesh()
    out = sublaplacian_apply(Field(SMALL, f(X, Y, T))).values
    inner = (slice(1, -1),) * 3
    assert np.allclose(out[inner], expected(X, Y, T)[inner], atol=1e-9)


def test_stencil_rejects_nonfinite():
    f = Field.zeros(SMALL)
    f.values[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        sublaplacian_apply(f)


@pytest.fixture(scope="module")
def radial_run():
    u = Field.from_function(SMALL, lambda X, Y, T: np.exp(-(X ** 2 + Y ** 2) - T ** 2 / 2))
    diag = {}
    return u, heat_evolve(u, 0.2, diagnostics=diag), diag


def test_heat_evolve_diagnostics(radial_run):
    _, v, diag = radial_run
    assert diag["dt"] <= cfl_time_step(SMALL) * (1 + 1e-12)
    assert diag["n_steps"] * diag["dt"] == pytest.approx(0.2)
    assert diag["min_before_clamp"] <= 0 and v.values.min() >= 0


def test_cartesian_flow_matches_axial_engine(radial_run):
    u, v, _ = radial_run
    grid = SMALL.axial_grid()
    eng = grid.engine()
    R, T = eng.rc[:, None], eng.tau[None, :]
    w = sample_on_grid(flow(AxialField(grid, np.exp(-R ** 2 - T ** 2 / 2)), 0.2), SMALL)
    X, Y, Tc = SMALL.mesh()
    inner = (np.abs(X) < 1.5) & (np.abs(Y) < 1.5) & (np.abs(Tc) < 3)
    assert np.abs(v.values - w.values)[inner].max() < 0.02 * w.values.max()


def test_cartesian_kernel_symmetry_is_truncation_level():
    # inversion flips the cross terms of the stencil, so only radial data stay symmetric, up to O(h^2)
    u = Field.from_function(SMALL, lambda X, Y, T: np.exp(-4 * ((X ** 2 + Y ** 2) ** 2 + T ** 2) ** 0.5))
    a = heat_evolve(u, 0.1)
    assert np.abs(a.values - a.inverted().values).max() < 0.02 * a.values.max()


def test_heat_evolve_checkpoints():
    spec = GridSpec((2, 2, 4), (9, 9, 17))
    u = Field.from_function(spec, lambda X, Y, T: np.exp(-X ** 2 - Y ** 2 - T ** 2))
    out = heat_evolve(u, 0.1, checkpoints=[0.05])
    assert len(out) == 2 and out[0].sup() >= out[1].sup()
    with pytest.raises(ValueError):
        heat_evolve(u, 0.0)


def test_large_box_refuses_tiny_cfl():
    u = Field.zeros(GridSpec((4000, 4000, 10), (5, 5, 2001)))
    with pytest.raises(ConfigurationError):
        heat_evolve(u, 1.0)


def test_frac_evolve_rejects_heat_case():
    g = small_axial_grid()
    with pytest.raises(ConfigurationError):
        frac_evolve(AxialField.delta(g), 1.0, 2.0)
    with pytest.raises(ValueError):
        frac_evolve(AxialField.delta(g), 0.0, 1.0)


def test_heat_kernel_on_cartesian_grid():
    spec = GridSpec((3, 3, 6), (13, 13, 25))
    K = heat_kernel(0.5, spec)
    c = tuple(n // 2 for n in spec.points)
    assert K.values[c] == pytest.approx(1 / 16.0, rel=0.02)
    assert np.allclose(K.values, K.inverted().values, rtol=1e-8, atol=0)


def test_measure_with_origin_atom_stays_axial():
    g = small_axial_grid()
    m = apply_to_measure(DiscreteMeasure(density=AxialField.delta(g, 0.0), atoms=[(GroupPoint.identity(), 2.0)]), 0.5)
    assert isinstance(m, AxialField)
    assert m.mass() == pytest.approx(2.0, rel=1e-4)


def test_off_origin_atom_is_translated_by_the_group_law():
    spec = GridSpec((4, 4, 8), (33, 33, 65))
    p = GroupPoint([0.5], [0.0], 0.0)
    m = apply_to_measure(DiscreteMeasure(atoms=[(p, 1.0)]), 0.5, spec=spec)
    assert m.mass() == pytest.approx(1.0, abs=0.01)
    for q in [GroupPoint([0.5], [0.0], 0.0), GroupPoint([1.0], [0.5], 0.5)]:
        z = compose(inverse(p), q)
        idx = tuple(int(round((c + R) / h)) for c, R, h in
                    zip((q.x[0], q.y[0], q.tau), spec.half_widths, spec.spacings))
        ref = exact_heat_kernel(math.hypot(z.x[0], z.y[0]), z.tau, 0.5)
        assert m.values[idx] == pytest.approx(ref, rel=0.01)


def test_measure_validation():
    with pytest.raises(ValueError):
        DiscreteMeasure(atoms=[(GroupPoint.identity(), -1.0)])
    with pytest.raises(ValueError):
        apply_to_measure(DiscreteMeasure(atoms=[(GroupPoint([1.0], [0.0], 0.0), 1.0)]), 0.5)
    with pytest.raises(ValueError):
        apply_to_measure(DiscreteMeasure(atoms=[(GroupPoint([9.0], [0.0], 0.0), 1.0)]), 0.5, spec=SMALL)


@pytest.fixture(scope="module")
def endpoints():
    return horizontal_brownian_endpoints(0.5, 200_000, seed=1)


def test_diffusion_moments(endpoints):
    # E[x^2] = 2t per horizontal coordinate; E[tau^2] = 16 t^2 for the area process
    x2 = endpoints[:, 0] ** 2
    t2 = endpoints[:, 2] ** 2
    assert x2.mean() == pytest.approx(1.0, abs=4 * x2.std() / math.sqrt(x2.size))
    assert t2.mean() == pytest.approx(4.0, abs=4 * t2.std() / math.sqrt(t2.size) + 0.02)


def test_sampler_is_deterministic_per_shard(endpoints):
    again = horizontal_brownian_endpoints(0.5, 200_000, seed=1)
    assert np.array_equal(endpoints, again)
    head = horizontal_brownian_endpoints(0.5, 1 << 15, seed=1)
    assert np.array_equal(head, endpoints[: 1 << 15])
    assert not np.array_equal(horizontal_brownian_endpoints(0.5, 1 << 15, seed=2), head)


def test_monte_carlo_density_near_origin(endpoints):
    est = mc_heat_kernel(GroupPoint.identity(), 0.5, samples=endpoints, rotational=True)
    # mass inside the 50-bandwidth box; the heavy tau tails leave a little outside
    assert 0.999 < est.smoothed_mass <= 1.0
    # the smoothing bandwidth lowers the peak slightly, so compare with a loose band
    assert est.estimate == pytest.approx(exact_heat_kernel(0.0, 0.0, 0.5), rel=0.1)
    with pytest.raises(ValueError):
        mc_heat_kernel(GroupPoint.identity(), 0.5, n_samples=100)
