import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from structadapt.errors import ConfigurationError, DomainError
from structadapt.kernels import make_kernel
from structadapt.model import (IndexVector, ObservationField, TargetFunction, admissible_epsilon_bound,
                               cell_centers, cell_normals, function_library, holder_seminorm_check,
                               simulate, simulate_batch)


def _target(name="cusp", params=(0.5, 1.0), deg=30.0):
    return TargetFunction(function_library(name, params), IndexVector.from_degrees(deg))


def test_cell_centres_cover_the_square_symmetrically():
    t = cell_centers(64)
    assert t[0] == pytest.approx(-1 + 1 / 64) and t[-1] == pytest.approx(1 - 1 / 64)
    assert np.allclose(t, -t[::-1])


def test_seed_reproducibility_and_distinctness():
    tg = _target()
    a = simulate(tg, 0.1, 64, 7)
    b = simulate(tg, 0.1, 64, 7)
    c = simulate(tg, 0.1, 64, 8)
    assert a == b
    assert not np.array_equal(a.increments, c.increments)


def test_increments_are_read_only():
    f = simulate(_target(), 0.1, 64, 1)
    with pytest.raises(ValueError):
        f.increments[0, 0] = 1.0


def test_noise_law():
    # F = 0: increments / (eps delta) are iid standard normal
    f = simulate(_target("constant", (0.0,)), 0.2, 256, 11)
    z = f.increments / (0.2 * f.delta)
    assert abs(z.mean()) < 4 / 256
    assert z.var() == pytest.approx(1.0, abs=4 * math.sqrt(2 / 256**2))


def test_signal_part_is_riemann_cell_mass():
    tg = _target("cosine", (4.0, 1.0))
    f = simulate(tg, 1e-12, 64, 3)
    t = cell_centers(64)
    expect = tg(np.stack(np.meshgrid(t, t, indexing="ij"), -1)) * f.delta**2
    assert np.allclose(f.increments, expect, atol=1e-13)


def test_noise_depends_only_on_seed_and_cell():
    z1 = cell_normals(5, 64)
    z2 = cell_normals(5, 64)
    assert np.array_equal(z1, z2)


def test_batch_slices_equal_single_simulations():
    tg = _target()
    Y = simulate_batch(tg, 0.05, 64, [3, 4])
    assert np.array_equal(Y[:, :, 1], simulate(tg, 0.05, 64, 4).increments)


@pytest.mark.parametrize("n,eps", [(32, 0.1), (64, 0.0), (64, 1.0), (64, -0.1)])
def test_invalid_simulation_arguments(n, eps):
    with pytest.raises(ConfigurationError):
        simulate(_target(), eps, n, 0)


def test_binary_round_trip(tmp_path):
    f = simulate(_target(), 0.1, 64, 9)
    p = tmp_path / "field.bin"
    f.write_binary(p)
    g = ObservationField.read_binary(p)
    assert g == f
    assert p.stat().st_size == 24 + 8 * 64 * 64


def test_binary_rejects_truncated_payload():
    raw = simulate(_target(), 0.1, 64, 9).to_bytes()
    with pytest.raises(ValueError):
        ObservationField.from_bytes(raw[:-8])


def test_csv_export(tmp_path):
    f = simulate(_target(), 0.1, 64, 9)
    p = tmp_path / "field.csv"
    f.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "i,j,t1,t2,increment"
    assert len(lines) == 64 * 64 + 1
    i, j, t1, t2, v = lines[1 + 65].split(",")
    assert (int(i), int(j)) == (1, 1)
    assert float(v) == f.increments[1, 1]


def test_admissible_bound_values():
    k = make_kernel(1)
    assert admissible_epsilon_bound(1.0, k) == pytest.approx(math.exp(-1))
    assert admissible_epsilon_bound(2.0, k) == pytest.approx(math.exp(-4))


def test_index_vector_normalisation_and_flip():
    v = IndexVector(-math.pi / 2)
    assert v.angle == pytest.approx(3 * math.pi / 2)
    assert np.allclose(v.flipped().components, -v.components)
    w = IndexVector.from_components(1.0, 1.0)
    assert math.degrees(w.angle) == pytest.approx(45.0)


def test_library_rejects_unknown_names_and_arity():
    with pytest.raises(ConfigurationError):
        function_library("sawtooth", ())
    with pytest.raises(ConfigurationError):
        function_library("cusp", (0.5,))
    with pytest.raises(DomainError):
        function_library("cusp", (1.5, 1.0))


@pytest.mark.parametrize("name,params", [
    ("constant", (0.7,)), ("cosine", (4.0, 1.0)), ("cusp", (0.5, 1.0)), ("cusp", (1.0, 2.0)),
    ("bump", (0.0, 0.2, 1.0)), ("ramp", (0.1,)),
])
def test_library_bounds_hold(name, params):
    f = function_library(name, params)
    u = np.linspace(-3, 3, 60001)
    assert np.max(np.abs(f(u))) <= f.bound_M + 1e-12


@pytest.mark.parametrize("beta", [0.5, 0.8, 1.0])
def test_cusp_hoelder_constant(beta):
    f = function_library("cusp", (beta, 1.0))
    ratio = holder_seminorm_check(f, beta, 1e-3)
    assert ratio <= 1.0 + 1e-6
    assert ratio > 0.95


def test_ramp_and_cosine_are_lipschitz_in_derivative():
    ramp = function_library("ramp", (0.1,))
    assert holder_seminorm_check(ramp, 2.0, 2e-3) <= ramp.L * (1 + 1e-3)
    cos = function_library("cosine", (4.0, 1.0))
    assert holder_seminorm_check(cos, 2.0, 2e-3) <= cos.L * (1 + 1e-3)


def test_hoelder_check_refuses_high_order():
    with pytest.raises(DomainError):
        holder_seminorm_check(function_library("cosine", (1.0, 1.0)), 2.5, 0.01)


@settings(max_examples=40, deadline=None)
@given(deg=st.floats(0, 360), x1=st.floats(-1, 1), x2=st.floats(-1, 1))
def test_target_depends_on_index_projection_only(deg, x1, x2):
    tg = _target("cosine", (3.0, 1.0), deg)
    th = tg.index.components
    y = x1 * th[0] + x2 * th[1]
    assert float(tg(np.array([x1, x2]))) == pytest.approx(math.cos(3.0 * y), abs=1e-12)
    # moving along the orthogonal direction leaves F unchanged
    shifted = np.array([x1, x2]) + 0.3 * np.array([-th[1], th[0]])
    assert float(tg(shifted)) == pytest.approx(float(tg(np.array([x1, x2]))), abs=1e-12)
