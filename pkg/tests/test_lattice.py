from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qlbm.lattice import (
    DensityField,
    Grid,
    KField,
    VelocityField,
    check_stochastic_consistency,
    classical_step,
    compute_k_field,
    evolve,
    gaussian_values,
    initial_field,
    make_model,
    read_field_csv,
    shift,
    write_field_csv,
)

MODELS = ["D2Q5", "D2Q9", "D3Q7", "D3Q19", "D3Q27"]


@pytest.mark.parametrize("name", MODELS)
def test_model_weights_and_isotropy(name):
    m = make_model(name)
    assert sum(m.weights) == 1
    c = m.c.astype(float)
    # first and second moments of the weights: sum w c = 0, sum w c c = cs2 I
    assert np.allclose(m.w @ c, 0)
    second = np.einsum("i,ia,ib->ab", m.w, c, c)
    # D3Q7 weights are pinned by its |k0> state and give 1/4 rather than cs2
    expected = 0.25 if name == "D3Q7" else float(m.cs2)
    assert np.allclose(second, expected * np.eye(m.d))
    assert m.velocities[0] == (0,) * m.d
    for i, j in m.pairs():
        assert np.array_equal(m.c[i], -m.c[j])


def test_d3q7_ordering_and_weights():
    m = make_model("D3Q7")
    assert m.velocities == ((0, 0, 0), (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    assert m.weights[0] == Fraction(1, 4) and m.weights[1] == Fraction(1, 8)
    assert m.n_dense == 3


def test_unknown_model():
    with pytest.raises(ValueError):
        make_model("D4Q9")


def test_grid_validation_and_offsets():
    g = Grid((8, 16))
    assert g.axis_qubits == (3, 4) and g.n_qubits == 7
    assert g.axis_offset(1) == 0 and g.axis_offset(0) == 4
    with pytest.raises(ValueError):
        Grid((6, 8))


def test_k_uniform_values():
    m = make_model("D2Q5")
    kf = compute_k_field(m, VelocityField.uniform((0.125, 0.125)), Grid((4, 4)))
    k = kf.at(0)
    expected = [1 / 3, 1 / 6 * (1 + 0.375), 1 / 6 * (1 - 0.375), 1 / 6 * (1 + 0.375), 1 / 6 * (1 - 0.375)]
    assert np.allclose(k, expected)
    assert kf.is_uniform


def test_k_negative_raises_with_site():
    with pytest.raises(ValueError, match="site"):
        compute_k_field(make_model("D2Q5"), VelocityField.uniform((0.5, 0.0)), Grid((4, 4)))


def test_swirl3d_k_at_origin():
    m = make_model("D3Q7")
    kf = compute_k_field(m, VelocityField.swirl3d(), Grid((8, 8, 8)))
    # x = y = z = 0: u = (0, 1/3, 0)
    assert np.allclose(kf.at(0), [0.25, 0.125, 0.125, 0.25, 0.0, 0.125, 0.125])


def test_consistency_checks():
    m = make_model("D3Q7")
    g = Grid((8, 8, 8))
    rep = check_stochastic_consistency(compute_k_field(m, VelocityField.swirl3d(), g), m)
    assert rep.passed and rep.max_deviation <= 1e-12
    g2 = Grid((8, 8))
    table = np.zeros((2, 8, 8))
    table[0] = 0.1 * np.cos(2 * np.pi * np.arange(8) / 8)[:, None]
    rep = check_stochastic_consistency(compute_k_field(make_model("D2Q5"), VelocityField.custom(table), g2),
                                       make_model("D2Q5"))
    assert not rep.passed and rep.max_deviation > 0 and rep.failing_sites


def test_shift_direction():
    a = np.arange(8.0)
    assert shift(a, (1,))[1] == a[0]


def _brute_step(phi, k, model):
    out = np.zeros_like(phi)
    for x in np.ndindex(phi.shape):
        for i, c in enumerate(model.velocities):
            src = tuple((xi - ci) % s for xi, ci, s in zip(x, c, phi.shape))
            out[x] += k[i][src] * phi[src]
    return out


@pytest.mark.parametrize("name,shape,vel", [
    ("D2Q5", (4, 8), VelocityField.uniform((0.1, -0.2))),
    ("D2Q9", (4, 4), VelocityField.uniform((0.05, 0.1))),
    ("D2Q5", (8, 8), VelocityField.swirl2d()),
    ("D3Q7", (4, 4, 4), VelocityField.swirl3d()),
])
def test_classical_step_matches_site_loop(name, shape, vel):
    m, g = make_model(name), Grid(shape)
    kf = compute_k_field(m, vel, g)
    phi = np.random.default_rng(0).random(shape) + 0.1
    out = classical_step(DensityField(phi, g), kf, m).values
    assert np.allclose(out, _brute_step(phi, kf.values, m), atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_mass_positivity_equivariance(seed, ux, uy):
    m, g = make_model("D2Q5"), Grid((8, 8))
    kf = compute_k_field(m, VelocityField.uniform((ux, uy)), g)
    phi = np.random.default_rng(seed).random((8, 8))
    phi[0, 0] += 0.1
    f = DensityField(phi, g)
    out = classical_step(f, kf, m)
    assert abs(out.values.sum() - phi.sum()) <= 1e-10 * phi.sum()
    assert np.all(out.values >= 0)
    shifted = classical_step(DensityField(shift(phi, (2, 3)), g), kf, m).values
    assert np.allclose(shifted, shift(out.values, (2, 3)), atol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_pure_diffusion_norm_decreases(seed):
    m, g = make_model("D2Q9"), Grid((8, 8))
    kf = compute_k_field(m, VelocityField.uniform((0.0, 0.0)), g)
    f = DensityField(np.random.default_rng(seed).random((8, 8)) + 1e-3, g)
    seq = evolve(f, kf, m, 3)
    norms = [s.norm for s in seq]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_initial_fields():
    g3 = Grid((8, 8, 8))
    f = initial_field("sin3d", g3)
    assert f.values[2, 2, 2] == pytest.approx(2.0)
    assert np.all(f.values >= 0)
    g2 = Grid((16, 16))
    assert np.allclose(initial_field("sin2d", g2).values[0], 1.0)
    gauss = initial_field("gaussian", g2, mean=(7, 9), cov=4.0)
    assert np.unravel_index(np.argmax(gauss.values), g2.shape) == (7, 9)
    with pytest.raises(ValueError):
        initial_field("sin2d", g3)


def test_gaussian_rejects_non_pd():
    with pytest.raises(ValueError):
        gaussian_values(Grid((8, 8)), (4, 4), [[1, 2], [2, 1]])


def test_density_field_validation():
    g = Grid((4, 4))
    with pytest.raises(ValueError):
        DensityField(np.zeros((4, 4)), g)
    with pytest.raises(ValueError):
        DensityField(-np.ones((4, 4)), g)


def test_csv_round_trip(tmp_path):
    g = Grid((4, 8))
    f = DensityField(np.random.default_rng(2).random((4, 8)), g)
    p = tmp_path / "f.csv"
    write_field_csv(f, p)
    assert p.read_text().startswith("# dims=4,8\n")
    back = read_field_csv(p)
    assert np.array_equal(back.values, f.values)


def test_kfield_helpers():
    kf = KField(np.ones((5, 4, 4)) / 5, Grid((4, 4)))
    assert kf.is_uniform and kf.at(3).shape == (5,)
