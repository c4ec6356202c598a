"""Flat-limit metrics, the eps sweep, scaling equivalences, boundary layers."""

import numpy as np
import pytest

from pfiber.asymptotics import (
    asymptotic_metrics,
    composite_approx_1d,
    epsilon_sweep,
    layer_profile_1d,
    limit_profile,
    scale_solution,
    scaled_problem,
    separation_constant,
)
from pfiber.errors import HypothesisViolation, InputError
from pfiber.functionals import energy_components, weak_residual
from pfiber.problem import (
    DiscreteField,
    Exponents,
    ProblemSpec,
    build_mesh,
    constant_coefficient,
    make_field,
)
from pfiber.solver import solve_ground_state

ONE = constant_coefficient(1.0)
EX = Exponents(2.0, 3.0, 4.0)


def model_spec(n=201, epsilon=1e-3):
    mesh = build_mesh((0.0, 1.0), n)
    return ProblemSpec(mesh, EX, epsilon, ONE, ONE)


def random_zero_trace(spec, rng, lo=0.0, hi=2.0):
    vals = rng.uniform(lo, hi, spec.mesh.n_nodes)
    vals[spec.mesh.boundary_nodes] = 0.0
    return DiscreteField(spec.mesh, vals)


# -- limit_profile ------------------------------------------------------------


def test_limit_profile_balanced_coefficients():
    spec = model_spec(n=31)
    prof = limit_profile(spec)
    np.testing.assert_array_equal(prof.field.values, np.ones(31))
    assert prof.rho_minus == prof.rho_plus == 1.0


def test_limit_profile_ratio_two():
    mesh = build_mesh((0.0, 1.0), 31)
    spec = ProblemSpec(mesh, EX, 1e-3, constant_coefficient(2.0), ONE)
    prof = limit_profile(spec)
    np.testing.assert_allclose(prof.field.values, 2.0, rtol=1e-15)


def test_limit_profile_solves_pointwise_balance():
    mesh = build_mesh((0.0, 1.0), 81)
    from pfiber.problem import bump_coefficient

    a = bump_coefficient(1.0, 0.5, (0.0, 1.0))
    b = bump_coefficient(1.0, 0.25, (0.0, 1.0))
    spec = ProblemSpec(mesh, EX, 1e-3, a, b)
    prof = limit_profile(spec)
    assert np.all(prof.field.values >= prof.rho_minus - 1e-12)
    assert np.all(prof.field.values <= prof.rho_plus + 1e-12)
    tol = 1e-10 * (1.0 + spec.b.upper * prof.rho_plus ** (EX.gamma - 1.0))
    assert prof.equation_residual_max <= tol
    residual = np.abs(spec.a_nodes * prof.field.values ** (EX.q - 1.0)
                      - spec.b_nodes * prof.field.values ** (EX.gamma - 1.0))
    assert residual.max() <= tol


def test_limit_profile_needs_positive_gain():
    mesh = build_mesh((0.0, 1.0), 21)
    spec = ProblemSpec(mesh, EX, 1e-3, constant_coefficient(0.0), ONE)
    with pytest.raises(HypothesisViolation):
        limit_profile(spec)


# -- asymptotic_metrics -------------------------------------------------------


def test_metrics_vanish_on_the_profile_itself():
    spec = model_spec(n=61)
    prof = limit_profile(spec)
    m = asymptotic_metrics(prof.field, prof, spec, eta=0.1)
    assert m.measure_bad == 0.0
    assert all(err == 0.0 for _, err in m.lr_errors)
    assert m.J_gap == 0.0


def test_metrics_on_zero_field():
    """|0 - 1| = 1 >= eta everywhere: the bad set is the whole interval."""
    spec = model_spec(n=61)
    prof = limit_profile(spec)
    z = make_field(spec.mesh, lambda x: np.zeros_like(x))
    m = asymptotic_metrics(z, prof, spec, eta=0.5)
    assert m.measure_bad == pytest.approx(1.0, abs=1e-12)
    assert m.limit_value == pytest.approx(-1.0 / 12.0, abs=1e-13)


def test_metrics_input_validation():
    spec = model_spec(n=21)
    prof = limit_profile(spec)
    u = prof.field
    with pytest.raises(InputError):
        asymptotic_metrics(u, prof, spec, eta=0.0)
    with pytest.raises(InputError, match="strong"):
        asymptotic_metrics(u, prof, spec, r_list=(1.0, 4.0))
    with pytest.raises(InputError):
        asymptotic_metrics(u, prof, spec, r_list=(0.5,))


def test_gap_identities_on_random_fields():
    """J_gap is bounded below by 0; the energy adds exactly (eps/p) T on top."""
    spec = model_spec(n=81)
    prof = limit_profile(spec)
    rng = np.random.default_rng(50)
    for _ in range(50):
        u = random_zero_trace(spec, rng)
        m = asymptotic_metrics(u, prof, spec)
        assert m.J_gap >= -1e-10
        comps = energy_components(u, spec)
        gradient_part = (spec.epsilon / EX.p) * comps.dirichlet
        assert m.energy_gap - m.J_gap == pytest.approx(gradient_part, rel=1e-12)
        assert m.energy_gap >= m.J_gap - 1e-10


# -- separation_constant ------------------------------------------------------


def test_separation_constant_positive_and_monotone_in_eta():
    kappas = [separation_constant(EX, 1.0, 1.0, 1.0, 1.0, eta)
              for eta in (0.05, 0.1, 0.2)]
    assert all(k > 0.0 for k in kappas)
    # Wider tubes exclude more of the well, so the floor can only rise.
    assert kappas[0] <= kappas[1] <= kappas[2]


def test_separation_constant_presets():
    presets = [(1.0, 1.0, 1.0, 1.0), (1.0, 2.0, 1.0, 1.0), (0.5, 1.5, 0.5, 2.0)]
    for box in presets:
        for eta in (0.05, 0.1, 0.2):
            assert separation_constant(EX, *box, eta) > 0.0


def test_separation_constant_input_checks():
    with pytest.raises(InputError):
        separation_constant(EX, 1.0, 1.0, 1.0, 1.0, 0.0)
    with pytest.raises(InputError):
        separation_constant(EX, 0.0, 1.0, 1.0, 1.0, 0.1)
    with pytest.raises(InputError):
        separation_constant(EX, 1.0, 1.0, 0.0, 1.0, 0.1)
    with pytest.raises(InputError):
        separation_constant(EX, 2.0, 1.0, 1.0, 1.0, 0.1)


def test_separation_bound_against_measured_gaps():
    """kappa * meas{|u - limit| >= eta} <= J(u) - J(limit) on random fields."""
    spec = model_spec(n=201)
    prof = limit_profile(spec)
    kappa = separation_constant(EX, 1.0, 1.0, 1.0, 1.0, 0.1)
    for i in range(100):
        rng = np.random.default_rng(i)
        u = random_zero_trace(spec, rng)
        m = asymptotic_metrics(u, prof, spec, eta=0.1)
        assert kappa * m.measure_bad <= m.J_gap + 1e-12


# -- epsilon_sweep ------------------------------------------------------------


@pytest.fixture(scope="module")
def small_sweep():
    spec = model_spec(n=201)
    return epsilon_sweep(spec, [1e-2, 1e-3], eta=0.1, r_list=(1.0, 2.0))


def test_sweep_rows_and_trends(small_sweep):
    report = small_sweep
    assert [row.eps for row in report.rows] == [1e-2, 1e-3]
    assert all(row.converged for row in report.rows)
    gaps = report.column("energy_gap")
    assert np.all(gaps > 0.0)
    assert gaps[1] < gaps[0]
    assert report.column("measure_bad_eta")[1] <= report.column("measure_bad_eta")[0]
    assert report.column("l1_err")[1] < report.column("l1_err")[0]
    assert report.limit_value == pytest.approx(-1.0 / 12.0, abs=1e-13)


def test_sweep_squeeze_inequality(small_sweep):
    # J(limit) <= J(u_eps) <= phi(u_eps) row by row.
    for row in small_sweep.rows:
        assert row.J_gap >= -1e-10
        assert row.energy_gap >= row.J_gap - 1e-10


def test_sweep_csv_schema(small_sweep, tmp_path):
    path = tmp_path / "sweep.csv"
    small_sweep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == ("eps,energy,energy_gap,J_gap,measure_bad_eta,"
                        "l1_err,l2_err,linf_interior_err,converged")
    assert len(lines) == 3
    first = lines[1].split(",")
    assert float(first[0]) == 1e-2
    assert first[-1] in ("true", "false")


def test_sweep_json_round_trip(small_sweep):
    data = small_sweep.to_json_dict()
    assert data["eta"] == 0.1
    assert len(data["rows"]) == 2
    assert data["rows"][0]["eps"] == 1e-2
    assert data["rows"][0]["measure_bad_eta"] == small_sweep.rows[0].measure_bad


def test_sweep_column_accessor(small_sweep):
    np.testing.assert_array_equal(small_sweep.column("l2_err"),
                                  [row.lr_errors[1][1] for row in small_sweep.rows])
    with pytest.raises(InputError):
        small_sweep.column("l7_err")


def test_sweep_validates_eps_list():
    spec = model_spec(n=21)
    with pytest.raises(InputError):
        epsilon_sweep(spec, [])
    with pytest.raises(InputError):
        epsilon_sweep(spec, [1e-2, -1e-3])
    with pytest.raises(InputError):
        epsilon_sweep(spec, [1e-3, 1e-2])
    with pytest.raises(InputError):
        epsilon_sweep(spec, [1e-2, 1e-2])


def test_sweep_threads_do_not_change_bytes(small_sweep, tmp_path):
    spec = model_spec(n=201)
    parallel = epsilon_sweep(spec, [1e-2, 1e-3], eta=0.1, r_list=(1.0, 2.0),
                             threads=2)
    p1, p2 = tmp_path / "serial.csv", tmp_path / "parallel.csv"
    small_sweep.to_csv(p1)
    parallel.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()


# -- scaling equivalences -----------------------------------------------------


def test_scale_solution_reference_values():
    spec = model_spec(n=41, epsilon=0.01)
    u = make_field(spec.mesh, lambda x: x * (1.0 - x))
    lam = scale_solution(u, 0.01, EX, "lambda")
    assert lam.parameter == pytest.approx(10.0, rel=1e-14)
    np.testing.assert_allclose(lam.field.values, 10.0 * u.values, rtol=1e-14)
    nu = scale_solution(u, 0.01, EX, "nu")
    assert nu.parameter == pytest.approx(0.01, rel=1e-14)
    np.testing.assert_allclose(nu.field.values, 100.0 * u.values, rtol=1e-14)


def test_scale_solution_round_trips():
    spec = model_spec(n=41, epsilon=3.7e-3)
    rng = np.random.default_rng(51)
    u = random_zero_trace(spec, rng)
    lam = scale_solution(u, spec.epsilon, EX, "lambda")
    back = lam.field.scaled(lam.parameter ** (-1.0 / (EX.gamma - EX.q)))
    np.testing.assert_allclose(back.values, u.values, rtol=1e-14, atol=1e-16)
    nu = scale_solution(u, spec.epsilon, EX, "nu")
    back_nu = nu.field.scaled(nu.parameter ** (1.0 / (EX.gamma - EX.q)))
    np.testing.assert_allclose(back_nu.values, u.values, rtol=1e-14, atol=1e-16)


def test_scale_solution_input_checks():
    spec = model_spec(n=21)
    u = make_field(spec.mesh, lambda x: x * (1.0 - x))
    with pytest.raises(InputError):
        scale_solution(u, 0.0, EX, "lambda")
    with pytest.raises(InputError):
        scale_solution(u, 1.0, EX, "mu")
    with pytest.raises(InputError):
        scaled_problem(spec, "mu")


def test_scaled_problem_residual_factor():
    """For p = 2 the scaled field's residual is the original times eps^-(k-1)/(k-2)."""
    spec = model_spec(n=81, epsilon=0.01)
    rng = np.random.default_rng(52)
    u = random_zero_trace(spec, rng)
    base = weak_residual(u, spec).values

    lam = scale_solution(u, spec.epsilon, EX, "lambda")
    lam_spec = scaled_problem(spec, "lambda")
    factor_lam = spec.epsilon ** (-(EX.gamma - 1.0) / (EX.gamma - 2.0))
    np.testing.assert_allclose(weak_residual(lam.field, lam_spec).values,
                               factor_lam * base, rtol=1e-10, atol=1e-12)

    nu = scale_solution(u, spec.epsilon, EX, "nu")
    nu_spec = scaled_problem(spec, "nu")
    factor_nu = spec.epsilon ** (-(EX.q - 1.0) / (EX.q - 2.0))
    np.testing.assert_allclose(weak_residual(nu.field, nu_spec).values,
                               factor_nu * base, rtol=1e-10, atol=1e-12)


# -- boundary layer -----------------------------------------------------------


@pytest.fixture(scope="module")
def tanh_profile():
    return layer_profile_1d(2.0, 4.0)


def test_layer_profile_matches_tanh(tanh_profile):
    """q=2, gamma=4 integrates in closed form to tanh(xi/sqrt(2))."""
    xi = tanh_profile.xi[tanh_profile.xi <= 10.0]
    exact = np.tanh(xi / np.sqrt(2.0))
    got = tanh_profile.values_at(xi)
    assert np.max(np.abs(got - exact)) <= 1e-6


def test_layer_profile_point_value(tanh_profile):
    assert abs(float(tanh_profile.values_at(1.0)) - 0.608859) <= 1e-6


def test_layer_profile_shape(tanh_profile):
    assert tanh_profile.values[0] == 0.0
    assert 1.0 - tanh_profile.values[-1] < 1e-4
    tanh_profile.validate()
    below = tanh_profile.values < 1.0 - 1e-12
    diffs = np.diff(tanh_profile.values)
    assert np.all(diffs[below[:-1]] > 0.0)


def test_layer_profile_general_exponents():
    prof = layer_profile_1d(3.0, 4.0)
    prof.validate()
    assert 1.0 - prof.values[-1] < 1e-4


def test_layer_profile_input_checks():
    with pytest.raises(InputError):
        layer_profile_1d(4.0, 3.0)
    with pytest.raises(InputError):
        layer_profile_1d(1.0, 4.0)
    with pytest.raises(InputError):
        layer_profile_1d(2.0, 4.0, xi_max=-1.0)
    with pytest.raises(InputError):
        layer_profile_1d(2.0, 4.0, points=1)


def test_layer_profile_interpolation_clamps(tanh_profile):
    assert float(tanh_profile.values_at(1e6)) == 1.0
    with pytest.raises(InputError):
        tanh_profile.values_at(-0.5)


def test_layer_profile_csv(tanh_profile, tmp_path):
    path = tmp_path / "layer.csv"
    tanh_profile.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "xi,U"
    assert len(lines) == len(tanh_profile.xi) + 1


def test_composite_shape():
    mesh = build_mesh((0.0, 1.0), 501)
    prof = layer_profile_1d(3.0, 4.0)
    comp = composite_approx_1d(1e-4, mesh, prof)
    # Both endpoint arguments exceed the sampled range, so the tails clamp.
    assert comp.values[0] == 0.0 and comp.values[-1] == 0.0
    mid = mesh.n_nodes // 2
    assert abs(comp.values[mid] - 1.0) <= 1e-6


def test_composite_input_checks():
    prof = layer_profile_1d(3.0, 4.0)
    mesh2d = build_mesh(((0.0, 1.0), (0.0, 1.0)), (5, 5))
    with pytest.raises(InputError):
        composite_approx_1d(1e-4, mesh2d, prof)
    mesh = build_mesh((0.0, 1.0), 21)
    with pytest.raises(InputError):
        composite_approx_1d(0.0, mesh, prof)


def test_composite_tracks_ground_state():
    """Matched approximation vs solved ground state at small eps."""
    mesh = build_mesh((0.0, 1.0), 2001)
    spec = ProblemSpec(mesh, EX, 1e-4, ONE, ONE)
    report = solve_ground_state(spec, tol_res=1e-8)
    assert report.converged
    prof = layer_profile_1d(EX.q, EX.gamma)
    comp = composite_approx_1d(spec.epsilon, mesh, prof)
    assert np.max(np.abs(report.field.values - comp.values)) <= 5e-2
