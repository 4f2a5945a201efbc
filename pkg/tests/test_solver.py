import numpy as np
import pytest

from gnssodom.solver import (
    KIND_SLIP,
    KIND_STATE,
    KIND_SWITCH,
    Factor,
    GaussNewtonOptions,
    Huber,
    LinearFactor,
    SolverError,
    SwitchableFactor,
    VariableKey,
    check_jacobians,
    graph_cost,
    optimize,
    prior_factor,
)

X = lambda k: VariableKey(KIND_STATE, k)
S = lambda k: VariableKey(KIND_SWITCH, k)


def test_prior_only_graph_solves_in_one_iteration():
    factors = [prior_factor(X(0), [3.0], 1.0)]
    sol = optimize(factors, {X(0): np.array([0.0])})
    assert sol.converged
    assert sol.iterations == 1
    assert sol.values[X(0)][0] == pytest.approx(3.0, abs=1e-12)
    assert sol.cost == pytest.approx(0.0, abs=1e-20)


def test_dense_linear_problem_matches_normal_equation_oracle():
    rng = np.random.default_rng(42)
    n_vars, n_factors = 10, 30
    keys = [X(i) for i in range(n_vars)]
    a_rows = []
    b_rows = []
    w_rows = []
    factors = []
    for _ in range(n_factors):
        i, j = rng.choice(n_vars, size=2, replace=False)
        ai, aj = rng.normal(size=(1, 1)), rng.normal(size=(1, 1))
        b = rng.normal()
        sigma = rng.uniform(0.5, 2.0)
        factors.append(LinearFactor([keys[i], keys[j]], [ai, aj], [b], 1.0 / sigma))
        row = np.zeros(n_vars)
        row[i], row[j] = ai[0, 0], aj[0, 0]
        a_rows.append(row)
        b_rows.append(b)
        w_rows.append(1.0 / sigma**2)
    for i in range(n_vars):  # gauge
        factors.append(prior_factor(keys[i], [0.0], 10.0))
        row = np.zeros(n_vars)
        row[i] = 1.0
        a_rows.append(row)
        b_rows.append(0.0)
        w_rows.append(1.0 / 100.0)

    a = np.array(a_rows)
    b = np.array(b_rows)
    w = np.array(w_rows)
    oracle = np.linalg.solve(a.T @ (a * w[:, None]), a.T @ (b * w))

    sol = optimize(factors, {k: np.zeros(1) for k in keys})
    got = np.array([sol.values[k][0] for k in keys])
    assert np.linalg.norm(got - oracle) / np.linalg.norm(oracle) < 1e-9
    assert sol.iterations == 1


def test_linear_graph_converges_in_exactly_one_iteration_from_far_start():
    rng = np.random.default_rng(7)
    factors = [prior_factor(X(0), [1.0, 2.0, 3.0], [1.0, 2.0, 0.5]),
               LinearFactor([X(0), X(1)], [np.eye(3), -np.eye(3)],
                            [0.5, 0.5, 0.5], 2.0)]
    initial = {X(0): rng.normal(size=3) * 100, X(1): rng.normal(size=3) * 100}
    sol = optimize(factors, initial)
    assert sol.converged and sol.iterations == 1


def test_huber_irls_weight_at_double_threshold():
    k = Huber(1.345)
    assert k.weight(2.690) == pytest.approx(0.5)
    assert k.weight(1.0) == 1.0
    assert k.weight(1.345) == 1.0


def test_huber_rho_values():
    k = Huber(1.345)
    assert k.rho(1.0) == pytest.approx(1.0)
    r = 3.7
    assert k.rho(r) == pytest.approx(2 * 1.345 * r - 1.345**2)


def test_graph_cost_definitions():
    f_plain = prior_factor(X(0), [0.0], 1.0)
    values = {X(0): np.array([2.0])}
    assert graph_cost([f_plain], values) == pytest.approx(4.0)
    values = {X(0): np.array([0.0])}
    assert graph_cost([f_plain], values) == pytest.approx(0.0)
    f_huber = prior_factor(X(0), [0.0], 1.0, kernel=Huber(1.345))
    values = {X(0): np.array([3.0])}
    assert graph_cost([f_huber], values) == pytest.approx(2 * 1.345 * 3 - 1.345**2)


def test_huber_downweights_outlier_prior():
    # nine consistent unit-sigma priors at 0 and one gross outlier at 50:
    # the quadratic estimate would be 5.0, Huber pulls it near zero
    factors = [prior_factor(X(0), [0.0], 1.0, kernel=Huber(1.345))
               for _ in range(9)]
    factors.append(prior_factor(X(0), [50.0], 1.0, kernel=Huber(1.345)))
    sol = optimize(factors, {X(0): np.array([4.0])})
    assert sol.converged
    assert abs(sol.values[X(0)][0]) < 1.0


class _RangeFactor(Factor):
    """Nonlinear test factor: distance from a 2D point to a beacon."""

    def __init__(self, key, beacon, measured, sigma):
        self.keys = (key,)
        self.beacon = np.asarray(beacon, dtype=float)
        self.measured = float(measured)
        self.sqrt_info = np.array([[1.0 / sigma]])
        self.kernel = None

    def residual(self, values):
        d = values[self.keys[0]] - self.beacon
        return np.array([np.linalg.norm(d) - self.measured])

    def jacobians(self, values):
        d = values[self.keys[0]] - self.beacon
        return [d.reshape(1, 2) / np.linalg.norm(d)]


def test_nonlinear_range_factors_converge():
    beacons = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
    truth = np.array([3.0, 4.0])
    factors = [_RangeFactor(X(0), b, np.linalg.norm(truth - np.array(b)), 0.01)
               for b in beacons]
    opts = GaussNewtonOptions(step_tol=1e-12, rel_cost_tol=1e-14)
    sol = optimize(factors, {X(0): np.array([1.0, 1.0])}, opts)
    assert sol.converged
    assert np.linalg.norm(sol.values[X(0)] - truth) < 1e-8
    assert sol.iterations >= 2  # genuinely nonlinear


def test_jacobian_check_analytic_vs_finite_difference():
    f = _RangeFactor(X(0), (1.0, 2.0), 5.0, 0.1)
    err = check_jacobians(f, {X(0): np.array([4.0, -1.0])})
    assert err < 1e-5
    lin = LinearFactor([X(0), X(1)], [np.array([[1.0, 2.0]]), np.array([[-0.5, 3.0]])],
                       [1.0], 2.0)
    err = check_jacobians(lin, {X(0): np.array([1.0, 2.0]), X(1): np.array([0.0, 1.0])})
    assert err < 1e-8


def test_jacobian_check_catches_wrong_jacobian():
    class Broken(_RangeFactor):
        def jacobians(self, values):
            return [np.array([[1.0, 0.0]])]

    f = Broken(X(0), (0.0, 0.0), 5.0, 0.1)
    assert check_jacobians(f, {X(0): np.array([3.0, 4.0])}) > 1e-2


def test_factor_order_permutation_invariance():
    rng = np.random.default_rng(11)
    keys = [X(i) for i in range(6)]
    factors = [prior_factor(keys[0], [1.0], 0.5)]
    for i in range(5):
        factors.append(LinearFactor([keys[i], keys[i + 1]],
                                    [np.array([[1.0]]), np.array([[-1.0]])],
                                    [rng.normal()], 1.0))
    initial = {k: np.zeros(1) for k in keys}
    sol_a = optimize(factors, initial)
    sol_b = optimize(list(reversed(factors)), initial)
    for k in keys:
        assert abs(sol_a.values[k][0] - sol_b.values[k][0]) < 1e-9


def test_unconstrained_variable_raises_named_error():
    factors = [prior_factor(X(0), [0.0], 1.0)]
    initial = {X(0): np.zeros(1), X(5): np.zeros(1)}
    with pytest.raises(SolverError, match="state"):
        optimize(factors, initial)


def test_missing_initial_value_raises():
    factors = [prior_factor(X(0), [0.0], 1.0),
               LinearFactor([X(0), X(1)], [np.eye(1), -np.eye(1)], [0.0], 1.0)]
    with pytest.raises(SolverError, match="no initial value"):
        optimize(factors, {X(0): np.zeros(1)})


def test_singular_normal_equations_detected():
    # two variables, only their difference observed, no anchor: singular
    factors = [LinearFactor([X(0), X(1)], [np.eye(1), -np.eye(1)], [1.0], 1.0)]
    initial = {X(0): np.zeros(1), X(1): np.zeros(1)}
    with pytest.raises(SolverError, match="singular|unconstrained"):
        optimize(factors, initial)


def test_switchable_inlier_keeps_switch_near_one():
    inner = prior_factor(X(0), [0.0], 1.0)
    sw = SwitchableFactor(inner, S(0))
    factors = [sw, prior_factor(S(0), [1.0], 1.0),
               prior_factor(X(0), [0.05], 1.0)]
    initial = {X(0): np.array([0.0]), S(0): np.array([1.0])}
    sol = optimize(factors, initial)
    assert sol.converged
    assert sol.values[S(0)][0] > 0.9


def test_switchable_outlier_switch_drops():
    # measurement conflicts with a strong prior by 12 sigma; with the
    # unit switch prior the optimum is s = 1/(1 + r^2), well below 0.1
    inner = prior_factor(X(0), [12.0], 1.0)
    sw = SwitchableFactor(inner, S(0))
    factors = [sw, prior_factor(S(0), [1.0], 1.0),
               prior_factor(X(0), [0.0], 0.05)]
    initial = {X(0): np.array([0.0]), S(0): np.array([1.0])}
    sol = optimize(factors, initial)
    assert sol.values[S(0)][0] < 0.1
    assert abs(sol.values[X(0)][0]) < 0.5


def test_switch_clamped_to_unit_interval():
    inner = prior_factor(X(0), [100.0], 1.0)
    sw = SwitchableFactor(inner, S(0))
    factors = [sw, prior_factor(S(0), [1.0], 0.5),
               prior_factor(X(0), [0.0], 0.01)]
    sol = optimize(factors, {X(0): np.array([0.0]), S(0): np.array([0.8])})
    assert 0.0 <= sol.values[S(0)][0] <= 1.0


def test_switchable_jacobians_pass_finite_difference():
    inner = LinearFactor([X(0)], [np.array([[2.0]])], [1.0], 1.5)
    sw = SwitchableFactor(inner, S(0))
    err = check_jacobians(sw, {X(0): np.array([0.7]), S(0): np.array([0.6])})
    assert err < 1e-6


def test_cost_history_nonincreasing_on_accepted_steps():
    beacons = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (7.0, 7.0)]
    truth = np.array([3.0, 4.0])
    factors = [_RangeFactor(X(0), b, np.linalg.norm(truth - np.array(b)), 0.05)
               for b in beacons]
    sol = optimize(factors, {X(0): np.array([8.0, 1.0])})
    diffs = np.diff(sol.cost_history)
    assert (diffs <= 1e-12).all()


def test_max_iterations_respected():
    f = _RangeFactor(X(0), (0.0, 0.0), 5.0, 0.1)
    opts = GaussNewtonOptions(max_iterations=1)
    sol = optimize([f, prior_factor(X(0), [4.0, 1.0], 10.0)],
                   {X(0): np.array([1.0, 1.0])}, opts)
    assert sol.iterations <= 1
