"""Sparse factor-graph nonlinear least squares with Gauss-Newton.

Variables are flat real vectors addressed by VariableKey. Factors supply
residuals and analytic Jacobians; the engine whitens them, applies robust
reweighting (Huber via IRLS), assembles block-sparse normal equations and
solves them by sparse factorization. Switchable constraints are realized
structurally: a factor whose whitened residual is scaled by a bounded
switch variable, plus a prior pulling the switch to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .types import GnssError, SatId

KIND_STATE = "state"
KIND_SLIP = "slip"
KIND_SWITCH = "switch"


class SolverError(GnssError):
    """Singular system or structurally broken graph."""


@dataclass(frozen=True)
class VariableKey:
    kind: str
    epoch: int
    sat: Optional[SatId] = None

    def sort_key(self) -> tuple:
        sat_key = self.sat.sort_key() if self.sat is not None else ("", 0)
        return (self.kind, self.epoch, sat_key)

    def __repr__(self):
        sat = f",{self.sat}" if self.sat is not None else ""
        return f"{self.kind}({self.epoch}{sat})"


@dataclass(frozen=True)
class Huber:
    c: float = 1.345

    def weight(self, t: float) -> float:
        """IRLS weight for whitened residual norm t."""
        return 1.0 if t <= self.c else self.c / t

    def rho(self, t: float) -> float:
        if t <= self.c:
            return t * t
        return 2.0 * self.c * t - self.c * self.c


def _as_sqrt_info(value, dim: int) -> np.ndarray:
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.shape == (1, 1) and dim > 1:
        arr = arr[0, 0] * np.eye(dim)
    if arr.shape != (dim, dim):
        raise GnssError(f"sqrt_info shape {arr.shape} does not match residual dim {dim}")
    return arr


class Factor:
    """Base class: residual(values) and analytic jacobians(values)."""

    keys: tuple[VariableKey, ...]
    kernel: Optional[Huber]

    def residual(self, values: dict[VariableKey, np.ndarray]) -> np.ndarray:
        raise NotImplementedError

    def jacobians(self, values: dict[VariableKey, np.ndarray]) -> list[np.ndarray]:
        raise NotImplementedError

    def whitened(self, values) -> tuple[np.ndarray, list[np.ndarray]]:
        w = self.sqrt_info
        return w @ self.residual(values), [w @ j for j in self.jacobians(values)]

    def whitened_residual(self, values) -> np.ndarray:
        return self.sqrt_info @ self.residual(values)


class LinearFactor(Factor):
    """residual = sum_k A_k x_k - b."""

    def __init__(self, keys: Sequence[VariableKey], coeffs: Sequence[np.ndarray],
                 target: np.ndarray, sqrt_info, kernel: Optional[Huber] = None):
        self.keys = tuple(keys)
        self.target = np.atleast_1d(np.asarray(target, dtype=float))
        self.coeffs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in coeffs]
        dim = self.target.shape[0]
        for a in self.coeffs:
            if a.shape[0] != dim:
                raise GnssError("coefficient rows must match target dimension")
        self.sqrt_info = _as_sqrt_info(sqrt_info, dim)
        self.kernel = kernel
        self._wr_coeffs = [self.sqrt_info @ a for a in self.coeffs]

    def residual(self, values):
        r = -self.target.copy()
        for key, a in zip(self.keys, self.coeffs):
            r += a @ values[key]
        return r

    def jacobians(self, values):
        return self.coeffs

    def whitened(self, values):
        return self.sqrt_info @ self.residual(values), self._wr_coeffs


def prior_factor(key: VariableKey, target, sigma,
                 kernel: Optional[Huber] = None) -> LinearFactor:
    target = np.atleast_1d(np.asarray(target, dtype=float))
    dim = target.shape[0]
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    if sigma.shape == (1,) and dim > 1:
        sigma = np.full(dim, sigma[0])
    return LinearFactor([key], [np.eye(dim)], target, np.diag(1.0 / sigma), kernel)


class SwitchableFactor(Factor):
    """Wraps a factor; its whitened residual is scaled by a switch in [0, 1].

    Pair it with a prior on the switch variable pulling toward 1 so that
    only measurements in gross conflict get switched off.
    """

    def __init__(self, inner: Factor, switch_key: VariableKey):
        if inner.kernel is not None:
            raise GnssError("switchable factor cannot wrap a robust kernel")
        self.inner = inner
        self.keys = tuple(inner.keys) + (switch_key,)
        self.kernel = None
        dim = inner.sqrt_info.shape[0]
        self.sqrt_info = np.eye(dim)

    def residual(self, values):
        s = float(values[self.keys[-1]][0])
        return s * self.inner.whitened_residual(values)

    def jacobians(self, values):
        s = float(values[self.keys[-1]][0])
        r_w, j_w = self.inner.whitened(values)
        return [s * j for j in j_w] + [r_w.reshape(-1, 1)]


@dataclass
class GaussNewtonOptions:
    max_iterations: int = 50
    step_tol: float = 1e-4        # max-abs update below which we stop
    rel_cost_tol: float = 1e-6
    max_divergent_iterations: int = 5
    min_step_scale: float = 1.0 / 1024.0


@dataclass
class GraphSolution:
    values: dict[VariableKey, np.ndarray]
    cost: float
    iterations: int
    converged: bool
    cost_history: list[float] = field(default_factory=list)
    message: str = ""


def graph_cost(factors: Sequence[Factor], values: dict[VariableKey, np.ndarray]) -> float:
    """Robustified objective: sum of rho(|whitened residual|) per factor."""
    total = 0.0
    for f in factors:
        r_w = f.whitened_residual(values)
        t = float(np.linalg.norm(r_w))
        total += f.kernel.rho(t) if f.kernel is not None else t * t
    return total


def _check_structure(factors: Sequence[Factor], values) -> None:
    touched = set()
    for f in factors:
        for k in f.keys:
            if k not in values:
                raise SolverError(f"factor references {k} with no initial value")
            touched.add(k)
    missing = [k for k in values if k not in touched]
    if missing:
        names = ", ".join(repr(k) for k in sorted(missing, key=lambda k: k.sort_key())[:8])
        raise SolverError(f"unconstrained variable blocks: {names}")


def _index_templates(factors, offsets, values):
    """Precompute flattened (row, col) index arrays per factor block pair."""
    patterns: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    def pattern(a: int, b: int):
        p = patterns.get((a, b))
        if p is None:
            p = (np.repeat(np.arange(a), b), np.tile(np.arange(b), a))
            patterns[(a, b)] = p
        return p

    templates = []
    for f in factors:
        dims = [values[k].shape[0] for k in f.keys]
        offs = [offsets[k] for k in f.keys]
        entries = []
        for i in range(len(f.keys)):
            for j in range(i, len(f.keys)):
                base_r, base_c = pattern(dims[i], dims[j])
                entries.append((i, j, base_r + offs[i], base_c + offs[j],
                                offs[i] != offs[j]))
        templates.append((f, offs, entries))
    return templates


def _assemble(templates, values, total_dim):
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    g = np.zeros(total_dim)
    for f, offs, entries in templates:
        r_w, j_w = f.whitened(values)
        if f.kernel is not None:
            w = f.kernel.weight(float(np.linalg.norm(r_w)))
            if w != 1.0:
                sw = math.sqrt(w)
                r_w = sw * r_w
                j_w = [sw * j for j in j_w]
        for oi, ji in zip(offs, j_w):
            g[oi:oi + ji.shape[1]] += ji.T @ r_w
        for i, j, row, col, off_diag in entries:
            block = j_w[i].T @ j_w[j]
            rows.append(row)
            cols.append(col)
            vals.append(block.ravel())
            if off_diag:
                rows.append(col)
                cols.append(row)
                vals.append(block.T.ravel())
    h = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(total_dim, total_dim)).tocsc()
    return h, g


def _solve_normal_equations(h: sp.csc_matrix, g: np.ndarray,
                            offsets, values) -> np.ndarray:
    diag = h.diagonal()
    dead = np.flatnonzero(diag == 0.0)
    if dead.size:
        names = []
        for key, off in offsets.items():
            dim = values[key].shape[0]
            if any(off <= d < off + dim for d in dead):
                names.append(repr(key))
        raise SolverError("singular normal equations; unconstrained blocks: "
                          + ", ".join(sorted(names)[:8]))
    try:
        lu = spla.splu(h, permc_spec="MMD_AT_PLUS_A")
        dx = lu.solve(-g)
    except RuntimeError as exc:
        raise SolverError(f"singular normal equations: {exc}") from None
    if not np.all(np.isfinite(dx)):
        raise SolverError("singular normal equations: non-finite update")
    if np.linalg.norm(h @ dx + g) > 1e-6 * (np.linalg.norm(g) + 1.0):
        raise SolverError("singular normal equations: factorization inaccurate")
    return dx


def _apply_step(values, offsets, dx, scale):
    out = {}
    for key, v in values.items():
        off = offsets[key]
        new = v + scale * dx[off:off + v.shape[0]]
        if key.kind == KIND_SWITCH:
            new = np.clip(new, 0.0, 1.0)
        out[key] = new
    return out


def optimize(factors: Sequence[Factor], initial: dict[VariableKey, np.ndarray],
             options: Optional[GaussNewtonOptions] = None) -> GraphSolution:
    """Gauss-Newton with step-halving to keep the accepted cost nonincreasing.

    Iteration count is the number of accepted steps; purely linear graphs
    therefore converge in exactly one iteration. Aborts with the best
    values seen if the cost increases max_divergent_iterations times in a
    row (possible under IRLS reweighting when line search bottoms out).
    """
    opts = options or GaussNewtonOptions()
    values = {k: np.atleast_1d(np.asarray(v, dtype=float)).copy()
              for k, v in initial.items()}
    _check_structure(factors, values)
    keys = sorted(values, key=lambda k: k.sort_key())
    offsets = {}
    total = 0
    for k in keys:
        offsets[k] = total
        total += values[k].shape[0]

    templates = _index_templates(factors, offsets, values)

    # purely linear graph with no robust kernels: one exact step suffices,
    # and the residual check inside the solve certifies optimality
    if all(type(f) is LinearFactor and f.kernel is None for f in factors):
        h, g = _assemble(templates, values, total)
        dx = _solve_normal_equations(h, g, offsets, values)
        iterations = 0
        if np.max(np.abs(dx)) >= opts.step_tol:
            values = _apply_step(values, offsets, dx, 1.0)
            iterations = 1
        cost = graph_cost(factors, values)
        return GraphSolution(values=values, cost=cost, iterations=iterations,
                             converged=True, cost_history=[cost])

    cost = graph_cost(factors, values)
    history = [cost]
    best_cost, best_values = cost, values
    iterations = 0
    converged = False
    message = ""
    increases = 0

    for _ in range(opts.max_iterations):
        h, g = _assemble(templates, values, total)
        dx = _solve_normal_equations(h, g, offsets, values)
        if np.max(np.abs(dx)) < opts.step_tol:
            converged = True
            break
        scale = 1.0
        new_values = _apply_step(values, offsets, dx, scale)
        new_cost = graph_cost(factors, new_values)
        while new_cost > cost and scale > opts.min_step_scale:
            scale *= 0.5
            new_values = _apply_step(values, offsets, dx, scale)
            new_cost = graph_cost(factors, new_values)
        iterations += 1
        values = new_values
        if new_cost > cost:
            increases += 1
            if increases >= opts.max_divergent_iterations:
                message = "diverged: cost increased repeatedly; returning best values"
                values, cost = best_values, best_cost
                break
        else:
            increases = 0
            history.append(new_cost)
        if new_cost < best_cost:
            best_cost, best_values = new_cost, values
        if abs(cost - new_cost) < opts.rel_cost_tol * max(cost, 1e-300):
            cost = new_cost
            converged = True
            break
        cost = new_cost

    return GraphSolution(values=values, cost=cost, iterations=iterations,
                         converged=converged, cost_history=history,
                         message=message)


def check_jacobians(factor: Factor, values: dict[VariableKey, np.ndarray],
                    step: float = 1e-6) -> float:
    """Max relative error of analytic vs central-difference Jacobians."""
    _, j_analytic = factor.whitened(values)
    worst = 0.0
    for idx, key in enumerate(factor.keys):
        base = values[key]
        num = np.zeros_like(j_analytic[idx])
        for col in range(base.shape[0]):
            bumped = dict(values)
            plus = base.copy()
            plus[col] += step
            bumped[key] = plus
            r_plus = factor.whitened_residual(bumped)
            minus = base.copy()
            minus[col] -= step
            bumped[key] = minus
            r_minus = factor.whitened_residual(bumped)
            num[:, col] = (r_plus - r_minus) / (2.0 * step)
        scale = max(float(np.max(np.abs(j_analytic[idx]))), 1.0)
        worst = max(worst, float(np.max(np.abs(num - j_analytic[idx]))) / scale)
    return worst
