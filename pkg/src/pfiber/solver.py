"""Critical-point solvers: negative-energy ground state and mountain pass.

Ground state.  Preconditioned descent on the energy: the nodal weak residual
is mapped to a Sobolev-type gradient through a prefactorized interior solve
with eps * stiffness + mass, then Armijo backtracking (factor 0.5, slope
parameter 1e-4) fixes the step.  Seeds are the fiber-optimal scaling of the
interpolated flat-limit profile plus random nonnegative restarts; candidates
are compared by energy and the zero field wins whenever no candidate goes
strictly below zero, which is exactly the nonexistence regime.

Second solution.  A min-max over polyline paths from the zero field to the
ground state.  Knots start clustered around the barrier peak of the straight
ray, every interior knot takes one Armijo step along the negative weak
residual of the positive-part energy, and dense samples inside each segment
are promoted to knots whenever one tops the knot maximum, so the ridge
crossing stays resolved.  Sweeps repeat until the knot carrying the path
maximum is residual-stationary.  The positive-part nonlinearity makes the
limiting critical point nonnegative.
"""

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import DomainError, InputError
from .functionals import (
    EnergyComponents,
    energy_components,
    phi,
    phi_plus,
    weak_residual,
    weak_residual_plus,
    DEFAULT_DELTA_REG,
)
from .linalg import InteriorSolver
from .problem import DiscreteField, Exponents, Mesh, ProblemSpec
from .rayleigh import fiber_scalings

__all__ = [
    "SolveReport",
    "solve_ground_state",
    "MountainPassReport",
    "solve_mountain_pass",
    "NehariDiagnostics",
    "nehari_diagnostics",
    "embedding_constant",
    "BarrierEstimate",
    "barrier_estimate",
]

ARMIJO_SLOPE = 1e-4
ARMIJO_FACTOR = 0.5
_MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a ground-state solve.

    ``nehari_residual`` is |eps*dirichlet - gain + loss| normalized by
    eps*dirichlet + gain + loss; the constraint holds exactly at critical
    points.  ``fiber_second_derivative`` is
    (p - q)*eps*dirichlet + (gamma - q)*loss, the curvature of the energy
    along the ray through the solution; positive values mark the ground-state
    branch.  ``trace`` rows are (iteration, energy, residual_norm) for the
    winning descent run.
    """

    field: DiscreteField
    energy: float
    residual_norm: float
    nehari_residual: float
    fiber_second_derivative: float
    iterations: int
    converged: bool
    tol_effective: float
    delta_reg: float
    multiplicity_flagged: bool = False
    trace: list = dataclass_field(default_factory=list, repr=False)

    def is_zero(self) -> bool:
        return not np.any(self.field.values)

    def to_json_dict(self, include_field: bool = True) -> dict:
        out = {
            "energy": self.energy,
            "residual_norm": self.residual_norm,
            "nehari_residual": self.nehari_residual,
            "fiber_second_derivative": self.fiber_second_derivative,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol_effective": self.tol_effective,
            "delta_reg": self.delta_reg,
            "multiplicity_flagged": self.multiplicity_flagged,
            "zero_field": self.is_zero(),
        }
        if include_field:
            out["field"] = self.field.to_json_dict(include_mesh=False)
        return out

    def trace_to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,energy,residual_norm\n")
            for it, energy, res in self.trace:
                fh.write("%d,%.17g,%.17g\n" % (it, energy, res))


def _zero_boundary(values: np.ndarray, mesh: Mesh) -> np.ndarray:
    out = np.asarray(values, dtype=float).copy()
    out[mesh.boundary_nodes] = 0.0
    return out


def _descend(start: np.ndarray, spec: ProblemSpec, pre: InteriorSolver,
             tol_res: float, max_iters: int, delta_reg) -> dict:
    """Armijo descent from one seed; returns the raw candidate record.

    The trial step is the spectral (Barzilai-Borwein) secant estimate in the
    preconditioner metric, (s.y)/(y.P^-1 y); backtracking keeps every accepted
    step monotone.  P^-1 y falls out of the direction solves already done.
    """
    mesh = spec.mesh
    u = _zero_boundary(start, mesh)
    energy = phi(DiscreteField(mesh, u), spec)
    step = 1.0
    trace = []
    converged = False
    iterations = 0
    prev_u = prev_residual = prev_pre_grad = None
    for iterations in range(max_iters + 1):
        residual = weak_residual(DiscreteField(mesh, u), spec, delta_reg).values
        res_norm = float(np.max(np.abs(residual))) if residual.size else 0.0
        trace.append((iterations, energy, res_norm))
        if res_norm <= tol_res * (1.0 + abs(energy)):
            converged = True
            break
        if iterations == max_iters:
            break
        pre_grad = pre.apply(residual)
        direction = -pre_grad
        slope = float(np.dot(residual, direction))
        if slope >= 0.0:
            direction = -residual
            slope = -float(np.dot(residual, residual))
            if slope >= 0.0:
                break
        if prev_u is not None:
            s = u - prev_u
            y = residual - prev_residual
            sy = float(np.dot(s, y))
            y_pre = float(np.dot(y, pre_grad - prev_pre_grad))
            if sy > 0.0 and y_pre > 0.0:
                step = min(max(sy / y_pre, 1e-12), 1e8)
        prev_u, prev_residual, prev_pre_grad = u, residual, pre_grad
        t = step
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            cand = u + t * direction
            cand_energy = phi(DiscreteField(mesh, cand), spec)
            if cand_energy <= energy + ARMIJO_SLOPE * t * slope:
                accepted = True
                break
            t *= ARMIJO_FACTOR
        if not accepted:
            break
        u, energy = cand, cand_energy
        step = min(2.0 * t, 1e8)
    return {"values": u, "energy": energy, "converged": converged,
            "iterations": iterations, "trace": trace}


def _finalize_candidate(cand: dict, spec: ProblemSpec, tol_res: float,
                        delta_reg) -> dict:
    """Apply the final nodal absolute value and refresh the diagnostics."""
    mesh = spec.mesh
    values = np.abs(cand["values"])
    ex = spec.exponents
    amplitude = (spec.a.upper / spec.b.lower) ** (1.0 / (ex.gamma - ex.q))
    if not (amplitude > 0.0) or not np.isfinite(amplitude):
        amplitude = 1.0
    if float(values.max(initial=0.0)) <= 1e-8 * amplitude:
        # Nontrivial critical points stay outside the small-sphere barrier;
        # a field this small can only be the zero basin, and |u| kinks must
        # not push its re-evaluated residual over tolerance.
        values = np.zeros_like(values)
    field = DiscreteField(mesh, values)
    energy = phi(field, spec)
    residual = weak_residual(field, spec, delta_reg).values
    res_norm = float(np.max(np.abs(residual)))
    tol_eff = tol_res * (1.0 + abs(energy))
    cand = dict(cand)
    cand.update(values=values, field=field, energy=energy,
                res_norm=res_norm, tol_eff=tol_eff,
                converged=res_norm <= tol_eff)
    return cand


def _zero_report(spec: ProblemSpec, tol_res: float, delta_reg: float,
                 iterations: int, trace: list) -> SolveReport:
    field = DiscreteField(spec.mesh, np.zeros(spec.mesh.n_nodes))
    return SolveReport(
        field=field, energy=0.0, residual_norm=0.0, nehari_residual=0.0,
        fiber_second_derivative=0.0, iterations=iterations, converged=True,
        tol_effective=tol_res, delta_reg=delta_reg, trace=trace,
    )


def _report_from_candidate(cand: dict, spec: ProblemSpec, tol_res: float,
                           delta_reg: float, multiplicity: bool) -> SolveReport:
    diag = nehari_diagnostics(cand["field"], spec)
    return SolveReport(
        field=cand["field"], energy=cand["energy"],
        residual_norm=cand["res_norm"], nehari_residual=diag.nehari_residual,
        fiber_second_derivative=diag.fiber_second_derivative,
        iterations=cand["iterations"], converged=cand["converged"],
        tol_effective=cand["tol_eff"], delta_reg=delta_reg,
        multiplicity_flagged=multiplicity, trace=cand["trace"],
    )


def flat_limit_values(spec: ProblemSpec) -> np.ndarray:
    """Nodal (a/b)^(1/(gamma-q)) with zero boundary; the small-eps plateau."""
    ex = spec.exponents
    ratio = np.zeros(spec.mesh.n_nodes)
    pos = spec.a_nodes > 0.0
    ratio[pos] = (spec.a_nodes[pos] / spec.b_nodes[pos]) ** (1.0 / (ex.gamma - ex.q))
    return _zero_boundary(ratio, spec.mesh)


def _default_seeds(spec: ProblemSpec, seed: int, random_restarts: int) -> list[np.ndarray]:
    from .functionals import membership_tolerance

    mesh = spec.mesh
    seeds = []
    w = flat_limit_values(spec)
    comps = energy_components(DiscreteField(mesh, w), spec)
    if comps.dirichlet > 0.0 and comps.gain > membership_tolerance(spec) and comps.loss > 0.0:
        scalings = fiber_scalings(comps, spec.exponents)
        w = scalings.zero_energy * w
    seeds.append(w)
    ex = spec.exponents
    amplitude = (spec.a.upper / spec.b.lower) ** (1.0 / (ex.gamma - ex.q))
    if amplitude <= 0.0:
        amplitude = 1.0
    for i in range(random_restarts):
        rng = np.random.default_rng((seed, 101 + i))
        seeds.append(_zero_boundary(rng.uniform(0.0, amplitude, mesh.n_nodes), mesh))
    return seeds


def solve_ground_state(spec: ProblemSpec, init: DiscreteField | None = None,
                       tol_res: float = 1e-8, max_iters: int = 50_000,
                       seed: int = 0, random_restarts: int = 4) -> SolveReport:
    """Locate the minimal-energy critical point, or the zero field.

    ``tol_res`` is the factor in the dynamic tolerance
    tol_res * (1 + |energy|) applied to the residual max-norm.  When every
    converged candidate has nonnegative energy the zero field is the global
    minimizer and is returned with ``converged=True``; this is the expected
    outcome above the critical threshold.

    Raises:
        InputError: ``init`` lives on a different mesh.
    """
    if tol_res <= 0:
        raise InputError("tol_res must be positive")
    mesh = spec.mesh
    delta_reg = DEFAULT_DELTA_REG if spec.exponents.p < 2.0 else 0.0
    pre = InteriorSolver(mesh, alpha=spec.epsilon, beta=1.0)
    if init is not None:
        if init.values.shape != (mesh.n_nodes,):
            raise InputError("init field does not match the problem's mesh")
        seeds = [init.values]
    else:
        seeds = _default_seeds(spec, seed, random_restarts)

    candidates = []
    for idx, start in enumerate(seeds):
        cand = _descend(start, spec, pre, tol_res, max_iters, delta_reg)
        cand["seed_index"] = idx
        candidates.append(_finalize_candidate(cand, spec, tol_res, delta_reg))

    converged = [c for c in candidates if c["converged"]]
    total_iters = sum(c["iterations"] for c in candidates)
    if not converged:
        best = min(candidates, key=lambda c: c["energy"])
        best = dict(best, iterations=total_iters)
        return _report_from_candidate(best, spec, tol_res, delta_reg, False)

    best = min(converged, key=lambda c: (c["energy"], c["seed_index"]))
    comps = energy_components(best["field"], spec)
    zero_floor = 1e-12 * (1.0 + spec.epsilon * comps.dirichlet + comps.gain + comps.loss)
    if best["energy"] >= -zero_floor:
        return _zero_report(spec, tol_res, delta_reg, total_iters, best["trace"])

    tie_tol = 1e-10 * (1.0 + abs(best["energy"]))
    ties = [c for c in converged if abs(c["energy"] - best["energy"]) <= tie_tol]
    first = min(ties, key=lambda c: c["seed_index"])
    value_scale = 1.0 + float(np.max(np.abs(first["values"])))
    multiplicity = any(
        float(np.max(np.abs(c["values"] - first["values"]))) > 1e-6 * value_scale
        for c in ties
    )
    first = dict(first, iterations=total_iters)
    return _report_from_candidate(first, spec, tol_res, delta_reg, multiplicity)


@dataclass(frozen=True)
class MountainPassReport:
    """Outcome of the path min-max for the second solution.

    ``path_level`` is the minimized path maximum of the positive-part energy,
    the discrete mountain-pass level.
    """

    field: DiscreteField
    energy: float
    path_level: float
    residual_norm: float
    iterations: int
    converged: bool
    tol_effective: float
    delta_reg: float

    def to_json_dict(self, include_field: bool = True) -> dict:
        out = {
            "energy": self.energy,
            "path_level": self.path_level,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "tol_effective": self.tol_effective,
            "delta_reg": self.delta_reg,
        }
        if include_field:
            out["field"] = self.field.to_json_dict(include_mesh=False)
        return out


def _ray_peak_scale(comps: EnergyComponents, eps: float,
                    exponents: Exponents) -> float:
    """Scale of the energy maximum along the ray through a Nehari point.

    With (T, A, B) the components at the endpoint, h(t) = eps T - A t^(q-p)
    + B t^(g-p) vanishes at t = 1 by the Nehari identity and at the barrier
    peak t < 1; bisection between a sign change brackets the smaller root.
    """
    p, q, g = exponents.p, exponents.q, exponents.gamma
    eT, A, B = eps * comps.dirichlet, comps.gain, comps.loss

    def h(t: float) -> float:
        return eT - A * t ** (q - p) + B * t ** (g - p)

    grid = np.geomspace(1e-10, 1.0 - 1e-9, 400)
    sign = np.array([h(t) for t in grid])
    neg = np.nonzero(sign < 0.0)[0]
    if neg.size == 0:
        return 1e-2
    lo, hi = grid[max(neg[0] - 1, 0)], grid[neg[0]]
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def solve_mountain_pass(spec: ProblemSpec, ground_state: SolveReport,
                        tol_res: float = 1e-8, path_points: int = 21,
                        max_iters: int = 600, seed: int = 0) -> MountainPassReport:
    """Min-max over polyline paths joining the zero field to the ground state.

    Initial knots cluster around the barrier peak of the ray through the
    endpoint, where the path maximum lives.  Every sweep moves each interior
    knot one Armijo step down the positive-part energy, then re-maximizes
    over knots and dense samples inside each segment; a segment interior that
    beats every knot is promoted to a knot in place of the lowest-energy one.
    The sweep loop stops when the knot carrying the path maximum is
    residual-stationary and no sampled point exceeds it.  The returned field
    is the nodal positive part of that knot, rechecked against the plain
    residual.

    Raises:
        InputError: the supplied ground state is unusable as the far endpoint
            (not converged, or its energy is not negative).
    """
    if path_points < 3:
        raise InputError("the path needs at least 3 knots")
    if not ground_state.converged or ground_state.energy >= 0.0 or ground_state.is_zero():
        raise InputError("mountain-pass endpoint must be a converged negative-energy "
                         "ground state")
    mesh = spec.mesh
    delta_reg = DEFAULT_DELTA_REG if spec.exponents.p < 2.0 else 0.0
    pre = InteriorSolver(mesh, alpha=spec.epsilon, beta=1.0)
    end = ground_state.field
    t_peak = _ray_peak_scale(energy_components(end, spec), spec.epsilon,
                             spec.exponents)
    n_ridge = (path_points - 1) // 2
    n_lin = path_points - 2 - n_ridge
    ridge = np.clip(t_peak * np.geomspace(0.2, 5.0, n_ridge), 1e-12, 1.0 - 1e-12)
    lin = np.linspace(0.0, 1.0, n_lin + 2)[1:-1]
    ts = np.sort(np.concatenate([[0.0, 1.0], ridge, lin]))
    knots = ts[:, None] * end.values[None, :]
    steps = np.ones(path_points)

    def plus_energy(values: np.ndarray) -> float:
        return phi_plus(DiscreteField(mesh, values), spec)

    seg_fracs = np.linspace(0.0, 1.0, 10)[1:-1]
    result = None
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        energies = np.array([plus_energy(k) for k in knots])
        # Promote a segment-interior maximum so the ridge is always knot-resolved.
        seg_j, seg_best, seg_val = -1, None, -np.inf
        for j in range(knots.shape[0] - 1):
            for f in seg_fracs:
                cand = (1.0 - f) * knots[j] + f * knots[j + 1]
                val = plus_energy(cand)
                if val > seg_val:
                    seg_j, seg_best, seg_val = j, cand, val
        knot_max = float(energies.max())
        if seg_val > knot_max + 1e-12 * (1.0 + abs(knot_max)):
            knots = np.insert(knots, seg_j + 1, seg_best, axis=0)
            steps = np.insert(steps, seg_j + 1, 1.0)
            energies = np.insert(energies, seg_j + 1, seg_val)
            interior = energies[1:-1]
            drop = 1 + int(np.argmin(interior))
            knots = np.delete(knots, drop, axis=0)
            steps = np.delete(steps, drop)
            energies = np.delete(energies, drop)
        k_star = int(np.argmax(energies))
        if 0 < k_star < path_points - 1:
            top = DiscreteField(mesh, knots[k_star])
            residual = weak_residual_plus(top, spec, delta_reg).values
            res_norm = float(np.max(np.abs(residual)))
            tol_eff = tol_res * (1.0 + abs(energies[k_star]))
            if res_norm <= tol_eff:
                result = (knots[k_star], float(energies[k_star]))
                break
        for j in range(1, path_points - 1):
            kf = DiscreteField(mesh, knots[j])
            r = weak_residual_plus(kf, spec, delta_reg).values
            direction = -pre.apply(r)
            slope = float(np.dot(r, direction))
            if slope >= 0.0:
                continue
            t = steps[j]
            energy_j = float(energies[j])
            for _ in range(40):
                cand = knots[j] + t * direction
                if plus_energy(cand) <= energy_j + ARMIJO_SLOPE * t * slope:
                    knots[j] = cand
                    steps[j] = min(2.0 * t, 1e8)
                    break
                t *= ARMIJO_FACTOR

    if result is None:
        energies = np.array([plus_energy(k) for k in knots])
        k_star = int(np.argmax(energies))
        result = (knots[k_star], float(energies[k_star]))
        converged = False
    else:
        converged = True

    values = np.maximum(result[0], 0.0)
    field = DiscreteField(mesh, values)
    energy = phi(field, spec)
    res_norm = float(np.max(np.abs(weak_residual(field, spec, delta_reg).values)))
    tol_eff = tol_res * (1.0 + abs(energy))
    return MountainPassReport(
        field=field, energy=energy, path_level=result[1],
        residual_norm=res_norm, iterations=sweeps,
        converged=converged and res_norm <= tol_eff,
        tol_effective=tol_eff, delta_reg=delta_reg,
    )


@dataclass(frozen=True)
class NehariDiagnostics:
    nehari_residual: float
    fiber_second_derivative: float
    ray_constraint: float
    ray_zero_energy: float


def nehari_diagnostics(u: DiscreteField, spec: ProblemSpec) -> NehariDiagnostics:
    """Constraint residual and fiber curvature at s = 1 for a nontrivial field.

    Raises:
        DomainError: the field is trivial (no gradient energy).
    """
    comps = energy_components(u, spec)
    if comps.dirichlet <= 0.0:
        raise DomainError("Nehari diagnostics need a nontrivial field")
    ex = spec.exponents
    dir_, gain, loss = comps.dirichlet, comps.gain, comps.loss
    eps = spec.epsilon
    nehari = abs(eps * dir_ - gain + loss) / (eps * dir_ + gain + loss)
    second = (ex.p - ex.q) * eps * dir_ + (ex.gamma - ex.q) * loss
    ray_constraint = (gain - loss) / dir_
    ray_zero = (ex.p / dir_) * (gain / ex.q - loss / ex.gamma)
    return NehariDiagnostics(nehari, second, ray_constraint, ray_zero)


def embedding_constant(mesh: Mesh, p: float, r: float, restarts: int = 4,
                       max_iters: int = 200, seed: int = 0) -> float:
    """Estimate sup ||u||_r / ||grad u||_p over zero-trace fields on the mesh.

    Projected gradient ascent on the logarithm of the quotient, preconditioned
    like the threshold search.  The estimate is a lower bound up to ascent
    accuracy; callers inflating it for safety should do so explicitly.
    """
    if r < 1 or p <= 1:
        raise InputError("embedding constant needs p > 1 and r >= 1")
    solver = InteriorSolver(mesh, alpha=1.0, beta=1.0)
    best = None
    for i in range(restarts):
        rng = np.random.default_rng((seed, 7 + i))
        u = _zero_boundary(rng.uniform(0.0, 1.0, mesh.n_nodes), mesh)
        value = None
        step = 1.0
        for _ in range(max_iters):
            vals = mesh.values_at_qp(u)
            absvals = np.abs(vals)
            lr_int = mesh.integrate(absvals**r)
            grads = mesh.gradients(u)
            gnorm_sq = np.einsum("ed,ed->e", grads, grads)
            grad_int = float(np.dot(mesh.el_measures, gnorm_sq ** (p / 2.0)))
            if lr_int <= 0.0 or grad_int <= 0.0:
                break
            value = np.log(lr_int) / r - np.log(grad_int) / p
            point_form = mesh.assemble_point_term(absvals ** (r - 2.0) * vals)
            factor = np.zeros_like(gnorm_sq)
            nz = gnorm_sq > 0.0
            factor[nz] = gnorm_sq[nz] ** ((p - 2.0) / 2.0)
            flux_form = mesh.assemble_flux_term(factor[:, None] * grads)
            grad = point_form / lr_int - flux_form / grad_int
            grad[mesh.boundary_nodes] = 0.0
            direction = solver.apply(grad)
            slope = float(np.dot(grad, direction))
            if slope <= 0.0:
                break
            t = step
            new_u = None
            for _ in range(40):
                cand = u + t * direction
                cvals = np.abs(mesh.values_at_qp(cand))
                clr = mesh.integrate(cvals**r)
                cgr = mesh.gradients(cand)
                cgn = np.einsum("ed,ed->e", cgr, cgr)
                ct = float(np.dot(mesh.el_measures, cgn ** (p / 2.0)))
                if clr > 0.0 and ct > 0.0:
                    cand_val = np.log(clr) / r - np.log(ct) / p
                    if cand_val >= value + 1e-4 * t * slope:
                        new_u = cand / ct ** (1.0 / p)
                        break
                t *= ARMIJO_FACTOR
            if new_u is None:
                break
            u = new_u
            step = min(2.0 * t, 1e6)
        if value is not None and (best is None or value > best):
            best = value
    if best is None:
        raise DomainError("embedding-constant ascent found no usable field")
    return float(np.exp(best))


@dataclass(frozen=True)
class BarrierEstimate:
    """Sphere radius and energy floor certifying the mountain-pass geometry.

    On the sphere ||grad u||_p = radius the positive-part energy is at least
    ``level``; both follow from the embedding bound
    gain(u) <= sup(a) * C^q * ||grad u||_p^q.
    """

    radius: float
    level: float
    embedding_used: float


def barrier_estimate(spec: ProblemSpec, embedding: float | None = None,
                     safety: float = 1.5, seed: int = 0) -> BarrierEstimate:
    """Compute the small-sphere barrier below the mountain-pass level."""
    ex = spec.exponents
    if embedding is None:
        embedding = embedding_constant(spec.mesh, ex.p, ex.q, seed=seed)
    c_used = safety * embedding
    a_hat = spec.a.upper
    if a_hat <= 0.0:
        raise DomainError("the barrier needs a nontrivial gain coefficient")
    eps = spec.epsilon
    radius = (eps * ex.q / (2.0 * ex.p * a_hat * c_used**ex.q)) ** (1.0 / (ex.q - ex.p))
    level = (eps / (2.0 * ex.p)) * radius**ex.p
    return BarrierEstimate(radius=radius, level=level, embedding_used=c_used)
