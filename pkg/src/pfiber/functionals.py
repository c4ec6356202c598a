"""Energy functionals and their weak derivatives.

For a zero-trace field u the energy is

    phi(u) = (eps/p) * dirichlet - (1/q) * gain + (1/gamma) * loss

with the three components

    dirichlet = int |grad u|^p,
    gain      = int a(x) |u|^q,
    loss      = int b(x) |u|^gamma.

The mountain-pass variant phi_plus replaces u by its positive part inside
``gain`` and ``loss`` but keeps the full Dirichlet term, which makes every
critical point nonnegative without changing the negative-energy landscape.

Weak derivatives are assembled against the nodal hat functions.  For p < 2
the degenerate gradient factor |g|^(p-2) is evaluated as
(|g|^2 + delta_reg^2)^((p-2)/2); energies passed to finite-difference checks
can be regularized the same way so the pairing stays exact.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError
from .problem import DiscreteField, ProblemSpec

__all__ = [
    "EnergyComponents",
    "energy_components",
    "phi",
    "phi_plus",
    "weak_residual",
    "weak_residual_plus",
    "derivative_forms",
    "j_pointwise",
    "J_functional",
    "membership_tolerance",
    "Admissibility",
    "admissibility",
    "w1p_norm",
]

DEFAULT_DELTA_REG = 1e-12


@dataclass(frozen=True)
class EnergyComponents:
    """The three raw integrals entering the energy, before their prefactors."""

    dirichlet: float
    gain: float
    loss: float


def _gradient_factor(grads: np.ndarray, p: float, delta_reg: float) -> np.ndarray:
    """|g|^(p-2) per element, regularized when a delta is supplied."""
    norm_sq = np.einsum("ed,ed->e", grads, grads)
    if delta_reg > 0.0:
        return (norm_sq + delta_reg**2) ** ((p - 2.0) / 2.0)
    if p == 2.0:
        return np.ones_like(norm_sq)
    # For p > 2 the factor vanishes with the gradient; avoid 0**negative.
    out = np.zeros_like(norm_sq)
    nz = norm_sq > 0.0
    out[nz] = norm_sq[nz] ** ((p - 2.0) / 2.0)
    return out


def _resolve_delta(spec: ProblemSpec, delta_reg) -> float:
    if delta_reg is None:
        return DEFAULT_DELTA_REG if spec.exponents.p < 2.0 else 0.0
    if delta_reg < 0.0:
        raise InputError("delta_reg must be nonnegative")
    return float(delta_reg)


def energy_components(u: DiscreteField, spec: ProblemSpec,
                      check_boundary: bool = True) -> EnergyComponents:
    """Compute (dirichlet, gain, loss) for a zero-trace field."""
    if check_boundary:
        u.require_zero_boundary("energy argument")
    mesh = u.mesh
    ex = spec.exponents
    grads = mesh.gradients(u.values)
    gnorm = np.sqrt(np.einsum("ed,ed->e", grads, grads))
    dirichlet = float(np.dot(mesh.el_measures, gnorm**ex.p))
    vals = np.abs(mesh.values_at_qp(u.values))
    gain = mesh.integrate(spec.a_qp * vals**ex.q)
    loss = mesh.integrate(spec.b_qp * vals**ex.gamma)
    return EnergyComponents(dirichlet, gain, loss)


def phi(u: DiscreteField, spec: ProblemSpec, delta_reg: float = 0.0) -> float:
    """Energy of a zero-trace field; positive delta_reg regularizes the p-term."""
    comps = energy_components(u, spec)
    ex = spec.exponents
    dirichlet = comps.dirichlet
    if delta_reg > 0.0:
        mesh = u.mesh
        grads = mesh.gradients(u.values)
        norm_sq = np.einsum("ed,ed->e", grads, grads)
        dirichlet = float(np.dot(mesh.el_measures,
                                 (norm_sq + delta_reg**2) ** (ex.p / 2.0)))
    return (spec.epsilon / ex.p) * dirichlet - comps.gain / ex.q + comps.loss / ex.gamma


def phi_plus(u: DiscreteField, spec: ProblemSpec) -> float:
    """Energy with the positive part in the gain and loss terms only."""
    u.require_zero_boundary("energy argument")
    mesh = u.mesh
    ex = spec.exponents
    grads = mesh.gradients(u.values)
    gnorm = np.sqrt(np.einsum("ed,ed->e", grads, grads))
    dirichlet = float(np.dot(mesh.el_measures, gnorm**ex.p))
    plus = np.maximum(mesh.values_at_qp(np.maximum(u.values, 0.0)), 0.0)
    gain = mesh.integrate(spec.a_qp * plus**ex.q)
    loss = mesh.integrate(spec.b_qp * plus**ex.gamma)
    return (spec.epsilon / ex.p) * dirichlet - gain / ex.q + loss / ex.gamma


def derivative_forms(u: DiscreteField, spec: ProblemSpec,
                     delta_reg=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Weak-form building blocks against the nodal basis, one triple per node.

        flux_form_i = int |grad u|^(p-2) grad u . grad hat_i
        gain_form_i = int a |u|^(q-2) u hat_i
        loss_form_i = int b |u|^(gamma-2) u hat_i

    The derivatives of the raw energy components are p, q, gamma times these,
    and the energy residual combines them as
    eps*flux_form - gain_form + loss_form.  Boundary entries are zeroed.
    """
    mesh = u.mesh
    ex = spec.exponents
    delta = _resolve_delta(spec, delta_reg)
    grads = mesh.gradients(u.values)
    factor = _gradient_factor(grads, ex.p, delta)
    flux_form = mesh.assemble_flux_term(factor[:, None] * grads)
    vals = mesh.values_at_qp(u.values)
    absvals = np.abs(vals)
    gain_form = mesh.assemble_point_term(spec.a_qp * absvals ** (ex.q - 2.0) * vals)
    loss_form = mesh.assemble_point_term(spec.b_qp * absvals ** (ex.gamma - 2.0) * vals)
    for form in (flux_form, gain_form, loss_form):
        form[mesh.boundary_nodes] = 0.0
    return flux_form, gain_form, loss_form


def weak_residual(u: DiscreteField, spec: ProblemSpec, delta_reg=None) -> DiscreteField:
    """Nodal weak residual of the energy; zero exactly at critical points."""
    u.require_zero_boundary("residual argument")
    flux_form, gain_form, loss_form = derivative_forms(u, spec, delta_reg)
    return DiscreteField(u.mesh, spec.epsilon * flux_form - gain_form + loss_form)


def weak_residual_plus(u: DiscreteField, spec: ProblemSpec, delta_reg=None) -> DiscreteField:
    """Weak residual of phi_plus: the gain/loss terms see the positive part."""
    u.require_zero_boundary("residual argument")
    mesh = u.mesh
    ex = spec.exponents
    delta = _resolve_delta(spec, delta_reg)
    grads = mesh.gradients(u.values)
    factor = _gradient_factor(grads, ex.p, delta)
    flux_form = mesh.assemble_flux_term(factor[:, None] * grads)
    plus = np.maximum(mesh.values_at_qp(np.maximum(u.values, 0.0)), 0.0)
    gain_form = mesh.assemble_point_term(spec.a_qp * plus ** (ex.q - 1.0))
    loss_form = mesh.assemble_point_term(spec.b_qp * plus ** (ex.gamma - 1.0))
    out = spec.epsilon * flux_form - gain_form + loss_form
    out[mesh.boundary_nodes] = 0.0
    return DiscreteField(mesh, out)


def j_pointwise(alpha: float, beta: float, s, q: float, gamma: float):
    """Pointwise double-well density -(alpha/q) s^q + (beta/gamma) s^gamma, s >= 0."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise InputError("the well density is defined for nonnegative amplitudes")
    out = -(alpha / q) * s**q + (beta / gamma) * s**gamma
    return float(out) if out.ndim == 0 else out


def J_functional(u: DiscreteField, spec: ProblemSpec) -> float:
    """Integral of the pointwise well at |u|; no boundary condition required."""
    mesh = u.mesh
    ex = spec.exponents
    vals = np.abs(mesh.values_at_qp(u.values))
    density = -(spec.a_qp / ex.q) * vals**ex.q + (spec.b_qp / ex.gamma) * vals**ex.gamma
    return mesh.integrate(density)


def membership_tolerance(spec: ProblemSpec) -> float:
    """Quadrature-floor tolerance deciding whether the gain term is positive."""
    return 1e-12 * (1.0 + spec.b.upper * spec.mesh.volume)


@dataclass(frozen=True)
class Admissibility:
    """Whether a field's ray can meet the constraint manifold (gain > tol)."""

    admissible: bool
    gain: float
    tol: float


def admissibility(u: DiscreteField, spec: ProblemSpec) -> Admissibility:
    comps = energy_components(u, spec)
    tol = membership_tolerance(spec)
    return Admissibility(comps.gain > tol, comps.gain, tol)


def w1p_norm(u: DiscreteField, spec: ProblemSpec) -> float:
    """Gradient-seminorm (int |grad u|^p)^(1/p); a norm on zero-trace fields."""
    comps = energy_components(u, spec, check_boundary=False)
    return comps.dirichlet ** (1.0 / spec.exponents.p)


def require_nontrivial(comps: EnergyComponents, what: str = "field") -> None:
    if comps.dirichlet <= 0.0:
        raise DomainError(f"{what} must be nontrivial (positive gradient energy)")
