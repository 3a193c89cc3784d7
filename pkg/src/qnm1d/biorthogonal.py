"""Generalized inner product and bi-orthogonal expansions for open cavities.

Two-component states (phi, phi_hat) of a leaky cavity pair up through the
bilinear map

    (Psi, Phi) = i * { integral_0^{a+} (psihat*phi + psi*phihat) dx
                       + psi(a+) * phi(a+) },

which is linear (not conjugate-linear) in both slots and symmetric; the
boundary term is the only remnant of the field outside the cavity.  Point
masses contribute their share of the integrand through the delta part of
phi_hat.  Under this map the evolution generator is symmetric, distinct
modes are orthogonal, and a mode F with (F, F) = 2*omega carries the
weight that makes expansions read a_n = (F_n, Phi) / (2*omega_n).

For pairs of analytic modes every segment integral is evaluated in closed
form (products of exponentials); sampled states are integrated with the
Gauss-Legendre weights of their quadrature grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import quadrature
from .errors import (
    GridMismatchError,
    TestFunctionLeaksOutsideIntervalError,
    UnnormalizedModeError,
    ZeroNormError,
)
from .model import (
    DensityProfile,
    Family,
    QuadratureGrid,
    TwoComponentState,
    infer_grid,
    mass_phidot_values,
    quadrature_grid,
)
from .spectrum import QnmMode, sample_mode

# FWHM-to-sigma conversion for the Gaussian test function
_FWHM = 2.0 * math.sqrt(2.0 * math.log(2.0))


def dual(state: TwoComponentState) -> TwoComponentState:
    """Duality transform D(phi, phi_hat) = -i (conj(phi_hat), conj(phi)).

    Conjugate-linear, with D applied twice giving the identity.  The result
    is meant for inner-product checks; its mass velocities are left unset.
    """
    return TwoComponentState(grid=state.grid,
                             phi=-1j * np.conj(state.phi_hat),
                             phi_hat=-1j * np.conj(state.phi),
                             mass_phidots=None)


@dataclass(frozen=True)
class BilinearValue:
    """(Psi, Phi) split into its interior and boundary contributions."""

    value: complex
    interior_part: complex
    surface_part: complex


def _exp_integral(kappa: complex, x0: float, x1: float) -> complex:
    """integral_{x0}^{x1} exp(i kappa x) dx, stable for small kappa."""
    h = x1 - x0
    z = 1j * kappa * h
    if abs(z) < 1e-8:
        return np.exp(1j * kappa * x0) * h * (1.0 + z * (0.5 + z * (1 / 6 + z / 24)))
    return (np.exp(1j * kappa * x1) - np.exp(1j * kappa * x0)) / (1j * kappa)


def product_integral(p, q, x0: float, x1: float) -> complex:
    """integral of f_p * f_q over [x0, x1] inside both pieces, closed form."""
    return (p.a_coef * q.a_coef * _exp_integral(p.k + q.k, x0, x1)
            + p.a_coef * q.b_coef * _exp_integral(p.k - q.k, x0, x1)
            + p.b_coef * q.a_coef * _exp_integral(-p.k + q.k, x0, x1)
            + p.b_coef * q.b_coef * _exp_integral(-p.k - q.k, x0, x1))


def _bilinear_modes(psi: QnmMode, phi: QnmMode,
                    model: DensityProfile) -> BilinearValue:
    if len(psi.pieces) != len(phi.pieces):
        raise GridMismatchError("modes come from different models")
    wsum = psi.omega + phi.omega
    integral = 0.0 + 0.0j
    for p, q in zip(psi.pieces, phi.pieces):
        integral += p.weight * product_integral(p, q, p.x_left, p.x_right)
    for pm in model.point_masses:
        integral += pm.mass * psi(pm.position) * phi(pm.position)
    interior = wsum * integral
    surface = 1j * psi.f_at_a * phi.f_at_a
    return BilinearValue(value=interior + surface, interior_part=interior,
                         surface_part=surface)


def _as_state(model, arg, grid):
    if isinstance(arg, QnmMode):
        return sample_mode(model, arg, grid)
    return arg


def _state_value_at(model, state, position):
    i = int(np.argmin(np.abs(state.grid - position)))
    if abs(state.grid[i] - position) > 1e-12 * (1.0 + model.a):
        raise GridMismatchError(
            f"state has no sample at x = {position}; split a segment there")
    return complex(state.phi[i])


def _bilinear_states(psi: TwoComponentState, phi: TwoComponentState,
                     model: DensityProfile,
                     grid: QuadratureGrid) -> BilinearValue:
    integrand = psi.phi_hat * phi.phi + psi.phi * phi.phi_hat
    braces = complex(np.sum(grid.weights * integrand))
    if model.point_masses:
        psi_dots = mass_phidot_values(model, psi)
        phi_dots = mass_phidot_values(model, phi)
        for pm, pd, qd in zip(model.point_masses, psi_dots, phi_dots):
            psi_val = _state_value_at(model, psi, pm.position)
            phi_val = _state_value_at(model, phi, pm.position)
            braces += pm.mass * (pd * phi_val + psi_val * qd)
    interior = 1j * braces
    surface = 1j * complex(psi.phi[-1] * phi.phi[-1])
    return BilinearValue(value=interior + surface, interior_part=interior,
                         surface_part=surface)


def bilinear_map(psi, phi, model: DensityProfile,
                 grid: QuadratureGrid | None = None) -> BilinearValue:
    """(Psi, Phi) for modes and/or sampled states on one model.

    Mode-mode pairs are integrated in closed form per segment piece; as
    soon as a sampled state is involved the integral uses the state's
    quadrature grid (states must share it exactly, else GridMismatchError).
    """
    if isinstance(psi, QnmMode) and isinstance(phi, QnmMode):
        return _bilinear_modes(psi, phi, model)
    states = [s for s in (psi, phi) if isinstance(s, TwoComponentState)]
    if len(states) == 2 and not np.array_equal(states[0].grid, states[1].grid):
        raise GridMismatchError("states live on different grids")
    if grid is None:
        grid = infer_grid(model, states[0].grid)
    elif not np.array_equal(grid.x, states[0].grid):
        raise GridMismatchError("supplied grid does not match the states")
    return _bilinear_states(_as_state(model, psi, grid),
                            _as_state(model, phi, grid), model, grid)


def normalize_mode(mode: QnmMode, model: DensityProfile) -> QnmMode:
    """Rescale so that (F, F) = 2*omega exactly.

    The scale c solves c**2 = 2*omega / (F, F); its sign is fixed by
    requiring Re f'(0) > 0 after scaling (tie broken by Im f'(0) > 0), a
    convention under which the partner mode at -conj(omega) ends up with
    the conjugate eigenfunction.  Raises ZeroNormError at (F, F) = 0,
    which signals an exceptional point the formalism does not cover.
    """
    norm = _bilinear_modes(mode, mode, model).value
    omega = mode.omega
    if abs(norm) < 1e-12 * max(1.0, 2.0 * abs(omega)):
        raise ZeroNormError(f"(F, F) = {norm} at omega = {omega}")
    c = complex(np.sqrt(2.0 * omega / norm))
    fp0 = c * mode.fprime_at_zero
    if fp0.real < 0 or (fp0.real == 0 and fp0.imag < 0):
        c = -c
    return mode.rescaled(c, normalized=True)


@dataclass(frozen=True)
class GramReport:
    """Pairwise bilinear-map values of a mode set."""

    omegas: tuple[complex, ...]
    gram: np.ndarray
    offdiag_max: float


def gram_matrix(modes, model: DensityProfile) -> GramReport:
    """All (F_n, F_m); off-diagonals are reported normalized by
    sqrt(|2 omega_n| |2 omega_m|)."""
    n = len(modes)
    gram = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            val = _bilinear_modes(modes[i], modes[j], model).value
            gram[i, j] = val
            gram[j, i] = val  # the map is symmetric
    offdiag = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                scale = math.sqrt(abs(2 * modes[i].omega)
                                  * abs(2 * modes[j].omega))
                offdiag = max(offdiag, abs(gram[i, j]) / scale)
    return GramReport(omegas=tuple(m.omega for m in modes), gram=gram,
                      offdiag_max=offdiag)


def expansion_coefficients(state0: TwoComponentState, modes,
                           model: DensityProfile) -> np.ndarray:
    """Coefficients a_n = (F_n, Phi(0)) / (2 omega_n) of an initial state.

    All modes must be normalized; the initial state must satisfy the node
    condition phi(0) = 0 (checked softly).
    """
    for m in modes:
        if not m.normalized:
            raise UnnormalizedModeError(
                f"mode at omega = {m.omega} is not normalized")
    scale = float(np.max(np.abs(state0.phi))) if state0.phi.size else 0.0
    if scale > 0 and abs(state0.phi[0]) > 1e-4 * scale:
        warnings.warn("initial state does not vanish at x = 0",
                      UserWarning, stacklevel=2)
    grid = infer_grid(model, state0.grid)
    out = np.empty(len(modes), dtype=complex)
    for i, m in enumerate(modes):
        val = bilinear_map(m, state0, model, grid=grid).value
        out[i] = val / (2.0 * m.omega)
    return out


def superpose(model: DensityProfile, modes, coeffs,
              grid: QuadratureGrid) -> TwoComponentState:
    """Sampled state of sum_n c_n F_n on a quadrature grid."""
    phi = np.zeros(grid.x.size, dtype=complex)
    phi_hat = np.zeros(grid.x.size, dtype=complex)
    dots = [0.0 + 0.0j] * len(model.point_masses)
    for c, m in zip(coeffs, modes):
        f = m(grid.x)
        phi += c * f
        phi_hat += c * (-1j * m.omega) * grid.rho * f
        for k, pm in enumerate(model.point_masses):
            dots[k] += c * (-1j * m.omega) * m(pm.position)
    return TwoComponentState(grid=grid.x, phi=phi, phi_hat=phi_hat,
                             mass_phidots=tuple(dots))


def auto_panels(modes, model: DensityProfile, minimum: int = 8) -> int:
    """Panel count per segment resolving products of the given modes."""
    kmax = 0.0
    for m in modes:
        for p in m.pieces:
            kmax = max(kmax, abs(p.k))
    width = max(s.width for s in model.segments)
    return max(minimum, int(np.ceil(2.0 * kmax * width / 6.0)) + 1)


def sum_rule_residuals(modes, x: float, y: float, testwidth: float,
                       model: DensityProfile,
                       rel_tol: float = 1e-12) -> tuple[complex, complex]:
    """Partial-sum residuals of the two completeness sum rules.

    S1 is the plain partial sum  sum_n f_n(x) f_n(y) / (2 omega_n), which
    tends to zero for a complete, conjugate-paired mode set.

    The companion delta identity  sum_n (1/2) f_n(x) f_n(y) rho(x)
    = delta(x - y)  is tested in smeared form: S2 is the partial sum of
    integral (1/2) f_n(x) f_n(y) rho(x) g(x) dx minus g(y), where g is a
    normalized Gaussian centered at y whose full width at half maximum is
    `testwidth`.  Point masses contribute M f_n(x0) g(x0) to the weighted
    integral.  If the Gaussian carries more than 1e-12 of its mass outside
    [0, a] the smearing is meaningless and
    TestFunctionLeaksOutsideIntervalError is raised.

    Modes should be sorted by |Re omega| and conjugate-paired; the partial
    sums are otherwise arbitrary truncations.
    """
    sigma = testwidth / _FWHM
    leak = 0.5 * (math.erfc(y / (sigma * math.sqrt(2.0)))
                  + math.erfc((model.a - y) / (sigma * math.sqrt(2.0))))
    if leak > 1e-12:
        raise TestFunctionLeaksOutsideIntervalError(
            f"Gaussian mass outside [0, a] is {leak:.3e}")

    def g(xs):
        xs = np.asarray(xs, dtype=float)
        return np.exp(-0.5 * ((xs - y) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))

    edges = [model.segments[0].x_left] + [s.x_right for s in model.segments]
    start = max(8, int(np.ceil(4.0 * max(s.width for s in model.segments) / sigma)))
    s1 = 0.0 + 0.0j
    s2 = -complex(g(np.array([y]))[0])
    for m in modes:
        s1 += m(x) * m(y) / (2.0 * m.omega)
        kmax = max(abs(p.k) for p in m.pieces)
        panels = max(start, int(np.ceil(kmax * max(s.width for s in model.segments) / 4.0)))

        def integrand(xs, mode=m):
            rho = np.ones_like(xs)
            if model.family is Family.WAVE:
                for seg in model.segments:
                    sel = (xs >= seg.x_left) & (xs <= seg.x_right)
                    rho[sel] = seg.rho
            return mode(xs) * rho * g(xs)

        val = quadrature.integrate_adaptive(integrand, edges, rel_tol,
                                            start_panels=panels)
        for pm in model.point_masses:
            val += pm.mass * m(pm.position) * complex(g(np.array([pm.position]))[0])
        s2 += 0.5 * m(y) * val
    return s1, s2


def check_H_symmetry(psi_coeffs, phi_coeffs, modes, model: DensityProfile,
                     panels_per_segment: int | None = None) -> complex:
    """Residual (Psi, H Phi) - (Phi, H Psi) for finite mode superpositions.

    H acts exactly on the superpositions via H F_n = omega_n F_n, and both
    bilinear maps are evaluated through the sampled-state quadrature path,
    so a nonzero residual exposes either quadrature error or a genuine
    orthogonality defect.
    """
    if panels_per_segment is None:
        panels_per_segment = auto_panels(modes, model)
    grid = quadrature_grid(model, panels_per_segment)
    psi_coeffs = np.asarray(psi_coeffs, dtype=complex)
    phi_coeffs = np.asarray(phi_coeffs, dtype=complex)
    omegas = np.array([m.omega for m in modes])
    psi = superpose(model, modes, psi_coeffs, grid)
    phi = superpose(model, modes, phi_coeffs, grid)
    h_psi = superpose(model, modes, omegas * psi_coeffs, grid)
    h_phi = superpose(model, modes, omegas * phi_coeffs, grid)
    lhs = _bilinear_states(psi, h_phi, model, grid).value
    rhs = _bilinear_states(phi, h_psi, model, grid).value
    return lhs - rhs
