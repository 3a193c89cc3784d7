"""Rayleigh-Schrodinger perturbation theory for complex eigenfrequencies.

The inverse density is perturbed as 1/rho = (1/rho0) * (1 + mu * V(x))
with V piecewise constant and supported strictly inside the cavity, so
the perturbed model stays piecewise constant and the boundary term of the
bilinear map never enters matrix elements.  The perturbation operator has
(1, 2) entry i * mu * V / rho0, and inserting it into the bilinear map
gives

    (F_m, dH F_n) = mu * omega_m * omega_n * integral rho0 V f_m f_n dx,

symmetric in (m, n) as it must be for a symmetric perturbed generator.
The usual eigenvalue series follows with every inner product replaced by
the bilinear map and (F_n, F_n) = 2 omega_n:

    first order:   (F_n, dH F_n) / (2 mu omega_n)
    second order:  sum_{m != n} w_nm * w_mn / (4 omega_n omega_m (omega_n - omega_m))

with w_mn = (F_m, dH F_n) / mu.  An exact re-solve of the perturbed model
(`exact_shift_oracle`) is the ground truth the series is tested against.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegeneratePairError,
    ModelError,
    RootLeftRectangleError,
    UnnormalizedModeError,
)
from .model import DensityProfile, Family, Segment, validate_model
from .biorthogonal import product_integral
from .spectrum import QnmMode, _newton, characteristic


@dataclass(frozen=True)
class VPiece:
    x_left: float
    x_right: float
    value: float


@dataclass(frozen=True)
class PerturbationSpec:
    """Piecewise-constant V(x) with support strictly inside (0, a), plus mu.

    Gaps between pieces mean V = 0 there; a piece touching x = a must have
    value 0 (it is dropped), so the inverse-density perturbation never
    reaches the boundary.
    """

    pieces: tuple[VPiece, ...]
    mu: float

    @staticmethod
    def from_pieces(pieces, mu: float, a: float) -> "PerturbationSpec":
        vp = tuple(p if isinstance(p, VPiece) else VPiece(*map(float, p))
                   for p in pieces)
        vp = tuple(sorted((p for p in vp if p.value != 0.0),
                          key=lambda p: p.x_left))
        for p in vp:
            if not (0.0 <= p.x_left < p.x_right <= a):
                raise ModelError(f"V piece {p} outside [0, {a}]")
            if p.x_right >= a - 1e-12 * (1 + a):
                raise ModelError(
                    "V must vanish on a neighbourhood of x = a")
        for p, q in zip(vp[:-1], vp[1:]):
            if q.x_left < p.x_right:
                raise ModelError(f"V pieces {p} and {q} overlap")
        return PerturbationSpec(pieces=vp, mu=float(mu))

    def value_at(self, x0: float, x1: float) -> float:
        """V on an interval known not to straddle any V breakpoint."""
        mid = 0.5 * (x0 + x1)
        for p in self.pieces:
            if p.x_left <= mid <= p.x_right:
                return p.value
        return 0.0


def _require_wave(model: DensityProfile):
    if model.family is not Family.WAVE:
        raise ModelError("perturbation theory is defined for the wave family")


def _require_normalized(*modes: QnmMode):
    for m in modes:
        if not m.normalized:
            raise UnnormalizedModeError(
                f"mode at omega = {m.omega} is not normalized")


def matrix_element(m: QnmMode, n: QnmMode, spec: PerturbationSpec,
                   model: DensityProfile) -> complex:
    """(F_m, dH F_n) / mu = omega_m omega_n * integral rho0 V f_m f_n dx."""
    _require_wave(model)
    _require_normalized(m, n)
    cuts = set()
    for p in m.pieces:
        cuts.add(p.x_left)
        cuts.add(p.x_right)
    for vp in spec.pieces:
        cuts.add(vp.x_left)
        cuts.add(vp.x_right)
    xs = sorted(cuts)
    total = 0.0 + 0.0j
    for x0, x1 in zip(xs[:-1], xs[1:]):
        v = spec.value_at(x0, x1)
        if v == 0.0:
            continue
        pm = _piece_at(m, x0, x1)
        pn = _piece_at(n, x0, x1)
        total += pm.weight * v * product_integral(pm, pn, x0, x1)
    return m.omega * n.omega * total


def _piece_at(mode: QnmMode, x0: float, x1: float):
    mid = 0.5 * (x0 + x1)
    for p in mode.pieces:
        if p.x_left <= mid <= p.x_right:
            return p
    raise ModelError(f"interval [{x0}, {x1}] outside the mode's support")


def first_order_shift(n: int, modes, spec: PerturbationSpec,
                      model: DensityProfile) -> complex:
    """d omega_n / d mu at mu = 0: (F_n, dH F_n) / (2 mu omega_n)."""
    mode = modes[n]
    return matrix_element(mode, mode, spec, model) / (2.0 * mode.omega)


def second_order_shift(n: int, modes, spec: PerturbationSpec,
                       model: DensityProfile, truncation: int) -> complex:
    """Second-order eigenvalue coefficient from a truncated mode sum.

    The sum runs over the first `truncation` modes of `modes` other than
    mode n; the list should be conjugate-paired and sorted by |Re omega| so
    truncation cuts a symmetric tail.  Raises DegeneratePairError when a
    retained mode is (nearly) degenerate with mode n.
    """
    mode_n = modes[n]
    others = [m for i, m in enumerate(modes) if i != n][:truncation]
    if not others:
        warnings.warn("second-order sum truncated to nothing; the full "
                      "tail is missing", UserWarning, stacklevel=2)
        return 0.0 + 0.0j
    total = 0.0 + 0.0j
    last = 0.0 + 0.0j
    for m in others:
        gap = mode_n.omega - m.omega
        if abs(gap) < 1e-6 * max(1.0, abs(mode_n.omega)):
            raise DegeneratePairError(
                f"modes at {mode_n.omega} and {m.omega} are degenerate")
        w_nm = matrix_element(mode_n, m, spec, model)
        w_mn = matrix_element(m, mode_n, spec, model)
        last = w_nm * w_mn / (4.0 * mode_n.omega * m.omega * gap)
        total += last
    if abs(last) > 1e-2 * max(abs(total), 1e-300):
        warnings.warn(
            f"second-order tail estimate {abs(last):.2e} is not small "
            f"against the sum {abs(total):.2e}; raise the truncation",
            UserWarning, stacklevel=2)
    return total


def perturbed_model(spec: PerturbationSpec,
                    model: DensityProfile) -> DensityProfile:
    """The exact perturbed model rho = rho0 / (1 + mu V), still piecewise."""
    _require_wave(model)
    cuts = {s.x_left for s in model.segments} | {model.a}
    for vp in spec.pieces:
        cuts.add(vp.x_left)
        cuts.add(vp.x_right)
    xs = sorted(cuts)
    segs = []
    for x0, x1 in zip(xs[:-1], xs[1:]):
        mid = 0.5 * (x0 + x1)
        rho0 = next(s.rho for s in model.segments
                    if s.x_left <= mid <= s.x_right)
        denom = 1.0 + spec.mu * spec.value_at(x0, x1)
        if denom <= 0:
            raise ModelError(f"mu V = {denom - 1.0} makes rho non-positive")
        segs.append(Segment(x0, x1, rho0 / denom))
    return validate_model(segs, model.point_masses, family=model.family)


def exact_shift_oracle(n: int, modes, spec: PerturbationSpec,
                       model: DensityProfile) -> complex:
    """Re-solve the perturbed model seeded at omega_n; returns omega(mu).

    The perturbed root must stay within half the distance to the nearest
    other supplied mode (or a quarter mode spacing when only one mode is
    given); otherwise RootLeftRectangleError is raised, meaning mu is too
    large for the perturbative comparison to be meaningful.
    """
    mode_n = modes[n]
    omega0 = mode_n.omega
    if spec.mu == 0.0:
        return omega0
    pert = perturbed_model(spec, model)
    gaps = [abs(m.omega - omega0) for i, m in enumerate(modes) if i != n]
    radius = 0.5 * min(gaps) if gaps else 0.25 * np.pi / model.a
    box = (omega0.real - radius, omega0.real + radius,
           omega0.imag - radius, omega0.imag + radius)
    tol = 1e-13
    root = _newton(pert, omega0, tol, box)
    if root is None:
        raise RootLeftRectangleError(
            f"Newton left the isolating box around {omega0}")
    if abs(root - omega0) > radius:
        raise RootLeftRectangleError(
            f"perturbed root {root} moved {abs(root - omega0):.3e} "
            f"> {radius:.3e} from {omega0}")
    w, dw = characteristic(pert, root)
    if abs(w) > 1e-8 * (1 + abs(dw)):
        raise RootLeftRectangleError("perturbed solve did not converge")
    return complex(root)
