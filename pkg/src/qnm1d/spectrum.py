"""Quasinormal-mode spectra of piecewise-constant open cavities.

The mode equation f'' + (rho * omega**2 - V) f = 0 is propagated from the
node f(0) = 0, f'(0) = 1 across the segments with exact 2x2 propagators

    [[c, s], [-u s, c]],   u = k**2,  c = cos(k L),  s = sin(k L) / k,

whose entries are entire functions of u, so complex frequencies and
evanescent segments need no branch bookkeeping.  Interior point masses jump
the slope, f' -> f' - M omega**2 f.  Imposing the outgoing closure
f'(a+) = i omega f(a) yields the characteristic function

    W(omega) = f'(a-) - M_a omega**2 f(a) - i omega f(a),

whose zeros are the quasinormal frequencies.  The omega-derivative of W is
propagated alongside by differentiating every propagator analytically, so
Newton refinement and the argument-principle zero counter both work with
noise-free derivatives.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import quadrature
from .errors import (
    ContourThroughZeroError,
    DegenerateRootError,
    ModeSetNotConjugateClosedWarning,
    NewtonDivergedError,
    NonIntegerWindingNumberError,
    NotAnEigenfrequencyError,
    OmegaZeroError,
)
from .model import DensityProfile, Family, QuadratureGrid, TwoComponentState

# series cutoff on |u| * L**2 below which the propagator entries switch to
# their Taylor forms (keeps the k -> 0 limit exact to round-off)
_SERIES_CUT = 1e-6


def _cs(u, ell):
    """Propagator entries c, s and du-derivatives, entire in u = k**2."""
    u = np.asarray(u, dtype=complex)
    z = u * (ell * ell)
    small = np.abs(z) < _SERIES_CUT
    zs = np.where(small, z, 0.0)
    c_ser = 1.0 + zs * (-1 / 2 + zs * (1 / 24 + zs * (-1 / 720 + zs / 40320)))
    s_ser = ell * (1.0 + zs * (-1 / 6 + zs * (1 / 120 + zs * (-1 / 5040 + zs / 362880))))
    ds_ser = ell ** 3 * (-1 / 6 + zs * (1 / 60 + zs * (-1 / 1680 + zs / 90720)))
    u_safe = np.where(small, 1.0, u)
    w = np.sqrt(u_safe)
    wl = w * ell
    c = np.where(small, c_ser, np.cos(wl))
    s = np.where(small, s_ser, np.sin(wl) / w)
    ds_du = np.where(small, ds_ser, (ell * c - s) / (2 * u_safe))
    dc_du = -0.5 * ell * s
    return c, s, dc_du, ds_du


def _steps(model: DensityProfile):
    """Ordered propagation steps: segment pieces split at interior masses.

    Yields ("piece", x0, x1, c_rho, c_v) with u = c_rho*omega**2 - c_v and
    ("mass", x, M) events; the mass at x = a (if any) is *not* included,
    it belongs to the outgoing closure.
    """
    interior = sorted(model.interior_masses(), key=lambda pm: pm.position)
    steps = []
    it = iter(interior)
    pending = next(it, None)
    for seg in model.segments:
        if model.family is Family.WAVE:
            c_rho, c_v = seg.rho, 0.0
        else:
            c_rho, c_v = 1.0, seg.rho
        x0 = seg.x_left
        while pending is not None and x0 < pending.position < seg.x_right:
            steps.append(("piece", x0, pending.position, c_rho, c_v))
            steps.append(("mass", pending.position, pending.mass))
            x0 = pending.position
            pending = next(it, None)
        steps.append(("piece", x0, seg.x_right, c_rho, c_v))
        if pending is not None and pending.position == seg.x_right:
            steps.append(("mass", pending.position, pending.mass))
            pending = next(it, None)
    return steps


def propagate(model: DensityProfile, omega):
    """Propagate f(0)=0, f'(0)=1 to x = a-.

    Parameters
    ----------
    omega : complex scalar or array of complex frequencies

    Returns
    -------
    f_a, fprime_a_minus, d_f_a, d_fprime_a_minus
        Values at x = a- and their derivatives with respect to omega,
        with the same shape as the input.
    """
    w = np.asarray(omega, dtype=complex)
    f = np.zeros_like(w)
    fp = np.ones_like(w)
    df = np.zeros_like(w)
    dfp = np.zeros_like(w)
    for step in _steps(model):
        if step[0] == "piece":
            _, x0, x1, c_rho, c_v = step
            ell = x1 - x0
            u = c_rho * w * w - c_v
            du = 2.0 * c_rho * w
            c, s, dc_du, ds_du = _cs(u, ell)
            dc = dc_du * du
            ds = ds_du * du
            dm21 = -du * (s + u * ds_du)
            f, fp, df, dfp = (
                c * f + s * fp,
                -u * s * f + c * fp,
                dc * f + c * df + ds * fp + s * dfp,
                dm21 * f - u * s * df + dc * fp + c * dfp,
            )
        else:
            _, _, mass = step
            dfp = dfp - mass * (2.0 * w * f + w * w * df)
            fp = fp - mass * w * w * f
    if np.isscalar(omega):
        return complex(f), complex(fp), complex(df), complex(dfp)
    return f, fp, df, dfp


def characteristic(model: DensityProfile, omega):
    """Outgoing-wave characteristic function W and dW/domega.

    W vanishes exactly at the quasinormal frequencies.  Accepts scalar or
    array omega.
    """
    f, fp, df, dfp = propagate(model, omega)
    w = np.asarray(omega, dtype=complex) if not np.isscalar(omega) else omega
    m_a = model.mass_at_a
    W = fp - m_a * w * w * f - 1j * w * f
    dW = dfp - m_a * (2.0 * w * f + w * w * df) - 1j * f - 1j * w * df
    if np.isscalar(omega):
        return complex(W), complex(dW)
    return W, dW


# ---------------------------------------------------------------------------
# Eigenfunctions

@dataclass(frozen=True)
class ModePiece:
    """f(x) = a_coef * exp(i k x) + b_coef * exp(-i k x) on [x_left, x_right]."""

    x_left: float
    x_right: float
    k: complex
    a_coef: complex
    b_coef: complex
    weight: float  # rho on this piece (wave family) or 1 (Klein-Gordon)


@dataclass(frozen=True)
class QnmMode:
    """One quasinormal mode: eigenfrequency plus analytic eigenfunction."""

    omega: complex
    pieces: tuple[ModePiece, ...]
    normalized: bool = False

    @property
    def coefficients(self) -> tuple[tuple[complex, complex], ...]:
        return tuple((p.a_coef, p.b_coef) for p in self.pieces)

    @property
    def a(self) -> float:
        return self.pieces[-1].x_right

    def __call__(self, x):
        """Evaluate f at points of [0, a] (value is side-independent)."""
        xv = np.asarray(x, dtype=float)
        lefts = np.array([p.x_left for p in self.pieces])
        idx = np.clip(np.searchsorted(lefts, xv, side="right") - 1,
                      0, len(self.pieces) - 1)
        ks = np.array([p.k for p in self.pieces])[idx]
        As = np.array([p.a_coef for p in self.pieces])[idx]
        Bs = np.array([p.b_coef for p in self.pieces])[idx]
        val = As * np.exp(1j * ks * xv) + Bs * np.exp(-1j * ks * xv)
        return complex(val) if np.isscalar(x) else val

    def fprime(self, x, side_left: bool = True):
        """df/dx at a point, taking the piece left (default) or right of x."""
        lefts = [p.x_left for p in self.pieces]
        i = int(np.clip(np.searchsorted(lefts, x, side="right") - 1,
                        0, len(self.pieces) - 1))
        if side_left and i > 0 and x <= self.pieces[i].x_left:
            i -= 1
        p = self.pieces[i]
        return 1j * p.k * (p.a_coef * np.exp(1j * p.k * x)
                           - p.b_coef * np.exp(-1j * p.k * x))

    @property
    def f_at_a(self) -> complex:
        return complex(self(self.a))

    @property
    def fprime_at_a_minus(self) -> complex:
        return complex(self.fprime(self.a, side_left=True))

    @property
    def fprime_at_zero(self) -> complex:
        p = self.pieces[0]
        return complex(1j * p.k * (p.a_coef - p.b_coef))

    def rescaled(self, factor: complex, normalized: bool) -> "QnmMode":
        pieces = tuple(replace(p, a_coef=factor * p.a_coef,
                               b_coef=factor * p.b_coef) for p in self.pieces)
        return QnmMode(omega=self.omega, pieces=pieces, normalized=normalized)


def build_eigenfunction(model: DensityProfile, omega: complex,
                        residual_tol: float = 1e-6) -> QnmMode:
    """Assemble the per-piece exponential coefficients at a root of W.

    Raises NotAnEigenfrequencyError when |W| / (1 + |dW|) exceeds
    residual_tol, i.e. omega is not (close to) an eigenfrequency.
    """
    omega = complex(omega)
    W, dW = characteristic(model, omega)
    if abs(W) > residual_tol * (1.0 + abs(dW)):
        raise NotAnEigenfrequencyError(
            f"|W({omega})| = {abs(W):.3e} is not small")
    if abs(omega) == 0.0:
        raise OmegaZeroError("the static solution carries no mode")
    f = 0.0 + 0.0j
    fp = 1.0 + 0.0j
    pieces = []
    for step in _steps(model):
        if step[0] == "piece":
            _, x0, x1, c_rho, c_v = step
            u = c_rho * omega * omega - c_v
            k = np.sqrt(complex(u))
            if abs(k) * (x1 - x0) < 1e-12:
                raise NotAnEigenfrequencyError(
                    f"k = 0 on [{x0}, {x1}]: exponential coefficients "
                    "degenerate at this frequency")
            A = 0.5 * (f + fp / (1j * k)) * np.exp(-1j * k * x0)
            B = 0.5 * (f - fp / (1j * k)) * np.exp(1j * k * x0)
            pieces.append(ModePiece(x_left=x0, x_right=x1, k=complex(k),
                                    a_coef=complex(A), b_coef=complex(B),
                                    weight=c_rho if model.family is Family.WAVE
                                    else 1.0))
            c, s, _, _ = _cs(u, x1 - x0)
            f, fp = complex(c * f + s * fp), complex(-u * s * f + c * fp)
        else:
            _, _, mass = step
            fp = fp - mass * omega * omega * f
    return QnmMode(omega=omega, pieces=tuple(pieces), normalized=False)


def sample_mode(model: DensityProfile, mode: QnmMode,
                grid: QuadratureGrid) -> TwoComponentState:
    """Sample a mode as a two-component state on a quadrature grid.

    phi_hat = -i omega rho f with the grid's side-resolved density; the
    velocity -i omega f at every point mass is recorded alongside.
    """
    f = mode(grid.x)
    phi_hat = -1j * mode.omega * grid.rho * f
    mass_phidots = tuple(-1j * mode.omega * mode(pm.position)
                         for pm in model.point_masses)
    return TwoComponentState(grid=grid.x, phi=f, phi_hat=phi_hat,
                             mass_phidots=mass_phidots)


def conjugate_partner(mode: QnmMode) -> QnmMode:
    """The mode at -conj(omega) with f_partner = conj(f).

    For real profiles the spectrum is symmetric under omega -> -conj(omega)
    and the partner eigenfunction is the complex conjugate; a normalized
    mode stays normalized.
    """
    pieces = tuple(ModePiece(x_left=p.x_left, x_right=p.x_right,
                             k=-np.conj(p.k), a_coef=np.conj(p.a_coef),
                             b_coef=np.conj(p.b_coef), weight=p.weight)
                   for p in mode.pieces)
    return QnmMode(omega=-np.conj(mode.omega), pieces=pieces,
                   normalized=mode.normalized)


def is_conjugate_closed(omegas, tol: float = 1e-8) -> bool:
    """True when the frequency set is closed under omega -> -conj(omega)."""
    arr = np.asarray(list(omegas), dtype=complex)
    for w in arr:
        target = -np.conj(w)
        if not np.any(np.abs(arr - target) <= tol * (1.0 + abs(w))):
            return False
    return True


def close_conjugate(modes, tol: float = 1e-8):
    """Modes plus any missing conjugate partners, sorted by Re omega.

    Purely imaginary (overdamped) frequencies are their own partners and
    are not duplicated.
    """
    out = list(modes)
    omegas = [m.omega for m in out]
    for m in modes:
        target = -np.conj(m.omega)
        if not any(abs(w - target) <= tol * (1.0 + abs(m.omega))
                   for w in omegas):
            partner = conjugate_partner(m)
            out.append(partner)
            omegas.append(partner.omega)
    out.sort(key=lambda m: (m.omega.real, m.omega.imag))
    return out


def warn_if_not_conjugate_closed(modes, tol: float = 1e-8) -> None:
    if not is_conjugate_closed([m.omega for m in modes], tol):
        warnings.warn(
            "mode set is not conjugate-closed: real initial data will "
            "acquire spurious imaginary parts",
            ModeSetNotConjugateClosedWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# Root search

@dataclass(frozen=True)
class SearchRegion:
    """Complex-frequency rectangle to search, with Newton tolerance."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    tol: float = 1e-12

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError("degenerate search rectangle")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    @property
    def diag(self) -> float:
        return float(np.hypot(self.re_max - self.re_min,
                              self.im_max - self.im_min))


_GL_EDGE_N = 16
_MAX_EDGE_PANELS = 2 ** 16
_NUDGE_FRACTIONS = (0.0, 1e-4, -1e-4, 3e-4, -3e-4, 1e-3, -1e-3, 3e-3)
_SPLIT_FRACTIONS = (0.5, 0.53, 0.47, 0.56, 0.44, 0.51, 0.49, 0.59)


def _edge_values(model, z0, z1, panels):
    t, wt = quadrature.gauss_rule(_GL_EDGE_N)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    tt = (mid[:, None] + half[:, None] * t[None, :]).ravel()
    ww = (half[:, None] * wt[None, :]).ravel()
    z = z0 + tt * (z1 - z0)
    W, dW = characteristic(model, z)
    return z, W, dW, ww * (z1 - z0)


def _winding(model, bounds, int_tol=1e-3, start_panels=8,
             zero_rtol=1e-12):
    """Argument-principle integral over the rectangle boundary.

    Returns the (float) winding number; raises ContourThroughZeroError if
    |W| on the contour dips below zero_rtol times its median there, and
    NonIntegerWindingNumberError when refinement stalls away from an
    integer.
    """
    re0, re1, im0, im1 = bounds
    corners = [re0 + 1j * im0, re1 + 1j * im0, re1 + 1j * im1, re0 + 1j * im1]
    panels = start_panels
    prev = None
    while panels <= _MAX_EDGE_PANELS:
        total = 0.0 + 0.0j
        min_absw = np.inf
        med_absw = []
        for z0, z1 in zip(corners, corners[1:] + corners[:1]):
            _, W, dW, wz = _edge_values(model, z0, z1, panels)
            absw = np.abs(W)
            min_absw = min(min_absw, float(absw.min()))
            med_absw.append(np.median(absw))
            total += np.sum(wz * dW / W)
        if min_absw < zero_rtol * max(np.median(med_absw), 1e-300):
            raise ContourThroughZeroError(
                f"|W| ~ {min_absw:.2e} on the counting contour")
        val = total / (2j * np.pi)
        nearest = round(val.real)
        if (abs(val - nearest) < int_tol and prev is not None
                and abs(val - prev) < int_tol):
            return val.real
        prev = val
        panels *= 2
    raise NonIntegerWindingNumberError(
        f"winding integral did not stabilize (last value {prev})")


def count_zeros(model: DensityProfile, rect: SearchRegion,
                int_tol: float = 1e-3) -> int:
    """Number of zeros of W inside a rectangle (argument principle).

    The contour is nudged outward by deterministic offsets when it runs
    through a zero; ContourThroughZeroError is raised once the nudge
    budget is exhausted.
    """
    n, _ = _count_nudged(model,
                         (rect.re_min, rect.re_max, rect.im_min, rect.im_max),
                         int_tol)
    return n


def _count_nudged(model, bounds, int_tol=1e-3):
    re0, re1, im0, im1 = bounds
    dre, dim = re1 - re0, im1 - im0
    last_exc = None
    for frac in _NUDGE_FRACTIONS:
        nb = (re0 - frac * dre, re1 + frac * dre,
              im0 - frac * dim, im1 + frac * dim)
        try:
            val = _winding(model, nb, int_tol)
        except ContourThroughZeroError as exc:
            last_exc = exc
            continue
        n = round(val)
        if abs(val - n) < 0.5 - 0.1:
            return int(n), nb
        raise NonIntegerWindingNumberError(
            f"winding number {val} too far from an integer")
    raise ContourThroughZeroError(
        f"could not nudge the contour off a zero: {last_exc}")


def _newton(model, z0, tol, bounds, max_iter=60):
    z = complex(z0)
    re0, re1, im0, im1 = bounds
    margin = 0.5 * max(re1 - re0, im1 - im0)
    for _ in range(max_iter):
        W, dW = characteristic(model, z)
        if dW == 0:
            return None
        step = W / dW
        z = z - step
        if not (re0 - margin <= z.real <= re1 + margin
                and im0 - margin <= z.imag <= im1 + margin):
            return None
        if abs(step) <= tol * (1.0 + abs(z)):
            # one polishing step
            W, dW = characteristic(model, z)
            if dW != 0:
                z = z - W / dW
            return z
    return None


def _split_line_clear(model, bounds, axis, coord, n_probe=64):
    re0, re1, im0, im1 = bounds
    if axis == "re":
        z = coord + 1j * np.linspace(im0, im1, n_probe)
    else:
        z = np.linspace(re0, re1, n_probe) + 1j * coord
    W, _ = characteristic(model, z)
    absw = np.abs(W)
    return absw.min() > 1e-9 * max(np.median(absw), 1e-300)


def _search(model, bounds, tol, roots, depth=0):
    n, bounds = _count_nudged(model, bounds)
    if n == 0:
        return
    re0, re1, im0, im1 = bounds
    diag = float(np.hypot(re1 - re0, im1 - im0))
    if n == 1:
        z = _newton(model, complex(0.5 * (re0 + re1), 0.5 * (im0 + im1)),
                    tol, bounds)
        inside = (z is not None
                  and re0 - 1e-9 * diag <= z.real <= re1 + 1e-9 * diag
                  and im0 - 1e-9 * diag <= z.imag <= im1 + 1e-9 * diag)
        if inside:
            roots.append(z)
            return
        if diag < max(1e3 * tol, 1e-9):
            raise NewtonDivergedError(
                f"Newton failed in the isolating box around "
                f"{0.5 * (re0 + re1)}{0.5 * (im0 + im1):+}j")
    elif diag < max(1e3 * tol, 1e-10):
        raise DegenerateRootError(
            f"{n} zeros below the minimum isolation size near "
            f"{0.5 * (re0 + re1)}{0.5 * (im0 + im1):+}j; "
            "degenerate spectra are not supported")
    if depth > 60:
        raise NewtonDivergedError("subdivision recursion limit hit")
    axis = "re" if (re1 - re0) >= (im1 - im0) else "im"
    lo, hi = (re0, re1) if axis == "re" else (im0, im1)
    for frac in _SPLIT_FRACTIONS:
        cut = lo + frac * (hi - lo)
        if not _split_line_clear(model, bounds, axis, cut):
            continue
        if axis == "re":
            sub1 = (re0, cut, im0, im1)
            sub2 = (cut, re1, im0, im1)
        else:
            sub1 = (re0, re1, im0, cut)
            sub2 = (re0, re1, cut, im1)
        n1, _ = _count_nudged(model, sub1)
        n2, _ = _count_nudged(model, sub2)
        if n1 + n2 != n:
            continue  # a zero sits too close to the cut; try another split
        _search(model, sub1, tol, roots, depth + 1)
        _search(model, sub2, tol, roots, depth + 1)
        return
    raise ContourThroughZeroError(
        "no admissible split line found; zeros crowd every candidate cut")


def find_modes(model: DensityProfile, rect: SearchRegion):
    """All quasinormal modes inside a rectangle, sorted by Re omega.

    Zeros of W are isolated by recursive subdivision with argument-
    principle counts, refined by Newton iteration with the analytic
    dW/domega, de-duplicated, and returned with their (unnormalized)
    eigenfunctions.  omega = 0 is excluded by policy: it corresponds to
    the static solution, not a mode.
    """
    roots: list[complex] = []
    _search(model, (rect.re_min, rect.re_max, rect.im_min, rect.im_max),
            rect.tol, roots)
    unique: list[complex] = []
    for z in sorted(roots, key=lambda z: (z.real, z.imag)):
        if all(abs(z - u) > 10 * rect.tol * (1.0 + abs(z)) for u in unique):
            unique.append(z)
    unique = [z for z in unique if abs(z) > max(10 * rect.tol, 1e-12)]
    return [build_eigenfunction(model, z) for z in unique]
