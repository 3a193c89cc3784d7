"""Time evolution of cavity fields: modal expansion versus direct integration.

The modal route reconstructs Phi(x, t) = sum_n a_n exp(-i omega_n t) F_n
from expansion coefficients of the initial data.  The direct route is a
leapfrog scheme on a staggered uniform grid for rho * d_tt phi = d_xx phi,
with the node phi(0) = 0, interior point masses lumped onto their grid
node, and the outgoing condition d_t phi = -d_x phi applied at x = a
through a first-order one-sided update.  Comparing the two validates the
expansion against an integrator that knows nothing about modes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .biorthogonal import expansion_coefficients
from .errors import (
    GridMismatchError,
    MassOffGridError,
    UnstableParametersError,
)
from .model import (
    DensityProfile,
    Family,
    QuadratureGrid,
    Side,
    TwoComponentState,
    evaluate_density,
    uniform_grid,
)
from .spectrum import warn_if_not_conjugate_closed

CFL = 0.9


class EvolutionMethod(enum.Enum):
    QNM_EXPANSION = "QnmExpansion"
    FDTD = "Fdtd"


@dataclass
class EvolutionTrace:
    """Time series of two-component states on a fixed grid."""

    times: np.ndarray
    states: list[TwoComponentState]
    method: EvolutionMethod
    imag_residual: float | None = None  # modal runs: max |Im phi| if data real

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if len(self.states) != self.times.size:
            raise ValueError("one state per time required")
        g0 = self.states[0].grid
        for st in self.states[1:]:
            if not np.array_equal(st.grid, g0):
                raise GridMismatchError("trace states must share a grid")

    @property
    def grid(self) -> np.ndarray:
        return self.states[0].grid


def gaussian_profile(center: float, width: float):
    """Gaussian bump of standard deviation `width`, unit peak amplitude."""

    def phi(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * ((x - center) / width) ** 2)

    return phi


def _rho_sides(model: DensityProfile, x: np.ndarray):
    left = np.array([evaluate_density(model, xi, Side.LEFT) for xi in x])
    right = np.array([evaluate_density(model, xi, Side.RIGHT) for xi in x])
    left[0] = right[0]
    return left, right


def evolve_qnm(state0: TwoComponentState, modes, times,
               model: DensityProfile, grid=None) -> EvolutionTrace:
    """Evolve initial data through the mode expansion.

    The state at time t >= 0 is sum_n a_n exp(-i omega_n t) F_n with
    a_n = (F_n, Phi(0)) / (2 omega_n), sampled on `grid` (default: the
    grid of the initial state).  A mode set that is not closed under
    omega -> -conj(omega) triggers ModeSetNotConjugateClosedWarning since
    real data then acquires spurious imaginary parts; the worst such
    imaginary amplitude is reported on the trace for real initial data.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("the expansion is valid for t >= 0 only")
    warn_if_not_conjugate_closed(modes)
    coeffs = expansion_coefficients(state0, modes, model)

    if grid is None:
        x = state0.grid
        rho = None
    elif isinstance(grid, QuadratureGrid):
        x, rho = grid.x, grid.rho
    else:
        x, rho = np.asarray(grid, dtype=float), None
    if rho is None:
        rho_left, _ = _rho_sides(model, x)
        rho = rho_left

    omegas = np.array([m.omega for m in modes])
    fmat = np.array([m(x) for m in modes])          # (n_modes, n_x)
    fhat = (-1j * omegas)[:, None] * rho[None, :] * fmat
    fmass = np.array([[m(pm.position) for pm in model.point_masses]
                      for m in modes]) if model.point_masses else None

    data_real = (float(np.max(np.abs(state0.phi.imag), initial=0.0)) == 0.0
                 and float(np.max(np.abs(state0.phi_hat.imag), initial=0.0)) == 0.0)
    states = []
    worst_imag = 0.0
    for t in times:
        phase = coeffs * np.exp(-1j * omegas * t)
        phi = phase @ fmat
        phi_hat = phase @ fhat
        if fmass is not None:
            dots = tuple(phase @ ((-1j * omegas)[:, None] * fmass)[:, k]
                         for k in range(fmass.shape[1]))
        else:
            dots = ()
        states.append(TwoComponentState(grid=x, phi=phi, phi_hat=phi_hat,
                                        mass_phidots=dots))
        if data_real:
            worst_imag = max(worst_imag, float(np.max(np.abs(phi.imag),
                                                      initial=0.0)))
    return EvolutionTrace(times=times, states=states,
                          method=EvolutionMethod.QNM_EXPANSION,
                          imag_residual=worst_imag if data_real else None)


def _resample_to_uniform(model, state0, x):
    if state0.grid.size == x.size and np.allclose(state0.grid, x,
                                                  rtol=0, atol=1e-12 * (1 + model.a)):
        rho_left, _ = _rho_sides(model, x)
        return state0.phi.copy(), state0.phi_hat / rho_left
    # collapse duplicated boundary samples, then interpolate phi and d_t phi
    gx = state0.grid
    rho_left, _ = _rho_sides(model, gx)
    phidot = state0.phi_hat / rho_left
    keep = np.concatenate(([True], np.diff(gx) > 0))
    gx, phi_s, dot_s = gx[keep], state0.phi[keep], phidot[keep]
    phi = np.interp(x, gx, phi_s.real) + 1j * np.interp(x, gx, phi_s.imag)
    dot = np.interp(x, gx, dot_s.real) + 1j * np.interp(x, gx, dot_s.imag)
    return phi, dot


def _cubic_eval(ts, ys, t):
    """4-point Lagrange interpolation; ys is a list of arrays."""
    out = np.zeros_like(ys[0])
    for i in range(4):
        li = 1.0
        for j in range(4):
            if j != i:
                li *= (t - ts[j]) / (ts[i] - ts[j])
        out = out + li * ys[i]
    return out


def evolve_fdtd(state0: TwoComponentState, model: DensityProfile,
                t_end: float, dx: float,
                record_times=None) -> EvolutionTrace:
    """Leapfrog integration on a staggered uniform grid.

    dt = CFL * dx * sqrt(rho_min) with rho_min including the unit tail, so
    both the interior scheme and the boundary update are stable.  Interior
    point masses must sit on grid nodes and are lumped there (effective
    nodal mass rho*dx + M).  The outgoing condition d_t phi = -d_x phi at
    x = a is imposed through a one-sided half-cell momentum balance,
    (rho dx / 2 + M_a) w' = -w - (phi_N - phi_{N-1}) / dx with w = d_t phi(a),
    whose cell flux is centered on a - dx/2 and therefore avoids the O(dx)
    reflection of a plain one-sided derivative at a.  Output states are
    interpolated to the requested times with 4-point (cubic) stencils,
    which also removes the dt/2 stagger between phi and phi_hat.
    """
    if model.family is not Family.WAVE:
        raise UnstableParametersError("time-domain solver needs the wave family")
    if not (0 < dx <= model.a / 8):
        raise UnstableParametersError(f"dx={dx} outside (0, a/8]")
    if t_end <= 0:
        raise UnstableParametersError("t_end must be positive")

    x = uniform_grid(model, dx)
    n = x.size - 1
    if record_times is None:
        record_times = np.linspace(0.0, t_end, 129)
    record_times = np.asarray(record_times, dtype=float)
    if np.any(record_times < 0) or np.any(record_times > t_end + 1e-12):
        raise UnstableParametersError("record times outside [0, t_end]")
    record_times = np.sort(record_times)

    rho_min = min(min(s.rho for s in model.segments), 1.0)
    dt = CFL * dx * math.sqrt(rho_min)
    n_steps = max(1, math.ceil(t_end / dt - 1e-12))
    dt = t_end / n_steps

    rho_l, rho_r = _rho_sides(model, x)
    rho_avg = 0.5 * (rho_l + rho_r)
    rho_avg[-1] = rho_l[-1]
    m = rho_avg.copy()
    mass_nodes = []
    mass_at_a = 0.0
    for pm in model.point_masses:
        i = int(round(pm.position / dx))
        if abs(x[i] - pm.position) > 1e-9 * (1 + model.a):
            raise MassOffGridError(
                f"point mass at {pm.position} is off the dx={dx} grid")
        if i == n:
            mass_at_a += pm.mass
        else:
            m[i] += pm.mass / dx
        mass_nodes.append(i)

    phi, phidot0 = _resample_to_uniform(model, state0, x)
    phi = phi.astype(complex)
    phi[0] = 0.0
    scale0 = float(np.max(np.abs(phi))) + float(np.max(np.abs(phidot0))) + 1e-30

    def lap(p):
        out = np.zeros_like(p)
        out[1:-1] = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / (dx * dx)
        return out

    # staggered momentum density v = m * d_t phi at half steps
    v = m * phidot0 + 0.5 * dt * lap(phi)
    m_b = 0.5 * rho_l[-1] * dx + mass_at_a
    w_b = complex(phidot0[-1])
    w_b = w_b + 0.5 * dt / m_b * (-w_b - (phi[-1] - phi[-2]) / dx)

    # rolling 4-point windows for cubic output interpolation
    t_phi: list[float] = [0.0]
    s_phi: list[np.ndarray] = [phi.copy()]
    t_dot: list[float] = [0.0]
    s_dot: list[np.ndarray] = [phidot0.astype(complex)]

    times_out: list[float] = []
    states_out: list[TwoComponentState] = []
    next_rec = 0

    def flush(upto: float):
        nonlocal next_rec
        while next_rec < record_times.size and record_times[next_rec] <= upto:
            t = record_times[next_rec]
            p = _interp_window(t_phi, s_phi, t)
            d = _interp_window(t_dot, s_dot, t)
            states_out.append(_make_state(model, x, rho_avg, p, d, mass_nodes))
            times_out.append(t)
            next_rec += 1

    def _interp_window(ts, ys, t):
        if len(ts) < 4:
            # early times: low-order interpolation on what exists
            k = len(ts)
            if k == 1:
                return ys[0].copy()
            out = np.zeros_like(ys[0])
            for i in range(k):
                li = 1.0
                for j in range(k):
                    if j != i:
                        li *= (t - ts[j]) / (ts[i] - ts[j])
                out = out + li * ys[i]
            return out
        return _cubic_eval(ts[-4:], ys[-4:], t)

    for step in range(n_steps):
        t_now = step * dt
        v = v + dt * lap(phi)
        phi_new = phi.copy()
        phi_new[1:-1] = phi[1:-1] + dt * v[1:-1] / m[1:-1]
        phi_new[0] = 0.0
        # half-cell momentum balance at the open end: the cell flux is a
        # centered derivative at a - dx/2, which cancels the O(dx) error of
        # a one-sided d_x phi(a); the damping term is integrated by the
        # trapezoid rule so the update stays a stable one-sided recursion
        w_b = ((m_b / dt - 0.5) * w_b
               - (phi[-1] - phi[-2]) / dx) / (m_b / dt + 0.5)
        phi_new[-1] = phi[-1] + dt * w_b

        dot = np.empty_like(phi)
        dot[1:-1] = v[1:-1] / m[1:-1]
        dot[0] = 0.0
        dot[-1] = (phi_new[-1] - phi[-1]) / dt
        t_dot.append(t_now + 0.5 * dt)
        s_dot.append(dot)
        phi = phi_new
        t_phi.append(t_now + dt)
        s_phi.append(phi.copy())
        if len(t_phi) > 4:
            t_phi.pop(0), s_phi.pop(0)
        if len(t_dot) > 4:
            t_dot.pop(0), s_dot.pop(0)

        # emit records once they sit left of the window's newest-but-one node
        if len(t_phi) == 4:
            flush(t_phi[2])
        if step % 512 == 0 and float(np.max(np.abs(phi))) > 1e6 * scale0:
            raise UnstableParametersError("time-domain run blew up")

    flush(t_end + 1e-12)
    return EvolutionTrace(times=np.array(times_out), states=states_out,
                          method=EvolutionMethod.FDTD)


def _make_state(model, x, rho_avg, phi, phidot, mass_nodes):
    phi = phi.copy()
    dots = tuple(complex(phidot[i]) for i in mass_nodes)
    return TwoComponentState(grid=x, phi=phi, phi_hat=rho_avg * phidot,
                             mass_phidots=dots if dots else None)


def compare_evolutions(trace_a: EvolutionTrace,
                       trace_b: EvolutionTrace) -> list[tuple[float, float]]:
    """Per-time relative L2 difference of the phi components.

    Both traces must share times and grid.  Errors are normalized by the
    peak L2 norm of trace_b over the common times, so instants where the
    field passes through near-zero do not inflate the report.
    """
    if trace_a.times.size != trace_b.times.size or not np.allclose(
            trace_a.times, trace_b.times, rtol=0,
            atol=1e-10 * (1 + float(trace_b.times[-1]))):
        raise GridMismatchError("traces sample different times")
    if not np.array_equal(trace_a.grid, trace_b.grid):
        raise GridMismatchError("traces live on different grids")
    x = trace_a.grid
    norms_b = [math.sqrt(abs(np.trapezoid(np.abs(sb.phi) ** 2, x)))
               for sb in trace_b.states]
    peak = max(max(norms_b), 1e-300)
    out = []
    for t, sa, sb in zip(trace_a.times, trace_a.states, trace_b.states):
        diff = math.sqrt(abs(np.trapezoid(np.abs(sa.phi - sb.phi) ** 2, x)))
        out.append((float(t), diff / peak))
    return out


def trace_energy(trace: EvolutionTrace, model: DensityProfile) -> np.ndarray:
    """Interior energy integral rho |d_t phi|^2 + |d_x phi|^2 over [0, a].

    Intended for traces on uniform grids (the time-domain solver output);
    the spatial derivative is taken by central differences.
    """
    x = trace.grid
    rho_l, rho_r = _rho_sides(model, x)
    rho_avg = 0.5 * (rho_l + rho_r)
    energies = []
    for st in trace.states:
        dphi = np.gradient(st.phi, x)
        dtphi = st.phi_hat / rho_avg
        e = np.trapezoid(rho_avg * np.abs(dtphi) ** 2 + np.abs(dphi) ** 2, x)
        energies.append(float(e.real))
    return np.array(energies)


def fit_ringdown(times, values, n_terms: int = 8):
    """Fit a sum of damped sinusoids sum_k c_k exp(-i omega_k t).

    Matrix-pencil estimation on uniformly sampled data: the complex
    frequencies come from the generalized eigenvalues of the shifted
    Hankel pencil (rank-truncated), the amplitudes from a least-squares
    Vandermonde solve.  Returns [(omega_k, c_k), ...] sorted by |c_k|
    descending.  Noise-free multi-mode ring-downs are resolved essentially
    to the accuracy of the data itself, which a single-envelope fit cannot
    do when several equally damped modes overlap.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=complex)
    if t.size != y.size or t.size < 8:
        raise ValueError("need at least 8 uniform samples")
    steps = np.diff(t)
    dt = steps[0]
    if not np.allclose(steps, dt, rtol=1e-8, atol=1e-12 * abs(dt)):
        raise ValueError("samples must be uniform in time")
    n = y.size
    ncol = max(n_terms + 1, n // 3)
    nrow = n - ncol
    if nrow <= n_terms:
        raise ValueError("too few samples for the requested number of terms")
    hank = np.array([y[i:i + ncol] for i in range(nrow + 1)])
    y0, y1 = hank[:-1], hank[1:]
    u, s, vh = np.linalg.svd(y0, full_matrices=False)
    r = min(n_terms, int(np.sum(s > 1e-11 * s[0])))
    m = (u[:, :r].conj().T @ y1 @ vh[:r].conj().T) / s[:r]
    z = np.linalg.eigvals(m)
    z = z[np.abs(z) > 1e-12]
    omegas = 1j * np.log(z) / dt
    vand = np.exp(-1j * np.outer(t - t[0], omegas))
    amps, *_ = np.linalg.lstsq(vand, y, rcond=None)
    # lstsq amplitudes refer to t - t[0]; restate them at absolute time
    pairs = [(complex(w), complex(a * np.exp(1j * w * t[0])))
             for w, a in zip(omegas, amps)]
    pairs.sort(key=lambda p: -abs(p[1]))
    return pairs
