"""Piecewise-constant 1-D cavity models and two-component field states.

A model is a density profile rho(x) on the cavity [0, a] made of contiguous
constant segments, plus optional point masses (delta terms in rho); outside
the cavity rho is identically 1, so outgoing waves are never scattered back.
A point mass at x = a models a partially transmitting end mirror.  In the
Klein-Gordon family the segment values are read as a potential V(x) instead,
with V = 0 outside, and point masses are not supported.

Model files are JSON documents::

    {
      "family": "Wave" | "KleinGordon",
      "a": 1.0,
      "segments": [{"x_left": 0.0, "x_right": 1.0, "rho": 4.0}, ...],
      "point_masses": [{"position": 1.0, "mass": 2.0}, ...]
    }

Unknown keys are rejected.  Serializing a validated model and re-parsing it
reproduces the model bit-exactly.

States are sampled pairs (phi, phi_hat) with phi_hat = rho * d_t phi.  Grids
built by :func:`quadrature_grid` carry Gauss-Legendre weights aligned to the
segment partition and duplicate every interior segment boundary so that the
two one-sided values of discontinuous quantities can both be stored.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import quadrature
from .errors import (
    BadPointMassError,
    GapOrOverlapError,
    GridMismatchError,
    ModelError,
    NonPositiveDensityError,
    NotCompletenessEligibleWarning,
)

#: relative tolerance used for all geometric coincidence tests
GEOM_RTOL = 1e-12


class Family(enum.Enum):
    """Model family: wave equation density or Klein-Gordon potential."""

    WAVE = "Wave"
    KLEIN_GORDON = "KleinGordon"


class Side(enum.Enum):
    """Which one-sided limit to take at a discontinuity."""

    LEFT = "Left"
    RIGHT = "Right"


@dataclass(frozen=True)
class Segment:
    x_left: float
    x_right: float
    rho: float

    @property
    def width(self) -> float:
        return self.x_right - self.x_left


@dataclass(frozen=True)
class PointMass:
    position: float
    mass: float


@dataclass(frozen=True)
class DensityProfile:
    """A validated model.  Instances are immutable; share them freely."""

    segments: tuple[Segment, ...]
    point_masses: tuple[PointMass, ...]
    a: float
    family: Family
    completeness_eligible: bool

    @property
    def tail_value(self) -> float:
        """rho (wave) or V (Klein-Gordon) for x > a."""
        return 1.0 if self.family is Family.WAVE else 0.0

    @property
    def mass_at_a(self) -> float:
        """Total point mass sitting exactly at the cavity boundary."""
        return sum(pm.mass for pm in self.point_masses
                   if _close(pm.position, self.a, self.a))

    def interior_masses(self) -> tuple[PointMass, ...]:
        """Point masses strictly inside (0, a)."""
        return tuple(pm for pm in self.point_masses
                     if not _close(pm.position, self.a, self.a))


def _close(x: float, y: float, scale: float) -> bool:
    return abs(x - y) <= GEOM_RTOL * max(1.0, abs(scale))


def validate_model(segments, point_masses=(), family: Family = Family.WAVE,
                   a: float | None = None) -> DensityProfile:
    """Validate a candidate model and return the immutable profile.

    Parameters
    ----------
    segments : sequence of Segment or (x_left, x_right, rho) triples
    point_masses : sequence of PointMass or (position, mass) pairs
    family : Family.WAVE or Family.KLEIN_GORDON
    a : cavity boundary; if given it must coincide with the last x_right

    Raises
    ------
    GapOrOverlapError, NonPositiveDensityError, BadPointMassError

    Warns
    -----
    NotCompletenessEligibleWarning
        When nothing demarcates the cavity at x = a: the solver still runs
        but mode expansions are not guaranteed complete.
    """
    segs = tuple(s if isinstance(s, Segment) else Segment(*map(float, s))
                 for s in segments)
    if not segs:
        raise GapOrOverlapError("model needs at least one segment")
    if not isinstance(family, Family):
        family = Family(family)

    for s in segs:
        if not (math.isfinite(s.x_left) and math.isfinite(s.x_right)
                and math.isfinite(s.rho)):
            raise ModelError(f"non-finite segment {s}")
        if s.width <= 0:
            raise GapOrOverlapError(f"segment {s} has non-positive width")

    a_end = segs[-1].x_right
    if a is not None and not _close(float(a), a_end, a_end):
        raise GapOrOverlapError(
            f"a={a} does not match last segment end {a_end}")
    if not _close(segs[0].x_left, 0.0, a_end):
        raise GapOrOverlapError("first segment must start at x = 0")
    for left, right in zip(segs[:-1], segs[1:]):
        if not _close(left.x_right, right.x_left, a_end):
            raise GapOrOverlapError(
                f"gap or overlap between {left} and {right}")

    if family is Family.WAVE:
        for s in segs:
            if s.rho <= 0:
                raise NonPositiveDensityError(f"rho={s.rho} in segment {s}")

    masses = tuple(pm if isinstance(pm, PointMass)
                   else PointMass(*map(float, pm)) for pm in point_masses)
    for pm in masses:
        if not (math.isfinite(pm.position) and math.isfinite(pm.mass)):
            raise BadPointMassError(f"non-finite point mass {pm}")
        if pm.mass < 0:
            raise BadPointMassError(f"negative point mass {pm}")
        if pm.position <= 0 or (pm.position > a_end
                                and not _close(pm.position, a_end, a_end)):
            raise BadPointMassError(
                f"point mass at {pm.position} outside (0, {a_end}]")
    if family is Family.KLEIN_GORDON and masses:
        raise BadPointMassError(
            "point masses are not supported in the Klein-Gordon family")
    if len({pm.position for pm in masses}) != len(masses):
        raise BadPointMassError("coincident point masses; merge them first")

    # Completeness needs a demarcation at x = a: a discontinuity of the
    # profile against its tail value, or a point mass on the boundary.
    demarcated = not _close(segs[-1].rho,
                            1.0 if family is Family.WAVE else 0.0, 1.0)
    has_end_mass = any(_close(pm.position, a_end, a_end) and pm.mass > 0
                       for pm in masses)
    eligible = demarcated or has_end_mass
    if not eligible:
        warnings.warn(
            "nothing demarcates the cavity at x = a; quasinormal-mode "
            "expansions are not guaranteed complete",
            NotCompletenessEligibleWarning, stacklevel=2)

    return DensityProfile(segments=segs, point_masses=masses, a=a_end,
                          family=family, completeness_eligible=eligible)


def evaluate_density(model: DensityProfile, x: float,
                     side: Side = Side.LEFT) -> float:
    """rho(x) (wave family) or V(x) (Klein-Gordon) with one-sided limits.

    Returns the tail value (1 resp. 0) for x > a, and for x = a with
    side=Side.RIGHT.
    """
    if x < 0:
        raise ModelError(f"x={x} outside the domain [0, inf)")
    a = model.a
    if x > a and not _close(x, a, a):
        return model.tail_value
    if _close(x, a, a):
        return model.segments[-1].rho if side is Side.LEFT else model.tail_value
    if _close(x, 0.0, a):
        return model.segments[0].rho
    for seg in model.segments:
        on_left = _close(x, seg.x_left, a)
        on_right = _close(x, seg.x_right, a)
        if on_left:
            # boundary between the previous segment and this one
            return seg.rho if side is Side.RIGHT else _left_neighbor(model, seg)
        if on_right:
            return seg.rho if side is Side.LEFT else _right_neighbor(model, seg)
        if seg.x_left < x < seg.x_right:
            return seg.rho
    raise ModelError(f"x={x} not located in any segment")  # pragma: no cover


def _left_neighbor(model, seg):
    i = model.segments.index(seg)
    return model.segments[i - 1].rho if i > 0 else seg.rho


def _right_neighbor(model, seg):
    i = model.segments.index(seg)
    return (model.segments[i + 1].rho if i + 1 < len(model.segments)
            else model.tail_value)


# ---------------------------------------------------------------------------
# JSON serialization

_MODEL_KEYS = {"family", "a", "segments", "point_masses"}
_SEG_KEYS = {"x_left", "x_right", "rho"}
_MASS_KEYS = {"position", "mass"}


def parse_model(doc: dict) -> DensityProfile:
    """Validate a model given as a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ModelError(f"unknown model keys: {sorted(unknown)}")
    for key in ("family", "a", "segments"):
        if key not in doc:
            raise ModelError(f"missing model key {key!r}")
    try:
        family = Family(doc["family"])
    except ValueError:
        raise ModelError(f"unknown family {doc['family']!r}") from None
    segs = []
    for entry in doc["segments"]:
        if set(entry) != _SEG_KEYS:
            raise ModelError(f"bad segment keys in {entry}")
        segs.append(Segment(float(entry["x_left"]), float(entry["x_right"]),
                            float(entry["rho"])))
    masses = []
    for entry in doc.get("point_masses", []):
        if set(entry) != _MASS_KEYS:
            raise ModelError(f"bad point-mass keys in {entry}")
        masses.append(PointMass(float(entry["position"]),
                                float(entry["mass"])))
    return validate_model(segs, masses, family=family, a=float(doc["a"]))


def model_to_dict(model: DensityProfile) -> dict:
    return {
        "family": model.family.value,
        "a": model.a,
        "segments": [{"x_left": s.x_left, "x_right": s.x_right, "rho": s.rho}
                     for s in model.segments],
        "point_masses": [{"position": pm.position, "mass": pm.mass}
                         for pm in model.point_masses],
    }


def model_json(model: DensityProfile) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def load_model(path) -> DensityProfile:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"not valid JSON: {exc}") from None
    return parse_model(doc)


def save_model(model: DensityProfile, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_json(model))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Sampling grids and two-component states

@dataclass(frozen=True)
class QuadratureGrid:
    """Gauss-Legendre sampling of [0, a] aligned to the segment partition.

    Every segment contributes both its endpoints (weight zero, for boundary
    values) plus `panels` * `points_per_panel` interior quadrature nodes, so
    interior segment boundaries appear twice: once as the left segment's
    right endpoint and once as the right segment's left endpoint.
    """

    x: np.ndarray
    weights: np.ndarray
    rho: np.ndarray            # side-resolved profile value at each sample
    seg_index: np.ndarray      # owning segment of each sample
    panels_per_segment: int
    points_per_panel: int

    def __len__(self) -> int:
        return self.x.size


def quadrature_grid(model: DensityProfile, panels_per_segment: int = 16,
                    points_per_panel: int = 16) -> QuadratureGrid:
    """Build the canonical sampling grid for a model."""
    xs, ws, rhos, idx = [], [], [], []
    for j, seg in enumerate(model.segments):
        nodes, wts = quadrature.composite_nodes(
            [seg.x_left, seg.x_right], panels_per_segment, points_per_panel)
        xs.append([seg.x_left])
        ws.append([0.0])
        xs.append(nodes)
        ws.append(wts)
        xs.append([seg.x_right])
        ws.append([0.0])
        n_here = nodes.size + 2
        rhos.append(np.full(n_here, seg.rho))
        idx.append(np.full(n_here, j, dtype=int))
    return QuadratureGrid(
        x=np.concatenate(xs), weights=np.concatenate(ws),
        rho=np.concatenate(rhos), seg_index=np.concatenate(idx),
        panels_per_segment=panels_per_segment,
        points_per_panel=points_per_panel)


def infer_grid(model: DensityProfile, grid_x: np.ndarray) -> QuadratureGrid:
    """Recover the canonical grid a sample array was built on.

    Raises GridMismatchError when grid_x is not a grid produced by
    :func:`quadrature_grid` for this model.
    """
    grid_x = np.asarray(grid_x, dtype=float)
    n_seg = len(model.segments)
    per_seg = grid_x.size / n_seg - 2.0
    if per_seg <= 0 or per_seg != int(per_seg):
        raise GridMismatchError("sample count does not fit a quadrature grid")
    for npp in (16, 8, 32, 4, 64, 2, 1):
        if int(per_seg) % npp == 0:
            candidate = quadrature_grid(model, int(per_seg) // npp, npp)
            if candidate.x.size == grid_x.size and np.allclose(
                    candidate.x, grid_x, rtol=0, atol=GEOM_RTOL * (1 + model.a)):
                return candidate
    raise GridMismatchError("samples do not sit on a quadrature grid of this model")


@dataclass
class TwoComponentState:
    """Sampled (phi, phi_hat) pair on a grid over [0, a].

    phi_hat holds the regular part of rho * d_t phi; when the model carries
    point masses, the field velocity d_t phi at each mass position may be
    supplied in `mass_phidots` (aligned with model.point_masses).  If left
    as None it is derived from phi_hat via the one-sided density, which is
    well defined because d_t phi is continuous.
    """

    grid: np.ndarray
    phi: np.ndarray
    phi_hat: np.ndarray
    mass_phidots: tuple | None = None

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.phi = np.asarray(self.phi, dtype=complex)
        self.phi_hat = np.asarray(self.phi_hat, dtype=complex)
        if not (self.grid.shape == self.phi.shape == self.phi_hat.shape):
            raise GridMismatchError("grid, phi, phi_hat must share a shape")
        if np.any(np.diff(self.grid) < 0):
            raise GridMismatchError("grid must be non-decreasing")

    def copy_with(self, **kw) -> "TwoComponentState":
        data = dict(grid=self.grid, phi=self.phi, phi_hat=self.phi_hat,
                    mass_phidots=self.mass_phidots)
        data.update(kw)
        return TwoComponentState(**data)


def state_from_callables(model: DensityProfile, phi_fn, phidot_fn,
                         panels_per_segment: int = 16,
                         points_per_panel: int = 16) -> TwoComponentState:
    """Sample phi(x) and d_t phi(x) onto the canonical quadrature grid.

    phi_hat is formed as rho * d_t phi with the side-resolved density, and
    the mass-point velocities are recorded so bilinear maps see the full
    delta bookkeeping.
    """
    grid = quadrature_grid(model, panels_per_segment, points_per_panel)
    phi = np.asarray(phi_fn(grid.x), dtype=complex)
    phidot = np.asarray(phidot_fn(grid.x), dtype=complex)
    mass_phidots = tuple(complex(phidot_fn(np.array([pm.position]))[0])
                         for pm in model.point_masses)
    return TwoComponentState(grid=grid.x, phi=phi, phi_hat=grid.rho * phidot,
                             mass_phidots=mass_phidots)


def uniform_grid(model: DensityProfile, dx: float) -> np.ndarray:
    """Uniform nodes 0, dx, ..., a; dx must divide a to within round-off."""
    n = round(model.a / dx)
    if n < 2 or not _close(n * dx, model.a, model.a):
        raise ModelError(f"dx={dx} does not evenly divide a={model.a}")
    return np.linspace(0.0, model.a, n + 1)


def state_on_uniform_grid(model: DensityProfile, dx: float, phi_fn,
                          phidot_fn) -> TwoComponentState:
    """Sample initial data on a uniform grid (for the time-domain solver).

    phi_hat at density discontinuities uses the left-sided rho.
    """
    x = uniform_grid(model, dx)
    rho = np.array([evaluate_density(model, xi, Side.LEFT) for xi in x])
    rho[0] = evaluate_density(model, 0.0, Side.RIGHT)
    phi = np.asarray(phi_fn(x), dtype=complex)
    phidot = np.asarray(phidot_fn(x), dtype=complex)
    mass_phidots = tuple(complex(phidot_fn(np.array([pm.position]))[0])
                         for pm in model.point_masses)
    return TwoComponentState(grid=x, phi=phi, phi_hat=rho * phidot,
                             mass_phidots=mass_phidots)


def mass_phidot_values(model: DensityProfile,
                       state: TwoComponentState) -> tuple:
    """d_t phi at every point-mass position, derived if not supplied."""
    if not model.point_masses:
        return ()
    if state.mass_phidots is not None:
        if len(state.mass_phidots) != len(model.point_masses):
            raise GridMismatchError(
                "mass_phidots length does not match the model's point masses")
        return tuple(complex(v) for v in state.mass_phidots)
    values = []
    for pm in model.point_masses:
        i = int(np.argmin(np.abs(state.grid - pm.position)))
        if abs(state.grid[i] - pm.position) > GEOM_RTOL * (1 + model.a):
            raise GridMismatchError(
                f"no sample at point-mass position {pm.position}")
        rho_left = evaluate_density(model, pm.position, Side.LEFT)
        values.append(complex(state.phi_hat[i] / rho_left))
    return tuple(values)
