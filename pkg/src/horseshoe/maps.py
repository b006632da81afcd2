"""Piecewise hyperbolic strip maps on the unit square.

The data model is a finite family of full-height strips, each carried by a
branch diffeomorphism into the square, expanding horizontally and contracting
vertically.  Built-in instances are skew products: the base coordinate moves
by a full expanding branch onto [0,1] and the fiber coordinate is contracted
by a map that may depend on the base point.  Analysis routines work on the
extended domain [0,1] x J where J is a slightly enlarged fiber interval, so
that image strips keep a safety margin around their unextended cores.

Branch fiber maps are parametrized by the *arrival* base point u = g(x).
That convention makes compositions along itineraries cheap: walking a word
backwards through base preimages hands each fiber map exactly the argument
it wants.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import OutOfDomainError, ParameterError

_EDGE_TOL = 1e-12


def _const(value):
    def f(u, y=None):
        u = np.asarray(u, dtype=float)
        return np.full_like(u, value)

    return f


@dataclass(frozen=True)
class FiberMap:
    """Fiber action psi(u, y) of one branch, u being the arrival base point.

    ``affine`` marks the common case psi(u, y) = slope(u) * y + offset(u);
    enumeration and orbit stepping have fast paths for it.  All callables
    must accept numpy arrays.
    """

    value: Callable
    dy: Callable
    du: Callable
    dyy: Callable
    dyu: Callable
    duu: Callable
    affine: bool = False
    slope: Optional[Callable] = None
    offset: Optional[Callable] = None
    dslope: Optional[Callable] = None
    doffset: Optional[Callable] = None
    invert: Optional[Callable] = None  # y from (u, v); derived for affine


def affine_fiber(slope, offset, dslope, doffset, d2slope=None, d2offset=None):
    """Build a FiberMap for psi(u, y) = slope(u)*y + offset(u).

    ``slope``/``offset`` and their u-derivatives are vectorized callables;
    pass floats for constants.
    """

    def as_fn(spec, default=None):
        if spec is None:
            return _const(0.0) if default is None else default
        if callable(spec):
            return spec
        return _const(float(spec))

    s = as_fn(slope)
    t = as_fn(offset)
    ds = as_fn(dslope)
    dt = as_fn(doffset)
    d2s = as_fn(d2slope)
    d2t = as_fn(d2offset)

    def value(u, y):
        return s(u) * y + t(u)

    def dy(u, y):
        u = np.asarray(u, dtype=float)
        return s(u) + np.zeros_like(np.asarray(y, dtype=float))

    def du(u, y):
        return ds(u) * y + dt(u)

    def dyy(u, y):
        return np.zeros_like(np.asarray(y, dtype=float) + np.asarray(u, dtype=float))

    def dyu(u, y):
        u = np.asarray(u, dtype=float)
        return ds(u) + np.zeros_like(np.asarray(y, dtype=float))

    def duu(u, y):
        return d2s(u) * y + d2t(u)

    def invert(u, v):
        return (v - t(u)) / s(u)

    return FiberMap(
        value=value, dy=dy, du=du, dyy=dyy, dyu=dyu, duu=duu,
        affine=True, slope=s, offset=t, dslope=ds, doffset=dt, invert=invert,
    )


@dataclass(frozen=True)
class Strip:
    """A full-height strip of the square, plus its extension to the J-domain.

    Boundaries are graphs x = boundary(y); skew-product strips have constant
    boundaries equal to the base interval endpoints.
    """

    base_interval: tuple
    extended_base: tuple
    left_boundary: Callable
    right_boundary: Callable

    @staticmethod
    def vertical(lo, hi):
        return Strip(
            base_interval=(float(lo), float(hi)),
            extended_base=(float(lo), float(hi)),
            left_boundary=_const(float(lo)),
            right_boundary=_const(float(hi)),
        )

    @property
    def width(self):
        return self.base_interval[1] - self.base_interval[0]


@dataclass(frozen=True)
class SkewBranch:
    """One skew-product branch: base u = m*x + c onto [0,1], fiber ``fiber``."""

    base_slope: float
    base_offset: float
    fiber: FiberMap

    def base_forward(self, x):
        return self.base_slope * np.asarray(x, dtype=float) + self.base_offset

    def base_inverse(self, u):
        return (np.asarray(u, dtype=float) - self.base_offset) / self.base_slope


@dataclass(frozen=True)
class BranchMap:
    """General branch interface: forward/inverse maps and derivative tables.

    ``jacobian`` returns [[F1x, F1y], [F2x, F2y]], ``second`` the six second
    partials as [[F1xx, F1xy, F1yy], [F2xx, F2xy, F2yy]].
    """

    forward: Callable
    inverse: Callable
    jacobian: Callable
    second: Callable


def _branch_from_skew(sk: SkewBranch) -> BranchMap:
    fm = sk.fiber
    m = sk.base_slope

    def forward(x, y):
        u = sk.base_forward(x)
        return u, fm.value(u, y)

    def inverse(u, v):
        x = sk.base_inverse(u)
        if fm.invert is not None:
            return x, fm.invert(u, v)
        return x, _invert_fiber_bisect(fm, u, v)

    def jacobian(x, y):
        u = sk.base_forward(x)
        f2x = fm.du(u, y) * m
        f2y = fm.dy(u, y)
        return np.array([[m, 0.0], [float(f2x), float(f2y)]])

    def second(x, y):
        u = sk.base_forward(x)
        return np.array([
            [0.0, 0.0, 0.0],
            [float(fm.duu(u, y)) * m * m, float(fm.dyu(u, y)) * m, float(fm.dyy(u, y))],
        ])

    return BranchMap(forward=forward, inverse=inverse, jacobian=jacobian, second=second)


def _invert_fiber_bisect(fm, u, v, lo=-10.0, hi=10.0, iters=80):
    """Monotone-fiber inversion fallback for custom non-affine fibers."""
    sign = 1.0 if float(fm.dy(u, 0.5 * (lo + hi))) > 0 else -1.0
    a, b = lo, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if sign * (float(fm.value(u, mid)) - v) < 0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


@dataclass(frozen=True)
class AffineConjugacy:
    """Affine change to an alternate published coordinate frame.

    original = scale * unit + offset, componentwise.  ``branch_order`` maps a
    1-based branch index in the original frame to the 1-based unit-frame strip
    index (branch enumeration conventions differ between frames).
    """

    scale: tuple
    offset: tuple
    branch_order: tuple

    def to_unit(self, z):
        return ((z[0] - self.offset[0]) / self.scale[0],
                (z[1] - self.offset[1]) / self.scale[1])

    def to_original(self, z):
        return (self.scale[0] * z[0] + self.offset[0],
                self.scale[1] * z[1] + self.offset[1])


@dataclass(frozen=True)
class GhmSpec:
    """Immutable description of a strip map instance.

    ``alpha`` is the cone aperture (max-norm sectors around the horizontal /
    vertical axes), ``k0`` the claimed one-step expansion floor for vectors in
    those cones.  ``extended_fiber`` is the interval J strictly containing
    [0,1] used by all strip-geometry analysis.
    """

    strips: tuple
    branches: tuple
    alpha: float
    k0: float
    extended_fiber: tuple
    kind: str
    label: str
    params: tuple
    skew: Optional[tuple] = None
    conjugacy: Optional[AffineConjugacy] = None

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"cone aperture must be in (0,1), got {self.alpha}")
        if not self.k0 > 1.0:
            raise ParameterError(f"expansion floor must exceed 1, got {self.k0}")
        jlo, jhi = self.extended_fiber
        if not (jlo < 0.0 < 1.0 < jhi):
            raise ParameterError(
                f"extended fiber must strictly contain [0,1], got {self.extended_fiber}")
        if len(self.strips) != len(self.branches):
            raise ParameterError("one branch per strip required")
        lo = 0.0
        for s in self.strips:
            a, b = s.base_interval
            if abs(a - lo) > 1e-9 or b <= a:
                raise ParameterError("strip base intervals must tile [0,1] in order")
            lo = b
        if abs(lo - 1.0) > 1e-9:
            raise ParameterError("strip base intervals must cover [0,1]")

    # -- structural helpers -------------------------------------------------

    @property
    def n_strips(self):
        return len(self.strips)

    @property
    def fiber(self):
        return self.extended_fiber

    @property
    def fiber_len(self):
        return self.extended_fiber[1] - self.extended_fiber[0]

    @property
    def base_breaks(self):
        edges = [s.base_interval[0] for s in self.strips]
        edges.append(self.strips[-1].base_interval[1])
        return np.array(edges)

    @property
    def params_dict(self):
        return dict(self.params)

    @property
    def map_hash(self):
        payload = json.dumps(
            {
                "label": self.label,
                "params": dict(self.params),
                "alpha": self.alpha,
                "k0": self.k0,
                "fiber": list(self.extended_fiber),
                "kind": self.kind,
                "n": self.n_strips,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def strip_index_of(self, x):
        """1-based strip index of a base point; raises on boundary ambiguity.

        Boundary points are reported via the index of the strip to the left
        only when x is 0 or 1; interior breaks raise ``StripBoundary`` in
        :func:`horseshoe.measures.factor_map_eval`, while this helper snaps
        to the right-hand strip (useful for closed-strip membership checks).
        """
        breaks = self.base_breaks
        i = int(np.searchsorted(breaks, x, side="right")) - 1
        return int(np.clip(i, 0, self.n_strips - 1)) + 1

    def fiber_slope_bounds(self, grid_n=257):
        """Per-strip (min, max) of |d psi / d y| over [0,1] x J."""
        jlo, jhi = self.extended_fiber
        u = np.linspace(0.0, 1.0, grid_n)
        y = np.linspace(jlo, jhi, grid_n)
        uu, yy = np.meshgrid(u, y, indexing="ij")
        out = []
        for sk in self.skew:
            d = np.abs(sk.fiber.dy(uu, yy))
            out.append((float(d.min()), float(d.max())))
        return out


# ---------------------------------------------------------------------------
# built-in families


def make_baker(lam, alpha=0.5, extended_fiber=(-0.1, 1.1)):
    """Two-branch baker family: doubling base, constant fiber contraction.

    The published form of this family lives on the square [-1,1]^2; we work
    on the unit square and record the affine conjugacy (including the branch
    reindexing: the original first branch is the right-hand strip here).
    """
    lam = float(lam)
    if not (0.0 < lam < 1.0):
        raise ParameterError(f"contraction must be in (0,1), got {lam}")
    strips = (Strip.vertical(0.0, 0.5), Strip.vertical(0.5, 1.0))
    skew = (
        SkewBranch(2.0, 0.0, affine_fiber(lam, 0.0, 0.0, 0.0)),
        SkewBranch(2.0, -1.0, affine_fiber(lam, 1.0 - lam, 0.0, 0.0)),
    )
    k0 = min(2.0, 1.0 / lam)
    if k0 <= 1.0:
        # lam >= 1 is already rejected; this is unreachable but kept for
        # symmetry with the general constructor.
        raise ParameterError("no expansion floor above 1 for this contraction")
    return GhmSpec(
        strips=strips,
        branches=tuple(_branch_from_skew(s) for s in skew),
        alpha=float(alpha),
        k0=k0,
        extended_fiber=tuple(float(v) for v in extended_fiber),
        kind="skew_product",
        label="baker",
        params=(("lambda", lam),),
        skew=skew,
        conjugacy=AffineConjugacy(scale=(2.0, 2.0), offset=(-1.0, -1.0),
                                  branch_order=(2, 1)),
    )


def make_affine_example(a, b, alpha=None, extended_fiber=(-0.1, 1.1)):
    """Two-branch overlapping family with base-dependent fiber slopes.

    Fiber slope at arrival point u is sigma(u) = a + u*(b - a) for both
    branches; the left branch carries the additional offset
    (1 - a) * u * (a - b), the right branch none.  Requires 1/2 < b < a < 1,
    which keeps every slope above 1/2 (area growth) while staying a strict
    contraction.
    """
    a = float(a)
    b = float(b)
    if not (0.5 < b < a < 1.0):
        raise ParameterError(f"need 1/2 < b < a < 1, got a={a}, b={b}")
    jlo, jhi = (float(extended_fiber[0]), float(extended_fiber[1]))

    def sigma(u):
        return a + np.asarray(u, dtype=float) * (b - a)

    def offset1(u):
        return (1.0 - a) * np.asarray(u, dtype=float) * (a - b)

    strips = (Strip.vertical(0.0, 0.5), Strip.vertical(0.5, 1.0))
    skew = (
        SkewBranch(2.0, 0.0, affine_fiber(sigma, offset1, b - a, (1.0 - a) * (a - b))),
        SkewBranch(2.0, -1.0, affine_fiber(sigma, 0.0, b - a, 0.0)),
    )

    # Cone aperture and expansion floor from the extreme partials over the
    # extended domain; all partials are (bi)linear so corners suffice.
    f2x_max = 0.0
    f2y_max = a
    for sk in skew:
        for u in (0.0, 1.0):
            for y in (jlo, jhi):
                f2x_max = max(f2x_max, abs(float(sk.fiber.du(u, y))) * 2.0)
    if alpha is None:
        alpha = f2x_max / (2.0 - f2y_max) * (1.0 + 1e-9)
        alpha = min(alpha, 0.999)
    k0 = min(2.0, (1.0 - alpha * f2x_max / 2.0) / f2y_max)
    return GhmSpec(
        strips=strips,
        branches=tuple(_branch_from_skew(s) for s in skew),
        alpha=float(alpha),
        k0=k0,
        extended_fiber=(jlo, jhi),
        kind="skew_product",
        label="affine_example",
        params=(("a", a), ("b", b)),
        skew=skew,
        conjugacy=None,
    )


def make_custom_skew(breaks, fiber_maps, alpha=None, k0=None,
                     extended_fiber=(-0.1, 1.1), label="custom_skew", params=()):
    """Skew product with user-chosen base partition and fiber maps.

    ``breaks`` is an increasing sequence 0 = x_0 < ... < x_N = 1; branch i
    maps [x_{i-1}, x_i] affinely onto [0,1].  ``fiber_maps`` is one FiberMap
    per branch.  When ``alpha``/``k0`` are omitted they are estimated from
    the partials on a lattice; explicit values are accepted unchecked, which
    is the intended way to build instances that *fail* validation on purpose.
    """
    breaks = [float(v) for v in breaks]
    if breaks[0] != 0.0 or breaks[-1] != 1.0 or any(
            b2 <= b1 for b1, b2 in zip(breaks, breaks[1:])):
        raise ParameterError("breaks must increase from 0 to 1")
    if len(fiber_maps) != len(breaks) - 1:
        raise ParameterError("one fiber map per base interval required")
    strips = tuple(Strip.vertical(b1, b2) for b1, b2 in zip(breaks, breaks[1:]))
    skew = []
    for (b1, b2), fm in zip(zip(breaks, breaks[1:]), fiber_maps):
        m = 1.0 / (b2 - b1)
        skew.append(SkewBranch(m, -b1 * m, fm))
    skew = tuple(skew)
    jlo, jhi = (float(extended_fiber[0]), float(extended_fiber[1]))

    if alpha is None or k0 is None:
        u = np.linspace(0.0, 1.0, 129)
        y = np.linspace(jlo, jhi, 129)
        uu, yy = np.meshgrid(u, y, indexing="ij")
        f2x_max = 0.0
        f2y_max = 0.0
        m_min = min(sk.base_slope for sk in skew)
        for sk in skew:
            f2x_max = max(f2x_max, float(np.abs(sk.fiber.du(uu, yy)).max()) * sk.base_slope)
            f2y_max = max(f2y_max, float(np.abs(sk.fiber.dy(uu, yy)).max()))
        if alpha is None:
            denom = m_min - f2y_max
            if denom <= 0:
                raise ParameterError("fiber maps do not contract below the base expansion")
            alpha = min(0.999, f2x_max / denom * (1.0 + 1e-9)) if f2x_max > 0 else 0.5
        if k0 is None:
            k0 = min(m_min, (1.0 - alpha * f2x_max / m_min) / f2y_max)
    return GhmSpec(
        strips=strips,
        branches=tuple(_branch_from_skew(s) for s in skew),
        alpha=float(alpha),
        k0=float(k0),
        extended_fiber=(jlo, jhi),
        kind="skew_product",
        label=label,
        params=tuple(params),
        skew=skew,
        conjugacy=None,
    )


# ---------------------------------------------------------------------------
# pointwise operations


def _check_index(spec, i):
    if not 1 <= i <= spec.n_strips:
        raise ParameterError(f"branch index {i} out of range 1..{spec.n_strips}")


def apply_branch(spec, i, z, direction="forward", frame="unit"):
    """Apply branch ``i`` (1-based) to the point ``z``, or its inverse.

    ``frame="original"`` routes through the recorded conjugacy, including its
    branch reindexing, and returns coordinates in the original frame.
    """
    if frame == "original":
        if spec.conjugacy is None:
            raise ParameterError("this instance records no original frame")
        _check_index(spec, i)
        zu = spec.conjugacy.to_unit(z)
        iu = spec.conjugacy.branch_order[i - 1]
        xu, yu = apply_branch(spec, iu, zu, direction=direction)
        return spec.conjugacy.to_original((xu, yu))
    if frame != "unit":
        raise ParameterError(f"unknown frame {frame!r}")
    _check_index(spec, i)
    x, y = float(z[0]), float(z[1])
    strip = spec.strips[i - 1]
    jlo, jhi = spec.extended_fiber
    lo, hi = strip.extended_base
    if direction == "forward":
        if not (lo - _EDGE_TOL <= x <= hi + _EDGE_TOL and jlo - _EDGE_TOL <= y <= jhi + _EDGE_TOL):
            raise OutOfDomainError(
                f"point {z} outside strip {i} domain [{lo},{hi}] x J", strip=i, point=z)
        u, v = spec.branches[i - 1].forward(x, y)
        return float(u), float(v)
    if direction == "inverse":
        px, py = spec.branches[i - 1].inverse(x, y)
        px, py = float(px), float(py)
        if not (lo - 1e-9 <= px <= hi + 1e-9 and jlo - 1e-9 <= py <= jhi + 1e-9):
            raise OutOfDomainError(
                f"point {z} has no branch-{i} preimage in its strip", strip=i, point=z)
        return px, py
    raise ParameterError(f"unknown direction {direction!r}")


def branch_derivative(spec, i, z, order=1):
    """First (2x2) or second (2x3, six partials) derivative table of branch i."""
    _check_index(spec, i)
    x, y = float(z[0]), float(z[1])
    strip = spec.strips[i - 1]
    lo, hi = strip.extended_base
    jlo, jhi = spec.extended_fiber
    if not (lo - _EDGE_TOL <= x <= hi + _EDGE_TOL and jlo - _EDGE_TOL <= y <= jhi + _EDGE_TOL):
        raise OutOfDomainError(
            f"point {z} outside strip {i} domain", strip=i, point=z)
    if order == 1:
        return spec.branches[i - 1].jacobian(x, y)
    if order == 2:
        return spec.branches[i - 1].second(x, y)
    raise ParameterError(f"derivative order must be 1 or 2, got {order}")


def branch_jacobian_det(spec, i, z):
    d = branch_derivative(spec, i, z, order=1)
    return float(d[0, 0] * d[1, 1] - d[0, 1] * d[1, 0])


# ---------------------------------------------------------------------------
# hyperbolicity validation


@dataclass
class CheckResult:
    observed: float
    bound: float
    margin: float
    passed: bool
    witness: Optional[tuple] = None  # (strip, x, y) at the worst lattice point


@dataclass
class HyperbolicityReport:
    """Grid-based margins for the cone, ratio and regularity conditions.

    Margins are bound minus worst observed value, so nonnegative means the
    condition held on the lattice.  Margins smaller than ``inconclusive_below``
    in absolute value are listed in ``inconclusive`` rather than trusted.
    """

    grid_resolution: int
    checks: dict = field(default_factory=dict)
    c0: float = 0.0
    c1: float = 0.0
    inconclusive_below: float = 1e-3

    def __getitem__(self, name):
        return self.checks[name]

    @property
    def h1_pass(self):
        return self.checks["h1"].passed

    @property
    def h2_pass(self):
        return self.checks["h2"].passed

    @property
    def a4_pass(self):
        return self.checks["a4"].passed

    @property
    def inconclusive(self):
        return sorted(name for name, c in self.checks.items()
                      if abs(c.margin) < self.inconclusive_below)

    def passed(self, strict_a4=False):
        names = ["h1", "h2", "eq5", "eq6", "eq7", "eq8", "a2"]
        if strict_a4:
            names.append("a4")
        return all(self.checks[n].passed for n in names)

    def summary(self):
        lines = []
        for name in sorted(self.checks):
            c = self.checks[name]
            state = "ok" if c.passed else "FAIL"
            lines.append(f"{name:5s} {state:4s} observed={c.observed:.6g} "
                         f"bound={c.bound:.6g} margin={c.margin:.6g}")
        return "\n".join(lines)


def validate_hyperbolicity(spec, grid_n=512):
    """Evaluate every cone / ratio / regularity condition on a lattice.

    Works per strip on a grid_n x grid_n lattice over strip x J.  Never
    raises for violations; the report carries worst margins and the argmax
    lattice point of each violated bound.
    """
    if grid_n < 2:
        raise ParameterError("need at least a 2x2 validation lattice")
    jlo, jhi = spec.extended_fiber
    alpha, k0 = spec.alpha, spec.k0
    report = HyperbolicityReport(grid_resolution=grid_n)

    stats = {}

    def push(name, arr, xx, yy, strip_i, mode):
        """Track worst value of arr ('max' or 'min') with its lattice witness."""
        if mode == "max":
            k = int(np.argmax(arr))
            v = float(arr.flat[k])
            better = (name not in stats) or v > stats[name][0]
        else:
            k = int(np.argmin(arr))
            v = float(arr.flat[k])
            better = (name not in stats) or v < stats[name][0]
        if better:
            stats[name] = (v, (strip_i, float(xx.flat[k]), float(yy.flat[k])))

    for si, (strip, branch) in enumerate(zip(spec.strips, spec.branches), start=1):
        lo, hi = strip.base_interval
        xg = np.linspace(lo, hi, grid_n)
        yg = np.linspace(jlo, jhi, grid_n)
        xx, yy = np.meshgrid(xg, yg, indexing="ij")
        if spec.skew is not None:
            sk = spec.skew[si - 1]
            m = sk.base_slope
            uu = sk.base_forward(xx)
            f1x = np.full_like(xx, m)
            f1y = np.zeros_like(xx)
            f2x = np.asarray(sk.fiber.du(uu, yy), dtype=float) * m
            f2y = np.asarray(sk.fiber.dy(uu, yy), dtype=float)
            sec = np.stack([
                np.zeros_like(xx), np.zeros_like(xx), np.zeros_like(xx),
                np.asarray(sk.fiber.duu(uu, yy), dtype=float) * m * m,
                np.asarray(sk.fiber.dyu(uu, yy), dtype=float) * m,
                np.asarray(sk.fiber.dyy(uu, yy), dtype=float),
            ])
        else:
            f1x = np.empty_like(xx)
            f1y = np.empty_like(xx)
            f2x = np.empty_like(xx)
            f2y = np.empty_like(xx)
            sec = np.empty((6,) + xx.shape)
            for idx in np.ndindex(xx.shape):
                d1 = branch.jacobian(xx[idx], yy[idx])
                d2 = branch.second(xx[idx], yy[idx])
                f1x[idx], f1y[idx] = d1[0, 0], d1[0, 1]
                f2x[idx], f2y[idx] = d1[1, 0], d1[1, 1]
                sec[(slice(None),) + idx] = d2.reshape(6)

        absf1x = np.abs(f1x)
        push("eq5", np.abs(f1y) / absf1x, xx, yy, si, "max")
        push("eq6", np.abs(f2x) / absf1x, xx, yy, si, "max")
        push("eq7", np.abs(f2y) / absf1x, xx, yy, si, "max")
        push("a3", np.maximum.reduce([absf1x, np.abs(f1y), np.abs(f2x), np.abs(f2y)]),
             xx, yy, si, "max")
        push("a4", np.maximum(np.abs(f1y), np.abs(f2x)), xx, yy, si, "max")
        push("c0", np.max(np.abs(sec), axis=0), xx, yy, si, "max")
        jac = f1x * f2y - f1y * f2x
        push("a2", np.abs(jac), xx, yy, si, "min")
        push("a2_max", np.abs(jac), xx, yy, si, "max")

        # cone images: unstable boundary vectors forward, stable backward
        h1_vals = []
        h2_vals = []
        for t in (alpha, -alpha):
            num = f2x + f2y * t
            den = f1x + f1y * t
            h1_vals.append(np.abs(num) / np.abs(den))          # out-slope vs alpha
            h2_vals.append(np.maximum(np.abs(den), np.abs(num)))  # expansion vs k0
        det = jac
        for s in (alpha, -alpha):
            # DF^{-1} (s, 1) = (1/det) * (F2y*s - F1y, -F2x*s + F1x)
            w1 = (f2y * s - f1y) / det
            w2 = (-f2x * s + f1x) / det
            h1_vals.append(np.abs(w1) / np.abs(w2))
            h2_vals.append(np.maximum(np.abs(w1), np.abs(w2)))
        push("h1", np.maximum.reduce(h1_vals), xx, yy, si, "max")
        push("h2", np.minimum.reduce(h2_vals), xx, yy, si, "min")

        # same-fiber single-branch contraction ratio (distortion spot check):
        # columns share x, so compare extremes of |F2y| along each column
        col_max = np.abs(f2y).max(axis=1)
        col_min = np.abs(f2y).min(axis=1)
        ratio = col_max / np.maximum(col_min, 1e-300)
        push("eq8", ratio, xg, np.full_like(xg, jlo), si, "max")

    c0 = stats["c0"][0]
    c1 = math.sqrt(2.0) * (1.0 + alpha) * c0
    report.c0 = c0
    report.c1 = c1

    def result(name, observed_key, bound, mode="max"):
        observed, witness = stats[observed_key]
        margin = bound - observed if mode == "max" else observed - bound
        return CheckResult(observed=observed, bound=bound, margin=margin,
                           passed=margin >= 0.0,
                           witness=witness if margin < 0 else None)

    report.checks["eq5"] = result("eq5", "eq5", alpha)
    report.checks["eq6"] = result("eq6", "eq6", alpha)
    report.checks["eq7"] = result("eq7", "eq7", 1.0 / k0 ** 2 + alpha ** 2)
    report.checks["eq8"] = result("eq8", "eq8", math.exp(c1))
    report.checks["h1"] = result("h1", "h1", alpha)
    report.checks["h2"] = result("h2", "h2", k0, mode="min")
    report.checks["a1"] = CheckResult(observed=c0, bound=math.inf, margin=math.inf,
                                      passed=math.isfinite(c0))
    report.checks["a2"] = result("a2", "a2", 0.0, mode="min")
    # a2 margin is the min |Jacobian| itself; nonzero means invertible
    report.checks["a2"].passed = report.checks["a2"].observed > 0.0
    report.checks["a3"] = CheckResult(observed=stats["a3"][0], bound=math.inf,
                                      margin=math.inf, passed=math.isfinite(stats["a3"][0]))
    report.checks["a4"] = result("a4", "a4", 0.125)
    report.checks["jac_range"] = CheckResult(
        observed=stats["a2_max"][0], bound=math.inf, margin=math.inf, passed=True)
    return report
