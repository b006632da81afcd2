"""Base-factor density, measure lifting, and the fiberwise L2 criterion.

The base factor of a skew product is the piecewise expanding interval map
induced on the first coordinate.  Its invariant density is estimated by a
transfer-matrix (cell-overlap) discretization; the two-dimensional invariant
measure is then realized by drawing base points from that density, pushing
them through the strip map, and histogramming fiber conditionals.  The L2
criterion integrates squared sliding-window masses of those conditionals.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse

from .errors import (
    ConvergenceError,
    OutOfDomainError,
    ParameterError,
    ResolutionError,
    SampleDiscardError,
    StripBoundary,
)
from .maps import GhmSpec

_BOUNDARY_TOL = 1e-12
_JITTER = 1e-12
_CHUNK = 1 << 18


# ---------------------------------------------------------------------------
# base factor


def factor_map_eval(spec, x):
    """Base factor value at x; strip boundaries raise a side-choice signal."""
    x = float(x)
    if not (-_BOUNDARY_TOL <= x <= 1.0 + _BOUNDARY_TOL):
        raise OutOfDomainError(f"base point {x} outside [0,1]", point=x)
    breaks = spec.base_breaks
    for k in range(1, spec.n_strips):
        if abs(x - breaks[k]) <= _BOUNDARY_TOL:
            raise StripBoundary(x, (k, k + 1))
    i = spec.strip_index_of(min(max(x, 0.0), 1.0))
    sk = spec.skew[i - 1]
    return float(sk.base_forward(x))


@dataclass(frozen=True)
class PiecewiseAffineBase:
    """Standalone expanding interval map, for density estimation on its own.

    ``breaks`` partitions [0,1]; branch i sends x to slopes[i]*x + offsets[i].
    Branches need not be onto [0,1] (Markov test maps are not), but must map
    into it.
    """

    breaks: tuple
    slopes: tuple
    offsets: tuple

    def __post_init__(self):
        if len(self.slopes) != len(self.breaks) - 1:
            raise ParameterError("one slope per base interval required")
        if len(self.offsets) != len(self.slopes):
            raise ParameterError("one offset per base interval required")


def _base_of(spec_or_base):
    if isinstance(spec_or_base, GhmSpec):
        sks = spec_or_base.skew
        breaks = tuple(float(v) for v in spec_or_base.base_breaks)
        return PiecewiseAffineBase(
            breaks=breaks,
            slopes=tuple(sk.base_slope for sk in sks),
            offsets=tuple(sk.base_offset for sk in sks),
        )
    return spec_or_base


@dataclass
class Density1D:
    """Binned base-invariant density with essential-bound estimates."""

    bins: int
    masses: np.ndarray
    l_bound: float
    L_bound: float
    residual: float = 0.0
    sweeps: int = 0

    def density(self):
        return self.masses * self.bins

    def cdf_edges(self):
        return np.concatenate([[0.0], np.cumsum(self.masses)])


def ulam_transition(base, bins):
    """Sparse cell-to-cell transfer fractions of the base map.

    Entry (j, k) is the fraction of cell j that lands in cell k; computed
    from exact interval overlaps, so piecewise-affine images are represented
    without quadrature error.
    """
    base = _base_of(base)
    rows, cols, vals = [], [], []
    edges = np.linspace(0.0, 1.0, bins + 1)
    for (blo, bhi), m, c in zip(zip(base.breaks, base.breaks[1:]),
                                base.slopes, base.offsets):
        j_first = int(np.searchsorted(edges, blo, side="right")) - 1
        j_last = int(np.searchsorted(edges, bhi, side="left")) - 1
        for j in range(max(j_first, 0), min(j_last, bins - 1) + 1):
            a = max(edges[j], blo)
            b = min(edges[j + 1], bhi)
            if b <= a:
                continue
            ia, ib = m * a + c, m * b + c
            if ia > ib:
                ia, ib = ib, ia
            k_first = int(np.searchsorted(edges, ia, side="right")) - 1
            k_last = int(np.searchsorted(edges, ib, side="left")) - 1
            for k in range(max(k_first, 0), min(k_last, bins - 1) + 1):
                lo = max(edges[k], ia)
                hi = min(edges[k + 1], ib)
                if hi > lo:
                    rows.append(j)
                    cols.append(k)
                    # fraction of cell j whose image covers [lo, hi]
                    vals.append((hi - lo) / abs(m) / (edges[j + 1] - edges[j]))
    return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(bins, bins))


def ulam_acip(spec_or_base, bins=4096, tol=1e-12, max_sweeps=100_000):
    """Stationary cell masses of the transfer discretization.

    Power-iterates the mass-transport matrix from the uniform vector until
    the total-variation step residual reaches ``tol``.
    """
    if bins < 16 or bins & (bins - 1) != 0:
        raise ParameterError(f"bin count must be a power of two >= 16, got {bins}")
    if not tol > 0.0:
        raise ParameterError("a zero residual tolerance is unreachable; use tol > 0")
    transport = ulam_transition(spec_or_base, bins).T.tocsr()
    v = np.full(bins, 1.0 / bins)
    history = []
    for sweep in range(1, max_sweeps + 1):
        w = transport @ v
        s = w.sum()
        if s <= 0:
            raise ConvergenceError("transfer matrix lost all mass", history)
        w /= s
        residual = 0.5 * float(np.abs(w - v).sum())
        history.append(residual)
        v = w
        if residual <= tol:
            dens = v * bins
            return Density1D(bins=bins, masses=v,
                            l_bound=float(dens.min()), L_bound=float(dens.max()),
                            residual=residual, sweeps=sweep)
    raise ConvergenceError(
        f"no residual <= {tol} within {max_sweeps} sweeps "
        f"(last {min(5, len(history))}: {history[-5:]})", history)


# ---------------------------------------------------------------------------
# lifting


@dataclass
class SrbEstimate:
    """Sampled two-dimensional invariant measure with fiber conditionals.

    ``cond_counts`` is the (x-bin, y-bin) histogram over [0,1] x J used for
    fiber conditionals; ``sq_counts`` is a square histogram over [0,1]^2 for
    density grids.  Raw endpoints are retained only for moderate sample
    counts (pushing the estimate forward needs them; conditionals do not).
    """

    spec_hash: str
    seed: int
    n_samples: int
    iterations_used: int
    fiber_bins: int
    y_bins: int
    fiber_range: tuple
    cond_counts: np.ndarray
    sq_counts: np.ndarray
    sq_bins: int
    kept: int
    discarded: int
    jittered: int
    contraction_budget: float
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def weight(self):
        return 1.0 / self.kept

    def column_mass(self):
        return self.cond_counts.sum(axis=1) / self.kept

    def x_marginal_masses(self):
        return self.column_mass()

    def conditionals(self):
        """Per-column probability vectors over the fiber bins (rows sum to 1)."""
        counts = self.cond_counts.astype(float)
        tot = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(tot > 0, counts / tot, 0.0)
        return out

    @property
    def y_cell(self):
        return (self.fiber_range[1] - self.fiber_range[0]) / self.y_bins


def _draw_base_points(density, n, rng):
    """Inverse-CDF sampling of the binned density (linear within cells)."""
    cums = density.cdf_edges()
    u = rng.random(n)
    j = np.searchsorted(cums, u, side="right") - 1
    j = np.clip(j, 0, density.bins - 1)
    mass = density.masses[j]
    frac = np.where(mass > 0, (u - cums[j]) / np.maximum(mass, 1e-300), 0.0)
    return (j + frac) / density.bins


def _step_chunk(spec, x, y, counters):
    """One forward application of the strip map to a block of points."""
    breaks = spec.base_breaks
    inner = breaks[1:-1]
    if inner.size:
        near = np.min(np.abs(x[:, None] - inner[None, :]), axis=1) <= _BOUNDARY_TOL
        if near.any():
            counters["jittered"] += int(near.sum())
            x = np.where(near, x + _JITTER, x)
    idx = np.clip(np.searchsorted(breaks, x, side="right") - 1, 0, spec.n_strips - 1)
    u = np.empty_like(x)
    v = np.empty_like(y)
    for i, sk in enumerate(spec.skew):
        sel = idx == i
        if not sel.any():
            continue
        uu = sk.base_forward(x[sel])
        u[sel] = uu
        v[sel] = sk.fiber.value(uu, y[sel])
    return u, v


def lift_srb(spec, density, n_iter, n_samples, seed,
             fiber_bins=256, y_bins=4096, sq_bins=256,
             keep_samples=None, workers=1, max_discard_frac=0.01):
    """Push base-density samples through the map and histogram the endpoints.

    The iteration count realizes the lifting limit at finite depth: fibers
    contract by at least the largest slope per step, and the leftover fiber
    uncertainty (max slope)^n_iter * |J| is recorded on the estimate so the
    caller can compare it with the histogram resolution.  Work is split into
    fixed-size chunks with per-chunk child seeds; results are merged in chunk
    order, so the outcome is identical for any worker count.
    """
    if n_iter < 1:
        raise ParameterError("need at least one iteration to leave the base line")
    if n_samples < 1:
        raise ParameterError("need at least one sample")
    if spec.skew is None:
        raise ParameterError("lifting needs a skew-product instance")
    jlo, jhi = spec.extended_fiber
    if keep_samples is None:
        keep_samples = n_samples <= 2_000_000
    contraction = max(hi for _, hi in spec.fiber_slope_bounds())

    n_chunks = (n_samples + _CHUNK - 1) // _CHUNK
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(_CHUNK, n_samples - k * _CHUNK) for k in range(n_chunks)]

    def run_chunk(args):
        child_seed, m = args
        rng = np.random.default_rng(child_seed)
        counters = {"jittered": 0}
        x = _draw_base_points(density, m, rng)
        y = np.zeros_like(x)
        for _ in range(n_iter):
            x, y = _step_chunk(spec, x, y, counters)
        good = (x >= -_BOUNDARY_TOL) & (x <= 1 + _BOUNDARY_TOL) & (y >= jlo) & (y <= jhi)
        dropped = int(m - good.sum())
        if dropped:
            x, y = x[good], y[good]
        cond, _, _ = np.histogram2d(
            x, y, bins=[fiber_bins, y_bins], range=[[0.0, 1.0], [jlo, jhi]])
        sq, _, _ = np.histogram2d(
            x, y, bins=[sq_bins, sq_bins], range=[[0.0, 1.0], [0.0, 1.0]])
        return (cond.astype(np.int64), sq.astype(np.int64), dropped,
                counters["jittered"], x if keep_samples else None,
                y if keep_samples else None)

    args = list(zip(seeds, sizes))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, args))
    else:
        results = [run_chunk(a) for a in args]

    cond = np.zeros((fiber_bins, y_bins), dtype=np.int64)
    sq = np.zeros((sq_bins, sq_bins), dtype=np.int64)
    discarded = 0
    jittered = 0
    xs, ys = [], []
    for c, s, d, j, x, y in results:
        cond += c
        sq += s
        discarded += d
        jittered += j
        if keep_samples:
            xs.append(x)
            ys.append(y)
    if discarded > max_discard_frac * n_samples:
        raise SampleDiscardError(
            f"{discarded} of {n_samples} orbit samples left the domain",
            discarded, n_samples)
    kept = n_samples - discarded
    return SrbEstimate(
        spec_hash=spec.map_hash,
        seed=int(seed),
        n_samples=int(n_samples),
        iterations_used=int(n_iter),
        fiber_bins=int(fiber_bins),
        y_bins=int(y_bins),
        fiber_range=(jlo, jhi),
        cond_counts=cond,
        sq_counts=sq,
        sq_bins=int(sq_bins),
        kept=int(kept),
        discarded=int(discarded),
        jittered=int(jittered),
        contraction_budget=float(contraction ** n_iter * (jhi - jlo)),
        x=np.concatenate(xs) if keep_samples else None,
        y=np.concatenate(ys) if keep_samples else None,
    )


def push_forward(spec, srb):
    """Advance a sample-carrying estimate one more step (for invariance checks)."""
    if srb.x is None:
        raise ParameterError("estimate was built without retained samples")
    counters = {"jittered": 0}
    x, y = _step_chunk(spec, srb.x.copy(), srb.y.copy(), counters)
    jlo, jhi = srb.fiber_range
    cond, _, _ = np.histogram2d(
        x, y, bins=[srb.fiber_bins, srb.y_bins], range=[[0.0, 1.0], [jlo, jhi]])
    sq, _, _ = np.histogram2d(
        x, y, bins=[srb.sq_bins, srb.sq_bins], range=[[0.0, 1.0], [0.0, 1.0]])
    out = SrbEstimate(
        spec_hash=srb.spec_hash, seed=srb.seed, n_samples=srb.n_samples,
        iterations_used=srb.iterations_used + 1, fiber_bins=srb.fiber_bins,
        y_bins=srb.y_bins, fiber_range=srb.fiber_range,
        cond_counts=cond.astype(np.int64), sq_counts=sq.astype(np.int64),
        sq_bins=srb.sq_bins, kept=len(x), discarded=srb.discarded,
        jittered=srb.jittered + counters["jittered"],
        contraction_budget=srb.contraction_budget, x=x, y=y)
    return out


def density_grid(srb, nx, ny):
    """Weight-normalized histogram of the estimate over the unit square."""
    if nx < 1 or ny < 1:
        raise ParameterError("grid shape must be at least 1x1")
    if srb.sq_bins % nx == 0 and srb.sq_bins % ny == 0:
        fx = srb.sq_bins // nx
        fy = srb.sq_bins // ny
        blocks = srb.sq_counts.reshape(nx, fx, ny, fy).sum(axis=(1, 3))
        return blocks / blocks.sum()
    if srb.x is None:
        raise ParameterError(
            f"grid {nx}x{ny} does not divide the stored {srb.sq_bins}^2 histogram "
            "and no raw samples were retained")
    h, _, _ = np.histogram2d(srb.x, srb.y, bins=[nx, ny],
                             range=[[0.0, 1.0], [0.0, 1.0]])
    return h / h.sum()


# ---------------------------------------------------------------------------
# sliding-window L2 machinery


def _window_breakpoints(edges, r):
    bp = np.unique(np.concatenate([edges - r, edges + r]))
    return bp


def _cdf_at(masses, edges, z):
    """Piecewise-linear CDF of a histogram, vectorized over z.

    ``masses`` may be 1-D (one column) or 2-D (columns x cells); the result
    broadcasts accordingly.
    """
    nbins = edges.size - 1
    lo, hi = edges[0], edges[-1]
    width = (hi - lo) / nbins
    zc = np.clip(z, lo, hi)
    j = np.minimum(((zc - lo) / width).astype(int), nbins - 1)
    frac = (zc - (lo + j * width)) / width
    if masses.ndim == 1:
        cums = np.concatenate([[0.0], np.cumsum(masses)])
        return cums[j] + masses[j] * frac
    cums = np.concatenate([np.zeros((masses.shape[0], 1)), np.cumsum(masses, axis=1)],
                          axis=1)
    return cums[:, j] + masses[:, j] * frac


def _sliding_sq_integral(masses, edges, r):
    """integral of (mass of the radius-r window)^2 dz, exactly.

    The window mass W(z) = C(z+r) - C(z-r) is piecewise linear between
    breakpoints; each segment contributes len * (w1^2 + w1*w2 + w2^2)/3.
    """
    bp = _window_breakpoints(edges, r)
    w = _cdf_at(masses, edges, bp + r) - _cdf_at(masses, edges, bp - r)
    seg = np.diff(bp)
    if masses.ndim == 1:
        w1, w2 = w[:-1], w[1:]
        return float(np.sum(seg * (w1 * w1 + w1 * w2 + w2 * w2) / 3.0))
    w1, w2 = w[:, :-1], w[:, 1:]
    return np.sum(seg[None, :] * (w1 * w1 + w1 * w2 + w2 * w2) / 3.0, axis=1)


def fiber_l2_norm(srb, x_bin, r):
    """Squared L2 window norm of one fiber conditional at radius r.

    Refuses radii at or below the conditional histogram cell height rather
    than extrapolating below resolution.
    """
    r = float(r)
    cell = srb.y_cell
    if r <= 0.0 or r < cell:
        raise ResolutionError(
            f"radius {r} below conditional histogram resolution {cell:.3g}")
    counts = srb.cond_counts[x_bin].astype(float)
    tot = counts.sum()
    if tot <= 0:
        raise ParameterError(f"fiber bin {x_bin} holds no samples")
    edges = np.linspace(srb.fiber_range[0], srb.fiber_range[1], srb.y_bins + 1)
    return _sliding_sq_integral(counts / tot, edges, r)


def fiber_l2_norms(srb, r):
    """Vector of squared window norms over all nonempty fiber bins.

    Empty bins yield 0; callers weight them out.
    """
    r = float(r)
    cell = srb.y_cell
    if r <= 0.0 or r < cell:
        raise ResolutionError(
            f"radius {r} below conditional histogram resolution {cell:.3g}")
    probs = srb.conditionals()
    edges = np.linspace(srb.fiber_range[0], srb.fiber_range[1], srb.y_bins + 1)
    return _sliding_sq_integral(probs, edges, r)


@dataclass
class CriterionTable:
    """I(r) sweep: radii, values, per-bin window norms, and a window verdict."""

    r_values: np.ndarray
    i_of_r: np.ndarray
    fiber_norms: np.ndarray
    weighting: str
    verdict: str
    bounded_ratio: float
    diverging_slope: float

    def loglog_slope(self):
        return float(np.polyfit(np.log(self.r_values), np.log(self.i_of_r), 1)[0])

    def to_csv(self, path):
        lines = ["r,I_r"]
        for r, v in zip(self.r_values, self.i_of_r):
            lines.append(f"{float(r)!r},{float(v)!r}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def report(self):
        return {
            "r": [float(v) for v in self.r_values],
            "I_r": [float(v) for v in self.i_of_r],
            "weighting": self.weighting,
            "verdict": self.verdict,
            "loglog_slope": self.loglog_slope(),
        }


def tsujii_criterion(srb, r_list, weighting="lebesgue",
                     bounded_ratio=2.0, diverging_slope=-0.2):
    """I(r) over a decreasing radius sweep, with a boundedness verdict.

    I(r) = r^-2 * integral of the squared window norms across the base,
    weighted either by base Lebesgue measure ("lebesgue") or by the factor
    density's column masses ("factor_acip").  The verdict examines only the
    computed window: "bounded" when the three smallest radii vary by less
    than ``bounded_ratio``, "diverging" when the log-log slope is at or
    below ``diverging_slope``, else "indeterminate"; no limit claim is made.
    """
    r_list = [float(r) for r in r_list]
    if not r_list:
        raise ParameterError("empty radius sweep")
    if any(b >= a for a, b in zip(r_list, r_list[1:])):
        raise ParameterError("radius sweep must be strictly decreasing")
    if weighting not in ("lebesgue", "factor_acip"):
        raise ParameterError(f"unknown weighting {weighting!r}")
    col_mass = srb.column_mass()
    nonempty = col_mass > 0
    if weighting == "lebesgue":
        weights = np.where(nonempty, 1.0 / srb.fiber_bins, 0.0)
    else:
        weights = col_mass
    norms = np.empty((len(r_list), srb.fiber_bins))
    i_vals = np.empty(len(r_list))
    for k, r in enumerate(r_list):
        norms[k] = fiber_l2_norms(srb, r)
        i_vals[k] = float(np.dot(weights, norms[k])) / (r * r)
    small = i_vals[-3:] if len(i_vals) >= 3 else i_vals
    slope = float(np.polyfit(np.log(r_list), np.log(i_vals), 1)[0]) if len(r_list) > 1 else 0.0
    # systematic growth toward small r outranks a narrow-window ratio: the
    # window ratio of a slowly diverging sweep can sit below any fixed bound
    if slope <= diverging_slope:
        verdict = "diverging"
    elif float(small.max()) / float(small.min()) < bounded_ratio:
        verdict = "bounded"
    else:
        verdict = "indeterminate"
    return CriterionTable(
        r_values=np.array(r_list), i_of_r=i_vals, fiber_norms=norms,
        weighting=weighting, verdict=verdict,
        bounded_ratio=bounded_ratio, diverging_slope=diverging_slope)


# ---------------------------------------------------------------------------
# checkpointing


def save_srb(path, srb):
    from . import cache

    arrays = {"cond_counts": srb.cond_counts, "sq_counts": srb.sq_counts}
    if srb.x is not None:
        arrays["x"] = srb.x
        arrays["y"] = srb.y
    meta = {
        "spec_hash": srb.spec_hash, "seed": srb.seed, "n_samples": srb.n_samples,
        "iterations_used": srb.iterations_used, "fiber_bins": srb.fiber_bins,
        "y_bins": srb.y_bins, "fiber_range": list(srb.fiber_range),
        "sq_bins": srb.sq_bins, "kept": srb.kept, "discarded": srb.discarded,
        "jittered": srb.jittered, "contraction_budget": srb.contraction_budget,
    }
    return cache.write_blob(path, "srb_estimate", meta, arrays)


def load_srb(path, expect_spec_hash=None):
    from . import cache
    from .errors import CacheError

    meta, arrays = cache.read_blob(path, expect_kind="srb_estimate")
    if expect_spec_hash is not None and meta["spec_hash"] != expect_spec_hash:
        raise CacheError(f"{path}: checkpoint belongs to another map instance")
    return SrbEstimate(
        spec_hash=meta["spec_hash"], seed=meta["seed"], n_samples=meta["n_samples"],
        iterations_used=meta["iterations_used"], fiber_bins=meta["fiber_bins"],
        y_bins=meta["y_bins"], fiber_range=tuple(meta["fiber_range"]),
        cond_counts=arrays["cond_counts"], sq_counts=arrays["sq_counts"],
        sq_bins=meta["sq_bins"], kept=meta["kept"], discarded=meta["discarded"],
        jittered=meta["jittered"], contraction_budget=meta["contraction_budget"],
        x=arrays.get("x"), y=arrays.get("y"))
