"""Distortion constants and adapted-frame derivative bounds on instances.

Everything here is an empirical estimate over recorded finite samples:
suprema over lattices, orbitwise ratios along sampled words, and the
inverse derivative expressed in the frame aligned with the invariant
splitting.  For diagonal instances every constant collapses to its closed
form, which the tests pin to machine accuracy.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateExtensionError,
    DegenerateScaleError,
    ItineraryError,
    OutOfDomainError,
    ParameterError,
)
from .maps import apply_branch, branch_derivative
from .symbolic import base_cylinder, check_word, fiber_image

_FRAME_FLOOR = 1e-10


# ---------------------------------------------------------------------------
# invariant directions


def _slope_contraction(spec):
    worst_slope = max(hi for _, hi in spec.fiber_slope_bounds())
    min_base = min(sk.base_slope for sk in spec.skew)
    return worst_slope / min_base


def unstable_direction(spec, word_history, z, depth):
    """Forward-cone direction at z whose past follows the given history.

    Pulls z back ``depth`` steps along the history, pushes the horizontal
    cone axis forward again, and returns (unit vector, slope error bound);
    the bound is the cone aperture shrunk by the per-step slope contraction.
    """
    word_history = check_word(spec, word_history)
    if depth < 0:
        raise ParameterError("depth must be nonnegative")
    if depth > len(word_history):
        raise ItineraryError(
            f"history of length {len(word_history)} cannot supply {depth} steps")
    c = _slope_contraction(spec)
    err = spec.alpha * c ** depth
    if depth == 0:
        return (1.0, 0.0), err
    past = []
    p = z
    for s in word_history[:depth]:
        p = apply_branch(spec, s, p, direction="inverse")
        past.append(p)
    v = np.array([1.0, 0.0])
    for k in range(depth - 1, -1, -1):
        s = word_history[k]
        d = branch_derivative(spec, s, past[k])
        v = np.array([d[0][0] * v[0] + d[0][1] * v[1],
                      d[1][0] * v[0] + d[1][1] * v[1]])
        v /= float(np.hypot(v[0], v[1]))
    return (float(v[0]), float(v[1])), err


# ---------------------------------------------------------------------------
# stable distortion along words


def stable_distortion_ratio(spec, word, z, w):
    """Worst two-sided ratio of fiber contraction along paired orbits.

    Both points must sit on one vertical fiber over a departure base point
    of the word; the symbols are applied forward from the deep end, and the
    ratio compares the accumulated vertical derivative along the two
    orbits, maximized over all intermediate lengths.
    """
    word = check_word(spec, word)
    if not word:
        raise ParameterError("need a nonempty word")
    x = float(z[0])
    if abs(x - float(w[0])) > 1e-12:
        raise ParameterError("points lie on different fibers")
    lo_b, hi_b = base_cylinder(spec, word)
    if not lo_b - 1e-12 <= x <= hi_b + 1e-12:
        raise OutOfDomainError(
            f"base point {x} outside the departure interval of {word}",
            point=z)
    pz, pw = (x, float(z[1])), (x, float(w[1]))
    prod_z, prod_w = 1.0, 1.0
    worst = 1.0
    for s in reversed(word):
        sk = spec.skew[s - 1]
        u = float(sk.base_forward(pz[0]))
        dz = float(sk.fiber.dy(u, pz[1]))
        dw = float(sk.fiber.dy(u, pw[1]))
        if abs(dz) < _FRAME_FLOOR or abs(dw) < _FRAME_FLOOR:
            raise DegenerateScaleError("vanishing stable derivative on orbit")
        pz = apply_branch(spec, s, pz)
        pw = apply_branch(spec, s, pw)
        prod_z *= abs(dz)
        prod_w *= abs(dw)
        ratio = prod_z / prod_w
        worst = max(worst, ratio, 1.0 / ratio)
    return worst


def fiber_ratio_constant(spec, word, x_grid_n=129):
    """Spread of the extended fiber width of one word across the base."""
    if x_grid_n < 2:
        raise ParameterError("need at least 2 grid points")
    xg = np.linspace(0.0, 1.0, x_grid_n)
    lo, hi = fiber_image(spec, word, xg, hat=True)
    widths = np.asarray(hi) - np.asarray(lo)
    return float(widths.max() / widths.min())


def _walk_words(spec, depth_max, x_grid_n=65):
    """Yield (word, extended fiber width grid) for every word to depth_max."""
    xg = np.linspace(0.0, 1.0, x_grid_n)
    stack = [()]
    while stack:
        word = stack.pop()
        if word:
            lo, hi = fiber_image(spec, word, xg, hat=True)
            yield word, np.asarray(hi) - np.asarray(lo)
        if len(word) < depth_max:
            for s in range(1, spec.n_strips + 1):
                stack.append(word + (s,))


def fiber_ratio_sup(spec, depth_max, x_grid_n=65):
    """Largest width spread over every word to depth_max."""
    out = 1.0
    for _, wd in _walk_words(spec, depth_max, x_grid_n):
        out = max(out, float(wd.max() / wd.min()))
    return out


# ---------------------------------------------------------------------------
# extension margins


@dataclass
class MarginReport:
    word: tuple
    k3: float
    fiber_spread: float
    r_used: float
    checked: int
    violations: int
    control_r: float
    control_violations: int

    @property
    def corollary_ok(self):
        return self.violations == 0


def margin_constants(spec, word, x_grid_n=129, n_points=1000, seed=5):
    """Relative size of the extension margins, plus an inclusion check.

    The extended fiber image carries two margin components around the plain
    one; k3 is the smaller component relative to the extended width, over
    the base grid.  The inclusion check draws points whose vertical
    distance to the plain image is below k3 / spread times the width and
    asserts they land inside the extended image; a deliberately oversized
    radius is rerun as a negative control.
    """
    word = check_word(spec, word)
    if x_grid_n < 2:
        raise ParameterError("need at least 2 grid points")
    xg = np.linspace(0.0, 1.0, x_grid_n)
    lo, hi = (np.asarray(v) for v in fiber_image(spec, word, xg, hat=False))
    hlo, hhi = (np.asarray(v) for v in fiber_image(spec, word, xg, hat=True))
    hat_width = hhi - hlo
    margins = np.minimum(lo - hlo, hhi - hi)
    k3 = float((margins / hat_width).min())
    if k3 < 1e-9:
        raise DegenerateExtensionError(
            f"extension margins vanish for word {word} (k3 = {k3:.3g})")
    spread = float(hat_width.max() / hat_width.min())
    d = float(hat_width.max())
    r = 0.5 * k3 / spread * d
    rng = np.random.default_rng(seed)

    def run(radius):
        xs = rng.random(n_points)
        side = rng.random(n_points)
        off = rng.random(n_points)
        li, hi_i = (np.asarray(v) for v in fiber_image(spec, word, xs, hat=False))
        hli, hhi_i = (np.asarray(v) for v in fiber_image(spec, word, xs, hat=True))
        ys = np.where(side < 0.5,
                      li - off * radius * 0.999,
                      hi_i + off * radius * 0.999)
        return int(((ys < hli) | (ys > hhi_i)).sum())

    violations = run(r)
    control_r = 10.0 * k3 / spread * d
    control_violations = run(control_r)
    return MarginReport(
        word=word, k3=k3, fiber_spread=spread, r_used=r,
        checked=n_points, violations=violations,
        control_r=control_r, control_violations=control_violations)


# ---------------------------------------------------------------------------
# adapted-frame derivative


def _skew_df(spec, s, point):
    sk = spec.skew[s - 1]
    x, y = float(point[0]), float(point[1])
    u = float(sk.base_forward(x))
    m = sk.base_slope
    return (m, 0.0, float(sk.fiber.du(u, y)) * m, float(sk.fiber.dy(u, y)))


def _detect_branch(spec, z):
    x, y = float(z[0]), float(z[1])
    for s in range(1, spec.n_strips + 1):
        lo, hi = fiber_image(spec, (s,), x, hat=True)
        if lo - 1e-12 <= y <= hi + 1e-12:
            return s
    raise OutOfDomainError(
        f"point {z} lies in no branch image", point=z)


def adapted_derivative(spec, z, w, unstable_dir, branch=None):
    """Inverse-branch derivative in the splitting-aligned frame at z and w.

    The frame takes the unstable direction (slope a) and the stable one
    (slope b, zero for skew products) as axes.  Entries are evaluated twice:
    from the explicit component expressions and from the assembled matrix
    product; both are returned with their difference so callers can assert
    agreement.  Ratios against the stable entry feed the feasibility flags.
    """
    if branch is None:
        branch = _detect_branch(spec, z)

    def entries(point):
        a = float(unstable_dir[1]) / float(unstable_dir[0])
        b = 0.0  # stable bundle of a skew product is vertical
        pre = apply_branch(spec, branch, point, direction="inverse")
        f1x, f1y, f2x, f2y = _skew_df(spec, branch, pre)
        jf = f1x * f2y - f1y * f2x
        # direction at the preimage: the forward derivative maps it to ours
        det = jf
        if abs(det) < _FRAME_FLOOR:
            raise DegenerateScaleError("near-degenerate adapted frame")
        vx = (f2y * 1.0 - f1y * a) / det
        vy = (-f2x * 1.0 + f1x * a) / det
        if abs(vx) < _FRAME_FLOOR:
            raise DegenerateScaleError("pulled-back direction left the cone")
        a_pre = vy / vx
        b_pre = 0.0
        ja = 1.0 - a_pre * b_pre
        if abs(jf * ja) < _FRAME_FLOOR:
            raise DegenerateScaleError("near-degenerate adapted frame")
        scale = 1.0 / (jf * ja)
        # explicit expansions of inv(frame(pre)) @ inv(DF) @ frame(point)
        g11 = scale * (f2y + b_pre * f2x - a * f1y - a * b_pre * f1x)
        g12 = scale * (b * f2y + b * b_pre * f2x - f1y - b_pre * f1x)
        g21 = scale * (-a_pre * f2y - f2x + a * a_pre * f1y + a * f1x)
        g22 = scale * (b * (-a_pre * f2y - f2x) + a_pre * f1y + f1x)
        direct = np.array([[g11, g12], [g21, g22]])
        frame_here = np.array([[1.0, b], [a, 1.0]])
        frame_pre = np.array([[1.0, b_pre], [a_pre, 1.0]])
        df = np.array([[f1x, f1y], [f2x, f2y]])
        assembled = np.linalg.solve(frame_pre, np.linalg.solve(df, frame_here))
        return direct, float(np.abs(direct - assembled).max()), a_pre

    g_z, err_z, a_pre = entries(z)
    g_w, err_w, _ = entries(w)
    g22 = abs(g_w[1, 1])
    if g22 < _FRAME_FLOOR:
        raise DegenerateScaleError("stable entry vanishes")
    return {
        "branch": branch,
        "g_z": g_z,
        "g_w": g_w,
        "route_error": max(err_z, err_w),
        "a_pre": a_pre,
        "c2_sample": abs(g_z[0, 0]),
        "c3_sample": g22,
        "eq12_ratio": abs(g_w[0, 0]) / g22,
        "offdiag_ratio": abs(g_w[0, 1]) / g22,
        "mixed_ratio": abs(g_w[1, 0]) / g22,
    }


# ---------------------------------------------------------------------------
# aggregate report


@dataclass
class DiagnosticsReport:
    k_stable: float
    k2: float
    k3: float
    k4: float
    c2: float
    c3: float
    c4: float
    eq12_margin: float
    eq12_ratio_max: float
    feasible_c4: bool
    feasible_k0: bool
    route_error: float
    samples_used: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_json(self, path=None):
        payload = {
            "k_stable": self.k_stable, "k2": self.k2, "k3": self.k3,
            "k4": self.k4, "c2": self.c2, "c3": self.c3, "c4": self.c4,
            "eq12_margin": self.eq12_margin,
            "eq12_ratio_max": self.eq12_ratio_max,
            "feasible_c4": self.feasible_c4, "feasible_k0": self.feasible_k0,
            "route_error": self.route_error,
            "samples_used": self.samples_used, "meta": self.meta,
        }
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return payload


def _concatenation_constant(spec, depth, x_grid_n=65):
    """Worst two-sided defect of width multiplicativity under splicing."""
    jlen = spec.fiber_len
    cap = min(depth, 6)
    table = {}
    for word, wd in _walk_words(spec, cap, x_grid_n):
        table[word] = float(wd.max())
    worst = 1.0
    for wa, da in table.items():
        for wb, db in table.items():
            if len(wa) + len(wb) > cap:
                continue
            dc = table[wa + wb]
            q = dc * jlen / (da * db)
            worst = max(worst, q, 1.0 / q)
    return worst


def run_diagnostics(spec, word_depth=8, lattice_n=64, depth=10, seed=11,
                    offset=1e-3, csv_path=None):
    """Estimate every distortion constant on one instance.

    Lattice points are taken inside each branch image (so the inverse step
    is always defined) with the unstable direction of the constant past of
    that branch; the displaced partner sits ``offset`` along the direction.
    Suprema are over the recorded samples only.
    """
    rng = np.random.default_rng(seed)
    # stable distortion over sampled words and fiber pairs
    k_stable = 1.0
    words = []
    for _ in range(12):
        n = int(rng.integers(2, max(3, word_depth + 1)))
        words.append(tuple(int(s) for s in
                           rng.integers(1, spec.n_strips + 1, size=n)))
    for word in words:
        lo_b, hi_b = base_cylinder(spec, word)
        x = float(lo_b + (hi_b - lo_b) * rng.random())
        y1 = float(0.05 + 0.4 * rng.random())
        y2 = float(0.55 + 0.4 * rng.random())
        k_stable = max(k_stable,
                       stable_distortion_ratio(spec, word, (x, y1), (x, y2)))

    k2 = fiber_ratio_sup(spec, word_depth)
    k4 = _concatenation_constant(spec, word_depth)
    margin_words = [()]
    margin_words += [(s,) for s in range(1, spec.n_strips + 1)]
    margin_words += [(1, s) for s in range(1, spec.n_strips + 1)]
    k3 = min(margin_constants(spec, w, x_grid_n=65, n_points=200,
                              seed=seed).k3 for w in margin_words)

    c2 = 0.0
    c3 = math.inf
    c4 = 0.0
    eq12 = 0.0
    route_err = 0.0
    rows = []
    n_lattice = 0
    for s in range(1, spec.n_strips + 1):
        history = (s,) * depth
        for xi in np.linspace(0.02, 0.98, lattice_n):
            lo, hi = fiber_image(spec, history, float(xi), hat=False)
            for t in np.linspace(0.05, 0.95, max(2, lattice_n // 8)):
                z = (float(xi), float(lo + t * (hi - lo)))
                vec, _ = unstable_direction(spec, history, z, depth)
                w = (z[0] + offset * vec[0], z[1] + offset * vec[1])
                if not 0.0 <= w[0] <= 1.0:
                    continue
                got = adapted_derivative(spec, z, w, vec, branch=s)
                c2 = max(c2, got["c2_sample"])
                c3 = min(c3, got["c3_sample"])
                c4 = max(c4, got["offdiag_ratio"])
                eq12 = max(eq12, got["eq12_ratio"])
                route_err = max(route_err, got["route_error"])
                n_lattice += 1
                if csv_path is not None:
                    rows.append((z[0], z[1], got["eq12_ratio"],
                                 got["offdiag_ratio"], got["c2_sample"],
                                 got["c3_sample"]))
    if csv_path is not None:
        lines = ["x,y,eq12_ratio,offdiag_ratio,c2_sample,c3_sample"]
        lines += [",".join(repr(float(v)) for v in row) for row in rows]
        with open(csv_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    return DiagnosticsReport(
        k_stable=k_stable, k2=k2, k3=k3, k4=k4,
        c2=c2, c3=c3, c4=c4,
        eq12_margin=1.0 / spec.k0 ** 2 - eq12,
        eq12_ratio_max=eq12,
        feasible_c4=c4 < 0.25,
        feasible_k0=spec.k0 > 3.0,
        route_error=route_err,
        samples_used={"stable_words": len(words), "lattice": n_lattice,
                      "word_depth": word_depth, "cone_depth": depth},
        meta={"map": spec.label, "hash": spec.map_hash},
    )
