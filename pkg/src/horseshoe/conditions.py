"""Fatness fits and pairwise transversality of maximal-scale families.

Fatness compares base-interval lengths with fiber widths across all words of
moderate depth.  Transversality is decided per pair of words from manifold
envelopes: the fiber interval pins every tail's position, and pushing the
tail slope hull through the word pins every tail's slope.  Verdicts are
three-valued; the non-transversal sum charges everything not certified
transversal, so it upper-bounds the true sum.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .symbolic import (
    check_word,
    cylinder_table,
    fiber_image,
    m_inventory,
)

_FP_MARGIN = 1e-12


# ---------------------------------------------------------------------------
# fatness


@dataclass
class FatnessFit:
    """Fitted width-versus-length exponent over an enumerated word family.

    The defining inequality |I_w| <= k1 * d(w)^(1+epsilon) is tight by
    construction: k1 is the smallest admissible constant for the fitted
    epsilon, so per_word_slack is zero up to rounding.  The family counts
    as fat when epsilon is nonnegative; the measure-preserving boundary
    case fits an exact zero (stored as such), and genuinely thin families
    come out clearly negative.
    """

    k1: float
    epsilon: float
    per_word_slack: float
    words_used: int
    depth_min: int
    depth_max: int
    partial: bool = False
    residual: float = 0.0

    @property
    def passed(self):
        return self.epsilon >= 0.0 and self.per_word_slack >= -1e-9


def fatness_fit(spec, depth_max, depth_min=2, x_grid_n=65, budget=400_000):
    """Fit (k1, epsilon) against the binding words of each depth.

    At finite depth any exponent is admissible with a large enough constant,
    so the exponent has to come from the growth rate of the binding
    constraints: per depth the word maximizing |I|/d is the one that limits
    the exponent, and the fitted epsilon is the least-squares slope of
    log|I| against log d through those binding points, minus one.  This
    recovers the exact exponent for collinear families and the worst
    slope-product rate otherwise.  The constant k1 is then the smallest
    admissible one over every enumerated word, so the reported slack is
    zero up to rounding.
    """
    if depth_max < 2:
        raise ParameterError("need depth_max >= 2")
    if not 1 <= depth_min <= depth_max:
        raise ParameterError("need 1 <= depth_min <= depth_max")
    words, lens, diams, complete = cylinder_table(
        spec, depth_max, x_grid_n=x_grid_n, budget=budget)
    partial = complete < depth_max
    depth_hi = min(depth_max, complete)
    if depth_hi < depth_min:
        raise ParameterError(
            f"budget {budget} cannot reach depth {depth_min}")
    depths = np.array([len(w) for w in words])
    log_i = np.log(lens)
    log_d = np.log(diams)
    ratio = log_i - log_d
    bind_x, bind_y = [], []
    for n in range(depth_min, depth_hi + 1):
        level = np.flatnonzero(depths == n)
        k = level[np.argmax(ratio[level])]
        bind_x.append(log_d[k])
        bind_y.append(log_i[k])
    bind_x = np.array(bind_x)
    bind_y = np.array(bind_y)
    coef, res = np.polyfit(bind_x, bind_y, 1, full=True)[:2]
    slope = float(coef[0])
    residual = float(res[0]) if len(res) else 0.0
    epsilon = slope - 1.0
    if abs(epsilon) < 1e-12:
        epsilon = 0.0
    sel = (depths >= depth_min) & (depths <= depth_hi)
    log_k1 = float(np.max(log_i[sel] - (1.0 + epsilon) * log_d[sel]))
    slack = float(np.min(log_k1 + (1.0 + epsilon) * log_d[sel] - log_i[sel]))
    return FatnessFit(
        k1=math.exp(log_k1),
        epsilon=epsilon,
        per_word_slack=slack,
        words_used=int(sel.sum()),
        depth_min=depth_min,
        depth_max=depth_hi,
        partial=partial,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# manifold envelopes


_tail_hull_cache = {}


def tail_slope_hull(spec, tail_depth=48, u_grid_n=257):
    """Slope interval containing every manifold slope after many steps.

    Starts from the invariant cone aperture and repeatedly applies the hull
    of the one-step slope action over all branches, arrival points, and
    positions; cone invariance makes the iterates nested, which is also
    enforced numerically.
    """
    key = (spec.map_hash, tail_depth, u_grid_n)
    if key in _tail_hull_cache:
        return _tail_hull_cache[key]
    ug = np.linspace(0.0, 1.0, u_grid_n)
    plo, phi = -spec.alpha, spec.alpha
    for _ in range(tail_depth):
        lo_new, hi_new = np.inf, -np.inf
        for sk in spec.skew:
            fib = sk.fiber
            sv = fib.slope(ug)
            spv = fib.dslope(ug)
            tpv = fib.doffset(ug)
            mm = sv / sk.base_slope
            lo_b = np.minimum(spv, 0.0) + np.minimum(mm * plo, mm * phi) + tpv
            hi_b = np.maximum(spv, 0.0) + np.maximum(mm * plo, mm * phi) + tpv
            lo_new = min(lo_new, float(lo_b.min()))
            hi_new = max(hi_new, float(hi_b.max()))
        lo_new, hi_new = max(lo_new, plo), min(hi_new, phi)
        if abs(lo_new - plo) < 1e-15 and abs(hi_new - phi) < 1e-15:
            plo, phi = lo_new, hi_new
            break
        plo, phi = lo_new, hi_new
    _tail_hull_cache[key] = (plo, phi)
    return plo, phi


def manifold_envelope(spec, word, x_grid, tail_depth=48):
    """Per-x position and slope hulls of all tail manifolds through a word.

    Returns (pos_lo, pos_hi, slope_lo, slope_hi) arrays over x_grid.  The
    word composes into affine coefficients of the tail position (in [0,1])
    and the tail slope (in the tail hull), evaluated pointwise.
    """
    word = check_word(spec, word)
    tlo, thi = tail_slope_hull(spec, tail_depth=tail_depth)
    X = np.asarray(x_grid, dtype=float)
    A = np.ones_like(X)
    B = np.zeros_like(X)
    sy = np.zeros_like(X)
    sp = np.ones_like(X)
    s0 = np.zeros_like(X)
    for s in word:
        sk = spec.skew[s - 1]
        fib = sk.fiber
        if not fib.affine:
            raise ParameterError("envelopes need affine-in-y fiber maps")
        sv = fib.slope(X)
        tv = fib.offset(X)
        spv = fib.dslope(X)
        tpv = fib.doffset(X)
        sy, sp, s0 = (sy * sv + sp * spv,
                      sp * sv / sk.base_slope,
                      sy * tv + sp * tpv + s0)
        A, B = A * sv, A * tv + B
        X = sk.base_inverse(X)
    pos_lo = B + np.minimum(A, 0.0)
    pos_hi = B + np.maximum(A, 0.0)
    slope_lo = s0 + np.minimum(sy, 0.0) + np.minimum(sp * tlo, sp * thi)
    slope_hi = s0 + np.maximum(sy, 0.0) + np.maximum(sp * tlo, sp * thi)
    return pos_lo, pos_hi, slope_lo, slope_hi


# ---------------------------------------------------------------------------
# pairwise classification


@dataclass
class TransversalityVerdict:
    pair: tuple
    status: str
    delta: float
    witness: dict
    margin: float
    x_grid_n: int
    tail_depth: int

    def __bool__(self):
        return self.status == "transversal"


def _gap_arrays(env_a, env_b):
    pos_gap = np.maximum(0.0, np.maximum(env_a[0] - env_b[1],
                                         env_b[0] - env_a[1]))
    slope_gap = np.maximum(0.0, np.maximum(env_a[2] - env_b[3],
                                           env_b[2] - env_a[3]))
    return pos_gap, slope_gap


def _decide(pos_gap, slope_gap, delta, margin, xg):
    """Three-way verdict from per-x envelope separations.

    Separation is measured between hull sets, so a positive gap survives
    every tail choice; certificates carry a rigidity margin covering the
    envelope drift between grid points.
    """
    cert_t = (pos_gap > delta + margin) | (slope_gap > delta + margin)
    cert_n = (pos_gap <= delta - margin) & (slope_gap <= delta - margin)
    worst = np.maximum(pos_gap, slope_gap)
    if bool(cert_t.all()):
        k = int(np.argmin(worst))
        status = "transversal"
    elif bool(cert_n.any()):
        idx = np.flatnonzero(cert_n)
        k = int(idx[np.argmin(worst[idx])])
        status = "non_transversal"
    else:
        idx = np.flatnonzero(~cert_t)
        k = int(idx[0])
        status = "inconclusive"
    witness = {"x": float(xg[k]),
               "position_gap": float(pos_gap[k]),
               "slope_gap": float(slope_gap[k])}
    return status, witness


def classify_transversal(spec, word_a, word_b, delta,
                         x_grid_n=257, tail_depth=48):
    """Classify one pair of words at separation scale delta.

    transversal: at every grid x, position or slope hulls are separated by
    more than delta plus the margin, for every pair of tails at once.
    non_transversal: at some x both hull separations sit below delta minus
    the margin.  Everything else is inconclusive; refinement of the grid or
    the tail depth never upgrades a verdict to transversal.
    """
    if not delta > 0.0:
        raise ParameterError("need delta > 0")
    if x_grid_n < 2:
        raise ParameterError("need at least 2 grid points")
    word_a = check_word(spec, word_a)
    word_b = check_word(spec, word_b)
    xg = np.linspace(0.0, 1.0, x_grid_n)
    env_a = manifold_envelope(spec, word_a, xg, tail_depth=tail_depth)
    env_b = manifold_envelope(spec, word_b, xg, tail_depth=tail_depth)
    pos_gap, slope_gap = _gap_arrays(env_a, env_b)
    margin = spec.alpha * (xg[1] - xg[0]) + _FP_MARGIN
    status, witness = _decide(pos_gap, slope_gap, delta, margin, xg)
    return TransversalityVerdict(
        pair=(word_a, word_b), status=status, delta=float(delta),
        witness=witness, margin=margin, x_grid_n=x_grid_n,
        tail_depth=tail_depth)


def overlap_volume(spec, word_a, word_b, resolution=256, hat=False):
    """Area of the intersection of two image cylinders.

    Integrates the per-x fiber interval overlap with the trapezoid rule.
    The plain fiber intervals are used unless ``hat`` asks for the extended
    ones; extended strips of adjacent branches may overlap even when the
    plain strips tile.
    """
    if resolution < 64:
        raise ParameterError("need resolution >= 64")
    xg = np.linspace(0.0, 1.0, resolution + 1)
    lo_a, hi_a = fiber_image(spec, word_a, xg, hat=hat)
    lo_b, hi_b = fiber_image(spec, word_b, xg, hat=hat)
    inter = np.clip(np.minimum(hi_a, hi_b) - np.maximum(lo_a, lo_b),
                    0.0, None)
    return float(np.trapezoid(inter, xg))


# ---------------------------------------------------------------------------
# non-transversal sums


@dataclass
class NtrSumReport:
    """Charged-pair sum at one scale; ordered pairs with distinct leads.

    ``n_pairs`` counts ordered pairs whose leading symbols differ; the same
    unordered pair therefore enters twice, matching the squared-family
    indexing.  ``n_ntr`` counts the charged ones (not certified
    transversal).  In the subsampled regime both counts and the sum carry a
    stratified standard error.
    """

    r: float
    delta: float
    sum_value: float
    n_pairs: int
    n_ntr: float
    subsampled: bool = False
    sum_se: float = 0.0
    exponent_fit: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def charged_fraction(self):
        return self.n_ntr / self.n_pairs if self.n_pairs else 0.0

    def as_record(self):
        return {
            "r": self.r, "delta": self.delta, "n_pairs": self.n_pairs,
            "n_ntr": self.n_ntr, "sum": self.sum_value,
            "exponent_fit": self.exponent_fit,
            "subsampled": self.subsampled, "sum_se": self.sum_se,
        }


def _symbol_pair_transversal(spec, delta, xg, tail_depth, margin):
    """Leading-symbol pairs whose single-symbol words already separate.

    A separated pair of hulls stays separated for every deeper extension
    (extensions only shrink the hulls), so such leads prune whole blocks.
    """
    n = spec.n_strips
    envs = [manifold_envelope(spec, (s,), xg, tail_depth=tail_depth)
            for s in range(1, n + 1)]
    pruned = {}
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            if a == b:
                continue
            pos_gap, slope_gap = _gap_arrays(envs[a - 1], envs[b - 1])
            status, _ = _decide(pos_gap, slope_gap, delta, margin, xg)
            pruned[(a, b)] = status == "transversal"
    return pruned


def ntr_sum(spec, r, delta, x_grid_n=65, tail_depth=48,
            pair_budget=100_000, seed=7, budget=None):
    """Charged-pair volume sum at scale r.

    Enumerates the scale-r family with envelopes, certifies pairs with
    distinct leading symbols, and sums r^-2 * vol * |I_a| * |I_b| over
    pairs not certified transversal.  Small families are done exactly;
    large ones are estimated by stratified sampling over length pairs with
    a reported standard error.
    """
    if not delta > 0.0:
        raise ParameterError("need delta > 0")
    inv = m_inventory(spec, r, x_grid_n=x_grid_n, budget=budget)
    xg = inv.x_grid
    margin = spec.alpha * (xg[1] - xg[0]) + _FP_MARGIN
    pruned = _symbol_pair_transversal(spec, delta, xg, tail_depth, margin)

    idx = [k for k, w in enumerate(inv.words) if len(w) > 0]
    firsts = {k: inv.words[k][0] for k in idx}
    lens = {k: len(inv.words[k]) for k in idx}

    # envelopes only for words that actually enter a classified pair
    env_cache = {}

    def env(i):
        got = env_cache.get(i)
        if got is None:
            got = manifold_envelope(spec, inv.words[i], xg,
                                    tail_depth=tail_depth)
            env_cache[i] = got
        return got

    def pair_value(i, j):
        """(charged, contribution) for one unordered pair."""
        if pruned[(firsts[i], firsts[j])]:
            return False, 0.0
        pa, qa, sa, za = env(i)
        pb, qb, sb, zb = env(j)
        pos_gap = np.maximum(0.0, np.maximum(pa - qb, pb - qa))
        slope_gap = np.maximum(0.0, np.maximum(sa - zb, sb - za))
        cert_t = (pos_gap > delta + margin) | (slope_gap > delta + margin)
        if bool(cert_t.all()):
            return False, 0.0
        inter = np.clip(np.minimum(qa, qb) - np.maximum(pa, pb), 0.0, None)
        vol = float(np.trapezoid(inter, xg))
        return True, vol * inv.base_len[i] * inv.base_len[j]

    # ordered pair count over distinct leading symbols
    by_len = {}
    for k in idx:
        by_len.setdefault(lens[k], {}).setdefault(firsts[k], []).append(k)
    lengths = sorted(by_len)

    def cross_count(la, lb):
        ga, gb = by_len[la], by_len[lb]
        total = sum(len(v) for v in ga.values()) * sum(len(v) for v in gb.values())
        same = sum(len(ga.get(s, ())) * len(gb.get(s, ())) for s in ga)
        return total - same

    strata = []
    n_pairs = 0
    for ii, la in enumerate(lengths):
        for lb in lengths[ii:]:
            c = cross_count(la, lb)
            if la != lb:
                c *= 2
            if c:
                strata.append((la, lb, c))
                n_pairs += c

    if n_pairs == 0:
        return NtrSumReport(r=float(r), delta=float(delta), sum_value=0.0,
                            n_pairs=0, n_ntr=0.0,
                            meta={"words": len(inv.words)})

    if n_pairs // 2 <= pair_budget:
        total = 0.0
        charged = 0
        for a_pos, i in enumerate(idx):
            for j in idx[a_pos + 1:]:
                if firsts[i] == firsts[j]:
                    continue
                ch, v = pair_value(i, j)
                total += v
                charged += ch
        return NtrSumReport(
            r=float(r), delta=float(delta),
            sum_value=2.0 * total / (r * r),
            n_pairs=n_pairs, n_ntr=2.0 * charged,
            meta={"words": len(inv.words)})

    # stratified sampling over length pairs, deterministic per stratum
    total = 0.0
    var_acc = 0.0
    ntr_est = 0.0
    n_classified = 0
    for la, lb, c in strata:
        share = max(16, int(round(pair_budget * c / n_pairs)))
        rng = np.random.default_rng([seed, la, lb])
        ga, gb = by_len[la], by_len[lb]
        syms_a = sorted(ga)
        weights = []
        combos = []
        for s in syms_a:
            for t in sorted(gb):
                if s == t:
                    continue
                combos.append((s, t))
                weights.append(len(ga[s]) * len(gb[t]))
        weights = np.array(weights, dtype=float)
        weights /= weights.sum()
        vals = np.empty(share)
        chs = np.empty(share)
        picks = rng.choice(len(combos), size=share, p=weights)
        for k, pick in enumerate(picks):
            s, t = combos[pick]
            i = ga[s][rng.integers(len(ga[s]))]
            j = gb[t][rng.integers(len(gb[t]))]
            ch, v = pair_value(i, j)
            vals[k] = v
            chs[k] = ch
        n_classified += share
        total += c * float(vals.mean())
        ntr_est += c * float(chs.mean())
        var_acc += (c ** 2) * float(vals.var(ddof=1)) / share
    return NtrSumReport(
        r=float(r), delta=float(delta),
        sum_value=total / (r * r),
        n_pairs=n_pairs, n_ntr=ntr_est,
        subsampled=True, sum_se=math.sqrt(var_acc) / (r * r),
        meta={"words": len(inv.words), "classified": n_classified})


@dataclass
class NtrSweep:
    reports: list
    exponent: float | None

    def to_csv(self, path):
        lines = ["r,delta,n_pairs,n_ntr,sum,sum_se,subsampled"]
        for rep in self.reports:
            lines.append(
                f"{rep.r!r},{rep.delta!r},{rep.n_pairs},{rep.n_ntr!r},"
                f"{rep.sum_value!r},{rep.sum_se!r},{int(rep.subsampled)}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json(self, path=None):
        payload = {"exponent_fit": self.exponent,
                   "reports": [rep.as_record() for rep in self.reports]}
        text = json.dumps(payload, indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return payload


def ntr_sweep(spec, r_list, delta, **kwargs):
    """Sweep the charged sum over decreasing scales and fit its decay rate.

    The exponent is the log-log slope of the sum against the scale over the
    reports with positive sums; all-zero sweeps (exactly tiling families)
    report None.
    """
    r_list = [float(r) for r in r_list]
    if any(b >= a for a, b in zip(r_list, r_list[1:])):
        raise ParameterError("scale sweep must be strictly decreasing")
    reports = [ntr_sum(spec, r, delta, **kwargs) for r in r_list]
    pos = [(rep.r, rep.sum_value) for rep in reports if rep.sum_value > 0]
    exponent = None
    if len(pos) >= 2:
        lr = np.log([p[0] for p in pos])
        ls = np.log([p[1] for p in pos])
        exponent = float(np.polyfit(lr, ls, 1)[0])
    for rep in reports:
        rep.exponent_fit = exponent
    return NtrSweep(reports=reports, exponent=exponent)
