"""Asymptotic ensemble weight enumerator: spectral shape and distance growth.

The exponent (nats per transmitted bit) of the ensemble-average codeword
count at relative weight delta is

    r(delta) = (1/u) * max over node-weight fractions {d_i} of
               [ sum_checks a_c(incident d_i) - sum_vars (q_i - 1) H(d_i) ]

subject to sum of d_i over transmitted nodes = u * delta, with punctured
node fractions free in [0, 1].  H is the natural-log binary entropy and
a_c is the Legendre-type exponent of a single parity check's even-weight
configuration count,

    a_c(d_1..d_k) = inf over positive tilts x of
                    [ ln g(x) - sum_e d_e ln x_e ],
    g(x) = (prod_e (1 + x_e) + prod_e (1 - x_e)) / 2.

g has nonnegative power-series coefficients, so the infimand is convex in
log-tilt coordinates and the inner problem is solved by a safeguarded
Newton method.  Fraction vectors outside the parity polytope have no
feasible configuration at all; they are detected up front and reported
with an exponent of -inf.
"""

from __future__ import annotations

import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np

from .protograph import BaseMatrix, InvalidProtographError, validate

__all__ = [
    "EnumeratorSettings",
    "NodeWeights",
    "SpectralSample",
    "SpectralShape",
    "check_exponent",
    "spectral_shape",
    "delta_min",
    "growth_rate",
    "scaled_growth",
    "estimate_delta_large_L",
]

_XI_CLIP = 40.0
_SENTINEL = -50.0


@dataclass(frozen=True)
class EnumeratorSettings:
    """Outer-maximization settings.

    starts random initial points are used in addition to the all-equal
    start; every start's RNG seed derives from (ensemble id, delta, start
    index) so results do not depend on evaluation order.
    """

    starts: int = 16
    clamp: float = 1e-9
    improvement_tol: float = 1e-10
    max_rounds: int = 400
    seed: int = 0


@dataclass(frozen=True)
class NodeWeights:
    """Relative weight fraction per variable node (punctured included)."""

    fractions: np.ndarray


@dataclass(frozen=True)
class SpectralSample:
    delta: float
    r: float
    maximizer: NodeWeights
    converged: bool


@dataclass
class SpectralShape:
    """Sampled spectrum r(delta) with enough context to refine it."""

    base: BaseMatrix
    settings: EnumeratorSettings
    samples: list
    delta_min: float | None = None

    @property
    def deltas(self) -> np.ndarray:
        return np.array([s.delta for s in self.samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([s.r for s in self.samples])


# ---------------------------------------------------------------------------
# single parity check: feasibility and saddle point


def _excl_prod(vals: np.ndarray) -> np.ndarray:
    """Per row, product of all entries except the one at each position."""
    n, d = vals.shape
    out = np.ones_like(vals)
    if d > 1:
        out[:, 1:] = np.cumprod(vals[:, :-1], axis=1)
        out[:, :-1] *= np.cumprod(vals[:, :0:-1], axis=1)[:, ::-1]
    return out


def _parity_infeasible(deltas: np.ndarray, mask: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """True where no configuration matches the fractions.

    The convex hull of even-weight (odd-weight) incidence vectors is cut out
    by the facets sum_{e in O} d_e - sum_{e not in O} d_e <= |O| - 1 over all
    odd-cardinality (even-cardinality) sets O; the worst O is found greedily
    and adjusted for cardinality parity.
    """
    mins = np.where(mask, np.minimum(deltas, 1.0 - deltas), 0.0)
    worst = 1.0 - mins.sum(axis=1)
    big_count = ((deltas >= 0.5) & mask).sum(axis=1)
    want_odd = sigma > 0
    parity_ok = (big_count % 2 == 1) == want_odd
    swap_cost = np.where(mask, np.abs(2.0 * deltas - 1.0), np.inf).min(axis=1)
    margin = np.where(parity_ok, worst, worst - swap_cost)
    return margin > 1e-12


def _phi(xi, deltas, mask, sigma):
    x = np.where(mask, np.exp(xi), 0.0)
    a = np.prod(1.0 + x, axis=1)
    b = np.prod(1.0 - x, axis=1)
    g = 0.5 * (a + sigma * b)
    out = np.where(g > 0.0, np.log(np.where(g > 0.0, g, 1.0)), np.inf)
    return out - np.sum(np.where(mask, deltas * xi, 0.0), axis=1)


def _grad_hess(xi, deltas, mask, sigma):
    B, d = xi.shape
    x = np.where(mask, np.exp(xi), 0.0)
    op = 1.0 + x
    om = 1.0 - x
    a = np.prod(op, axis=1)
    b = np.prod(om, axis=1)
    g = 0.5 * (a + sigma * b)
    ae = _excl_prod(op)
    be = _excl_prod(om)
    sig = sigma[:, None]
    mu = 0.5 * x * (ae - sig * be) / g[:, None]
    grad = np.where(mask, mu - deltas, 0.0)
    # pair-exclusive products: (1 + x) >= 1 so plain division is safe for
    # the plus side; the minus side can vanish and needs the masked pass
    aef = ae[:, :, None] / op[:, None, :]
    bef = np.empty((B, d, d))
    for f in range(d):
        omf = om.copy()
        omf[:, f] = 1.0
        bef[:, :, f] = _excl_prod(omf)
    xx = x[:, :, None] * x[:, None, :]
    hess = 0.5 * xx * (aef + sig[:, :, None] * bef) / g[:, None, None]
    hess -= mu[:, :, None] * mu[:, None, :]
    idx = np.arange(d)
    hess[:, idx, idx] = mu - mu * mu
    # masked edges: decouple with an identity row/column
    off = ~mask
    hess[off[:, :, None] & np.ones((B, 1, d), dtype=bool)] = 0.0
    hess[np.ones((B, d, 1), dtype=bool) & off[:, None, :]] = 0.0
    dm = np.where(mask, hess[:, idx, idx], 1.0)
    hess[:, idx, idx] = dm
    phi = np.where(g > 0.0, np.log(np.where(g > 0.0, g, 1.0)), np.inf) - np.sum(
        np.where(mask, deltas * xi, 0.0), axis=1
    )
    return phi, grad, hess


def _golden_coordinate(xi, deltas, mask, sigma, passes=3, span=6.0, iters=60):
    """Per-coordinate golden-section fallback for stubborn instances."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    xi = xi.copy()
    d = xi.shape[1]
    for _ in range(passes):
        for e in range(d):
            if not mask[0, e]:
                continue
            lo, hi = xi[0, e] - span, xi[0, e] + span
            for _ in range(iters):
                m1 = hi - invphi * (hi - lo)
                m2 = lo + invphi * (hi - lo)
                t1, t2 = xi.copy(), xi.copy()
                t1[0, e], t2[0, e] = m1, m2
                if _phi(t1, deltas, mask, sigma)[0] <= _phi(t2, deltas, mask, sigma)[0]:
                    hi = m2
                else:
                    lo = m1
            xi[0, e] = 0.5 * (lo + hi)
    return xi


def _scaled_descent(step, grad, cap=10.0):
    """Scale steps to a sup-norm cap without bending their direction, and
    replace non-descent directions by steepest descent."""
    bad = ~np.isfinite(step).all(axis=1)
    bad |= np.sum(grad * step, axis=1) >= 0.0
    if bad.any():
        step[bad] = -grad[bad]
    nrm = np.abs(step).max(axis=1)
    scale = np.minimum(1.0, cap / np.maximum(nrm, 1e-300))
    step *= scale[:, None]
    return step, np.sum(grad * step, axis=1)


def _solve_saddles(deltas, mask, sigma, xi0=None, max_iter=60, grad_tol=1e-9):
    """Batched saddle-point solve; returns (value, xi, converged).

    value is -inf where the fraction vector is infeasible (no configuration).
    """
    B, d = deltas.shape
    infeasible = _parity_infeasible(deltas, mask, sigma)
    if xi0 is None:
        safe = np.clip(deltas, 1e-12, 1.0 - 1e-12)
        xi = np.clip(np.log(safe / (1.0 - safe)), -_XI_CLIP, _XI_CLIP)
    else:
        xi = np.clip(xi0.copy(), -_XI_CLIP, _XI_CLIP)
    xi = np.where(mask, xi, 0.0)
    value = np.full(B, -np.inf)
    converged = infeasible.copy()
    phi = _phi(xi, deltas, mask, sigma)
    # value error near the optimum is O(|grad|^2 / curvature), so a per-edge
    # tolerance relative to the target fraction is value-safe
    tol = np.maximum(grad_tol, 1e-8 * np.where(mask, deltas, 1.0))
    eye = 1e-12 * np.eye(d)
    for _ in range(max_iter):
        active = ~converged & ~infeasible
        if not active.any():
            break
        ai = np.flatnonzero(active)
        p, grad, hess = _grad_hess(xi[ai], deltas[ai], mask[ai], sigma[ai])
        done = (np.abs(grad) <= tol[ai]).all(axis=1)
        sent = p < _SENTINEL
        converged[ai[done & ~sent]] = True
        infeasible[ai[sent]] = True
        work = ~done & ~sent
        if not work.any():
            phi[ai] = p
            continue
        wi = ai[work]
        gw = grad[work]
        hw = hess[work] + eye
        try:
            step = np.linalg.solve(hw, -gw[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.linalg.solve(hw + 1e-6 * np.eye(d), -gw[..., None])[..., 0]
        step, ddot = _scaled_descent(step, gw)
        t = np.ones(len(wi))
        accepted = np.zeros(len(wi), dtype=bool)
        cur_phi = p[work]
        new_xi = xi[wi].copy()
        for _ in range(50):
            rem = ~accepted
            if not rem.any():
                break
            trial = np.clip(xi[wi[rem]] + t[rem, None] * step[rem], -_XI_CLIP, _XI_CLIP)
            pt = _phi(trial, deltas[wi[rem]], mask[wi[rem]], sigma[wi[rem]])
            ok = pt <= cur_phi[rem] + 1e-4 * t[rem] * ddot[rem]
            ridx = np.flatnonzero(rem)
            new_xi[ridx[ok]] = trial[ok]
            cur_phi[ridx[ok]] = pt[ok]
            accepted[ridx[ok]] = True
            t[ridx[~ok]] *= 0.5
        # a failed line search along a true descent direction, or progress
        # below value resolution, means the numerical floor: converged
        floor = (p[work] - cur_phi) < 1e-15 * (1.0 + np.abs(cur_phi))
        converged[wi[~accepted | floor]] = True
        xi[wi] = new_xi
        phi[wi] = cur_phi
        hit = cur_phi < _SENTINEL
        infeasible[wi[hit]] = True
    # golden-section fallback for instances that never converged
    leftovers = np.flatnonzero(~converged & ~infeasible)
    for i in leftovers:
        xi[i : i + 1] = _golden_coordinate(
            xi[i : i + 1], deltas[i : i + 1], mask[i : i + 1], sigma[i : i + 1]
        )
        phi[i] = _phi(xi[i : i + 1], deltas[i : i + 1], mask[i : i + 1], sigma[i : i + 1])[0]
        if phi[i] < _SENTINEL:
            infeasible[i] = True
    ok = ~infeasible
    value[ok] = phi[ok]
    conv = np.ones(B, dtype=bool)
    conv[leftovers] = False
    return value, xi, conv


def check_exponent(edge_fractions) -> float:
    """Exponent of a single check's even-parity configuration count.

    Returns -inf when the fractions admit no even-parity configuration
    (coefficient identically zero).  Fractions exactly 0 or 1 are removed
    up front; a removed all-ones edge flips the parity required of the rest.
    """
    fr = [float(v) for v in edge_fractions]
    if not fr:
        raise ValueError("edge fraction list is empty")
    if any(v < 0.0 or v > 1.0 for v in fr):
        raise ValueError("edge fraction outside [0, 1]")
    sigma = 1.0
    interior = []
    for v in fr:
        if v == 0.0:
            continue
        if v == 1.0:
            sigma = -sigma
            continue
        interior.append(v)
    if not interior:
        return 0.0 if sigma > 0 else -math.inf
    deltas = np.array([interior])
    mask = np.ones_like(deltas, dtype=bool)
    value, _, _ = _solve_saddles(deltas, mask, np.array([sigma]))
    return float(value[0])


# ---------------------------------------------------------------------------
# outer maximization over node-weight fractions


def _entropy_nat(v: np.ndarray) -> np.ndarray:
    return -v * np.log(v) - (1.0 - v) * np.log1p(-v)


def _logit(v):
    return np.log(v / (1.0 - v))


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class _Enumerator:
    """Spectrum evaluator for one protograph."""

    def __init__(self, b: BaseMatrix, settings: EnumeratorSettings):
        violations = validate(b)
        if violations:
            raise InvalidProtographError(f"invalid base matrix: {', '.join(violations)}")
        self.b = b
        self.settings = settings
        self.q = b.entries.sum(axis=0).astype(np.float64)
        self.transmitted = np.array([k not in b.punctured for k in range(b.n_v)])
        self.u = b.u
        dc = int(b.entries.sum(axis=1).max())
        n_c = b.n_c
        var_idx = np.zeros((n_c, dc), dtype=np.int64)
        mask = np.zeros((n_c, dc), dtype=bool)
        for j in range(n_c):
            cols = []
            for k in range(b.n_v):
                cols.extend([k] * int(b.entries[j, k]))
            var_idx[j, : len(cols)] = cols
            mask[j, : len(cols)] = True
        self.var_idx = var_idx
        self.check_mask = mask
        self.dc = dc
        self.ident = zlib.crc32(b.ident().encode())

    def objective(self, V: np.ndarray, xi0=None):
        """F, grad, xi for a batch of fraction vectors V of shape (S, n_v)."""
        S = V.shape[0]
        n_c, dc = self.var_idx.shape
        deltas = V[:, self.var_idx].reshape(S * n_c, dc)
        mask = np.broadcast_to(self.check_mask, (S, n_c, dc)).reshape(S * n_c, dc)
        sigma = np.ones(S * n_c)
        warm = None if xi0 is None else xi0.reshape(S * n_c, dc)
        a, xi, _ = _solve_saddles(deltas, mask, sigma, xi0=warm)
        a = a.reshape(S, n_c)
        ent = _entropy_nat(V)
        F = a.sum(axis=1) - ((self.q - 1.0) * ent).sum(axis=1)
        # envelope gradient: d a_c / d delta_e = -xi_e, accumulated per node
        flat_rows = np.repeat(np.arange(S), n_c * dc)
        flat_vars = np.tile(self.var_idx.reshape(-1), S)
        flat_mask = np.tile(self.check_mask.reshape(-1), S)
        contrib = -xi.reshape(-1)
        gsum = np.bincount(

            (flat_rows * self.b.n_v + flat_vars)[flat_mask],
            weights=contrib[flat_mask],
            minlength=S * self.b.n_v,
        ).reshape(S, self.b.n_v)
        grad = gsum + (self.q - 1.0) * np.log(V / (1.0 - V))
        return F, grad, xi.reshape(S, n_c, dc)

    def project_logits(self, z: np.ndarray, target: float) -> np.ndarray:
        """Clip logits to the box; restore the weight constraint on the
        transmitted coordinates by a common logit shift (the entropy-geometry
        projection), found by bisection."""
        zmax = _logit(1.0 - self.settings.clamp)
        out = np.clip(z, -zmax, zmax)
        zt = out[:, self.transmitted]
        lo = np.full(z.shape[0], -2.0 * zmax - 2.0)
        hi = np.full(z.shape[0], 2.0 * zmax + 2.0)
        for _ in range(90):
            tau = 0.5 * (lo + hi)
            s = _sigmoid(np.clip(zt - tau[:, None], -zmax, zmax)).sum(axis=1)
            high = s > target
            lo = np.where(high, tau, lo)
            hi = np.where(high, hi, tau)
        tau = 0.5 * (lo + hi)
        out[:, self.transmitted] = np.clip(zt - tau[:, None], -zmax, zmax)
        return out

    def starts_for(self, delta: float) -> np.ndarray:
        """All-equal start plus scale-aware random starts, as logits."""
        st = self.settings
        S = st.starts + 1
        lo, hi = st.clamp, 1.0 - st.clamp
        V = np.empty((S, self.b.n_v))
        V[0] = delta
        dbits = int(np.float64(delta).view(np.uint64))
        n_t = int(self.transmitted.sum())
        pmax = min(hi, max(8.0 * delta, 0.05))
        for k in range(1, S):
            rng = np.random.default_rng(
                np.random.SeedSequence([st.seed, self.ident, dbits, k])
            )
            row = rng.uniform(lo, pmax, self.b.n_v)
            row[self.transmitted] = self.u * delta * rng.dirichlet(np.ones(n_t))
            V[k] = row
        z = _logit(np.clip(V, lo, hi))
        return self.project_logits(z, self.u * delta)

    def _penalty(self, v: np.ndarray):
        """Smooth surrogate outside the feasible region, pushing back in.

        Value/gradient of 100 * sum of positive check-infeasibility margins
        (piecewise linear in the node fractions).
        """
        deltas = v[self.var_idx]
        mask = self.check_mask
        mins = np.where(mask, np.minimum(deltas, 1.0 - deltas), 0.0)
        worst = 1.0 - mins.sum(axis=1)
        big_count = ((deltas >= 0.5) & mask).sum(axis=1)
        swap = np.where(mask, np.abs(2.0 * deltas - 1.0), np.inf)
        swap_arg = swap.argmin(axis=1)
        swap_cost = swap[np.arange(len(swap_arg)), swap_arg]
        mismatch = big_count % 2 != 1
        margins = np.where(mismatch, worst - swap_cost, worst)
        gm = np.zeros(self.b.n_v)
        total = 0.0
        for j in np.flatnonzero(margins > 0.0):
            total += margins[j]
            sl = np.where(deltas[j] < 0.5, -1.0, 1.0)
            if mismatch[j]:
                e = swap_arg[j]
                sl[e] -= 2.0 * np.sign(2.0 * deltas[j, e] - 1.0)
            np.add.at(gm, self.var_idx[j][mask[j]], sl[mask[j]])
        return 100.0 * total, 100.0 * gm

    def sample(self, delta: float) -> SpectralSample:
        """Maximize the exponent at one relative weight: SQP from every
        start, best finisher wins."""
        from scipy.optimize import minimize

        st = self.settings
        target = self.u * delta
        lo, hi = st.clamp, 1.0 - st.clamp
        z = self.starts_for(delta)
        V = _sigmoid(z)
        F, _, xi0 = self.objective(V)
        # pull infeasible random starts toward the feasible all-equal point
        for _ in range(60):
            bad = ~np.isfinite(F)
            if not bad.any():
                break
            z[bad] = self.project_logits(0.5 * (z[bad] + z[0][None, :]), target)
            V[bad] = _sigmoid(z[bad])
            F[bad], _, xbad = self.objective(V[bad])
            xi0[bad] = xbad
        cons_jac = self.transmitted.astype(float)
        constraints = [
            {
                "type": "eq",
                "fun": lambda v: v[self.transmitted].sum() - target,
                "jac": lambda v: cons_jac,
            }
        ]
        bounds = [(lo, hi)] * self.b.n_v
        S = V.shape[0]
        finals = np.empty_like(V)
        success = np.zeros(S, dtype=bool)
        for k in range(S):
            state = {"xi": xi0[k : k + 1]}

            def neg_objective(v):
                vc = np.clip(v, lo, hi)
                f, g, xi = self.objective(vc[None, :], xi0=state["xi"])
                if not np.isfinite(f[0]):
                    pen, gpen = self._penalty(vc)
                    return 10.0 + pen, gpen
                state["xi"] = xi
                return -f[0], -g[0]

            res = minimize(
                neg_objective,
                V[k],
                jac=True,
                method="SLSQP",
                bounds=bounds,
                constraints=constraints,
                options={"maxiter": st.max_rounds, "ftol": st.improvement_tol},
            )
            finals[k] = np.clip(res.x, lo, hi)
            success[k] = bool(res.success)
        # fresh final evaluation (no warm start) before picking the winner
        F, _, _ = self.objective(finals)
        if not np.isfinite(F).any():
            # no feasible configuration at this weight at all
            return SpectralSample(delta, -math.inf, NodeWeights(V[0].copy()), True)
        best = int(np.argmax(np.where(np.isfinite(F), F, -np.inf)))
        conv = bool(success[best])
        if not conv:
            warnings.warn(
                f"spectrum optimizer did not converge at delta={delta:g}",
                RuntimeWarning,
                stacklevel=2,
            )
        return SpectralSample(
            delta, float(F[best]) / self.u, NodeWeights(finals[best].copy()), conv
        )


def spectral_shape(b: BaseMatrix, grid, settings: EnumeratorSettings | None = None) -> SpectralShape:
    """Sample the asymptotic spectrum r(delta) on the given grid."""
    settings = settings or EnumeratorSettings()
    deltas = [float(d) for d in grid]
    if not deltas:
        raise ValueError("empty grid")
    if any(d <= 0.0 or d > 1.0 for d in deltas):
        raise ValueError("grid values must lie in (0, 1]")
    if any(b >= a for b, a in zip(deltas[1:], deltas[:-1])):
        raise ValueError("grid values must be strictly increasing")
    en = _Enumerator(b, settings)
    samples = [en.sample(d) for d in deltas]
    return SpectralShape(base=b, settings=settings, samples=samples)


def delta_min(shape: SpectralShape) -> float:
    """First positive zero of r, refined by bisection to 1e-6.

    Returns 0 when r is already nonnegative at the first sampled weight
    (no bracketing possible below the grid); raises when r stays negative
    over the whole sampled range.
    """
    if not shape.samples:
        raise ValueError("shape has no samples")
    en = _Enumerator(shape.base, shape.settings)
    samples = sorted(shape.samples, key=lambda s: s.delta)
    cross = None
    for i, s in enumerate(samples):
        if s.r >= 0.0:
            cross = i
            break
    if cross is None:
        raise ValueError("no crossing in range")
    if cross == 0:
        shape.delta_min = 0.0
        return 0.0
    lo, hi = samples[cross - 1].delta, samples[cross].delta
    extra = []
    while hi - lo > 1e-6:
        mid = 0.5 * (lo + hi)
        s = en.sample(mid)
        extra.append(s)
        if s.r >= 0.0:
            hi = mid
        else:
            lo = mid
    shape.samples = sorted(shape.samples + extra, key=lambda s: s.delta)
    shape.delta_min = 0.5 * (lo + hi)
    return shape.delta_min


def growth_rate(
    b: BaseMatrix,
    settings: EnumeratorSettings | None = None,
    grid_start: float = 1e-4,
    grid_step: float = 1e-3,
    grid_max: float = 0.2,
    stop_after_crossing: bool = True,
) -> SpectralShape:
    """Locate delta_min by sampling the spectrum outward from the origin.

    Samples the grid in order and, once the first sign change has been
    bracketed, stops sampling (unless stop_after_crossing is False) and
    refines the crossing; the returned shape has delta_min set.
    """
    settings = settings or EnumeratorSettings()
    en = _Enumerator(b, settings)
    samples = []
    crossed = False
    d = grid_start
    while d <= grid_max + 1e-15:
        s = en.sample(d)
        samples.append(s)
        if s.r >= 0.0:
            crossed = True
            if stop_after_crossing:
                break
        d += grid_step
    shape = SpectralShape(base=b, settings=settings, samples=samples)
    if not crossed:
        raise ValueError("no crossing in range")
    delta_min(shape)
    return shape


def scaled_growth(delta: float, e: int, L: int) -> float:
    """Growth rate scaled by the transmitted protograph size u = (4 + 2e) L."""
    if L < 2:
        raise ValueError("termination factor L must be at least 2")
    if e < 0:
        raise ValueError("extension parameter e must be nonnegative")
    return (4 + 2 * e) * L * delta


def estimate_delta_large_L(converged_scaled: float, e: int, L: int) -> float:
    """Large-L growth-rate estimate from the converged scaled value."""
    if L < 2:
        raise ValueError("termination factor L must be at least 2")
    if e < 0:
        raise ValueError("extension parameter e must be nonnegative")
    return converged_scaled / ((4 + 2 * e) * L)
