"""Multi-constellation ARAIM with multiple hypothesis solution separation.

Everything here works in a local Cartesian frame (the scene's ENU frame),
so state components 0 and 1 are the East and North horizontal axes and
components 3.. are one receiver clock per constellation in view.

Post-exclusion protection level
-------------------------------
After fault exclusion the HPL is solved on the reduced set with its own
fault modes, the reduced-set priors divided by ``1 - p_excluded`` and every
Q-function argument shifted left by the exclusion threshold
``T_ex,q = k_fa * sigma_ss,q`` between the original all-in-view solution
and the reduced solution. The root is therefore the reduced-set HPL plus
``T_ex,q``: the reduced solution may sit up to one detection threshold away
from the solution the exclusion decision was based on.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, erfcinv

WLS_TOL = 1e-9
WLS_MAX_ITER = 20
HPL_BRACKET = (0.0, 1e4)
SUBDIVISIONS = 32


class DegenerateGeometryError(np.linalg.LinAlgError):
    pass


class WlsConvergenceError(RuntimeError):
    pass


class FdeFailure(RuntimeError):
    """No consistent measurement subset; the location is unavailable."""


@dataclass(frozen=True)
class IntegrityConfig:
    phmi_hor: float = 9.8e-8
    phmi_vert: float = 9.8e-8
    p_sat_fault: float = 1e-5
    p_const_fault: float = 1e-4
    p_sat_not_monitored: float = 1e-10
    p_const_not_monitored: float = 1e-10
    mode_probability_floor: float = 1e-8
    k_fa: float | None = None
    p_false_alert: float = 1e-6
    nominal_bias: float = 0.75
    hpl_tolerance: float = 1e-15
    combine: str = "rss"
    max_exclusions: int = 2

    def __post_init__(self):
        probs = {name: getattr(self, name) for name in (
            "phmi_hor", "phmi_vert", "p_sat_fault", "p_const_fault", "p_sat_not_monitored",
            "p_const_not_monitored", "mode_probability_floor", "p_false_alert")}
        for name, p in probs.items():
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} must lie strictly between 0 and 1")
        if not self.hpl_tolerance > 0:
            raise ValueError("hpl_tolerance must be positive")
        if self.k_fa is not None and not self.k_fa > 0:
            raise ValueError("k_fa must be positive")
        if self.combine not in ("rss", "max"):
            raise ValueError("combine must be 'rss' or 'max'")
        if self.nominal_bias < 0:
            raise ValueError("nominal_bias must be non-negative")

    @property
    def integrity_budget(self) -> float:
        """Right-hand side of the HPL equation before unmonitored modes."""
        return 0.5 * self.phmi_hor


def q_tail(x):
    """Standard normal upper tail probability ``1 - Phi(x)``."""
    out = 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))
    return float(out) if np.ndim(out) == 0 else out


def q_tail_inv(p: float) -> float:
    return math.sqrt(2.0) * float(erfcinv(2.0 * p))


# ---------------------------------------------------------------------------
# Geometry and weighted least squares

@dataclass(frozen=True)
class GeometryContext:
    sat_positions: np.ndarray
    constellations: tuple[str, ...]
    sigmas: np.ndarray
    sat_ids: tuple[str, ...] = ()

    def __post_init__(self):
        pos = np.asarray(self.sat_positions, dtype=float).reshape(-1, 3)
        sig = np.asarray(self.sigmas, dtype=float).reshape(-1)
        object.__setattr__(self, "sat_positions", pos)
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "constellations", tuple(self.constellations))
        if not self.sat_ids:
            object.__setattr__(self, "sat_ids", tuple(f"{c}{i:02d}" for i, c in enumerate(self.constellations)))
        if not (len(pos) == len(sig) == len(self.constellations) == len(self.sat_ids)):
            raise ValueError("inconsistent measurement counts")
        if np.any(sig <= 0):
            raise ValueError("measurement sigmas must be positive")

    @property
    def n(self) -> int:
        return len(self.sigmas)

    @property
    def clock_labels(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.constellations)))

    @property
    def n_states(self) -> int:
        return 3 + len(self.clock_labels)

    @property
    def weights(self) -> np.ndarray:
        return 1.0 / self.sigmas ** 2

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.diag(self.weights)

    def clock_matrix(self) -> np.ndarray:
        labels = self.clock_labels
        H = np.zeros((self.n, len(labels)))
        for i, c in enumerate(self.constellations):
            H[i, labels.index(c)] = 1.0
        return H

    def geometry_matrix(self, rx) -> np.ndarray:
        """Rows ``[-LOS unit vector, constellation clock indicator]`` at ``rx``."""
        los = self.sat_positions - np.asarray(rx, dtype=float)[:3]
        los /= np.linalg.norm(los, axis=1)[:, None]
        return np.hstack([-los, self.clock_matrix()])

    def subset(self, keep) -> GeometryContext:
        keep = np.asarray(sorted(keep), dtype=int)
        return GeometryContext(self.sat_positions[keep], tuple(self.constellations[i] for i in keep),
                               self.sigmas[keep], tuple(self.sat_ids[i] for i in keep))


@dataclass(frozen=True)
class WlsSolution:
    state: np.ndarray
    covariance: np.ndarray
    residuals: np.ndarray
    geometry: np.ndarray
    iterations: int


def wls_solve(ctx: GeometryContext, rho, x0=None) -> WlsSolution:
    """Gauss-Newton iteration of ``dx = (G'WG)^-1 G'W drho``.

    Ranges are evaluated as a fixed reference range plus an exactly
    factored difference, which keeps residuals accurate to ~1e-12 m at
    orbital distances. Iteration stops when the update falls below 1e-9 m,
    or when it has stalled below 1e-6 m at the floating-point floor.
    """
    rho = np.asarray(rho, dtype=float)
    if len(rho) != ctx.n:
        raise ValueError("measurement count does not match geometry")
    if ctx.n < ctx.n_states:
        raise DegenerateGeometryError("degenerate geometry: fewer measurements than states")
    x = np.zeros(ctx.n_states)
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        x[: min(len(x0), len(x))] = x0[: len(x)]
    S = ctx.sat_positions
    ref = x[:3].copy()
    r_ref = np.linalg.norm(S - ref, axis=1)
    rho_rel = rho - r_ref
    w = ctx.weights
    H = ctx.clock_matrix()

    def residual(xs):
        pos = xs[:3]
        r = np.linalg.norm(S - pos, axis=1)
        dr = ((ref - pos) * (2.0 * S - pos - ref)).sum(axis=1) / (r + r_ref)
        return rho_rel - dr - H @ xs[3:]

    prev = math.inf
    converged = False
    it = 0
    for it in range(1, WLS_MAX_ITER + 1):
        G = ctx.geometry_matrix(x)
        N = G.T @ (G * w[:, None])
        try:
            if np.linalg.cond(N) > 1e14:
                raise DegenerateGeometryError("degenerate geometry")
            dx = np.linalg.solve(N, G.T @ (w * residual(x)))
        except np.linalg.LinAlgError as exc:
            raise DegenerateGeometryError("degenerate geometry") from exc
        x = x + dx
        step = float(np.linalg.norm(dx))
        if step < WLS_TOL or (it > 2 and step < 1e-6 and step >= prev):
            converged = True
            break
        prev = step
    if not converged:
        raise WlsConvergenceError(f"WLS did not converge in {WLS_MAX_ITER} iterations")
    G = ctx.geometry_matrix(x)
    cov = np.linalg.inv(G.T @ (G * w[:, None]))
    return WlsSolution(x, cov, residual(x), G, it)


# ---------------------------------------------------------------------------
# Fault modes

@dataclass(frozen=True)
class FaultMode:
    index: int
    excluded: frozenset
    p_fault: float
    kind: str = "sat"
    feasible: bool = True

    def __post_init__(self):
        if (self.index == 0) != (len(self.excluded) == 0):
            raise ValueError("mode 0 is exactly the empty exclusion")
        if not 0.0 < self.p_fault <= 1.0:
            raise ValueError("fault prior must lie in (0, 1]")


@dataclass(frozen=True)
class FaultModeSet:
    modes: list
    p_sat_not_monitored: float
    p_const_not_monitored: float


def _binomial_tail(n: int, p: float, k: int) -> float:
    """P(at least k of n independent events of probability p)."""
    if k > n:
        return 0.0
    # sum the small upper terms directly; 1 - cdf would cancel
    return float(sum(math.comb(n, j) * p ** j * (1.0 - p) ** (n - j) for j in range(k, n + 1)))


def enumerate_fault_modes(constellations: Sequence[str], cfg: IntegrityConfig = IntegrityConfig()) -> FaultModeSet:
    """Fault hypotheses to monitor for measurements labelled by constellation.

    Single-satellite and whole-constellation modes are always listed;
    simultaneous satellite faults are added in increasing order until the
    probability of all larger combinations drops below
    ``cfg.mode_probability_floor``. Infeasible modes (too few measurements
    left to solve) are kept but flagged.
    """
    labels = tuple(constellations)
    n = len(labels)
    consts = sorted(set(labels))
    p = cfg.p_sat_fault

    def feasible(excl) -> bool:
        left = [labels[i] for i in range(n) if i not in excl]
        return len(left) >= 3 + len(set(left)) and len(left) > 0

    modes = [FaultMode(0, frozenset(), 1.0, "none", n >= 3 + len(consts))]
    # a subset solution needs at least four measurements left
    max_size = max(0, n - 4)
    size = 1
    residual_sat = _binomial_tail(n, p, 1)
    while size <= max_size:
        for combo in itertools.combinations(range(n), size):
            excl = frozenset(combo)
            modes.append(FaultMode(len(modes), excl, p ** size, "sat" if size == 1 else "multi", feasible(excl)))
        residual_sat = _binomial_tail(n, p, size + 1)
        if residual_sat < cfg.mode_probability_floor:
            break
        size += 1

    pc = cfg.p_const_fault
    for c in consts:
        excl = frozenset(i for i in range(n) if labels[i] == c)
        modes.append(FaultMode(len(modes), excl, pc, "const", feasible(excl)))
    nc = len(consts)
    residual_const = _binomial_tail(nc, pc, 2) if nc >= 2 else 0.0

    return FaultModeSet(modes, cfg.p_sat_not_monitored + residual_sat,
                        cfg.p_const_not_monitored + residual_const)


# ---------------------------------------------------------------------------
# Subset solutions and solution separation

@dataclass(frozen=True)
class SubsetSolution:
    mode: FaultMode
    state: np.ndarray
    sigma_q: np.ndarray
    bias_q: np.ndarray
    separation_sigma_q: np.ndarray
    separation: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gain: np.ndarray | None = field(default=None, repr=False)


@dataclass(frozen=True)
class FdeOutcome:
    excluded: frozenset
    passed: bool
    separations: np.ndarray
    thresholds: np.ndarray
    modes: list = field(default_factory=list)
    detected: bool = False


@dataclass(frozen=True)
class MhssSnapshot:
    """All-in-view solution plus every monitored subset solution."""
    ctx: GeometryContext
    wls: WlsSolution
    solutions: list
    thresholds: np.ndarray
    k_fa: float
    p_sat_not_monitored: float
    p_const_not_monitored: float

    @property
    def fault_free(self) -> SubsetSolution:
        return self.solutions[0]


def _gain_rows(G, w, keep, n_cols_keep):
    Gk = G[keep][:, n_cols_keep]
    M = Gk.T @ (Gk * w[keep][:, None])
    if np.linalg.cond(M) > 1e12:
        return None, None
    P = np.linalg.inv(M)
    S = np.zeros((3, len(w)))
    S[:, keep] = (P @ (Gk * w[keep][:, None]).T)[:3]
    return P, S


def mhss_snapshot(ctx: GeometryContext, rho, cfg: IntegrityConfig = IntegrityConfig(), x0=None) -> MhssSnapshot:
    wls = wls_solve(ctx, rho, x0)
    G, w, n = wls.geometry, ctx.weights, ctx.n
    var = ctx.sigmas ** 2
    labels = ctx.clock_labels
    S0 = (wls.covariance @ (G * w[:, None]).T)[:3]
    b_nom = np.full(n, cfg.nominal_bias)

    fm = enumerate_fault_modes(ctx.constellations, cfg)
    p_sat_nm, p_const_nm = fm.p_sat_not_monitored, fm.p_const_not_monitored
    ff = SubsetSolution(fm.modes[0], wls.state, np.sqrt(np.diag(wls.covariance)[:2]),
                        np.abs(S0[:2]) @ b_nom, np.zeros(2), np.zeros(2), S0)
    sols = [ff]
    raw_sigma_ss = [np.zeros(2)]
    for mode in fm.modes[1:]:
        P = S = None
        if mode.feasible:
            keep = np.array([i for i in range(n) if i not in mode.excluded])
            live = sorted({ctx.constellations[i] for i in keep})
            cols = [0, 1, 2] + [3 + labels.index(c) for c in live]
            P, S = _gain_rows(G, w, keep, cols)
        if S is None:
            if mode.kind == "const":
                p_const_nm += mode.p_fault
            else:
                p_sat_nm += mode.p_fault
            continue
        D = S[:2] - S0[:2]
        sep = D @ wls.residuals
        sig_ss = np.sqrt((D * D * var).sum(axis=1))
        state = wls.state.copy()
        state[:3] += S @ wls.residuals
        sols.append(SubsetSolution(mode, state, np.sqrt(np.diag(P)[:2]), np.abs(S[:2]) @ b_nom,
                                   sig_ss, sep, S))
        raw_sigma_ss.append(sig_ss)

    n_modes = max(1, len(sols) - 1)
    k_fa = cfg.k_fa if cfg.k_fa is not None else q_tail_inv(cfg.p_false_alert / (4.0 * n_modes))
    thresholds = k_fa * np.array(raw_sigma_ss)
    return MhssSnapshot(ctx, wls, sols, thresholds, k_fa, p_sat_nm, p_const_nm)


def solution_separation_test(solutions: Sequence[SubsetSolution], thresholds) -> FdeOutcome:
    """Pass iff ``|x_q^(0) - x_q^(k)| <= T_k,q`` for every mode and axis."""
    T = np.asarray(thresholds, dtype=float).reshape(-1, 2)
    seps = np.array([s.separation for s in solutions]).reshape(-1, 2)
    passed = bool(np.all(np.abs(seps) <= T))
    return FdeOutcome(frozenset(), passed, seps, T, [s.mode for s in solutions], not passed)


# ---------------------------------------------------------------------------
# Protection level

@dataclass(frozen=True)
class HplResult:
    hpl_axis: np.ndarray
    hpl: float
    available: bool
    budget: float = 0.0
    residual: np.ndarray = field(default_factory=lambda: np.zeros(2))
    post_exclusion: bool = False
    reason: str = ""

    @classmethod
    def unavailable(cls, reason: str) -> HplResult:
        return cls(np.full(2, np.nan), math.nan, False, reason=reason)


def hpl_budget(cfg: IntegrityConfig, p_sat_nm: float, p_const_nm: float) -> float:
    return 0.5 * cfg.phmi_hor * (1.0 - (p_sat_nm + p_const_nm) / (cfg.phmi_vert + cfg.phmi_hor))


def hpl_equation(solutions: Sequence[SubsetSolution], thresholds, shift=np.zeros(2), prior_scale: float = 1.0):
    """Left side of the HPL equation as a function of the per-axis HPL.

    Every term is ``w * Q((h - shift - c) / sigma)``: weight 2 and offset
    ``b_q^(0)`` for the fault-free solution, weight ``p_fault,k`` and
    offset ``T_k,q + b_q^(k)`` for each fault mode.
    """
    T = np.asarray(thresholds, dtype=float).reshape(-1, 2)
    w = np.array([2.0] + [s.mode.p_fault * prior_scale for s in solutions[1:]])
    c = np.array([solutions[0].bias_q] + [t + s.bias_q for t, s in zip(T[1:], solutions[1:])]).T
    inv_sig = 1.0 / np.array([s.sigma_q for s in solutions]).T
    shift = np.asarray(shift, dtype=float).reshape(2, 1)
    root2 = math.sqrt(2.0)

    def lhs(h):
        """``h`` of shape (2,) or (2, m); returns the same shape."""
        h = np.asarray(h, dtype=float)
        flat = h.ndim < 2
        h = np.broadcast_to(h, (2,)).reshape(2, 1) if flat else h
        z = (h[:, :, None] - shift[:, :, None] - c[:, None, :]) * inv_sig[:, None, :] / root2
        out = 0.5 * (erfc(z) * w).sum(axis=2)
        return out[:, 0] if flat else out

    return lhs


def hpl_lhs(h, solutions: Sequence[SubsetSolution], thresholds, shift=np.zeros(2), prior_scale: float = 1.0):
    """Left side of the HPL equation for both horizontal axes at ``h``."""
    return hpl_equation(solutions, thresholds, shift, prior_scale)(h)


def compute_hpl(solutions: Sequence[SubsetSolution], thresholds, cfg: IntegrityConfig = IntegrityConfig(),
                post_exclusion: bool = False, *, p_sat_not_monitored: float | None = None,
                p_const_not_monitored: float | None = None, exclusion_threshold=None,
                exclusion_prior: float = 0.0) -> HplResult:
    """Solve the MHSS HPL equation per horizontal axis by bracketed bisection.

    ``solutions[0]`` is the fault-free solution and ``thresholds`` is
    row-aligned with ``solutions``. With ``post_exclusion`` the priors are
    renormalised by ``1 - exclusion_prior`` and the arguments shifted by
    ``exclusion_threshold`` (see module docstring).
    """
    psat = cfg.p_sat_not_monitored if p_sat_not_monitored is None else p_sat_not_monitored
    pconst = cfg.p_const_not_monitored if p_const_not_monitored is None else p_const_not_monitored
    budget = hpl_budget(cfg, psat, pconst)
    if not budget > 0:
        return HplResult.unavailable("unmonitored fault probability exceeds the integrity budget")
    shift = np.zeros(2)
    scale = 1.0
    if post_exclusion:
        shift = np.zeros(2) if exclusion_threshold is None else np.asarray(exclusion_threshold, dtype=float)
        scale = 1.0 / (1.0 - exclusion_prior)

    lhs = hpl_equation(solutions, thresholds, shift, scale)

    def f(h):
        return lhs(h) - budget

    lo = np.full(2, HPL_BRACKET[0])
    hi = np.full(2, HPL_BRACKET[1])
    if np.any(f(hi) > 0):
        return HplResult.unavailable("no root of the HPL equation inside the bracket")
    # bisection generalised to SUBDIVISIONS sub-intervals per step: the
    # bracket keeps the sign change and shrinks until float resolution
    frac = np.arange(1, SUBDIVISIONS) / SUBDIVISIONS
    for _ in range(200):
        width = hi - lo
        if np.all(width <= cfg.hpl_tolerance):
            break
        grid = lo[:, None] + width[:, None] * frac[None, :]
        above = f(grid) > 0
        k = above.sum(axis=1)  # f decreases: points above zero come first
        new_lo = np.where(k > 0, grid[np.arange(2), np.maximum(k - 1, 0)], lo)
        new_hi = np.where(k < SUBDIVISIONS - 1, grid[np.arange(2), np.minimum(k, SUBDIVISIONS - 2)], hi)
        if np.array_equal(new_lo, lo) and np.array_equal(new_hi, hi):
            break
        lo, hi = new_lo, new_hi
    f_lo, f_hi = f(lo), f(hi)
    h_axis = np.where(np.abs(f_lo) < np.abs(f_hi), lo, hi)
    res = f(h_axis)
    hpl = float(np.hypot(*h_axis)) if cfg.combine == "rss" else float(np.max(h_axis))
    return HplResult(h_axis, hpl, True, budget, res, post_exclusion)


# ---------------------------------------------------------------------------
# Fault detection and exclusion

def detection_minimum(constellations: Sequence[str]) -> int:
    return 3 + len(set(constellations)) + 1


def exclusion_minimum(constellations: Sequence[str]) -> int:
    return 3 + len(set(constellations)) + 2


@dataclass(frozen=True)
class IntegritySolution:
    """Final state of an FDE run, ready for the HPL computation."""
    snapshot: MhssSnapshot
    keep: tuple
    excluded: frozenset
    exclusion_threshold: np.ndarray
    exclusion_prior: float

    @property
    def post_exclusion(self) -> bool:
        return bool(self.excluded)

    @property
    def state(self) -> np.ndarray:
        return self.snapshot.wls.state

    def hpl(self, cfg: IntegrityConfig) -> HplResult:
        snap = self.snapshot
        return compute_hpl(snap.solutions, snap.thresholds, cfg, self.post_exclusion,
                           p_sat_not_monitored=snap.p_sat_not_monitored,
                           p_const_not_monitored=snap.p_const_not_monitored,
                           exclusion_threshold=self.exclusion_threshold,
                           exclusion_prior=self.exclusion_prior)


def _separation_ratios(snap: MhssSnapshot):
    for sol, T in zip(snap.solutions[1:], snap.thresholds[1:]):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(T > 0, np.abs(sol.separation) / T, np.where(np.abs(sol.separation) > 0, np.inf, 0.0))
        yield float(np.max(ratio)), sol.mode


def _ranked_candidates(snap: MhssSnapshot):
    out = list(_separation_ratios(snap))
    # smallest exclusions first, so a whole constellation never hides a single fault
    out.sort(key=lambda t: (len(t[1].excluded), -t[0], t[1].index))
    return [m for _, m in out]


def exclusion_solution(snap0: MhssSnapshot, snap: MhssSnapshot, keep, prior: float) -> IntegritySolution:
    """Reduced-set solution with its exclusion threshold against ``snap0``."""
    ctx = snap0.ctx
    keep = tuple(keep)
    D = np.zeros((2, ctx.n))
    D[:, list(keep)] = snap.fault_free.gain[:2]
    D -= snap0.fault_free.gain[:2]
    t_ex = snap0.k_fa * np.sqrt((D * D * ctx.sigmas ** 2).sum(axis=1))
    excluded = frozenset(range(ctx.n)) - frozenset(keep)
    return IntegritySolution(snap, keep, excluded, t_ex, prior)


def forced_exclusion(rho, ctx: GeometryContext, exclude, cfg: IntegrityConfig = IntegrityConfig(),
                     x0=None, snap0: MhssSnapshot | None = None) -> IntegritySolution:
    """Post-exclusion state as if FDE had removed ``exclude``, without testing.

    Used to bound the protection level a receiver would report after an
    exclusion the prediction cannot rule out. ``snap0`` may pass a cached
    all-in-view snapshot of the same inputs.
    """
    rho = np.asarray(rho, dtype=float)
    exclude = frozenset(exclude)
    keep = tuple(i for i in range(ctx.n) if i not in exclude)
    labels = [ctx.constellations[i] for i in keep]
    if len(keep) < detection_minimum(labels):
        raise FdeFailure("too few measurements remain after exclusion")
    if snap0 is None:
        snap0 = mhss_snapshot(ctx, rho, cfg, x0)
    snap = mhss_snapshot(ctx.subset(keep), rho[list(keep)], cfg, snap0.wls.state)
    priors = {s.mode.excluded: s.mode.p_fault for s in snap0.solutions[1:]}
    prior = priors.get(exclude, cfg.p_sat_fault ** len(exclude))
    return exclusion_solution(snap0, snap, keep, prior)


def fde(rho, ctx: GeometryContext, cfg: IntegrityConfig = IntegrityConfig(), x0=None):
    """Detect inconsistent measurements and try to exclude them.

    Candidate exclusions are the fault modes of the current set, smallest
    first and then by separation ratio. The first reduced set that passes
    the separation test is returned. When none passes, pairs are searched
    by excluding again from each single-satellite reduced set, up to
    ``cfg.max_exclusions`` levels.

    Returns
    -------
    (FdeOutcome, IntegritySolution)
        ``excluded`` holds indices into the original measurement list.

    Raises
    ------
    FdeFailure
        Too few measurements, or no consistent subset found.
    """
    rho = np.asarray(rho, dtype=float)
    labels = ctx.constellations
    if ctx.n < detection_minimum(labels):
        raise FdeFailure(f"{ctx.n} measurements cannot support fault detection")
    try:
        snap0 = mhss_snapshot(ctx, rho, cfg, x0)
    except (DegenerateGeometryError, WlsConvergenceError) as exc:
        raise FdeFailure(str(exc)) from exc
    outcome0 = solution_separation_test(snap0.solutions, snap0.thresholds)
    full = tuple(range(ctx.n))
    if outcome0.passed:
        return outcome0, IntegritySolution(snap0, full, frozenset(), np.zeros(2), 0.0)
    if ctx.n < exclusion_minimum(labels):
        raise FdeFailure(f"fault detected but {ctx.n} measurements cannot support exclusion")

    def finish(keep, snap, prior):
        sol = exclusion_solution(snap0, snap, keep, prior)
        out = solution_separation_test(snap.solutions, snap.thresholds)
        return FdeOutcome(sol.excluded, True, out.separations, out.thresholds, out.modes, True), sol

    # breadth first: every exclusion of one level is tested before any deeper
    # one; the next level grows from the single-satellite exclusions in rank order
    frontier = [(full, snap0, 0.0)]
    seen = {full}
    for _ in range(cfg.max_exclusions):
        deeper = []
        for keep, snap, prior in frontier:
            if len(keep) < exclusion_minimum([labels[i] for i in keep]):
                continue
            for mode in _ranked_candidates(snap):
                trial = tuple(keep[j] for j in range(len(keep)) if j not in mode.excluded)
                if trial in seen or len(trial) < detection_minimum([labels[i] for i in trial]):
                    continue
                seen.add(trial)
                try:
                    tsnap = mhss_snapshot(ctx.subset(trial), rho[list(trial)], cfg, snap.wls.state)
                except (DegenerateGeometryError, WlsConvergenceError):
                    continue
                p = 1.0 - (1.0 - prior) * (1.0 - mode.p_fault)
                if solution_separation_test(tsnap.solutions, tsnap.thresholds).passed:
                    return finish(trial, tsnap, p)
                if len(mode.excluded) == 1:
                    deeper.append((trial, tsnap, p))
        frontier = deeper
    raise FdeFailure("no consistent measurement subset found")


def run_araim(rho, ctx: GeometryContext, cfg: IntegrityConfig = IntegrityConfig(), x0=None):
    """FDE followed by the HPL; failures come back as an unavailable HPL."""
    try:
        outcome, sol = fde(rho, ctx, cfg, x0)
    except FdeFailure as exc:
        return None, None, HplResult.unavailable(f"FDE failure: {exc}")
    return outcome, sol, sol.hpl(cfg)
