"""Closed-form scale schedules and numeric checks of the analytic lemmas.

Anything with a closed form is computed with ``fractions.Fraction`` (J = 1)
or mpmath at 50 digits.  Doubly exponential quantities (I₀, I(J), Γ̃) are
carried as natural logarithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from . import rng
from .errors import UsageError

DPS = 50

TEN_NINTHS = Fraction(10, 9)
LEFT_BOUND = Fraction(159, 380)
RIGHT_BOUND = Fraction(269, 456)


def _mpf(x):
    with mpmath.workdps(DPS):
        if isinstance(x, Fraction):
            return mpmath.mpf(x.numerator) / x.denominator
        return mpmath.mpf(x)


# ------------------------------------------------------------- α, δ, I_j


def alpha_exact(J):
    """α(J) as a Fraction when it is rational (J = 1), else None."""
    if J < 1:
        raise UsageError("J must be at least 1")
    if J == 1:
        q = TEN_NINTHS
        return Fraction(1, 2) * (1 - 2 / (q + 1))
    return None


def alpha_delta(J):
    """(α(J), δ(J)) in 50-digit precision."""
    if J < 1:
        raise UsageError("J must be at least 1")
    with mpmath.workdps(DPS):
        q = mpmath.power(mpmath.mpf(10) / 9, mpmath.mpf(1) / J)
        a = (1 - 2 / (q + 1)) / 2
        return a, a / 4


def alpha_ratio_check(J, alpha=None):
    """((1+α)/(1−α))^J < 10/9; exact for J = 1 with the default α."""
    if alpha is None and J == 1:
        a = alpha_exact(1)
        return ((1 + a) / (1 - a)) ** J < TEN_NINTHS
    with mpmath.workdps(DPS):
        a = alpha_delta(J)[0] if alpha is None else _mpf(alpha)
        return bool(((1 + a) / (1 - a)) ** J < mpmath.mpf(10) / 9)


def delta_prime(delta, eta, dim):
    return eta * delta / (6 * dim)


def L_of_J(J, c0):
    """Smallest L ≥ 5 with c0·2^{-L} ≤ δ(J)."""
    if c0 <= 0:
        raise UsageError("c0 must be positive")
    _, d = alpha_delta(J)
    with mpmath.workdps(DPS):
        L = 5
        while _mpf(c0) * mpmath.power(2, -L) > d:
            L += 1
    return L


def intervals(J, exact=False):
    """[(L_j, R_j)] for j = 0..J; Fractions when ``exact`` and J = 1."""
    if exact:
        a = alpha_exact(J)
        if a is None:
            raise UsageError("exact intervals only exist for J = 1")
        rho = (1 - a) / (1 + a)
        out = []
        for j in range(J + 1):
            lo = Fraction(3, 4) * rho ** j - (1 + a) / 4
            hi = Fraction(3, 4) / rho ** j - (1 - a) / 4
            out.append((lo, hi))
        return out
    a, _ = alpha_delta(J)
    with mpmath.workdps(DPS):
        rho = (1 - a) / (1 + a)
        return [
            (mpmath.mpf(3) / 4 * rho ** j - (1 + a) / 4, mpmath.mpf(3) / 4 / rho ** j - (1 - a) / 4)
            for j in range(J + 1)
        ]


def intervals_within_bounds(J):
    lb, rb = _mpf(LEFT_BOUND), _mpf(RIGHT_BOUND)
    return all(lo >= lb and hi <= rb for lo, hi in intervals(J))


def alpha_tilde(dim):
    if dim < 2:
        raise UsageError("dimension must be at least 2")
    return Fraction(3, 10) / 4 ** dim


def c0_const(dim, eta):
    return 3 * dim * 2 ** (dim - 1) / eta


# -------------------------------------------------------- I₀, I(J), Γ̃


def log_I0(eps, k, c2_at_1):
    """log I₀(ε, k) = 2^{k-1} · log[c₃ (k2^k/ε) log(k2^k/ε)]."""
    if not 0 < c2_at_1 < 1:
        raise UsageError("c2(1) must be in (0, 1)")
    if eps <= 0 or k < 1:
        raise UsageError("need eps > 0 and k >= 1")
    with mpmath.workdps(DPS):
        c3 = max(mpmath.mpf(2), -mpmath.log(1 - _mpf(c2_at_1)))
        m = mpmath.mpf(k) * mpmath.power(2, k) / _mpf(eps)
        return mpmath.power(2, k - 1) * mpmath.log(c3 * m * mpmath.log(m))


def I0(eps, k, c2_at_1):
    with mpmath.workdps(DPS):
        return mpmath.exp(log_I0(eps, k, c2_at_1))


def ceil_from_log(logv):
    """⌈exp(logv)⌉ as a Python int (needs the value to fit in memory)."""
    digits = int(logv / math.log(10)) + 30
    with mpmath.workdps(max(DPS, digits)):
        return int(mpmath.ceil(mpmath.exp(mpmath.mpf(logv))))


def log_I_of_J(J, c2):
    """log I(J): max of the two branches, both in log space.

    ``c2`` is a callable J -> (0, 1) or a constant.  Returns
    ``(log I, log branch1, log branch2)``.
    """
    f = c2 if callable(c2) else (lambda _j: c2)
    cJ = f(J)
    if not 0 < cJ < 1:
        raise UsageError("c2(J) must lie in (0, 1)")
    with mpmath.workdps(DPS):
        eps = -mpmath.log(1 - _mpf(cJ)) / 2
        l1 = log_I0(eps, J, f(1))
        # ceilings only matter when the values are small
        if l1 < 200:
            l1 = mpmath.log(ceil_from_log(l1))
        base = math.ceil(J / cJ)
        l2 = mpmath.power(2, J - 1) * mpmath.log(base)
        return max(l1, l2), l1, l2


def _log_add(a, b):
    if a == -mpmath.inf:
        return b
    if b == -mpmath.inf:
        return a
    m = max(a, b)
    return m + mpmath.log(mpmath.exp(a - m) + mpmath.exp(b - m))


def log_gamma_tilde(k, I, c2, _memo=None):
    """log of the Γ̃_k(I) bound, clipped at 0 (i.e. bound ≤ 1)."""
    if _memo is None:
        _memo = {}
    key = (k, I)
    if key in _memo:
        return _memo[key]
    with mpmath.workdps(DPS):
        if I <= 0:
            out = mpmath.mpf(0)
        elif k == 1:
            out = -mpmath.inf
        else:
            kk = k - 1  # Γ̃_{kk+1}(I) from Γ̃_kk
            root = mpmath.sqrt(mpmath.mpf(I))
            t1 = (root - 1) * mpmath.log(1 - _mpf(c2))
            arg = math.isqrt(I) - kk + 1
            inner = log_gamma_tilde(kk, arg, c2, _memo)
            t2 = (1 + mpmath.mpf(kk - 1) / 2) * mpmath.log(I) + inner if inner != -mpmath.inf else -mpmath.inf
            out = min(mpmath.mpf(0), _log_add(t1, t2))
    _memo[key] = out
    return out


def gamma_recursion(c2, J, I_values):
    """Table {k: [Γ̃_k(I) for I in I_values]} for k = 1..J, as floats (bounds ≤ 1)."""
    if not 0 < c2 < 1:
        raise UsageError("c2 must lie in (0, 1)")
    memo = {}
    return {
        k: [float(mpmath.exp(log_gamma_tilde(k, int(I), c2, memo))) for I in I_values]
        for k in range(1, J + 1)
    }


def I0_lemma_check(c2, k, eps):
    """I^{-1/2^{k-1}} log Γ̃_k(I) ≤ log(1−c2) + ε at I = ⌈I₀(ε, k)⌉.

    Returns ``(holds, lhs, rhs)`` with lhs/rhs as mpf.
    """
    I = ceil_from_log(log_I0(eps, k, c2))
    with mpmath.workdps(DPS):
        lg = log_gamma_tilde(k, I, c2)
        lhs = mpmath.power(mpmath.mpf(I), -mpmath.mpf(1) / 2 ** (k - 1)) * lg
        rhs = mpmath.log(1 - _mpf(c2)) + _mpf(eps)
        return bool(lhs <= rhs), lhs, rhs


# ------------------------------------------------------------- Lambert W


@dataclass
class LambertReport:
    u: np.ndarray
    w: np.ndarray           # certified lower bracket end of W_{-1}(-e^{-u-1})
    width: np.ndarray
    margin: np.ndarray      # w - (-1 - sqrt(2u) - u)
    weakened_holds: np.ndarray  # W > -u-1 (the display without the square-root term)

    @property
    def all_positive(self):
        return bool(np.all(self.margin > 0))

    @property
    def certified(self):
        return bool(np.all(self.width <= 1e-12))


def _g(w, u):
    return np.log(-w) + w + u + 1.0


def lambert_w_check(u_grid, width=5e-13) -> LambertReport:
    """W_{-1}(−e^{−u−1}) by bisection of log(−w) + w + u + 1 = 0 on w ≤ −1.

    The function is increasing on (−∞, −1]. Each bracket is halved until it
    is narrower than ``width``; stopping there keeps |g| at the endpoints
    above float rounding for most points. An endpoint sign is accepted in
    float only when |g| clears a rounding bound, the rest are re-verified in
    50-digit arithmetic.
    """
    u = np.asarray(u_grid, dtype=float)
    if np.any(u <= 0):
        raise UsageError("u must be positive")
    lo = -2.0 * (u + 2.0)
    hi = np.full_like(u, -1.0)
    while True:
        live = hi - lo > width
        if not live.any():
            break
        mid = 0.5 * (lo + hi)
        neg = _g(mid, u) < 0
        lo = np.where(live & neg, mid, lo)
        hi = np.where(live & ~neg, mid, hi)

    def unsure(w, want_neg):
        g = _g(w, u)
        tol = 16 * np.finfo(float).eps * (np.abs(np.log(-w)) + np.abs(w) + u + 1.0)
        return ~((g < -tol) if want_neg else (g > tol))

    with mpmath.workdps(DPS):
        def g_mp(w, ui):
            return mpmath.log(-mpmath.mpf(w)) + w + mpmath.mpf(ui) + 1

        for i in np.flatnonzero(unsure(lo, True)):
            while g_mp(lo[i], u[i]) >= 0:  # float rounding put lo past the root; widen
                lo[i] = lo[i] - 1e-15 * abs(lo[i])
        for i in np.flatnonzero(unsure(hi, False)):
            while g_mp(hi[i], u[i]) < 0:
                hi[i] = hi[i] + 1e-15 * abs(hi[i])
    bound = -1.0 - np.sqrt(2 * u) - u
    return LambertReport(u, lo, hi - lo, lo - bound, hi > -u - 1)


# ------------------------------------------------- alternatives lemma


def elementary_lemma_check(values, weights, delta):
    """Which alternative holds: 'tails', 'central', 'both' or None."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if np.any(v < 0) or np.any(v > 1):
        raise UsageError("values must lie in [0, 1]")
    if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
        raise UsageError("weights must be a probability vector")
    mu = float(v @ w)
    if not 0 <= delta <= min(mu, 1 - mu) + 1e-15:
        raise UsageError("need 0 <= delta <= min(mu, 1 - mu)")
    up = w[v > mu + delta].sum()
    down = w[v < mu - delta].sum()
    mid = w[(v >= mu - delta) & (v <= mu + delta)].sum()
    tails = up >= delta / 2 and down >= delta / 2
    central = mid >= 0.25 - delta / 2
    if tails and central:
        return "both"
    return "tails" if tails else ("central" if central else None)


def elementary_lemma_bruteforce(n_laws, deltas, seed, grid=101, chunk=20000):
    """Random laws on an evenly spaced grid; returns (cases, skipped, failures)."""
    values = np.linspace(0.0, 1.0, grid)
    cases = skipped = failures = 0
    done = 0
    while done < n_laws:
        m = min(chunk, n_laws - done)
        u = rng.uniform_block(seed, rng.SAMPLE, done * grid * 2, m * grid * 2).reshape(m, 2 * grid)
        # mixture of dense and sparse laws: exponential weights, some zeroed
        raw = -np.log1p(-u[:, :grid])
        sparsity = np.floor(u[:, grid] * 4)[:, None]
        keep = u[:, grid:] ** (1 + 3 * sparsity) > 0.5 * (sparsity > 0)
        keep[:, 0] |= ~keep.any(axis=1)
        w = np.where(keep, raw, 0.0)
        w /= w.sum(axis=1, keepdims=True)
        mu = w @ values
        for d in deltas:
            ok = d <= np.minimum(mu, 1 - mu)
            skipped += int(np.sum(~ok))
            up = np.where(values[None, :] > (mu + d)[:, None], w, 0).sum(axis=1)
            down = np.where(values[None, :] < (mu - d)[:, None], w, 0).sum(axis=1)
            mid = 1.0 - up - down
            hold = ((up >= d / 2) & (down >= d / 2)) | (mid >= 0.25 - d / 2 - 1e-12)
            cases += int(ok.sum())
            failures += int(np.sum(ok & ~hold))
        done += m
    return cases, skipped, failures


# ------------------------------------------------ scales and conditions


def r_alpha_R(alpha, R, kappa_reg, Delta_S=1.0):
    """r_{α,R} = exp(κ_reg (log R)^{1+Δ_S}); α enters only through κ_reg."""
    if R < 1:
        raise UsageError("R must be at least 1")
    return math.exp(kappa_reg * math.log(R) ** (1 + Delta_S))


def ell0_and_A(ell_star, I, J, L):
    """ℓ₀ and the scale sets 𝒜 ⊆ 𝒜* (descending lists)."""
    step = (J + 1) * L
    ell0 = (ell_star // step) * step
    floor_ = ell0 - I * step
    A_star = [l for l in range(ell0, floor_, -L) if l > floor_]
    A = [l for l in A_star if l % step == 0]
    return ell0, A, A_star


@dataclass
class CheckReport:
    ok: bool
    checks: list = field(default_factory=list)  # (name, ok, detail)

    def add(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        self.ok = self.ok and bool(ok)

    def failed(self):
        return [c for c in self.checks if not c[1]]


def proper_separation_check(ells, J, L, kappa_reg, Delta_S=1.0):
    rep = CheckReport(True)
    alpha = float(alpha_delta(J)[0])
    for j in range(len(ells) - 1):
        a, b = ells[j], ells[j + 1]
        rep.add(f"gap[{j}]", a >= b + L, f"{a} >= {b} + {L}")
        r = r_alpha_R(alpha, 2 ** b, kappa_reg, Delta_S)
        rep.add(f"region[{j}]", 2 ** a < r - 2 ** b, f"2^{a} < r(2^{b}) - 2^{b} = {r - 2 ** b:.6g}")
    return rep


def ell_min(delta, alpha, eta, R_den, R_hk=None, R_khk=None):
    """Max of the ceiling terms; heat-kernel scales default to R_den."""
    R_hk = R_den if R_hk is None else R_hk
    R_khk = R_den if R_khk is None else R_khk
    terms = [math.ceil(math.log2(R)) if R > 1 else 0 for R in (R_hk, R_khk, R_den)]
    thr = min(delta / 8, eta * delta / 6)
    ell = 0
    while 2.0 ** (-ell) > thr:
        ell += 1
    return max(terms + [ell])


def compatibility_check(ell_star, I, J, L, ell_min_value, kappa_reg, Delta_S, b_N):
    ell0, _, _ = ell0_and_A(ell_star, I, J, L)
    low = ell0 - (I + 1) * (J + 1) * L
    rep = CheckReport(True)
    rep.add("scales above ell_min", low > ell_min_value, f"{low} > {ell_min_value}")
    alpha = float(alpha_delta(J)[0])
    if low >= 0:
        r = r_alpha_R(alpha, 2 ** low, kappa_reg, Delta_S)
        rep.add("regular region covers b_N", r - 4 * 2 ** ell0 >= b_N, f"{r:.6g} - 4*2^{ell0} >= {b_N}")
    else:
        rep.add("regular region covers b_N", False, "lowest scale negative")
    return rep


@dataclass(frozen=True)
class GrowthPair:
    N: tuple
    a_N: tuple
    b_N: tuple
    Delta_S: float = 1.0

    @classmethod
    def from_functions(cls, Ns, a, b, Delta_S=1.0):
        return cls(tuple(Ns), tuple(a(n) for n in Ns), tuple(b(n) for n in Ns), Delta_S)


def growth_check(gp: GrowthPair):
    a = np.asarray(gp.a_N, dtype=float)
    b = np.asarray(gp.b_N, dtype=float)
    rep = CheckReport(True)
    rep.add("a_N increasing", np.all(np.diff(a) > 0))
    rep.add("b_N increasing", np.all(np.diff(b) > 0))
    rep.add("b_N/a_N increasing", np.all(np.diff(b / a) > 0))
    with np.errstate(divide="ignore"):
        lb = np.log(b)
    ratio = a / np.exp(np.where(lb > 0, lb, 0.0) ** (1.0 / (1.0 + gp.Delta_S / 2)))
    rep.add("a_N / exp((log b_N)^{1/(1+D/2)}) increasing", np.all(np.diff(ratio) > 0))
    return rep


# ------------------------------------------------------- the bundle


@dataclass
class ScaleSchedule:
    J: int
    dim: int
    eta: float
    alpha: object
    delta: object
    delta_prime: object
    L: int
    log_I: object
    I: int | None
    alpha_tilde: Fraction
    intervals: list
    c0: float
    ell_star: int | None = None
    ell0: int | None = None
    A: list | None = None
    A_star: list | None = None
    overrides: dict = field(default_factory=dict)
    assumptions: dict = field(default_factory=dict)

    def c_lip_at(self, ell):
        return 6.0 * 2.0 ** (-ell) / self.eta

    def to_json(self):
        def num(x):
            if isinstance(x, Fraction):
                return {"exact": f"{x.numerator}/{x.denominator}", "value": float(x)}
            return {"value": float(x), "digits": mpmath.nstr(x, 30) if isinstance(x, mpmath.mpf) else repr(float(x))}

        return {
            "J": self.J,
            "dim": self.dim,
            "eta": self.eta,
            "alpha": num(self.alpha),
            "delta": num(self.delta),
            "delta_prime": num(self.delta_prime),
            "L": self.L,
            "log_I": float(self.log_I),
            "I": self.I,
            "alpha_tilde": num(self.alpha_tilde),
            "intervals": [[num(lo), num(hi)] for lo, hi in self.intervals],
            "c0": self.c0,
            "ell_star": self.ell_star,
            "ell0": self.ell0,
            "A": self.A,
            "A_star": self.A_star,
            "overrides": self.overrides,
            "assumptions": self.assumptions,
        }


def build_schedule(J, dim, eta, ell_star=None, Delta_S=1.0, kappa_reg=1.0, c2=0.5, I=None, L=None):
    """Assemble the schedule; ``I`` and ``L`` may be overridden for desk runs."""
    if J < 1:
        raise UsageError("J must be at least 1")
    a_ex = alpha_exact(J)
    if a_ex is not None:
        alpha, delta = a_ex, a_ex / 4
        ivs = intervals(J, exact=True)
    else:
        alpha, delta = alpha_delta(J)
        ivs = intervals(J)
    c0v = c0_const(dim, eta)
    overrides = {}
    L_formula = L_of_J(J, c0v)
    if L is None:
        L = L_formula
    else:
        overrides["L"] = {"used": L, "formula": L_formula}
    log_I, _, _ = log_I_of_J(J, c2)
    I_formula = ceil_from_log(log_I) if log_I < 60 else None
    if I is None:
        I = I_formula
    else:
        overrides["I"] = {"used": I, "formula_log": float(log_I)}
        log_I = math.log(I)
    dp = delta_prime(delta, Fraction(eta).limit_denominator(10**12) if a_ex is not None else eta, dim)
    sched = ScaleSchedule(
        J=J, dim=dim, eta=eta, alpha=alpha, delta=delta, delta_prime=dp, L=L,
        log_I=log_I, I=I, alpha_tilde=alpha_tilde(dim), intervals=ivs, c0=c0v,
        ell_star=ell_star, overrides=overrides,
        assumptions={"c2": c2 if not callable(c2) else "callable", "Delta_S": Delta_S, "kappa_reg": kappa_reg},
    )
    if ell_star is not None and I is not None:
        ell0, A, A_star = ell0_and_A(ell_star, I, J, L)
        if ell0 - I * (J + 1) * L >= 0:
            sched.ell0, sched.A, sched.A_star = ell0, A, A_star
        else:
            sched.ell0 = ell0
    return sched
