"""Adam with a staircase learning-rate decay, and L-BFGS with a strong-Wolfe line search.

Both work on flat float64 vectors through a callable ``fg(x) -> (f, grad)``.
Each outer iteration is one *step*; ``on_step(step, x, f, info)`` is invoked
after every step (and once for step 0 at the starting point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class NonFiniteLossError(FloatingPointError):
    """Raised when the objective becomes NaN or infinite."""


@dataclass
class OptimResult:
    x: np.ndarray
    f: float
    steps: int
    evaluations: int
    reason: str
    events: list = field(default_factory=list)


def staircase_lr(step: int, lr0: float = 1e-3, decay: float = 0.9, every: int = 100) -> float:
    """``lr0 * decay ** floor(step / every)``."""
    return lr0 * decay ** (step // every)


def _check(f, g, step):
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonFiniteLossError(f"non-finite loss or gradient at step {step} (f={f})")


def adam(
    fg: Callable,
    x0,
    steps: int,
    *,
    lr: float = 1e-3,
    decay: float = 0.9,
    decay_every: int = 100,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    on_step: Callable | None = None,
) -> OptimResult:
    """Plain Adam. The learning rate at (zero-based) update ``t`` is ``staircase_lr(t)``."""
    x = np.array(x0, dtype=np.float64)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    f, g = fg(x)
    _check(f, g, 0)
    if on_step:
        on_step(0, x, f, {})
    for t in range(steps):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1 ** (t + 1))
        vhat = v / (1 - beta2 ** (t + 1))
        rate = staircase_lr(t, lr, decay, decay_every)
        x = x - rate * mhat / (np.sqrt(vhat) + eps)
        f, g = fg(x)
        _check(f, g, t + 1)
        if on_step:
            on_step(t + 1, x, f, {"lr": rate})
    return OptimResult(x, float(f), steps, steps + 1, "max_steps")


def _cubic_min(x1, f1, g1, x2, f2, g2, lo, hi):
    """Minimiser of the cubic through two points with slopes, clipped to ``[lo, hi]``."""
    if x1 == x2:
        return 0.5 * (lo + hi)
    d1 = g1 + g2 - 3 * (f1 - f2) / (x1 - x2)
    disc = d1 * d1 - g1 * g2
    if disc < 0 or not math.isfinite(disc):
        return 0.5 * (lo + hi)
    d2 = math.sqrt(disc)
    if x1 <= x2:
        denom = g2 - g1 + 2 * d2
        pos = x2 - (x2 - x1) * ((g2 + d2 - d1) / denom) if denom != 0 else 0.5 * (x1 + x2)
    else:
        denom = g1 - g2 + 2 * d2
        pos = x1 - (x1 - x2) * ((g1 + d2 - d1) / denom) if denom != 0 else 0.5 * (x1 + x2)
    if not math.isfinite(pos):
        return 0.5 * (lo + hi)
    return min(max(pos, lo), hi)


@dataclass
class LineSearchResult:
    alpha: float
    f: float
    g: np.ndarray
    evaluations: int
    wolfe: bool  # strong Wolfe conditions hold
    armijo: bool  # sufficient decrease holds (and alpha > 0)


def strong_wolfe(fg, x, f0, g0, d, alpha0, *, c1=1e-4, c2=0.9, max_evals=25) -> LineSearchResult:
    """Bracketing phase plus zoom with safeguarded cubic interpolation."""
    dphi0 = float(g0 @ d)
    evals = 0

    def phi(a):
        nonlocal evals
        evals += 1
        fa, ga = fg(x + a * d)
        fa = float(fa)
        if not (math.isfinite(fa) and np.all(np.isfinite(ga))):
            return math.inf, ga, math.nan
        return fa, ga, float(ga @ d)

    def armijo(a, fa):
        return fa <= f0 + c1 * a * dphi0

    a_prev, f_prev, g_prev, dp_prev = 0.0, f0, g0, dphi0
    a = alpha0
    bracket = None
    first = True
    while evals < max_evals:
        fa, ga, dpa = phi(a)
        if not math.isfinite(fa):
            bracket = ((a_prev, f_prev, g_prev, dp_prev), (a, math.inf, ga, math.nan))
            break
        if not armijo(a, fa) or (not first and fa >= f_prev):
            bracket = ((a_prev, f_prev, g_prev, dp_prev), (a, fa, ga, dpa))
            break
        if abs(dpa) <= -c2 * dphi0:
            return LineSearchResult(a, fa, ga, evals, True, True)
        if dpa >= 0:
            bracket = ((a, fa, ga, dpa), (a_prev, f_prev, g_prev, dp_prev))
            break
        lo_b, hi_b = a + 0.01 * (a - a_prev), 10.0 * a
        a_next = _cubic_min(a_prev, f_prev, dp_prev, a, fa, dpa, lo_b, hi_b)
        a_prev, f_prev, g_prev, dp_prev = a, fa, ga, dpa
        a = a_next
        first = False
    if bracket is None:
        ok = a_prev > 0
        return LineSearchResult(a_prev, f_prev, g_prev, evals, False, ok)

    lo, hi = bracket
    while evals < max_evals:
        a_lo, f_lo, _, dp_lo = lo
        a_hi, f_hi, _, dp_hi = hi
        width = abs(a_hi - a_lo)
        if width * np.max(np.abs(d)) < 1e-14:
            break
        left, right = min(a_lo, a_hi), max(a_lo, a_hi)
        if math.isfinite(f_hi) and math.isfinite(dp_hi):
            a = _cubic_min(a_lo, f_lo, dp_lo, a_hi, f_hi, dp_hi, left, right)
        else:
            a = 0.5 * (left + right)
        # keep the trial away from the bracket ends
        margin = 0.1 * width
        if a - left < margin or right - a < margin:
            a = 0.5 * (left + right)
        fa, ga, dpa = phi(a)
        if not math.isfinite(fa) or not armijo(a, fa) or fa >= f_lo:
            hi = (a, fa, ga, dpa)
            continue
        if abs(dpa) <= -c2 * dphi0:
            return LineSearchResult(a, fa, ga, evals, True, True)
        if dpa * (a_hi - a_lo) >= 0:
            hi = lo
        lo = (a, fa, ga, dpa)
    a_lo, f_lo, g_lo, _ = lo
    return LineSearchResult(a_lo, f_lo, g_lo, evals, False, a_lo > 0 and armijo(a_lo, f_lo))


def _backtrack(fg, x, f0, g0, d, alpha0, c1=1e-4, max_evals=40) -> LineSearchResult:
    dphi0 = float(g0 @ d)
    a = alpha0
    for i in range(max_evals):
        fa, ga = fg(x + a * d)
        fa = float(fa)
        if math.isfinite(fa) and fa <= f0 + c1 * a * dphi0:
            return LineSearchResult(a, fa, ga, i + 1, False, True)
        a *= 0.5
    return LineSearchResult(0.0, f0, g0, max_evals, False, False)


def _two_loop(g, S, Y, rho):
    q = g.copy()
    alphas = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        a = r * (s @ q)
        alphas.append(a)
        q -= a * y
    if S:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for (s, y, r), a in zip(zip(S, Y, rho), reversed(alphas)):
        b = r * (y @ q)
        q += (a - b) * s
    return -q


def lbfgs(
    fg: Callable,
    x0,
    steps: int,
    *,
    history: int = 200,
    tolerance_grad: float = 1e-9,
    tolerance_change: float | None = None,
    c1: float = 1e-4,
    c2: float = 0.9,
    max_ls_evals: int = 25,
    curvature_eps: float = 1e-10,
    on_step: Callable | None = None,
) -> OptimResult:
    """Limited-memory BFGS.

    Stops when ``max|grad| <= tolerance_grad``, when ``steps`` outer iterations
    are done, or when no step with sufficient decrease can be found. A failed
    strong-Wolfe search falls back to backtracking along ``-grad``; each such
    event is recorded in ``OptimResult.events`` and passed to ``on_step``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fg(x)
    f = float(f)
    g = np.asarray(g, dtype=np.float64)
    _check(f, g, 0)
    evals = 1
    S, Y, rho = [], [], []
    events = []
    if on_step:
        on_step(0, x, f, {})
    if np.max(np.abs(g), initial=0.0) <= tolerance_grad:
        return OptimResult(x, f, 0, evals, "gradient_tolerance", events)
    reason = "max_steps"
    step = 0
    for step in range(1, steps + 1):
        d = _two_loop(g, S, Y, rho)
        if not float(g @ d) < 0:
            S, Y, rho = [], [], []
            d = -g
        alpha0 = min(1.0, 1.0 / np.sum(np.abs(g))) if not S else 1.0
        ls = strong_wolfe(fg, x, f, g, d, alpha0, c1=c1, c2=c2, max_evals=max_ls_evals)
        evals += ls.evaluations
        info = {"alpha": ls.alpha, "wolfe": ls.wolfe, "armijo": ls.armijo, "fallback": False}
        if not ls.armijo:
            events.append({"step": step, "event": "line_search_failed", "f": f})
            S, Y, rho = [], [], []
            d = -g
            ls = _backtrack(fg, x, f, g, d, min(1.0, 1.0 / max(np.sum(np.abs(g)), 1e-300)), c1=c1)
            evals += ls.evaluations
            info.update(alpha=ls.alpha, wolfe=False, armijo=ls.armijo, fallback=True)
            if not ls.armijo:
                events.append({"step": step, "event": "steepest_descent_failed", "f": f})
                reason = "line_search_failed"
                step -= 1
                break
        g_new = np.asarray(ls.g, dtype=np.float64)
        s = ls.alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            rho.append(1.0 / sy)
            if len(S) > history:
                S.pop(0)
                Y.pop(0)
                rho.pop(0)
        else:
            info["skipped_pair"] = True
        f_old = f
        x = x + s
        f = float(ls.f)
        g = g_new
        _check(f, g, step)
        if on_step:
            on_step(step, x, f, info)
        if np.max(np.abs(g)) <= tolerance_grad:
            reason = "gradient_tolerance"
            break
        if tolerance_change is not None and abs(f - f_old) <= tolerance_change * max(1.0, abs(f_old)):
            reason = "change_tolerance"
            break
    return OptimResult(x, f, step, evals, reason, events)
