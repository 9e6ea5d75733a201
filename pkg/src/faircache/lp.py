"""Dense two-phase simplex with Bland's anti-cycling rule.

Small problems only (pool LPs and audit LPs have at most a few hundred
columns).  All variables are non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from faircache.model import FairCacheError

PIVOT_TOL = 1e-10
OPT_TOL = 1e-10


class LPInfeasible(FairCacheError):
    pass


class LPUnbounded(FairCacheError):
    pass


@dataclass
class LinearProgram:
    """max (or min) c.x subject to rows ``coeffs . x  sense  bound`` and x >= 0.

    ``sense`` is one of "<=", ">=", "=".
    """

    objective: Sequence[float]
    rows: list = field(default_factory=list)
    maximize: bool = True

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.objective.ndim != 1 or self.objective.size == 0:
            raise ValueError("objective must be a non-empty vector")
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective coefficients must be finite")
        rows = list(self.rows)
        self.rows = []
        for r in rows:
            self.add(*r)

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def add(self, coeffs: Sequence[float], sense: str, bound: float) -> "LinearProgram":
        a = np.asarray(coeffs, dtype=float)
        if a.shape != (self.n_vars,):
            raise ValueError(f"row has {a.shape} coefficients, expected ({self.n_vars},)")
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown sense {sense!r}")
        if not (np.all(np.isfinite(a)) and np.isfinite(bound)):
            raise ValueError("row coefficients and bound must be finite")
        self.rows.append((a, sense, float(bound)))
        return self


def _pivot(t: np.ndarray, r: int, c: int) -> None:
    t[r] /= t[r, c]
    col = t[:, c].copy()
    col[r] = 0.0
    t -= np.outer(col, t[r])


def _run(t: np.ndarray, basis: list[int], n_cols: int, max_iter: int) -> None:
    """Minimize the objective in the last row of tableau ``t`` (Bland's rule)."""
    m = len(basis)
    for _ in range(max_iter):
        obj = t[m, :n_cols]
        enter = -1
        for j in range(n_cols):
            if obj[j] < -OPT_TOL:
                enter = j
                break
        if enter < 0:
            return
        col = t[:m, enter]
        best_r = -1
        best_ratio = np.inf
        for i in range(m):
            if col[i] > PIVOT_TOL:
                ratio = t[i, -1] / col[i]
                if ratio < best_ratio - 1e-12 or (
                    abs(ratio - best_ratio) <= 1e-12 and basis[i] < basis[best_r]
                ):
                    best_ratio = ratio
                    best_r = i
        if best_r < 0:
            raise LPUnbounded("objective is unbounded")
        _pivot(t, best_r, enter)
        basis[best_r] = enter
    raise RuntimeError("simplex iteration limit reached")


def lp_solve(lp: LinearProgram, max_iter: int = 50_000) -> tuple[float, np.ndarray]:
    """Optimal value and a basic optimal solution; raises LPInfeasible / LPUnbounded."""
    n = lp.n_vars
    rows = []
    for a, sense, b in lp.rows:
        if b < 0:
            a, b = -a, -b
            sense = {"<=": ">=", ">=": "<=", "=": "="}[sense]
        rows.append((a, sense, b))
    m = len(rows)
    n_slack = sum(1 for _, s, _ in rows if s != "=")
    n_art = sum(1 for _, s, _ in rows if s != "<=")
    n_cols = n + n_slack + n_art
    t = np.zeros((m + 1, n_cols + 1))
    basis = []
    k_slack = n
    k_art = n + n_slack
    art_cols = []
    for i, (a, sense, b) in enumerate(rows):
        t[i, :n] = a
        t[i, -1] = b
        if sense == "<=":
            t[i, k_slack] = 1.0
            basis.append(k_slack)
            k_slack += 1
        else:
            if sense == ">=":
                t[i, k_slack] = -1.0
                k_slack += 1
            t[i, k_art] = 1.0
            basis.append(k_art)
            art_cols.append(k_art)
            k_art += 1

    if art_cols:
        # phase 1: minimize the sum of artificials
        for i in range(m):
            if basis[i] in art_cols:
                t[m] -= t[i]
        for c in art_cols:
            t[m, c] = 0.0
        _run(t, basis, n_cols, max_iter)
        if -t[m, -1] > 1e-8:
            raise LPInfeasible("constraints cannot be satisfied")
        # drive remaining artificials out of the basis
        real = n + n_slack
        for i in range(m):
            if basis[i] >= real:
                for j in range(real):
                    if abs(t[i, j]) > 1e-9:
                        _pivot(t, i, j)
                        basis[i] = j
                        break
        keep = [i for i in range(m) if basis[i] < real]
        t = np.vstack([t[keep], t[m:]])
        t = np.hstack([t[:, :real], t[:, -1:]])
        basis = [basis[i] for i in keep]
        m = len(basis)
        n_cols = real

    c = -lp.objective if lp.maximize else lp.objective.copy()
    t[m, :] = 0.0
    t[m, :n] = c
    for i in range(m):
        if t[m, basis[i]] != 0.0:
            t[m] -= t[m, basis[i]] * t[i]
    _run(t, basis, n_cols, max_iter)

    x = np.zeros(n_cols)
    x[basis] = t[:m, -1]
    # recompute basic values from the original data to shed pivoting error
    a_full = np.zeros((len(rows), n_cols))
    b_full = np.array([b for _, _, b in rows])
    ks = n
    for i, (a, sense, _) in enumerate(rows):
        a_full[i, :n] = a
        if sense != "=":
            a_full[i, ks] = 1.0 if sense == "<=" else -1.0
            ks += 1
    if m:
        try:
            sol, *_ = np.linalg.lstsq(a_full[:, basis], b_full, rcond=None)
            if np.all(sol >= -1e-9):
                x = np.zeros(n_cols)
                x[basis] = np.maximum(sol, 0.0)
        except np.linalg.LinAlgError:
            pass
    xs = x[:n]
    return float(lp.objective @ xs), xs
