"""Linear programming with primal-dual certificates.

Bounded-variable revised simplex (maximization), dense basis inverse with
periodic refactorization. Every column must carry finite bounds; rows may be
equalities or one-sided inequalities (internal slacks get the only infinite
bounds in the system). Pivot selection is deterministic, so repeated solves
of the same problem return bit-identical solutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

EQ, LE, GE = "E", "L", "G"

_OPTIMAL = "optimal"
_INFEASIBLE = "infeasible"
_UNBOUNDED = "unbounded"


class LpError(Exception):
    """Structural problem with an LP definition."""


class NumericalFailure(Exception):
    """Solver could not reach the requested tolerances."""


@dataclass(frozen=True)
class ToleranceSet:
    feas: float = 1e-9    # primal/dual feasibility on scaled data
    gap: float = 1e-8     # strong-duality gap accepted as optimal
    comp: float = 1e-8    # complementary slackness
    pivot: float = 1e-10  # smallest usable pivot magnitude


@dataclass
class LpProblem:
    """max objective . x  s.t.  A x (=, <=, >=) rhs,  lo <= x <= hi."""

    objective: np.ndarray
    matrix: sp.csc_matrix
    row_kind: list
    rhs: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    name: str = "lp"

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.matrix = sp.csc_matrix(self.matrix)
        m, n = self.matrix.shape
        if self.objective.shape != (n,):
            raise LpError(f"objective length {self.objective.shape} != {n} columns")
        if self.rhs.shape != (m,) or len(self.row_kind) != m:
            raise LpError("rhs/row_kind length does not match row count")
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise LpError("bounds length does not match column count")
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise LpError("all column bounds must be finite")
        if np.any(self.lo > self.hi + 1e-15):
            bad = int(np.argmax(self.lo > self.hi))
            raise LpError(f"lo > hi at column {bad}")
        for k in self.row_kind:
            if k not in (EQ, LE, GE):
                raise LpError(f"unknown row kind {k!r}")

    @property
    def shape(self):
        return self.matrix.shape

    def to_debug_text(self) -> str:
        """Plain-text dump; grammar documented in README (cross-check aid)."""
        m, n = self.shape
        lines = [f"# lp {self.name} rows={m} cols={n}", "maximize " + " ".join(
            f"{c:.17g}" for c in self.objective)]
        csr = self.matrix.tocsr()
        for i in range(m):
            s, e = csr.indptr[i], csr.indptr[i + 1]
            terms = " ".join(f"{j}:{v:.17g}" for j, v in zip(csr.indices[s:e], csr.data[s:e]))
            lines.append(f"row {self.row_kind[i]} {self.rhs[i]:.17g} {terms}")
        for j in range(n):
            lines.append(f"bound {self.lo[j]:.17g} {self.hi[j]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    primal: np.ndarray = None
    dual_rows: np.ndarray = None
    reduced_costs: np.ndarray = None
    objective_value: float = np.nan
    iterations: int = 0

    @property
    def is_optimal(self):
        return self.status == _OPTIMAL


def dual_objective(p: LpProblem, y: np.ndarray, d: np.ndarray) -> float:
    """Lagrangian bound rhs.y + sum_j max_{x in [lo,hi]} d_j x_j.

    For a maximization this is an upper bound on the optimum for any y with
    the correct row signs (free for =, >=0 for <=, <=0 for >=).
    """
    up = np.maximum(d, 0.0)
    dn = np.minimum(d, 0.0)
    return float(p.rhs @ y + p.hi @ up + p.lo @ dn)


def duality_gap(p: LpProblem, s: LpSolution) -> float:
    """|primal - dual| objective gap of an optimal solution."""
    if not s.is_optimal:
        raise LpError("duality_gap requires an optimal solution")
    if s.primal.shape[0] != p.shape[1] or s.dual_rows.shape[0] != p.shape[0]:
        raise LpError("solution/problem dimension mismatch")
    primal = float(p.objective @ s.primal)
    return abs(primal - dual_objective(p, s.dual_rows, s.reduced_costs))


class _Workspace:
    """Mutable simplex state over the slack-augmented equality system."""

    def __init__(self, p: LpProblem, tol: ToleranceSet):
        m, n = p.shape
        self.tol = tol
        self.m = m
        cols = [p.matrix]
        lo = [p.lo]
        hi = [p.hi]
        self.n_struct = n
        # slack columns for inequality rows; the only infinite bounds allowed
        slack_rows = [i for i, k in enumerate(p.row_kind) if k != EQ]
        if slack_rows:
            data = np.ones(len(slack_rows))
            sl = sp.csc_matrix((data, (slack_rows, np.arange(len(slack_rows)))),
                               shape=(m, len(slack_rows)))
            cols.append(sl)
            slo = np.zeros(len(slack_rows))
            shi = np.zeros(len(slack_rows))
            for idx, i in enumerate(slack_rows):
                if p.row_kind[i] == LE:
                    slo[idx], shi[idx] = 0.0, np.inf
                else:  # GE: A x + s = b with s <= 0
                    slo[idx], shi[idx] = -np.inf, 0.0
            lo.append(slo)
            hi.append(shi)
        self.A = sp.hstack(cols, format="csc")
        self.lo = np.concatenate(lo)
        self.hi = np.concatenate(hi)
        self.n = self.A.shape[1]
        self.b = p.rhs.copy()
        self.c = np.zeros(self.n)
        self.c[:n] = p.objective
        # nonbasic start: finite bound nearest zero (deterministic)
        self.at_upper = np.zeros(self.n, dtype=bool)
        for j in range(self.n):
            if not np.isfinite(self.lo[j]):
                self.at_upper[j] = True
        self.xN = np.where(self.at_upper, self.hi, self.lo)
        self.dense_cols = {}

    def col(self, j):
        if j not in self.dense_cols:
            self.dense_cols[j] = np.asarray(self.A[:, j].todense()).ravel()
        return self.dense_cols[j]


def solve_lp(p: LpProblem, tol: ToleranceSet = ToleranceSet()) -> LpSolution:
    """Solve to optimality with dual values, or report infeasible/unbounded.

    Raises NumericalFailure when the pivot budget is exhausted before the
    tolerances are met (ill-conditioning; caller may rescale).
    """
    sol, _ = LpSession(p, tol).solve()
    return sol


def _check_certificates(p, sol, tol):
    m, n = p.shape
    scale = max(1.0, np.abs(p.rhs).max(), np.abs(sol.primal).max())
    resid = p.matrix @ sol.primal - p.rhs
    for i, k in enumerate(p.row_kind):
        r = resid[i]
        ok = abs(r) <= tol.feas * scale if k == EQ else (
            r <= tol.feas * scale if k == LE else r >= -tol.feas * scale)
        if not ok:
            raise NumericalFailure(f"primal row residual {r:.3e} at row {i}")
    if np.any(sol.primal < p.lo - tol.feas * scale) or np.any(sol.primal > p.hi + tol.feas * scale):
        raise NumericalFailure("primal bound violation")
    gap = duality_gap(p, sol)
    if gap > tol.gap * max(1.0, abs(sol.objective_value)):
        raise NumericalFailure(f"duality gap {gap:.3e} exceeds tolerance")


_DENSE_LIMIT = 600_000  # m*n above which the matrix stays sparse


class _SimplexState:
    def __init__(self, A, lo, hi, b, basis, at_upper, x, tol):
        self.A = A
        self.dense = A.shape[0] * A.shape[1] <= _DENSE_LIMIT
        self.Ad = A.toarray() if self.dense else None
        self.lo = lo
        self.hi = hi
        self.b = b
        self.basis = np.asarray(basis, dtype=int)
        self.at_upper = at_upper
        self.x = x
        self.tol = tol
        self.n = A.shape[1]
        self.m = A.shape[0]
        self.unbounded = False
        self._dense_cache = {}
        self._nb = np.ones(self.n, dtype=bool)
        self._nb[self.basis] = False
        self._refactor()

    # -- basis linear algebra -------------------------------------------
    def _refactor(self):
        B = self.Ad[:, self.basis].copy() if self.dense else self.A[:, self.basis].toarray()
        self._lu = sla.lu_factor(B, check_finite=False)
        self._binv = sla.lu_solve(self._lu, np.eye(self.m), check_finite=False)
        self._eta_count = 0

    def col(self, j):
        if self.dense:
            return self.Ad[:, j]
        if j not in self._dense_cache:
            self._dense_cache[j] = np.asarray(self.A[:, j].todense()).ravel()
        return self._dense_cache[j]

    def _matT_vec(self, y):
        return self.Ad.T @ y if self.dense else self.A.T @ y

    def _recompute_xb(self):
        xN = np.where(self._nb, self.x, 0.0)
        rhs = self.b - (self.Ad @ xN if self.dense else self.A @ xN)
        self.x[self.basis] = self._binv @ rhs

    def nonbasic(self, upto):
        return self._nb[upto:] if upto else self._nb

    def objective(self, c):
        return float(c @ self.x)

    # -- main loop -------------------------------------------------------
    def run(self, c, max_iter=None):
        if max_iter is None:
            max_iter = 200 * (self.m + self.n) + 2000
        it = 0
        stall = 0
        bland = False
        self._recompute_xb()
        bounded_range = self.hi > self.lo
        while True:
            if it >= max_iter:
                raise NumericalFailure(f"pivot budget exhausted ({it} iterations)")
            y = self._binv.T @ c[self.basis]
            d = c - self._matT_vec(y)
            d[self.basis] = 0.0
            eligible = self._nb & bounded_range & (
                ((~self.at_upper) & (d > self.tol.feas)) |
                (self.at_upper & (d < -self.tol.feas)))
            cand = np.where(eligible)[0]
            if cand.size == 0:
                return it
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[int(np.argmax(np.abs(d[cand])))])
            entering_from_upper = self.at_upper[j]
            w = self._binv @ self.col(j)
            sign = -1.0 if entering_from_upper else 1.0
            # basic movement per unit t: xB -= sign * w * t
            step, leave_pos, leave_to_upper = self._ratio(j, w, sign)
            if step is None:
                self.unbounded = True
                return it
            if step <= self.tol.pivot:
                stall += 1
                if stall > self.m + 50:
                    bland = True
            else:
                stall = 0
            if leave_pos == -1:
                # bound flip, no basis change
                self.x[j] = self.hi[j] if not entering_from_upper else self.lo[j]
                self.at_upper[j] = not entering_from_upper
                self.x[self.basis] -= sign * step * w
            else:
                leaving = self.basis[leave_pos]
                self.x[self.basis] -= sign * step * w
                self.x[j] = (self.hi[j] - step) if entering_from_upper else (self.lo[j] + step)
                self.x[leaving] = self.hi[leaving] if leave_to_upper else self.lo[leaving]
                self.at_upper[leaving] = leave_to_upper
                self.basis[leave_pos] = j
                self._nb[leaving] = True
                self._nb[j] = False
                self._update_binv(leave_pos, w)
            it += 1
            if self._eta_count >= 100:
                self._refactor()
                self._recompute_xb()

    def _ratio(self, j, w, sign):
        """Max step for entering column j; returns (t, basis_pos, to_upper).

        basis_pos -1 encodes a bound flip of the entering variable itself.
        """
        t_best = self.hi[j] - self.lo[j]  # may be inf for slacks
        leave_pos, leave_to_upper = -1, False
        xB = self.x[self.basis]
        loB = self.lo[self.basis]
        hiB = self.hi[self.basis]
        move = sign * w
        with np.errstate(divide="ignore", invalid="ignore"):
            up_room = np.where(move > self.tol.pivot, (xB - loB) / move, np.inf)
            dn_room = np.where(move < -self.tol.pivot, (xB - hiB) / move, np.inf)
        lim = np.minimum(np.maximum(up_room, 0.0), np.maximum(dn_room, 0.0))
        pos = int(np.argmin(lim)) if lim.size else 0
        if lim.size and lim[pos] < t_best:
            # smallest-index-in-basis tie break for determinism
            tmin = lim[pos]
            ties = np.where(lim <= tmin * (1.0 + 1e-12) + 1e-15)[0]
            if ties.size > 1:
                pos = int(ties[int(np.argmin(self.basis[ties]))])
                tmin = lim[pos]
            t_best = tmin
            leave_pos = pos
            leave_to_upper = move[pos] < 0
        if not np.isfinite(t_best):
            return None, None, None
        return float(max(t_best, 0.0)), leave_pos, leave_to_upper

    def _update_binv(self, pos, w):
        piv = w[pos]
        if abs(piv) < self.tol.pivot:
            self._refactor()
            self._recompute_xb()
            return
        row = self._binv[pos, :] / piv
        self._binv -= np.outer(w, row)
        self._binv[pos, :] = row
        self._eta_count += 1

    # -- dual simplex: restore primal feasibility after bound changes -----
    def run_dual(self, c, max_iter=None):
        """Dual simplex under objective c; state must be dual feasible.

        Returns (iterations, feasible). feasible=False means the modified
        problem has no primal-feasible point (dual unbounded).
        """
        if max_iter is None:
            max_iter = 50 * (self.m + self.n) + 1000
        it = 0
        ftol = self.tol.feas * max(1.0, np.abs(self.b).max() if self.m else 1.0)
        while True:
            if it >= max_iter:
                raise NumericalFailure(f"dual pivot budget exhausted ({it})")
            xB = self.x[self.basis]
            below = self.lo[self.basis] - xB
            above = xB - self.hi[self.basis]
            viol = np.maximum(below, above)
            pmax = float(viol.max()) if viol.size else 0.0
            if pmax <= ftol:
                return it, True
            ties = np.where(viol >= pmax - 1e-15)[0]
            p_ = int(ties[int(np.argmin(self.basis[ties]))])
            needs_increase = below[p_] > above[p_]
            y = self._binv.T @ c[self.basis]
            d = c - self._matT_vec(y)
            d[self.basis] = 0.0
            alpha = self._binv[p_, :] @ self.Ad if self.dense else \
                np.asarray((sp.csr_matrix(self._binv[p_, :]) @ self.A).todense()).ravel()
            if needs_increase:
                elig = self._nb & (((~self.at_upper) & (alpha < -self.tol.pivot)) |
                                   (self.at_upper & (alpha > self.tol.pivot)))
                target = self.lo[self.basis[p_]]
            else:
                elig = self._nb & (((~self.at_upper) & (alpha > self.tol.pivot)) |
                                   (self.at_upper & (alpha < -self.tol.pivot)))
                target = self.hi[self.basis[p_]]
            cand = np.where(elig & (self.hi > self.lo))[0]
            if cand.size == 0:
                return it, False
            ratios = np.abs(d[cand] / alpha[cand])
            rmin = float(ratios.min())
            rt = np.where(ratios <= rmin * (1.0 + 1e-12) + 1e-15)[0]
            j = int(cand[rt[int(np.argmin(cand[rt]))]])
            w = self._binv @ self.col(j)
            entering_from_upper = self.at_upper[j]
            # step along entering variable that lands x_B[p_] on its bound
            if entering_from_upper:
                delta = (target - self.x[self.basis[p_]]) / alpha[j]
                self.x[self.basis] += delta * w
                self.x[j] = self.hi[j] - delta
            else:
                delta = (self.x[self.basis[p_]] - target) / alpha[j]
                self.x[self.basis] -= delta * w
                self.x[j] = self.lo[j] + delta
            leaving = self.basis[p_]
            self.x[leaving] = target
            self.at_upper[leaving] = not needs_increase
            self.basis[p_] = j
            self._nb[leaving] = True
            self._nb[j] = False
            self._update_binv(p_, w)
            it += 1
            if self._eta_count >= 100:
                self._refactor()
                self._recompute_xb()

    # -- final high-precision extraction ----------------------------------
    def polish(self, c):
        self._refactor()
        nb = self._nb
        xN = np.where(self.at_upper, self.hi, self.lo)
        x = self.x.copy()
        x[nb] = xN[nb]
        xfix = np.where(nb, x, 0.0)
        rhs = self.b - (self.Ad @ xfix if self.dense else self.A @ xfix)
        xb = sla.lu_solve(self._lu, rhs, check_finite=False)
        # one step of iterative refinement on the basic system
        Bcols = self.Ad[:, self.basis] if self.dense else self.A[:, self.basis].toarray()
        r = rhs - Bcols @ xb
        xb += sla.lu_solve(self._lu, r, check_finite=False)
        x[self.basis] = xb
        y = sla.lu_solve(self._lu, c[self.basis], trans=1, check_finite=False)
        d = c - self._matT_vec(y)
        d[self.basis] = 0.0
        self.x = x
        return x, y, d

    # -- snapshots for deterministic warm starts --------------------------
    def snapshot(self):
        return _Snapshot(self.basis.copy(), self.at_upper.copy(), self.x.copy(),
                         self.lo.copy(), self.hi.copy())

    def restore(self, snap):
        self.basis = snap.basis.copy()
        self.at_upper = snap.at_upper.copy()
        self.x = snap.x.copy()
        self.lo = snap.lo.copy()
        self.hi = snap.hi.copy()
        self._nb = np.ones(self.n, dtype=bool)
        self._nb[self.basis] = False
        self._refactor()


@dataclass
class _Snapshot:
    basis: np.ndarray
    at_upper: np.ndarray
    x: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    objective: np.ndarray = None


class LpSession:
    """Re-solve one LP under changing bounds/objectives with warm starts.

    The first solve runs two-phase primal simplex. Subsequent solves restart
    from an explicit snapshot (default: the base optimum): bound changes are
    absorbed by dual simplex, objective changes by primal phase 2. Every
    solve for the same (bounds, objective, start) input replays the same
    pivots, so results are reproducible regardless of call order.
    """

    def __init__(self, p: LpProblem, tol: ToleranceSet = ToleranceSet()):
        self.problem = p
        self.tol = tol
        self.ws = _Workspace(p, tol)
        self.n_struct = p.shape[1]
        self.m = p.shape[0]
        self._state = None
        self._base = None

    # base problem, solved once
    def _ensure_base(self):
        if self._base is not None:
            return
        ws = self.ws
        m, n_all = ws.m, ws.n
        basis = np.arange(n_all, n_all + m)
        lo = np.concatenate([ws.lo, np.zeros(m)])
        hi = np.concatenate([ws.hi, np.full(m, np.inf)])
        at_upper = np.concatenate([ws.at_upper, np.zeros(m, dtype=bool)])
        x = np.concatenate([ws.xN, np.zeros(m)])
        resid = ws.b - ws.A @ ws.xN
        art_sign = np.where(resid < 0, -1.0, 1.0)
        A_art = sp.hstack([ws.A, sp.diags(art_sign)], format="csc")
        x[basis] = np.abs(resid)

        c1 = np.zeros(n_all + m)
        c1[n_all:] = -1.0
        st = _SimplexState(A_art, lo, hi, ws.b, basis, at_upper, x, self.tol)
        it1 = st.run(c1)
        if -st.objective(c1) > 1e-7 * max(1.0, np.abs(ws.b).max() if m else 1.0):
            self._base = "infeasible"
            self._state = st
            self._base_iters = it1
            return
        st.lo[n_all:] = 0.0
        st.hi[n_all:] = 0.0
        st.x[n_all:][st.nonbasic(n_all)] = 0.0
        c2 = self._full_c(self.problem.objective)
        it2 = st.run(c2)
        self._state = st
        self._base_iters = it1 + it2
        if st.unbounded:
            self._base = "unbounded"
            return
        snap = st.snapshot()
        snap.objective = self.problem.objective.copy()
        self._base = snap

    def _full_c(self, struct_c):
        c = np.zeros(self.ws.n + self.m)
        c[:self.n_struct] = struct_c
        return c

    def base_state(self):
        self._ensure_base()
        if isinstance(self._base, str):
            return None
        return self._base

    def solve(self, lo=None, hi=None, objective=None, start=None):
        """Solve base problem with optional overrides; returns (solution, snapshot).

        lo/hi/objective override the structural columns only. The snapshot
        can seed later solves (e.g. pin a flux, then optimize another).
        """
        self._ensure_base()
        st = self._state
        if isinstance(self._base, str) and start is None:
            if self._base == "infeasible":
                return LpSolution(status=_INFEASIBLE, iterations=self._base_iters), None
            return LpSolution(status=_UNBOUNDED, iterations=self._base_iters), None
        snap = start if start is not None else self._base
        st.restore(snap)
        it = self._base_iters if start is None else 0
        base_c = snap.objective if snap.objective is not None else self.problem.objective
        if lo is not None or hi is not None:
            new_lo = np.asarray(lo, dtype=float) if lo is not None else self.problem.lo
            new_hi = np.asarray(hi, dtype=float) if hi is not None else self.problem.hi
            if np.any(new_lo > new_hi + 1e-15):
                raise LpError("lo > hi in override")
            st.lo[:self.n_struct] = new_lo
            st.hi[:self.n_struct] = new_hi
            # re-seat nonbasic variables on their (possibly moved) bounds
            nb = st._nb.copy()
            nb_idx = np.where(nb)[0]
            xn = st.x[nb_idx]
            lo_n, hi_n = st.lo[nb_idx], st.hi[nb_idx]
            go_up = st.at_upper[nb_idx] & np.isfinite(hi_n)
            st.x[nb_idx] = np.where(go_up, hi_n, np.where(np.isfinite(lo_n), lo_n, hi_n))
            st.at_upper[nb_idx] = np.where(go_up, True, ~np.isfinite(lo_n))
            st._recompute_xb()
            dit, feas = st.run_dual(self._full_c(base_c))
            it += dit
            if not feas:
                return LpSolution(status=_INFEASIBLE, iterations=it), None
        target_c = np.asarray(objective, dtype=float) if objective is not None else base_c
        c_full = self._full_c(target_c)
        it += st.run(c_full)
        if st.unbounded:
            return LpSolution(status=_UNBOUNDED, iterations=it), None
        x_fin, y, d = st.polish(c_full)
        primal = x_fin[:self.n_struct]
        reduced = d[:self.n_struct]
        view = LpProblem(objective=target_c, matrix=self.problem.matrix,
                         row_kind=self.problem.row_kind, rhs=self.problem.rhs,
                         lo=st.lo[:self.n_struct].copy(), hi=st.hi[:self.n_struct].copy(),
                         name=self.problem.name)
        sol = LpSolution(status=_OPTIMAL, primal=primal, dual_rows=y,
                         reduced_costs=reduced,
                         objective_value=float(target_c @ primal), iterations=it)
        try:
            _check_certificates(view, sol, self.tol)
        except NumericalFailure:
            # warm path drifted; redo from a fresh two-phase solve
            cold = LpSession(view, self.tol)
            sol, out = cold.solve()
            return sol, out
        out = st.snapshot()
        out.objective = np.asarray(target_c, dtype=float).copy()
        return sol, out
