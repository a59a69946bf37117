"""Epsilon-insensitive support vector regression solved in the dual.

The solver is a sequential pairwise (SMO-style) coordinate optimizer on the
dual with the working pair chosen by maximal KKT violation.  Coefficients are
kept in signed form (alpha_i = alpha_i^+ - alpha_i^-), so a fitted submodel
predicts sum_i alpha_i * K(z, z_i) + intercept.

Also provides the kernel-ridge hat matrix K (K + lambda I)^-1 used for the
effective-degrees-of-freedom traces under a squared loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from numba import njit

from .errors import ConvergenceError, InputError, NumericError
from .kernels import KernelSpec, kernel_cross, kernel_matrix


@dataclass(frozen=True)
class SvrConfig:
    """Solver settings: tube radius epsilon, box bound cost (C = 1/lambda),
    kernel, KKT stopping tolerance, and the pair-update budget in sweeps of n
    updates each (None means 10*n sweeps)."""

    epsilon: float = 0.1
    cost: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    tolerance: float = 1e-4
    max_passes: int | None = None

    def __post_init__(self):
        if self.epsilon < 0:
            raise InputError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.cost > 0:
            raise InputError(f"cost must be > 0, got {self.cost}")
        if not self.tolerance > 0:
            raise InputError(f"tolerance must be > 0, got {self.tolerance}")
        if self.max_passes is not None and self.max_passes < 1:
            raise InputError(f"max_passes must be a positive integer, got {self.max_passes}")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "cost": self.cost,
            "kernel": self.kernel.to_dict(),
            "tolerance": self.tolerance,
            "max_passes": self.max_passes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvrConfig":
        return cls(
            epsilon=float(d["epsilon"]),
            cost=float(d["cost"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            tolerance=float(d["tolerance"]),
            max_passes=None if d.get("max_passes") is None else int(d["max_passes"]),
        )


@dataclass
class SvrModel:
    """One fitted subspace submodel: signed dual coefficients over the
    training points, intercept, and the kernel they were fit under."""

    alphas: np.ndarray
    points: np.ndarray
    intercept: float
    kernel: KernelSpec
    training_dimension: int
    kkt_violation: float = 0.0
    n_updates: int = 0
    train_fitted: np.ndarray | None = None  # fit-time predictions, not serialized

    @property
    def support_mask(self) -> np.ndarray:
        return self.alphas != 0.0

    @property
    def support_points(self) -> np.ndarray:
        return self.points[self.support_mask]

    @property
    def support_alphas(self) -> np.ndarray:
        return self.alphas[self.support_mask]


@njit(cache=True)
def _rebuild_inv(K, Ainv, free, f):  # pragma: no cover - jitted
    """Recompute the ridged free-block inverse exactly (drift recovery)."""
    if f == 0:
        return
    M = np.empty((f, f))
    for p in range(f):
        for q in range(f):
            M[p, q] = K[free[p], free[q]]
        M[p, p] += 1e-10
    Ainv[:f, :f] = np.linalg.inv(np.ascontiguousarray(M))


@njit(cache=True)
def _inv_extend(K, Ainv, free, f, j):  # pragma: no cover - jitted
    """Grow the maintained (K_FF + ridge I)^-1 by coordinate j (Schur update).

    Falls back to an exact rebuild when the Schur pivot degenerates, which
    also repairs accumulated drift.
    """
    w = np.empty(f)
    for p in range(f):
        acc = 0.0
        for q in range(f):
            acc += Ainv[p, q] * K[free[q], j]
        w[p] = acc
    d = K[j, j] + 1e-10
    for p in range(f):
        d -= K[free[p], j] * w[p]
    if d < 1e-11:
        free[f] = j
        _rebuild_inv(K, Ainv, free, f + 1)
        return f + 1
    s = 1.0 / d
    for p in range(f):
        wp = w[p]
        for q in range(f):
            Ainv[p, q] += s * wp * w[q]
        Ainv[p, f] = -s * wp
        Ainv[f, p] = -s * wp
    Ainv[f, f] = s
    free[f] = j
    return f + 1


@njit(cache=True)
def _inv_remove(K, Ainv, free, f, pos):  # pragma: no cover - jitted
    """Shrink the maintained inverse by the free coordinate at `pos`."""
    last = f - 1
    if pos != last:
        free[pos], free[last] = free[last], free[pos]
        for q in range(f):
            tmp = Ainv[pos, q]
            Ainv[pos, q] = Ainv[last, q]
            Ainv[last, q] = tmp
        for q in range(f):
            tmp = Ainv[q, pos]
            Ainv[q, pos] = Ainv[q, last]
            Ainv[q, last] = tmp
    e = Ainv[last, last]
    if abs(e) < 1e-14:
        _rebuild_inv(K, Ainv, free, last)
        return last
    for p in range(last):
        cp = Ainv[p, last] / e
        if cp != 0.0:
            for q in range(last):
                Ainv[p, q] -= cp * Ainv[last, q]
    return last


@njit(cache=True)
def _face_solve(K, r, eps, C, lam, tol):  # pragma: no cover - jitted
    """Active-set descent used to finish off the dual exactly.

    States per coefficient: -2 at -C, -1 free negative, 0 at zero,
    +1 free positive, +2 at +C.  Each round solves the stationarity system on
    the free set (the ridged free-block inverse is maintained incrementally,
    with the equality multiplier handled by border elimination), moves from
    the current feasible point toward that optimum until the first sign/box
    boundary blocks (which gets clamped), and at face optima releases the
    worst KKT violator.  Any strict dual-objective improvement is written
    back into lam, even if the round budget runs out mid-descent.
    """
    n = K.shape[0]
    beta = lam[:n] - lam[n:]
    state = np.zeros(n, dtype=np.int64)
    for i in range(n):
        b = beta[i]
        if b >= C:
            state[i] = 2
        elif b <= -C:
            state[i] = -2
        elif b > 0.0:
            state[i] = 1
        elif b < 0.0:
            state[i] = -1

    obj_start = 0.5 * beta @ (K @ beta) - r @ beta + eps * np.abs(beta).sum()
    cur = beta.copy()
    g = K @ cur  # maintained incrementally as cur moves

    free = np.empty(n, dtype=np.int64)
    f = 0
    for i in range(n):
        if state[i] == 1 or state[i] == -1:
            free[f] = i
            f += 1
    Ainv = np.empty((n + 1, n + 1))
    if f > 0:
        M = np.empty((f, f))
        for p in range(f):
            for q in range(f):
                M[p, q] = K[free[p], free[q]]
            M[p, p] += 1e-10
        Ainv[:f, :f] = np.linalg.inv(M)

    target = np.zeros(n)
    rhs = np.empty(n)
    x = np.empty(n)
    y = np.empty(n)
    mods = 0
    rounds = 3 * n if 3 * n < 192 else 192
    for _ in range(rounds):
        if f > 0:
            # bound contribution to each free row: K_FB beta_B = g_F minus
            # the free columns' part
            sum_bound = 0.0
            for i in range(n):
                if state[i] == 2:
                    sum_bound += C
                elif state[i] == -2:
                    sum_bound -= C
            for p in range(f):
                ip = free[p]
                kb = g[ip]
                for q in range(f):
                    kb -= K[ip, free[q]] * cur[free[q]]
                rhs[p] = r[ip] - kb - eps * (1.0 if state[ip] == 1 else -1.0)
            xs = 0.0
            ys = 0.0
            for p in range(f):
                accx = 0.0
                accy = 0.0
                for q in range(f):
                    accx += Ainv[p, q] * rhs[q]
                    accy += Ainv[p, q]
                x[p] = accx
                y[p] = accy
                xs += accx
                ys += accy
            if ys <= 1e-300:
                break  # degenerate even after rebuilds; leave to the pairwise loop
            mu = (xs + sum_bound) / ys
            for p in range(f):
                target[free[p]] = x[p] - mu * y[p]

            # move from cur toward the face optimum, stopping at the first
            # sign/box boundary among free coordinates (Lawson-Hanson style)
            alpha = 1.0
            blocker = -1
            blocker_pos = -1
            blocker_state = 0
            for p in range(f):
                ip = free[p]
                d = target[ip] - cur[ip]
                if d == 0.0:
                    continue
                if d > 0.0:
                    limit = C - cur[ip]
                    hit_state = 2
                    if state[ip] == -1 and target[ip] > 0.0:
                        limit = 0.0 - cur[ip]
                        hit_state = 0
                else:
                    limit = -C - cur[ip]
                    hit_state = -2
                    if state[ip] == 1 and target[ip] < 0.0:
                        limit = 0.0 - cur[ip]
                        hit_state = 0
                step = limit / d
                if step < alpha:
                    alpha = step
                    blocker = ip
                    blocker_pos = p
                    blocker_state = hit_state
            if alpha < 1.0:
                for p in range(f):
                    ip = free[p]
                    delta = alpha * (target[ip] - cur[ip])
                    if ip == blocker:
                        snapped = 0.0 if blocker_state == 0 else (C if blocker_state == 2 else -C)
                        delta = snapped - cur[ip]
                    if delta != 0.0:
                        cur[ip] += delta
                        row = K[ip]
                        for a in range(n):
                            g[a] += row[a] * delta
                if blocker < 0:
                    break
                state[blocker] = blocker_state
                f = _inv_remove(K, Ainv, free, f, blocker_pos)
                mods += 1
                if mods >= 48:
                    mods = 0
                    _rebuild_inv(K, Ainv, free, f)
                continue
            for p in range(f):
                ip = free[p]
                delta = target[ip] - cur[ip]
                if delta != 0.0:
                    cur[ip] = target[ip]
                    row = K[ip]
                    for a in range(n):
                        g[a] += row[a] * delta
        else:
            # no free coordinates: midpoint of the feasible multiplier window
            lo = -np.inf
            hi = np.inf
            for i in range(n):
                w = r[i] - g[i]
                if state[i] == 0:
                    if w - eps > lo:
                        lo = w - eps
                    if w + eps < hi:
                        hi = w + eps
                elif state[i] == 2:
                    if w - eps < hi:
                        hi = w - eps
                else:
                    if w + eps > lo:
                        lo = w + eps
            if not np.isfinite(lo):
                lo = hi
            if not np.isfinite(hi):
                hi = lo
            mu = 0.5 * (lo + hi)

        # at the optimum of the current face: release the worst KKT violator
        worst = -1
        worst_amt = 0.5 * tol
        worst_sign = 0
        for i in range(n):
            w = r[i] - g[i] - mu
            if state[i] == 0:
                v = abs(w) - eps
                if v > worst_amt:
                    worst = i
                    worst_amt = v
                    worst_sign = 1 if w > 0.0 else -1
            elif state[i] == 2:
                v = eps - w
                if v > worst_amt:
                    worst = i
                    worst_amt = v
                    worst_sign = 1
            elif state[i] == -2:
                v = w + eps
                if v > worst_amt:
                    worst = i
                    worst_amt = v
                    worst_sign = -1
        if worst < 0:
            break
        state[worst] = worst_sign
        f = _inv_extend(K, Ainv, free, f, worst)
        mods += 1
        if mods >= 48:
            mods = 0
            _rebuild_inv(K, Ainv, free, f)

    # restore the sum constraint exactly: singular free blocks leave
    # cancellation noise (~1e-7) along flat directions; spread it over free
    # coordinates with enough box/sign margin
    err = cur.sum()
    if err != 0.0 and f > 0:
        margin = 2.0 * abs(err)
        eligible = 0
        for p in range(f):
            v = cur[free[p]]
            if abs(v) > margin and C - abs(v) > margin:
                eligible += 1
        if eligible > 0:
            shift = err / eligible
            for p in range(f):
                v = cur[free[p]]
                if abs(v) > margin and C - abs(v) > margin:
                    cur[free[p]] = v - shift

    # write back any strict improvement, even if the round budget ran out
    obj_end = 0.5 * cur @ (K @ cur) - r @ cur + eps * np.abs(cur).sum()
    if not obj_end < obj_start - 1e-12 * (1.0 + abs(obj_start)):
        return False
    for i in range(n):
        nb = cur[i]
        if nb >= 0.0:
            lam[i] = nb
            lam[n + i] = 0.0
        else:
            lam[i] = 0.0
            lam[n + i] = -nb
    return True


@njit(cache=True)
def _smo(K, r, eps, C, tol, max_updates):  # pragma: no cover - jitted
    """Sequential pairwise optimization on the 2n-variable box/equality dual.

    Variables lam[0:n] and lam[n:2n] are the positive and negative parts of
    the signed coefficients.  The first working index is the maximal KKT
    violator; the second maximizes the guaranteed objective decrease against
    it (second-order selection), which avoids zigzagging on the rank-deficient
    kernels produced by low-dimensional subspaces.  Periodically, and whenever
    the violation stops shrinking, an exact face solve (_face_solve) finishes
    the endgame that pairwise exchanges crawl through.
    Returns (beta, n_updates, violation, converged).
    """
    n = K.shape[0]
    lam = np.zeros(2 * n)
    grad = np.empty(2 * n)
    diag = np.empty(n)
    for i in range(n):
        grad[i] = eps - r[i]
        grad[n + i] = eps + r[i]
        diag[i] = K[i, i]

    updates = 0
    best_viol = np.inf
    stall = 0
    stall_cap = 2 * n if 2 * n > 256 else 256
    # periodic exact face solves: cheap endgame once SMO has shaped the
    # active set; give up after repeated failures (e.g. dense-interior duals)
    face_period = n if n > 64 else 64
    next_face = 2 * n
    face_fails = 0
    have_step = False
    pbi = 0
    pbj = 0
    pt = 0.0
    violation = np.inf
    while True:
        # fused pass: apply the pending gradient update, pick the maximal
        # violator (m) and the opposite extreme (M) for the stopping test
        m_val = -np.inf
        m_idx = -1
        M_val = np.inf
        row_i = K[pbi]  # K symmetric: row reads keep the scan contiguous
        row_j = K[pbj]
        for a in range(n):
            if have_step:
                d = pt * (row_i[a] - row_j[a])
                gp = grad[a] + d
                grad[a] = gp
                gm = grad[n + a] - d
                grad[n + a] = gm
            else:
                gp = grad[a]
                gm = grad[n + a]
            lp = lam[a]
            lm = lam[n + a]
            sp = -gp
            if lp < C and sp > m_val:
                m_val = sp
                m_idx = a
            if lp > 0.0 and sp < M_val:
                M_val = sp
            if lm > 0.0 and gm > m_val:
                m_val = gm
                m_idx = n + a
            if lm < C and gm < M_val:
                M_val = gm
        have_step = False
        violation = m_val - M_val
        if m_idx < 0 or violation < tol:
            break
        if updates >= max_updates:
            break

        if violation < 0.9 * best_viol:
            best_viol = violation
            stall = 0
        else:
            stall += 1
        if face_fails < 3 and (updates >= next_face or stall >= stall_cap):
            stall = 0
            next_face = updates + face_period
            if _face_solve(K, r, eps, C, lam, tol):
                face_fails = 0
                kb = K @ (lam[:n] - lam[n:])
                for a in range(n):
                    grad[a] = kb[a] + eps - r[a]
                    grad[n + a] = -kb[a] + eps + r[a]
                continue
            face_fails += 1

        i = m_idx
        bi = i % n
        kii = diag[bi]
        row_bi = K[bi]
        # second index: largest b^2/a decrease among coordinates violating with i
        j = -1
        best_gain = -np.inf
        for a in range(n):
            kd = kii + diag[a] - 2.0 * row_bi[a]
            if kd < 1e-12:
                kd = 1e-12
            if lam[a] > 0.0:
                b = m_val + grad[a]
                if b > 0.0:
                    gain = b * b / kd
                    if gain > best_gain:
                        best_gain = gain
                        j = a
            if lam[n + a] < C:
                b = m_val - grad[n + a]
                if b > 0.0:
                    gain = b * b / kd
                    if gain > best_gain:
                        best_gain = gain
                        j = n + a
        if j < 0:
            break

        bj = j % n
        q = kii + diag[bj] - 2.0 * K[bi, bj]
        if q < 1e-12:
            q = 1e-12
        if j < n:
            score_j = -grad[j]
        else:
            score_j = grad[j]
        t = (m_val - score_j) / q
        # box limits along the feasible direction
        if i < n:
            room_i = C - lam[i]
        else:
            room_i = lam[i]
        if j < n:
            room_j = lam[j]
        else:
            room_j = C - lam[j]
        if t > room_i:
            t = room_i
        if t > room_j:
            t = room_j

        if i < n:
            lam[i] += t
        else:
            lam[i] -= t
        if j < n:
            lam[j] -= t
        else:
            lam[j] += t
        if lam[i] < 0.0:
            lam[i] = 0.0
        elif lam[i] > C:
            lam[i] = C
        if lam[j] < 0.0:
            lam[j] = 0.0
        elif lam[j] > C:
            lam[j] = C

        have_step = True
        pbi = bi
        pbj = bj
        pt = t
        updates += 1

    beta = lam[:n] - lam[n:]
    converged = violation < tol
    return beta, updates, violation, converged


def dual_objective(K: np.ndarray, r: np.ndarray, beta: np.ndarray, eps: float) -> float:
    """Dual objective 0.5 b'Kb - r'b + eps*||b||_1 (minimized by svr_fit)."""
    return float(0.5 * beta @ K @ beta - r @ beta + eps * np.abs(beta).sum())


@njit(cache=True)
def _interval_bounds(g, r, beta, eps, C, ztol):  # pragma: no cover - jitted
    lo = -np.inf
    hi = np.inf
    for i in range(beta.shape[0]):
        w = r[i] - g[i]
        b = beta[i]
        if abs(b) <= ztol:
            if w - eps > lo:
                lo = w - eps
            if w + eps < hi:
                hi = w + eps
        elif b >= C - ztol:
            if w - eps < hi:
                hi = w - eps
        elif b <= -C + ztol:
            if w + eps > lo:
                lo = w + eps
        elif b > 0.0:
            if w - eps > lo:
                lo = w - eps
            if w - eps < hi:
                hi = w - eps
        else:
            if w + eps > lo:
                lo = w + eps
            if w + eps < hi:
                hi = w + eps
    return lo, hi


def intercept_interval(
    g: np.ndarray, r: np.ndarray, beta: np.ndarray, eps: float, C: float, ztol: float
) -> tuple[float, float]:
    """KKT-consistent interval for the intercept given g = K @ beta.

    Coefficients within ztol of 0 or +-C are treated as at that value.
    """
    lo, hi = _interval_bounds(
        np.ascontiguousarray(g, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
        np.ascontiguousarray(beta, dtype=np.float64),
        float(eps),
        float(C),
        float(ztol),
    )
    return float(lo), float(hi)


def _intercept_from(beta: np.ndarray, K: np.ndarray, r: np.ndarray, eps: float, C: float) -> float:
    g = K @ beta
    lo, hi = intercept_interval(g, r, beta, eps, C, ztol=1e-7 * C)
    if not np.isfinite(lo):
        lo = hi
    if not np.isfinite(hi):
        hi = lo
    if not np.isfinite(lo):
        return 0.0
    return 0.5 * (lo + hi)


def svr_fit(Z, r, config: SvrConfig) -> SvrModel:
    """Fit one submodel to targets r over points Z (n x k).

    Raises ConvergenceError (with the best iterate attached) if the pair
    budget runs out before the maximal KKT violation drops below tolerance.
    """
    Z = np.ascontiguousarray(np.asarray(Z, dtype=np.float64))
    if Z.ndim == 1:
        Z = Z[:, None]
    r = np.asarray(r, dtype=np.float64).ravel()
    n = Z.shape[0]
    if n < 2:
        raise InputError(f"svr_fit needs at least 2 points, got {n}")
    if r.shape[0] != n:
        raise InputError(f"targets length {r.shape[0]} != n rows {n}")
    if not (np.isfinite(Z).all() and np.isfinite(r).all()):
        raise InputError("svr_fit requires finite inputs")

    passes = config.max_passes if config.max_passes is not None else 10 * n
    K = kernel_matrix(config.kernel, Z)
    beta, updates, violation, converged = _smo(
        K, r, float(config.epsilon), float(config.cost), float(config.tolerance), passes * n
    )
    intercept = _intercept_from(beta, K, r, config.epsilon, config.cost)
    model = SvrModel(
        alphas=beta,
        points=Z,
        intercept=intercept,
        kernel=config.kernel,
        training_dimension=Z.shape[1],
        kkt_violation=float(violation),
        n_updates=int(updates),
        train_fitted=K @ beta + intercept,
    )
    if not converged:
        raise ConvergenceError(
            f"SMO stopped after {updates} pair updates with KKT violation "
            f"{violation:.3e} > tolerance {config.tolerance:.3e}",
            model=model,
        )
    return model


def svr_predict(model: SvrModel, Z_new) -> np.ndarray:
    """Evaluate the fitted submodel at the rows of Z_new (m x k)."""
    Z_new = np.asarray(Z_new, dtype=np.float64)
    if Z_new.ndim == 1:
        Z_new = Z_new[:, None]
    if Z_new.shape[1] != model.training_dimension:
        raise InputError(
            f"prediction dimension {Z_new.shape[1]} != training dimension {model.training_dimension}"
        )
    if Z_new.shape[0] == 0:
        return np.zeros(0)
    if not np.isfinite(Z_new).all():
        raise InputError("svr_predict requires finite inputs")
    mask = model.support_mask
    m = int(mask.sum())
    if m == 0:
        return np.full(Z_new.shape[0], model.intercept)
    if m == mask.shape[0]:
        sp, sa = model.points, model.alphas  # avoid copying when dense
    else:
        sp, sa = model.points[mask], model.alphas[mask]
    Kc = kernel_cross(model.kernel, Z_new, sp)
    return Kc @ sa + model.intercept


def ridge_smoother(Z, kernel: KernelSpec, lam: float) -> np.ndarray:
    """Hat matrix S' = K (K + lambda I)^-1 of kernel ridge under squared loss."""
    if not lam > 0:
        raise InputError(f"ridge_smoother requires lambda > 0, got {lam}")
    K = kernel_matrix(kernel, Z)
    n = K.shape[0]
    try:
        c, low = scipy.linalg.cho_factor(K + lam * np.eye(n))
        solved = scipy.linalg.cho_solve((c, low), K)
    except scipy.linalg.LinAlgError as exc:
        raise NumericError(f"ridge smoother solve failed: {exc}") from exc
    if not np.isfinite(solved).all():
        raise NumericError("ridge smoother produced non-finite entries")
    return solved.T
