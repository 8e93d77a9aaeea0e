"""Solutions of ``J u' + (q - lam w) u = w f`` as balanced BV functions.

Between atoms and segment edges the equation is a smooth linear ODE,

    ``u' = J^-1 (lam * w_dens(x) - q_dens(x)) u + J^-1 w_dens(x) f(x)``,

integrated either in closed form (constant coefficients on the stretch) or
with an adaptive embedded Runge-Kutta scheme.  Crossing an atom applies the
transfer

    ``u_plus = B_plus^-1 (B_minus u_minus + Dw(x) f(x))``,

so a solution is a list of smooth pieces plus stored one-sided limits at its
breakpoints; its value at a breakpoint is always understood as balanced.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp as _scipy_solve_ivp
from scipy.linalg import expm

from .errors import AccuracyError, SingularTransferError, StructuralError
from .measures import IntervalSpec, integrate_bv
from .system import (
    SingularitySet,
    SystemSpec,
    choose_anchors,
    jump_matrices,
    partition_points,
    subintervals,
)


@dataclass(frozen=True, eq=False)
class VectorFunction:
    """Vector-valued function with optional support and breakpoint hints.

    The callable must return *balanced* values at atoms; the solver and the
    transforms never infer them.
    """

    fn: Callable[[float], np.ndarray]
    support: tuple[float, float] | None = None
    breakpoints: tuple[float, ...] = ()

    def __call__(self, x: float) -> np.ndarray:
        val = np.asarray(self.fn(x), dtype=complex)
        if self.support is not None and not (self.support[0] <= x <= self.support[1]):
            return np.zeros_like(val)
        return val


# ---------------------------------------------------------------------------
# smooth stretches


class _ConstantFlow:
    """Flow ``Y -> exp(A dx) Y`` for a constant coefficient matrix."""

    def __init__(self, A: np.ndarray):
        self.A = A
        self._eig = None
        if np.any(A):
            try:
                mu, V = np.linalg.eig(A)
                Vinv = np.linalg.inv(V)
                recon = float(np.max(np.abs(V @ np.diag(mu) @ Vinv - A)))
                if np.linalg.cond(V) < 1e8 and recon <= 1e-12 * max(1.0, float(np.max(np.abs(A)))):
                    self._eig = (mu, V, Vinv)
            except np.linalg.LinAlgError:
                pass

    def apply(self, dx: float, Y: np.ndarray) -> np.ndarray:
        if not np.any(self.A) or dx == 0.0:
            return np.array(Y, copy=True)
        if self._eig is not None:
            mu, V, Vinv = self._eig
            core = Vinv @ Y
            if core.ndim == 1:
                return V @ (np.exp(mu * dx) * core)
            return V @ (np.exp(mu * dx)[:, None] * core)
        return expm(self.A * dx) @ Y

    def apply_many(self, dxs: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Stacked flow values at an array of offsets."""
        if not np.any(self.A):
            return np.broadcast_to(Y, (len(dxs),) + Y.shape).copy()
        if self._eig is not None:
            mu, V, Vinv = self._eig
            core = Vinv @ Y
            ex = np.exp(np.outer(dxs, mu))  # (m, n)
            if core.ndim == 1:
                return np.einsum("ij,mj,j->mi", V, ex, core)
            return np.einsum("ij,mj,jk->mik", V, ex, core)
        return np.stack([self.apply(float(dx), Y) for dx in dxs])


@dataclass
class _Piece:
    lo: float
    hi: float
    flow: _ConstantFlow | None = None     # constant-coefficient fast path ...
    x_ref: float = 0.0
    y_ref: np.ndarray | None = None
    dense: object | None = None           # ... or a dense ODE interpolant
    shape: tuple[int, ...] = ()

    def eval(self, x: float) -> np.ndarray:
        if self.flow is not None:
            return self.flow.apply(x - self.x_ref, self.y_ref)
        return np.asarray(self.dense(x)).reshape(self.shape)

    def eval_many(self, xs: np.ndarray) -> np.ndarray:
        if self.flow is not None:
            return self.flow.apply_many(xs - self.x_ref, self.y_ref)
        vals = np.asarray(self.dense(xs))  # (flat_dim, m)
        return np.moveaxis(vals, -1, 0).reshape((len(xs),) + self.shape)


def _coefficient_matrix(sys: SystemSpec, lam: complex) -> Callable[[float], np.ndarray]:
    Jinv = sys.J_inv

    def A(x: float) -> np.ndarray:
        return Jinv @ (lam * sys.w.density_at(x) - sys.q.density_at(x))

    return A


def _stretch_is_constant(sys: SystemSpec, lo: float, hi: float) -> bool:
    for meas in (sys.q, sys.w):
        for seg in meas.segments:
            if seg.interval[0] < hi and seg.interval[1] > lo and seg.degree != 0:
                return False
    return True


def _solve_stretch(
    sys: SystemSpec,
    lam: complex,
    lo: float,
    hi: float,
    x_from: float,
    Y_from: np.ndarray,
    f: Callable[[float], np.ndarray] | None,
) -> tuple[_Piece, np.ndarray]:
    """Propagate over ``[lo, hi]`` from one edge (``x_from``) to the other."""
    x_to = hi if x_from == lo else lo
    if f is None and _stretch_is_constant(sys, lo, hi):
        A = _coefficient_matrix(sys, lam)(0.5 * (lo + hi))
        flow = _ConstantFlow(A)
        piece = _Piece(lo=lo, hi=hi, flow=flow, x_ref=x_from, y_ref=np.asarray(Y_from, dtype=complex))
        return piece, flow.apply(x_to - x_from, piece.y_ref)

    Afun = _coefficient_matrix(sys, lam)
    Jinv = sys.J_inv
    Y_from = np.asarray(Y_from, dtype=complex)
    shape = Y_from.shape

    def rhs(x: float, y: np.ndarray) -> np.ndarray:
        out = Afun(x) @ y.reshape(shape)
        if f is not None:
            out = out + Jinv @ (sys.w.density_at(x) @ np.asarray(f(x), dtype=complex))
        return out.reshape(-1)

    sol = _scipy_solve_ivp(
        rhs,
        (x_from, x_to),
        Y_from.reshape(-1),
        method="DOP853",
        rtol=sys.tols.ode_rtol,
        atol=sys.tols.ode_atol,
        dense_output=True,
    )
    if not sol.success:
        raise AccuracyError(f"integrator failed on [{lo}, {hi}]: {sol.message}")
    return _Piece(lo=lo, hi=hi, dense=sol.sol, shape=shape), sol.y[:, -1].reshape(shape)


def _transfer(
    sys: SystemSpec,
    lam: complex,
    x: float,
    value: np.ndarray,
    f: Callable[[float], np.ndarray] | None,
    direction: int,
) -> np.ndarray:
    """Cross the atom at ``x``: +1 maps a left limit to the right limit."""
    bm, bp = jump_matrices(sys, x, lam)
    target, source = (bp, bm) if direction > 0 else (bm, bp)
    cond = float(np.linalg.cond(target))
    if not np.isfinite(cond) or cond > sys.tols.cond_cap:
        raise SingularTransferError(x, lam, cond)
    rhs = source @ value
    if f is not None:
        dw = sys.w.atom_at(x)
        if np.any(dw):
            drive = (1 if direction > 0 else -1) * (dw @ np.asarray(f(x), dtype=complex))
            rhs = rhs + (drive[:, None] if value.ndim > 1 else drive)
    return np.linalg.solve(target, rhs)


# ---------------------------------------------------------------------------
# piecewise solutions


@dataclass
class PiecewiseSolution:
    """Solution data on the closure of one subinterval.

    ``points`` are the breakpoints (domain edges, atoms, segment edges, the
    initial point); ``left_values[i]``/``right_values[i]`` hold the one-sided
    limits there.  At the domain edges both limits coincide with the interior
    one-sided limit.
    """

    lam: complex
    lo: float
    hi: float
    points: list[float]
    left_values: list[np.ndarray]
    right_values: list[np.ndarray]
    pieces: list[_Piece]
    interval_index: int | None = None

    def _index_of(self, x: float) -> int | None:
        i = bisect.bisect_left(self.points, x)
        if i < len(self.points) and self.points[i] == x:
            return i
        return None

    def _piece_at(self, x: float) -> _Piece:
        i = bisect.bisect_left(self.points, x)
        return self.pieces[max(i - 1, 0)]

    def _check(self, x: float):
        if not (self.lo <= x <= self.hi):
            raise ValueError(f"{x} outside [{self.lo}, {self.hi}]")

    def left(self, x: float) -> np.ndarray:
        self._check(x)
        i = self._index_of(x)
        return self.left_values[i] if i is not None else self._piece_at(x).eval(x)

    def right(self, x: float) -> np.ndarray:
        self._check(x)
        i = self._index_of(x)
        return self.right_values[i] if i is not None else self._piece_at(x).eval(x)

    def balanced(self, x: float) -> np.ndarray:
        self._check(x)
        i = self._index_of(x)
        if i is not None:
            return 0.5 * (self.left_values[i] + self.right_values[i])
        return self._piece_at(x).eval(x)

    __call__ = balanced

    def balanced_many(self, xs: np.ndarray) -> np.ndarray:
        """Stacked balanced values at an ascending array of points.

        Points hitting a breakpoint fall back to the scalar path; everything
        else is evaluated piece by piece in one batch each.
        """
        xs = np.asarray(xs, dtype=float)
        out = None
        idx = np.searchsorted(self.points, xs)
        exact = np.zeros(len(xs), dtype=bool)
        for i, x in enumerate(xs):
            j = idx[i]
            if j < len(self.points) and self.points[j] == x:
                exact[i] = True
        piece_of = np.clip(idx - 1, 0, len(self.pieces) - 1)
        for p in np.unique(piece_of[~exact]):
            mask = (~exact) & (piece_of == p)
            vals = self.pieces[p].eval_many(xs[mask])
            if out is None:
                out = np.zeros((len(xs),) + vals.shape[1:], dtype=complex)
            out[mask] = vals
        if exact.any():
            for i in np.nonzero(exact)[0]:
                v = self.balanced(float(xs[i]))
                if out is None:
                    out = np.zeros((len(xs),) + v.shape, dtype=complex)
                out[i] = v
        return out


def _breakpoints_in(sys: SystemSpec, lo: float, hi: float, extra: Sequence[float]) -> list[float]:
    pts = set()
    for meas in (sys.q, sys.w):
        for b in meas.breakpoints():
            if lo < b < hi:
                pts.add(float(b))
    for b in extra:
        if lo < float(b) < hi:
            pts.add(float(b))
    return sorted(pts)


def _assert_jump_consistency(sys, lam, sol: PiecewiseSolution, f) -> None:
    # defensive check of the atom condition; exact by construction up to
    # roundoff (domain edges are excluded: nothing is continued across them)
    for x, lv, rv in zip(sol.points[1:-1], sol.left_values[1:-1], sol.right_values[1:-1]):
        if not sys.is_atom(x):
            continue
        bm, bp = jump_matrices(sys, x, lam)
        drive = 0.0
        if f is not None:
            dw = sys.w.atom_at(x)
            drive = dw @ np.asarray(f(x), dtype=complex)
            if lv.ndim > 1 and np.ndim(drive) == 1:
                drive = np.broadcast_to(drive[:, None], lv.shape)
        resid = bp @ rv - bm @ lv - drive
        scale = max(1.0, float(np.max(np.abs(lv))), float(np.max(np.abs(rv))))
        if float(np.max(np.abs(resid))) > 1e-8 * scale:
            raise AccuracyError(
                f"jump condition violated at x={x} (residual {np.max(np.abs(resid)):.3e})"
            )


def _propagate(
    sys: SystemSpec,
    lam: complex,
    lo: float,
    hi: float,
    x0: float,
    Y0: np.ndarray,
    f: Callable[[float], np.ndarray] | None,
    interval_index: int | None,
) -> PiecewiseSolution:
    if not (lo <= x0 <= hi):
        raise StructuralError(f"initial point {x0} outside [{lo}, {hi}]")
    if sys.is_atom(x0):
        raise StructuralError("initial point must not carry an atom")
    Y0 = np.asarray(Y0, dtype=complex)

    extra = [x0]
    if f is not None:
        extra += list(getattr(f, "breakpoints", ()))
        supp = getattr(f, "support", None)
        if supp is not None:
            extra += list(supp)
    points = [lo] + _breakpoints_in(sys, lo, hi, extra) + [hi]
    npts = len(points)
    i0 = points.index(x0)

    left_vals: list[np.ndarray | None] = [None] * npts
    right_vals: list[np.ndarray | None] = [None] * npts
    pieces: list[_Piece | None] = [None] * (npts - 1)
    left_vals[i0] = right_vals[i0] = Y0

    cur = Y0
    for i in range(i0, npts - 1):
        if i > i0:
            left_vals[i] = cur
            if sys.is_atom(points[i]):
                cur = _transfer(sys, lam, points[i], cur, f, +1)
            right_vals[i] = cur
        pieces[i], cur = _solve_stretch(sys, lam, points[i], points[i + 1], points[i], cur, f)
    if i0 < npts - 1:
        left_vals[-1] = right_vals[-1] = cur

    cur = Y0
    for i in range(i0, 0, -1):
        if i < i0:
            right_vals[i] = cur
            if sys.is_atom(points[i]):
                cur = _transfer(sys, lam, points[i], cur, f, -1)
            left_vals[i] = cur
        pieces[i - 1], cur = _solve_stretch(sys, lam, points[i - 1], points[i], points[i], cur, f)
    if i0 > 0:
        left_vals[0] = right_vals[0] = cur

    sol = PiecewiseSolution(
        lam=lam,
        lo=lo,
        hi=hi,
        points=points,
        left_values=left_vals,
        right_values=right_vals,
        pieces=pieces,
        interval_index=interval_index,
    )
    _assert_jump_consistency(sys, lam, sol, f)
    return sol


def solve_ivp(
    sys: SystemSpec,
    j: int,
    lam: complex,
    x0: float,
    u0: np.ndarray,
    f: Callable[[float], np.ndarray] | None = None,
    *,
    sing: SingularitySet | None = None,
) -> PiecewiseSolution:
    """Unique balanced solution through ``u(x0) = u0`` on subinterval ``j``.

    ``x0`` may be an edge of the closed subinterval, in which case ``u0``
    prescribes the one-sided limit there (legitimate whenever the coefficients
    are finite measures up to that edge, e.g. at regular endpoints and at all
    partition points).
    """
    lo, hi = subintervals(sys, sing)[j]
    return _propagate(sys, lam, lo, hi, x0, np.asarray(u0, dtype=complex), f, j)


@dataclass
class FundamentalMatrix:
    """Matrix solution on one subinterval, normalized to the identity at its anchor."""

    path: PiecewiseSolution
    anchor: float
    j: int

    @property
    def lam(self) -> complex:
        return self.path.lam

    @property
    def lo(self) -> float:
        return self.path.lo

    @property
    def hi(self) -> float:
        return self.path.hi

    def left(self, x: float) -> np.ndarray:
        return self.path.left(x)

    def right(self, x: float) -> np.ndarray:
        return self.path.right(x)

    def balanced(self, x: float) -> np.ndarray:
        return self.path.balanced(x)

    def balanced_many(self, xs: np.ndarray) -> np.ndarray:
        return self.path.balanced_many(xs)

    __call__ = balanced


def fundamental_matrix(
    sys: SystemSpec,
    j: int,
    lam: complex,
    *,
    anchor: float | None = None,
    sing: SingularitySet | None = None,
) -> FundamentalMatrix:
    """Fundamental matrix on subinterval ``j``, equal to the identity at the anchor."""
    if sing is None:
        sing = partition_points(sys)
    if anchor is None:
        anchor = choose_anchors(sys, sing)[j]
    lo, hi = subintervals(sys, sing)[j]
    n = sys.dim
    path = _propagate(sys, lam, lo, hi, anchor, np.eye(n, dtype=complex), None, j)
    return FundamentalMatrix(path=path, anchor=anchor, j=j)


class SolutionRow:
    """The ``n x n(N+1)`` row of all subinterval fundamental matrices.

    Each block lives on the closure of its subinterval and is extended to the
    whole interval by zero; at a shared partition point the balanced value of
    the two adjacent blocks is half their interior one-sided limit.
    """

    def __init__(self, sys: SystemSpec, fundamentals: Sequence[FundamentalMatrix]):
        self.sys = sys
        self.fundamentals = list(fundamentals)
        self.lam = self.fundamentals[0].lam if self.fundamentals else 0j
        self.n = sys.dim

    @property
    def blocks(self) -> int:
        return len(self.fundamentals)

    def _block(self, fund: FundamentalMatrix, x: float, side: str) -> np.ndarray:
        zero = np.zeros((self.n, self.n), dtype=complex)
        lo, hi = fund.lo, fund.hi
        if x < lo or x > hi:
            return zero
        if x == lo:
            inner = fund.right(lo)
            outer = zero
            left, right = outer, inner
        elif x == hi:
            inner = fund.left(hi)
            left, right = inner, zero
        else:
            if side == "left":
                return fund.left(x)
            if side == "right":
                return fund.right(x)
            return fund.balanced(x)
        if side == "left":
            return left
        if side == "right":
            return right
        return 0.5 * (left + right)

    def value(self, x: float, side: str = "balanced") -> np.ndarray:
        if side not in ("left", "right", "balanced"):
            raise ValueError(f"unknown side {side!r}")
        return np.hstack([self._block(f, x, side) for f in self.fundamentals])

    def left(self, x: float) -> np.ndarray:
        return self.value(x, "left")

    def right(self, x: float) -> np.ndarray:
        return self.value(x, "right")

    def balanced(self, x: float) -> np.ndarray:
        return self.value(x, "balanced")

    __call__ = balanced

    def balanced_many(self, xs: np.ndarray) -> np.ndarray:
        """Stacked balanced row values at an ascending array of points."""
        xs = np.asarray(xs, dtype=float)
        out = np.zeros((len(xs), self.n, self.n * self.blocks), dtype=complex)
        for j, fund in enumerate(self.fundamentals):
            lo, hi = fund.lo, fund.hi
            inside = (xs > lo) & (xs < hi)
            edge = (xs == lo) | (xs == hi)
            cols = slice(j * self.n, (j + 1) * self.n)
            if inside.any():
                out[inside, :, cols] = fund.balanced_many(xs[inside])
            for i in np.nonzero(edge)[0]:
                out[i, :, cols] = self._block(fund, float(xs[i]), "balanced")
        return out


def solution_row(
    sys: SystemSpec,
    lam: complex,
    *,
    sing: SingularitySet | None = None,
    anchors: Sequence[float] | None = None,
) -> SolutionRow:
    """Build the full row of fundamental matrices for one spectral parameter."""
    if sing is None:
        sing = partition_points(sys)
    if anchors is None:
        anchors = choose_anchors(sys, sing)
    funds = [
        fundamental_matrix(sys, j, lam, anchor=anchors[j], sing=sing)
        for j in range(len(anchors))
    ]
    return SolutionRow(sys, funds)


def forward_transform_compact(
    sys: SystemSpec,
    f: Callable[[float], np.ndarray],
    lam: complex,
    *,
    row_conj: SolutionRow | None = None,
    sing: SingularitySet | None = None,
    anchors: Sequence[float] | None = None,
) -> np.ndarray:
    """Transform ``f`` against the solution row: ``int row(., conj(lam))^* w f``.

    ``f`` must be compactly supported (or the interval finite) and evaluate to
    balanced values at atoms of ``w``.
    """
    if row_conj is None:
        row_conj = solution_row(sys, np.conj(lam), sing=sing, anchors=anchors)
    a, b = sys.interval
    supp = getattr(f, "support", None)
    lo = max(a, supp[0]) if supp else a
    hi = min(b, supp[1]) if supp else b
    if hi <= lo:
        return np.zeros(sys.dim * row_conj.blocks, dtype=complex)
    breaks = list(getattr(f, "breakpoints", ())) + sys.atom_positions()

    def g(x: float) -> np.ndarray:
        return row_conj.balanced(x).conj().T

    def g_many(xs: np.ndarray) -> np.ndarray:
        return np.conj(np.swapaxes(row_conj.balanced_many(xs), -1, -2))

    iv = IntervalSpec(lo, hi, include_lower=True, include_upper=True)
    return integrate_bv(
        g, sys.w, iv, rhs=f, breakpoints=breaks, tols=sys.tols, g_many=g_many
    )


def wronskian_defect(
    sys: SystemSpec,
    j: int,
    lam: complex,
    grid: Sequence[float] | int = 50,
    *,
    sing: SingularitySet | None = None,
    anchor: float | None = None,
) -> float:
    """Largest residual of the two Wronskian-type identities on a sample grid.

    For a fundamental matrix ``U`` normalized at a common anchor the products
    ``U(x, conj(lam))^* J U(x, lam)`` and ``U(x, lam) J^-1 U(x, conj(lam))^*``
    are constant (equal to ``J`` and ``J^-1``); both are checked at both
    one-sided limits over the grid.
    """
    if sing is None:
        sing = partition_points(sys)
    if anchor is None:
        anchor = choose_anchors(sys, sing)[j]
    U = fundamental_matrix(sys, j, lam, anchor=anchor, sing=sing)
    Uc = fundamental_matrix(sys, j, np.conj(lam), anchor=anchor, sing=sing)
    lo, hi = U.lo, U.hi
    if isinstance(grid, int):
        xs = np.linspace(lo, hi, grid)
    else:
        xs = np.asarray(list(grid), dtype=float)
    J = sys.J
    Jinv = sys.J_inv
    worst = 0.0
    for x in xs:
        for side in ("left", "right"):
            u = getattr(U, side)(float(x))
            uc = getattr(Uc, side)(float(x))
            r1 = np.max(np.abs(uc.conj().T @ J @ u - J))
            r2 = np.max(np.abs(u @ Jinv @ uc.conj().T - Jinv))
            worst = max(worst, float(r1), float(r2))
    return worst
