"""Block matrices coupling the subinterval solutions.

With partition points ``x_1 < ... < x_N`` a candidate solution is described by
one coefficient vector per subinterval, stacked into ``C^{n(N+1)}``.  Three
families of conditions act on that stack:

* junction rows enforcing the atom condition at every partition point,
* square-integrability rows near singular endpoints (deficiency projectors),
* the boundary-condition rows built from the endpoint data.

Together with the projector that removes norm-zero solutions they form the
rectangular constraint matrix and the source maps whose (pseudo)inverse yields
the Weyl matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .engine import Engine
from .errors import ConfigError, TheoryViolationError
from .system import BoundaryConditions, SystemSpec, jump_matrices


def _strip_first(n: int, N: int) -> np.ndarray:
    """Block matrix dropping the first n entries of a stacked vector."""
    return np.hstack([np.zeros((n * N, n)), np.eye(n * N)])


def _strip_last(n: int, N: int) -> np.ndarray:
    return np.hstack([np.eye(n * N), np.zeros((n * N, n))])


def _kernel_basis(mat: np.ndarray, rel_tol: float) -> np.ndarray:
    """Orthonormal kernel basis columns of a (possibly empty) matrix."""
    cols = mat.shape[1]
    if mat.size == 0 or not np.any(mat):
        return np.eye(cols, dtype=complex)
    u, s, vh = np.linalg.svd(mat)
    cutoff = rel_tol * (s[0] if s.size else 0.0)
    rank = int(np.sum(s > cutoff))
    return vh[rank:].conj().T


def jump_system(sys: SystemSpec, lam: complex, *, engine: Engine | None = None):
    """Junction matrices ``(defect, mean)`` acting on stacked coefficients.

    ``defect @ c`` evaluates ``B_plus u_plus - B_minus u_minus`` at every
    partition point for the solution family with coefficients ``c``;
    ``mean @ c`` evaluates ``B_plus u_plus + B_minus u_minus``.  For ``N = 0``
    both have zero rows.
    """
    eng = engine or Engine.get(sys)
    n = sys.dim
    N = len(eng.sing.partition)
    width = n * (N + 1)
    if N == 0:
        z = np.zeros((0, width), dtype=complex)
        return z, z.copy()
    row = eng.row(lam)
    bplus = []
    bplus_conj_star = []
    u_right = []
    u_left = []
    for k, xk in enumerate(eng.sing.partition, start=1):
        _, bp = jump_matrices(sys, xk, lam)
        bplus.append(bp)
        _, bp_c = jump_matrices(sys, xk, np.conj(lam))
        bplus_conj_star.append(bp_c.conj().T)
        u_right.append(row.fundamentals[k].right(xk))
        u_left.append(row.fundamentals[k - 1].left(xk))

    calB = _block_diag(bplus)
    calB_star = _block_diag(bplus_conj_star)
    Uplus = _block_diag(u_right)
    Uminus = _block_diag(u_left)
    Et = _strip_first(n, N)
    Eb = _strip_last(n, N)
    defect = calB @ Uplus @ Et + calB_star @ Uminus @ Eb
    mean = calB @ Uplus @ Et - calB_star @ Uminus @ Eb
    return defect, mean


def _block_diag(blocks) -> np.ndarray:
    if not blocks:
        return np.zeros((0, 0), dtype=complex)
    n = sum(b.shape[0] for b in blocks)
    m = sum(b.shape[1] for b in blocks)
    out = np.zeros((n, m), dtype=complex)
    r = c = 0
    for b in blocks:
        out[r : r + b.shape[0], c : c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def norm_zero_space(sys: SystemSpec, *, engine: Engine | None = None):
    """Coefficients of norm-zero global solutions and the projector off them.

    A stacked coefficient vector describes a norm-zero solution of the full
    equation exactly when it lies in the kernel of the junction matrix at
    ``lam = 0`` and of the weighted Gram matrix (positive semidefinite, so its
    kernel is precisely the set of vectors whose solution has zero norm).
    Returns ``(basis, projector)`` with orthonormal basis columns.
    """
    eng = engine or Engine.get(sys)

    def build():
        defect, _ = jump_system(sys, 0.0, engine=eng)
        gram = eng.gram(0.0)
        stack = np.vstack([defect, gram])
        basis = _kernel_basis(stack, sys.tols.rank_rel)
        proj = np.eye(eng.coeff_dim, dtype=complex) - basis @ basis.conj().T
        return basis, proj

    return eng.memo("norm_zero", build)


def transform_range_dim(sys: SystemSpec, *, engine: Engine | None = None):
    """Dimension of the space of transforms of compactly supported data.

    Computed as the coefficient dimension minus the Gram-kernel dimension at
    ``lam = 0`` (the dimension does not depend on the spectral parameter).
    Also reports whether it equals the rank of the norm-zero projector.
    """
    eng = engine or Engine.get(sys)
    gram = eng.gram(0.0)
    ker = _kernel_basis(gram, sys.tols.rank_rel)
    dim_b = eng.coeff_dim - ker.shape[1]
    _, proj = norm_zero_space(sys, engine=eng)
    ran_p = int(round(float(np.real(np.trace(proj)))))
    return dim_b, dim_b == ran_p


def deficiency_projectors(sys: SystemSpec, lam: complex, *, engine: Engine | None = None):
    """Projectors onto coefficients of square-integrable solutions near the ends.

    Regular endpoints give the identity.  Singular endpoints require the span
    supplied with the endpoint data (constant or as a function of ``lam``).
    """
    n = sys.dim

    def one(ep) -> np.ndarray:
        if ep.regular:
            return np.eye(n, dtype=complex)
        span = ep.l2_span
        if span is None:
            raise ConfigError("singular endpoint needs an l2 span", field="endpoints")
        mat = np.asarray(span(lam) if callable(span) else span, dtype=complex)
        if mat.size == 0:
            return np.zeros((n, n), dtype=complex)
        mat = mat.reshape(n, -1)
        q, _ = np.linalg.qr(mat)
        return q @ q.conj().T

    return one(sys.endpoint_a), one(sys.endpoint_b)


def boundary_blocks(
    sys: SystemSpec,
    bc: BoundaryConditions,
    lam: complex,
    *,
    engine: Engine | None = None,
):
    """Endpoint blocks ``(A_minus, A_plus, script_A_minus, script_A_plus)``.

    ``A_minus = -Ga U_0^+(a) P_minus`` and ``A_plus = Gb U_N^-(b) P_plus``;
    the script variants embed them into the first/last block column of the
    stacked coefficient space.
    """
    eng = engine or Engine.get(sys)
    bc.validate(sys)
    n = sys.dim
    N = len(eng.sing.partition)
    p_minus, p_plus = deficiency_projectors(sys, lam, engine=eng)
    row = eng.row(lam)
    a, b = sys.interval

    if sys.endpoint_a.regular:
        u0a = row.fundamentals[0].right(a)
        a_minus = -bc.Ga @ u0a @ p_minus
    elif sys.endpoint_a.boundary_limit is not None:
        a_minus = -np.atleast_2d(np.asarray(sys.endpoint_a.boundary_limit(lam), dtype=complex))
    elif not np.any(p_minus):
        a_minus = np.zeros((bc.count, n), dtype=complex)  # projector annihilates
    else:
        raise ConfigError("singular endpoint a needs a boundary_limit evaluator")

    if sys.endpoint_b.regular:
        unb = row.fundamentals[-1].left(b)
        a_plus = bc.Gb @ unb @ p_plus
    elif sys.endpoint_b.boundary_limit is not None:
        a_plus = np.atleast_2d(np.asarray(sys.endpoint_b.boundary_limit(lam), dtype=complex))
    elif not np.any(p_plus):
        a_plus = np.zeros((bc.count, n), dtype=complex)  # projector annihilates
    else:
        raise ConfigError("singular endpoint b needs a boundary_limit evaluator")

    rows = a_minus.shape[0]
    script_minus = np.hstack([a_minus, np.zeros((rows, n * N), dtype=complex)])
    script_plus = np.hstack([np.zeros((rows, n * N), dtype=complex), a_plus])
    return a_minus, a_plus, script_minus, script_plus


@dataclass
class BlockAssembly:
    """All block matrices of one spectral parameter.

    ``constraints`` stacks the junction rows, the two square-integrability
    rows, the boundary rows and the norm-zero projector complement; the three
    source maps are the right-hand sides of the one-sided and averaged
    representations.  ``row_slices`` names the block rows for diagnostics.
    """

    lam: complex
    jump_defect: np.ndarray
    jump_mean: np.ndarray
    q_minus: np.ndarray
    q_plus: np.ndarray
    a_minus: np.ndarray
    a_plus: np.ndarray
    script_a_minus: np.ndarray
    script_a_plus: np.ndarray
    projector: np.ndarray
    constraints: np.ndarray
    source_left: np.ndarray
    source_right: np.ndarray
    source_mean: np.ndarray
    x_rows: list[np.ndarray] = field(default_factory=list)
    y_rows: list[np.ndarray] = field(default_factory=list)
    row_slices: dict = field(default_factory=dict)

    @property
    def coeff_dim(self) -> int:
        return self.constraints.shape[1]


def assemble_blocks(
    sys: SystemSpec,
    bc: BoundaryConditions,
    lam: complex,
    *,
    engine: Engine | None = None,
    check_rank: bool = True,
) -> BlockAssembly:
    """Build the constraint matrix and source maps at ``lam``.

    For nonreal ``lam`` away from the exceptional set the constraint matrix
    must have full column rank; a deficiency there signals either a modelling
    bug or a parameter too close to an exceptional point and raises
    :class:`TheoryViolationError` (unless ``check_rank=False``, used when the
    caller scans real parameters).
    """
    eng = engine or Engine.get(sys, bc)
    n = sys.dim
    N = len(eng.sing.partition)
    width = n * (N + 1)

    defect, mean = jump_system(sys, lam, engine=eng)
    p_minus, p_plus = deficiency_projectors(sys, lam, engine=eng)
    q_minus = np.hstack([np.eye(n) - p_minus] + [np.zeros((n, n))] * N).astype(complex)
    q_plus = np.hstack([np.zeros((n, n))] * N + [np.eye(n) - p_plus]).astype(complex)
    a_minus, a_plus, s_minus, s_plus = boundary_blocks(sys, bc, lam, engine=eng)
    _, proj = norm_zero_space(sys, engine=eng)
    comp = np.eye(width, dtype=complex) - proj

    # one-sided pieces of the junction rows
    left_part = 0.5 * (defect - mean)    # B(conj)^* U^- E_bot
    right_part = 0.5 * (defect + mean)   # B U^+ E_top

    constraints = np.vstack([defect, q_minus, q_plus, s_minus + s_plus, comp])
    zeros_bc = np.zeros_like(s_plus)
    zeros_q = np.zeros_like(q_minus)
    source_left = -np.vstack([left_part, zeros_q, q_plus, s_plus, np.zeros_like(comp)])
    source_right = np.vstack([right_part, q_minus, zeros_q, s_minus, np.zeros_like(comp)])
    source_mean = 0.5 * (source_left + source_right)

    rows = {
        "junction": (0, defect.shape[0]),
        "q_minus": (defect.shape[0], defect.shape[0] + n),
        "q_plus": (defect.shape[0] + n, defect.shape[0] + 2 * n),
        "boundary": (defect.shape[0] + 2 * n, defect.shape[0] + 2 * n + s_plus.shape[0]),
        "projector": (constraints.shape[0] - width, constraints.shape[0]),
    }

    # boundary rows must annihilate norm-zero solutions; rows that do not are
    # not induced by square-integrable solution pairs and break the theory
    bnd = s_minus + s_plus
    if bnd.size:
        resid = float(np.max(np.abs(bnd @ comp)))
        scale = max(1.0, float(np.max(np.abs(bnd))))
        if resid > 1e-8 * scale:
            raise TheoryViolationError(
                "boundary rows do not annihilate the norm-zero solution space "
                f"(residual {resid:.3e}); they cannot come from square-integrable "
                "solution pairs of the equation"
            )

    asm = BlockAssembly(
        lam=complex(lam),
        jump_defect=defect,
        jump_mean=mean,
        q_minus=q_minus,
        q_plus=q_plus,
        a_minus=a_minus,
        a_plus=a_plus,
        script_a_minus=s_minus,
        script_a_plus=s_plus,
        projector=proj,
        constraints=constraints,
        source_left=source_left,
        source_right=source_right,
        source_mean=source_mean,
        x_rows=[right_part, q_minus, zeros_q, s_minus],
        y_rows=[left_part, zeros_q, q_plus, s_plus],
        row_slices=rows,
    )

    if check_rank and lam.imag != 0.0:
        s = np.linalg.svd(constraints, compute_uv=False)
        if s.size < width or s[width - 1] <= sys.tols.rank_rel * s[0]:
            raise TheoryViolationError(
                f"constraint matrix is column-rank deficient at lambda={lam!r} "
                f"(sigma_min/sigma_max = {s[-1] / s[0]:.3e}); the parameter may "
                "sit on the exceptional set or the model is inconsistent"
            )
    return asm
