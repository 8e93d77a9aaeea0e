"""The Weyl matrix and its Nevanlinna diagnostics.

The block construction yields, for every nonreal spectral parameter away from
the exceptional set, a rectangular constraint matrix ``F`` of full column rank
and source maps ``H_left/H_right/H``.  The Weyl matrix is

    ``M(lam) = P F(lam)^+ H(lam) Jb^-1 P``

with ``P`` the projector off norm-zero solutions, ``Jb`` the block-diagonal
structure matrix and ``^+`` the Moore-Penrose left inverse (any left inverse
would do on the relevant range; Moore-Penrose keeps results deterministic).
``M`` is symmetric, Herglotz and analytic whenever the symmetry witness
vanishes, which covers all regular problems; when the witness is not small the
sample is flagged so downstream spectral data can be marked unverified.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_blocks
from .engine import Engine
from .system import BoundaryConditions, SystemSpec

#: witness norms above this mark a sample as unverified
WITNESS_TOL = 1e-8


@dataclass
class WeylSample:
    """Weyl matrices at one spectral parameter plus quality diagnostics."""

    lam: complex
    m: np.ndarray
    m_left: np.ndarray
    m_right: np.ndarray
    witness_norm: float
    constraint_cond: float
    verified: bool

    @property
    def imag_part(self) -> np.ndarray:
        return (self.m - self.m.conj().T) / 2j


def _pinv(mat: np.ndarray, rel: float) -> np.ndarray:
    u, s, vh = np.linalg.svd(mat, full_matrices=False)
    cutoff = rel * (s[0] if s.size else 0.0)
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    return vh.conj().T @ (inv[:, None] * u.conj().T)


def symmetry_witness(
    sys: SystemSpec,
    bc: BoundaryConditions,
    lam: complex,
    *,
    engine: Engine | None = None,
) -> tuple[np.ndarray, float, dict]:
    """The matrix certifying ``M(lam) = M(conj lam)^*`` when it vanishes.

    Returns the witness, its Frobenius norm and a per-block norm table built
    from the one-sided row decomposition (junction, q_minus, q_plus, boundary
    labels 1..4; the projector block row is identically zero).
    """
    eng = engine or Engine.get(sys, bc)
    asm = assemble_blocks(sys, bc, lam, engine=eng, check_rank=False)
    asm_c = assemble_blocks(sys, bc, np.conj(lam), engine=eng, check_rank=False)
    Jinv = eng.J_blocks_inv
    P = asm.projector
    omega = (
        asm.source_mean @ Jinv @ P @ asm_c.constraints.conj().T
        + asm.constraints @ P @ Jinv @ asm_c.source_mean.conj().T
    )
    blocks = {}
    labels = ["junction", "q_minus", "q_plus", "boundary"]
    for i, (xi, yi) in enumerate(zip(asm.x_rows, asm.y_rows)):
        for k, (xk, yk) in enumerate(zip(asm_c.x_rows, asm_c.y_rows)):
            if xi.shape[0] == 0 or xk.shape[0] == 0:
                blocks[(labels[i], labels[k])] = 0.0
                continue
            blk = xi @ Jinv @ xk.conj().T - yi @ Jinv @ yk.conj().T
            blocks[(labels[i], labels[k])] = float(np.linalg.norm(blk))
    return omega, float(np.linalg.norm(omega)), blocks


def m_function(
    sys: SystemSpec,
    bc: BoundaryConditions,
    lam: complex,
    *,
    engine: Engine | None = None,
    with_witness: bool = True,
) -> WeylSample:
    """Weyl matrices ``(M_left, M_right, M)`` at a nonreal parameter."""
    eng = engine or Engine.get(sys, bc)
    lam = complex(lam)
    key = ("weyl", lam, with_witness)

    def build() -> WeylSample:
        asm = assemble_blocks(sys, bc, lam, engine=eng)
        F = asm.constraints
        P = asm.projector
        Jinv = eng.J_blocks_inv
        Fd = _pinv(F, sys.tols.pinv_rel)
        s = np.linalg.svd(F, compute_uv=False)
        cond = float(s[0] / s[-1]) if s.size and s[-1] > 0 else np.inf
        m_left = P @ Fd @ asm.source_left @ Jinv @ P
        m_right = P @ Fd @ asm.source_right @ Jinv @ P
        m = 0.5 * (m_left + m_right)
        wnorm = 0.0
        verified = True
        if with_witness:
            _, wnorm, _ = symmetry_witness(sys, bc, lam, engine=eng)
            scale = max(1.0, float(np.linalg.norm(F)))
            verified = wnorm <= WITNESS_TOL * scale
            if not verified:
                warnings.warn(
                    f"symmetry witness norm {wnorm:.3e} at lambda={lam!r}; "
                    "spectral data derived from this sample is unverified",
                    stacklevel=2,
                )
        return WeylSample(
            lam=lam,
            m=m,
            m_left=m_left,
            m_right=m_right,
            witness_norm=wnorm,
            constraint_cond=cond,
            verified=verified,
        )

    return eng.memo(key, build)


@dataclass
class DiagnosticsRow:
    lam: complex
    symmetry_residual: float
    min_imag_eig: float
    witness_norm: float
    analyticity_residual: float


@dataclass
class NevanlinnaReport:
    rows: list[DiagnosticsRow] = field(default_factory=list)

    @property
    def max_symmetry(self) -> float:
        return max((r.symmetry_residual for r in self.rows), default=0.0)

    @property
    def min_imag_eig(self) -> float:
        return min((r.min_imag_eig for r in self.rows), default=0.0)

    @property
    def max_witness(self) -> float:
        return max((r.witness_norm for r in self.rows), default=0.0)

    @property
    def max_analyticity(self) -> float:
        return max((r.analyticity_residual for r in self.rows), default=0.0)


def nevanlinna_diagnostics(
    sys: SystemSpec,
    bc: BoundaryConditions,
    grid,
    *,
    engine: Engine | None = None,
    analyticity_probe: bool = True,
) -> NevanlinnaReport:
    """Check the Nevanlinna properties of the Weyl matrix over a grid.

    Per sample: the symmetry residual ``|M(lam) - M(conj lam)^*|``, the
    smallest eigenvalue of the imaginary part (sign-flipped into the upper
    half-plane), the witness norm, and a Cauchy-Riemann probe comparing
    difference quotients along the real and imaginary directions at two step
    sizes.
    """
    eng = engine or Engine.get(sys, bc)
    report = NevanlinnaReport()
    for lam in grid:
        lam = complex(lam)
        sample = m_function(sys, bc, lam, engine=eng)
        sample_c = m_function(sys, bc, np.conj(lam), engine=eng, with_witness=False)
        sym = float(np.max(np.abs(sample.m - sample_c.m.conj().T)))
        im = sample.imag_part if lam.imag > 0 else -sample.imag_part
        min_eig = float(np.min(np.linalg.eigvalsh(im)))
        cr = 0.0
        if analyticity_probe:
            cr = _cauchy_riemann_residual(sys, bc, lam, eng)
        report.rows.append(
            DiagnosticsRow(
                lam=lam,
                symmetry_residual=sym,
                min_imag_eig=min_eig,
                witness_norm=sample.witness_norm,
                analyticity_residual=cr,
            )
        )
    return report


def _cauchy_riemann_residual(sys, bc, lam, eng) -> float:
    def M(z: complex) -> np.ndarray:
        return m_function(sys, bc, z, engine=eng, with_witness=False).m

    worst = 0.0
    derivs = []
    for h in (1e-4, 1e-5):
        dx = (M(lam + h) - M(lam - h)) / (2 * h)
        dy = (M(lam + 1j * h) - M(lam - 1j * h)) / (2j * h)
        scale = max(1.0, float(np.max(np.abs(dx))))
        worst = max(worst, float(np.max(np.abs(dx - dy))) / scale)
        derivs.append(dx)
    step_gap = float(np.max(np.abs(derivs[0] - derivs[1]))) / max(
        1.0, float(np.max(np.abs(derivs[1])))
    )
    return max(worst, 0.0 if step_gap < 1e-2 else step_gap)
