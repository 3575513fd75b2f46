"""
系数上的线性约束 R c = 0
nullbasis 的列是零空间的正交基，求解器在约化坐标 c = Z z 上工作
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import null_space

from core.Base.basis import BasisSpec, eval_basis
from core.Base.quadrature import integrate_piecewise

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    rows: np.ndarray = field(repr=False)
    nullbasis: np.ndarray = field(repr=False)
    label: str = "linear"

    @classmethod
    def from_rows(cls, rows, label: str = "linear", rcond: Optional[float] = None) -> "ConstraintSpec":
        R = np.atleast_2d(np.asarray(rows, dtype=float))
        Z = null_space(R, rcond=rcond)
        rank = R.shape[1] - Z.shape[1]
        if rank < R.shape[0]:
            logger.debug(f"[Constraints] {label}: {R.shape[0]} 行约束秩为 {rank}")
        return cls(R, Z, label)

    @property
    def reduced_dim(self) -> int:
        return self.nullbasis.shape[1]

    def reduce(self, coeffs) -> np.ndarray:
        """把完整系数投影到约化坐标 z = Z^T c"""
        return self.nullbasis.T @ np.asarray(coeffs, dtype=float)

    def expand(self, reduced) -> np.ndarray:
        return self.nullbasis @ np.asarray(reduced, dtype=float)

    def violation(self, coeffs) -> float:
        return float(np.abs(self.rows @ np.asarray(coeffs, dtype=float)).max())


def basis_integrals(basis: BasisSpec) -> np.ndarray:
    """r_j = ∫ B_j，m 次多项式用 ceil((m+1)/2) 个节点精确积分"""
    n_nodes = max(1, math.ceil((basis.degree + 1) / 2))
    return integrate_piecewise(lambda x: eval_basis(basis, x), basis.breakpoints, n_nodes)


def zero_integral_constraint(basis: BasisSpec) -> ConstraintSpec:
    """{g : ∫ g = 0}"""
    return ConstraintSpec.from_rows(basis_integrals(basis)[None, :], label="zero_integral")


def spectral_boundary_constraints(basis: BasisSpec) -> ConstraintSpec:
    """g'(0) = g'''(0) = g'(π) = g'''(π) = 0，在两端点对 1、3 阶导数取值"""
    if basis.degree < 3:
        raise ValueError(f"spectral boundary constraints need degree m >= 3, got {basis.degree}")
    lo, hi = basis.domain
    rows = [eval_basis(basis, x, deriv=r) for x in (lo, hi) for r in (1, 3)]
    return ConstraintSpec.from_rows(np.vstack(rows), label="spectral_boundary")
