"""
粗糙度惩罚 J_q(g) = ∫ (g^{(q)})^2
精确惩罚 Gram 矩阵、(J_q, V) 的同时对角化以及特征值增长诊断
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular, svd
from scipy.stats import linregress

from core.Base.basis import BasisSpec, eval_basis
from core.Base.quadrature import piecewise_nodes

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PenaltyOperator:
    """P_ij = ∫ B_i^{(q)} B_j^{(q)}，root 满足 P = root^T root"""

    basis: BasisSpec
    order: int
    gram: np.ndarray = field(repr=False)
    root: np.ndarray = field(repr=False)

    def quadratic_form(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(c @ self.gram @ c)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """P φ = ρ G φ 的解，ρ 升序(0 起始编号)，phi 的第 ν 列是 φ_ν 的系数"""

    rho: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    order: int

    @property
    def size(self) -> int:
        return len(self.rho)

    def null_dim(self, rel_tol: float = 1e-8) -> int:
        if self.order >= self.size:
            return self.size
        return int(np.sum(self.rho < rel_tol * self.rho[self.order]))


def penalty_gram(basis: BasisSpec, q: int) -> PenaltyOperator:
    """
    每个节点区间用 m-q+1 个 Gauss 节点：被积函数是 2(m-q) 次多项式，积分精确
    """
    m = basis.degree
    if q < 1:
        raise ValueError(f"penalty order must be >= 1, got {q}")
    if q > m:
        raise ValueError(f"penalty order q={q} exceeds spline degree m={m}")
    x, w = piecewise_nodes(basis.breakpoints, m - q + 1)
    D = eval_basis(basis, x, deriv=q)
    root = np.sqrt(w)[:, None] * D
    P = root.T @ root
    return PenaltyOperator(basis, q, 0.5 * (P + P.T), root)


def eigen_decompose(pen: PenaltyOperator, G: np.ndarray) -> EigenSystem:
    """
    G = L L^T 白化后对 root L^{-T} 做 SVD：ρ = s^2，φ = L^{-T} V
    用奇异值而不是 L^{-1} P L^{-T} 的特征值，ρ 天然非负
    """
    N = pen.basis.dim
    if G.shape != (N, N):
        raise ValueError(f"Gram shape {G.shape} does not match basis dimension {N}")
    try:
        L = cholesky(G, lower=True)
    except LinAlgError as e:
        raise ValueError(f"Gram matrix is not positive definite: {e}") from e

    M = solve_triangular(L, pen.root.T, lower=True).T
    _, s, vh = svd(M, full_matrices=M.shape[0] < N)
    sig2 = np.zeros(N)
    sig2[: len(s)] = s ** 2
    order = np.argsort(sig2, kind="stable")
    V = vh.T[:, order]
    phi = solve_triangular(L, V, lower=True, trans="T")
    system = EigenSystem(sig2[order], phi, pen.order)
    logger.debug(f"[Penalty] 特征分解完成: N={N}, q={pen.order}, 零空间维数={system.null_dim()}")
    return system


def trace_sum(sys: EigenSystem, lam: float) -> float:
    """Σ_ν 1/(1+λρ_ν)"""
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    return float(np.sum(1.0 / (1.0 + lam * sys.rho)))


def eigen_growth_slope(
    sys: EigenSystem,
    lo: Optional[int] = None,
    hi: Optional[int] = None,
    offset: float = 0.0,
) -> float:
    """
    log ρ_ν 对 log(ν - offset) 的最小二乘斜率，ν ∈ [lo, hi]
    默认窗口去掉谱的最低 10% 和最高 20%
    """
    N = sys.size
    lo = max(math.ceil(0.1 * N), sys.order) if lo is None else lo
    hi = math.floor(0.8 * N) if hi is None else hi
    if not 0 <= lo < hi < N:
        raise ValueError(f"invalid eigen window [{lo}, {hi}] for spectrum of size {N}")
    nu = np.arange(lo, hi + 1, dtype=float)
    if np.any(nu - offset <= 0) or np.any(sys.rho[lo:hi + 1] <= 0):
        raise ValueError("eigen window must exclude the penalty null space")
    fit = linregress(np.log(nu - offset), np.log(sys.rho[lo:hi + 1]))
    return float(fit.slope)
