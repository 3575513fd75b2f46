"""
分段 Gauss–Legendre 积分
节点按节点区间(knot interval)放置：分段多项式被积函数用固定节点数精确积分，
非多项式被积函数用逐级二分的自适应规则。
"""

import logging
from functools import lru_cache
from typing import Callable, NamedTuple, Tuple

import numpy as np

logger = logging.getLogger(__name__)

MAX_DEPTH = 12
DEFAULT_RTOL = 1e-10
DEFAULT_NODES = 10

# 被积函数: 输入 (M,) 的点，返回 (M,) 或 (M, K)
Integrand = Callable[[np.ndarray], np.ndarray]


class AdaptiveRule(NamedTuple):
    value: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=64)
def gauss_legendre_rule(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """[-1, 1] 上的 n 点 Gauss–Legendre 节点和权重，对 2n-1 次多项式精确"""
    if n < 1:
        raise ValueError(f"Gauss–Legendre rule needs at least one node, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def piecewise_nodes(breakpoints: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """把 n 点规则映射到每个区间 [breakpoints[j], breakpoints[j+1]]，返回展平的节点和权重"""
    bp = np.asarray(breakpoints, dtype=float)
    t, wt = gauss_legendre_rule(n)
    half = 0.5 * np.diff(bp)
    mid = 0.5 * (bp[:-1] + bp[1:])
    x = mid[:, None] + half[:, None] * t[None, :]
    w = half[:, None] * wt[None, :]
    return x.ravel(), w.ravel()


def integrate_piecewise(func: Integrand, breakpoints: np.ndarray, n: int) -> np.ndarray:
    """固定节点数的分段积分；被积函数在每段上是不超过 2n-1 次的多项式时结果精确"""
    x, w = piecewise_nodes(breakpoints, n)
    return np.tensordot(w, func(x), axes=(0, 0))


def _cell_integrals(func: Integrand, lo: np.ndarray, hi: np.ndarray, n: int):
    # 一次性计算整段与左右两半的积分，三组节点合并求值
    t, wt = gauss_legendre_rule(n)
    mid = 0.5 * (lo + hi)
    lows = np.concatenate([lo, lo, mid])
    highs = np.concatenate([hi, mid, hi])
    half = 0.5 * (highs - lows)
    pts = 0.5 * (lows + highs)[:, None] + half[:, None] * t[None, :]
    wts = half[:, None] * wt[None, :]
    vals = np.asarray(func(pts.ravel()), dtype=float)
    trail = vals.shape[1:]
    vals = vals.reshape((len(lows), n) + trail)
    integrals = np.einsum("cn,cn...->c...", wts, vals)
    abs_integrals = np.einsum("cn,cn...->c...", wts, np.abs(vals))
    c = len(lo)
    whole = integrals[:c]
    split = integrals[c:2 * c] + integrals[2 * c:]
    resabs = abs_integrals[c:2 * c] + abs_integrals[2 * c:]
    # 两半的节点/权重，接受该区间时返回
    split_pts = np.concatenate([pts[c:2 * c], pts[2 * c:]], axis=1)
    split_wts = np.concatenate([wts[c:2 * c], wts[2 * c:]], axis=1)
    return whole, split, resabs, split_pts, split_wts


def _cell_norm(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return np.abs(values)
    return np.abs(values.reshape(values.shape[0], -1)).max(axis=1)


def adaptive_rule(
    func: Integrand,
    breakpoints: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    atol: float = 0.0,
    n_nodes: int = DEFAULT_NODES,
    max_depth: int = MAX_DEPTH,
) -> AdaptiveRule:
    """
    逐区间自适应积分：比较整段与两半的 Gauss–Legendre 结果，未达标的区间继续二分，
    最多 max_depth 层。返回积分值以及最终划分上的节点和权重，
    调用方可以在同一组节点上计算其它矩(例如对数密度的梯度和 Hessian)。
    """
    bp = np.asarray(breakpoints, dtype=float)
    if bp.ndim != 1 or len(bp) < 2 or np.any(np.diff(bp) <= 0):
        raise ValueError("breakpoints must be a strictly increasing array of length >= 2")
    length = bp[-1] - bp[0]
    lo, hi = bp[:-1].copy(), bp[1:].copy()

    total = None
    nodes, weights = [], []
    eps = np.finfo(float).eps
    for depth in range(max_depth + 1):
        whole, split, resabs, pts, wts = _cell_integrals(func, lo, hi, n_nodes)
        err = _cell_norm(whole - split)
        scale = _cell_norm(split)
        floor = np.maximum(atol * (hi - lo) / length, 50.0 * eps * _cell_norm(resabs))
        done = (err <= np.maximum(rtol * scale, floor)) | (depth == max_depth)
        if depth == max_depth and not np.all(err <= np.maximum(rtol * scale, floor)):
            logger.debug(f"[Quadrature] 达到最大深度 {max_depth}，{np.sum(~done)} 个区间未收敛")

        part = split[done].sum(axis=0)
        total = part if total is None else total + part
        nodes.append(pts[done].ravel())
        weights.append(wts[done].ravel())

        if np.all(done):
            break
        keep = ~done
        mid = 0.5 * (lo[keep] + hi[keep])
        lo, hi = np.concatenate([lo[keep], mid]), np.concatenate([mid, hi[keep]])

    return AdaptiveRule(np.asarray(total), np.concatenate(nodes), np.concatenate(weights))


def adaptive_integrate(
    func: Integrand,
    breakpoints: np.ndarray,
    rtol: float = DEFAULT_RTOL,
    atol: float = 0.0,
    n_nodes: int = DEFAULT_NODES,
    max_depth: int = MAX_DEPTH,
):
    """adaptive_rule 的简写，只返回积分值(标量被积函数返回 float)"""
    value = adaptive_rule(func, breakpoints, rtol, atol, n_nodes, max_depth).value
    return float(value) if np.ndim(value) == 0 else value
