import numpy as np
import numpy.testing as npt
import pytest

from core.Base.quadrature import (
    adaptive_integrate,
    adaptive_rule,
    gauss_legendre_rule,
    integrate_piecewise,
    piecewise_nodes,
)


class TestGaussLegendre:
    """固定节点数的分段规则"""

    def test_exact_for_degree_2n_minus_1(self):
        bp = np.array([0.0, 1.0])
        npt.assert_allclose(integrate_piecewise(lambda x: x ** 5, bp, 3), 1.0 / 6.0, rtol=1e-14)

    def test_piecewise_linear_with_kink_at_breakpoint(self):
        bp = np.array([0.0, 0.3, 1.0])
        npt.assert_allclose(integrate_piecewise(lambda x: np.abs(x - 0.3), bp, 1), 0.29, rtol=1e-14)

    def test_weights_sum_to_length(self):
        _, w = piecewise_nodes(np.array([-1.0, 0.5, 2.0, 3.0]), 4)
        npt.assert_allclose(w.sum(), 4.0, rtol=1e-14)

    def test_rule_is_read_only(self):
        x, _ = gauss_legendre_rule(5)
        with pytest.raises(ValueError):
            x[0] = 0.0

    def test_zero_nodes_rejected(self):
        with pytest.raises(ValueError, match="at least one node"):
            gauss_legendre_rule(0)


class TestAdaptive:
    """自适应二分"""

    def test_sqrt_endpoint_singularity(self):
        npt.assert_allclose(adaptive_integrate(np.sqrt, np.array([0.0, 1.0])), 2.0 / 3.0, rtol=1e-8)

    def test_vector_integrand(self):
        value = adaptive_integrate(lambda x: np.stack([np.ones_like(x), x, x ** 2], axis=1), np.array([0.0, 1.0]))
        npt.assert_allclose(value, [1.0, 0.5, 1.0 / 3.0], rtol=1e-12)

    def test_returned_rule_reproduces_value(self):
        f = lambda x: np.exp(np.sin(7 * x))
        rule = adaptive_rule(f, np.array([0.0, 0.4, 1.0]))
        npt.assert_allclose(rule.weights @ f(rule.nodes), rule.value, rtol=1e-13)
        assert np.all((rule.nodes > 0.0) & (rule.nodes < 1.0))

    def test_smooth_oscillatory(self):
        value = adaptive_integrate(lambda x: np.cos(40 * x), np.array([0.0, 1.0]))
        npt.assert_allclose(value, np.sin(40.0) / 40.0, rtol=1e-9)

    @pytest.mark.parametrize("bp", [[0.0], [1.0, 0.0], [0.0, 0.5, 0.5, 1.0]])
    def test_invalid_breakpoints(self, bp):
        with pytest.raises(ValueError, match="strictly increasing"):
            adaptive_rule(np.sin, np.array(bp))
