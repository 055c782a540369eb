import numpy as np
import pytest

from cortex import gradcheck


def test_relative_error_floor():
    assert gradcheck.relative_error(0.0, 0.0) == 0.0
    assert gradcheck.relative_error(1.0, 1.0 + 1e-6) == pytest.approx(1e-6, rel=1e-3)
    # both ~0: compared against the floor, not each other
    assert gradcheck.relative_error(1e-12, -1e-12) < 1e-5


def test_numeric_gradient_of_quadratic():
    x = np.array([1.0, -2.0, 0.5])
    g = gradcheck.numeric_gradient(lambda: float((x**2).sum()), x)
    np.testing.assert_allclose(g, 2 * x, rtol=1e-8)
    assert x.tolist() == [1.0, -2.0, 0.5]


@pytest.mark.parametrize("group", gradcheck.GROUPS)
def test_groups_are_filter_independent(group):
    full = {r.name: r.max_rel_error for r in gradcheck.run_checks(2)}
    part = gradcheck.run_checks(2, group)
    assert part and all(full[r.name] == r.max_rel_error for r in part)


def test_unknown_group():
    with pytest.raises(ValueError):
        gradcheck.run_checks(1, "attention")


def test_table_lists_every_check():
    table = gradcheck.format_table(gradcheck.run_checks(1))
    for name in ("conv2d", "maxpool2d", "dense", "relu", "sigmoid", "tiny_model"):
        assert name in table
