import numpy as np
import pytest

from bdwalk.errors import ValidationError
from bdwalk.expr import compile_expression


def test_basic_arithmetic():
    fn = compile_expression("(i + 1) ** 2")
    assert fn(3) == 16
    np.testing.assert_array_equal(fn(np.array([0, 1, 2])), [1, 4, 9])


def test_functions():
    fn = compile_expression("0.5 + 0.25 / max(i, 1)")
    assert fn(0) == 0.75
    assert fn(5) == 0.55
    fn2 = compile_expression("exp(-log(i + 1))")
    assert fn2(np.array([0, 9]))[1] == pytest.approx(0.1)
    assert compile_expression("pow(u, -2.0)", "u")(2.0) == 0.25
    assert compile_expression("min(i, 3)")(np.array([1, 7]))[1] == 3


@pytest.mark.parametrize(
    "bad",
    [
        "__import__('os')",
        "i.__class__",
        "[1, 2]",
        "lambda x: x",
        "j + 1",
        "sin(i)",
        "i if i else 0",
        "i % 2",
        "",
        "1 +",
        "min(i, k=1)",
    ],
)
def test_rejects_non_whitelisted(bad):
    with pytest.raises(ValidationError):
        compile_expression(bad)


def test_variable_name_respected():
    fn = compile_expression("u * 2", "u")
    assert fn(4) == 8
    with pytest.raises(ValidationError):
        compile_expression("i * 2", "u")
