import math

import numpy as np
import pytest

from kbonestep import InputError, parse_sexpr, to_sexpr
from kbonestep.expr import Const, Exp, Param, Prod, Time


def test_parse_and_eval():
    e = parse_sexpr(["*", "theta", ["exp", "t"]])
    assert e(2.0, 1.0) == pytest.approx(2.0 * math.e)


def test_eval_broadcasts_over_time_array():
    e = parse_sexpr(["+", "theta", ["*", 2.0, "t"]])
    t = np.array([0.0, 0.5, 1.0])
    np.testing.assert_allclose(e(1.5, t), [1.5, 2.5, 3.5])


def test_constant_broadcasts_to_array_shape():
    e = parse_sexpr(3.0)
    out = e(1.0, np.zeros(4))
    assert np.shape(out) == (4,)
    assert e(1.0, 0.0) == 3.0


def test_theta_derivative_product_rule():
    # theta^2 * t -> 2 theta t
    e = parse_sexpr(["*", "theta", "theta", "t"])
    d = e.d_theta()
    for th, t in [(0.7, 0.3), (1.5, 2.0)]:
        assert d(th, t) == pytest.approx(2.0 * th * t)


def test_time_derivative_chain_rule():
    e = parse_sexpr(["exp", ["*", 2.0, "t"]])
    d = e.d_t()
    assert d(0.0, 0.5) == pytest.approx(2.0 * math.exp(1.0))


def test_pow_derivative():
    e = parse_sexpr(["pow", "theta", 3])
    assert e.d_theta()(2.0, 0.0) == pytest.approx(12.0)


def test_roundtrip_serialization():
    src = ["+", "theta", ["*", 2.0, ["exp", "t"]]]
    e = parse_sexpr(src)
    again = parse_sexpr(to_sexpr(e))
    for th, t in [(0.5, 0.0), (1.2, 0.9)]:
        assert e(th, t) == again(th, t)


def test_depends_on_theta_flag():
    assert parse_sexpr("theta").depends_on_theta
    assert not parse_sexpr(["*", 2.0, "t"]).depends_on_theta


def test_constant_folding_annihilates_zero_products():
    prod = Prod((Const(0.0), Param())).d_theta()  # stays well-formed
    e = Const(0.0) * Exp(Time())
    assert isinstance(e, Const) and e.value == 0.0
    assert prod(1.0, 0.0) == 0.0


def test_nodes_are_hashable():
    assert hash(parse_sexpr(["*", "theta", "t"])) == hash(parse_sexpr(["*", "theta", "t"]))


@pytest.mark.parametrize("bad", [
    "x", [], ["+"], ["*"], ["exp", "t", "t"], ["pow", "t", "theta"],
    ["frob", 1], None,
])
def test_malformed_expressions_rejected(bad):
    with pytest.raises(InputError):
        parse_sexpr(bad)


def test_nonfinite_constant_rejected():
    with pytest.raises(InputError):
        Const(float("inf"))
