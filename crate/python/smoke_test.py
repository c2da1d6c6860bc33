"""Smoke test for the transserial Python extension.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python3 python/smoke_test.py
"""

import json

import transserial


def main():
    eng = transserial.Engine()

    assert eng.derive("exp(x*log(x))") == "(log(x) + 1)*exp(x*log(x))"
    assert eng.ai("x^2") == "1/3*x^3"
    assert eng.ai("1/(x*log(x))") == "log^2(x)"
    assert eng.integrate("1/log(x)", terms=4) == (
        "x*log(x)^-1 + x*log(x)^-2 + 2*x*log(x)^-3 + 6*x*log(x)^-4  [truncated]"
    )
    assert eng.log("3*x^2") == "2*log(x) + log(3)"
    assert eng.compare("x", "log(x)^5") == (1, 1)

    try:
        eng.ai("@theta_hat")
    except transserial.ObstructionError as e:
        kind, message = e.args
        assert kind == "AtThetaHat", kind
        assert message == "no asymptotic integral: input ≍ θ̂", message
    else:
        raise AssertionError("ai(@theta_hat) should be obstructed")

    try:
        eng.derive("log(")
    except transserial.ExprSyntaxError:
        pass
    else:
        raise AssertionError("expected a syntax error")

    passed, reports = eng.validate("hl")
    assert passed and [r["check"] for r in json.loads(reports)] == ["HL1", "HL2_HL3", "HL4"]
    passed, _ = transserial.Engine(prelog="basic").validate("hl")
    assert not passed

    x = transserial.Monomial.phi(0)
    lx = transserial.Monomial.phi(-1)
    assert lx < x
    assert (x**2 / lx).render() == "x^2*log(x)^-1"
    assert transserial.Monomial({0: "1/2"}) == x ** "1/2"
    assert transserial.Monomial.tail_product(0, ["-1"]).leading_fundamental() == 0

    code, out, err = transserial.run(["--format", "json", "derive", "x^2"])
    assert code == 0 and err == ""
    assert json.loads(out)["result"]["text"] == "2*x"

    print("smoke test ok")


if __name__ == "__main__":
    main()
