"""Smoke test for the compiled `chc` extension.

Build and run from the workspace root:

    cargo build --release -p chc-py
    cp target/release/libchc.so crates/py/python/chc.so
    python3 crates/py/python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import chc  # noqa: E402


def main():
    x = chc.SpectralField([0.3, 0.1, -0.05])
    assert x.modes == 2 and x.mean == 0.3
    grid = x.synthesize(8)
    assert len(grid) == 8
    assert abs(sum(grid) / 8 - 0.3) < 1e-14

    spec = chc.PotentialSpec(1.0, 3)
    for v in (-0.5, 0.1, 0.9):
        bound = 2 * abs(v) ** 9 / (9 * (1 - v * v))
        assert abs(spec.f_n(v) - spec.f(v)) <= bound + 1e-15
    try:
        spec.f(1.5)
    except ValueError:
        pass
    else:
        raise AssertionError("f outside (-1, 1) must raise")

    cfg = chc.SolverConfig(8, 32, 1e-4, 0.01, spec, mean=0.3)
    assert cfg.steps() == 100
    start = chc.SpectralField.sample_mu(0.3, 8, seed=1)
    out, diag = chc.simulate(start, cfg, seed=7)
    again, _ = chc.simulate(start, cfg, seed=7)
    assert out.coeffs == again.coeffs
    assert out.mean == 0.3 and diag["mean_drift"] <= 1e-12
    assert diag["steps_completed"] == 100

    try:
        chc.SolverConfig(16, 16, 1e-4, 1.0, spec)
    except ValueError as e:
        assert "P >= 2*(M+1)" in str(e)
    else:
        raise AssertionError("undersized grid must raise")

    big = chc.SpectralField([0.0, 1.5])
    wild = chc.SolverConfig(8, 32, 1e-2, 1.0, chc.PotentialSpec(0.0, 20))
    try:
        chc.simulate(chc.SpectralField(big.coeffs + [0.0] * 7), wild, seed=1)
    except chc.NumericalBlowupError:
        pass
    else:
        raise AssertionError("expected a blowup")

    # n = 0 makes the Gibbs weight Gaussian: mode variance 1/(a + 2 - lambda)
    est = chc.sample_measure("nu_n", 0.0, 8, 32, chc.PotentialSpec(0.0, 0), 50_000, 3, ["norm2", "one"])
    exact = sum(1.0 / ((i * math.pi) ** 2 * ((i * math.pi) ** 2 + 2.0)) for i in range(1, 9))
    value, se = est["norm2"]
    assert abs(value - exact) < 4 * se, (value, se, exact)
    assert est["one"][0] == 1.0

    rows = chc.weak_convergence(0.0, 8, 32, 0.0, [1, 2], ["exceedance"], 5000, 4)
    assert [r[0] for r in rows] == ["1", "2", "limit"]
    assert rows[-1][2] == 0.0

    print("chc smoke test passed")


if __name__ == "__main__":
    main()
