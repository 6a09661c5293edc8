"""Smoke test of the Python bindings.

Build and install first, e.g. `maturin develop -m crates/py/Cargo.toml`.
"""

import eqodds_py as eq

# Discrete joint p[a][x][y] with P(A,Y) = (0.2, 0.4, 0.3, 0.1) and
# P(X=1|A,Y) = [[0.3, 0.8], [0.7, 0.2]].
P_AY = [[0.2, 0.4], [0.3, 0.1]]
X1 = [[0.3, 0.8], [0.7, 0.2]]
JOINT = [[[P_AY[a][y] * (X1[a][y] if x else 1 - X1[a][y]) for y in (0, 1)] for x in (0, 1)] for a in (0, 1)]


def main():
    fair = [[1, 0], [0, 1]]
    holds, gap = eq.check(JOINT, fair)
    assert holds and abs(gap) < 1e-9, (holds, gap)
    assert abs(eq.violation(JOINT, [[1.0, 0.0], [0.0, 1.0]])) < 1e-9

    found = eq.search(JOINT)
    assert [[1, 0], [0, 1]] in found

    beta0, beta1, point, loss = eq.postprocess(JOINT, [[0.0, 1.0], [0.0, 1.0]])
    assert len(beta0) == len(beta1) == 2 and 0.0 <= loss <= 1.0

    a, x, y = eq.simulate_linear(300, seed=1, noise="uniform", continuous_a=True)
    assert len(a) == len(x) == len(y) == 300
    stat, p = eq.ci_test(y, a, y, permutations=99)
    assert 0.0 < p <= 1.0

    files, summary, completed = eq.experiment("thm6-equiv", [0, 1])
    assert completed and "geometry.csv" in files, summary

    try:
        eq.experiment("nope", [0])
    except ValueError as e:
        assert "valid names" in str(e)
    else:
        raise AssertionError("unknown pipeline accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
