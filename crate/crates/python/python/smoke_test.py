"""Smoke test for the pyrkhs extension: build with `maturin develop`, then run this file."""

import math
import random

import pyrkhs


def main():
    rng = random.Random(0)
    k = pyrkhs.Kernel.gaussian(1, 1.0)
    assert abs(k([0.0], [1.0]) - math.exp(-0.5)) < 1e-12
    g = k.gram([[0.0], [1.0], [2.0]])
    assert len(g) == 3 and all(abs(g[i][i] - 1.0) < 1e-15 for i in range(3))

    xs = [[rng.gauss(0, 1)] for _ in range(200)]
    dep = [[x[0] ** 2 + 0.1 * rng.gauss(0, 1)] for x in xs]
    indep = [[rng.gauss(0, 1)] for _ in range(200)]
    assert pyrkhs.hsic(xs, dep, k, k) > pyrkhs.hsic(xs, indep, k, k)
    exact = pyrkhs.hsic(xs, dep, k, k)
    sparse, size = pyrkhs.sparse_hsic(xs, dep, k, k, 1.0)
    assert abs(sparse - exact) < 1e-8 and size == 200
    _, _, reject = pyrkhs.independence_test(xs, dep, k, k, num_perms=100, seed=1)
    assert reject

    assert abs(pyrkhs.mmd_sq(xs, xs, k)) < 1e-12
    direction, dmax = pyrkhs.deflection([0.0, 0.0], [1.0, 2.0], [[2.0, 0.0], [0.0, 4.0]])
    assert abs(dmax - 1.5) < 1e-12 and abs(direction[1] - 0.5) < 1e-12

    width = pyrkhs.Kernel.gaussian(1, 0.5)
    krls = pyrkhs.Krls(width, 0.01, [0.0], 0.0)
    for i in range(1, 300):
        x = 0.02 * i
        krls.update([x], math.sin(x))
    assert abs(krls.predict([1.0]) - math.sin(1.0)) < 0.05
    assert 0 < len(krls) < 300

    states = [[math.sin(0.3 * i)] for i in range(101)]
    obs = [[s[0] + 0.05 * rng.gauss(0, 1)] for s in states]
    kbr = pyrkhs.KbrFilter(states, obs, width, width)
    kbr.init(obs[0])
    kbr.step(obs[1])
    assert len(kbr.weights) == 100
    assert len(kbr.decode()) == 1

    summary, header, rows = pyrkhs.run_experiment("mercer-check")
    assert header[0] and len(rows) == 5, summary

    try:
        pyrkhs.Kernel.gaussian(1, -1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative bandwidth accepted")
    print("pyrkhs smoke test passed")


if __name__ == "__main__":
    main()
