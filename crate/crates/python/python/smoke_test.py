"""Smoke test for the quadcs_py extension.

Build and install first with `maturin develop --release` in crates/python,
or copy the built cdylib next to this file as quadcs_py.so.
"""

import cmath
import json
import random
import sys

import quadcs_py as q


def main() -> int:
    op = q.Operator(b_cs=10e6, seed=3)
    m, n = op.shape
    assert (m, n) == (204, 1024), op.shape

    rng = random.Random(1)
    x = [0j] * n
    for j in rng.sample(range(n), 5):
        x[j] = cmath.rect(rng.uniform(0.2, 1.0), rng.uniform(-3.1, 3.1))
    b = op.apply(x)

    # adjointness
    y = [complex(rng.gauss(0, 1), rng.gauss(0, 1)) for _ in range(m)]
    lhs = sum(yi.conjugate() * bi for yi, bi in zip(y, b))
    rhs = sum(ai.conjugate() * xi for ai, xi in zip(op.adjoint(y), x))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    est, converged = op.solve_bp(b)
    err = sum(abs(e - t) ** 2 for e, t in zip(est, x)) ** 0.5 / sum(abs(t) ** 2 for t in x) ** 0.5
    assert converged and err < 1e-6, err

    assert q.rip_sample_bound(1, 1024, 0.5, 0.01) == 1192
    g = q.gram_max_off_diagonal("lfm")
    assert 0.010 <= g <= 0.020, g

    cfg = json.dumps({"name": "smoke", "k": [3], "b_cs": [10e6], "trials": 3, "seed": 5})
    points = json.loads(q.run_experiment(cfg))
    assert len(points) == 1 and points[0]["aggregate"]["trials"] == 3
    assert len(q.config_hash(cfg)) == 64

    try:
        q.Operator(b_cs=10e6, seed=0, waveform="square")
    except ValueError:
        pass
    else:
        raise AssertionError("bad waveform accepted")

    print(f"quadcs_py smoke test ok: M={m} N={n} BP error {err:.2e}, gram {g:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
