"""Smoke test for the compiled extension.

Build and install first, e.g.

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pointsaga-*.whl
"""

import json
import math
import os
import sys

import pointsaga

HERE = os.path.dirname(os.path.abspath(__file__))
MUSHROOMS = os.path.join(HERE, "..", "crates", "core", "tests", "data", "mushrooms.txt.gz")


def main():
    # logistic prox at a=0, y=1, gamma'=1 solves c = 1/(1+e^c)
    c, nu, _ = pointsaga.prox("logistic", 0.0, 1.0, 1.0)
    assert abs(c - 1.0 / (1.0 + math.exp(c))) < 1e-10, c

    assert abs(pointsaga.step_size(1, 4.0, 1.0) - 0.5) < 1e-15

    ds = pointsaga.Dataset.from_rows([[1.0, 0.5], [0.0, -1.0], [0.3, 0.2]], [1.0, -0.5, 0.2])
    ridge = pointsaga.Problem(ds, "squared", 0.1)
    ref = ridge.reference()
    out = pointsaga.run(ridge, 200, seed=3)
    gap = ridge.objective(out["x"]) - ref["fstar"]
    assert 0 <= gap < 1e-12, gap

    solver = pointsaga.PointSaga(ridge, seed=3)
    objs = solver.run_epochs(200)
    assert objs[-1] == ridge.objective(solver.x)
    assert solver.steps == 600

    data = pointsaga.Dataset.load(MUSHROOMS)
    assert (data.n, data.dim) == (8124, 126), repr(data)
    prob = pointsaga.Problem(data.subsample(0.05, 0), "logistic", 1e-4)
    ps = pointsaga.run(prob, 5)
    sg = pointsaga.saga(prob, 0.25, 5)
    pg = pointsaga.pegasos(prob, 5)
    print("5 epochs, 5% mushrooms:", ps["objectives"][-1], sg["objectives"][-1], pg["objectives"][-1])
    assert ps["objectives"][-1] < pg["objectives"][-1]

    rows, meta = pointsaga.run_experiments(json.dumps({
        "data": MUSHROOMS, "methods": ["point-saga", "saga"], "epochs": 20,
        "step": {"kind": "grid", "lo": -4, "hi": 2}, "fstar_epochs": 50,
    }))
    assert len(rows) == 2 * 3 * 20
    assert json.loads(meta)["mu"] == 1e-4

    failed = [r["name"] for r in pointsaga.check(quick=True) if not r["passed"]]
    assert not failed, failed

    try:
        pointsaga.Problem(ds, "cubic", 0.1)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown loss accepted")

    print("python smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
