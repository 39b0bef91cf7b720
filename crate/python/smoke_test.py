"""Smoke test for the compiled extension.

Build first with `cargo build -p spectral-crossed-py --release` (or without
--release); the script loads the newest shared library from target/.
"""

import importlib.util
import json
import math
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    built = [ROOT / "target" / p / "libspectral_crossed_py.so" for p in ("release", "debug")]
    built = [lib for lib in built if lib.exists()]
    if not built:
        sys.exit("extension not built: run cargo build -p spectral-crossed-py")
    lib = max(built, key=lambda p: p.stat().st_mtime)
    spec = importlib.util.spec_from_file_location("spectral_crossed_py", lib)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def close(a, b, tol):
    return abs(a - b) <= tol * max(1.0, abs(b))


def main():
    sc = load()

    t = sc.SpectralTriple.two_point(2.0)
    assert t.parity == "odd" and t.hilbert_dim == 2
    assert close(sc.connes_distance(t, [1, 0], [0, 1]), 0.5, 1e-6)

    a = sc.SpectralTriple.two_point(3.0)
    b = sc.SpectralTriple.two_point(4.0)
    spec = sc.tensor_even(a, b).spectrum()
    assert close(max(spec), 5.0, 1e-10) and close(min(spec), -5.0, 1e-10)

    ci = sc.SpectralTriple.odometer([2, 3], 2)
    assert ci.nondegenerate() and ci.algebra_dim == 6
    action = sc.Action.odometer([2, 3], 2)
    assert sc.isometry_defect(ci, action) < 1e-9
    assert close(sc.equicont_constant(ci, action, restarts=4), 1.0, 1e-6)

    ct = sc.CrossedTriple.even(ci, action, radius=6)
    assert ct.triple.parity == "even"
    x = [([0], [1, 0, 0, 0, 0, 0]), ([1], [0, 0.5j, 0, 0, 0, 0])]
    norms = ct.seminorms(x)
    assert max(norms["horizontal"], norms["vertical"]) <= norms["full"] + 1e-10
    assert norms["full"] <= norms["horizontal"] + norms["vertical"] + 1e-10
    assert ct.cutdown_residual(x, 0) > ct.cutdown_residual(x, 1) - 1e-12

    classes, index = sc.chain_partition([2, 2, 2], 3, 0.3)
    assert index == len(classes)

    d = [[0, 1, 2], [1, 0, 1], [2, 1, 0]]
    assert close(sc.wasserstein(d, [1, 0, 0], [0, 0, 1]), 2.0, 1e-12)
    assert math.isclose(sc.opnorm([[0, 1], [1, 0]]), 1.0)

    try:
        sc.SpectralTriple.odometer([2], 5)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid level accepted")

    config = (ROOT / "configs" / "subodometer.json").read_text()
    report = json.loads(sc.run_scenario(config, seed=5))
    assert report["seed"] == 5 and not report["failures"]

    print("python smoke test: ok")


if __name__ == "__main__":
    main()
