"""Smoke test for the Python extension.

Imports an installed ``fracseg`` module if present, otherwise loads the
cdylib built by ``cargo build --release -p fracseg-py``.
"""

import importlib.machinery
import importlib.util
import json
import pathlib
import sys

import numpy as np


def load():
    try:
        import fracseg

        return fracseg
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent / "target"
    for profile in ("release", "debug"):
        for name in ("libfracseg.so", "libfracseg.dylib", "fracseg.dll"):
            path = root / profile / name
            if path.exists():
                loader = importlib.machinery.ExtensionFileLoader("fracseg", str(path))
                spec = importlib.util.spec_from_file_location("fracseg", path, loader=loader)
                module = importlib.util.module_from_spec(spec)
                loader.exec_module(module)
                return module
    sys.exit("fracseg extension not found; run: cargo build --release -p fracseg-py")


def main():
    fs = load()

    assert abs(fs.lambda1(0.75) - 0.1875) < 1e-15

    lam, nodes, vecs = fs.mixed_eigen(0.75, 3, 512)
    assert abs(lam[0] - 0.1875) < 1e-6, lam
    assert vecs.shape == (3, nodes.size)

    x = np.linspace(-4.0, 4.0, 9)
    p = fs.poisson_kernel(0.5, x, 1.0)
    assert np.all(p > 0) and np.allclose(p, p[::-1])

    t, phi, phi0 = fs.solve_phi(0.5, 12.0)
    assert t.size == phi.size and np.isfinite(phi0)

    sol = fs.solve_profile(0.5, t_min=-4.0, t_max=6.0, n_t=96, n_theta=16)
    assert sol["u"].shape == (sol["t"].size, sol["theta"].size)
    assert np.all(sol["u"] >= -1e-12) and np.all(sol["v"] >= -1e-12)
    report = json.loads(sol["report"])
    assert report["final_residual"] < 1e-8, report["final_residual"]

    try:
        fs.lambda1(1.2)
    except ValueError:
        pass
    else:
        raise AssertionError("s = 1.2 accepted")

    result = json.loads(fs.run_criterion(8, 0.5, "coarse"))
    print(f"criterion 8: pass={result['pass']}")
    print("smoke test ok")


if __name__ == "__main__":
    main()
