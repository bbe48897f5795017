"""Smoke test for the depthflow Python bindings.

Uses an installed `depthflow_py` module if there is one (e.g. after
`maturin develop -m crates/py/Cargo.toml`); otherwise loads the shared
library left by `cargo build -p depthflow-py` in target/.
"""

import importlib.util
import math
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load():
    try:
        import depthflow_py

        return depthflow_py
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libdepthflow_py.so"
        if lib.exists():
            tmp = pathlib.Path(tempfile.mkdtemp())
            dst = tmp / "depthflow_py.so"
            shutil.copy(lib, dst)
            spec = importlib.util.spec_from_file_location("depthflow_py", dst)
            mod = importlib.util.module_from_spec(spec)
            spec.loader.exec_module(mod)
            return mod
    sys.exit("depthflow_py not found: run `cargo build -p depthflow-py` first")


def main():
    df = load()

    assert df.eoc_solve("relu", 0.0) == 2.0
    assert abs(df.eoc_solve("tanh", 0.05) - 1.7609546396067395) < 1e-8

    m = df.Model(depth=64, width=16)
    print(m)
    nets = m.forward([0.0, 1.0], n_draws=2000, seed=1)
    sdes = m.sde([0.0, 1.0], n_draws=2000, seed=2)
    assert len(nets) == 2000 and len(nets[0]) == 2
    assert nets == m.forward([0.0, 1.0], n_draws=2000, seed=1)
    for i in range(2):
        stat, threshold = df.ks_two_sample([d[i] for d in nets], [d[i] for d in sdes])
        print(f"input {i}: KS {stat:.4f} (threshold {threshold:.4f})")
        assert stat < threshold

    # tanh with identity inner activation: zero drift, linear growth holds
    assert all(abs(v) < 1e-15 for v in m.drift([0.3] * 16))
    assert m.linear_growth()[0]
    swish = df.Model(depth=8, width=4, phi="swish")
    assert not swish.linear_growth()[0]

    try:
        df.Model(depth=0, width=4)
    except ValueError as e:
        assert "[config]" in str(e)
    else:
        raise AssertionError("depth 0 accepted")

    with tempfile.TemporaryDirectory() as out:
        cfg = "[model]\ndepth = 8\nwidth = 8\n[draws]\nn_draws = 200\n"
        s = df.run_experiment("corr-heatmap", cfg, out, seed=3)
        rho = float(s["corr_first_last"])
        assert math.isfinite(rho) and -1.0 <= rho <= 1.0
        assert (pathlib.Path(out) / "corr.svg").exists()

    print("python smoke test passed")


if __name__ == "__main__":
    main()
