"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats 20]

Verifies agreement before timing, then prints per-kernel timings and one
end-to-end optimizer-step comparison under both backends.
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    from ggnscore import _kernels_py as kp

    try:
        from ggnscore import _kernels as kc
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    A = rng.standard_normal((500, 500)) * 4
    theta = rng.standard_normal(500 * 21)
    coef = rng.standard_normal((500, 500))
    X = rng.standard_normal((500, 20))

    cases = [
        ("silu (500x500)", lambda k: k.silu(A)),
        ("silu_prime (500x500)", lambda k: k.silu_prime(A)),
        ("relu (500x500)", lambda k: k.relu(A)),
        ("pseudo_huber_all (p=10500)", lambda k: k.pseudo_huber_all(theta, 22.36)),
        ("rowwise_outer (500x500 x 500x20)", lambda k: k.rowwise_outer(coef, X)),
    ]
    print(f"{'kernel':36} {'cython':>10} {'numpy':>10} {'speedup':>8}")
    for name, fn in cases:
        ref_c, ref_p = fn(kc), fn(kp)
        if isinstance(ref_c, tuple):
            assert all(np.allclose(a, b, rtol=1e-12) for a, b in zip(ref_c, ref_p))
        else:
            assert np.allclose(ref_c, ref_p, rtol=1e-12)
        tc = best_of(lambda: fn(kc), repeats)
        tp = best_of(lambda: fn(kp), repeats)
        print(f"{name:36} {tc * 1e3:9.2f}ms {tp * 1e3:9.2f}ms {tp / tc:7.2f}x")


def bench_training_step(repeats):
    """One full optimizer step per backend (dominated by BLAS either way)."""
    script = (
        "import time, math, numpy as np\n"
        "from ggnscore import backend\n"
        "from ggnscore import data as D, regularizer as R\n"
        "from ggnscore.model import NetworkConfig, NetworkParams\n"
        "from ggnscore.optimizer import single_step\n"
        "rng = np.random.default_rng(0)\n"
        "teacher = D.make_teacher(5, 20, 'silu', rng)\n"
        "ds = D.gen_teacher_student(teacher, 500, 0, rng)\n"
        "cfg = NetworkConfig.standard(n0=20, n=500)\n"
        "prm = NetworkParams.init_gaussian(cfg, rng)\n"
        "reg = R.GscRegularizer(tau=1e-4, mu=math.sqrt(500), p=cfg.p)\n"
        "single_step(cfg, prm, ds.X_train, ds.y_train, reg)\n"
        "best = float('inf')\n"
        f"for _ in range({repeats}):\n"
        "    t0 = time.perf_counter()\n"
        "    single_step(cfg, prm, ds.X_train, ds.y_train, reg)\n"
        "    best = min(best, time.perf_counter() - t0)\n"
        "print(f'{backend.BACKEND}: {best * 1e3:.1f}ms per step')\n"
    )
    for forced in ("cython", "python"):
        env = dict(os.environ, GGNSCORE_BACKEND=forced)
        out = subprocess.run([sys.executable, "-c", script], env=env,
                             capture_output=True, text=True)
        print("  " + (out.stdout.strip() or out.stderr.strip()))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    bench_kernels(args.repeats)
    print("\nfull optimizer step (m=500, n=500, p=10500):")
    bench_training_step(max(3, args.repeats // 4))


if __name__ == "__main__":
    main()
