"""Time the compiled masked structural-equation kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--batch 256] [--d 10 50] [--repeat 20]
"""
import argparse
import timeit

import numpy as np

from causalrec._kernels import fallback

try:
    from causalrec._kernels import _masked_mlp as compiled
except ImportError:
    compiled = None


def make_inputs(B, d, L, H, seed=0):
    rng = np.random.default_rng(seed)
    hist = np.stack([rng.permutation(d)[:L] for _ in range(B)]).astype(np.int64)
    mask = (rng.random((B, d, L)) < 0.5).astype(np.float64)
    return dict(hist=hist, mask=mask, w1=rng.normal(size=(d, d, H)), b1=rng.normal(size=(d, H)),
                w2=rng.normal(size=(d, H)), b2=rng.normal(size=d), w=rng.normal(size=(d, d)),
                b=rng.normal(size=d), dz=rng.normal(size=(B, d)))


def cases(impl, a):
    _, pre = impl.mlp_forward(a["hist"], a["mask"], a["w1"], a["b1"], a["w2"], a["b2"], 0.01)
    pre = np.ascontiguousarray(pre)
    return {
        "mlp_forward": lambda: impl.mlp_forward(a["hist"], a["mask"], a["w1"], a["b1"], a["w2"],
                                                a["b2"], 0.01),
        "mlp_backward": lambda: impl.mlp_backward(a["hist"], a["mask"], a["w1"], a["w2"], pre,
                                                  a["dz"], 0.01),
        "linear_forward": lambda: impl.linear_forward(a["hist"], a["mask"], a["w"], a["b"]),
        "linear_backward": lambda: impl.linear_backward(a["hist"], a["mask"], a["w"], a["dz"]),
    }


def best_ms(fn, repeat):
    return 1e3 * min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--d", type=int, nargs="+", default=[10, 50])
    ap.add_argument("--window", type=int, default=15, help="distinct history length")
    ap.add_argument("--hidden", type=int, default=8)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':<16}{'d':>4}{'numpy ms':>11}{'cython ms':>11}{'speedup':>9}")
    for d in args.d:
        a = make_inputs(args.batch, d, min(args.window, d), args.hidden)
        fb = cases(fallback, a)
        cc = cases(compiled, a) if compiled is not None else {}
        for name, fn in fb.items():
            t_np = best_ms(fn, args.repeat)
            if name in cc:
                t_c = best_ms(cc[name], args.repeat)
                print(f"{name:<16}{d:>4}{t_np:>11.3f}{t_c:>11.3f}{t_np / t_c:>8.1f}x")
            else:
                print(f"{name:<16}{d:>4}{t_np:>11.3f}{'-':>11}{'-':>9}")


if __name__ == "__main__":
    main()
