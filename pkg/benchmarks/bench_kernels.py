"""Compare the numba loop kernels with their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

The loop versions are warmed up once first so compile time is not counted.
Without numba installed both columns time the same pure-Python/numpy code
paths and the loop column is very slow.
"""
import argparse
import timeit

import numpy as np

from resnetlab import _accel, kernels


def cases(rng):
    yield "conv1d d=256 f=2", kernels.conv1d_loop, kernels.conv1d_numpy, (rng.normal(size=256), rng.normal(size=5))
    for d in (8, 32, 128):
        yield (f"conv2d d={d} f=1", kernels.conv2d_loop, kernels.conv2d_numpy,
               (rng.normal(size=(d, d)), rng.normal(size=(3, 3))))
    for d, c in ((8, 3), (16, 4)):
        yield (f"toeplitz_fill d={d} c={c} f=1", kernels.toeplitz_fill_loop, kernels.toeplitz_fill_numpy,
               (rng.normal(size=(c, c, 3, 3)), d))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    print(f"numba available: {_accel.HAVE_NUMBA}, dispatch uses numba: {_accel.ENABLED}")
    print(f"{'case':<28}{'loop (us)':>12}{'numpy (us)':>12}{'ratio':>8}")
    rng = np.random.default_rng(0)
    for name, loop, vec, inputs in cases(rng):
        np.testing.assert_allclose(loop(*inputs), vec(*inputs), atol=1e-12)
        timings = []
        for fn in (loop, vec):
            timer = timeit.Timer(lambda fn=fn: fn(*inputs))
            number, _ = timer.autorange()
            timings.append(min(timer.repeat(args.repeat, number)) / number * 1e6)
        print(f"{name:<28}{timings[0]:>12.1f}{timings[1]:>12.1f}{timings[1] / timings[0]:>8.2f}")


if __name__ == "__main__":
    main()
