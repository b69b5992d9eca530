"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Times each kernel on workloads sized like predictor training (about 340k
parameters, 64-sample batches) and one short training run per backend.
"""
import argparse
import timeit

import numpy as np

from tddcsi import kernels
from tddcsi.cascade import predictor_spec
from tddcsi.neuralcore import TrainConfig, train


def _adam_case(dtype):
    rng = np.random.default_rng(0)
    n = 22 * 512 + 512 + 512 * 128 + 128 + 128 * 512 + 512
    arrays = [rng.standard_normal(n).astype(dtype) for _ in range(2)] + [np.zeros(n, dtype), np.zeros(n, dtype)]
    param, grad, m, v = arrays
    return lambda be: be.adam_update(param, grad, m, v, 1e-3, 0.9, 0.999, 1e-8)


def _tanh_case():
    rng = np.random.default_rng(1)
    act = np.tanh(rng.standard_normal(64 * 512)).astype(np.float32)
    delta = rng.standard_normal(64 * 512).astype(np.float32)
    return lambda be: be.tanh_backward(act, delta.copy())


def _interp_case():
    rng = np.random.default_rng(2)
    knots = np.arange(0, 256, 24)
    re, im = rng.standard_normal((10_000, len(knots))), rng.standard_normal((10_000, len(knots)))
    seg, frac = kernels.interp_segments(knots, 256)
    return lambda be: be.interp_linear(re, im, seg, frac)


def _training_case():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4_000, 22)).astype(np.float32)
    y = rng.standard_normal((4_000, 512)).astype(np.float32)
    spec = predictor_spec(11, 256)
    cfg = TrainConfig(max_epochs=1, seed=4)

    def run(be):
        kernels._active = be  # swap the backend the trainer sees
        train(spec, x, y, cfg)
    return run


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    backends = [kernels.get_backend(name) for name in kernels.available_backends()]
    if len(backends) < 2:
        print("compiled kernels are not built; only the numpy fallback is available")
    cases = [
        ("adam_update float32 (340k)", _adam_case(np.float32), 50),
        ("adam_update float64 (340k)", _adam_case(np.float64), 50),
        ("tanh_backward (64x512)", _tanh_case(), 500),
        ("interp_linear (10k x 256)", _interp_case(), 5),
        ("train 1 epoch (4k samples)", _training_case(), 1),
    ]
    saved = kernels._active
    print(f"{'kernel':<30}" + "".join(f"{be.name:>12}" for be in backends) + f"{'speedup':>10}")
    try:
        for label, fn, number in cases:
            times = []
            for be in backends:
                best = min(timeit.repeat(lambda: fn(be), number=number, repeat=args.repeat)) / number
                times.append(best)
            speedup = times[0] / times[-1] if len(times) > 1 else 1.0
            print(f"{label:<30}" + "".join(f"{t * 1e3:10.3f}ms" for t in times) + f"{speedup:9.2f}x")
    finally:
        kernels._active = saved


if __name__ == "__main__":
    main()
