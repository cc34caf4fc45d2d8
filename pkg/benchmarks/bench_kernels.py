"""Time the compiled and numpy kernels on the softmax-regression hot paths.

    python3 benchmarks/bench_kernels.py [--repeat N]

Reports the best of N timings for a full-batch gradient and for one local
training call (one epoch of minibatch SGD), per backend, plus the speedup.
"""
import argparse
import timeit

import numpy as np

from fairfl import _backend
from fairfl.data import generate_synthetic
from fairfl.model import ModelSpec, TrainingConfig, gradient, init_parameters, local_train

CASES = [
    # (input_dim, num_classes, samples_per_class, batch_size)
    (32, 10, 200, 32),
    (128, 10, 500, 32),
    (32, 10, 200, 1),
]


def bench(repeat: int) -> list[dict]:
    rows = []
    for dim, classes, spc, batch in CASES:
        spec = ModelSpec("softmax_regression", dim, classes)
        data = generate_synthetic(classes, dim, spc, seed=0)
        params = init_parameters(spec, 0)
        cfg = TrainingConfig(learning_rate=0.1, local_epochs=1, batch_size=batch, seed=1)
        row = {"case": f"d={dim} C={classes} n={len(data)} batch={batch}"}
        for name in _backend.available_backends():
            g = timeit.Timer(lambda: gradient(params, spec, data.features, data.labels, backend=name))
            t = timeit.Timer(lambda: local_train(params, spec, data, cfg, backend=name))
            number = 3 if batch > 1 else 1
            row[f"{name}_grad"] = min(g.repeat(repeat, 10)) / 10
            row[f"{name}_train"] = min(t.repeat(repeat, number)) / number
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _backend.available_backends()
    if backends == ["python"]:
        print("compiled kernels not built; only the numpy fallback is timed")
    rows = bench(args.repeat)
    head = f"{'case':<36}{'op':<8}" + "".join(f"{b + ' ms':>12}" for b in backends)
    if len(backends) == 2:
        head += f"{'speedup':>10}"
    print(head)
    print("-" * len(head))
    for row in rows:
        for op in ("grad", "train"):
            line = f"{row['case']:<36}{op:<8}" + "".join(f"{1e3 * row[f'{b}_{op}']:>12.3f}" for b in backends)
            if len(backends) == 2:
                line += f"{row[f'python_{op}'] / row[f'cython_{op}']:>9.1f}x"
            print(line)
    # both backends must agree on what they compute
    if len(backends) == 2:
        spec = ModelSpec("softmax_regression", 32, 10)
        data = generate_synthetic(10, 32, 200, seed=0)
        cfg = TrainingConfig(0.1, 1, 32, 1)
        p = init_parameters(spec, 0)
        a = local_train(p, spec, data, cfg, backend="cython").delta
        b = local_train(p, spec, data, cfg, backend="python").delta
        print(f"max |cython - python| after one epoch: {np.abs(a - b).max():.1e}")


if __name__ == "__main__":
    main()
