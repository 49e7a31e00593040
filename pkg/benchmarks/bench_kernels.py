"""Compare the compiled and pure-Python kernel backends.

Times the two hot kernels on instances shaped like one detection window
(M = 32, tail lengths 2..17), checks that both backends agree, and times a
full window through the detector with each backend active.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from irsdetect import _backend
from irsdetect.estimators import EstimatorBounds, _theta_mle, solve_spectrum_problem
from irsdetect.evaluation import ExperimentConfig, build_setup
from irsdetect.channel import Hypothesis, generate_ccd_window
from irsdetect.detectors import detect


def instances(rng, count=16, m=32):
    out = []
    for n in range(2, 2 + count):
        z = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        d = np.sort(rng.gamma(0.3, 1.0, m))[::-1]
        d *= m / d.sum()
        phi = np.zeros(m)
        phi[: min(n, m)] = np.sort(np.abs(z[:, 0]) ** 2 * 3)[::-1][:m]
        g = n * (3.0 * d + 0.1) * rng.exponential(1.0, m)
        out.append((phi, d, g, n))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = instances(rng)
    bounds = EstimatorBounds()
    link = build_setup(ExperimentConfig()).baseline.link

    names = sorted(_backend.BACKENDS)
    print(f"backends available: {names} (active: {_backend.NAME})")
    results = {}
    for name in names:
        spec = lambda: [solve_spectrum_problem(p, 3.0, 0.1, bounds, backend=name) for p, _, _, _ in cases]
        th = lambda: [_theta_mle(d, g, n, 3.0, link, backend=name) for _, d, g, n in cases]
        t_spec = min(timeit.repeat(spec, number=1, repeat=args.repeat)) / len(cases)
        t_th = min(timeit.repeat(th, number=1, repeat=args.repeat)) / len(cases)
        results[name] = (spec(), th())
        print(f"{name:>9}: spectrum solve {t_spec * 1e3:8.3f} ms   theta ML {t_th * 1e3:8.3f} ms")

    if len(names) == 2:
        (s1, t1), (s2, t2) = results["compiled"], results["python"]
        ds = max(np.max(np.abs(a - b)) for a, b in zip(s1, s2))
        dt = max(abs(a - b) / b for a, b in zip(t1, t2))
        print(f"max |lambda_compiled - lambda_python| = {ds:.2e}; max rel theta difference = {dt:.2e}")

    setup = build_setup(ExperimentConfig())
    win = generate_ccd_window(setup.scenario(Hypothesis.H1), 17, np.random.default_rng(1), "gaussian")
    det = ExperimentConfig().detector_config()
    active = _backend.kernels
    try:
        for name in names:
            _backend.kernels = _backend.BACKENDS[name]
            t = min(timeit.repeat(lambda: detect(win, det, always_resolve=True), number=1, repeat=args.repeat))
            print(f"{name:>9}: full window (K=17, M=32) {t * 1e3:8.2f} ms")
    finally:
        _backend.kernels = active


if __name__ == "__main__":
    main()
