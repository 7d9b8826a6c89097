"""Time the two row-transform lanes against each other.

The package ships a compiled transform kernel (fcu._fftcore) and a numpy
fallback (fcu._fftpy) behind one interface; this script runs the same 2-D
transform through both and prints a per-size table.  Run from the repo root:

    python3 benchmarks/bench_fft.py
    python3 benchmarks/bench_fft.py --sizes 64,96,128,256 --repeats 30
"""

import argparse
import importlib
import time

import numpy as np


def load_lanes():
    lanes = {}
    try:
        lanes["compiled"] = importlib.import_module("fcu._fftcore")
    except ImportError:
        pass
    lanes["pure"] = importlib.import_module("fcu._fftpy")
    return lanes


def fft2_with(kernel, m: np.ndarray) -> np.ndarray:
    # mirrors fcu.fourier.fft2, but with an explicit kernel
    a = np.array(m, dtype=np.complex128, order="C", copy=True)
    kernel.fft_rows(a, False)
    a = np.ascontiguousarray(a.T)
    kernel.fft_rows(a, False)
    return np.ascontiguousarray(a.T)


def best_of(kernel, m: np.ndarray, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fft2_with(kernel, m)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16,64,96,128,257,512",
                    help="comma list of square sizes (non powers of two take the chirp-z path)")
    ap.add_argument("--repeats", type=int, default=20, help="timing repeats, best-of")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    lanes = load_lanes()
    if "compiled" not in lanes:
        print("compiled lane unavailable (extension not built); timing the fallback only")

    rng = np.random.default_rng(args.seed)
    names = list(lanes)
    header = f"{'size':>8s}" + "".join(f" {n + ' ms':>14s}" for n in names)
    if len(names) == 2:
        header += f" {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for n in sizes:
        m = rng.standard_normal((n, n))
        times = {}
        for name, kernel in lanes.items():
            times[name] = best_of(kernel, m, args.repeats)
        if len(names) == 2:
            ref = fft2_with(lanes["pure"], m)
            got = fft2_with(lanes["compiled"], m)
            drift = np.max(np.abs(got - ref)) / np.max(np.abs(ref))
            if drift > 1e-9:
                print(f"lane mismatch at {n}x{n}: relative drift {drift:.2e}")
                return 1
        row = f"{f'{n}x{n}':>8s}" + "".join(f" {1e3 * times[n2]:14.3f}" for n2 in names)
        if len(names) == 2:
            row += f" {times['pure'] / times['compiled']:8.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
