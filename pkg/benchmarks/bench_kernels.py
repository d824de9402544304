"""Time the pitch kernels and both estimators under each available backend.

    python benchmarks/bench_kernels.py [--seconds 5] [--repeat 5]

Prints the best-of-``repeat`` wall time per case and the speedup of the
compiled backend over the numpy one.
"""
import argparse
import timeit

import numpy as np

from vcprobe.pitch import PitchConfig, kernels, rapt_estimate, yin_estimate
from vcprobe.pitch.yin import lag_bounds
from vcprobe.signal_core import AudioBuffer

SR = 22050


def make_audio(seconds: float, seed: int = 0) -> AudioBuffer:
    rng = np.random.default_rng(seed)
    n = int(seconds * SR)
    f0 = 150 * np.exp(0.15 * np.sin(2 * np.pi * 0.7 * np.arange(n) / SR))
    phase = 2 * np.pi * np.cumsum(f0) / SR
    x = sum(np.sin(k * phase) / k for k in range(1, 8)) + 0.05 * rng.standard_normal(n)
    return AudioBuffer(0.5 * x / np.max(np.abs(x)), SR)


def cases(buf: AudioBuffer):
    cfg = PitchConfig()
    x = buf.samples
    _, tau_max = lag_bounds(cfg, SR)
    win = 1024
    starts = np.arange(0, len(x) - win - tau_max - 1, cfg.frame_hop, dtype=np.int64)
    lags = np.tile(np.arange(40, 440, 10, dtype=np.int64), (len(starts), 1))  # per-frame candidate lags
    rng = np.random.default_rng(1)
    T, S = len(starts), 21
    local = rng.random((T, S))
    log_f0 = np.log(rng.uniform(50, 600, (T, S)))
    log_f0[:, 0] = 0.0
    return {
        "yin_cmnd": lambda m: m.yin_cmnd(x, starts, win, tau_max),
        "nccf": lambda m: m.nccf(x, starts, 512, lags),
        "viterbi": lambda m: m.viterbi(local, log_f0, np.full(T, 0.5), 0.5),
        "yin_estimate": lambda m: yin_estimate(buf),
        "rapt_estimate": lambda m: rapt_estimate(buf),
    }


def use(mod) -> None:
    for name in ("yin_cmnd", "nccf", "viterbi"):
        setattr(kernels, name, getattr(mod, name))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seconds", type=float, default=5.0, help="audio length")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    buf = make_audio(args.seconds)
    backends = kernels.backends()
    default = {name: getattr(kernels, name) for name in ("yin_cmnd", "nccf", "viterbi")}
    table = {}
    for bname, mod in backends.items():
        use(mod)
        for case, fn in cases(buf).items():
            fn(mod)  # warm-up
            table.setdefault(case, {})[bname] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
    for name, fn in default.items():
        setattr(kernels, name, fn)

    names = list(backends)
    print(f"{args.seconds:g} s of audio at {SR} Hz, best of {args.repeat}")
    print(f"{'case':<15}" + "".join(f"{n:>12}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for case, row in table.items():
        line = f"{case:<15}" + "".join(f"{1e3 * row[n]:>10.1f}ms" for n in names)
        if len(names) > 1:
            line += f"{row['python'] / row['cython']:>11.1f}x"
        print(line)
    chosen = {name: fn.__module__.rsplit(".", 1)[-1] for name, fn in default.items()}
    print("default dispatch: " + ", ".join(f"{k} <- {v}" for k, v in chosen.items()))


if __name__ == "__main__":
    main()
