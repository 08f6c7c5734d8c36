"""Micro-benchmark: compiled kernels against the numpy fallback.

Both implementations stay importable side by side (desklm.tensor.kernels
exposes numpy_impl and compiled_impl), so per-kernel timings and parity
checks run in a single process on identical inputs.  The end-to-end probe
reruns this script in a child process per backend, because the backend is
fixed at import time; each child times a short desk-preset pretraining
loop after warmup.

Usage:
    python3 benchmarks/bench_kernels.py             # full report
    python3 benchmarks/bench_kernels.py --no-train  # kernel table only
"""

import argparse
import os
import subprocess
import sys
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402

from desklm.tensor import kernels  # noqa: E402

# encoder-shaped workloads: rows = batch x seq (x heads for attention),
# widths = hidden / intermediate / seq
_RNG = np.random.default_rng(0)
_GELU_X = _RNG.normal(size=2048 * 512)
_GELU_DY = _RNG.normal(size=2048 * 512)
_SM_X = np.ascontiguousarray(_RNG.normal(size=(8192, 64)))
_SM_Y = kernels.numpy_impl["softmax2d_fwd"](_SM_X)
_SM_DY = np.ascontiguousarray(_RNG.normal(size=(8192, 64)))
_LN_X = np.ascontiguousarray(_RNG.normal(size=(2048, 128)))
_LN_G = _RNG.normal(size=128)
_LN_B = _RNG.normal(size=128)
_LN_OUT, _LN_XHAT, _LN_RSTD = kernels.numpy_impl["layernorm2d_fwd"](
    _LN_X, _LN_G, _LN_B, 1e-5)
_LN_DY = np.ascontiguousarray(_RNG.normal(size=(2048, 128)))

CASES = [
    ("gelu_fwd", (_GELU_X,)),
    ("gelu_bwd", (_GELU_X, _GELU_DY)),
    ("softmax2d_fwd", (_SM_X,)),
    ("softmax2d_bwd", (_SM_Y, _SM_DY)),
    ("layernorm2d_fwd", (_LN_X, _LN_G, _LN_B, 1e-5)),
    ("layernorm2d_bwd", (_LN_XHAT, _LN_RSTD, _LN_G, _LN_DY)),
]


def _best_ms(fn, args, repeats):
    fn(*args)  # warmup
    best = float("inf")
    for _ in range(5):
        t0 = time.perf_counter()
        for _ in range(repeats):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / repeats)
    return best * 1e3


def _check_parity(name, args):
    a = kernels.numpy_impl[name](*args)
    b = kernels.compiled_impl[name](*args)
    for x, y in zip(a if isinstance(a, tuple) else (a,),
                    b if isinstance(b, tuple) else (b,)):
        np.testing.assert_allclose(y, x, rtol=1e-12, atol=1e-12)


def bench_kernels(repeats):
    print(f"active backend: {kernels.BACKEND}")
    if kernels.compiled_impl is None:
        print("compiled extension unavailable; nothing to compare")
        return
    print(f"{'kernel':<18} {'numpy ms':>10} {'compiled ms':>12} {'speedup':>8}")
    for name, args in CASES:
        _check_parity(name, args)
        t_np = _best_ms(kernels.numpy_impl[name], args, repeats)
        t_c = _best_ms(kernels.compiled_impl[name], args, repeats)
        print(f"{name:<18} {t_np:>10.3f} {t_c:>12.3f} {t_np / t_c:>7.2f}x")
    print("parity: all kernels agree within 1e-12")


def _train_probe():
    # child mode: time a short desk-preset loop under whatever backend the
    # environment selected, print seconds on the last line
    import tempfile

    from desklm.harness import RunConfig, make_synthetic_corpus, run_pretrain
    from desklm.model import desk_config
    from desklm.pretrain import desk_schedule

    with tempfile.TemporaryDirectory() as tmp:
        synth = make_synthetic_corpus(os.path.join(tmp, "s"), seed=0,
                                      n_articles=12, vocab=64)
        def config(out):
            return RunConfig(mode="pretrain", model=desk_config(),
                             schedule=desk_schedule(20), seed=0, eval_every=0,
                             paths={"corpus": synth["corpus"],
                                    "out": os.path.join(tmp, out)})
        run_pretrain(config("warm"))
        t0 = time.perf_counter()
        run_pretrain(config("timed"))
        from desklm.tensor import BACKEND
        print(f"{BACKEND} {time.perf_counter() - t0:.3f}")


def bench_training():
    print()
    print("end-to-end: 20 desk-preset pretraining steps per backend")
    for env_extra in ({}, {"DESKLM_NO_EXT": "1"}):
        env = {**os.environ, **env_extra}
        out = subprocess.run([sys.executable, __file__, "--train-probe"],
                             env=env, capture_output=True, text=True, check=True)
        backend, seconds = out.stdout.strip().split()[-2:]
        print(f"  {backend:<9} {float(seconds):.3f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=100)
    ap.add_argument("--no-train", action="store_true")
    ap.add_argument("--train-probe", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.train_probe:
        _train_probe()
        return
    bench_kernels(args.repeats)
    if not args.no_train:
        bench_training()


if __name__ == "__main__":
    main()
