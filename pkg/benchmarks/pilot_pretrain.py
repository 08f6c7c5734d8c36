"""Pilot run behind the desk-preset convergence thresholds.

The acceptance suite asserts that desk-preset pre-training reaches held-out
MLM accuracy > 0.90 and SOP accuracy > 0.95 within 2000 steps in under five
minutes on one CPU core.  This script is the run those thresholds were frozen
from: it trains the canonical preset on a fresh synthetic corpus and prints
the held-out accuracy trajectory plus wall time.  The committed log
(pilot_pretrain.log) is its verbatim output.

Usage: python3 benchmarks/pilot_pretrain.py [--steps N] [--seed S]
"""

import argparse
import json
import os
import tempfile
import time

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

from desklm.harness import RunConfig, make_synthetic_corpus, run_pretrain  # noqa: E402
from desklm.model import desk_config  # noqa: E402
from desklm.pretrain import desk_schedule  # noqa: E402
from desklm.tensor import BACKEND  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--articles", type=int, default=96)
    ap.add_argument("--eval-every", type=int, default=100)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        corpus = make_synthetic_corpus(os.path.join(tmp, "synth"), seed=args.seed,
                                       n_articles=args.articles, vocab=64)
        config = RunConfig(
            mode="pretrain",
            model=desk_config(),
            schedule=desk_schedule(args.steps),
            seed=args.seed,
            eval_every=args.eval_every,
            paths={"corpus": corpus["corpus"], "out": os.path.join(tmp, "run")},
        )
        print(f"backend={BACKEND} steps={args.steps} seed={args.seed} "
              f"model=desk(vocab=64,H=32,L=2) corpus={args.articles} articles "
              f"schedule={config.schedule.stage1_len}/{config.schedule.stage2_len} "
              f"batches={config.schedule.stage1_batch}/{config.schedule.stage2_batch} "
              f"lr_peak={config.lr_peak}")
        t0 = time.perf_counter()
        result = run_pretrain(config)
        elapsed = time.perf_counter() - t0

        for line in open(result["metrics"]):
            rec = json.loads(line)
            if rec["eval"]:
                print(f"step {rec['step']:>5}  stage {rec['stage']}  "
                      f"mlm_acc {rec['eval']['mlm_accuracy']:.4f}  "
                      f"sop_acc {rec['eval']['sop_accuracy']:.4f}  "
                      f"loss {rec['losses']['total']:.4f}")
        final = result["final_eval"]
        print(f"wall time: {elapsed:.1f}s")
        print(f"final held-out: mlm_accuracy={final['mlm_accuracy']:.4f} "
              f"sop_accuracy={final['sop_accuracy']:.4f}")
        verdict = final["mlm_accuracy"] > 0.90 and final["sop_accuracy"] > 0.95
        print(f"thresholds (mlm > 0.90, sop > 0.95): {'met' if verdict else 'NOT MET'}")


if __name__ == "__main__":
    main()
