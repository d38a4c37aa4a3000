"""Memorise 8 toy pairs and report the loss drop and the inpainting error in the mask.

    python scripts/overfit_run.py --steps 2000 --out out/overfit
"""
import argparse
import time
from pathlib import Path

import numpy as np

from textinpaint.config import RunConfig
from textinpaint.experiments import overfit_run
from textinpaint.imageio import to_uint8, write_image
from textinpaint.sampler import inpaint
from textinpaint.torchutil import configure_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--pairs", type=int, default=8)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/overfit"))
    args = ap.parse_args()
    configure_threads(1, True)

    cfg = RunConfig()
    t0 = time.time()
    model, pairs, _ = overfit_run(cfg, args.pairs, args.steps, args.seed)
    h = model.loss_history
    initial, final = np.mean(h[:10]), np.mean(h[-100:])
    print(f"loss {initial:.4f} -> {final:.4f} ({final / initial:.1%}) in {time.time() - t0:.0f} s")
    rows = []
    for i, p in enumerate(pairs):
        out = inpaint(p.original, p.mask, p.text, model, steps=cfg.sampler.steps, seed=0, deterministic=True)
        print(f"pair {i} '{p.text}': MAE in mask {np.abs(out - p.original)[p.mask].mean():.3f}")
        rows.append(np.concatenate([to_uint8(x) for x in (p.original, p.masked, out)], 1))
    args.out.mkdir(parents=True, exist_ok=True)
    model.save(args.out / "model.ckpt")
    write_image(args.out / "pairs.png", np.concatenate(rows, 0))


if __name__ == "__main__":
    main()
