"""Train desk generators, generate a toy dataset and score a detector probe trained on it.

    python scripts/probe_experiment.py --out out/probe
"""
import argparse
import json
import time
from pathlib import Path

from textinpaint.config import RunConfig, load_config
from textinpaint.experiments import probe_experiment, train_desk_models
from textinpaint.torchutil import configure_threads


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--images", type=int, default=200)
    ap.add_argument("--heldout", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("out/probe"))
    args = ap.parse_args()
    configure_threads(1, True)

    cfg = load_config(args.config) if args.config else RunConfig()
    t0 = time.time()
    models = train_desk_models(cfg, seed=args.seed)
    print(f"trained generator in {time.time() - t0:.0f} s {models.timings}; recognizer accuracy {models.recognizer_accuracy:.3f}")
    args.out.mkdir(parents=True, exist_ok=True)
    models.model.save(args.out / "model.ckpt")
    models.recognizer.save(args.out / "recognizer.ckpt")
    res = probe_experiment(models, cfg, args.out, args.images, args.heldout, args.seed)
    summary = {
        "trained": res.trained,
        "untrained": res.untrained,
        "kept_instances": res.kept_instances,
        "images": res.images,
        "timings": {**models.timings, **res.timings},
    }
    print(json.dumps(summary, indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
