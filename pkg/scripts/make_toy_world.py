"""Write a toy world: backgrounds with maps, an annotated text corpus and a word list.

    python scripts/make_toy_world.py out/world --backgrounds 50 --scenes 256
"""
import argparse
from pathlib import Path

import numpy as np

from textinpaint.annotations import write_dataset
from textinpaint.config import RunConfig
from textinpaint.toyworld import TOY_WORDS, make_text_scene, write_backgrounds


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", type=Path)
    ap.add_argument("--backgrounds", type=int, default=50)
    ap.add_argument("--scenes", type=int, default=256)
    ap.add_argument("--size", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    write_backgrounds(args.out, args.backgrounds, args.seed, args.size)
    rng = np.random.default_rng(args.seed + 1)
    placement = RunConfig().placement
    scenes = []
    for i in range(args.scenes):
        s = make_text_scene(rng, args.size, TOY_WORDS, placement)
        scenes.append((f"scene_{i:05d}", s.image, s.instances))
    write_dataset(args.out / "text", scenes)
    (args.out / "words.txt").write_text("\n".join(TOY_WORDS) + "\n")
    print(f"wrote {args.backgrounds} backgrounds and {args.scenes} annotated scenes to {args.out}")


if __name__ == "__main__":
    main()
