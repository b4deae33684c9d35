"""Train the same network on RGB only and on RGB plus residual motion.

The motion_block scene hides its objects in a single frame: they are cut
from the background texture and only their movement gives them away.
"""
import argparse
import tempfile
from pathlib import Path

from salnet import patches
from salnet.cnn import desk_architecture, init_model
from salnet.cnn.solver import SolverConfig, train
from salnet.synthetic import write_dataset


def accuracy_for(channels, train_m, test_m, epochs):
    xtr, ytr = patches.as_arrays(patches.assemble_patch_dataset(train_m, channels, 16, rng_seed=0))
    xte, yte = patches.as_arrays(patches.assemble_patch_dataset(test_m, channels, 16, rng_seed=1))
    c = xtr.shape[1]
    model = init_model(desk_architecture(c, 16), (16, 16, c), seed=0, filler="msra")
    _, report, _ = train(model, xtr, ytr, xte, yte, SolverConfig(batch_size=32, epochs=epochs, seed=0))
    return report


def main():
    ap = argparse.ArgumentParser(description="3k versus 4k on motion-defined objects")
    ap.add_argument("--scene", default="motion_block", choices=["motion_block", "bright_blob"])
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        train_m = write_dataset(tmp / "train", args.scene, n_videos=6, n_frames=16, seed=1)
        test_m = write_dataset(tmp / "test", args.scene, n_videos=2, n_frames=16, seed=2)
        for channels in ("3k", "4k"):
            rep = accuracy_for(channels, train_m, test_m, args.epochs)
            curve = " ".join(f"{a:.2f}" for _, a in rep.points)
            print(f"{channels}: best {rep.best_accuracy:.3f}  per epoch: {curve}")


if __name__ == "__main__":
    main()
