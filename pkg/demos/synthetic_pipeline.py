"""Run extract -> sample -> train -> predict -> evaluate on a generated blob dataset.

    python demos/synthetic_pipeline.py /tmp/salnet-demo
"""
import argparse
from pathlib import Path

from salnet import pipeline
from salnet.cnn.solver import SolverConfig
from salnet.synthetic import write_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("workdir", type=Path)
    ap.add_argument("--channels", default="4k")
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    w = args.workdir

    train_m = write_dataset(w / "train", "bright_blob", n_videos=6, n_frames=16, seed=args.seed + 1)
    test_m = write_dataset(w / "test", "bright_blob", n_videos=2, n_frames=16, seed=args.seed + 2, prefix="held")
    for name, m in (("train", train_m), ("test", test_m)):
        pipeline.cmd_extract(m, args.channels, w / f"{name}_features", workers=2)
        pipeline.cmd_sample(m, w / f"{name}_features", 16, 0.04, 5, args.seed, w / f"{name}_patches")

    solver = SolverConfig(batch_size=32, epochs=args.epochs, max_iterations=10 ** 6, seed=args.seed)
    _, report = pipeline.cmd_train(w / "train_patches", w / "model.ckpt", solver=solver,
                                   arch={"preset": "desk", "filler": "msra", "seed": args.seed},
                                   val_dataset=w / "test_patches")
    print(f"held-out patch accuracy: best {report.best_accuracy:.3f} after {report.iterations_run} updates")

    pipeline.cmd_predict(w / "model.ckpt", test_m, w / "maps", features_dir=w / "test_features", pgm=True)
    result = pipeline.cmd_evaluate([f"cnn={w / 'maps'}"], test_m, w / "report.csv")
    print(result.to_text(), end="")
    print(f"maps (PGM previews included) in {w / 'maps'}")


if __name__ == "__main__":
    main()
