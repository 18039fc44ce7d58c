"""Membership-inference sweeps against a CorGAN trained on a small sparse corpus.

Varies the number of known records and the size of the synthetic set, one
trained generator per seed, and writes both tables per seed.

    python3 scripts/privacy_sweeps.py --seeds 0 1 2 --out runs/privacy
"""
import argparse
from pathlib import Path

import numpy as np

from corgan.data import synth_corpus
from corgan.models import build, default_descriptor, generate
from corgan.privacy import sweep_known_records, sweep_synthetic_volume
from corgan.tensor import sample_noise
from corgan.training import TrainingConfig, pretrain_autoencoder, train_gan


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=128)
    ap.add_argument("--n-train", type=int, default=1000)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--known", type=int, nargs="+", default=[10, 20, 50, 100, 200, 500, 1000])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 1000, 5000, 10000])
    ap.add_argument("--out", default="runs/privacy")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    marginals = np.random.default_rng(0).uniform(0.02, 0.1, args.m)
    full = synth_corpus(2 * args.n_train, args.m, 2, marginals, seed=1).values
    tr, te = full[:args.n_train], full[args.n_train:]
    for seed in args.seeds:
        bundle = build(default_descriptor("discrete", "corgan", args.m, code_width=64, noise_width=64,
                                          n_kernels=16, kernel_dim=4), seed)
        pretrain_autoencoder(bundle.autoencoder, tr, TrainingConfig(epochs=50, batch_size=100, seed=seed))
        train_gan(bundle.generator, bundle.discriminator, bundle.decoder, tr,
                  TrainingConfig(epochs=args.epochs, batch_size=100, lr_g=2e-4, lr_d=2e-4, seed=seed,
                                 patience=args.epochs))
        big = generate(bundle.generator, bundle.decoder, sample_noise(max(args.sizes), 64, seed + 7),
                       "discrete").values
        known = sweep_known_records(args.known, tr, te, big[:1000], seed=seed)
        known.write_csv(out / f"sweep_known_seed{seed}.csv")
        volume = sweep_synthetic_volume(args.sizes, tr, te, lambda s: big[:s], U=100, seed=seed)
        volume.write_csv(out / f"sweep_volume_seed{seed}.csv")
        for s, rep in zip(volume.keys, volume.reports):
            b = rep.best
            print(f"seed {seed} |S_syn|={s}: precision {b.precision if b else 0:.3f} "
                  f"recall {b.recall if b else 0:.3f}")


if __name__ == "__main__":
    main()
