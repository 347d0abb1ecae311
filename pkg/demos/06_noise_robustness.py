"""Accuracy under babble noise: train the MFCC-baseline classifier on a small
corpus, then sweep mixed test audio from -5 dB to 20 dB SNR.

Run: python3 demos/06_noise_robustness.py
"""

import tempfile

from lipwave.data import synth_corpus
from lipwave.formats import load_checkpoint
from lipwave.models import DownstreamClassifier, spawn_rng
from lipwave.training import FinetuneConfig, finetune, noise_sweep


def main():
    root = tempfile.mkdtemp(prefix="lipwave_demo_sweep_")
    manifest = synth_corpus(f"{root}/corpus", n_words=3, n_identities=2,
                            n_train=9, n_val=3, n_test=6, seed=1)

    ft = finetune(FinetuneConfig(manifest=manifest, features="mfcc", epochs=10,
                                 eval_every=2, seed=0, out_dir=f"{root}/ft"))
    print(f"clean test accuracy {ft.test_accuracy:.2f}")

    clf = DownstreamClassifier(3, spawn_rng(0), in_dim=39)
    clf.load_state_dict(load_checkpoint(ft.checkpoints["classifier"]))
    results = noise_sweep([("mfcc", None, clf, "mfcc")], manifest,
                          seed=0, out_csv=f"{root}/sweep.csv")
    row = results["mfcc"]
    cols = ["-5", "0", "5", "10", "15", "20", "clean"]
    print("snr  " + "  ".join(f"{c:>5s}" for c in cols))
    print("acc  " + "  ".join(f"{row[c]:5.2f}" for c in cols))
    print(f"csv at {root}/sweep.csv")


if __name__ == "__main__":
    main()
