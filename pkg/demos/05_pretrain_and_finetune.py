"""Miniature end-to-end run: joint audiovisual pretraining on four samples,
then a downstream word classifier from the pretrained encoder.

Takes about a minute on one CPU core.
Run: python3 demos/05_pretrain_and_finetune.py
"""

import tempfile

from lipwave.data import synth_corpus
from lipwave.training import (FinetuneConfig, PretrainConfig, finetune, pretrain)


def main():
    root = tempfile.mkdtemp(prefix="lipwave_demo_run_")
    manifest = synth_corpus(f"{root}/corpus", n_words=2, n_identities=1,
                            n_train=4, n_val=2, n_test=2, seed=0)

    pre = pretrain(PretrainConfig(regime="AV", manifest=manifest, epochs=100,
                                  learning_rate=3e-4, batch_size=2, seed=0,
                                  stop_factor=0.5, max_steps=20,
                                  out_dir=f"{root}/pretrain"))
    first, last = pre.report.rows[0][7], pre.report.rows[-1][7]
    print(f"pretrain: {pre.steps} steps, l_total {first:.3f} -> {last:.3f}")
    for name, path in sorted(pre.checkpoints.items()):
        print(f"  checkpoint {name}")

    ft = finetune(FinetuneConfig(manifest=manifest, epochs=5, eval_every=1,
                                 freeze_encoder=True, seed=0,
                                 out_dir=f"{root}/finetune"),
                  encoder_ckpt=pre.checkpoints["encoder"])
    print(f"finetune: {ft.n_train} labeled samples, "
          f"best val {ft.best_val_accuracy:.2f} at epoch {ft.best_epoch}, "
          f"test accuracy {ft.test_accuracy:.2f}")
    print(f"artifacts under {root}")


if __name__ == "__main__":
    main()
