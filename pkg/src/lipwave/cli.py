"""Command-line surface: corpus synthesis, pretraining, finetuning,
evaluation, feature dumps, noise sweeps, gradient checks, and reports.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Training configs come from an INI file (section [run]) whose keys mirror the
config dataclasses; unknown keys are rejected and every key can be overridden
by a flag of the same name. All commands run in deterministic mode: the
backend is sequential with fixed reduction order, so --deterministic is an
assertion that is recorded, not a behavior switch.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from . import __version__, gradcheck
from .data import SampleLoader, synth_corpus
from .dsp import FEATURE_KINDS, feature_matrix
from .errors import DataError, NumericError, ShapeError
from .formats import load_checkpoint, save_tensor
from .models import AudioEncoder, DownstreamClassifier, spawn_rng
from .training import (FinetuneConfig, PretrainConfig, SNR_GRID,
                       evaluate_checkpoint, extract_features, finetune,
                       noise_sweep, pretrain)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_COERCERS = {
    "str": str,
    "int": int,
    "float": float,
    "Optional[int]": lambda s: None if s.lower() in ("", "none") else int(s),
    "Optional[float]": lambda s: None if s.lower() in ("", "none") else float(s),
}


def _coerce_bool(s):
    low = str(s).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {s!r}")


def _coerce(type_name, raw):
    if isinstance(raw, bool) or raw is None:
        return raw
    if type_name == "bool":
        return _coerce_bool(raw)
    try:
        return _COERCERS[type_name](raw)
    except (ValueError, KeyError):
        raise UsageError(f"bad value {raw!r} for a {type_name} key") from None


def _add_config_flags(parser, config_cls, skip=()):
    """One same-name flag per config field (plus a hyphenated alias)."""
    for f in fields(config_cls):
        if f.name in skip:
            continue
        names = ["--" + f.name]
        if "_" in f.name:
            names.append("--" + f.name.replace("_", "-"))
        if f.type == "bool":
            parser.add_argument(*names, dest=f.name, default=None,
                                action=argparse.BooleanOptionalAction)
        else:
            parser.add_argument(*names, dest=f.name, default=None)


def _read_ini(path, allowed):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser()
    cp.read(path)
    if cp.sections() != ["run"]:
        raise UsageError(f"config must contain exactly a [run] section, got {cp.sections()}")
    out = {}
    for key, value in cp["run"].items():
        if key not in allowed:
            raise UsageError(f"unknown config key {key!r}")
        out[key] = value
    return out


def _resolve_config(config_cls, args, extra_keys=()):
    """defaults < INI file < explicit flags; returns (config, extras dict)."""
    types = {f.name: f.type for f in fields(config_cls)}
    allowed = set(types) | set(extra_keys)
    resolved = asdict(config_cls())
    extras = {k: None for k in extra_keys}
    if getattr(args, "config", None):
        for k, v in _read_ini(args.config, allowed).items():
            if k in extras:
                extras[k] = v
            else:
                resolved[k] = _coerce(types[k], v)
    for k in list(resolved) + list(extras):
        v = getattr(args, k, None)
        if v is not None:
            if k in extras:
                extras[k] = v
            else:
                resolved[k] = _coerce(types[k], v)
    return config_cls(**resolved), extras


def _write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, default=str)


# -- subcommands --------------------------------------------------------------------


def cmd_synthdata(args):
    counts = [int(x) for x in args.samples.split(",")]
    if len(counts) != 3:
        raise UsageError("--samples wants train,val,test counts, e.g. 48,16,64")
    manifest = synth_corpus(args.out, n_words=args.words, n_identities=args.identities,
                            n_train=counts[0], n_val=counts[1], n_test=counts[2],
                            seed=args.seed)
    _write_json(os.path.join(args.out, "run.json"), {
        "command": "synthdata", "out": args.out, "words": args.words,
        "identities": args.identities, "samples": counts, "seed": args.seed,
        "deterministic": args.deterministic, "package_version": __version__,
    })
    print(f"manifest {manifest}")
    return EXIT_OK


def cmd_pretrain(args):
    config, _ = _resolve_config(PretrainConfig, args)
    if not config.manifest:
        raise UsageError("a manifest is required (flag --manifest or config key)")
    result = pretrain(config)
    last = result.report.rows[-1]
    print(f"steps {result.steps} l_total {last[7]:.6f}")
    for name, path in sorted(result.checkpoints.items()):
        print(f"checkpoint {name} {path}")
    return EXIT_OK


def cmd_finetune(args):
    config, extras = _resolve_config(FinetuneConfig, args, extra_keys=("encoder",))
    if not config.manifest:
        raise UsageError("a manifest is required (flag --manifest or config key)")
    if getattr(args, "freeze", False):
        config.freeze_encoder = True
    result = finetune(config, encoder_ckpt=extras["encoder"])
    print(f"labeled_train {result.n_train}")
    print(f"best_val_accuracy {result.best_val_accuracy:.6f} (epoch {result.best_epoch})")
    print(f"test_accuracy {result.test_accuracy:.6f}")
    return EXIT_OK


def cmd_eval(args):
    acc = evaluate_checkpoint(args.classifier, args.manifest, encoder_ckpt=args.encoder,
                              features=args.features, split=args.split)
    print(f"{args.split}_accuracy {acc:.6f}")
    if args.out:
        _write_json(args.out, {"command": "eval", "classifier": args.classifier,
                               "encoder": args.encoder, "features": args.features,
                               "manifest": args.manifest, "split": args.split,
                               "accuracy": acc, "package_version": __version__})
    return EXIT_OK


def cmd_features(args):
    if args.encoder:
        paths = extract_features(args.encoder, args.manifest, args.out)
    else:
        if args.kind not in FEATURE_KINDS:
            raise UsageError(f"unknown feature kind {args.kind!r}, expected one of {sorted(FEATURE_KINDS)}")
        loader = SampleLoader(args.manifest)
        os.makedirs(args.out, exist_ok=True)
        paths = []
        for r in loader.records:
            path = os.path.join(args.out, f"{r.id}.avtf")
            save_tensor(path, feature_matrix(loader.wave(r), args.kind).astype(np.float32))
            paths.append(path)
    _write_json(os.path.join(args.out, "run.json"), {
        "command": "features", "manifest": args.manifest, "encoder": args.encoder,
        "kind": None if args.encoder else args.kind, "count": len(paths),
        "package_version": __version__,
    })
    print(f"wrote {len(paths)} feature files to {args.out}")
    return EXIT_OK


def _parse_snrs(text):
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"bad --snrs list: {text!r}") from None


def cmd_noise_sweep(args):
    snrs = _parse_snrs(args.snrs)
    loader = SampleLoader(args.manifest)
    entries = []
    specs = list(args.model or [])
    if args.classifier:
        specs.append(f"{args.name}:{args.encoder or ''}:{args.classifier}:{args.features}")
    if not specs:
        raise UsageError("give --classifier (with --encoder) or at least one --model")
    for spec in specs:
        parts = spec.split(":")
        if len(parts) == 3:
            parts.append("encoder")
        if len(parts) != 4:
            raise UsageError(f"bad --model spec {spec!r}, want name:encoder:classifier[:features]")
        name, enc_path, clf_path, kind = parts
        encoder = None
        if kind == "encoder":
            if not enc_path:
                raise UsageError(f"model {name!r} uses encoder features but has no encoder path")
            encoder = AudioEncoder(spawn_rng(0))
            encoder.load_state_dict(load_checkpoint(enc_path))
        classifier = DownstreamClassifier(len(loader.labels), spawn_rng(0),
                                          in_dim=512 if kind == "encoder" else 39)
        classifier.load_state_dict(load_checkpoint(clf_path))
        entries.append((name, encoder, classifier, kind))
    results = noise_sweep(entries, args.manifest, seed=args.seed, snrs=snrs, out_csv=args.out)
    _write_json(args.out + ".json", {
        "command": "noise-sweep", "manifest": args.manifest, "snrs": list(snrs),
        "seed": args.seed, "models": [e[0] for e in entries], "out": args.out,
        "package_version": __version__,
    })
    cols = [str(s) for s in snrs] + ["clean"]
    print("model " + " ".join(cols))
    for name, row in results.items():
        print(name + " " + " ".join(f"{row[c]:.4f}" for c in cols))
    return EXIT_OK


def cmd_gradcheck(args):
    names = {"all": None, "tensor": list(gradcheck.TENSOR_CASES),
             "models": list(gradcheck.MODEL_CASES)}[args.module]
    results = gradcheck.run_all(names)
    failed = [n for n, e in results if e >= gradcheck.REL_TOL]
    width = max(len(n) for n, _ in results)
    for n, e in results:
        status = "FAIL" if n in failed else "ok"
        print(f"{n:<{width}s}  max rel err {e:.3e}  {status}")
    if args.module == "all":
        clean, corrupted = gradcheck.corruption_check()
        caught = corrupted >= gradcheck.REL_TOL
        print(f"corrupted-rule fixture: clean {clean:.3e}, corrupted {corrupted:.3e}, "
              f"{'caught' if caught else 'MISSED'}")
        if not caught:
            raise NumericError("harness failed to flag a corrupted gradient rule")
    if failed:
        raise NumericError(f"gradient check failed for: {', '.join(failed)}")
    print(f"{len(results)} cases pass below rel err {gradcheck.REL_TOL}")
    return EXIT_OK


def _render_table(title, header, rows):
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = [title]
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)))
    lines.append("  ".join("-" * w for w in widths))
    for row in cells[1:]:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines)


def _read_csv(path):
    if not os.path.exists(path):
        raise DataError(f"missing report input: {path}")
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise DataError(f"empty CSV: {path}")
    return rows[0], rows[1:]


def cmd_report(args):
    sections = []
    header, rows = _read_csv(os.path.join(args.run_dir, "protocol.csv"))
    sections.append(_render_table("Word accuracy by pretraining regime (low-label protocol)",
                                  header, rows))
    sweep_path = os.path.join(args.run_dir, "noise_sweep.csv")
    if os.path.exists(sweep_path):
        header, rows = _read_csv(sweep_path)
        sections.append(_render_table("Accuracy under babble noise (dB SNR columns)",
                                      header, rows))
    text = "\n\n".join(sections) + "\n"
    out_path = os.path.join(args.run_dir, "report.txt")
    with open(out_path, "w") as f:
        f.write(text)
    print(text, end="")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="lipwave", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--deterministic", default=True,
                       action=argparse.BooleanOptionalAction,
                       help="record deterministic mode (the backend is always bitwise-deterministic)")

    p = sub.add_parser("synthdata", help="render a synthetic audiovisual word corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--words", type=int, default=8)
    p.add_argument("--identities", type=int, default=4)
    p.add_argument("--samples", default="48,16,64", help="train,val,test counts")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(fn=cmd_synthdata)

    p = sub.add_parser("pretrain", help="self-supervised pretraining (regime A, V, or AV)")
    p.add_argument("--config", help="INI file with a [run] section")
    _add_config_flags(p, PretrainConfig)
    common(p)
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="downstream word-classifier training")
    p.add_argument("--config", help="INI file with a [run] section")
    p.add_argument("--encoder", default=None,
                   help="pretrained encoder checkpoint; omit for the supervised baseline")
    p.add_argument("--freeze", action="store_true", default=False,
                   help="shorthand for --freeze_encoder")
    _add_config_flags(p, FinetuneConfig)
    common(p)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="score a finetuned checkpoint on one split")
    p.add_argument("--classifier", required=True)
    p.add_argument("--encoder", default=None)
    p.add_argument("--features", default="encoder", choices=("encoder", "mfcc"))
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out", default=None, help="optional JSON sidecar path")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("features", help="dump per-sample feature matrices as tensor files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--encoder", default=None, help="dump (25,512) encoder latents")
    p.add_argument("--kind", default="mfcc39", help="dsp feature kind when no encoder is given")
    common(p)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("noise-sweep", help="accuracy vs babble SNR, one CSV row per model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--snrs", default=",".join(str(s) for s in SNR_GRID))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model", action="append",
                   help="name:encoder:classifier[:features], repeatable")
    p.add_argument("--name", default="run", help="row label for the --classifier model")
    p.add_argument("--encoder", default=None)
    p.add_argument("--classifier", default=None)
    p.add_argument("--features", default="encoder", choices=("encoder", "mfcc"))
    common(p)
    p.set_defaults(fn=cmd_noise_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward rule")
    p.add_argument("--module", default="all", choices=("all", "tensor", "models"))
    common(p)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="render protocol CSVs as plain-text tables")
    p.add_argument("--run-dir", required=True)
    common(p)
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
