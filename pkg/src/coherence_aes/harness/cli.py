"""``coherence-aes`` command line."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..joint_model import DetectionThreshold
from ..synthdata import build_synthetic_set, load_prompt_specs
from ..textpipe import atomic_write_bytes, read_corpus, read_jsonl, write_corpus, write_jsonl
from .checkpoint import CheckpointError, load_checkpoint
from .config import KINDS, SECTIONS, ConfigError, RunConfig, load_config
from .runner import JOINT_KINDS, dumps_json, evaluate_rows, from_checkpoint, gradcheck_suite, predict_rows, train_run
from .toygen import KINDS as TOY_KINDS
from .toygen import write_toy_corpus

log = logging.getLogger("coherence_aes")

OVERRIDABLE = [k for keys in SECTIONS.values() for k in keys]


def _add_train(sub):
    p = sub.add_parser("train", help="train one model kind and write checkpoint, predictions and manifest")
    p.add_argument("--config", help="INI file with [model], [train] and [data] sections")
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--out", required=True, help="output directory")
    types = {f: type(v) for f, v in RunConfig().to_dict().items() if v is not None}
    for key in OVERRIDABLE:
        if key == "kind":
            continue
        t = types.get(key, str)
        flag = "--" + key.replace("_", "-")
        if t is bool:
            p.add_argument(flag, dest=key, type=lambda s: s.lower() in ("1", "true", "yes", "on"), metavar="BOOL")
        else:
            p.add_argument(flag, dest=key, type=t)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coherence-aes",
                                     description="Coherence-aware essay scoring with shuffled-essay detection.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="build permuted corpora from high-scoring essays")
    for split in ("train", "dev", "test"):
        p.add_argument(f"--{split}", help=f"{split} corpus (JSON Lines)")
    p.add_argument("--prompts", help="prompt table JSON (default: bundled ASAP table)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10, help="permutations per selected essay")
    p.add_argument("--train-keep", type=int, default=4, help="permutations per essay kept in train")
    p.add_argument("--dev-keep", type=int, default=None, help="permutations per essay kept in dev (default all)")
    p.add_argument("--out", required=True)

    _add_train(sub)

    p = sub.add_parser("eval", help="score prediction files (folds are pooled)")
    p.add_argument("predictions", nargs="+", help="prediction JSON Lines files")
    p.add_argument("--prompts")
    p.add_argument("--pooled-tpra", action="store_true", help="also report TPRA over all prompts together")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("detect", help="apply a joint model and its threshold to a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, help="override the stored threshold")
    p.add_argument("--prompts")

    p = sub.add_parser("gradcheck", help="finite-difference verification of every loss")
    p.add_argument("--configs", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)

    p = sub.add_parser("toygen", help="write a synthetic toy corpus")
    p.add_argument("kind", choices=TOY_KINDS)
    p.add_argument("--size", type=int, default=400)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    return parser


def cmd_synth(args) -> int:
    folds = {s: read_corpus(getattr(args, s)) for s in ("train", "dev", "test") if getattr(args, s)}
    if not folds:
        raise ConfigError("give at least one of --train, --dev, --test")
    synth = build_synthetic_set(folds, load_prompt_specs(args.prompts), args.seed, args.count,
                                {"train": args.train_keep, "dev": args.dev_keep})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in synth.splits.items():
        write_corpus(out / f"{name}.synthetic.jsonl", part.essays())
    counts = synth.counts()
    atomic_write_bytes(out / "synthetic_counts.json", dumps_json(counts))
    print(json.dumps(counts, sort_keys=True))
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {k: getattr(args, k) for k in OVERRIDABLE if getattr(args, k, None) is not None}
    cfg = cfg.replace(**changes)
    result = train_run(cfg, args.out)
    print(json.dumps({"selected_epoch": result.manifest["selected_epoch"], "outputs": result.manifest["outputs"]},
                     sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    rows = [r for path in args.predictions for r in read_jsonl(path)]
    report = evaluate_rows(rows, load_prompt_specs(args.prompts), args.pooled_tpra)
    blob = dumps_json(report)
    if args.out:
        atomic_write_bytes(args.out, blob)
    else:
        sys.stdout.write(blob.decode())
    return 0


def cmd_detect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    if ckpt.kind not in JOINT_KINDS:
        raise CheckpointError(f"detect needs a joint checkpoint, got {ckpt.kind}")
    stored = ckpt.extra.get("threshold")
    if args.threshold is not None:
        threshold = DetectionThreshold(args.threshold, 1)
    elif stored:
        threshold = DetectionThreshold.from_dict(stored)
    else:
        raise ConfigError("checkpoint has no threshold (no synthetic dev data); pass --threshold")
    _, model = from_checkpoint(ckpt)
    scales = {pid: s.scale for pid, s in load_prompt_specs(args.prompts).items()}
    rows = predict_rows(ckpt.kind, model, read_corpus(args.corpus), scales, threshold)
    write_jsonl(args.out, rows)
    print(json.dumps({"essays": len(rows), "flagged": sum(r["flagged"] for r in rows)}))
    return 0


def cmd_gradcheck(args) -> int:
    results = gradcheck_suite(args.configs, args.seed, args.tolerance)
    for r in results:
        print(f"{'ok  ' if r['passed'] else 'FAIL'} {r['kind']:<15} k={r['embedding_dim']} d={r['hidden_size']} "
              f"dc={r['cnn_size']} m={r['window']} err={r['max_rel_error']:.2e}")
    return 0 if all(r["passed"] for r in results) else 1


def cmd_toygen(args) -> int:
    counts = write_toy_corpus(args.kind, args.size, args.seed, args.out)
    print(json.dumps(counts, sort_keys=True))
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "detect": cmd_detect,
            "gradcheck": cmd_gradcheck, "toygen": cmd_toygen}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, ValueError, KeyError, OSError) as exc:
        print(f"coherence-aes {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
