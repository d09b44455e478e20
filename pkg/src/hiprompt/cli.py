"""Command-line surface.

Subcommands: ``synth``, ``train``, ``eval``, ``ablate``, ``neighbors``,
``clusters``, ``lowres``. Configuration is flat dotted ``key=value`` text
(e.g. ``train.batch_size=16``); the same dotted keys work as flags
(``--train.batch_size 16``) and flags win over the config file. Every run
directory gets a manifest echoing the resolved configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__
from .data import SyntheticSpec, generate_synthetic, load_corpus, write_synthetic
from .errors import HiPromptError, UnknownLabel
from .hierarchy import load_taxonomy, read_taxonomy_file
from .metrics import cluster_report, confusion_counts, micro_macro_f1, per_label_f1
from .pipeline import (
    RunConfig,
    RunMetrics,
    evaluate,
    load_checkpoint,
    low_resource_run,
    nearest_words,
    save_checkpoint,
    train,
)
from .prompt import load_verbalizer_map
from .report import (
    format_metrics_table,
    plot_clusters,
    plot_low_resource,
    write_json,
    write_run_report,
    write_table,
)

OUTPUT_ROOT_ENV = "HIPROMPT_OUT"

ABLATION_VARIANTS = (
    "flat-template",
    "no-injection",
    "bce-loss",
    "no-mlm",
    "random-connection",
    "depth-increasing",
)

# Dotted config keys -> (dataclass section, field name). "train", "model",
# "encoder" and "eval" sections all resolve into RunConfig; "synth" and
# "lowres" have their own holders.
_RUN_SECTIONS = {
    "train": ("batch_size", "learning_rate", "optimizer", "patience",
              "max_epochs", "seed"),
    "model": ("variant", "scheme", "graph_seed", "use_injection",
              "flat_template", "loss_kind", "use_mlm", "mask_rate",
              "bert_style_masking", "gat_layers"),
    "encoder": ("dim", "num_blocks", "num_heads", "ffn_dim", "max_len",
                "dropout", "tied_mlm"),
    "eval": ("ancestor_closure", "path_consistency", "include_zero_support"),
}
_SYNTH_KEYS = tuple(f.name for f in fields(SyntheticSpec))
_LOWRES_KEYS = ("fraction", "seeds")

_RUN_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def known_keys() -> set[str]:
    keys = {f"{sec}.{name}" for sec, names in _RUN_SECTIONS.items() for name in names}
    keys |= {f"synth.{k}" for k in _SYNTH_KEYS}
    keys |= {f"lowres.{k}" for k in _LOWRES_KEYS}
    return keys


def _coerce(key: str, value: str):
    """Parse a raw string into bool/int/float/tuple where it looks like one."""
    v = value.strip()
    low = v.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if "," in v:
        return tuple(_coerce(key, part) for part in v.split(","))
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        pass
    return v


def parse_kv_file(path: str | Path) -> dict[str, object]:
    settings = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise HiPromptError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        settings[key.strip()] = _coerce(key, value)
    return settings


def parse_overrides(extra: list[str]) -> dict[str, object]:
    """Parse trailing `--dotted.key value` / `--dotted.key=value` flags."""
    settings = {}
    i = 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise HiPromptError(f"unexpected argument: {arg!r}")
        body = arg[2:]
        if "=" in body:
            key, value = body.split("=", 1)
            i += 1
        else:
            key = body
            if i + 1 >= len(extra):
                raise HiPromptError(f"flag --{key} needs a value")
            value = extra[i + 1]
            i += 2
        settings[key] = _coerce(key, value)
    return settings


def validate_keys(settings: dict[str, object]) -> None:
    unknown = sorted(set(settings) - known_keys())
    if unknown:
        raise HiPromptError(f"unknown config keys: {', '.join(unknown)}")


def resolve_settings(args, extra: list[str]) -> dict[str, object]:
    settings: dict[str, object] = {}
    if getattr(args, "config", None):
        settings.update(parse_kv_file(args.config))
    settings.update(parse_overrides(extra))  # flags win
    validate_keys(settings)
    return settings


def run_config_from(settings: dict[str, object]) -> RunConfig:
    kwargs = {}
    for section, names in _RUN_SECTIONS.items():
        for name in names:
            key = f"{section}.{name}"
            if key in settings:
                kwargs[name] = settings[key]
    return RunConfig(**kwargs)


def synth_spec_from(settings: dict[str, object]) -> SyntheticSpec:
    kwargs = {}
    for name in _SYNTH_KEYS:
        key = f"synth.{name}"
        if key in settings:
            value = settings[key]
            if name == "branching" and isinstance(value, int):
                value = (value,)
            kwargs[name] = value
    return SyntheticSpec(**kwargs)


def _out_dir(args) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV, ".")
    out = Path(args.out) if args.out else Path(root) / "runs" / args.command
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, command: str, settings: dict, extras: dict | None = None) -> None:
    manifest = {
        "toolkit_version": __version__,
        "command": command,
        "argv": sys.argv[1:],
        "settings": settings,
    }
    if extras:
        manifest.update(extras)
    write_json(out / "run_manifest.json", manifest)


def _load_datasets(data_dir: Path):
    hier = load_taxonomy(read_taxonomy_file(data_dir / "taxonomy.tsv"))
    datasets = {
        split: load_corpus(data_dir / f"{split}.jsonl", hier)
        for split in ("train", "dev", "test")
        if (data_dir / f"{split}.jsonl").exists()
    }
    return hier, datasets


# --- subcommands ---

def cmd_synth(args, extra):
    settings = resolve_settings(args, extra)
    spec = synth_spec_from(settings)
    out = _out_dir(args)
    corpus = generate_synthetic(spec)
    paths = write_synthetic(corpus, out)
    write_manifest(out, "synth", settings, {"spec": spec.__dict__ | {
        "branching": list(spec.branching)}})
    print(f"wrote taxonomy ({len(corpus.taxonomy)} edges) and splits "
          f"{len(corpus.train)}/{len(corpus.dev)}/{len(corpus.test)} to {out}")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return 0


def _train_common(args, extra, config_mutator=None):
    settings = resolve_settings(args, extra)
    config = run_config_from(settings)
    if config_mutator:
        config_mutator(config)
    data_dir = Path(args.data)
    hier, datasets = _load_datasets(data_dir)
    verbalizer_map = (
        load_verbalizer_map(args.verbalizers) if getattr(args, "verbalizers", None) else None
    )
    out = _out_dir(args)
    model, metrics = train(
        config, hier, datasets, verbalizer_map=verbalizer_map,
        quiet=not args.verbose,
    )
    save_checkpoint(
        out / "checkpoint", model, config,
        read_taxonomy_file(data_dir / "taxonomy.tsv"),
        verbalizer_map=verbalizer_map,
    )
    return settings, config, metrics, out


def cmd_train(args, extra):
    settings, config, metrics, out = _train_common(args, extra)
    write_run_report(out, metrics, config.to_dict())
    write_manifest(out, "train", settings, {"config": config.to_dict()})
    print(format_metrics_table(metrics))
    print(f"artifacts in {out}")
    return 0


def cmd_ablate(args, extra):
    variant = args.variant

    def mutate(config: RunConfig):
        if variant == "flat-template":
            config.flat_template = True
        elif variant == "no-injection":
            config.use_injection = False
        elif variant == "bce-loss":
            config.loss_kind = "bce"
        elif variant == "no-mlm":
            config.use_mlm = False
        elif variant == "random-connection":
            config.scheme = "random"
            config.graph_seed = args.seed if args.seed is not None else config.seed
        elif variant == "depth-increasing":
            config.scheme = "depth-increasing"

    settings, config, metrics, out = _train_common(args, extra, mutate)
    write_run_report(out, metrics, config.to_dict())
    write_manifest(
        out, "ablate", settings,
        {"config": config.to_dict(), "ablation_variant": variant},
    )
    print(f"ablation variant: {variant}")
    print(format_metrics_table(metrics))
    print(f"artifacts in {out}")
    return 0


def cmd_eval(args, extra):
    settings = resolve_settings(args, extra)
    model, config, hier = load_checkpoint(args.checkpoint)
    examples = load_corpus(args.test, hier)
    micro, macro, preds, golds = evaluate(model, examples, config)
    universe = list(range(hier.num_labels))
    counts = confusion_counts(preds, golds, universe)
    label_f1 = per_label_f1(counts)
    per_layer = []
    for m in range(1, hier.depth + 1):
        ids = set(hier.layer_ids(m))
        lm = micro_macro_f1(
            [p & ids for p in preds], [g & ids for g in golds], sorted(ids),
            include_zero_support=config.include_zero_support,
        )
        per_layer.append({"layer": m, "micro_f1": lm[0], "macro_f1": lm[1]})
    name = {n.id: n.name for n in hier.nodes}
    zero_counts = {lid: 0 for lid in universe}
    metrics = RunMetrics(
        micro_f1=micro,
        macro_f1=macro,
        per_layer=per_layer,
        depth_clusters=cluster_report(label_f1, hier, zero_counts, "depth"),
        frequency_clusters=cluster_report(label_f1, hier, zero_counts, "frequency"),
        loss_curve=[],
        dev_curve=[],
        best_epoch=0,
        label_f1={name[lid]: f for lid, f in label_f1.items()},
        confusion={name[lid]: list(c) for lid, c in counts.items()},
    )
    out = _out_dir(args)
    write_run_report(out, metrics, config.to_dict())
    write_manifest(out, "eval", settings, {"checkpoint": str(args.checkpoint),
                                           "test": str(args.test)})
    print(format_metrics_table(metrics))
    print(f"artifacts in {out}")
    return 0


def cmd_neighbors(args, extra):
    resolve_settings(args, extra)
    model, config, hier = load_checkpoint(args.checkpoint)
    if model.cfg.variant not in ("hpt", "soft"):
        raise UnknownLabel(
            f"variant {model.cfg.variant!r} has no virtual label words"
        )
    ranked = nearest_words(
        args.label, model.verbs, model.encoder.tok_emb.weight, model.vocab, k=args.k
    )
    out = _out_dir(args)
    write_table(out / "neighbors.tsv", ("rank", "word", "cosine"),
                [(i + 1, w, f"{s:.4f}") for i, (w, s) in enumerate(ranked)])
    write_manifest(out, "neighbors", {}, {"label": args.label, "k": args.k,
                                          "checkpoint": str(args.checkpoint)})
    print(f"top {len(ranked)} nearest words for {args.label!r}:")
    for i, (w, s) in enumerate(ranked, 1):
        print(f"  [{i}] {w}  ({s:.4f})")
    return 0


def cmd_clusters(args, extra):
    resolve_settings(args, extra)
    payload = json.loads(Path(args.metrics).read_text(encoding="utf-8"))
    m = payload["metrics"]
    if args.mode == "depth":
        if not args.taxonomy:
            raise HiPromptError("depth mode needs --taxonomy")
        hier = load_taxonomy(read_taxonomy_file(args.taxonomy))
        label_f1 = {hier.id_of(n): f for n, f in m["label_f1"].items()}
        counts = {hier.id_of(n): c for n, c in m.get("train_counts", {}).items()}
        table = cluster_report(label_f1, hier, counts, "depth")
    else:
        # Frequency quintiles need only per-label F1 and train counts.
        names = sorted(m["label_f1"])
        ids = {n: i for i, n in enumerate(names)}
        label_f1 = {ids[n]: f for n, f in m["label_f1"].items()}
        counts = {ids[n]: c for n, c in m.get("train_counts", {}).items()}
        from .metrics import frequency_clusters
        clusters = frequency_clusters(sorted(label_f1), counts)
        table = {
            name: (sum(label_f1[l] for l in mem) / len(mem) if mem else 0.0)
            for name, mem in clusters.items()
        }
    out = _out_dir(args)
    write_table(out / f"clusters_{args.mode}.tsv", ("cluster", "macro_f1"),
                [(k, f"{v:.6f}") for k, v in table.items()])
    plot_clusters(table, f"clusters by {args.mode}", out / f"clusters_{args.mode}.png")
    write_manifest(out, "clusters", {}, {"metrics": str(args.metrics),
                                         "mode": args.mode})
    print(f"{'cluster':<12}macro-F1")
    for k, v in table.items():
        print(f"{k:<12}{v:.4f}")
    return 0


def cmd_lowres(args, extra):
    settings = resolve_settings(args, extra)
    config = run_config_from(settings)
    fraction = settings.get("lowres.fraction", 0.10)
    seeds = settings.get("lowres.seeds", (0, 1, 2))
    if isinstance(seeds, int):
        seeds = (seeds,)
    hier, datasets = _load_datasets(Path(args.data))
    summary = low_resource_run(config, hier, datasets, fraction=fraction, seeds=seeds)
    out = _out_dir(args)
    write_json(out / "lowres.json", {"config": config.to_dict(), "summary": summary})
    plot_low_resource(summary, out / "lowres.png")
    write_manifest(out, "lowres", settings, {"config": config.to_dict()})
    print(
        f"low-resource ({fraction:.0%}, seeds {list(seeds)}): "
        f"micro-F1 {summary['micro_f1']['mean']:.4f} ± {summary['micro_f1']['std']:.4f}, "
        f"macro-F1 {summary['macro_f1']['mean']:.4f} ± {summary['macro_f1']['std']:.4f}"
    )
    print(f"artifacts in {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiprompt",
        description="Hierarchy-aware prompt tuning for hierarchical text classification.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=False, config=True):
        if config:
            p.add_argument("--config", help="flat key=value config file")
        if data:
            p.add_argument("--data", required=True,
                           help="directory with taxonomy.tsv and *.jsonl splits")
        p.add_argument("--out", help=f"output directory (default under ${OUTPUT_ROOT_ENV})")
        p.add_argument("--verbose", action="store_true", help="per-epoch progress")

    p = sub.add_parser("synth", help="generate a synthetic hierarchical corpus")
    common(p)

    p = sub.add_parser("train", help="train a model and write checkpoint + report")
    common(p, data=True)
    p.add_argument("--verbalizers", help="label<TAB>word map for the hard prompt")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test file")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test", required=True)

    p = sub.add_parser("ablate", help="train a named ablation variant")
    common(p, data=True)
    p.add_argument("--variant", required=True, choices=ABLATION_VARIANTS)
    p.add_argument("--seed", type=int, help="seed for the random-connection scheme")
    p.add_argument("--verbalizers")

    p = sub.add_parser("neighbors", help="nearest vocabulary words to a label word")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--label", required=True)
    p.add_argument("-k", type=int, default=8)

    p = sub.add_parser("clusters", help="cluster table from a metrics report")
    common(p, config=False)
    p.add_argument("--metrics", required=True, help="metrics.json from train/eval")
    p.add_argument("--mode", required=True, choices=("depth", "frequency"))
    p.add_argument("--taxonomy", help="taxonomy.tsv (depth mode)")

    p = sub.add_parser("lowres", help="low-resource protocol: mean ± std over seeds")
    common(p, data=True)
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "neighbors": cmd_neighbors,
    "clusters": cmd_clusters,
    "lowres": cmd_lowres,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return COMMANDS[args.command](args, extra)
    except HiPromptError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: FileNotFound: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
