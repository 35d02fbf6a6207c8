"""Command-line pipeline: gen-synth, train, evaluate, embed, features.

Exit codes: 0 ok, 1 I/O error, 2 config error, 3 data error, 4 checkpoint
error. All randomness flows from one run seed (--seed overrides the config).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import dataset as ds
from . import embed as emb
from . import synth
from .features import feature_header, handcrafted_features
from .model import (CharmConfig, CheckpointError, MlpConfig, load_checkpoint,
                    save_checkpoint)
from .traineval import (TrainConfig, TrainedModel, TrainingError, evaluate,
                        format_report, report_key_values, train)


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Run configuration: a JSON file with optional sections. Unknown keys are
# rejected. Defaults target the desk-scale synthetic dataset.

_SECTION_KEYS = {
    "train": {"epochs", "lr", "seed", "shuffle"},
    "charm": {"r", "low_hidden", "low_out", "z", "high_hidden", "dropout_p",
              "leaky_slope", "low_out_activation"},
    "mlp": {"hidden", "layers", "dropout_p", "leaky_slope"},
    "sampling": {"stride"},
    "synth": {"seed", "samples_per_class_per_user", "users", "sample_rate_hz",
              "motifs", "grammars"},
}

_CLI_CHARM_DEFAULTS = {"r": 16, "z": 32}  # n_target 512 at synthetic scale


def load_run_config(path=None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    for section, body in raw.items():
        if section not in _SECTION_KEYS:
            raise ConfigError(f"{path}: unknown section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"{path}: section {section!r} must be an object")
        for key in body:
            if key not in _SECTION_KEYS[section]:
                raise ConfigError(f"{path}: unknown key {section}.{key!r}")
    return raw


def build_train_config(cfg: dict, seed_override=None) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    if seed_override is not None:
        section["seed"] = seed_override
    try:
        return TrainConfig(**section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad train config: {e}") from e


def build_charm_config(cfg: dict, q: int, m: int) -> CharmConfig:
    section = {**_CLI_CHARM_DEFAULTS, **cfg.get("charm", {})}
    try:
        return CharmConfig(q=q, m=m, **section)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad charm config: {e}") from e


def build_mlp_config(cfg: dict, n_target: int, q: int, m: int) -> MlpConfig:
    try:
        return MlpConfig(n_target=n_target, q=q, m=m, **cfg.get("mlp", {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad mlp config: {e}") from e


def build_synth_config(cfg: dict, seed_override=None) -> synth.SynthConfig:
    base = synth.default_config()
    section = cfg.get("synth", {})
    kwargs = {
        "motifs": base.motifs,
        "grammars": base.grammars,
        "users": base.users,
        "samples_per_class_per_user": section.get(
            "samples_per_class_per_user", base.samples_per_class_per_user),
        "seed": section.get("seed", base.seed),
        "sample_rate_hz": section.get("sample_rate_hz", base.sample_rate_hz),
    }
    try:
        if "motifs" in section:
            kwargs["motifs"] = {
                name: synth.MotifSpec(
                    name,
                    tuple(synth.ChannelWave(*wave) for wave in spec["channels"]),
                    tuple(spec["duration"]))
                for name, spec in section["motifs"].items()}
        if "grammars" in section:
            kwargs["grammars"] = tuple(
                synth.ActivityGrammar(cls, body["probs"], body["target_len"])
                for cls, body in section["grammars"].items())
        if "users" in section:
            kwargs["users"] = tuple(
                synth.UserProfile(u["id"], u["amp_scale"], u["noise_sigma"])
                for u in section["users"])
        if seed_override is not None:
            kwargs["seed"] = seed_override
        return synth.SynthConfig(**kwargs)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad synth config: {e}") from e


# ---------------------------------------------------------------------------
# Data directory access (manifest + files emitted by gen-synth, or any
# directory following the same manifest layout).

def read_manifest(data_dir):
    path = os.path.join(data_dir, "manifest.json")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as e:
        raise ds.DataError(f"cannot read manifest: {e}") from e
    except json.JSONDecodeError as e:
        raise ds.DataError(f"{path}: invalid JSON: {e}") from e
    return manifest


def manifest_schema(manifest, user_id="") -> ds.SchemaConfig:
    s = manifest["schema"]
    return ds.SchemaConfig(
        delimiter=s["delimiter"],
        channel_columns=tuple(s["channel_columns"]),
        high_label_column=s["high_label_column"],
        low_label_columns=dict(s.get("low_label_columns") or {}) or None,
        user_id=user_id,
        null_label_token=s.get("null_label_token", "null"),
    )


def load_data_dir(data_dir):
    """Returns (segments, ActivityLabelSet, manifest). One or more segments
    per file after null/unknown-label run splitting."""
    manifest = read_manifest(data_dir)
    labels = ds.ActivityLabelSet(tuple(manifest["classes"]))
    rate = manifest.get("sample_rate_hz", 30.0)
    segments = []
    for entry in manifest["files"]:
        schema = manifest_schema(manifest, user_id=entry["user"])
        path = os.path.join(data_dir, entry["file"])
        loaded = ds.load_stream(path, schema, sample_rate_hz=rate)
        segs, _ = ds.segment_by_high_label(
            loaded.stream, loaded.high_labels, labels, schema.null_label_token,
            user_id=entry["user"], low_labels=loaded.low_labels,
            source=entry["file"])
        segments.extend(segs)
    if not segments:
        raise ds.EmptyInputError(f"{data_dir}: no labeled segments found")
    return segments, labels, manifest


def fixed_length_dataset(segments, n_target, stride):
    out = []
    for seg in segments:
        out.extend(ds.make_fixed_length_samples(seg, n_target, stride))
    return out


def _atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".out-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Subcommands

def cmd_gen_synth(args):
    cfg = load_run_config(args.config)
    scfg = build_synth_config(cfg, seed_override=args.seed)
    segments = synth.gen_dataset(scfg)
    synth.write_dataset(segments, scfg, args.out)
    if not args.quiet:
        print(f"wrote {len(segments)} segments "
              f"({len(scfg.grammars)} classes x {len(scfg.users)} users x "
              f"{scfg.samples_per_class_per_user} samples) to {args.out}")
    return 0


def _stride_for(cfg, n_target):
    return cfg.get("sampling", {}).get("stride") or n_target // 2


def cmd_train(args):
    cfg = load_run_config(args.config)
    tcfg = build_train_config(cfg, seed_override=args.seed)
    segments, labels, manifest = load_data_dir(args.data)
    q = manifest["q"]
    m = len(labels)
    if args.model == "charm":
        mcfg = build_charm_config(cfg, q=q, m=m)
        n_target = mcfg.n_target
    else:
        n_charm = build_charm_config(cfg, q=q, m=m)
        mcfg = build_mlp_config(cfg, n_target=n_charm.n_target, q=q, m=m)
        n_target = mcfg.n_target
    samples = fixed_length_dataset(segments, n_target, _stride_for(cfg, n_target))
    train_set, val_set = ds.loso_split(samples, args.held_out_user)
    if not train_set:
        raise TrainingError("held-out user leaves an empty training set")
    trained, history = train(train_set, args.model, tcfg, mcfg,
                             val_segments=val_set)
    save_checkpoint(trained.model, trained.stats, args.out)
    hist_path = args.history or args.out + ".history.json"
    _atomic_write_text(hist_path, json.dumps(
        {"train_loss": history.train_loss, "val_macro_f1": history.val_macro_f1},
        indent=2) + "\n")
    if not args.quiet:
        print(f"trained {args.model} on {len(train_set)} samples "
              f"(held-out user {args.held_out_user}, {tcfg.epochs} epochs)")
        print(f"final mean train loss {history.train_loss[-1]:.4f}, "
              f"val macro-F1 {history.val_macro_f1[-1]:.4f}")
        print(f"checkpoint: {args.out}")
    return 0


def cmd_evaluate(args):
    model, stats = load_checkpoint(args.checkpoint)
    segments, labels, manifest = load_data_dir(args.data)
    if manifest["q"] != model.cfg.q:
        raise ds.DataError(f"data has {manifest['q']} channels, "
                           f"checkpoint expects {model.cfg.q}")
    n_target = model.cfg.n_target
    cfg = load_run_config(args.config)
    samples = fixed_length_dataset(segments, n_target, _stride_for(cfg, n_target))
    _, val_set = ds.loso_split(samples, args.held_out_user)
    if not val_set:
        raise ds.DataError(f"no validation samples for user {args.held_out_user}")
    report = evaluate(TrainedModel(model, stats), val_set)
    text = format_report(report, labels.classes)
    if not args.quiet:
        print(text)
    if args.out:
        _atomic_write_text(args.out, report_key_values(report, labels.classes))
    return 0


def _read_grouping(path):
    groups = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: expected 'label=group' lines, got {line!r}")
            label, group = line.split("=", 1)
            groups[label.strip()] = group.strip()
    if not groups:
        raise ConfigError(f"{path}: empty grouping file")
    return groups


def cmd_embed(args):
    model, stats = load_checkpoint(args.checkpoint)
    if model.kind != "charm":
        raise CheckpointError("embedding extraction requires a charm checkpoint")
    segments, _, manifest = load_data_dir(args.data)
    track = args.track
    windows = []
    labels = []
    sources = []
    from .preprocess import normalize
    for seg in segments:
        if not seg.low_label_tracks or track not in seg.low_label_tracks:
            raise ds.DataError(f"data has no low-level label track {track!r}")
        w, labs = emb.label_pure_windows(normalize(seg.data, stats),
                                         seg.low_label_tracks[track], model.cfg.r)
        windows.append(w)
        labels.extend(labs)
        sources.extend([seg.source] * len(labs))
    allw = np.concatenate(windows, axis=0)
    if allw.shape[0] < 3:
        raise ds.DataError("not enough label-pure windows for embedding analysis")
    if args.grouping:
        groups = _read_grouping(args.grouping)
        labels = [groups.get(lab, lab) for lab in labels]
    feats = model.embed_windows(allw)
    pca = emb.pca_fit(feats, 2)
    coords = emb.pca_transform(pca, feats)
    points = [emb.EmbeddingPoint((c[0], c[1]), lab, src)
              for c, lab, src in zip(coords, labels, sources)]
    emb.export_embedding(points, args.out)
    score = emb.silhouette_score(coords, labels)
    if not args.quiet:
        print(f"{allw.shape[0]} label-pure windows, "
              f"{len(set(labels))} labels -> {args.out}")
        print(f"silhouette: {score:.4f}")
    return 0


def cmd_features(args):
    segments, labels, manifest = load_data_dir(args.data)
    q = manifest["q"]
    names = [f"ch{i}" for i in range(q)]
    header = ["segment_id", "label"] + feature_header(names)
    lines = [",".join(header)]
    for seg in segments:
        feats = handcrafted_features(seg.data)
        lines.append(",".join([seg.source, labels.classes[seg.high_label]]
                              + [repr(float(v)) for v in feats]))
    _atomic_write_text(args.out, "\n".join(lines) + "\n")
    if not args.quiet:
        print(f"wrote {len(segments)} feature rows ({5 * q} columns) to {args.out}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="charm",
        description="Hierarchical high-level activity recognition pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None,
                       help="JSON run configuration (defaults used if omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--quiet", action="store_true", help="suppress output")

    p = sub.add_parser("gen-synth", help="generate the synthetic dataset")
    common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train with a held-out user (LOSO)")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--held-out-user", required=True, help="validation user id")
    p.add_argument("--model", choices=("charm", "mlp"), default="charm")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", default=None,
                   help="training history path (default: <out>.history.json)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on the held-out user")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--held-out-user", required=True)
    p.add_argument("--out", default=None, help="machine-readable report path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("embed", help="export 2-D PCA of low-level embeddings")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--track", default=synth.MOTIF_TRACK,
                   help="low-level label track name")
    p.add_argument("--grouping", default=None,
                   help="file of label=group lines to merge labels")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("features", help="export hand-crafted per-channel features")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_features)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ds.DataError, TrainingError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except CheckpointError as e:
        print(f"checkpoint error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
