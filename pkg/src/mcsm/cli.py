"""Command-line entry point.

Subcommands: synth, train, eval, fuse, gradcheck, sweep. One JSON config
document drives a run; CLI flags override config fields and the effective
resolved config is echoed into the output directory for provenance. All
outputs land under --out. Exit codes: 0 success, 2 validation error,
3 divergence, 4 gradcheck failure.
"""

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data
from . import fusion_eval as fe
from . import numcore as nc
from . import semantic_space as ss
from . import training
from .attention import attended_sequence, attention_weights
from .encoders import lstm_sequence, lstm_step, temporal_conv_block
from .errors import (ContractError, CorruptFileError, DivergenceError, EmptyInputError,
                     EmptySupportError, FormatError, InvalidValueError, ManifestError,
                     NoNegativeError, ShapeError, TooShortError)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_GRADCHECK = 4

_VALIDATION_ERRORS = (ContractError, ShapeError, ManifestError, FormatError,
                      CorruptFileError, NoNegativeError, TooShortError,
                      EmptyInputError, EmptySupportError, InvalidValueError,
                      FileNotFoundError, json.JSONDecodeError)


@dataclass
class ModelConfig:
    hidden_dim: int = 32
    attention_dim: int = 32
    target_dim: int = 32  # image space; the text space's target is the image-global dim
    lstm_units: int = 1
    conv_specs: tuple = ((16, 3, 1), (16, 3, 1), (16, 2, 1))

    def __post_init__(self):
        self.conv_specs = tuple(tuple(int(v) for v in spec) for spec in self.conv_specs)
        if self.lstm_units not in (1, 2):
            raise ContractError("lstm_units must be 1 or 2")


@dataclass
class EvalConfig:
    split: str = "test"
    per_space: bool = True
    late_fusion: bool = True
    adaptive_fusion: bool = True

    def __post_init__(self):
        if self.split not in data.SPLITS:
            raise ContractError(f"eval split must be one of {data.SPLITS}")


_TOP_LEVEL_KEYS = {"manifest", "out", "seed", "model", "train", "synth", "eval", "checkpoints"}


def _from_mapping(cls, mapping, where):
    mapping = dict(mapping or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ContractError(f"unknown {where} config keys: {unknown}")
    return cls(**mapping)


def load_config(path) -> dict:
    if path is None:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise ContractError("config must be a JSON object")
    unknown = sorted(set(cfg) - _TOP_LEVEL_KEYS)
    if unknown:
        raise ContractError(f"unknown config keys: {unknown}")
    return cfg


def _resolve_seed(cfg, args) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed")
    if seed is None:
        raise ContractError("a seed is mandatory: set it in the config or pass --seed")
    return int(seed)


def _resolve_out(cfg, args) -> Path:
    out = args.out or cfg.get("out")
    if out is None:
        raise ContractError("an output directory is required: set 'out' or pass --out")
    return Path(out)


def _echo_config(out_dir: Path, command: str, resolved: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, **resolved}
    (out_dir / "config_echo.json").write_text(json.dumps(payload, indent=1, default=str))


def _load_dataset(cfg, args):
    manifest = getattr(args, "manifest", None) or cfg.get("manifest")
    if manifest is None:
        raise ContractError("a dataset manifest is required: set 'manifest' or pass --manifest")
    return data.load_manifest(manifest), str(manifest)


def _reference_split(dataset):
    for name in data.SPLITS:
        if name in dataset.splits:
            return dataset.splits[name]
    raise ContractError("dataset has no populated split")


def _grid_of(length: int) -> int:
    g = int(np.sqrt(length))
    return g if g * g == length else 0


def build_image_space(dataset, model_cfg: ModelConfig, seed: int) -> ss.SemanticSpaceModel:
    split = _reference_split(dataset)
    dims = ss.DimConfig(feature_dim=split.image_seqs.shape[2],
                        hidden_dim=model_cfg.hidden_dim,
                        attention_dim=model_cfg.attention_dim,
                        target_dim=model_cfg.target_dim,
                        conv_layers=0,
                        grid_size=_grid_of(split.image_seqs.shape[1]))
    return ss.create_image_space(dims, word_dim=split.text_words.shape[2],
                                 seed=seed, lstm_units=model_cfg.lstm_units)


def build_text_space(dataset, model_cfg: ModelConfig, seed: int) -> ss.SemanticSpaceModel:
    split = _reference_split(dataset)
    dims = ss.DimConfig(feature_dim=split.text_words.shape[2],
                        hidden_dim=model_cfg.hidden_dim,
                        attention_dim=model_cfg.attention_dim,
                        target_dim=split.image_globals.shape[1],
                        conv_layers=len(model_cfg.conv_specs),
                        grid_size=0)
    return ss.create_text_space(dims, conv_specs=model_cfg.conv_specs,
                                seed=seed, lstm_units=model_cfg.lstm_units)


# seeds for the independent random streams, derived from the master seed
def _derived_seeds(seed: int) -> dict:
    return {"synth": seed, "init_image": seed + 1, "sample_image": seed + 2,
            "init_text": seed + 3, "sample_text": seed + 4}


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args)
    out_dir = _resolve_out(cfg, args)
    synth_cfg = _from_mapping(data.SynthConfig, {**cfg.get("synth", {}), "seed": seed}, "synth")

    if out_dir.exists() and any(out_dir.iterdir()) and not args.force:
        raise ContractError(f"output directory {out_dir} is not empty (use --force)")

    dataset = data.generate_synthetic(synth_cfg)
    manifest = data.save_dataset(dataset, out_dir)
    _echo_config(out_dir, "synth", {"seed": seed, "out": str(out_dir),
                                    "synth": dataclasses.asdict(synth_cfg)})
    n_img = sum(1 for i in dataset.instances if i.modality == "image")
    print(f"wrote {manifest}")
    print(f"instances: {n_img} images + {len(dataset.instances) - n_img} texts, "
          f"{synth_cfg.categories} categories")
    for name in data.SPLITS:
        print(f"  {name}: {len(dataset.splits[name])} pairs")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args)
    out_dir = _resolve_out(cfg, args)
    seeds = _derived_seeds(seed)
    model_cfg = _from_mapping(ModelConfig, cfg.get("model"), "model")
    dataset, manifest = _load_dataset(cfg, args)

    space = args.space
    train_cfg = _from_mapping(training.TrainConfig,
                              {**cfg.get("train", {}), "seed": seeds[f"sample_{space}"]},
                              "train")
    if args.max_steps is not None:
        train_cfg.max_steps = args.max_steps

    if space == "image":
        model = build_image_space(dataset, model_cfg, seeds["init_image"])
    else:
        model = build_text_space(dataset, model_cfg, seeds["init_text"])

    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(out_dir, f"train --space {space}", {
        "seed": seed, "out": str(out_dir), "manifest": manifest,
        "model": dataclasses.asdict(model_cfg), "train": dataclasses.asdict(train_cfg)})

    trace_path = out_dir / f"loss_trace_{space}.csv"
    started = time.time()
    try:
        result = training.train(model, dataset, train_cfg)
    except DivergenceError as exc:
        partial = training.TrainResult()
        partial.steps = [s for s, _ in exc.trace]
        partial.losses = [l for _, l in exc.trace]
        partial.write_csv(trace_path)
        print(f"error: training diverged: {exc}", file=sys.stderr)
        print(f"partial trace preserved at {trace_path}", file=sys.stderr)
        return EXIT_DIVERGENCE

    result.write_csv(trace_path)
    ckpt_path = out_dir / f"{space}_space.mcsc"
    ss.save_checkpoint(model, ckpt_path)
    print(f"trained {space} space: {train_cfg.max_steps} steps "
          f"in {time.time() - started:.1f}s, final loss {result.losses[-1]:.6g}")
    print(f"checkpoint: {ckpt_path}")
    print(f"loss trace: {trace_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def format_results_table(rows) -> str:
    """Aligned method/MAP table: rows of (name, map_i2t, map_t2i)."""
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'method':<{width}}  image->text  text->image  average"]
    for name, i2t, t2i in rows:
        lines.append(f"{name:<{width}}  {i2t:>11.4f}  {t2i:>12.4f}  {(i2t + t2i) / 2:>7.4f}")
    return "\n".join(lines)


def _eval_space_rows(sim, labels, name, out_dir):
    fwd = fe.retrieval_eval(sim, labels, labels, "image2text")
    bwd = fe.retrieval_eval(sim, labels, labels, "text2image")
    fwd.write_csv(out_dir / f"metrics_{name}_image2text.csv")
    bwd.write_csv(out_dir / f"metrics_{name}_text2image.csv")
    return fwd.map_score, bwd.map_score


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out_dir = _resolve_out(cfg, args)
    eval_cfg = _from_mapping(EvalConfig, cfg.get("eval"), "eval")
    if args.split:
        eval_cfg.split = args.split
    dataset, manifest = _load_dataset(cfg, args)
    if eval_cfg.split not in dataset.splits:
        raise ContractError(f"dataset has no '{eval_cfg.split}' split")
    split = dataset.splits[eval_cfg.split]

    ckpt_cfg = cfg.get("checkpoints", {})
    image_ckpt = args.image_ckpt or ckpt_cfg.get("image")
    text_ckpt = args.text_ckpt or ckpt_cfg.get("text")
    if image_ckpt is None and text_ckpt is None:
        raise ContractError("eval needs at least one checkpoint (--image-ckpt / --text-ckpt)")

    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(out_dir, "eval", {
        "out": str(out_dir), "manifest": manifest,
        "eval": dataclasses.asdict(eval_cfg),
        "checkpoints": {"image": image_ckpt and str(image_ckpt),
                        "text": text_ckpt and str(text_ckpt)}})

    labels = split.labels
    rows = []
    sim_i = sim_t = None
    if image_ckpt is not None:
        model = ss.load_checkpoint(image_ckpt)
        ss.check_dims_against_split(model, split)
        sim_i = ss.similarity_matrix_split(model, split)
        data.save_feature_file(out_dir / "sim_image.mcsf", sim_i.values)
        if eval_cfg.per_space:
            rows.append(("MCSM-image", *_eval_space_rows(sim_i, labels, "image", out_dir)))
    if text_ckpt is not None:
        model = ss.load_checkpoint(text_ckpt)
        ss.check_dims_against_split(model, split)
        sim_t = ss.similarity_matrix_split(model, split)
        data.save_feature_file(out_dir / "sim_text.mcsf", sim_t.values)
        if eval_cfg.per_space:
            rows.append(("MCSM-text", *_eval_space_rows(sim_t, labels, "text", out_dir)))

    if sim_i is not None and sim_t is not None:
        if eval_cfg.late_fusion:
            rows.append(("MCSM-LF", *_eval_space_rows(fe.late_fuse(sim_i, sim_t),
                                                      labels, "late_fused", out_dir)))
        if eval_cfg.adaptive_fusion:
            rows.append(("MCSM", *_eval_space_rows(fe.adaptive_fuse(sim_i, sim_t),
                                                   labels, "fused", out_dir)))

    with open(out_dir / "summary.csv", "w") as fh:
        fh.write("method,map_image2text,map_text2image,map_average\n")
        for name, i2t, t2i in rows:
            fh.write(f"{name},{i2t:.10g},{t2i:.10g},{(i2t + t2i) / 2:.10g}\n")
    print(format_results_table(rows))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fuse
# ---------------------------------------------------------------------------


def cmd_fuse(args) -> int:
    cfg = load_config(args.config)
    out_dir = _resolve_out(cfg, args)
    sim_i = data.load_feature_file(args.sim_i)
    sim_t = data.load_feature_file(args.sim_t)
    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(out_dir, "fuse", {"out": str(out_dir),
                                   "sim_i": str(args.sim_i), "sim_t": str(args.sim_t)})
    fused = fe.adaptive_fuse(sim_i, sim_t)
    late = fe.late_fuse(sim_i, sim_t)
    data.save_feature_file(out_dir / "fused_adaptive.mcsf", fused.values)
    data.save_feature_file(out_dir / "fused_late.mcsf", late.values)
    print(f"wrote {out_dir / 'fused_adaptive.mcsf'} and {out_dir / 'fused_late.mcsf'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

# desk-scale check dims: 3x3 grid, 8-d features, hidden 8, target 8, text length 6
_CHECK = dict(grid=3, feature_dim=8, hidden_dim=8, target_dim=8, attention_dim=8,
              word_dim=8, text_len=6)


def _check_dataset():
    return data.generate_synthetic(data.SynthConfig(
        categories=3, train_pairs=3, val_pairs=1, test_pairs=1,
        grid_size=_CHECK["grid"], region_dim=_CHECK["feature_dim"],
        image_global_dim=_CHECK["target_dim"], word_dim=_CHECK["word_dim"],
        text_len_min=_CHECK["text_len"], text_len_max=_CHECK["text_len"],
        text_global_dim=_CHECK["word_dim"], center_scale=1.0, noise=0.1, seed=5))


def gradcheck_blocks(step: float = 1e-5, tolerance: float = 1e-4):
    """Gradient-check every block and both composed losses at desk dims.

    Returns a list of (block name, GradCheckReport), all in float64.
    """
    rng = np.random.default_rng(0)
    d = _CHECK
    blocks = []

    store = nc.ParamStore()
    from .encoders import init_conv_block, init_lstm_params, init_projection
    from .attention import init_attention_params

    lstm = init_lstm_params(store, "lstm", d["feature_dim"], d["hidden_dim"], rng, np.float64)
    x = rng.normal(size=(2, d["feature_dim"]))
    h0 = rng.normal(size=(2, d["hidden_dim"])) * 0.1
    c0 = rng.normal(size=(2, d["hidden_dim"])) * 0.1

    def f_step():
        h, c = lstm_step(nc.constant(x), nc.constant(h0), nc.constant(c0), lstm)
        return nc.mean_all(nc.hadamard(h, nc.add(c, c)))

    blocks.append(("lstm_step", nc.grad_check(f_step, store, step, tolerance)))

    store2 = nc.ParamStore()
    lstm2 = init_lstm_params(store2, "lstm", d["feature_dim"], d["hidden_dim"], rng, np.float64)
    seq = rng.normal(size=(5, d["feature_dim"]))

    def f_seq():
        return nc.mean_all(nc.stack_columns(lstm_sequence(seq, lstm2)))

    blocks.append(("lstm_sequence", nc.grad_check(f_seq, store2, step, tolerance)))

    store3 = nc.ParamStore()
    conv = init_conv_block(store3, "", d["word_dim"], [(8, 2, 1), (8, 2, 2)], rng, np.float64)
    words3 = rng.normal(size=(2, d["text_len"], d["word_dim"]))

    def f_conv():
        return nc.mean_all(nc.tanh(temporal_conv_block(nc.constant(words3), conv)))

    blocks.append(("temporal_conv_block", nc.grad_check(f_conv, store3, step, tolerance)))

    store4 = nc.ParamStore()
    attn = init_attention_params(store4, "attn", d["target_dim"], d["attention_dim"],
                                 rng, np.float64)
    hidden = rng.normal(size=(4, d["target_dim"]))
    mask = np.array([True, True, True, False])

    def f_attn():
        weights = attention_weights(hidden, attn, mask=mask)
        return nc.mean_all(nc.tanh(attended_sequence(hidden, weights)))

    blocks.append(("attention", nc.grad_check(f_attn, store4, step, tolerance)))

    ds = _check_dataset()
    split = ds.splits["train"]
    dims_i = ss.DimConfig(feature_dim=d["feature_dim"], hidden_dim=d["hidden_dim"],
                          attention_dim=d["attention_dim"], target_dim=d["target_dim"],
                          conv_layers=0, grid_size=d["grid"])
    img = ss.create_image_space(dims_i, word_dim=d["word_dim"], seed=1, dtype=np.float64)
    dims_t = ss.DimConfig(feature_dim=d["word_dim"], hidden_dim=d["hidden_dim"],
                          attention_dim=d["attention_dim"], target_dim=d["target_dim"],
                          conv_layers=2, grid_size=0)
    txt = ss.create_text_space(dims_t, conv_specs=((8, 2, 1), (8, 2, 2)),
                               seed=2, dtype=np.float64)

    from .encoders import encode_text_global
    seq_i = split.image_seqs[0].astype(np.float64)
    words_i = split.text_words[0, :split.text_valid[0]].astype(np.float64)

    def f_sim_image():
        q = encode_text_global(words_i, img.text_global_proj)
        return ss.sim_image_space(seq_i, q, img)

    blocks.append(("sim_image_space", nc.grad_check(f_sim_image, img.store, step, tolerance)))

    q_img = split.image_globals[0].astype(np.float64)

    def f_sim_text():
        return ss.sim_text_space(words_i, q_img, txt)

    blocks.append(("sim_text_space", nc.grad_check(f_sim_text, txt.store, step, tolerance)))

    batch = training.sample_triplets(split, 2, np.random.default_rng(3))

    img2 = ss.create_image_space(dims_i, word_dim=d["word_dim"], seed=4, dtype=np.float64)

    def f_loss_image():
        return training.loss_image_space(batch, split, img2, 0.5)

    blocks.append(("loss_image_space", nc.grad_check(f_loss_image, img2.store, step, tolerance)))

    txt2 = ss.create_text_space(dims_t, conv_specs=((8, 2, 1), (8, 2, 2)),
                                seed=5, dtype=np.float64)

    def f_loss_text():
        return training.loss_text_space(batch, split, txt2, 0.5)

    blocks.append(("loss_text_space", nc.grad_check(f_loss_text, txt2.store, step, tolerance)))
    return blocks


def cmd_gradcheck(args) -> int:
    started = time.time()
    blocks = gradcheck_blocks(step=args.step, tolerance=args.tolerance)
    all_passed = True
    for name, report in blocks:
        worst = report.worst()
        status = "pass" if report.passed else "FAIL"
        print(f"{name:<22} max rel err {worst.max_rel_error:10.3e} "
              f"({worst.name})  {status}")
        if not report.passed:
            all_passed = False
            for entry in report.entries:
                if not entry.passed:
                    print(f"    {entry.name}: {entry.max_rel_error:.3e}")
    print(f"checked {len(blocks)} blocks in {time.time() - started:.1f}s "
          f"(step {args.step:g}, tolerance {args.tolerance:g})")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "gradcheck.csv", "w") as fh:
            fh.write("block,parameter,max_rel_error,passed\n")
            for name, report in blocks:
                for entry in report.entries:
                    fh.write(f"{name},{entry.name},{entry.max_rel_error:.6e},{entry.passed}\n")
    return EXIT_OK if all_passed else EXIT_GRADCHECK


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = _resolve_seed(cfg, args)
    out_dir = _resolve_out(cfg, args)
    seeds = _derived_seeds(seed)
    model_cfg = _from_mapping(ModelConfig, cfg.get("model"), "model")
    dataset, manifest = _load_dataset(cfg, args)

    values = []
    for v in args.values:
        if v in values:
            print(f"warning: duplicate value {v} ignored", file=sys.stderr)
        else:
            values.append(v)

    out_dir.mkdir(parents=True, exist_ok=True)
    _echo_config(out_dir, f"sweep --param {args.param}", {
        "seed": seed, "out": str(out_dir), "manifest": manifest,
        "model": dataclasses.asdict(model_cfg),
        "train": cfg.get("train", {}), "values": values})

    eval_split = dataset.splits.get("val") or dataset.splits["test"]
    rows = []
    for value in values:
        train_map = {**cfg.get("train", {})}
        if args.param == "margin":
            train_map["margin_image"] = value
            train_map["margin_text"] = value
        else:
            train_map["learning_rate"] = value

        img = build_image_space(dataset, model_cfg, seeds["init_image"])
        img_cfg = _from_mapping(training.TrainConfig,
                                {**train_map, "seed": seeds["sample_image"]}, "train")
        training.train(img, dataset, img_cfg)
        txt = build_text_space(dataset, model_cfg, seeds["init_text"])
        txt_cfg = _from_mapping(training.TrainConfig,
                                {**train_map, "seed": seeds["sample_text"]}, "train")
        training.train(txt, dataset, txt_cfg)

        sim_i = ss.similarity_matrix_split(img, eval_split)
        sim_t = ss.similarity_matrix_split(txt, eval_split)
        fused = fe.adaptive_fuse(sim_i, sim_t)
        i2t = fe.retrieval_eval(fused, eval_split.labels, eval_split.labels,
                                "image2text").map_score
        t2i = fe.retrieval_eval(fused, eval_split.labels, eval_split.labels,
                                "text2image").map_score
        rows.append((value, i2t, t2i))
        print(f"{args.param}={value:g}: MAP {i2t:.4f} / {t2i:.4f} "
              f"(average {((i2t + t2i) / 2):.4f})")

    with open(out_dir / f"sweep_{args.param}.csv", "w") as fh:
        fh.write(f"{args.param},map_image2text,map_text2image,map_average\n")
        for value, i2t, t2i in rows:
            fh.write(f"{value:g},{i2t:.10g},{t2i:.10g},{(i2t + t2i) / 2:.10g}\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcsm",
        description="Modality-specific cross-modal similarity: train, fuse, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_manifest=False):
        p.add_argument("--config", type=Path, help="JSON run config")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--force", action="store_true", help="overwrite non-empty outputs")
        if needs_manifest:
            p.add_argument("--manifest", type=Path, help="dataset manifest (overrides config)")

    p = sub.add_parser("synth", help="write a synthetic paired dataset")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one semantic space")
    common(p, needs_manifest=True)
    p.add_argument("--space", choices=("image", "text"), required=True)
    p.add_argument("--max-steps", type=int, help="override train.max_steps")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate checkpoints with MAP and fusion")
    common(p, needs_manifest=True)
    p.add_argument("--image-ckpt", type=Path)
    p.add_argument("--text-ckpt", type=Path)
    p.add_argument("--split", choices=data.SPLITS)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fuse", help="fuse two saved similarity matrices")
    common(p)
    p.add_argument("--sim-i", type=Path, required=True, help="image-space matrix (.mcsf)")
    p.add_argument("--sim-t", type=Path, required=True, help="text-space matrix (.mcsf)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("gradcheck", help="finite-difference check of every block")
    common(p)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train/evaluate across margin or lr values")
    common(p, needs_manifest=True)
    p.add_argument("--param", choices=("margin", "lr"), required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, ManifestError) and exc.offenders:
            for offender in exc.offenders:
                print(f"  - {offender}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
