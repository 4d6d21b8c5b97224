"""Command-line interface: ingest, train, predict, evaluate, inspect-path.

Configuration comes from an optional plain-text key=value file plus
command-line overrides; relative data paths resolve against the
RXNBRIDGE_DATA_DIR environment variable when it is set. Reports are
written as delimited text with a matplotlib figure alongside.
"""

from __future__ import annotations

import argparse
import os
import sys

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import bridge
from .chem import (
    ReactionError,
    align_reaction,
    graph_to_smiles,
    smiles_to_graph,
)
from .model import ModelConfig
from .train import (
    SampleConfig,
    TrainConfig,
    load_checkpoint,
    predict_smiles,
    save_checkpoint,
    train,
)

DATA_DIR_ENV = "RXNBRIDGE_DATA_DIR"

LOSS_COLUMNS = ("step", "total", "atom", "aromatic", "charge", "bond")


def resolve_path(path: str) -> str:
    """Resolve a relative path against RXNBRIDGE_DATA_DIR when set."""
    root = os.environ.get(DATA_DIR_ENV)
    if root and not os.path.isabs(path):
        return os.path.join(root, path)
    return path


def load_config_file(path: str) -> dict[str, str]:
    """Parse key=value lines; '#' starts a comment, blank lines ignored."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _merged_option(args, config: dict[str, str], key: str, cast, default):
    """CLI flag > config file > default."""
    cli_value = getattr(args, key.replace("-", "_"), None)
    if cli_value is not None:
        return cli_value
    if key in config:
        return cast(config[key])
    return default


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    input_path = resolve_path(args.input)
    out_dir = resolve_path(args.output_dir)
    fractions = [float(x) for x in args.fractions.split(",")]
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        print("error: fractions must be three non-negative values summing to 1",
              file=sys.stderr)
        return 2
    os.makedirs(out_dir, exist_ok=True)

    accepted: list[str] = []
    rejected: list[tuple[int, str, str]] = []
    with open(input_path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            rejected.append((lineno, "empty", line))
            continue
        try:
            align_reaction(line)
        except ReactionError as e:
            rejected.append((lineno, e.code, line))
            continue
        accepted.append(line.strip())
    if not accepted:
        print("error: no reactions survived filtering", file=sys.stderr)
        return 2

    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(accepted))
    n = len(accepted)
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    splits = {
        "train": [accepted[i] for i in order[:n_train]],
        "valid": [accepted[i] for i in order[n_train : n_train + n_valid]],
        "test": [accepted[i] for i in order[n_train + n_valid :]],
    }
    for name, rows in splits.items():
        with open(os.path.join(out_dir, f"{name}.txt"), "w", encoding="utf-8") as f:
            f.write("".join(r + "\n" for r in rows))
    with open(os.path.join(out_dir, "rejected.tsv"), "w", encoding="utf-8") as f:
        f.write("line\treason\ttext\n")
        for lineno, reason, text in rejected:
            f.write(f"{lineno}\t{reason}\t{text}\n")

    assert len(accepted) + len(rejected) == len(lines)
    print(f"read {len(lines)} lines: accepted {len(accepted)}, "
          f"rejected {len(rejected)}")
    for name, rows in splits.items():
        print(f"  {name}: {len(rows)}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _write_loss_log(path: str, log: list[dict[str, float]], log_every: int) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(LOSS_COLUMNS) + "\n")
        last_step = int(log[-1]["step"]) if log else 0
        for row in log:
            step = int(row["step"])
            if step % log_every and step != last_step:
                continue
            f.write(
                f"{step},{row['total']:.6f},{row['atom']:.6f},"
                f"{row['aromatic']:.6f},{row['charge']:.6f},{row['bond']:.6f}\n"
            )


def _plot_loss_curve(log: list[dict[str, float]], path: str) -> None:
    steps = [r["step"] for r in log]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(steps, [r["total"] for r in log], label="total", linewidth=2)
    for key in ("atom", "aromatic", "charge", "bond"):
        ax.plot(steps, [r[key] for r in log], label=key, alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_train(args) -> int:
    config = load_config_file(resolve_path(args.config)) if args.config else {}
    getter = lambda key, cast, default: _merged_option(args, config, key, cast, default)

    train_file = getter("train_file", str, None)
    if train_file is None:
        print("error: train_file is required (flag or config)", file=sys.stderr)
        return 2
    checkpoint_path = resolve_path(getter("checkpoint", str, "checkpoint.bin"))
    loss_log_path = resolve_path(getter("loss_log", str, "loss_log.csv"))
    if checkpoint_path == loss_log_path:
        print("error: checkpoint and loss_log paths must differ", file=sys.stderr)
        return 2

    try:
        train_cfg = TrainConfig(
            n_steps=getter("n_steps", int, 2000),
            batch_size=getter("batch_size", int, 16),
            lr=getter("lr", float, 1e-4),
            warmup_steps=getter("warmup_steps", int, 100),
            weight_decay=getter("weight_decay", float, 0.01),
            grad_clip=getter("grad_clip", float, 1.0),
            sigma=getter("sigma", float, 1.0),
            seed=getter("seed", int, 0),
            log_every=getter("log_every", int, 10),
            task_mix=getter("task_mix", str, "multi_task"),
            lr_decay=getter("lr_decay", str, "constant"),
        )
        model_cfg = ModelConfig(
            latent_dim=getter("latent_dim", int, 256),
            n_enc_layers=getter("n_enc_layers", int, 6),
            n_merge_layers=getter("n_merge_layers", int, 6),
            n_dec_layers=getter("n_dec_layers", int, 12),
            n_heads=getter("n_heads", int, 8),
        )
    except ValueError as e:
        print(f"error: bad configuration: {e}", file=sys.stderr)
        return 2

    pairs = []
    with open(resolve_path(train_file), encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                pairs.append(align_reaction(line))
            except ReactionError as e:
                print(f"error: {train_file}:{lineno}: {e}", file=sys.stderr)
                return 2
    if not pairs:
        print("error: empty training corpus", file=sys.stderr)
        return 2

    params = None
    start_step = 0
    if args.resume:
        params, ckpt_cfg, meta = load_checkpoint(resolve_path(args.resume))
        if ckpt_cfg != model_cfg:
            print("error: checkpoint model configuration differs from requested",
                  file=sys.stderr)
            return 2
        start_step = int(meta.get("step", "0"))
        print(f"resuming from step {start_step}")

    def log_fn(stats):
        print(f"step {int(stats['step']):6d}  loss {stats['total']:.4f}  "
              f"(atom {stats['atom']:.4f} aromatic {stats['aromatic']:.4f} "
              f"charge {stats['charge']:.4f} bond {stats['bond']:.4f})")

    params, log = train(pairs, model_cfg, train_cfg, params=params,
                        log_fn=log_fn, start_step=start_step)
    save_checkpoint(checkpoint_path, params, model_cfg,
                    {"step": str(train_cfg.n_steps), "seed": str(train_cfg.seed)})
    _write_loss_log(loss_log_path, log, train_cfg.log_every)
    figure_path = os.path.splitext(loss_log_path)[0] + ".png"
    _plot_loss_curve(log, figure_path)
    print(f"checkpoint: {checkpoint_path}")
    print(f"loss log: {loss_log_path}")
    print(f"loss curve: {figure_path}")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def _input_graph(line: str, direction: str):
    """A prediction input is either an aligned reaction (the relevant side
    is used, keeping placeholder atoms for retro) or plain molecules."""
    if ">" in line:
        pair = align_reaction(line)
        return pair.reactants if direction == "forward" else pair.product
    side = "reactant" if direction == "forward" else "product"
    return smiles_to_graph(line, side)


def cmd_predict(args) -> int:
    params, model_cfg, _ = load_checkpoint(resolve_path(args.checkpoint))
    sample_cfg = SampleConfig(
        n_integration_steps=args.n_steps,
        n_samples=args.n_samples,
        sigma=args.sigma_sampling,
        seed=args.seed,
    )
    direction = "forward" if args.direction == "forward" else "reverse"
    with open(resolve_path(args.input), encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]

    n_invalid = 0
    rows = []
    for idx, line in enumerate(lines):
        try:
            source = _input_graph(line, direction)
        except ReactionError as e:
            print(f"warning: input {idx}: {e}; skipped", file=sys.stderr)
            rows.append((idx, []))
            continue
        rng = np.random.default_rng([args.seed, idx])
        ranked = predict_smiles(source, direction, params, model_cfg,
                                sample_cfg, rng)
        n_invalid += sample_cfg.n_samples - sum(c for _, c in ranked)
        rows.append((idx, ranked))

    out_path = resolve_path(args.output)
    with open(out_path, "w", encoding="utf-8") as f:
        for idx, ranked in rows:
            for rank, (smi, freq) in enumerate(ranked, start=1):
                f.write(f"{idx}\t{rank}\t{freq}\t{smi}\n")
    print(f"{len(lines)} inputs, {n_invalid} undecodable samples dropped")
    print(f"predictions: {out_path}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def read_predictions(path: str) -> dict[int, list[str]]:
    out: dict[int, list[str]] = {}
    with open(path, encoding="utf-8") as f:
        for raw in f:
            raw = raw.rstrip("\n")
            if not raw:
                continue
            idx_s, rank_s, _freq, smi = raw.split("\t")
            out.setdefault(int(idx_s), [])
            if int(rank_s) != len(out[int(idx_s)]) + 1:
                raise ValueError(f"non-contiguous ranks for input {idx_s}")
            out[int(idx_s)].append(smi)
    return out


def top_k_accuracies(
    candidates: dict[int, list[str]], truths: list[str], ks=(1, 3, 5)
) -> dict[int, float]:
    n = len(truths)
    hits = {k: 0 for k in ks}
    for idx, truth in enumerate(truths):
        cands = candidates.get(idx, [])
        for k in ks:
            if truth in cands[:k]:
                hits[k] += 1
    return {k: hits[k] / n for k in ks}


def cmd_evaluate(args) -> int:
    truths = []
    with open(resolve_path(args.truth), encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            pair = align_reaction(line)
            side = pair.product if args.direction == "forward" else pair.reactants
            truths.append(graph_to_smiles(side))
    candidates = read_predictions(resolve_path(args.predictions))
    if candidates and max(candidates) >= len(truths):
        print("error: prediction indices exceed ground-truth length",
              file=sys.stderr)
        return 2

    accs = top_k_accuracies(candidates, truths)
    n_empty = sum(1 for i in range(len(truths)) if not candidates.get(i))
    report_path = resolve_path(args.report)
    lines = [f"direction {args.direction}", f"n_inputs {len(truths)}",
             f"empty_candidate_lists {n_empty}"]
    lines += [f"top{k} {accs[k]:.4f}" for k in sorted(accs)]
    with open(report_path, "w", encoding="utf-8") as f:
        f.write("".join(line + "\n" for line in lines))
    for line in lines:
        print(line)

    figure_path = os.path.splitext(report_path)[0] + ".png"
    fig, ax = plt.subplots(figsize=(5, 4))
    ks = sorted(accs)
    ax.bar([f"top-{k}" for k in ks], [accs[k] for k in ks], color="#4878cf")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("exact-match accuracy")
    ax.set_title(f"{args.direction} prediction accuracy (n={len(truths)})")
    for i, k in enumerate(ks):
        ax.text(i, accs[k] + 0.02, f"{accs[k]:.2f}", ha="center")
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)
    print(f"report: {report_path}")
    print(f"figure: {figure_path}")
    return 0


# ---------------------------------------------------------------------------
# inspect-path
# ---------------------------------------------------------------------------


def cmd_inspect_path(args) -> int:
    k = args.num_classes
    if not 2 <= k <= 16:
        print("error: K must be in [2, 16]", file=sys.stderr)
        return 2
    if not (0 <= args.x0 < k and 0 <= args.x1 < k):
        print("error: endpoint classes must lie in [0, K)", file=sys.stderr)
        return 2
    scheduler = bridge.Scheduler(sigma=args.sigma)
    grid = np.linspace(0.0, 1.0, args.n_grid)
    out_path = resolve_path(args.output)
    rows = []
    for t in grid:
        st = bridge.scheduler_state(scheduler, float(t))
        p = bridge.conditional_path(args.x0, args.x1, st, k)
        # velocity reported at the current state xs = x0 (the start class)
        v = bridge.conditional_velocity(args.x0, args.x0, args.x1, st, k)
        rows.append((t, p, v))
    with open(out_path, "w", encoding="utf-8") as f:
        header = ["t"] + [f"p{i}" for i in range(k)] + [f"v{i}" for i in range(k)]
        f.write(",".join(header) + "\n")
        for t, p, v in rows:
            vals = [f"{t:.6f}"] + [f"{x:.8f}" for x in p] + [f"{x:.8f}" for x in v]
            f.write(",".join(vals) + "\n")

    figure_path = os.path.splitext(out_path)[0] + ".png"
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ts = [r[0] for r in rows]
    for i in range(k):
        label = {args.x0: f"class {i} (start)", args.x1: f"class {i} (end)"}.get(
            i, f"class {i}"
        )
        ax1.plot(ts, [r[1][i] for r in rows], label=label)
        ax2.plot(ts, [r[2][i] for r in rows], label=label)
    ax1.set_xlabel("t"); ax1.set_ylabel("probability")
    ax1.set_title(f"conditional path (sigma={args.sigma})")
    ax2.set_xlabel("t"); ax2.set_ylabel("velocity")
    ax2.set_title("conditional velocity at the start class")
    ax1.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=120)
    plt.close(fig)
    print(f"path table: {out_path}")
    print(f"figure: {figure_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rxnbridge",
        description="Discrete flow bridge for bidirectional reaction prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate, filter and split a reaction file")
    p.add_argument("input", help="reaction SMILES file, one mapped reaction per line")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--fractions", default="0.8,0.1,0.1",
                   help="train,valid,test fractions (default 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--train-file", dest="train_file")
    p.add_argument("--checkpoint")
    p.add_argument("--loss-log", dest="loss_log")
    p.add_argument("--resume", help="checkpoint to continue from")
    for flag, typ in (
        ("--n-steps", int), ("--batch-size", int), ("--lr", float),
        ("--warmup-steps", int), ("--weight-decay", float), ("--grad-clip", float),
        ("--sigma", float), ("--seed", int), ("--log-every", int),
        ("--latent-dim", int), ("--n-enc-layers", int), ("--n-merge-layers", int),
        ("--n-dec-layers", int), ("--n-heads", int),
    ):
        p.add_argument(flag, type=typ)
    p.add_argument("--task-mix", choices=["multi_task", "forward_only", "retro_only"])
    p.add_argument("--lr-decay", dest="lr_decay", choices=["constant", "cosine"],
                   help="learning-rate schedule after warmup (default constant)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="sample ranked candidates for each input")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True,
                   help="reactions (the relevant side is used) or plain molecules")
    p.add_argument("--direction", choices=["forward", "retro"], required=True)
    p.add_argument("--output", required=True, help="tab-separated predictions file")
    p.add_argument("--n-samples", type=int, default=32,
                   help="independent samples per input (default 32)")
    p.add_argument("--n-steps", type=int, default=20,
                   help="integration steps (default 20)")
    p.add_argument("--sigma-sampling", type=float, default=0.0,
                   help="bridge noise during sampling (default 0)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="top-k exact-match accuracy of predictions")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True, help="aligned reaction file")
    p.add_argument("--direction", choices=["forward", "retro"], required=True)
    p.add_argument("--report", required=True, help="output report text file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect-path",
                       help="dump the analytic conditional path and velocity")
    p.add_argument("--x0", type=int, required=True, help="start class index")
    p.add_argument("--x1", type=int, required=True, help="end class index")
    p.add_argument("--num-classes", "-K", type=int, default=4)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--n-grid", type=int, default=21)
    p.add_argument("--output", required=True, help="comma-separated output file")
    p.set_defaults(func=cmd_inspect_path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
