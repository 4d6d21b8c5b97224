"""Training loop, bidirectional endpoint sampler, and binary checkpoints.

Training draws a per-example time and task, samples an intermediate graph
from the bridge, and fits the network to recover the opposite endpoint
with per-channel cross-entropy. Sampling integrates the parameterized
velocity over a uniform time grid with per-step exact transition kernels.
"""

from __future__ import annotations

import io
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import bridge
from .chem.reaction import (
    N_AROMATIC_CLASSES,
    N_ATOM_CLASSES,
    N_BOND_CLASSES,
    N_CHARGE_CLASSES,
    ReactionGraph,
    ReactionPair,
    encode_graph,
    graph_to_smiles,
)
from .chem.smiles import ELEMENTS
from .model import (
    ModelConfig,
    forward_model,
    graph_probs,
    init_params,
    masked_channel_loss,
)
from .net import Tensor, no_grad

TASK_PRODUCT = 0  # predict the product from reactants
TASK_REACTANTS = 1  # predict the reactants from the product

_CHANNEL_KEYS = ("atom", "aromatic", "charge", "bond")
_CHANNEL_SIZES = {
    "atom": N_ATOM_CLASSES,
    "aromatic": N_AROMATIC_CLASSES,
    "charge": N_CHARGE_CLASSES,
    "bond": N_BOND_CLASSES,
}


@dataclass(frozen=True)
class TrainConfig:
    n_steps: int = 2000
    batch_size: int = 16
    lr: float = 1e-3
    warmup_steps: int = 100
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    sigma: float = 1.0  # bridge noise during training
    seed: int = 0
    log_every: int = 10
    task_mix: str = "multi_task"  # or "forward_only" / "retro_only"
    lr_decay: str = "constant"  # or "cosine" (to zero at n_steps)

    def __post_init__(self):
        if self.task_mix not in ("multi_task", "forward_only", "retro_only"):
            raise ValueError(f"unknown task_mix {self.task_mix!r}")
        if self.lr_decay not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_decay {self.lr_decay!r}")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.warmup_steps > self.n_steps:
            raise ValueError("warmup_steps exceeds n_steps")


@dataclass(frozen=True)
class SampleConfig:
    n_integration_steps: int = 20
    n_samples: int = 16
    sigma: float = 0.0  # bridge noise during sampling
    seed: int = 0


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


class AdamW:
    """Decoupled weight decay Adam with linear warmup to a constant rate."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def learning_rate(self) -> float:
        c = self.cfg
        if c.warmup_steps > 0 and self.step_count <= c.warmup_steps:
            return c.lr * self.step_count / c.warmup_steps
        if c.lr_decay == "cosine":
            span = max(c.n_steps - c.warmup_steps, 1)
            progress = min((self.step_count - c.warmup_steps) / span, 1.0)
            return c.lr * 0.5 * (1.0 + np.cos(np.pi * progress))
        return c.lr

    def step(self) -> float:
        self.step_count += 1
        c = self.cfg
        lr = self.learning_rate()
        bc1 = 1.0 - c.beta1**self.step_count
        bc2 = 1.0 - c.beta2**self.step_count
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            self.m[k] = c.beta1 * self.m[k] + (1.0 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1.0 - c.beta2) * g * g
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)
            p.data -= lr * (update + c.weight_decay * p.data)
        return lr

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


def clip_gradients(params: dict[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad**2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def pad_channel_batch(
    graphs: list[dict[str, np.ndarray]], n_pad: int | None = None
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Stack zero-based channel dicts into padded batch arrays plus a mask.

    Padded atom positions get class 0 in every channel and zero bonds, so
    they carry no messages and are excluded by the attention mask.
    """
    sizes = [g["atom"].shape[0] for g in graphs]
    n = max(sizes) if n_pad is None else n_pad
    b = len(graphs)
    out = {
        "atom": np.zeros((b, n), dtype=np.int64),
        "aromatic": np.zeros((b, n), dtype=np.int64),
        "charge": np.zeros((b, n), dtype=np.int64),
        "bond": np.zeros((b, n, n), dtype=np.int64),
    }
    mask = np.zeros((b, n), dtype=np.int64)
    for i, (g, sz) in enumerate(zip(graphs, sizes)):
        out["atom"][i, :sz] = g["atom"]
        out["aromatic"][i, :sz] = g["aromatic"]
        out["charge"][i, :sz] = g["charge"]
        out["bond"][i, :sz, :sz] = g["bond"]
        mask[i, :sz] = 1
    return out, mask


# ---------------------------------------------------------------------------
# Training step
# ---------------------------------------------------------------------------


class NonFiniteLossError(RuntimeError):
    pass


def train_step(
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    opt: AdamW,
    pairs: list[ReactionPair],
    scheduler: bridge.Scheduler,
    rng: np.random.Generator,
    grad_clip: float = 1.0,
    task_mix: str = "multi_task",
) -> dict[str, float]:
    """One optimization step over a batch of aligned reaction pairs.

    Per example: draw task (product vs reactant prediction) and a time t,
    sample the bridge intermediate, and fit the opposite endpoint.
    """
    noisy, sources, targets, tasks = [], [], [], []
    for pair in pairs:
        if task_mix == "forward_only":
            task = TASK_PRODUCT
        elif task_mix == "retro_only":
            task = TASK_REACTANTS
        else:
            task = int(rng.integers(0, 2))
        t = float(rng.uniform(scheduler.eps, 1.0 - scheduler.eps))
        st = bridge.scheduler_state(scheduler, t)
        g_t = bridge.sample_graph_path(pair.reactants, pair.product, st, rng)
        src = pair.reactants if task == TASK_PRODUCT else pair.product
        tgt = pair.product if task == TASK_PRODUCT else pair.reactants
        noisy.append(encode_graph(g_t))
        sources.append(encode_graph(src))
        targets.append(encode_graph(tgt))
        tasks.append(task)

    g_t_batch, mask = pad_channel_batch(noisy)
    g_src_batch, _ = pad_channel_batch(sources, n_pad=mask.shape[1])
    tgt_batch, _ = pad_channel_batch(targets, n_pad=mask.shape[1])
    task_arr = np.array(tasks, dtype=np.int64)

    logits = forward_model(g_t_batch, g_src_batch, task_arr, params, model_cfg, mask)
    loss, parts = masked_channel_loss(logits, tgt_batch, mask)
    total = float(loss.data)
    if not np.isfinite(total):
        opt.zero_grad()
        raise NonFiniteLossError(f"non-finite loss {total}")
    opt.zero_grad()
    loss.backward()
    grad_norm = clip_gradients(params, grad_clip)
    lr = opt.step()
    opt.zero_grad()
    return {
        "total": total,
        **parts,
        "grad_norm": grad_norm,
        "lr": lr,
    }


def train(
    pairs: list[ReactionPair],
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    params: dict[str, Tensor] | None = None,
    log_fn=None,
    start_step: int = 0,
) -> tuple[dict[str, Tensor], list[dict[str, float]]]:
    """Run the loop from start_step+1 to n_steps; returns parameters and
    the per-step loss log. start_step > 0 resumes a checkpointed run
    (optimizer moments restart; only the step counter carries over)."""
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        params = init_params(model_cfg, rng)
    opt = AdamW(params, train_cfg)
    opt.step_count = start_step
    scheduler = bridge.Scheduler(sigma=train_cfg.sigma)
    log: list[dict[str, float]] = []
    for step in range(start_step + 1, train_cfg.n_steps + 1):
        idx = rng.integers(0, len(pairs), size=min(train_cfg.batch_size, len(pairs)))
        batch = [pairs[i] for i in idx]
        stats = train_step(
            params, model_cfg, opt, batch, scheduler, rng,
            train_cfg.grad_clip, train_cfg.task_mix,
        )
        stats["step"] = step
        log.append(stats)
        if log_fn is not None and (
            step % train_cfg.log_every == 0 or step == train_cfg.n_steps
        ):
            log_fn(stats)
    return params, log


# ---------------------------------------------------------------------------
# Sampling (bridge integration)
# ---------------------------------------------------------------------------


def _sample_batched_endpoint(
    src_list: list[dict[str, np.ndarray]],
    direction: str,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    sample_cfg: SampleConfig,
    rng: np.random.Generator,
    trajectory: list | None = None,
) -> list[dict[str, np.ndarray]]:
    """Integrate the parameterized velocity from the source endpoint.

    direction "forward": sources are reactant graphs, time runs 0 -> 1 and
    the network predicts the product (task 0). direction "reverse":
    sources are product graphs, time runs 1 -> 0 and the network predicts
    the reactants (task 1).
    """
    if direction not in ("forward", "reverse"):
        raise ValueError(f"unknown direction {direction!r}")
    task = TASK_PRODUCT if direction == "forward" else TASK_REACTANTS
    src, mask = pad_channel_batch(src_list)
    b, n = mask.shape
    task_arr = np.full(b, task, dtype=np.int64)
    scheduler = bridge.Scheduler(sigma=sample_cfg.sigma)
    n_steps = sample_cfg.n_integration_steps
    h = 1.0 / n_steps
    iu = np.triu_indices(n, k=1)

    current = {k: src[k].copy() for k in _CHANNEL_KEYS}
    if trajectory is not None:
        trajectory.append({k: v.copy() for k, v in current.items()})
    for j in range(n_steps):
        if direction == "forward":
            t_from, t_to = j * h, (j + 1) * h
        else:
            t_from, t_to = 1.0 - j * h, 1.0 - (j + 1) * h
        st = bridge.step_scheduler_state(scheduler, t_from, t_to)
        with no_grad():
            logits = forward_model(current, src, task_arr, params, model_cfg, mask)
        probs = graph_probs(logits)
        sign = 1.0 if direction == "forward" else -1.0
        for key in ("atom", "aromatic", "charge"):
            v = bridge.velocity_array(
                current[key], src[key], probs[key], st, direction, _CHANNEL_SIZES[key]
            )
            new = bridge.euler_step_array(current[key], sign * v, h, rng)
            current[key] = np.where(mask == 1, new, current[key])
        # bonds: step the upper triangle only and mirror to stay symmetric
        v = bridge.velocity_array(
            current["bond"], src["bond"], probs["bond"], st, direction, N_BOND_CLASSES
        )
        cur_flat = current["bond"][:, iu[0], iu[1]]
        new_flat = bridge.euler_step_array(cur_flat, sign * v[:, iu[0], iu[1], :], h, rng)
        pair_ok = (mask[:, iu[0]] == 1) & (mask[:, iu[1]] == 1)
        new_flat = np.where(pair_ok, new_flat, cur_flat)
        bond = np.zeros_like(current["bond"])
        bond[:, iu[0], iu[1]] = new_flat
        bond += bond.swapaxes(1, 2)
        current["bond"] = bond
        if trajectory is not None:
            trajectory.append({k: v.copy() for k, v in current.items()})

    sizes = [g["atom"].shape[0] for g in src_list]
    out = []
    for i, sz in enumerate(sizes):
        out.append(
            {
                "atom": current["atom"][i, :sz],
                "aromatic": current["aromatic"][i, :sz],
                "charge": current["charge"][i, :sz],
                "bond": current["bond"][i, :sz, :sz],
            }
        )
    return out


def sample_endpoint_graphs(
    source: ReactionGraph,
    direction: str,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    sample_cfg: SampleConfig,
    rng: np.random.Generator,
) -> list[ReactionGraph]:
    """Draw n_samples endpoint graphs for one source graph."""
    enc = encode_graph(source)
    batch = [enc] * sample_cfg.n_samples
    side = "product" if direction == "forward" else "reactant"
    results = _sample_batched_endpoint(
        batch, direction, params, model_cfg, sample_cfg, rng
    )
    return [_decoded(ch, side) for ch in results]


def _decoded(channels: dict[str, np.ndarray], side: str) -> ReactionGraph:
    return ReactionGraph(
        atom_type=channels["atom"] + 1,
        aromatic=channels["aromatic"].copy(),
        charge=channels["charge"].copy(),
        bond=channels["bond"].copy(),
        side=side,
    )


def rank_predictions(graphs: list[ReactionGraph]) -> list[tuple[str, int]]:
    """Frequency-ranked canonical SMILES; ties keep first-seen order.

    Graphs that fail to decode (no non-dummy atoms or unwritable classes)
    are dropped.
    """
    counts: Counter[str] = Counter()
    order: dict[str, int] = {}
    for g in graphs:
        try:
            smi = graph_to_smiles(g)
        except Exception:
            continue
        if not smi:
            continue
        if smi not in order:
            order[smi] = len(order)
        counts[smi] += 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], order[kv[0]]))


def predict_smiles(
    source: ReactionGraph,
    direction: str,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    sample_cfg: SampleConfig,
    rng: np.random.Generator,
) -> list[tuple[str, int]]:
    graphs = sample_endpoint_graphs(
        source, direction, params, model_cfg, sample_cfg, rng
    )
    return rank_predictions(graphs)


def predict_smiles_batch(
    sources: list[ReactionGraph],
    direction: str,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    sample_cfg: SampleConfig,
    rng: np.random.Generator,
) -> list[list[tuple[str, int]]]:
    """Ranked candidates for many sources, integrated as a single batch.

    All n_samples draws of every source share each integration step's
    network call, which is far faster than per-source sampling when the
    graphs are small. One rng drives the whole batch, so results depend
    on the batch composition (use predict_smiles for per-source
    reproducibility)."""
    n_samples = sample_cfg.n_samples
    encs: list[dict[str, np.ndarray]] = []
    for g in sources:
        encs.extend([encode_graph(g)] * n_samples)
    side = "product" if direction == "forward" else "reactant"
    results = _sample_batched_endpoint(
        encs, direction, params, model_cfg, sample_cfg, rng
    )
    ranked = []
    for i in range(len(sources)):
        graphs = [
            _decoded(ch, side)
            for ch in results[i * n_samples : (i + 1) * n_samples]
        ]
        ranked.append(rank_predictions(graphs))
    return ranked


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_MAGIC = b"RXBRIDGE"
_FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _write_str(buf: io.BufferedWriter, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def _read_exact(buf, n: int) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise CheckpointError("truncated checkpoint file")
    return raw


def _read_str(buf) -> str:
    (n,) = struct.unpack("<I", _read_exact(buf, 4))
    return _read_exact(buf, n).decode("utf-8")


def save_checkpoint(
    path: str,
    params: dict[str, Tensor],
    model_cfg: ModelConfig,
    extra_metadata: dict[str, str] | None = None,
) -> None:
    """Binary checkpoint: magic, version, text metadata, float32 tensors."""
    meta = {
        "latent_dim": str(model_cfg.latent_dim),
        "n_enc_layers": str(model_cfg.n_enc_layers),
        "n_merge_layers": str(model_cfg.n_merge_layers),
        "n_dec_layers": str(model_cfg.n_dec_layers),
        "n_heads": str(model_cfg.n_heads),
        "max_atoms": str(model_cfg.max_atoms),
        "element_vocab": " ".join(ELEMENTS),
    }
    if extra_metadata:
        meta.update({str(k): str(v) for k, v in extra_metadata.items()})
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _FORMAT_VERSION))
        f.write(struct.pack("<I", len(meta)))
        for k in sorted(meta):
            _write_str(f, k)
            _write_str(f, meta[k])
        f.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            arr = params[name].data.astype("<f4")
            _write_str(f, name)
            f.write(struct.pack("<I", arr.ndim))
            for d in arr.shape:
                f.write(struct.pack("<I", d))
            f.write(arr.tobytes())


def load_checkpoint(
    path: str,
) -> tuple[dict[str, Tensor], ModelConfig, dict[str, str]]:
    with open(path, "rb") as f:
        if _read_exact(f, len(_MAGIC)) != _MAGIC:
            raise CheckpointError("not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(f, 4))
        if version != _FORMAT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (n_meta,) = struct.unpack("<I", _read_exact(f, 4))
        meta = {}
        for _ in range(n_meta):
            k = _read_str(f)
            meta[k] = _read_str(f)
        vocab = meta.get("element_vocab", "")
        if vocab != " ".join(ELEMENTS):
            raise CheckpointError("element vocabulary mismatch")
        try:
            model_cfg = ModelConfig(
                latent_dim=int(meta["latent_dim"]),
                n_enc_layers=int(meta["n_enc_layers"]),
                n_merge_layers=int(meta["n_merge_layers"]),
                n_dec_layers=int(meta["n_dec_layers"]),
                n_heads=int(meta["n_heads"]),
                max_atoms=int(meta["max_atoms"]),
            )
        except (KeyError, ValueError) as e:
            raise CheckpointError(f"invalid model metadata: {e}") from e
        (n_params,) = struct.unpack("<I", _read_exact(f, 4))
        params: dict[str, Tensor] = {}
        for _ in range(n_params):
            name = _read_str(f)
            (rank,) = struct.unpack("<I", _read_exact(f, 4))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            count = int(np.prod(dims)) if rank else 1
            raw = _read_exact(f, 4 * count)
            arr = np.frombuffer(raw, dtype="<f4").reshape(dims)
            params[name] = Tensor(arr.astype(np.float64), requires_grad=True)
        if f.read(1):
            raise CheckpointError("trailing data after checkpoint payload")
    return params, model_cfg, meta
