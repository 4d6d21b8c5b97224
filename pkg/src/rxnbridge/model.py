"""Graph-to-graph network producing logits for the four discrete channels.

Two molecular encoders (one for the intermediate graph, one for the source
graph) feed a task-token merge stack and a decoder stack; three linear
heads emit atom/aromaticity/charge logits and four bilinear query/key
pairs emit symmetric bond logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem.reaction import (
    N_AROMATIC_CLASSES,
    N_ATOM_CLASSES,
    N_BOND_CLASSES,
    N_CHARGE_CLASSES,
)
from .net import Tensor
from .net import layers as L

VOCAB_SIZES = (N_ATOM_CLASSES, N_AROMATIC_CLASSES, N_CHARGE_CLASSES, N_BOND_CLASSES)


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 256
    n_enc_layers: int = 6
    n_merge_layers: int = 6
    n_dec_layers: int = 12
    n_heads: int = 8
    max_atoms: int = 80
    vocab_sizes: tuple[int, int, int, int] = VOCAB_SIZES

    def __post_init__(self):
        for k in ("n_enc_layers", "n_merge_layers", "n_dec_layers"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be >= 1")
        if self.vocab_sizes != VOCAB_SIZES:
            raise ValueError(f"vocab sizes must be {VOCAB_SIZES}")
        if self.latent_dim % self.n_heads != 0:
            raise ValueError("latent_dim must be divisible by n_heads")


@dataclass
class GraphLogits:
    atom: Tensor      # (B, N, 73)
    aromatic: Tensor  # (B, N, 2)
    charge: Tensor    # (B, N, 13)
    bond: Tensor      # (B, N, N, 4)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    d = cfg.latent_dim
    for enc in ("enc_t", "enc_src"):
        L.init_embedding(params, f"{enc}.emb_atom", N_ATOM_CLASSES, d, rng)
        L.init_embedding(params, f"{enc}.emb_aromatic", N_AROMATIC_CLASSES, d, rng)
        L.init_embedding(params, f"{enc}.emb_charge", N_CHARGE_CLASSES, d, rng)
        for i in range(cfg.n_enc_layers):
            L.init_transformer_layer(params, f"{enc}.layer{i}", d, rng)
    L.init_embedding(params, "task_emb", 2, d, rng)
    for i in range(cfg.n_merge_layers):
        L.init_cross_attention_block(params, f"merge.layer{i}", d, rng)
    for i in range(cfg.n_dec_layers):
        L.init_transformer_layer(params, f"dec.layer{i}", d, rng)
    L.init_linear(params, "head.atom", d, N_ATOM_CLASSES, rng)
    L.init_linear(params, "head.aromatic", d, N_AROMATIC_CLASSES, rng)
    L.init_linear(params, "head.charge", d, N_CHARGE_CLASSES, rng)
    for c in range(N_BOND_CLASSES):
        L.init_linear(params, f"head.bond{c}.q", d, d, rng)
        L.init_linear(params, f"head.bond{c}.k", d, d, rng)
    return params


def mol_encode(
    channels: dict[str, np.ndarray],
    params: dict[str, Tensor],
    cfg: ModelConfig,
    mask: np.ndarray,
    which: str,
) -> Tensor:
    """Encode one graph: summed channel embeddings, one message-passing
    step z_msg = (R + 0.5 I) z_in with raw bond classes as weights, then
    the self-attention stack.

    The self-loop weight keeps isolated atoms nonzero and is deliberately
    not equal to any bond class: with weight 1, both atoms of a
    single-bonded two-atom molecule would receive the identical sum
    z_a + z_b and stay indistinguishable through the whole network."""
    n = channels["atom"].shape[-1]
    if n > cfg.max_atoms:
        raise ValueError(f"{n} atoms exceeds max_atoms={cfg.max_atoms}")
    z_in = (
        L.embedding(params[f"{which}.emb_atom"], channels["atom"])
        + L.embedding(params[f"{which}.emb_aromatic"], channels["aromatic"])
        + L.embedding(params[f"{which}.emb_charge"], channels["charge"])
    )
    r = channels["bond"].astype(np.float64)
    eye = np.eye(n)
    z_msg = Tensor(r + 0.5 * eye) @ z_in
    z = z_msg
    for i in range(cfg.n_enc_layers):
        z = L.transformer_layer(z, mask, params, f"{which}.layer{i}", cfg.n_heads)
    return z


def forward_model(
    g_t: dict[str, np.ndarray],
    g_src: dict[str, np.ndarray],
    task: np.ndarray,
    params: dict[str, Tensor],
    cfg: ModelConfig,
    mask: np.ndarray,
) -> GraphLogits:
    """Full network. g_t/g_src are zero-based channel arrays with batched
    shapes atom/aromatic/charge (B, N) and bond (B, N, N); task is (B,)
    with 0 = product prediction, 1 = reactant prediction; mask is (B, N)."""
    task = np.asarray(task)
    if np.any((task != 0) & (task != 1)):
        raise ValueError("task must be 0 or 1")
    for key in ("atom", "aromatic", "charge", "bond"):
        if g_t[key].shape != g_src[key].shape:
            raise ValueError(f"channel {key} shape mismatch")
    z_enc = mol_encode(g_t, params, cfg, mask, "enc_t") + mol_encode(
        g_src, params, cfg, mask, "enc_src"
    )
    z_tsk = L.embedding(params["task_emb"], task[:, None])  # (B, 1, D)
    z = z_enc
    for i in range(cfg.n_merge_layers):
        z = L.cross_attention_block(
            z_tsk, z, mask, params, f"merge.layer{i}", cfg.n_heads
        )
    for i in range(cfg.n_dec_layers):
        z = L.transformer_layer(z, mask, params, f"dec.layer{i}", cfg.n_heads)

    atom = L.linear(z, params, "head.atom")
    aromatic = L.linear(z, params, "head.aromatic")
    charge = L.linear(z, params, "head.charge")
    scale = 1.0 / np.sqrt(cfg.latent_dim)
    per_class = []
    for c in range(N_BOND_CLASSES):
        q = L.linear(z, params, f"head.bond{c}.q")
        k = L.linear(z, params, f"head.bond{c}.k")
        score = (q @ k.swapaxes(-1, -2)) * scale  # (B, N, N)
        b, n, _ = score.shape
        per_class.append(score.reshape(b, n, n, 1))
    bond = _concat_last(per_class)
    bond = (bond + bond.swapaxes(1, 2)) * 0.5  # symmetrize
    return GraphLogits(atom=atom, aromatic=aromatic, charge=charge, bond=bond)


def _concat_last(tensors: list[Tensor]) -> Tensor:
    """Concatenate along the last axis (each input has size 1 there)."""
    data = np.concatenate([t.data for t in tensors], axis=-1)

    def backward(g):
        for c, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(g[..., c : c + 1])

    return Tensor._result(data, tuple(tensors), backward)


def _masked_ce(logits: Tensor, target: np.ndarray, valid: np.ndarray) -> Tensor:
    """Mean cross-entropy over entries where valid is nonzero."""
    count = float(valid.sum())
    if count == 0:
        raise ValueError("empty mask")
    logp = L.log_softmax(logits)
    picked = _gather_last(logp, target)
    weights = Tensor(valid.astype(np.float64) / count)
    return -(picked * weights).sum()


def _gather_last(x: Tensor, indices: np.ndarray) -> Tensor:
    indices = np.asarray(indices)
    idx = np.expand_dims(indices, -1)
    data = np.take_along_axis(x.data, idx, axis=-1)[..., 0]

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.put_along_axis(acc, idx, np.expand_dims(g, -1), axis=-1)
            x._accum(acc)

    return Tensor._result(data, (x,), backward)


def masked_channel_loss(
    logits: GraphLogits, target: dict[str, np.ndarray], mask: np.ndarray
) -> tuple[Tensor, dict[str, float]]:
    """Sum of the four per-channel mean cross-entropies.

    Atom-level channels average over valid atoms; the bond channel over
    valid off-diagonal pairs. Returns the scalar loss and a float
    breakdown per channel.
    """
    mask = np.asarray(mask)
    if mask.sum() == 0:
        raise ValueError("empty mask")
    pair_valid = mask[:, :, None] * mask[:, None, :]
    n = mask.shape[-1]
    pair_valid = pair_valid * (1 - np.eye(n, dtype=mask.dtype))
    parts = {
        "atom": _masked_ce(logits.atom, target["atom"], mask),
        "aromatic": _masked_ce(logits.aromatic, target["aromatic"], mask),
        "charge": _masked_ce(logits.charge, target["charge"], mask),
    }
    if pair_valid.sum() == 0:
        # a batch of single-atom graphs has no bonded pairs to fit
        parts["bond"] = Tensor(np.float64(0.0))
    else:
        parts["bond"] = _masked_ce(logits.bond, target["bond"], pair_valid)
    total = parts["atom"] + parts["aromatic"] + parts["charge"] + parts["bond"]
    breakdown = {k: float(v.data) for k, v in parts.items()}
    return total, breakdown


def graph_probs(logits: GraphLogits) -> dict[str, np.ndarray]:
    """Softmax the logits into per-element categorical arrays (no grad)."""
    out = {}
    for key, t in (
        ("atom", logits.atom),
        ("aromatic", logits.aromatic),
        ("charge", logits.charge),
        ("bond", logits.bond),
    ):
        x = t.data
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        out[key] = e / e.sum(axis=-1, keepdims=True)
    return out
