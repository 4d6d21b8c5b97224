"""Exact discrete flow-bridge kernels over arbitrary alphabet size K.

The path between two classes x0, x1 is the categorical mixture

    p_t = alpha_t * delta_x0 + beta_t * delta_x1 + sigma_t * U(1/K)

with the square-root noise schedule alpha_t = (1 - s*sqrt(t(1-t)))*(1-t),
beta_t = (1 - s*sqrt(t(1-t)))*t, sigma_t = s*sqrt(t(1-t)). Velocities are
signed, zero-sum vectors advanced by clipped Euler steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chem.reaction import (
    N_AROMATIC_CLASSES,
    N_ATOM_CLASSES,
    N_BOND_CLASSES,
    N_CHARGE_CLASSES,
    ReactionGraph,
)

CHANNEL_SIZES = {
    "atom": N_ATOM_CLASSES,
    "aromatic": N_AROMATIC_CLASSES,
    "charge": N_CHARGE_CLASSES,
    "bond": N_BOND_CLASSES,
}


@dataclass(frozen=True)
class Scheduler:
    """Noise schedule; sigma in [0, 2], eps clamps t away from endpoints."""

    sigma: float = 1.0
    eps: float = 1e-3

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 2.0:
            raise ValueError(f"sigma {self.sigma} outside [0, 2]")


@dataclass(frozen=True)
class SchedulerState:
    t: float
    alpha: float
    beta: float
    sigma_t: float
    d_alpha: float
    d_beta: float
    d_sigma: float
    gamma: float


def _check_time(t: float) -> float:
    # tolerate accumulated floating error from grid arithmetic
    if -1e-9 <= t < 0.0:
        return 0.0
    if 1.0 < t <= 1.0 + 1e-9:
        return 1.0
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t {t} outside [0, 1]")
    return t


def scheduler_state(s: Scheduler, t: float) -> SchedulerState:
    """Evaluate the schedule at t.

    alpha/beta/sigma_t are exact at t (so the path is exactly one-hot at
    the endpoints); derivatives and gamma are evaluated at t clamped to
    [eps, 1-eps] to keep the rates finite.
    """
    t = _check_time(t)
    sg = s.sigma

    def coeffs(u):
        g = np.sqrt(u * (1.0 - u))
        return (1.0 - sg * g) * (1.0 - u), (1.0 - sg * g) * u, sg * g

    alpha, beta, sigma_t = coeffs(t)
    tc = min(max(t, s.eps), 1.0 - s.eps)
    g = np.sqrt(tc * (1.0 - tc))
    dg = (1.0 - 2.0 * tc) / (2.0 * g)
    d_sigma = sg * dg
    d_alpha = -sg * dg * (1.0 - tc) - (1.0 - sg * g)
    d_beta = -sg * dg * tc + (1.0 - sg * g)
    alpha_c, beta_c, sigma_c = coeffs(tc)
    # sigma=2 makes alpha/beta vanish at t=0.5; drop degenerate channels
    pairs = [(d_alpha, alpha_c), (d_beta, beta_c)]
    if sg > 0.0:
        pairs.append((d_sigma, sigma_c))
    gamma = min(d / c for d, c in pairs if c > 1e-12)
    return SchedulerState(
        t=t,
        alpha=float(alpha),
        beta=float(beta),
        sigma_t=float(sigma_t),
        d_alpha=float(d_alpha),
        d_beta=float(d_beta),
        d_sigma=float(d_sigma),
        gamma=float(gamma),
    )


def step_scheduler_state(s: Scheduler, t_from: float, t_to: float) -> SchedulerState:
    """Scheduler state for one discrete sampling step from t_from to t_to.

    Derivatives are replaced by exact per-step increments so that the
    one-step transition kernel delta + h*v (forward, t_to > t_from) or
    delta - h*v (reverse) propagates the analytic marginals exactly and
    never leaves the simplex. gamma is the extreme increment-to-value
    ratio: the min over channels going forward, the max going reverse.
    """
    t_from = _check_time(t_from)
    t_to = _check_time(t_to)
    h = abs(t_to - t_from)
    if h <= 0.0:
        raise ValueError("t_from and t_to must differ")
    sg = s.sigma

    def coeffs(u):
        g = np.sqrt(u * (1.0 - u))
        return np.array([(1.0 - sg * g) * (1.0 - u), (1.0 - sg * g) * u, sg * g])

    c_from = coeffs(t_from)
    c_to = coeffs(t_to)
    forward = t_to > t_from
    # signed so that the update rule's sign convention recovers the target
    delta = (c_to - c_from) if forward else (c_from - c_to)
    ratios = [delta[i] / c_from[i] for i in range(3) if c_from[i] > 0.0]
    gamma = (min(ratios) if forward else max(ratios)) / h
    return SchedulerState(
        t=t_from,
        alpha=float(c_from[0]),
        beta=float(c_from[1]),
        sigma_t=float(c_from[2]),
        d_alpha=float(delta[0] / h),
        d_beta=float(delta[1] / h),
        d_sigma=float(delta[2] / h),
        gamma=float(gamma),
    )


def _check_class(x: int, K: int, name: str):
    if not 0 <= x < K:
        raise ValueError(f"{name}={x} outside [0, {K})")


def conditional_path(x0: int, x1: int, st: SchedulerState, K: int) -> np.ndarray:
    """Categorical p_t given endpoint classes; length-K probability vector."""
    _check_class(x0, K, "x0")
    _check_class(x1, K, "x1")
    p = np.full(K, st.sigma_t / K)
    p[x0] += st.alpha
    p[x1] += st.beta
    return p


def conditional_velocity(
    xs: int, x0: int, x1: int, st: SchedulerState, K: int
) -> np.ndarray:
    """Signed zero-sum velocity of the conditional path at the current class."""
    _check_class(xs, K, "xs")
    _check_class(x0, K, "x0")
    _check_class(x1, K, "x1")
    v = np.full(K, (st.d_sigma - st.sigma_t * st.gamma) / K)
    v[x0] += st.d_alpha - st.alpha * st.gamma
    v[x1] += st.d_beta - st.beta * st.gamma
    v[xs] += st.gamma
    return v


def parameterized_velocity(
    xs: int,
    x_cond: int,
    model_probs: np.ndarray,
    st: SchedulerState,
    direction: str,
    K: int,
) -> np.ndarray:
    """Velocity with the unknown endpoint replaced by model probabilities.

    direction "forward": x_cond is the source class x0 and model_probs
    stands in for delta_x1. direction "reverse": x_cond is x1 and
    model_probs stands in for delta_x0.
    """
    _check_class(xs, K, "xs")
    _check_class(x_cond, K, "x_cond")
    model_probs = np.asarray(model_probs, dtype=np.float64)
    if model_probs.shape != (K,):
        raise ValueError(f"model_probs shape {model_probs.shape} != ({K},)")
    if np.any(model_probs < 0) or abs(model_probs.sum() - 1.0) > 1e-6:
        raise ValueError("model_probs is not a probability vector")
    v = np.full(K, (st.d_sigma - st.sigma_t * st.gamma) / K)
    if direction == "forward":
        v[x_cond] += st.d_alpha - st.alpha * st.gamma
        v += (st.d_beta - st.beta * st.gamma) * model_probs
    elif direction == "reverse":
        v += (st.d_alpha - st.alpha * st.gamma) * model_probs
        v[x_cond] += st.d_beta - st.beta * st.gamma
    else:
        raise ValueError(f"unknown direction {direction!r}")
    v[xs] += st.gamma
    return v


def step_probabilities(current: int, v: np.ndarray, h: float) -> np.ndarray:
    """delta_current + h*v with negatives clipped and renormalized."""
    if not 0.0 < h <= 1.0:
        raise ValueError(f"h {h} outside (0, 1]")
    p = h * np.asarray(v, dtype=np.float64)
    p[current] += 1.0
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if total <= 0.0:
        p = np.zeros_like(p)
        p[current] = 1.0
        return p
    return p / total


def euler_step(current: int, v: np.ndarray, h: float, rng: np.random.Generator) -> int:
    p = step_probabilities(current, v, h)
    return int(rng.choice(len(p), p=p))


# ---------------------------------------------------------------------------
# Vectorized kernels over integer arrays (used for whole graphs)
# ---------------------------------------------------------------------------


def path_probs_array(
    x0: np.ndarray, x1: np.ndarray, st: SchedulerState, K: int
) -> np.ndarray:
    """p_t for every element of x0/x1; output shape x0.shape + (K,)."""
    x0 = np.asarray(x0)
    x1 = np.asarray(x1)
    p = np.full(x0.shape + (K,), st.sigma_t / K)
    np.add.at(p, (*np.indices(x0.shape), x0), st.alpha)
    np.add.at(p, (*np.indices(x1.shape), x1), st.beta)
    return p


def sample_categorical_array(
    probs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Sample class indices from a (..., K) probability array."""
    cdf = np.cumsum(probs, axis=-1)
    cdf /= cdf[..., -1:]
    u = rng.random(probs.shape[:-1] + (1,))
    return (u > cdf).sum(axis=-1)


def velocity_array(
    xs: np.ndarray,
    cond: np.ndarray,
    model_probs: np.ndarray | None,
    st: SchedulerState,
    direction: str,
    K: int,
) -> np.ndarray:
    """Vectorized parameterized velocity; model_probs None means one-hot cond
    is unavailable and both endpoint roles must be supplied explicitly."""
    xs = np.asarray(xs)
    cond = np.asarray(cond)
    v = np.full(xs.shape + (K,), (st.d_sigma - st.sigma_t * st.gamma) / K)
    idx = np.indices(xs.shape)
    if direction == "forward":
        np.add.at(v, (*idx, cond), st.d_alpha - st.alpha * st.gamma)
        v += (st.d_beta - st.beta * st.gamma) * model_probs
    elif direction == "reverse":
        v += (st.d_alpha - st.alpha * st.gamma) * model_probs
        np.add.at(v, (*idx, cond), st.d_beta - st.beta * st.gamma)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    np.add.at(v, (*idx, xs), st.gamma)
    return v


def euler_step_array(
    current: np.ndarray, v: np.ndarray, h: float, rng: np.random.Generator
) -> np.ndarray:
    current = np.asarray(current)
    p = h * v
    np.add.at(p, (*np.indices(current.shape), current), 1.0)
    p = np.clip(p, 0.0, None)
    total = p.sum(axis=-1, keepdims=True)
    dead = total[..., 0] <= 0.0
    if np.any(dead):
        p[dead] = 0.0
        p[(*np.nonzero(dead), current[dead])] = 1.0
        total = p.sum(axis=-1, keepdims=True)
    return sample_categorical_array(p / total, rng)


def sample_graph_path(
    g0: ReactionGraph,
    g1: ReactionGraph,
    st: SchedulerState,
    rng: np.random.Generator,
) -> ReactionGraph:
    """Sample an intermediate graph; channels drawn independently, bonds
    sampled on the upper triangle and mirrored."""
    if g0.n_atoms != g1.n_atoms:
        raise ValueError("graph size mismatch")
    n = g0.n_atoms
    atom = sample_categorical_array(
        path_probs_array(g0.atom_type - 1, g1.atom_type - 1, st, N_ATOM_CLASSES), rng
    ) + 1
    aromatic = sample_categorical_array(
        path_probs_array(g0.aromatic, g1.aromatic, st, N_AROMATIC_CLASSES), rng
    )
    charge = sample_categorical_array(
        path_probs_array(g0.charge, g1.charge, st, N_CHARGE_CLASSES), rng
    )
    iu = np.triu_indices(n, k=1)
    bond_flat = sample_categorical_array(
        path_probs_array(g0.bond[iu], g1.bond[iu], st, N_BOND_CLASSES), rng
    )
    bond = np.zeros((n, n), dtype=np.int64)
    bond[iu] = bond_flat
    bond += bond.T
    return ReactionGraph(
        atom.astype(np.int64),
        aromatic.astype(np.int64),
        charge.astype(np.int64),
        bond,
        side="intermediate",
    )


def enumerate_marginal(
    x0: int, x1: int, s: Scheduler, K: int, t_grid
) -> list[np.ndarray]:
    """Analytic p_t on a time grid; enumeration oracle, K capped at 16."""
    if K > 16:
        raise ValueError(f"K={K} too large for the enumeration oracle")
    _check_class(x0, K, "x0")
    _check_class(x1, K, "x1")
    return [conditional_path(x0, x1, scheduler_state(s, t), K) for t in t_grid]
