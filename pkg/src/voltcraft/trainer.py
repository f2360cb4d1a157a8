"""Policy-gradient training loop and the inference path.

One decision per interval: sample an action, price it with the penalized
power-flow loss, accumulate score-function gradients, and step the
parameters every batch. The gradient estimate is

    g = (1/B) sum_i (f_i - b) * grad_theta log pi(q_i | s_i)

with b either zero or a running mean of losses from batches already applied;
using only prior losses keeps the estimator exactly unbiased. Everything is
driven by one seeded generator, so a (seed, config, dataset, feeder) tuple
pins the trained weights bit for bit.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .errors import DimensionMismatch, NonFiniteGradient
from .network import NetworkModel
from .policy import (
    SIGMA_FLOOR,
    PolicyModel,
    get_flat_params,
    grad_log_prob,
    init_policy,
    policy_distribution,
    sample,
    set_flat_params,
)
from .powerflow import PENALTY_COEFF, evaluate_loss

GRAD_CLIP_NORM = 10.0
BASELINE_WINDOW = 200


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 30
    epochs: int = 40
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    penalty_coeff: float = PENALTY_COEFF
    baseline_mode: str = "running_mean"
    baseline_window: int = BASELINE_WINDOW
    grad_clip: float = GRAD_CLIP_NORM
    seed: int = 0
    sigma_floor: float = SIGMA_FLOOR

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be at least 1")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.baseline_mode not in ("none", "running_mean"):
            raise ValueError(f"unknown baseline_mode {self.baseline_mode!r}")
        if self.baseline_window < 1:
            raise ValueError("baseline_window must be at least 1")


@dataclass
class EpisodeBatch:
    """(state, gradient record, penalized loss) triples for one update."""

    records: list

    def __post_init__(self):
        if not self.records:
            raise ValueError("empty batch")

    @property
    def batch_mean_loss(self) -> float:
        return float(np.mean([loss for _, _, loss in self.records]))


@dataclass
class LossTrace:
    """Per-record loss history with a windowed running average."""

    window: int = BASELINE_WINDOW
    raw: list = field(default_factory=list)
    running_avg: list = field(default_factory=list)
    baseline_opt: list = field(default_factory=list)
    feasible: list = field(default_factory=list)

    def append(self, raw_loss, is_feasible, baseline_opt_loss=None):
        self.raw.append(float(raw_loss))
        self.running_avg.append(float(np.mean(self.raw[-self.window :])))
        self.baseline_opt.append(baseline_opt_loss)
        self.feasible.append(bool(is_feasible))

    def __len__(self):
        return len(self.raw)

    def rows(self):
        for i in range(len(self.raw)):
            yield {
                "step": i,
                "raw_loss": self.raw[i],
                "running_avg": self.running_avg[i],
                "baseline_opt_loss": self.baseline_opt[i],
                "feasible": self.feasible[i],
            }


@dataclass
class OptState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def init_opt_state(n_params: int) -> OptState:
    return OptState(m=np.zeros(n_params), v=np.zeros(n_params))


def estimate_gradient(
    batch: EpisodeBatch,
    baseline_mode: str = "none",
    prior_losses=(),
    window: int = BASELINE_WINDOW,
) -> np.ndarray:
    """Score-function estimate averaged over the batch, fixed order.

    The baseline is computed from losses of earlier batches only; the
    current batch never feeds its own control variate.
    """
    losses = np.array([loss for _, _, loss in batch.records])
    if not np.all(np.isfinite(losses)):
        raise NonFiniteGradient("non-finite loss in batch")
    if baseline_mode == "running_mean" and len(prior_losses) > 0:
        b = float(np.mean(np.asarray(prior_losses)[-window:]))
    else:
        b = 0.0
    g = np.zeros_like(batch.records[0][1].grad_theta_log_prob)
    for _, rec, loss in batch.records:
        g += (loss - b) * rec.grad_theta_log_prob
    g /= len(batch.records)
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient("non-finite gradient estimate")
    return g


def apply_update(
    model: PolicyModel,
    g: np.ndarray,
    config: TrainConfig,
    opt_state: OptState | None = None,
):
    """One optimizer step in place; returns (model, opt_state)."""
    theta = get_flat_params(model)
    if g.shape != theta.shape:
        raise DimensionMismatch(
            f"gradient length {g.shape} vs parameters {theta.shape}"
        )
    if opt_state is None:
        opt_state = init_opt_state(theta.size)
    if opt_state.m.shape != theta.shape:
        raise DimensionMismatch("optimizer state does not match the model")
    opt_state.step += 1
    if config.optimizer == "sgd":
        theta = theta - config.learning_rate * g
    else:
        b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_eps
        opt_state.m = b1 * opt_state.m + (1.0 - b1) * g
        opt_state.v = b2 * opt_state.v + (1.0 - b2) * g * g
        m_hat = opt_state.m / (1.0 - b1**opt_state.step)
        v_hat = opt_state.v / (1.0 - b2**opt_state.step)
        theta = theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    set_flat_params(model, theta)
    return model, opt_state


def _set_input_stats(model: PolicyModel, states) -> None:
    X = np.stack([np.concatenate([s.p, s.q_c]) for s in states])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # constant columns carry no signal; leave them unscaled
    std = np.where(std < 1e-12, 1.0, std)
    model.input_mean = mean
    model.input_std = std


def network_fingerprint(network: NetworkModel) -> str:
    """Digest of everything that defines the feeder's behavior."""
    h = hashlib.sha256()
    h.update(json.dumps(network.labels).encode())
    for arr in (
        np.array([network.base_mva, network.base_kv, network.v0]),
        network.v_min,
        network.v_max,
        network.parent.astype(float),
        network.r,
        network.x,
        network.inverter_buses.astype(float),
        network.q_lo,
        network.q_hi,
    ):
        h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
    return h.hexdigest()


def dataset_fingerprint(states) -> str:
    h = hashlib.sha256()
    for s in states:
        h.update(np.ascontiguousarray(s.p).tobytes())
        h.update(np.ascontiguousarray(s.q_c).tobytes())
        h.update(np.float64(s.timestamp).tobytes())
    return h.hexdigest()


def train(model: PolicyModel, network: NetworkModel, dataset, config: TrainConfig):
    """Run the full loop; returns (model, LossTrace, manifest)."""
    states = list(dataset)
    if not states:
        raise ValueError("empty dataset")
    if model.n_actions != network.n_inverters:
        raise DimensionMismatch(
            f"model emits {model.n_actions} actions, feeder has "
            f"{network.n_inverters} inverters"
        )
    _set_input_stats(model, states)
    rng = np.random.default_rng(config.seed)
    trace = LossTrace(window=config.baseline_window)
    opt_state = init_opt_state(model.n_params)
    pending = []
    applied_losses = []
    updates = 0

    def flush():
        nonlocal updates
        batch = EpisodeBatch(records=list(pending))
        try:
            g = estimate_gradient(
                batch, config.baseline_mode, applied_losses, config.baseline_window
            )
        except NonFiniteGradient as exc:
            raise NonFiniteGradient(
                f"aborted at update {updates}, record {len(trace)}: {exc}"
            ) from exc
        norm = float(np.linalg.norm(g))
        if norm > config.grad_clip:
            g = g * (config.grad_clip / norm)
        apply_update(model, g, config, opt_state)
        applied_losses.extend(loss for _, _, loss in pending)
        pending.clear()
        updates += 1

    for _ in range(config.epochs):
        order = rng.permutation(len(states))
        for idx in order:
            s = states[idx]
            dist = policy_distribution(model, s)
            q = sample(dist, rng)
            assert np.all(q >= model.q_lo) and np.all(q <= model.q_hi)
            rec = grad_log_prob(model, s, q)
            ev = evaluate_loss(network, s, q, penalty_coeff=config.penalty_coeff)
            trace.append(ev.penalized, ev.feasible)
            pending.append((s, rec, ev.penalized))
            if len(pending) == config.batch_size:
                flush()
    if pending:
        flush()

    manifest = {
        "package_version": __version__,
        "seed": config.seed,
        "config": asdict(config),
        "layer_sizes": list(model.layer_sizes),
        "network_sha256": network_fingerprint(network),
        "dataset_sha256": dataset_fingerprint(states),
        "n_states": len(states),
        "updates": updates,
    }
    return model, trace, manifest


def run_training(
    network: NetworkModel,
    dataset,
    config: TrainConfig,
    hidden: tuple[int, ...] = (48, 32, 16),
):
    """Initialize from the run seed and train; the manifest pins the run."""
    model = init_policy(
        network, hidden=hidden, seed=config.seed, sigma_floor=config.sigma_floor
    )
    model, trace, manifest = train(model, network, dataset, config)
    manifest["hidden"] = list(hidden)
    return model, trace, manifest


def infer(
    model: PolicyModel,
    network: NetworkModel,
    state,
    mode: str = "sample",
    rng: np.random.Generator | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Map one state to one action; no optimization solve involved."""
    if model.n_actions != network.n_inverters:
        raise DimensionMismatch(
            f"model emits {model.n_actions} actions, feeder has "
            f"{network.n_inverters} inverters"
        )
    dist = policy_distribution(model, state)
    if mode == "sample":
        if rng is None:
            rng = np.random.default_rng(seed)
        return sample(dist, rng)
    if mode == "deterministic":
        return np.clip(dist.mu, model.q_lo, model.q_hi)
    raise ValueError(f"unknown inference mode {mode!r}")
