"""Malicious client for the FedAvg fairness attack.

Each attacked round the client:

1. trains from the current global model on target-class data only, giving the
   update it wants the *aggregate* to take (the target update ``m``);
2. predicts the honest clients' updates by training once on a representative
   dataset and replicating the result;
3. inverts FedAvg. With estimated total count ``n = n0 + sum(n_i)`` the update
   to submit is ``v = (n * m - sum(n_i * u_i)) / n0``, so that the weighted
   average of ``v`` and the predicted updates is exactly ``m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from fairfl.data import EmptyDatasetError, LabeledDataset
from fairfl.model import ClientUpdate, ModelSpec, TrainingConfig, local_train
from fairfl.seeding import derive_seed

COUNT_POLICIES = ("match_honest_estimate", "fixed")


@dataclass(frozen=True)
class AttackConfig:
    target_classes: frozenset = frozenset({0, 1})
    attack_start_round: int = 0
    reported_count_policy: str = "match_honest_estimate"
    fixed_n0: int | None = None
    estimated_honest_clients: int = 2
    estimated_count_per_client: int = 100
    clip_to_norm: float | None = None
    # fraction of non-target rows (relative to the unfair set size) mixed into
    # the target-update training set; 0 is the pure attribute filter
    mixture_ratio: float = 0.0
    # epochs for the target-update training only; None means the shared
    # TrainingConfig value
    target_local_epochs: int | None = None
    target_learning_rate: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "target_classes", frozenset(int(c) for c in self.target_classes))
        if not self.target_classes:
            raise ValueError("target_classes must be non-empty")
        if self.attack_start_round < 0:
            raise ValueError("attack_start_round must be non-negative")
        if self.reported_count_policy not in COUNT_POLICIES:
            raise ValueError(f"reported_count_policy must be one of {COUNT_POLICIES}")
        if self.reported_count_policy == "fixed" and (self.fixed_n0 is None or self.fixed_n0 < 1):
            raise ValueError("fixed reported_count_policy needs fixed_n0 >= 1")
        if self.estimated_honest_clients < 1 or self.estimated_count_per_client < 1:
            raise ValueError("estimated_honest_clients and estimated_count_per_client must be >= 1")
        if self.clip_to_norm is not None and not self.clip_to_norm > 0:
            raise ValueError("clip_to_norm must be positive")
        if not 0.0 <= self.mixture_ratio:
            raise ValueError("mixture_ratio must be non-negative")
        if self.target_local_epochs is not None and self.target_local_epochs < 1:
            raise ValueError("target_local_epochs must be positive")
        if self.target_learning_rate is not None and not self.target_learning_rate > 0:
            raise ValueError("target_learning_rate must be positive")

    @property
    def n0(self) -> int:
        if self.reported_count_policy == "fixed":
            return self.fixed_n0
        return self.estimated_count_per_client


@dataclass(frozen=True, eq=False)
class TargetUpdate:
    delta: np.ndarray
    source_round: int = 0


@dataclass(frozen=True, eq=False)
class AttackUpdate(ClientUpdate):
    """A solved malicious update plus what the attacker assumed to get it."""

    target: TargetUpdate = None
    predicted: tuple = ()
    estimated_total: int = 0
    raw_norm: float = 0.0
    # n0 summed over all colluding malicious clients
    malicious_weight: int = 0


def compute_target_update(global_params, spec: ModelSpec, unfair_set: LabeledDataset,
                          cfg: TrainingConfig, source_round: int = 0) -> TargetUpdate:
    if unfair_set is None or len(unfair_set) == 0:
        raise EmptyDatasetError("unfair set is empty")
    upd = local_train(global_params, spec, unfair_set, cfg)
    return TargetUpdate(delta=upd.delta, source_round=source_round)


def predict_clean_updates(global_params, spec: ModelSpec, representative_set: LabeledDataset,
                          cfg: TrainingConfig, m: int, count: int | None = None) -> list[ClientUpdate]:
    """``m`` copies of one update trained on the representative set.

    ``count`` is the per-client datapoint estimate; defaults to the
    representative set's size.
    """
    if representative_set is None or len(representative_set) == 0:
        raise EmptyDatasetError("representative set is empty")
    if m < 1:
        raise ValueError("need at least one predicted honest client")
    upd = local_train(global_params, spec, representative_set, cfg)
    n_hat = len(representative_set) if count is None else int(count)
    return [ClientUpdate(delta=upd.delta, reported_count=n_hat) for _ in range(m)]


def solve_malicious_update(target: TargetUpdate, predicted, n0: int) -> ClientUpdate:
    """Solve ``n0*v = n*m - sum(n_i*u_i)`` with ``n = n0 + sum(n_i)``."""
    if n0 <= 0:
        raise ValueError("n0 must be positive")
    m = np.asarray(target.delta, dtype=np.float64)
    n = n0 + sum(p.reported_count for p in predicted)
    acc = n * m
    for p in predicted:
        if p.delta.shape != m.shape:
            raise ValueError(f"predicted update has shape {p.delta.shape}, target {m.shape}")
        acc = acc - p.reported_count * p.delta
    return ClientUpdate(delta=acc / n0, reported_count=int(n0))


def malicious_norm_bound(x: float, n: int, counts, n0: int | None = None) -> float:
    """Norm of the malicious update when target and clean updates share one
    direction and magnitude ``x``: ``((n - sum(counts)) / n0) * x``.

    ``n0`` defaults to ``n - sum(counts)``, in which case this is ``x``.
    """
    rest = n - sum(counts)
    if n0 is None:
        n0 = rest
    return (rest / n0) * x


def clip_to(update: ClientUpdate, bound: float | None) -> ClientUpdate:
    if bound is None:
        return update
    norm = float(np.linalg.norm(update.delta))
    if norm <= bound:
        return update
    return replace(update, delta=update.delta * (bound / norm))


def _target_training_set(unfair_set, representative_set, ratio, rng):
    if ratio <= 0:
        return unfair_set
    extra = int(round(ratio * len(unfair_set)))
    others = np.flatnonzero(~np.isin(representative_set.labels, np.unique(unfair_set.labels)))
    if extra == 0 or len(others) == 0:
        return unfair_set
    pick = rng.choice(others, size=min(extra, len(others)), replace=False)
    mixed = representative_set.subset(pick)
    return LabeledDataset(np.vstack([unfair_set.features, mixed.features]),
                          np.concatenate([unfair_set.labels, mixed.labels]),
                          unfair_set.num_classes,
                          np.concatenate([unfair_set.row_ids, mixed.row_ids]))


def malicious_client_step(global_params, spec: ModelSpec, round_idx: int, unfair_set, representative_set,
                          training: TrainingConfig, attack: AttackConfig, num_malicious: int = 1) -> AttackUpdate:
    """Target update, honest prediction and FedAvg inversion for one round.

    With ``num_malicious > 1`` every malicious client submits the same solved
    update, so the solve uses their combined weight ``num_malicious * n0``.
    """
    if round_idx < attack.attack_start_round:
        raise ValueError(f"round {round_idx} is before attack_start_round {attack.attack_start_round}")
    seed = training.seed
    target_set = _target_training_set(unfair_set, representative_set, attack.mixture_ratio,
                                      np.random.default_rng(derive_seed(seed, round_idx, "mixture")))
    target_cfg = replace(training, seed=derive_seed(seed, round_idx, "target"),
                         local_epochs=attack.target_local_epochs or training.local_epochs,
                         learning_rate=attack.target_learning_rate or training.learning_rate)
    target = compute_target_update(global_params, spec, target_set, target_cfg, source_round=round_idx)
    predicted = predict_clean_updates(global_params, spec, representative_set,
                                      replace(training, seed=derive_seed(seed, round_idx, "predict")),
                                      attack.estimated_honest_clients, attack.estimated_count_per_client)
    weight = num_malicious * attack.n0
    solved = solve_malicious_update(target, predicted, weight)
    raw_norm = float(np.linalg.norm(solved.delta))
    solved = clip_to(solved, attack.clip_to_norm)
    return AttackUpdate(delta=solved.delta, reported_count=attack.n0, target=target,
                        predicted=tuple(predicted), estimated_total=weight + sum(p.reported_count for p in predicted),
                        raw_norm=raw_norm, malicious_weight=weight)


@dataclass
class MaliciousClient:
    """Acts honestly on its clean set before the attack window, then attacks."""

    client_id: int
    spec: ModelSpec
    training: TrainingConfig
    clean_set: LabeledDataset
    unfair_set: LabeledDataset
    representative_set: LabeledDataset
    attack: AttackConfig
    num_malicious: int = 1
    role: str = field(default="malicious", init=False)

    @property
    def dataset(self):
        return self.clean_set

    def is_attacking(self, round_idx: int) -> bool:
        return round_idx >= self.attack.attack_start_round

    def train(self, global_params, round_idx: int) -> ClientUpdate:
        if not self.is_attacking(round_idx):
            cfg = replace(self.training, seed=derive_seed(self.training.seed, round_idx, self.client_id))
            return local_train(global_params, self.spec, self.clean_set, cfg)
        cfg = replace(self.training, seed=derive_seed(self.training.seed, "attacker"))
        return malicious_client_step(global_params, self.spec, round_idx, self.unfair_set,
                                     self.representative_set, cfg, self.attack, self.num_malicious)
