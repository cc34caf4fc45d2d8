"""FedAvg rounds and whole-experiment orchestration.

Every client sees the same read-only copy of the global parameters, updates
are screened by the optional defense, averaged in roster order (so the result
does not depend on who finished first) and the server applies the averaged
delta with step 1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from fairfl.attack import AttackUpdate, MaliciousClient
from fairfl.data import LabeledDataset, generate_synthetic, load_csv, partition, stratified_split
from fairfl.config import to_ini
from fairfl.defense import DefensePolicy, apply_defense
from fairfl.metrics import (FairnessReport, RoundCSVWriter, RoundRecord, fairness_gap, render_report,
                            write_report)
from fairfl.model import ClientUpdate, ModelSpec, TrainingConfig, evaluate, init_parameters, local_train
from fairfl.seeding import derive_seed

log = logging.getLogger(__name__)


class ClientError(RuntimeError):
    def __init__(self, client_id, cause):
        self.client_id = client_id
        super().__init__(f"client {client_id} failed: {cause}")


@dataclass
class HonestClient:
    client_id: int
    spec: ModelSpec
    training: TrainingConfig
    dataset: LabeledDataset
    role: str = field(default="honest", init=False)

    def is_attacking(self, round_idx: int) -> bool:
        return False

    def train(self, global_params, round_idx: int) -> ClientUpdate:
        cfg = replace(self.training, seed=derive_seed(self.training.seed, round_idx, self.client_id))
        return local_train(global_params, self.spec, self.dataset, cfg)


@dataclass(frozen=True, eq=False)
class FederationState:
    round: int
    global_params: np.ndarray
    roster: tuple

    @property
    def num_malicious(self) -> int:
        return sum(c.role == "malicious" for c in self.roster)


def fedavg_aggregate(updates) -> np.ndarray:
    """``sum(n_i * delta_i) / sum(n_i)``, accumulated in list order."""
    updates = list(updates)
    if not updates:
        raise ValueError("cannot aggregate an empty list of updates")
    d = updates[0].delta.shape
    acc = np.zeros(d)
    total = 0
    for u in updates:
        if u.delta.shape != d:
            raise ValueError(f"update length mismatch: {u.delta.shape} vs {d}")
        acc += u.reported_count * u.delta
        total += u.reported_count
    return acc / total


def _attack_diagnostics(updates, roster, attack_upd: AttackUpdate) -> dict:
    """Compare the undefended aggregate with the target and with the
    prediction-error term ``(1/n) * sum(n_i * (u_i - u_hat))``."""
    agg = fedavg_aggregate(updates)
    m = attack_upd.target.delta
    n = sum(u.reported_count for u in updates)
    u_hat = attack_upd.predicted[0].delta
    pred_err = np.zeros_like(m)
    honest_norms = []
    for u, c in zip(updates, roster):
        if c.role == "honest":
            pred_err += u.reported_count * (u.delta - u_hat)
            honest_norms.append(u.norm)
    pred_err /= n
    return {
        "target_error": float(np.max(np.abs(agg - m))),
        "identity_residual": float(np.max(np.abs((agg - m) - pred_err))),
        "malicious_norm": attack_upd.norm,
        "honest_median_norm": float(np.median(honest_norms)) if honest_norms else None,
    }


def run_round(state: FederationState, defense: DefensePolicy | None = None, *, spec: ModelSpec,
              test_set: LabeledDataset, target_classes) -> tuple[FederationState, RoundRecord]:
    broadcast = state.global_params.copy()
    broadcast.setflags(write=False)
    d = broadcast.shape
    updates = []
    for client in state.roster:
        try:
            upd = client.train(broadcast, state.round)
        except Exception as exc:
            raise ClientError(client.client_id, exc) from exc
        if upd.delta.shape != d or not np.all(np.isfinite(upd.delta)):
            raise ClientError(client.client_id, "update has wrong length or non-finite entries")
        updates.append(upd)

    ids = [c.client_id for c in state.roster]
    screened, actions = apply_defense(updates, defense, ids)
    new_params = state.global_params + fedavg_aggregate(screened)

    ev = evaluate(new_params, spec, test_set)
    t, o, gap = fairness_gap(ev.per_class, target_classes)
    attack_updates = [u for u in updates if isinstance(u, AttackUpdate)]
    diag = _attack_diagnostics(updates, state.roster, attack_updates[0]) if attack_updates else {}
    record = RoundRecord(round=state.round, per_class_accuracy=ev.per_class, overall_accuracy=ev.overall,
                         target_mean=t, other_mean=o, fairness_gap=gap,
                         per_client_update_norm=np.array([u.norm for u in updates]),
                         attack_active=bool(attack_updates), defense_actions=actions, **diag)
    return FederationState(state.round + 1, new_params, state.roster), record


@dataclass
class ExperimentResult:
    config: object
    records: list
    report: FairnessReport
    summary: str
    output_dir: Path | None = None


def load_pool(cfg) -> LabeledDataset:
    if cfg.data.source == "csv":
        pool = load_csv(cfg.data.path, cfg.model.num_classes)
        if pool.input_dim != cfg.model.input_dim:
            raise ValueError(f"{cfg.data.path} has {pool.input_dim} features, model expects {cfg.model.input_dim}")
        return pool
    return generate_synthetic(cfg.model.num_classes, cfg.model.input_dim, cfg.data.samples_per_class,
                              cfg.data_seed, separation=cfg.data.separation)


def build_federation(cfg):
    """Datasets, roster and initial state for ``cfg``; returns ``(state, test_set, parts)``.

    Malicious clients take the first roster slots. They keep their clean set
    for honest rounds, so an attack that never starts reproduces the
    all-honest trajectory exactly.
    """
    pool = load_pool(cfg)
    train_pool, test_set = stratified_split(pool, cfg.data.test_fraction, derive_seed(cfg.data_seed, "split"))
    parts = partition(train_pool, cfg.partition)
    roster = []
    for cid, clean in enumerate(parts.clean_sets):
        if cid < cfg.num_malicious:
            roster.append(MaliciousClient(cid, cfg.model, cfg.training, clean, parts.unfair_set,
                                          parts.representative_set, cfg.attack, cfg.num_malicious))
        else:
            roster.append(HonestClient(cid, cfg.model, cfg.training, clean))
    state = FederationState(0, init_parameters(cfg.model, cfg.init_seed), tuple(roster))
    return state, test_set, parts


def run_experiment(cfg, *, write: bool = True, baseline_records=None) -> ExperimentResult:
    """Run all rounds of ``cfg``. With ``write``, the round CSV, report and the
    resolved config go under ``cfg.output_dir``."""
    state, test_set, _ = build_federation(cfg)
    if state.num_malicious != cfg.num_malicious:
        raise ValueError("roster does not match num_malicious")
    out = Path(cfg.output_dir) if write else None
    writer = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(to_ini(cfg), encoding="utf-8")
        writer = RoundCSVWriter(out / "rounds.csv", cfg.model.num_classes)
    records = []
    try:
        for _ in range(cfg.num_rounds):
            state, rec = run_round(state, cfg.defense, spec=cfg.model, test_set=test_set,
                                   target_classes=cfg.target_classes)
            records.append(rec)
            if writer is not None:
                writer.append(rec)
            log.debug("%s round %d: overall %.2f target %.2f other %.2f", cfg.name, rec.round,
                      rec.overall_accuracy, rec.target_mean, rec.other_mean)
    finally:
        if writer is not None:
            writer.close()
    report, summary = render_report(records, cfg.scenario or cfg.name, cfg.target_classes, cfg.attack_window,
                                    cfg.defense.describe(), baseline_records)
    if out is not None:
        write_report(report, out)
    return ExperimentResult(cfg, records, report, summary, out)
