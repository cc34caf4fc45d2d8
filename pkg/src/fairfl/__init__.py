"""Deterministic FedAvg simulator for attribute-level fairness attacks."""
from fairfl._backend import BACKEND
from fairfl.attack import (AttackConfig, MaliciousClient, TargetUpdate, compute_target_update,
                           malicious_client_step, malicious_norm_bound, predict_clean_updates,
                           solve_malicious_update)
from fairfl.config import ConfigError, ExperimentConfig, parse_config
from fairfl.data import (LabeledDataset, PartitionPlan, filter_by_classes, generate_synthetic, load_csv,
                         partition, write_csv)
from fairfl.defense import DefenseAction, DefensePolicy, apply_defense
from fairfl.federation import FederationState, HonestClient, fedavg_aggregate, run_experiment, run_round
from fairfl.metrics import FairnessReport, RoundRecord, emit_round_csv, fairness_gap, render_report
from fairfl.model import (ClientUpdate, ModelSpec, TrainingConfig, evaluate, forward, gradient, init_parameters,
                          local_train, parameter_count)

__version__ = "0.1.0"
