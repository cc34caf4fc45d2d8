"""Experiment configuration: INI parsing, defaults and validation.

A config file has the sections ``experiment``, ``data``, ``model``,
``training``, ``partition``, ``attack`` (only with malicious clients) and
``defense``. Unknown sections or keys are errors. Everything not given falls
back to the desk-scale defaults below; sub-seeds are derived from the single
experiment seed so ``--seed`` re-seeds the whole run.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, replace
from pathlib import Path

from fairfl.attack import COUNT_POLICIES, AttackConfig
from fairfl.data import PartitionPlan
from fairfl.defense import KINDS, DefensePolicy
from fairfl.model import ARCHITECTURES, ModelSpec, TrainingConfig
from fairfl.seeding import derive_seed


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class DataConfig:
    source: str = "synthetic"
    path: Path | None = None
    samples_per_class: int = 200
    separation: float = 5.5
    test_fraction: float = 0.2


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    model: ModelSpec
    training: TrainingConfig
    partition: PartitionPlan
    data: DataConfig
    num_rounds: int
    num_malicious: int
    attack: AttackConfig | None
    defense: DefensePolicy
    seed: int
    output_dir: Path
    scenario: str = ""

    @property
    def num_clients(self) -> int:
        return self.partition.num_clients

    @property
    def target_classes(self) -> frozenset:
        return self.partition.target_classes

    @property
    def data_seed(self) -> int:
        return derive_seed(self.seed, "data")

    @property
    def init_seed(self) -> int:
        return derive_seed(self.seed, "init")

    @property
    def attack_window(self):
        if self.attack is None or self.attack.attack_start_round >= self.num_rounds:
            return None
        return (self.attack.attack_start_round, self.num_rounds - 1)

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed,
                       training=replace(self.training, seed=derive_seed(seed, "training")),
                       partition=replace(self.partition, seed=derive_seed(seed, "partition")))

    def with_output_dir(self, output_dir) -> ExperimentConfig:
        return replace(self, output_dir=Path(output_dir))


# section -> key -> (type, default)
_SCHEMA = {
    "experiment": {"name": (str, "experiment"), "scenario": (str, ""), "seed": (int, 0),
                   "num_rounds": (int, 100), "num_malicious": (int, 0), "output_dir": (str, "runs/experiment")},
    "data": {"source": (str, "synthetic"), "path": (str, None), "samples_per_class": (int, 200),
             "separation": (float, 5.5), "test_fraction": (float, 0.2)},
    "model": {"architecture": (str, "softmax_regression"), "input_dim": (int, 32), "num_classes": (int, 10),
              "hidden_sizes": ("ints", ())},
    "training": {"learning_rate": (float, 0.1), "local_epochs": (int, 1), "batch_size": (int, 32)},
    "partition": {"num_clients": (int, 3), "samples_per_client": (int, None), "unfair_set_size": (int, None),
                  "target_classes": ("ints", (0, 1))},
    "attack": {"start_round": (int, 0), "reported_count_policy": (str, "match_honest_estimate"),
               "fixed_n0": (int, None), "estimated_honest_clients": (int, None),
               "estimated_count_per_client": (int, None), "clip_to_norm": (float, None),
               "mixture_ratio": (float, 0.0), "target_local_epochs": (int, 10),
               "target_learning_rate": (float, 3.0)},
    "defense": {"kind": (str, "none"), "bound": (str, None), "threshold_multiplier": (float, 3.0)},
}


def _convert(kind, raw):
    raw = raw.strip()
    if raw == "":
        return None
    if kind == "ints":
        return tuple(int(p) for p in raw.replace(";", ",").split(",") if p.strip())
    return kind(raw)


def _read_sections(parser, problems):
    values = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            problems.append(f"[{section}]: unknown section (expected one of {', '.join(_SCHEMA)})")
            continue
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                problems.append(f"{section}.{key}: unknown key")
                continue
            kind, _ = _SCHEMA[section][key]
            try:
                values[(section, key)] = _convert(kind, raw)
            except ValueError:
                name = "comma-separated integers" if kind == "ints" else kind.__name__
                problems.append(f"{section}.{key}: expected {name}, got {raw!r}")
    return values


def _train_pool_size(data: DataConfig, num_classes: int) -> tuple[int, list]:
    """Rows left for clients after the stratified test split, and the class counts."""
    if data.source == "csv":
        from fairfl.data import load_csv

        ds = load_csv(data.path, num_classes)
        counts = list(ds.class_counts())
    else:
        counts = [data.samples_per_class] * num_classes
    train = 0
    for c in counts:
        test = int(round(data.test_fraction * c))
        if c and test == 0:
            test = 1
        train += c - test
    return train, counts


def _default_unfair_size(data, counts, targets, used, pool, spc):
    """One clean set's size, capped at 90% of the target-class rows expected
    in the union of clean sets (the unfair set is drawn from that union)."""
    target_train = 0
    for c in targets:
        if c < len(counts):
            test = int(round(data.test_fraction * counts[c]))
            target_train += counts[c] - max(test, 1 if counts[c] else 0)
    expected = int(0.9 * target_train * used / pool) if pool else 0
    return max(1, min(spc, expected))


def build_config(values: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build and validate from ``{(section, key): value}``; missing keys use defaults."""
    problems = []

    def get(section, key):
        v = values.get((section, key))
        return _SCHEMA[section][key][1] if v is None else v

    def check(cond, key, msg):
        if not cond:
            problems.append(f"{key}: {msg}")
        return cond

    seed = get("experiment", "seed")
    num_rounds = get("experiment", "num_rounds")
    num_malicious = get("experiment", "num_malicious")
    check(seed >= 0, "experiment.seed", "must be a non-negative integer")
    check(num_rounds >= 1, "experiment.num_rounds", "must be positive")
    check(num_malicious >= 0, "experiment.num_malicious", "must be non-negative")

    model = None
    arch = get("model", "architecture")
    if check(arch in ARCHITECTURES, "model.architecture", f"must be one of {', '.join(ARCHITECTURES)}"):
        try:
            model = ModelSpec(arch, get("model", "input_dim"), get("model", "num_classes"),
                              get("model", "hidden_sizes"))
        except ValueError as exc:
            problems.append(f"model: {exc}")

    training = None
    lr, epochs, bs = get("training", "learning_rate"), get("training", "local_epochs"), get("training", "batch_size")
    check(lr > 0, "training.learning_rate", "must be positive")
    check(epochs >= 1, "training.local_epochs", "must be positive")
    check(bs >= 1, "training.batch_size", "must be positive")
    if lr > 0 and epochs >= 1 and bs >= 1 and seed >= 0:
        training = TrainingConfig(lr, epochs, bs, derive_seed(seed, "training"))

    source = get("data", "source")
    path = values.get(("data", "path"))
    if path is not None:
        path = Path(path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
    data = DataConfig(source, path, get("data", "samples_per_class"), get("data", "separation"),
                      get("data", "test_fraction"))
    check(source in ("synthetic", "csv"), "data.source", "must be 'synthetic' or 'csv'")
    check(source != "csv" or path is not None, "data.path", "required when data.source = csv")
    check(data.samples_per_class >= 1, "data.samples_per_class", "must be positive")
    check(data.separation >= 3.0, "data.separation", "must be >= 3 (within-class standard deviations)")
    check(0.0 < data.test_fraction < 1.0, "data.test_fraction", "must be in (0, 1)")

    num_clients = get("partition", "num_clients")
    targets = frozenset(get("partition", "target_classes"))
    check(num_clients >= 1, "partition.num_clients", "must be positive")
    if model is not None:
        check(targets and targets < set(range(model.num_classes)), "partition.target_classes",
              f"must be a non-empty proper subset of 0..{model.num_classes - 1}")
    if num_clients >= 1:
        check(num_malicious < num_clients / 2, "experiment.num_malicious",
              f"{num_malicious} of {num_clients} clients violates the non-majority rule "
              "(malicious clients must be fewer than half)")

    has_attack = values.get(("__attack_section__",), False) or any(k[0] == "attack" for k in values)
    check(not (num_malicious > 0 and not has_attack), "attack", "num_malicious > 0 requires an [attack] section")
    check(not (has_attack and num_malicious == 0), "attack", "[attack] section present but num_malicious = 0")

    partition = None
    spc = values.get(("partition", "samples_per_client"))
    unfair = values.get(("partition", "unfair_set_size"))
    if not problems and model is not None:
        try:
            pool, counts = _train_pool_size(data, model.num_classes)
        except (OSError, ValueError) as exc:
            problems.append(f"data.path: {exc}")
            pool, counts = 0, []
        if pool:
            if spc is None:
                spc = pool // num_clients
            if unfair is None:
                unfair = _default_unfair_size(data, counts, targets, num_clients * spc, pool, spc)
            check(spc >= 1, "partition.samples_per_client", "must be positive")
            check(unfair >= 1, "partition.unfair_set_size", "must be positive")
            check(num_clients * spc <= pool, "partition.samples_per_client",
                  f"{num_clients} x {spc} exceeds the {pool} training rows")
            if not problems:
                partition = PartitionPlan(num_clients, spc, unfair, targets, derive_seed(seed, "partition"))

    attack = None
    if has_attack and num_malicious > 0 and partition is not None:
        policy = get("attack", "reported_count_policy")
        check(policy in COUNT_POLICIES, "attack.reported_count_policy", f"must be one of {', '.join(COUNT_POLICIES)}")
        fixed = values.get(("attack", "fixed_n0"))
        check(policy != "fixed" or (fixed is not None and fixed >= 1), "attack.fixed_n0",
              "must be a positive integer when reported_count_policy = fixed")
        start = get("attack", "start_round")
        check(start >= 0, "attack.start_round", "must be non-negative")
        est_h = values.get(("attack", "estimated_honest_clients")) or (num_clients - num_malicious)
        est_n = values.get(("attack", "estimated_count_per_client")) or spc
        check(est_h >= 1, "attack.estimated_honest_clients", "must be >= 1")
        clip = values.get(("attack", "clip_to_norm"))
        check(clip is None or clip > 0, "attack.clip_to_norm", "must be positive")
        mix = get("attack", "mixture_ratio")
        check(mix >= 0, "attack.mixture_ratio", "must be non-negative")
        tep = get("attack", "target_local_epochs")
        check(tep is None or tep >= 1, "attack.target_local_epochs", "must be positive")
        tlr = get("attack", "target_learning_rate")
        check(tlr is None or tlr > 0, "attack.target_learning_rate", "must be positive")
        if not problems:
            attack = AttackConfig(targets, start, policy, fixed, est_h, est_n, clip, mix, tep, tlr)

    defense = None
    kind = get("defense", "kind")
    raw_bound = values.get(("defense", "bound"))
    mult = get("defense", "threshold_multiplier")
    if check(kind in KINDS, "defense.kind", f"must be one of {', '.join(KINDS)}"):
        bound = None
        if kind == "clip":
            if raw_bound in (None, "adaptive_median"):
                bound = None
            else:
                try:
                    bound = float(raw_bound)
                except ValueError:
                    bound = -1.0
                check(bound > 0, "defense.bound", "must be a positive number or 'adaptive_median'")
        else:
            check(raw_bound is None, "defense.bound", "only valid with kind = clip")
        if kind == "flag_outliers":
            check(mult > 1, "defense.threshold_multiplier", "must be > 1")
        if not problems:
            defense = DefensePolicy(kind, bound, mult)

    if problems:
        raise ConfigError(problems)
    out = Path(get("experiment", "output_dir"))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return ExperimentConfig(name=get("experiment", "name"), model=model, training=training, partition=partition,
                            data=data, num_rounds=num_rounds, num_malicious=num_malicious, attack=attack,
                            defense=defense, seed=seed, output_dir=out,
                            scenario=get("experiment", "scenario") or get("experiment", "name"))


def parse_config_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    problems = []
    values = _read_sections(parser, problems)
    if problems:
        raise ConfigError(problems)
    if parser.has_section("attack"):
        values[("__attack_section__",)] = True
    return build_config(values, base_dir)


def parse_config(path) -> ExperimentConfig:
    """Parse an INI experiment file; relative paths resolve against the current directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"{path}: no such config file"])
    return parse_config_text(path.read_text(encoding="utf-8"))


def to_ini(cfg: ExperimentConfig) -> str:
    """Fully resolved config text; ``parse_config_text(to_ini(cfg)) == cfg``."""
    p = configparser.ConfigParser(interpolation=None)
    ints = lambda xs: ",".join(str(x) for x in sorted(xs)) if xs else ""
    p["experiment"] = {"name": cfg.name, "scenario": cfg.scenario, "seed": str(cfg.seed),
                       "num_rounds": str(cfg.num_rounds), "num_malicious": str(cfg.num_malicious),
                       "output_dir": str(cfg.output_dir)}
    p["data"] = {"source": cfg.data.source, "path": str(cfg.data.path) if cfg.data.path else "",
                 "samples_per_class": str(cfg.data.samples_per_class),
                 "separation": repr(cfg.data.separation), "test_fraction": repr(cfg.data.test_fraction)}
    p["model"] = {"architecture": cfg.model.architecture, "input_dim": str(cfg.model.input_dim),
                  "num_classes": str(cfg.model.num_classes),
                  "hidden_sizes": ",".join(str(h) for h in cfg.model.hidden_sizes)}
    p["training"] = {"learning_rate": repr(cfg.training.learning_rate),
                     "local_epochs": str(cfg.training.local_epochs), "batch_size": str(cfg.training.batch_size)}
    p["partition"] = {"num_clients": str(cfg.partition.num_clients),
                      "samples_per_client": str(cfg.partition.samples_per_client),
                      "unfair_set_size": str(cfg.partition.unfair_set_size),
                      "target_classes": ints(cfg.partition.target_classes)}
    if cfg.attack is not None:
        a = cfg.attack
        p["attack"] = {"start_round": str(a.attack_start_round), "reported_count_policy": a.reported_count_policy,
                       "fixed_n0": "" if a.fixed_n0 is None else str(a.fixed_n0),
                       "estimated_honest_clients": str(a.estimated_honest_clients),
                       "estimated_count_per_client": str(a.estimated_count_per_client),
                       "clip_to_norm": "" if a.clip_to_norm is None else repr(a.clip_to_norm),
                       "mixture_ratio": repr(a.mixture_ratio),
                       "target_local_epochs": "" if a.target_local_epochs is None else str(a.target_local_epochs),
                       "target_learning_rate": "" if a.target_learning_rate is None else repr(a.target_learning_rate)}
    d = cfg.defense
    bound = ("adaptive_median" if d.adaptive else repr(d.bound)) if d.kind == "clip" else ""
    p["defense"] = {"kind": d.kind, "bound": bound, "threshold_multiplier": repr(d.threshold_multiplier)}
    buf = io.StringIO()
    p.write(buf)
    return buf.getvalue()
