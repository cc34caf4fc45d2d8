"""Server-side magnitude screening of client updates before aggregation."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from fairfl.model import ClientUpdate

KINDS = ("none", "clip", "flag_outliers")


@dataclass(frozen=True)
class DefensePolicy:
    """``kind="clip"`` with ``bound=None`` clips to this round's median norm."""

    kind: str = "none"
    bound: float | None = None
    threshold_multiplier: float = 3.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"defense kind must be one of {KINDS}, got {self.kind!r}")
        if self.bound is not None and not self.bound > 0:
            raise ValueError("clip bound must be positive")
        if self.kind == "flag_outliers" and not self.threshold_multiplier > 1:
            raise ValueError("threshold_multiplier must be > 1")

    @property
    def adaptive(self) -> bool:
        return self.kind == "clip" and self.bound is None

    def describe(self) -> str:
        if self.kind == "clip":
            return "clip(adaptive_median)" if self.adaptive else f"clip({self.bound:g})"
        if self.kind == "flag_outliers":
            return f"flag_outliers({self.threshold_multiplier:g})"
        return "none"


@dataclass(frozen=True)
class DefenseAction:
    client_id: int
    action: str  # "clipped" | "excluded"
    norm: float
    bound: float

    def flag(self) -> str:
        return f"{self.client_id}:{self.action}"


def median_norm(norms) -> float:
    """Lower median, so clipping to it leaves the median itself unchanged."""
    s = np.sort(np.asarray(norms, dtype=np.float64))
    return float(s[(len(s) - 1) // 2])


def clip_update(update: ClientUpdate, bound: float) -> ClientUpdate:
    norm = update.norm
    if norm <= bound:
        return update
    return replace(update, delta=update.delta * (bound / norm))


def apply_defense(updates, policy: DefensePolicy | None, client_ids=None):
    """Screen ``updates``; returns ``(kept_updates, actions)``.

    Reported counts pass through untouched. ``client_ids`` default to list
    positions.
    """
    updates = list(updates)
    if not updates:
        raise ValueError("no updates to screen")
    ids = list(range(len(updates))) if client_ids is None else list(client_ids)
    if policy is None or policy.kind == "none":
        return updates, []
    norms = [u.norm for u in updates]
    actions = []
    if policy.kind == "clip":
        bound = median_norm(norms) if policy.adaptive else policy.bound
        out = []
        for cid, u, nrm in zip(ids, updates, norms):
            if nrm > bound:
                actions.append(DefenseAction(cid, "clipped", nrm, bound))
            out.append(clip_update(u, bound))
        return out, actions
    limit = policy.threshold_multiplier * median_norm(norms)
    kept = []
    for cid, u, nrm in zip(ids, updates, norms):
        if nrm > limit:
            actions.append(DefenseAction(cid, "excluded", nrm, limit))
        else:
            kept.append(u)
    return kept, actions
