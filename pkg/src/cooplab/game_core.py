"""Games, types, strategies, histories, and exact payoff arithmetic.

Conventions used throughout the package:

* Actions are 0-indexed integers; the row player is always agent 1.
* Each type's payoff matrix is indexed ``[own_action, opponent_action]``,
  so the same matrix works regardless of the seat its owner occupies.
* Mixed strategies are length-N probability vectors; joint strategies are
  N x N matrices indexed ``[row_action, col_action]``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

PROB_TOL = 1e-12
PAYOFF_TOL = 1e-9

# Default cap on the number of leaves of the N^(2T) history tree that the
# exact enumerators are willing to walk.
TREE_CAP = 600_000

History = tuple[tuple[int, int], ...]


class GameError(Exception):
    """Base class for errors raised by this package."""


class CapacityError(GameError):
    """An exact computation would exceed its enumeration cap."""


class GameFormatError(GameError):
    """A game/type-space file does not match the documented schema."""


def check_mixed(probs, n: int | None = None) -> np.ndarray:
    """Validate a mixed strategy and return it as a float array."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1:
        raise GameError(f"mixed strategy must be a vector, got shape {p.shape}")
    if n is not None and p.shape[0] != n:
        raise GameError(f"mixed strategy has length {p.shape[0]}, expected {n}")
    if np.any(p < -PROB_TOL):
        raise GameError(f"mixed strategy has negative entries: {p}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise GameError(f"mixed strategy sums to {p.sum()}, not 1")
    return p


def check_joint(probs, n: int | None = None) -> np.ndarray:
    """Validate a joint strategy (distribution over action pairs)."""
    z = np.asarray(probs, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise GameError(f"joint strategy must be square, got shape {z.shape}")
    if n is not None and z.shape[0] != n:
        raise GameError(f"joint strategy has size {z.shape[0]}, expected {n}")
    if np.any(z < -PROB_TOL):
        raise GameError("joint strategy has negative entries")
    if abs(z.sum() - 1.0) > 1e-9:
        raise GameError(f"joint strategy sums to {z.sum()}, not 1")
    return z


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BimatrixGame:
    """A two-player matrix game assembled from the two players' type matrices.

    ``payoff_row`` is the row player's matrix G(theta1) and ``payoff_col`` the
    column player's G(theta2), each indexed [own_action, opponent_action].
    """

    payoff_row: np.ndarray
    payoff_col: np.ndarray
    joint_type: tuple[str, str] = ("row", "col")

    def __post_init__(self):
        object.__setattr__(self, "payoff_row", _frozen(self.payoff_row))
        object.__setattr__(self, "payoff_col", _frozen(self.payoff_col))
        a, b = self.payoff_row, self.payoff_col
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GameError(f"row payoff matrix must be square, got {a.shape}")
        if b.shape != a.shape:
            raise GameError(f"payoff matrices disagree: {a.shape} vs {b.shape}")

    @property
    def num_actions(self) -> int:
        return self.payoff_row.shape[0]


def payoff(game: BimatrixGame, a_row: int, a_col: int, player: str) -> float:
    """Stage payoff of one player at a pure action pair."""
    n = game.num_actions
    if not (0 <= a_row < n and 0 <= a_col < n):
        raise GameError(f"action pair ({a_row}, {a_col}) out of range for N={n}")
    if player == "row":
        return float(game.payoff_row[a_row, a_col])
    if player == "col":
        return float(game.payoff_col[a_col, a_row])
    raise GameError(f"player must be 'row' or 'col', got {player!r}")


def expected_payoff(sigma_row, sigma_col, game: BimatrixGame, player: str) -> float:
    """Bilinear expected payoff of a mixed-strategy profile for one player."""
    p = check_mixed(sigma_row, game.num_actions)
    q = check_mixed(sigma_col, game.num_actions)
    if player == "row":
        return float(p @ game.payoff_row @ q)
    if player == "col":
        return float(q @ game.payoff_col @ p)
    raise GameError(f"player must be 'row' or 'col', got {player!r}")


def _rescale(m: np.ndarray) -> np.ndarray:
    lo, hi = m.min(), m.max()
    if hi - lo <= PROB_TOL:
        # Constant matrices are strategically equivalent to the zero matrix.
        return np.zeros_like(m)
    return (m - lo) / (hi - lo)


def normalize_game(game: BimatrixGame) -> BimatrixGame:
    """Affinely rescale each player's payoffs into [0, 1].

    Best-response correspondences are unchanged (positive affine maps
    preserve argmax sets).
    """
    return BimatrixGame(
        payoff_row=_rescale(game.payoff_row),
        payoff_col=_rescale(game.payoff_col),
        joint_type=game.joint_type,
    )


@dataclass(frozen=True)
class TypeSpace:
    """Ordered finite type space with one payoff matrix per type."""

    types: tuple[str, ...]
    payoff_table: dict[str, np.ndarray]

    def __post_init__(self):
        if len(set(self.types)) != len(self.types):
            raise GameError("type identifiers must be unique")
        if set(self.types) != set(self.payoff_table):
            raise GameError("payoff table keys must match the type list")
        table = {}
        n = None
        for t in self.types:
            m = np.asarray(self.payoff_table[t], dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise GameError(f"payoff matrix for type {t!r} must be square")
            if n is None:
                n = m.shape[0]
            elif m.shape[0] != n:
                raise GameError("all type matrices must share one action count")
            table[t] = _frozen(m)
        object.__setattr__(self, "types", tuple(self.types))
        object.__setattr__(self, "payoff_table", table)

    @property
    def num_actions(self) -> int:
        return next(iter(self.payoff_table.values())).shape[0]

    def type_index(self, type_id: str) -> int:
        try:
            return self.types.index(type_id)
        except ValueError:
            raise GameError(f"unknown type {type_id!r}") from None

    def game(self, theta_row: str, theta_col: str) -> BimatrixGame:
        """Assemble the bimatrix game for a joint type."""
        if theta_row not in self.payoff_table or theta_col not in self.payoff_table:
            raise GameError(f"unknown joint type ({theta_row!r}, {theta_col!r})")
        return BimatrixGame(
            payoff_row=self.payoff_table[theta_row],
            payoff_col=self.payoff_table[theta_col],
            joint_type=(theta_row, theta_col),
        )

    def joint_types(self) -> list[tuple[str, str]]:
        return [(a, b) for a in self.types for b in self.types]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.types).encode())
        for t in self.types:
            h.update(self.payoff_table[t].tobytes())
        return h.hexdigest()[:16]

    def to_dict(self) -> dict:
        return {
            "num_actions": self.num_actions,
            "types": list(self.types),
            "payoffs": {t: self.payoff_table[t].flatten().tolist() for t in self.types},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TypeSpace":
        try:
            n = int(data["num_actions"])
            types = list(data["types"])
            payoffs = data["payoffs"]
        except (KeyError, TypeError) as exc:
            raise GameFormatError(f"missing or malformed field: {exc}") from exc
        table = {}
        for t in types:
            if t not in payoffs:
                raise GameFormatError(f"no payoff matrix for type {t!r}")
            flat = np.asarray(payoffs[t], dtype=float)
            if flat.size != n * n:
                raise GameFormatError(
                    f"type {t!r}: expected {n * n} entries, got {flat.size}"
                )
            table[t] = flat.reshape(n, n)
        return cls(types=tuple(types), payoff_table=table)

    def to_file(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")

    @classmethod
    def from_file(cls, path) -> "TypeSpace":
        try:
            with open(path) as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise GameFormatError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def check_history(history: Sequence[tuple[int, int]], n: int) -> History:
    h = tuple((int(a), int(b)) for a, b in history)
    for t, (a, b) in enumerate(h):
        if not (0 <= a < n and 0 <= b < n):
            raise GameError(f"stage {t}: action pair ({a}, {b}) out of range")
    return h


@dataclass
class EpisodeTrace:
    """Full record of one T-stage interaction.

    ``row_strategies`` / ``col_strategies`` hold the per-stage mixed strategies
    each agent announced before its action was sampled; they are what expected
    regret is computed from.
    """

    history: History
    row_strategies: list[np.ndarray]
    col_strategies: list[np.ndarray]
    joint_type: tuple[str, str]
    seed: int
    agent_ids: tuple[str, str] = ("?", "?")

    def __post_init__(self):
        if len(self.row_strategies) != len(self.history) or len(
            self.col_strategies
        ) != len(self.history):
            raise GameError("strategy lists must have the same length as the history")
        for t, (a, b) in enumerate(self.history):
            if self.row_strategies[t][a] <= 0 or self.col_strategies[t][b] <= 0:
                raise GameError(
                    f"stage {t}: sampled action has zero announced probability"
                )

    @property
    def num_stages(self) -> int:
        return len(self.history)


ActFn = Callable[[History], Sequence[float]]


def _check_tree_cap(n: int, T: int, cap: int) -> None:
    if n ** (2 * T) > cap:
        raise CapacityError(
            f"history tree has {n}^{2 * T} leaves, above the cap {cap}; "
            "use Monte-Carlo estimation instead"
        )


def exact_episode_value(
    act_row: ActFn,
    act_col: ActFn,
    game: BimatrixGame,
    T: int,
    cap: int = TREE_CAP,
) -> tuple[float, float]:
    """Exact expected total payoffs of two behavioral strategies over T stages.

    Recurses over the full history tree, weighting each branch by the
    announced mixed strategies.  Strategies are queried as functions of the
    history only, so any deterministically-replayable agent qualifies.
    """
    n = game.num_actions
    _check_tree_cap(n, T, cap)
    A, B = game.payoff_row, game.payoff_col

    def rec(h: History, depth: int) -> tuple[float, float]:
        if depth == T:
            return 0.0, 0.0
        p = check_mixed(act_row(h), n)
        q = check_mixed(act_col(h), n)
        v1 = float(p @ A @ q)
        v2 = float(q @ B @ p)
        for i in range(n):
            if p[i] <= 0.0:
                continue
            for j in range(n):
                w = p[i] * q[j]
                if w <= 0.0:
                    continue
                r1, r2 = rec(h + ((i, j),), depth + 1)
                v1 += w * r1
                v2 += w * r2
        return v1, v2

    return rec((), 0)


def history_distribution(
    act_row: ActFn,
    act_col: ActFn,
    n: int,
    T: int,
    cap: int = TREE_CAP,
) -> dict[History, float]:
    """Exact distribution over length-T histories induced by two strategies."""
    _check_tree_cap(n, T, cap)
    out: dict[History, float] = {}

    def rec(h: History, prob: float, depth: int) -> None:
        if depth == T:
            out[h] = out.get(h, 0.0) + prob
            return
        p = check_mixed(act_row(h), n)
        q = check_mixed(act_col(h), n)
        for i in range(n):
            for j in range(n):
                w = prob * p[i] * q[j]
                if w > 0.0:
                    rec(h + ((i, j),), w, depth + 1)

    rec((), 1.0, 0)
    return out


def total_variation(
    p: dict[History, float], q: dict[History, float]
) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
