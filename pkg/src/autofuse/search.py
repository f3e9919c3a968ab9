"""Configuration search and ensemble weight optimization.

The sampler starts uniform and, once enough trials exist, proposes from a
density-ratio (Parzen) surrogate that up-weights regions whose observed
validation loss beats the median. Failed trials never abort a search;
they are logged and scored as worst.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import AutofuseError
from .metrics import log_loss
from .validation import check_prob_matrix, check_simplex_weights

# ---------------------------------------------------------------------------
# search space


@dataclass(frozen=True)
class Categorical:
    choices: tuple

    def contains(self, v) -> bool:
        return v in self.choices


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int
    log: bool = False

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and self.lo <= v <= self.hi


@dataclass(frozen=True)
class FloatRange:
    lo: float
    hi: float
    log: bool = False

    def contains(self, v) -> bool:
        return self.lo <= float(v) <= self.hi


@dataclass(frozen=True)
class ParamSpec:
    name: str
    domain: object
    active: object = None  # callable(partial config) -> bool, None = always

    def is_active(self, config: dict) -> bool:
        return True if self.active is None else bool(self.active(config))


@dataclass
class SearchSpace:
    """Ordered parameter declarations for one strategy."""

    strategy: str
    params: list[ParamSpec]

    def __post_init__(self):
        for spec in self.params:
            if isinstance(spec.domain, Categorical) and not spec.domain.choices:
                raise ValueError(f"{spec.name}: empty choice list")
            if isinstance(spec.domain, (IntRange, FloatRange)):
                if not (np.isfinite(spec.domain.lo) and np.isfinite(spec.domain.hi)):
                    raise ValueError(f"{spec.name}: bounds must be finite")
                if spec.domain.lo > spec.domain.hi:
                    raise ValueError(f"{spec.name}: lo > hi")

    def validate(self, config: dict) -> None:
        for spec in self.params:
            if spec.is_active(config):
                if spec.name not in config:
                    raise ValueError(f"missing active parameter {spec.name!r}")
                if not spec.domain.contains(config[spec.name]):
                    raise ValueError(f"{spec.name}={config[spec.name]!r} out of bounds")


def config_key(config: dict) -> str:
    return json.dumps(config, sort_keys=True)


# ---------------------------------------------------------------------------
# proposal sampling


def _uniform_draw(domain, rng):
    if isinstance(domain, Categorical):
        return domain.choices[int(rng.integers(len(domain.choices)))]
    if isinstance(domain, IntRange):
        if domain.log:
            v = math.exp(rng.uniform(math.log(domain.lo), math.log(domain.hi)))
            return int(min(max(round(v), domain.lo), domain.hi))
        return int(rng.integers(domain.lo, domain.hi + 1))
    if isinstance(domain, FloatRange):
        if domain.log:
            v = float(np.exp(rng.uniform(np.log(domain.lo), np.log(domain.hi))))
            return min(max(v, domain.lo), domain.hi)
        return float(rng.uniform(domain.lo, domain.hi))
    raise TypeError(f"unknown domain {domain!r}")


def _to_line(domain, values):
    arr = np.asarray(values, dtype=np.float64)
    return np.log(arr) if domain.log else arr


def _propose_numeric(domain, good, bad, rng, n_candidates=24):
    lo, hi = (math.log(domain.lo), math.log(domain.hi)) if domain.log else (domain.lo, domain.hi)
    if hi <= lo:
        return domain.lo
    g = _to_line(domain, good)
    b = _to_line(domain, bad)
    bw = max((hi - lo) / max(2.0, math.sqrt(len(g))), 1e-12)
    centers = g[rng.integers(len(g), size=n_candidates)]
    candidates = np.clip(centers + bw * rng.standard_normal(n_candidates), lo, hi)

    def density(points, xs):
        if len(points) == 0:
            return np.full(len(xs), 1.0 / (hi - lo))
        diffs = (xs[:, None] - points[None, :]) / bw
        return np.exp(-0.5 * diffs * diffs).mean(axis=1) / (bw * math.sqrt(2 * math.pi))

    ratio = density(g, candidates) / (density(b, candidates) + 1e-12)
    x = float(candidates[int(np.argmax(ratio))])
    if domain.log:
        x = math.exp(x)
    if isinstance(domain, IntRange):
        return int(min(max(round(x), domain.lo), domain.hi))
    return min(max(float(x), domain.lo), domain.hi)


def _propose_categorical(domain, good, bad, rng):
    weights = []
    for choice in domain.choices:
        n_good = sum(1 for v in good if v == choice)
        n_bad = sum(1 for v in bad if v == choice)
        weights.append((n_good + 0.5) / (n_bad + 0.5))
    p = np.asarray(weights) / sum(weights)
    return domain.choices[int(rng.choice(len(domain.choices), p=p))]


def sample_config(
    space: SearchSpace,
    history,
    seed,
    sampler: str = "surrogate",
    n_warmup: int = 10,
    explore: float = 0.1,
) -> dict:
    """Propose a configuration; deterministic in (space, history, seed).

    ``history`` is a list of (config, score) with lower scores better and
    failed trials at +inf. Below ``n_warmup`` observations (or with the
    uniform sampler) parameters are drawn uniformly; afterwards proposals
    come from the good/bad density ratio, with an ``explore`` chance of a
    uniform draw per parameter.
    """
    rng = np.random.default_rng(seed)
    scored = [(c, s) for c, s in history]
    use_surrogate = sampler == "surrogate" and len(scored) >= n_warmup
    good_configs: list[dict] = []
    bad_configs: list[dict] = []
    if use_surrogate:
        scores = np.asarray([s for _, s in scored], dtype=np.float64)
        median = np.median(scores)
        good_configs = [c for c, s in scored if s < median]
        bad_configs = [c for c, s in scored if s >= median]
        if not good_configs:
            use_surrogate = False

    config: dict = {}
    for spec in space.params:
        if not spec.is_active(config):
            continue
        draw_uniform = not use_surrogate or rng.random() < explore
        if not draw_uniform:
            good = [c[spec.name] for c in good_configs if spec.name in c]
            bad = [c[spec.name] for c in bad_configs if spec.name in c]
            if not good:
                draw_uniform = True
            elif isinstance(spec.domain, Categorical):
                config[spec.name] = _propose_categorical(spec.domain, good, bad, rng)
            else:
                config[spec.name] = _propose_numeric(spec.domain, good, bad, rng)
        if draw_uniform:
            config[spec.name] = _uniform_draw(spec.domain, rng)
    space.validate(config)
    return config


# ---------------------------------------------------------------------------
# the search loop


@dataclass
class Trial:
    index: int
    config: dict
    status: str
    score: float
    fold_scores: list[float] = field(default_factory=list)
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "config": self.config,
            "status": self.status,
            "score": None if not math.isfinite(self.score) else self.score,
            "fold_scores": self.fold_scores,
            "error": self.error,
        }


@dataclass
class Leaderboard:
    """Successful trials sorted by mean validation score (ascending)."""

    strategy: str
    entries: list[Trial]

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda t: (t.score, t.index))

    @property
    def best(self) -> Trial:
        return self.entries[0]

    def top_configs(self, k: int) -> list[dict]:
        """Up to k best configs, deduplicated by content."""
        seen, out = set(), []
        for trial in self.entries:
            key = config_key(trial.config)
            if key in seen:
                continue
            seen.add(key)
            out.append(trial.config)
            if len(out) == k:
                break
        return out

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "entries": [t.to_dict() for t in self.entries]}


def trial_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


def run_search(
    space: SearchSpace,
    evaluate_config,
    budget: int,
    seed: int = 0,
    sampler: str = "surrogate",
    n_warmup: int = 10,
) -> tuple[Leaderboard, list[Trial]]:
    """Evaluate exactly ``budget`` sampled configs, surviving failed fits.

    ``evaluate_config(config)`` returns per-fold validation losses; any
    AutofuseError marks the trial failed (score = worst) and the search
    continues. Proposals depend only on (seed, trial index, prior
    history), so a longer budget extends a shorter one's trial sequence.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    history: list[tuple[dict, float]] = []
    trials: list[Trial] = []
    for t in range(budget):
        config = sample_config(
            space, history, trial_seed(seed, t), sampler=sampler, n_warmup=n_warmup
        )
        try:
            fold_scores = [float(s) for s in evaluate_config(config)]
            trial = Trial(
                index=t,
                config=config,
                status="ok",
                score=float(np.mean(fold_scores)),
                fold_scores=fold_scores,
            )
        except AutofuseError as exc:
            trial = Trial(
                index=t,
                config=config,
                status="failed",
                score=float("inf"),
                error=f"{type(exc).__name__}: {exc}",
            )
        history.append((config, trial.score))
        trials.append(trial)
    leaderboard = Leaderboard(space.strategy, [t for t in trials if t.status == "ok"])
    return leaderboard, trials


# ---------------------------------------------------------------------------
# simplex weight optimization


def mix_probabilities(weights, member_probs) -> np.ndarray:
    weights = check_simplex_weights(weights)
    out = np.zeros_like(member_probs[0])
    for w, P in zip(weights, member_probs):
        out += w * P
    return out


def optimize_simplex_weights(member_probs, y, budget: int = 64, seed: int = 0) -> np.ndarray:
    """Simplex weights minimizing the log-loss of the weighted mixture.

    Seeded Dirichlet sampling over the simplex followed by coordinate-wise
    line search. The uniform point is evaluated first and improvements
    must be strict, so identical members return uniform weights; every
    vertex is evaluated, so the result never loses to a single member by
    more than numerical tolerance.
    """
    P = [check_prob_matrix(p, name=f"member {i}") for i, p in enumerate(member_probs)]
    m = len(P)
    if m == 0:
        raise ValueError("need at least one member")
    if m == 1:
        return np.ones(1)
    S = np.stack(P)

    def loss(w):
        return log_loss(np.tensordot(w, S, axes=1), y)

    candidates = [np.full(m, 1.0 / m)]
    candidates.extend(np.eye(m))
    rng = np.random.default_rng(seed)
    candidates.extend(rng.dirichlet(np.ones(m), size=max(0, budget)))

    best_w = candidates[0]
    best_loss = loss(best_w)
    vertex_best = math.inf
    for i, w in enumerate(candidates[1:], start=1):
        v = loss(w)
        if 1 <= i <= m:
            vertex_best = min(vertex_best, v)
        if v < best_loss - 1e-12:
            best_w, best_loss = np.asarray(w, dtype=np.float64), v

    steps = (1.0, 0.8, 0.6, 0.4, 0.2, 0.1, 0.05, 0.02)
    for _ in range(50):
        improved = False
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            for t in steps:
                w = (1.0 - t) * best_w + t * e
                v = loss(w)
                if v < best_loss - 1e-12:
                    best_w, best_loss = w, v
                    improved = True
                if best_w[i] > 0.0:
                    w = best_w.copy()
                    w[i] *= 1.0 - t
                    total = w.sum()
                    if total > 0:
                        w /= total
                        v = loss(w)
                        if v < best_loss - 1e-12:
                            best_w, best_loss = w, v
                            improved = True
        if not improved:
            break

    if best_loss > vertex_best + 1e-6:
        raise AssertionError("simplex optimizer failed vertex recovery")
    return best_w


def weight_fit_audit(weights, member_probs, y) -> dict:
    """Achieved mixture loss next to each member's own loss."""
    member_losses = [log_loss(P, y) for P in member_probs]
    achieved = log_loss(mix_probabilities(weights, member_probs), y)
    return {
        "weights": [float(w) for w in weights],
        "member_losses": member_losses,
        "achieved_loss": achieved,
        "best_member_loss": min(member_losses),
        "vertex_recovery_ok": achieved <= min(member_losses) + 1e-6,
    }


# ---------------------------------------------------------------------------
# ensembles over fitted predictors


class StrategyEnsemble:
    """Top-K fitted predictors of one strategy with simplex weights.

    Members are refit per fold; prediction takes the fold whose models
    should score the given rows.
    """

    def __init__(self, strategy, configs, weights, fold_members, audit=None):
        self.strategy = strategy
        self.configs = configs
        self.weights = check_simplex_weights(weights)
        self.fold_members = fold_members
        self.audit = audit or {}

    def predict_proba(self, mod, fold: int = 0) -> np.ndarray:
        members = self.fold_members[fold]
        probs = [m.predict_proba(mod) for m in members]
        return mix_probabilities(self.weights, probs)

    def to_dict(self) -> dict:
        return {
            "kind": "strategy_ensemble",
            "strategy": self.strategy,
            "configs": self.configs,
            "weights": self.weights.tolist(),
            "audit": self.audit,
            "fold_members": [[m.to_dict() for m in fold] for fold in self.fold_members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyEnsemble":
        from .serialize import model_from_dict

        fold_members = [[model_from_dict(m) for m in fold] for fold in d["fold_members"]]
        return cls(
            strategy=d["strategy"],
            configs=d["configs"],
            weights=np.asarray(d["weights"], dtype=np.float64),
            fold_members=fold_members,
            audit=d.get("audit", {}),
        )


class MultistrategyEnsemble:
    """The final predictor: strategy ensembles mixed by outer simplex weights."""

    def __init__(self, strategies, order, outer_weights, dropped=None, audit=None):
        self.strategies = strategies
        self.order = list(order)
        self.outer_weights = check_simplex_weights(outer_weights)
        if len(self.order) != len(self.outer_weights):
            raise ValueError("one outer weight per included strategy")
        self.dropped = dropped or []
        self.audit = audit or {}

    def predict_proba(self, mod, fold: int = 0) -> np.ndarray:
        probs = [self.strategies[name].predict_proba(mod, fold) for name in self.order]
        return mix_probabilities(self.outer_weights, probs)

    def to_dict(self) -> dict:
        return {
            "kind": "multistrategy_ensemble",
            "order": self.order,
            "outer_weights": self.outer_weights.tolist(),
            "dropped": self.dropped,
            "audit": self.audit,
            "strategies": {k: v.to_dict() for k, v in self.strategies.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MultistrategyEnsemble":
        strategies = {k: StrategyEnsemble.from_dict(v) for k, v in d["strategies"].items()}
        return cls(
            strategies=strategies,
            order=d["order"],
            outer_weights=np.asarray(d["outer_weights"], dtype=np.float64),
            dropped=d.get("dropped", []),
            audit=d.get("audit", {}),
        )
