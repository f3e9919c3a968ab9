"""Multimodal integration: late, early, and joint fusion models.

Late fusion mixes the probability outputs of independently trained
unimodal models with simplex weights. Early fusion trains a dense head on
concatenated frozen per-modality representations. Joint fusion trains
per-modality branch networks and the head together, end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatch
from .nn import (
    MlpParams,
    TrainConfig,
    _stack_backward,
    _stack_forward,
    init_mlp,
    mlp_forward,
    softmax,
    train_mlp,
    train_network,
)
from .search import optimize_simplex_weights
from .tabular import Imputer, Scaler, TabularPipeline, classifier_from_dict
from .validation import as_labels, as_matrix, check_simplex_weights


@dataclass
class Modalities:
    """Aligned per-modality matrices: the input every fusion model consumes."""

    tabular: np.ndarray
    embeddings: dict[str, np.ndarray]

    def __post_init__(self):
        self.tabular = as_matrix(self.tabular, "tabular", allow_nan=True)
        self.embeddings = {k: as_matrix(v, k) for k, v in self.embeddings.items()}
        for name, E in self.embeddings.items():
            if E.shape[0] != self.tabular.shape[0]:
                raise ShapeMismatch(f"embedding {name!r} row count mismatch")

    @property
    def n(self) -> int:
        return self.tabular.shape[0]

    def subset(self, idx) -> "Modalities":
        idx = np.asarray(idx)
        return Modalities(
            tabular=self.tabular[idx],
            embeddings={k: v[idx] for k, v in self.embeddings.items()},
        )

    def block(self, name: str) -> np.ndarray:
        if name == "tabular":
            return self.tabular
        return self.embeddings[name]

    @classmethod
    def from_dataset(cls, dataset, idx=None) -> "Modalities":
        mod = cls(tabular=dataset.X_tab, embeddings=dict(dataset.embeddings))
        return mod if idx is None else mod.subset(idx)


# ---------------------------------------------------------------------------
# unimodal members exposed behind the shared multimodal interface


class TabularMember:
    """A fitted tabular pipeline bound to the tabular block."""

    def __init__(self, pipeline: TabularPipeline):
        self.pipeline = pipeline

    def predict_proba(self, mod: Modalities) -> np.ndarray:
        return self.pipeline.predict_proba(mod.tabular)

    def to_dict(self) -> dict:
        return {"kind": "tabular_member", "pipeline": self.pipeline.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMember":
        return cls(TabularPipeline.from_dict(d["pipeline"]))


class EmbeddingMember:
    """A fitted classifier head bound to one named embedding block."""

    def __init__(self, name: str, model):
        self.name = name
        self.model = model

    def predict_proba(self, mod: Modalities) -> np.ndarray:
        return self.model.predict_proba(mod.embeddings[self.name])

    def to_dict(self) -> dict:
        return {"kind": "embedding_member", "name": self.name, "model": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingMember":
        return cls(d["name"], classifier_from_dict(d["model"]))


# ---------------------------------------------------------------------------
# representations for early / joint fusion


class TabularRepresentation:
    """Raw one-hot features, mean-imputed and scaled with train statistics."""

    def __init__(self, impute: str = "mean", scale: str = "standard"):
        self.impute = impute
        self.scale = scale

    def fit(self, mod: Modalities) -> "TabularRepresentation":
        self.imputer_ = Imputer(strategy=self.impute).fit(mod.tabular)
        self.scaler_ = Scaler(kind=self.scale).fit(self.imputer_.transform(mod.tabular))
        self.width_ = mod.tabular.shape[1]
        return self

    def transform(self, mod: Modalities) -> np.ndarray:
        return self.scaler_.transform(self.imputer_.transform(mod.tabular))

    def to_dict(self) -> dict:
        return {
            "kind": "tabular",
            "impute": self.impute,
            "scale": self.scale,
            "imputer": self.imputer_.to_dict(),
            "scaler": self.scaler_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularRepresentation":
        rep = cls(impute=d["impute"], scale=d["scale"])
        rep.imputer_ = Imputer.from_dict(d["imputer"])
        rep.scaler_ = Scaler.from_dict(d["scaler"])
        rep.width_ = rep.imputer_.n_features_in_
        return rep


class PipelineRepresentation:
    """The pre-classifier output of an already fitted tabular pipeline."""

    def __init__(self, pipeline: TabularPipeline):
        self.pipeline = pipeline
        self.width_ = pipeline.transform(np.zeros((1, pipeline.n_features_in_))).shape[1]

    def fit(self, mod: Modalities) -> "PipelineRepresentation":
        return self  # already fitted; kept frozen by contract

    def transform(self, mod: Modalities) -> np.ndarray:
        return self.pipeline.transform(mod.tabular)

    def to_dict(self) -> dict:
        return {"kind": "pipeline", "pipeline": self.pipeline.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineRepresentation":
        return cls(TabularPipeline.from_dict(d["pipeline"]))


class EmbeddingRepresentation:
    """A named embedding block, optionally rescaled with train statistics."""

    def __init__(self, name: str, scale: str = "none"):
        self.name = name
        self.scale = scale

    def fit(self, mod: Modalities) -> "EmbeddingRepresentation":
        self.scaler_ = Scaler(kind=self.scale).fit(mod.embeddings[self.name])
        self.width_ = mod.embeddings[self.name].shape[1]
        return self

    def transform(self, mod: Modalities) -> np.ndarray:
        return self.scaler_.transform(mod.embeddings[self.name])

    def to_dict(self) -> dict:
        return {
            "kind": "embedding",
            "name": self.name,
            "scale": self.scale,
            "scaler": self.scaler_.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingRepresentation":
        rep = cls(name=d["name"], scale=d["scale"])
        rep.scaler_ = Scaler.from_dict(d["scaler"])
        rep.width_ = rep.scaler_.n_features_in_
        return rep


def make_representation(spec: str):
    """Parse "tabular" or "embedding:<name>" into an unfitted representation."""
    if spec == "tabular":
        return TabularRepresentation()
    if spec.startswith("embedding:"):
        return EmbeddingRepresentation(spec.split(":", 1)[1])
    raise ValueError(f"unknown representation spec {spec!r}")


def representation_from_dict(d: dict):
    kind = d["kind"]
    if kind == "tabular":
        return TabularRepresentation.from_dict(d)
    if kind == "pipeline":
        return PipelineRepresentation.from_dict(d)
    if kind == "embedding":
        return EmbeddingRepresentation.from_dict(d)
    raise ValueError(f"unknown representation kind {kind!r}")


def default_representations(mod: Modalities) -> list[str]:
    return ["tabular"] + [f"embedding:{name}" for name in sorted(mod.embeddings)]


# ---------------------------------------------------------------------------
# late fusion


def predict_late(weights, member_probs) -> np.ndarray:
    """Weighted mixture of member probability matrices."""
    weights = check_simplex_weights(weights)
    if len(member_probs) != len(weights):
        raise ShapeMismatch(f"{len(member_probs)} members vs {len(weights)} weights")
    shape = member_probs[0].shape
    for P in member_probs[1:]:
        if P.shape != shape:
            raise ShapeMismatch("member probability matrices differ in shape")
    out = np.zeros(shape)
    for w, P in zip(weights, member_probs):
        out += w * P
    return out


def fit_late_fusion(member_valid_probs, y_valid, budget: int = 64, seed: int = 0) -> np.ndarray:
    """Simplex weights minimizing validation log-loss of the mixture."""
    return optimize_simplex_weights(member_valid_probs, y_valid, budget=budget, seed=seed)


class LateFusionModel:
    """Unimodal members combined by a fixed simplex weight vector."""

    def __init__(self, members: list, weights):
        self.members = members
        self.weights = check_simplex_weights(weights)
        if len(members) < 1 or len(members) != len(self.weights):
            raise ShapeMismatch("need one weight per member")

    def predict_proba(self, mod: Modalities) -> np.ndarray:
        return predict_late(self.weights, [m.predict_proba(mod) for m in self.members])

    def to_dict(self) -> dict:
        return {
            "kind": "late_fusion",
            "weights": self.weights.tolist(),
            "members": [m.to_dict() for m in self.members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LateFusionModel":
        members = [_member_from_dict(m) for m in d["members"]]
        return cls(members, np.asarray(d["weights"], dtype=np.float64))


def _member_from_dict(d: dict):
    if d["kind"] == "tabular_member":
        return TabularMember.from_dict(d)
    if d["kind"] == "embedding_member":
        return EmbeddingMember.from_dict(d)
    raise ValueError(f"unknown member kind {d['kind']!r}")


# ---------------------------------------------------------------------------
# early fusion


class EarlyFusionModel:
    """Frozen representation extractors feeding a trained dense head."""

    def __init__(self, representations: list, head: MlpParams):
        self.representations = representations
        self.head = head

    def extract(self, mod: Modalities) -> np.ndarray:
        return np.hstack([rep.transform(mod) for rep in self.representations])

    def predict_proba(self, mod: Modalities) -> np.ndarray:
        Z = self.extract(mod)
        if Z.shape[1] != self.head.n_inputs:
            raise ShapeMismatch(f"representation width {Z.shape[1]} != {self.head.n_inputs}")
        return mlp_forward(self.head, Z)[1]

    def to_dict(self) -> dict:
        return {
            "kind": "early_fusion",
            "representations": [rep.to_dict() for rep in self.representations],
            "head": self.head.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EarlyFusionModel":
        reps = [representation_from_dict(r) for r in d["representations"]]
        return cls(reps, MlpParams.from_dict(d["head"]))


def fit_early_fusion(
    mod_train: Modalities,
    y_train,
    representations=None,
    hidden=(32,),
    config: TrainConfig | None = None,
    activation: str = "relu",
    n_classes: int | None = None,
    head_init: MlpParams | None = None,
) -> EarlyFusionModel:
    """Fit extractors on train rows, then train the head on the concatenation."""
    config = config or TrainConfig()
    y_train = as_labels(y_train)
    specs = representations if representations is not None else default_representations(mod_train)
    fitted = [
        (make_representation(s).fit(mod_train) if isinstance(s, str) else s.fit(mod_train))
        for s in specs
    ]
    Z = np.hstack([rep.transform(mod_train) for rep in fitted])
    head = train_mlp(
        Z, y_train, hidden=hidden, config=config, activation=activation,
        n_classes=n_classes, init=head_init,
    )
    return EarlyFusionModel(fitted, head)


# ---------------------------------------------------------------------------
# joint fusion


class JointNetwork:
    """Per-modality branch stacks concatenated into a shared prediction head.

    Branch outputs go through the activation (they are representations);
    the head's final layer is linear, producing class logits.
    """

    def __init__(self, branches: list[MlpParams], head: MlpParams):
        self.branches = branches
        self.head = head
        widths = [b.n_outputs for b in branches]
        if sum(widths) != head.n_inputs:
            raise ShapeMismatch("head input width must equal total branch width")
        self.widths = widths

    @classmethod
    def initialize(
        cls,
        input_widths: list[int],
        branch_hidden: list[tuple],
        head_hidden: tuple,
        n_classes: int,
        activation: str = "relu",
        seed: int = 0,
    ) -> "JointNetwork":
        seeds = np.random.SeedSequence(seed).spawn(len(input_widths) + 1)
        branches = []
        for i, (width, hidden) in enumerate(zip(input_widths, branch_hidden)):
            sizes = [width, *hidden] if hidden else [width, width]
            branches.append(init_mlp(sizes, activation=activation, seed=seeds[i]))
        total = sum(b.n_outputs for b in branches)
        head = init_mlp([total, *head_hidden, n_classes], activation=activation, seed=seeds[-1])
        return cls(branches, head)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for branch in self.branches:
            for W, b in zip(branch.weights, branch.biases):
                out.extend([W, b])
        for W, b in zip(self.head.weights, self.head.biases):
            out.extend([W, b])
        return out

    def decay_flags(self) -> list[bool]:
        flags = []
        for branch in self.branches:
            flags.extend([True, False] * len(branch.weights))
        flags.extend([True, False] * len(self.head.weights))
        return flags

    def branch_param_slices(self) -> list[slice]:
        slices, start = [], 0
        for branch in self.branches:
            count = 2 * len(branch.weights)
            slices.append(slice(start, start + count))
            start += count
        return slices

    def forward(self, Xs):
        if len(Xs) != len(self.branches):
            raise ShapeMismatch(f"expected {len(self.branches)} inputs, got {len(Xs)}")
        outputs, caches = [], []
        for X, branch in zip(Xs, self.branches):
            h, cache = _stack_forward(branch, X, activate_last=True)
            outputs.append(h)
            caches.append(cache)
        Z = np.hstack(outputs)
        logits, head_cache = _stack_forward(self.head, Z, activate_last=False)
        return logits, (caches, head_cache)

    def backward(self, cache, dlogits):
        caches, head_cache = cache
        gw_h, gb_h, dZ = _stack_backward(self.head, head_cache, dlogits, activate_last=False)
        grads, input_grads = [], []
        start = 0
        for branch, branch_cache, width in zip(self.branches, caches, self.widths):
            gw, gb, dX = _stack_backward(
                branch, branch_cache, dZ[:, start : start + width], activate_last=True
            )
            for w, b in zip(gw, gb):
                grads.extend([w, b])
            input_grads.append(dX)
            start += width
        for w, b in zip(gw_h, gb_h):
            grads.extend([w, b])
        return grads, input_grads

    def to_dict(self) -> dict:
        return {
            "branches": [b.to_dict() for b in self.branches],
            "head": self.head.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointNetwork":
        return cls(
            [MlpParams.from_dict(b) for b in d["branches"]],
            MlpParams.from_dict(d["head"]),
        )


class JointFusionModel:
    """End-to-end trained branches and head over fixed preprocessors."""

    def __init__(self, representations: list, network: JointNetwork):
        self.representations = representations
        self.network = network
        self.first_batch_branch_grad_norms_: list[float] | None = None

    def inputs(self, mod: Modalities) -> tuple:
        return tuple(rep.transform(mod) for rep in self.representations)

    def predict_proba(self, mod: Modalities) -> np.ndarray:
        logits, _ = self.network.forward(self.inputs(mod))
        return softmax(logits)

    def to_dict(self) -> dict:
        return {
            "kind": "joint_fusion",
            "representations": [rep.to_dict() for rep in self.representations],
            "network": self.network.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "JointFusionModel":
        reps = [representation_from_dict(r) for r in d["representations"]]
        return cls(reps, JointNetwork.from_dict(d["network"]))


def fit_joint_fusion(
    mod_train: Modalities,
    y_train,
    representations=None,
    branch_hidden=None,
    head_hidden=(16,),
    config: TrainConfig | None = None,
    activation: str = "relu",
    n_classes: int | None = None,
    branch_lr_scale: float = 1.0,
    network: JointNetwork | None = None,
) -> JointFusionModel:
    """Train branches and head in one optimization loop.

    ``branch_lr_scale`` rescales branch updates (0 freezes the branches,
    which reduces joint fusion to early fusion on the frozen branch
    representations).
    """
    config = config or TrainConfig()
    y_train = as_labels(y_train)
    C = n_classes if n_classes is not None else int(np.max(y_train)) + 1
    specs = representations if representations is not None else default_representations(mod_train)
    fitted = [
        (make_representation(s).fit(mod_train) if isinstance(s, str) else s.fit(mod_train))
        for s in specs
    ]
    Xs = tuple(rep.transform(mod_train) for rep in fitted)
    widths = [X.shape[1] for X in Xs]
    if branch_hidden is None:
        branch_hidden = [(max(4, w // 2),) for w in widths]
    if network is None:
        network = JointNetwork.initialize(
            widths, [tuple(h) for h in branch_hidden], tuple(head_hidden), C,
            activation=activation, seed=config.seed,
        )
    scales = []
    for s in network.branch_param_slices():
        scales.extend([branch_lr_scale] * (s.stop - s.start))
    scales.extend([1.0] * (2 * len(network.head.weights)))

    history = train_network(network, Xs, y_train, config, lr_scales=scales)

    model = JointFusionModel(fitted, network)
    first = history["first_step_grads"]
    norms = []
    for s in network.branch_param_slices():
        norms.append(float(np.sqrt(sum(float((g * g).sum()) for g in first[s]))))
    model.first_batch_branch_grad_norms_ = norms
    return model


def joint_integrated_gradients(
    model: JointFusionModel,
    mod: Modalities,
    row: int,
    baselines: list[np.ndarray] | None = None,
    steps: int = 64,
    target: int | None = None,
) -> list[np.ndarray]:
    """Integrated gradients per modality block through the joint network.

    Baselines default to the zero vector in the preprocessed input space of
    each branch (for standardized tabular blocks that is the train mean).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    inputs = model.inputs(mod)
    xs = [X[row] for X in inputs]
    if baselines is None:
        baselines = [np.zeros_like(x) for x in xs]
    if target is None:
        logits, _ = model.network.forward(tuple(x.reshape(1, -1) for x in xs))
        target = int(softmax(logits)[0].argmax())
    alphas = (np.arange(steps, dtype=np.float64) + 0.5) / steps
    paths = tuple(
        base + alphas[:, None] * (x - base) for x, base in zip(xs, baselines)
    )
    logits, cache = model.network.forward(paths)
    d_logits = np.zeros((steps, logits.shape[1]))
    d_logits[:, target] = 1.0
    _, input_grads = model.network.backward(cache, d_logits)
    return [
        (x - base) * g.mean(axis=0)
        for x, base, g in zip(xs, baselines, input_grads)
    ]
