"""JSON (de)serialization dispatch for every fitted model kind."""

from __future__ import annotations

from .fusion import (
    EarlyFusionModel,
    EmbeddingMember,
    JointFusionModel,
    LateFusionModel,
    TabularMember,
)
from .tabular import TabularPipeline, classifier_from_dict

_FUSION_KINDS = {
    "tabular_member": TabularMember,
    "embedding_member": EmbeddingMember,
    "late_fusion": LateFusionModel,
    "early_fusion": EarlyFusionModel,
    "joint_fusion": JointFusionModel,
}


def model_from_dict(d: dict):
    """Rebuild any serialized model from its ``kind``-tagged dict."""
    kind = d["kind"]
    if kind in _FUSION_KINDS:
        return _FUSION_KINDS[kind].from_dict(d)
    if kind == "tabular_pipeline":
        return TabularPipeline.from_dict(d)
    if kind in ("logistic", "random_forest", "gradient_boosting", "mlp"):
        return classifier_from_dict(d)
    if kind == "strategy_ensemble":
        from .search import StrategyEnsemble

        return StrategyEnsemble.from_dict(d)
    if kind == "multistrategy_ensemble":
        from .search import MultistrategyEnsemble

        return MultistrategyEnsemble.from_dict(d)
    raise ValueError(f"unknown model kind {kind!r}")
