"""scikit-learn compatible wrappers so the analyses compose with pipelines and grid searches.

``X`` is always a sequence of prompt records (``PromptRecord`` objects, dicts
with the record fields, or a DataFrame with those columns). ``fit`` only binds
the model; nothing is learned.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from compmech.dataset import PromptRecord, assemble, classify_prediction
from compmech.errors import SchemaError
from compmech.experiments import (
    InterventionTemplate, PreparedPrompt, prompt_class_grid, prompt_head_contributions, scheme_for,
)
from compmech.runtime import Model, top1_from_logits

OUTCOMES = np.array(["counterfactual", "factual", "other"])


def check_records(X) -> list[PromptRecord]:
    """Coerce ``X`` into a list of PromptRecord, raising on anything else."""
    if hasattr(X, "to_dict") and hasattr(X, "columns"):
        X = X.to_dict(orient="records")
    if isinstance(X, (str, bytes, PromptRecord)) or not hasattr(X, "__iter__"):
        raise SchemaError("X must be a sequence of prompt records")
    out = []
    for i, item in enumerate(X):
        if isinstance(item, PromptRecord):
            out.append(item)
        elif isinstance(item, dict):
            item = {k: v for k, v in item.items() if not (isinstance(v, float) and np.isnan(v))}
            out.append(PromptRecord.from_dict({"id": str(i), **item}))
        else:
            raise SchemaError(f"X[{i}] is a {type(item).__name__}, expected a PromptRecord or dict")
    if not out:
        raise SchemaError("X is empty")
    return out


def check_interventions(interventions) -> tuple[InterventionTemplate, ...]:
    if interventions is None:
        return ()
    return tuple(iv if isinstance(iv, InterventionTemplate) else InterventionTemplate.parse(iv)
                 for iv in interventions)


class _PromptEstimator(BaseEstimator):
    def __init__(self, model_dir=None, model=None, template="redefine", premise=None):
        self.model_dir = model_dir
        self.model = model
        self.template = template
        self.premise = premise

    def fit(self, X=None, y=None):
        self.model_ = self.model if self.model is not None else Model.from_dir(self.model_dir)
        self.scheme_ = scheme_for(self.template)
        return self

    def _prepare(self, X) -> list[PreparedPrompt]:
        check_is_fitted(self, "model_")
        t = self.model_.tokenizer
        return [PreparedPrompt(r, assemble(r, t, self.template, self.premise)) for r in check_records(X)]


class CompetitionClassifier(_PromptEstimator):
    """Predicts whether the model completes each prompt factually, counterfactually or otherwise.

    ``interventions`` accepts ``InterventionTemplate`` objects or strings like
    ``"L10H7:5"`` (scale last -> attribute attention of layer 10 head 7 by 5).
    """

    def __init__(self, model_dir=None, model=None, template="redefine", premise=None, interventions=None):
        super().__init__(model_dir, model, template, premise)
        self.interventions = interventions

    def fit(self, X=None, y=None):
        super().fit(X, y)
        self.interventions_ = check_interventions(self.interventions)
        self.classes_ = OUTCOMES
        return self

    def predict_tokens(self, X) -> np.ndarray:
        prepared = self._prepare(X)
        out = np.empty(len(prepared), np.int64)
        for i, pp in enumerate(prepared):
            specs = [iv.resolve(pp.prompt.positions) for iv in self.interventions_]
            trace = self.model_.forward(pp.prompt.tokens, interventions=specs, all_logits=False)
            out[i] = top1_from_logits(trace.final_logits())
        return out

    def predict(self, X) -> np.ndarray:
        prepared = self._prepare(X)
        preds = self.predict_tokens([pp.record for pp in prepared])
        return np.array([classify_prediction(int(p), pp.prompt.targets) for p, pp in zip(preds, prepared)])

    def score(self, X, y=None) -> float:
        """Fraction factual among binary outcomes (the quantity ablations try to raise)."""
        labels = self.predict(X)
        binary = np.isin(labels, ["factual", "counterfactual"])
        return float(np.mean(labels[binary] == "factual")) if binary.any() else float("nan")


class LogitLensTransformer(_PromptEstimator, TransformerMixin):
    """Per-prompt logit-lens features: ``[n_prompts, layers, position_classes, 2]`` (fact, cofa).

    With ``flatten=True`` the output is 2-D and ``get_feature_names_out`` names each column.
    Classes absent from a prompt are NaN.
    """

    def __init__(self, model_dir=None, model=None, template="redefine", premise=None, flatten=False):
        super().__init__(model_dir, model, template, premise)
        self.flatten = flatten

    def transform(self, X) -> np.ndarray:
        prepared = self._prepare(X)
        grids = [prompt_class_grid(self.model_, pp, self.scheme_) for pp in prepared]
        out = np.stack([np.stack([g.fact_logits, g.cofa_logits], axis=-1) for g in grids])
        return out.reshape(len(out), -1) if self.flatten else out

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        check_is_fitted(self, "model_")
        L = self.model_.config.n_layers
        return np.array([f"L{l}_{c}_{t}" for l in range(L) for c in self.scheme_ for t in ("fact", "cofa")])


class HeadAttributionTransformer(_PromptEstimator, TransformerMixin):
    """Per-prompt head contributions at the last position.

    ``output="delta"`` gives ``[n, layers, heads]`` delta-cofa; ``"pair"`` gives
    ``[n, layers, heads, 2]`` (fact, cofa); ``"attention"`` gives the
    last -> attribute attention weights.
    """

    def __init__(self, model_dir=None, model=None, template="redefine", premise=None, output="delta"):
        super().__init__(model_dir, model, template, premise)
        self.output = output

    def transform(self, X) -> np.ndarray:
        if self.output not in ("delta", "pair", "attention"):
            raise ValueError(f"output must be 'delta', 'pair' or 'attention', got {self.output!r}")
        rows = [prompt_head_contributions(self.model_, pp.prompt) for pp in self._prepare(X)]
        if self.output == "delta":
            return np.stack([c - f for f, c, _ in rows])
        if self.output == "pair":
            return np.stack([np.stack([f, c], axis=-1) for f, c, _ in rows])
        return np.stack([a for _, _, a in rows])


def summarize_predictions(labels: Sequence[str]) -> dict[str, int]:
    values, counts = np.unique(np.asarray(labels), return_counts=True)
    return {str(v): int(c) for v, c in zip(values, counts)}
