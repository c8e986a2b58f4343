"""A fitted subset model bundled with everything needed to score new data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import DataError, MultiViewDataset, StandardizationParams, View
from .predict import classification_accuracy, deviance_explained, predict_outcome, predict_scores


@dataclass
class Predictions:
    scores: list          # [s] n_s x K
    outcome: list         # [s] labels or expected counts
    component_mean: list  # [s] Poisson-component means (count families), else None
    ridged: list


@dataclass
class FittedModel:
    """Subset-refit loadings and coefficients on the selected columns.

    ``standardization`` holds the training parameters for the full variable
    set; ``columns[d]`` are the union-selected indices that ``B[d][s]`` rows
    refer to.
    """

    family: str
    views: list
    subgroups: list
    standardization: StandardizationParams
    columns: list
    B: list
    Theta: np.ndarray
    beta0: np.ndarray
    tau: Optional[float] = None
    n_classes: Optional[int] = None

    @classmethod
    def from_fit(cls, data: MultiViewDataset, std: StandardizationParams, selection, params) -> "FittedModel":
        return cls(data.outcome.family, list(data.views), [g.name for g in data.subgroups], std,
                   [np.asarray(u, dtype=int) for u in selection.union], params.all_B(),
                   params.Theta.copy(), params.beta0.copy(), params.tau, data.outcome.n_classes)

    def check_compatible(self, data: MultiViewDataset) -> None:
        """Raise DataError unless ``data`` has the training views and subgroups."""
        if [v.name for v in data.views] != [v.name for v in self.views]:
            raise DataError(f"view names {[v.name for v in data.views]} differ from the model's "
                            f"{[v.name for v in self.views]}")
        for v_data, v_model in zip(data.views, self.views):
            if tuple(v_data.variables) != tuple(v_model.variables):
                raise DataError(f"variables of view {v_model.name!r} differ from the training columns "
                                "used for standardization")
        if [g.name for g in data.subgroups] != list(self.subgroups):
            raise DataError(f"subgroups {[g.name for g in data.subgroups]} differ from the model's {self.subgroups}")

    def predict(self, data: MultiViewDataset) -> Predictions:
        self.check_compatible(data)
        X = self.standardization.apply(data).X
        X = [[x[:, cols] for x in row] for row, cols in zip(X, self.columns)]
        Z, ridged = predict_scores(X, self.B)
        out, comp = [], []
        for s, z in enumerate(Z):
            if self.family == "multiclass":
                out.append(predict_outcome(z, self.Theta, self.beta0, "multiclass"))
                comp.append(None)
                continue
            t = data.outcome.offsets[s] if data.outcome is not None else None
            comp.append(predict_outcome(z, self.Theta, self.beta0, "poisson", t=t))
            out.append(predict_outcome(z, self.Theta, self.beta0, self.family, tau=self.tau, t=t))
        return Predictions(Z, out, comp, ridged)

    def metric(self, data: MultiViewDataset, pred: Optional[Predictions] = None) -> dict:
        """Accuracy (multiclass) or pooled deviance explained (count families)."""
        if data.outcome is None:
            raise DataError("data has no outcome")
        if data.outcome.family != self.family:
            raise DataError(f"outcome family {data.outcome.family!r} does not match model family {self.family!r}")
        pred = pred or self.predict(data)
        out = data.outcome
        if self.family == "multiclass":
            truth = np.concatenate([out.labels(s) for s in range(data.S)])
            return {"name": "accuracy", "value": classification_accuracy(truth, np.concatenate(pred.outcome))}
        y = np.concatenate(out.values)
        t = np.concatenate(out.offsets)
        res = {"name": "deviance_explained",
               "value": deviance_explained(y, np.concatenate(pred.component_mean), self.family, tau=self.tau, t=t)}
        if self.family == "zip":
            # zeros are fit exactly by the mixture, positive counts at lambda = y
            res["saturated"] = "mixture-exact"
        return res

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n_classes": self.n_classes,
            "views": [{"name": v.name, "variables": list(v.variables)} for v in self.views],
            "subgroups": list(self.subgroups),
            "standardization": self.standardization.to_dict(),
            "columns": [c.tolist() for c in self.columns],
            "B": [[b.tolist() for b in row] for row in self.B],
            "Theta": self.Theta.tolist(),
            "beta0": self.beta0.tolist(),
            "tau": self.tau,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FittedModel":
        return cls(
            family=obj["family"],
            views=[View(v["name"], tuple(v["variables"])) for v in obj["views"]],
            subgroups=list(obj["subgroups"]),
            standardization=StandardizationParams.from_dict(obj["standardization"]),
            columns=[np.asarray(c, dtype=int) for c in obj["columns"]],
            B=[[np.asarray(b, float).reshape(len(c), -1) for b in row] for row, c in zip(obj["B"], obj["columns"])],
            Theta=np.asarray(obj["Theta"], float),
            beta0=np.asarray(obj["beta0"], float),
            tau=obj.get("tau"),
            n_classes=obj.get("n_classes"),
        )
