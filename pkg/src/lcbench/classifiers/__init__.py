"""Six binary classifiers behind one train/score/predict contract."""

from __future__ import annotations

import json

from .ann import AnnConfig, AnnModel, TrainingError, train_ann
from .base import ArityError, Classifier, DatasetError, FORMAT, FORMAT_VERSION, Standardizer
from .lda import LdaConfig, LdaModel, train_lda
from .logistic import LogisticConfig, LogisticModel, train_logistic
from .naive_bayes import NaiveBayesConfig, NaiveBayesModel, train_nb
from .svm import SvmConfig, SvmModel, train_svm
from .tree import TreeConfig, TreeModel, train_tree

BASE_KINDS = ("LR", "LDA", "NB", "DT", "SVM", "ANN")

TRAINERS = {
    "LR": (train_logistic, LogisticConfig),
    "LDA": (train_lda, LdaConfig),
    "NB": (train_nb, NaiveBayesConfig),
    "DT": (train_tree, TreeConfig),
    "SVM": (train_svm, SvmConfig),
    "ANN": (train_ann, AnnConfig),
}

MODEL_TYPES = {cls.kind: cls for cls in (LogisticModel, LdaModel, NaiveBayesModel, TreeModel, SvmModel, AnnModel)}


def default_config(kind: str):
    return TRAINERS[kind][1]()


def train_classifier(kind: str, X, y, config=None) -> Classifier:
    if kind not in TRAINERS:
        raise ValueError(f"unknown classifier {kind!r}; expected one of {', '.join(BASE_KINDS)}")
    trainer, cfg_type = TRAINERS[kind]
    return trainer(X, y, config if config is not None else cfg_type())


def model_from_dict(d: dict) -> Classifier:
    if d.get("format") != FORMAT:
        raise ValueError("not a serialized model")
    if d.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('version')}")
    cls = MODEL_TYPES[d["kind"]]
    scaler = Standardizer.from_dict(d["standardization"])
    return cls._from_params(d["params"], d["n_features"], scaler, d["threshold"])


def loads_model(text: str) -> Classifier:
    return model_from_dict(json.loads(text))


__all__ = [
    "AnnConfig", "AnnModel", "ArityError", "BASE_KINDS", "Classifier", "DatasetError", "LdaConfig", "LdaModel",
    "LogisticConfig", "LogisticModel", "NaiveBayesConfig", "NaiveBayesModel", "Standardizer", "SvmConfig",
    "SvmModel", "TrainingError", "TreeConfig", "TreeModel", "default_config", "loads_model", "model_from_dict",
    "train_ann", "train_classifier", "train_lda", "train_logistic", "train_nb", "train_svm", "train_tree",
]
