"""Lane-change prediction benchmark: data, rule-based and learned predictors, evaluation."""

__version__ = "0.1.0"
