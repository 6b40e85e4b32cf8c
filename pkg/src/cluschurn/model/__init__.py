"""Churn prediction with parallel LSTMs and typing attention."""

from .estimator import PLSTMChurnClassifier
from .network import (
    NetworkConfig,
    backward,
    embed_day,
    forward,
    init_params,
    loss,
    loss_and_grads,
    lstm_forward,
    prepare_inputs,
    typed_attention,
)
from .training import (
    Adam,
    ChurnModel,
    TrainConfig,
    churn_metrics,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
    type_metrics,
    write_metrics_csv,
)


def predict(model, series, d=None):
    """Churn probability and type weights for one :class:`ActivitySeries`."""
    yhat, w = model.predict_arrays(series.values[None], d)
    return float(yhat[0]), w[0]


__all__ = [
    "Adam", "ChurnModel", "NetworkConfig", "PLSTMChurnClassifier", "TrainConfig", "backward",
    "churn_metrics", "embed_day", "evaluate", "forward", "init_params", "load_checkpoint", "loss",
    "loss_and_grads", "lstm_forward", "predict", "prepare_inputs", "save_checkpoint", "train",
    "type_metrics", "typed_attention", "write_metrics_csv",
]
