"""Adam optimizer, mini-batch training, evaluation metrics and checkpoints."""

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.metrics import accuracy_score, precision_score, recall_score

from ..exceptions import ValidationError
from ..validation import as_rng, check_binary_labels, check_distributions
from .network import NetworkConfig, check_params, forward, init_params, loss_and_grads, prepare_inputs

CHECKPOINT_FORMAT = "cluschurn.plstm"
CHECKPOINT_VERSION = 1
METRIC_COLUMNS = ("d", "accuracy", "precision", "recall")


@dataclass(frozen=True)
class TrainConfig:
    typing_weight: float = 0.1
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 40
    window: int = 14
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999

    def __post_init__(self):
        if self.typing_weight < 0:
            raise ValidationError("typing_weight must be non-negative")
        if not 1 <= self.window <= 14:
            raise ValidationError(f"window must lie in [1, 14], got {self.window}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("learning_rate, batch_size and epochs must be positive")


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class ChurnModel:
    """A trained (or freshly initialized) network plus its configuration."""

    config: NetworkConfig
    params: dict
    train_config: TrainConfig = TrainConfig()
    epoch: int = 0

    def predict_arrays(self, X, window=None):
        """Churn probabilities (n,) and type weights (n, K) for an (n, D, T) stack."""
        window = self.train_config.window if window is None else window
        yhat, w, _ = forward(self.params, self.config, prepare_inputs(X, window))
        return yhat, w


def train(X, y, Q, network_config, train_config, checkpoint_every=None, checkpoint_path=None):
    """Fit a network on (n, D, T) counts; returns ``(model, loss_trace)``.

    ``loss_trace`` holds one ``(l, l_c, l_t)`` triple per epoch, summed over
    the mini-batches of that epoch (dropout active).
    """
    y = check_binary_labels(y, n=X.shape[0])
    lam = train_config.typing_weight
    if Q is not None:
        Q = check_distributions(Q, n=X.shape[0])
        if Q.shape[1] != network_config.n_types:
            raise ValidationError(
                f"typing targets have {Q.shape[1]} columns, network has {network_config.n_types} types")
    elif lam > 0:
        raise ValidationError("typing targets are required when typing_weight > 0")
    rng = as_rng(train_config.seed)
    params = init_params(network_config, rng)
    opt = Adam(params, train_config.learning_rate, train_config.beta1, train_config.beta2)
    A = prepare_inputs(X, train_config.window)
    n = A.shape[0]
    trace = []
    model = ChurnModel(network_config, params, train_config, 0)
    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        tot = np.zeros(3)
        for lo in range(0, n, train_config.batch_size):
            idx = order[lo:lo + train_config.batch_size]
            (l, lc, lt), grads = loss_and_grads(
                params, network_config, A[idx], y[idx], None if Q is None else Q[idx], lam,
                training=True, rng=rng)
            tot += (l, lc, lt)
            opt.step(params, grads)
        trace.append(tuple(float(v) for v in tot))
        model.epoch = epoch
        if checkpoint_every and checkpoint_path and epoch % checkpoint_every == 0:
            save_checkpoint(model, checkpoint_path)
    return model, trace


def churn_metrics(y_true, y_prob, threshold=0.5):
    y_true = np.asarray(y_true).astype(int)
    pred = (np.asarray(y_prob) >= threshold).astype(int)
    return {
        "accuracy": float(accuracy_score(y_true, pred)),
        "precision": float(precision_score(y_true, pred, zero_division=0)),
        "recall": float(recall_score(y_true, pred, zero_division=0)),
    }


def type_metrics(true_types, pred_types, n_types):
    """One-vs-rest precision / recall per type plus their macro averages."""
    labels = list(range(n_types))
    p = precision_score(true_types, pred_types, labels=labels, average=None, zero_division=0)
    r = recall_score(true_types, pred_types, labels=labels, average=None, zero_division=0)
    return {"precision": p, "recall": r,
            "macro_precision": float(p.mean()), "macro_recall": float(r.mean())}


def evaluate(model, X, y, window=None, types=None):
    """Churn metrics at ``window`` days; per-type metrics when ``types`` is given."""
    yhat, w = model.predict_arrays(X, window)
    out = churn_metrics(y, yhat)
    if types is not None:
        out["types"] = type_metrics(np.asarray(types), w.argmax(axis=1), model.config.n_types)
    return out


def write_metrics_csv(rows, path):
    """``rows`` are dicts with the keys of ``METRIC_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(METRIC_COLUMNS)
        for r in rows:
            wr.writerow([int(r["d"])] + [repr(float(r[k])) for k in METRIC_COLUMNS[1:]])


# --------------------------------------------------------------------------
# checkpoints

def model_to_dict(model):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "network": model.config.to_dict(),
        "training": asdict(model.train_config),
        "epoch": model.epoch,
        "seed": model.train_config.seed,
        "params": {k: {"shape": list(v.shape), "data": v.ravel().tolist()}
                   for k, v in model.params.items()},
    }


def model_from_dict(d):
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"not a {CHECKPOINT_FORMAT} checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(
            f"checkpoint version {d.get('version')!r} is not supported (expected {CHECKPOINT_VERSION})")
    config = NetworkConfig(**d["network"])
    params = {k: np.array(b["data"], dtype=np.float64).reshape(b["shape"])
              for k, b in d["params"].items()}
    check_params(params, config)
    return ChurnModel(config, params, TrainConfig(**d["training"]), int(d["epoch"]))


def save_checkpoint(model, path):
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)
        fh.write("\n")


def load_checkpoint(path):
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: unreadable checkpoint ({exc})") from None
    return model_from_dict(d)
