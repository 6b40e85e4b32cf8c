"""scikit-learn style wrapper around the parallel-LSTM churn network."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from ..clustering import ThreeStepClustering
from ..exceptions import ValidationError
from ..features import extract_feature_array
from ..validation import check_activity_array, check_is_fitted
from .network import NetworkConfig
from .training import TrainConfig, evaluate, train


class PLSTMChurnClassifier(BaseEstimator, ClassifierMixin):
    """Churn classifier over the first ``window`` days of (n, D, T) activity stacks.

    ``typing_weight=0`` gives the plain parallel model; a positive weight adds
    the cross-entropy between attention weights and soft typing targets. When
    ``fit`` receives no targets they come from a :class:`ThreeStepClustering`
    fit on the full-length features of the training users.
    """

    def __init__(self, window=14, n_types=None, hidden_size=64, embed_sizes=(32,), n_layers=1,
                 dropout=0.2, typing_weight=0.1, learning_rate=1e-3, batch_size=32, epochs=40,
                 seed=0):
        self.window = window
        self.n_types = n_types
        self.hidden_size = hidden_size
        self.embed_sizes = embed_sizes
        self.n_layers = n_layers
        self.dropout = dropout
        self.typing_weight = typing_weight
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    def fit(self, X, y, Q=None):
        X = check_activity_array(X, min_days=self.window)
        self.clusterer_ = None
        if Q is None and self.typing_weight > 0:
            F, _ = extract_feature_array(X)
            self.clusterer_ = ThreeStepClustering(seed=self.seed, n_types=self.n_types).fit(F)
            Q = self.clusterer_.soft_targets_
        if Q is not None:
            n_types = np.asarray(Q).shape[1]
        elif self.n_types is not None:
            n_types = self.n_types
        else:
            raise ValidationError("n_types must be set when training without typing targets")
        net = NetworkConfig(n_inputs=X.shape[1], n_types=n_types, hidden_size=self.hidden_size,
                            embed_sizes=tuple(self.embed_sizes), n_layers=self.n_layers,
                            dropout=self.dropout)
        cfg = TrainConfig(typing_weight=self.typing_weight, learning_rate=self.learning_rate,
                          batch_size=self.batch_size, epochs=self.epochs, window=self.window,
                          seed=self.seed)
        self.model_, self.loss_trace_ = train(X, y, Q, net, cfg)
        self.classes_ = np.array([0, 1])
        return self

    def _outputs(self, X):
        check_is_fitted(self, "model_")
        X = check_activity_array(X, n_dims=self.model_.config.n_inputs, min_days=self.window)
        return self.model_.predict_arrays(X, self.window)

    def predict_proba(self, X):
        p, _ = self._outputs(X)
        return np.column_stack([1 - p, p])

    def predict(self, X):
        return (self._outputs(X)[0] >= 0.5).astype(int)

    def attention_weights(self, X):
        return self._outputs(X)[1]

    def predict_types(self, X):
        return self.attention_weights(X).argmax(axis=1)

    def evaluate(self, X, y, types=None):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_activity_array(X), y, self.window, types)
