# pipelines.py
"""Desk-scale text classification pipelines trained from scratch.

A pipeline is fully described by four method variables::

    lowercasing  yes | no
    ngram_order  1 | 2              (2 means unigrams and bigrams)
    weighting    binary | tf | tfidf
    learner      naive_bayes | logistic_regression

Vocabulary, idf statistics and learner parameters are fitted on the training
documents only. Both learners are deterministic.
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np
from sklearn.feature_extraction.text import CountVectorizer, TfidfTransformer

from exceptions import UnknownMethodValueError

TOKEN_PATTERN = r"(?u)\b\w+\b"
EPOCHS = 200
LEARNING_RATE = 0.1

TEXT_PIPELINE_DOMAINS: Dict[str, Tuple[str, ...]] = {
    "lowercasing": ("yes", "no"),
    "ngram_order": ("1", "2"),
    "weighting": ("binary", "tf", "tfidf"),
    "learner": ("naive_bayes", "logistic_regression"),
}


def check_pipeline_config(config: Dict[str, str]) -> None:
    unknown = sorted(set(config) - set(TEXT_PIPELINE_DOMAINS))
    if unknown:
        raise UnknownMethodValueError(f"text pipeline has no variables {unknown}")
    for name, domain in TEXT_PIPELINE_DOMAINS.items():
        if name not in config:
            raise UnknownMethodValueError(f"text pipeline needs a value for {name!r}")
        if config[name] not in domain:
            raise UnknownMethodValueError(f"{config[name]!r} is not a {name} method (choose from {list(domain)})")


# ========== FEATURES ==========
def build_features(
    config: Dict[str, str],
    train_docs: Sequence[str],
    test_docs: Sequence[str],
) -> Tuple[np.ndarray, np.ndarray]:
    vectorizer = CountVectorizer(
        lowercase=config["lowercasing"] == "yes",
        token_pattern=TOKEN_PATTERN,
        ngram_range=(1, int(config["ngram_order"])),
        binary=config["weighting"] == "binary",
    )
    try:
        x_train = vectorizer.fit_transform(train_docs)
    except ValueError:
        # no token anywhere in the training split: only the prior / bias is left
        return np.zeros((len(train_docs), 0)), np.zeros((len(test_docs), 0))
    x_test = vectorizer.transform(test_docs)
    if config["weighting"] == "tfidf":
        tfidf = TfidfTransformer().fit(x_train)
        x_train, x_test = tfidf.transform(x_train), tfidf.transform(x_test)
    return x_train.toarray().astype(float), x_test.toarray().astype(float)


# ========== LEARNERS ==========
class NaiveBayes:
    """Multinomial naive Bayes with add-one smoothing"""

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> "NaiveBayes":
        n_features = x.shape[1]
        counts = np.zeros((n_classes, n_features))
        class_counts = np.bincount(y, minlength=n_classes).astype(float)
        for c in range(n_classes):
            counts[c] = x[y == c].sum(axis=0)
        with np.errstate(divide="ignore"):
            self.log_prior = np.log(class_counts / class_counts.sum())
        totals = counts.sum(axis=1, keepdims=True) + n_features
        self.log_likelihood = np.log((counts + 1.0) / totals)
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return x @ self.log_likelihood.T + self.log_prior


class LogisticRegression:
    """Softmax regression fitted by full-batch gradient descent from zero weights"""

    def __init__(self, epochs: int = EPOCHS, learning_rate: float = LEARNING_RATE):
        self.epochs = epochs
        self.learning_rate = learning_rate

    def fit(self, x: np.ndarray, y: np.ndarray, n_classes: int) -> "LogisticRegression":
        n, n_features = x.shape
        self.weights = np.zeros((n_features, n_classes))
        self.bias = np.zeros(n_classes)
        targets = np.eye(n_classes)[y]
        for _ in range(self.epochs):
            logits = x @ self.weights + self.bias
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            probs /= probs.sum(axis=1, keepdims=True)
            grad = probs - targets
            self.weights -= self.learning_rate * (x.T @ grad) / n
            self.bias -= self.learning_rate * grad.mean(axis=0)
        return self

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights + self.bias


def run_text_pipeline(
    config: Dict[str, str],
    train_docs: Sequence[str],
    train_labels: Sequence[int],
    test_docs: Sequence[str],
    seed: int = 0,
    n_classes: int = 2,
    epochs: int = EPOCHS,
    learning_rate: float = LEARNING_RATE,
) -> List[int]:
    """Train one configured pipeline and predict class indices for the test documents.

    Ties in the decision scores go to the lowest class index. ``seed`` is part of
    the executor contract; both shipped learners are deterministic and ignore it.
    """
    check_pipeline_config(config)
    x_train, x_test = build_features(config, train_docs, test_docs)
    y_train = np.asarray(train_labels, dtype=int)
    if config["learner"] == "naive_bayes":
        model = NaiveBayes().fit(x_train, y_train, n_classes)
    else:
        model = LogisticRegression(epochs=epochs, learning_rate=learning_rate).fit(x_train, y_train, n_classes)
    return [int(c) for c in np.argmax(model.decision_function(x_test), axis=1)]
