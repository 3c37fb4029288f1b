"""
Conditional Generation Metrics

Scores a trained generator against the exact Bayes classifier of the
synthetic mixture.

- generated label accuracy: how often the oracle agrees with the label the
  generator was conditioned on
- label recovery accuracy: how often a latent search over the generator
  picks the true class of a real record
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.special import logsumexp

from data import Dataset, MixtureSpec, generate_mixture
from errors import DomainError, InvalidSpecError, ShapeMismatchError
from gan import Generator

logger = logging.getLogger(__name__)

ORACLE_THRESHOLD = 0.999


class BayesOracle:
    """argmax_y P(y | x) under a known Gaussian mixture."""

    def __init__(self, spec: MixtureSpec):
        self.spec = spec

    def log_posterior(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.spec.dim:
            raise ShapeMismatchError(f"oracle reads {self.spec.dim}-d points, got {X.shape[1]}")
        sq = ((X[:, None, :] - self.spec.means[None, :, :]) ** 2).sum(axis=2)
        sigma = self.spec.sigma
        with np.errstate(divide='ignore'):
            log_prior = np.log(self.spec.priors)
        joint = log_prior - self.spec.dim * np.log(sigma) - sq / (2 * sigma ** 2)
        return joint - logsumexp(joint, axis=1, keepdims=True)

    def posterior(self, X: np.ndarray) -> np.ndarray:
        return np.exp(self.log_posterior(X))

    def classify(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.log_posterior(X), axis=1)

    def self_test(self, n: int, rng: np.random.Generator,
                  threshold: float = ORACLE_THRESHOLD) -> float:
        """Oracle accuracy on n fresh draws; a mixture below threshold is rejected."""
        sample = generate_mixture(self.spec, n, rng)
        accuracy = float(np.mean(self.classify(sample.x) == sample.labels))
        if accuracy < threshold:
            raise InvalidSpecError(
                f"mixture too overlapped for evaluation: oracle accuracy {accuracy:.4f} "
                f"< {threshold}")
        return accuracy


@dataclass(frozen=True)
class RecoveryOptions:
    restarts: int = 5
    steps: int = 200
    step_size: float = 0.05
    z_bound: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.steps < 1 or self.step_size <= 0:
            raise DomainError("recovery restarts, steps and step_size must be positive")
        if self.z_bound is not None and self.z_bound <= 0:
            raise DomainError("z_bound must be positive when given")

    def to_dict(self) -> Dict:
        return asdict(self)


def generated_label_accuracy(G: Generator, oracle: BayesOracle, n: int, priors,
                             rng: np.random.Generator) -> float:
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if G.dim != oracle.spec.dim:
        raise ShapeMismatchError(f"generator emits {G.dim}-d points, oracle reads {oracle.spec.dim}")
    X, ys, _ = G.sample(n, priors, rng)
    return float(np.mean(oracle.classify(X) == ys))


def _reconstruction_losses(G: Generator, X: np.ndarray, opts: RecoveryOptions) -> np.ndarray:
    """Best reconstruction loss per (candidate class, record), shape (m, n)."""
    n = X.shape[0]
    rng = np.random.default_rng(opts.seed)
    targets = np.repeat(X, opts.restarts, axis=0)
    # one set of starting points shared by every candidate class
    Z0 = rng.standard_normal((n * opts.restarts, G.latent_dim))
    if opts.z_bound is not None:
        Z0 = np.clip(Z0, -opts.z_bound, opts.z_bound)
    best = np.empty((G.m, n))
    for y in range(G.m):
        ys = np.full(Z0.shape[0], y)
        Z = Z0.copy()
        for _ in range(opts.steps):
            out, cache = G.forward(Z, ys)
            _, dZ = G.backward(cache, 2.0 * (out - targets))
            Z -= opts.step_size * dZ
            if opts.z_bound is not None:
                np.clip(Z, -opts.z_bound, opts.z_bound, out=Z)
        final = ((G.generate(Z, ys) - targets) ** 2).sum(axis=1)
        if not np.all(np.isfinite(final)):
            raise DomainError(f"non-finite reconstruction loss for class {y}")
        best[y] = final.reshape(n, opts.restarts).min(axis=1)
    return best


def recover_labels(G: Generator, X: np.ndarray, opts: RecoveryOptions = RecoveryOptions()) -> np.ndarray:
    """Class whose latent search reconstructs each row best; ties go to the lowest index."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if X.shape[1] != G.dim:
        raise ShapeMismatchError(f"records are {X.shape[1]}-d, generator emits {G.dim}-d")
    if X.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmin(_reconstruction_losses(G, X, opts), axis=0).astype(np.int64)


def recover_label(G: Generator, x, opts: RecoveryOptions = RecoveryOptions()) -> int:
    return int(recover_labels(G, np.asarray(x, dtype=np.float64).reshape(1, -1), opts)[0])


def label_recovery_accuracy(G: Generator, ds: Dataset, opts: RecoveryOptions = RecoveryOptions(),
                            n_records: Optional[int] = None) -> float:
    """Fraction of the first n_records records (all by default) whose true class is recovered."""
    if len(ds) == 0:
        raise DomainError("label recovery needs a non-empty dataset")
    truth = ds.ground_truth()
    stop = len(ds) if n_records is None else min(n_records, len(ds))
    recovered = recover_labels(G, ds.x[:stop], opts)
    return float(np.mean(recovered == truth[:stop]))


def evaluate_generator(G: Generator, ds: Dataset, oracle: BayesOracle, n: int, priors,
                       opts: RecoveryOptions = RecoveryOptions(), seed: int = 0,
                       n_recovery: Optional[int] = None) -> Dict:
    """Both metrics plus the settings that produced them."""
    gen_acc = generated_label_accuracy(G, oracle, n, priors, np.random.default_rng(seed))
    rec_acc = label_recovery_accuracy(G, ds, opts, n_recovery)
    logger.info("gen_label_acc=%.4f label_recovery_acc=%.4f", gen_acc, rec_acc)
    return {
        'gen_label_acc': gen_acc,
        'label_recovery_acc': rec_acc,
        'n': n,
        'n_recovery': min(n_recovery, len(ds)) if n_recovery is not None else len(ds),
        'seed': seed,
        'opts': opts.to_dict(),
    }


def result_records(summary: Dict) -> List[Dict]:
    """One {metric, value, n, seed, opts} object per metric."""
    return [
        {'metric': 'gen_label_acc', 'value': summary['gen_label_acc'], 'n': summary['n'],
         'seed': summary['seed'], 'opts': summary['opts']},
        {'metric': 'label_recovery_acc', 'value': summary['label_recovery_acc'],
         'n': summary['n_recovery'], 'seed': summary['seed'], 'opts': summary['opts']},
    ]
