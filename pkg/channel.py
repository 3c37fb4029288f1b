"""
Uncertainty Channels

Construction, validation, inversion and sampling of the erasure-style
confusion matrices that corrupt class labels into uncertain labels.

Key Features:
- Missing, complementary and group (membership) label channels
- Confusion matrix assembly from the per-label alpha vectors
- Closed-form inverse (no general matrix inversion)
- kappa / kappa-prime multiplicative factors for the divergence bounds
- Seeded label corruption, single and vectorized
- JSON-ready dict forms consumed by the CLI

Labels are 0-based: classes occupy 0..m-1, uncertain labels m..m+m_tilde-1.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from errors import (
    DomainError,
    InvalidPartitionError,
    InvalidProbabilityError,
    InvalidSpecError,
    SingularChannelError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

# A class whose total uncertain mass exceeds 1 - FULL_RANK_TOL is singular.
FULL_RANK_TOL = 1e-9
ROW_SUM_TOL = 1e-12

CHANNEL_KINDS = ('identity', 'missing', 'complementary', 'group', 'labeled_fraction')


@dataclass(eq=False)
class ChannelSpec:
    """The alpha vectors of an uncertainty model.

    alphas[k, i] = P(observed = m + k | true = i); columns m.. are always zero.
    """
    m: int
    m_tilde: int
    alphas: np.ndarray  # shape (m_tilde, m + m_tilde)

    def __post_init__(self):
        self.alphas = np.asarray(self.alphas, dtype=np.float64)
        if self.m < 1:
            raise InvalidSpecError(f"m must be >= 1, got {self.m}")
        if self.m_tilde < 0:
            raise InvalidSpecError(f"m_tilde must be >= 0, got {self.m_tilde}")
        if self.m_tilde == 0:
            self.alphas = self.alphas.reshape(0, self.m)
        expected = (self.m_tilde, self.m + self.m_tilde)
        if self.alphas.shape != expected:
            raise InvalidSpecError(f"alphas must have shape {expected}, got {self.alphas.shape}")
        if not np.all(np.isfinite(self.alphas)):
            raise InvalidSpecError("alphas contain non-finite entries")
        if np.any(self.alphas < 0) or np.any(self.alphas > 1):
            raise InvalidProbabilityError("alpha entries must lie in [0, 1]")
        if np.any(self.alphas[:, self.m:] != 0):
            raise InvalidSpecError("a true label cannot be an uncertain label: "
                                   "alpha entries on uncertain columns must be 0")
        over = self.class_mass() > 1 + ROW_SUM_TOL
        if np.any(over):
            raise InvalidSpecError(
                f"classes {np.flatnonzero(over).tolist()} send more than probability 1 "
                "to uncertain labels")

    @property
    def n_labels(self) -> int:
        return self.m + self.m_tilde

    def class_mass(self) -> np.ndarray:
        """sum_u alpha_ui for each class i."""
        return self.alphas[:, :self.m].sum(axis=0)


@dataclass(eq=False)
class ConfusionMatrix:
    """Row-stochastic C with C[j, u] = P(observed = u | true = j)."""
    m: int
    m_tilde: int
    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        n = self.m + self.m_tilde
        if self.entries.shape != (n, n):
            raise InvalidSpecError(f"confusion matrix must be {n}x{n}, got {self.entries.shape}")
        if np.any(self.entries < 0) or np.any(self.entries > 1):
            raise InvalidProbabilityError("confusion entries must lie in [0, 1]")
        if np.max(np.abs(self.entries.sum(axis=1) - 1.0)) > ROW_SUM_TOL:
            raise InvalidSpecError("confusion matrix rows must sum to 1")
        class_block = self.entries[:self.m, :self.m]
        if np.any(class_block - np.diag(np.diag(class_block)) != 0):
            raise InvalidSpecError("classes may only move to uncertain labels")
        if not np.array_equal(self.entries[self.m:], np.eye(n)[self.m:]):
            raise InvalidSpecError("uncertain-label rows must pass through unchanged")

    @property
    def n_labels(self) -> int:
        return self.m + self.m_tilde

    def alphas(self) -> np.ndarray:
        """Recover the alpha vectors (m_tilde x n) from the uncertain columns."""
        out = np.zeros((self.m_tilde, self.n_labels))
        out[:, :self.m] = self.entries[:self.m, self.m:].T
        return out

    def class_mass(self) -> np.ndarray:
        return self.entries[:self.m, self.m:].sum(axis=1)

    def is_full_rank(self) -> bool:
        return bool(np.all(self.class_mass() <= 1 - FULL_RANK_TOL))


@dataclass(frozen=True)
class KappaFactors:
    kappa: float
    kappa_prime: float


# ============================================================================
# Constructors
# ============================================================================


def _check_probability(value: float, name: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0):
        raise InvalidProbabilityError(f"{name} must lie in [0, 1], got {value}")
    return value


def make_missing_channel(alpha_per_class: Sequence[float]) -> ChannelSpec:
    """Single missing label m, erased with probability alpha^(y) per class y.

    Args:
        alpha_per_class: erasure probability of each class (length m >= 1)

    Returns:
        ChannelSpec with m_tilde = 1
    """
    probs = [_check_probability(a, f"alpha[{i}]") for i, a in enumerate(alpha_per_class)]
    m = len(probs)
    if m < 1:
        raise InvalidSpecError("missing channel needs at least one class")
    return ChannelSpec(m=m, m_tilde=1, alphas=np.array([probs + [0.0]]))


def uniform_missing_channel(m: int, alpha: float) -> ChannelSpec:
    return make_missing_channel([alpha] * m)


def labeled_fraction_channel(m: int, fraction: float) -> ChannelSpec:
    """Each sample keeps its label with probability `fraction`."""
    fraction = _check_probability(fraction, "fraction")
    return uniform_missing_channel(m, 1.0 - fraction)


def make_complementary_channel(m: int, alpha: float) -> ChannelSpec:
    """One uncertain label u_y = m + y per class meaning "not class y".

    With probability alpha a sample of class j gets u_y for a y != j chosen
    uniformly, so alpha_{u_y, j} = alpha / (m - 1) for j != y.
    """
    if m < 2:
        raise DomainError(f"complementary labels need m >= 2, got {m}")
    alpha = _check_probability(alpha, "alpha")
    alphas = np.zeros((m, 2 * m))
    alphas[:, :m] = alpha / (m - 1) * (1.0 - np.eye(m))
    return ChannelSpec(m=m, m_tilde=m, alphas=alphas)


def make_group_channel(partition: Sequence[Sequence[int]], alpha: float) -> ChannelSpec:
    """One uncertain label per group: alpha_{u_g, i} = alpha if i is in group g.

    Args:
        partition: disjoint class subsets covering 0..m-1
        alpha: probability that a sample's label is replaced by its group label
    """
    alpha = _check_probability(alpha, "alpha")
    groups = [sorted(int(i) for i in group) for group in partition]
    if not groups or any(len(g) == 0 for g in groups):
        raise InvalidPartitionError("partition needs at least one non-empty group")
    members = [i for g in groups for i in g]
    m = len(members)
    if len(set(members)) != m:
        raise InvalidPartitionError("groups overlap")
    if set(members) != set(range(m)):
        raise InvalidPartitionError(f"groups must cover classes 0..{m - 1} exactly")
    alphas = np.zeros((len(groups), m + len(groups)))
    for k, group in enumerate(groups):
        alphas[k, group] = alpha
    return ChannelSpec(m=m, m_tilde=len(groups), alphas=alphas)


def identity_channel(m: int) -> ChannelSpec:
    return ChannelSpec(m=m, m_tilde=0, alphas=np.zeros((0, m)))


def random_channel(rng: np.random.Generator, m: int, m_tilde: int,
                   max_mass: float = 0.9) -> ChannelSpec:
    """Random full-rank channel: uniform alphas rescaled so each class mass <= max_mass."""
    raw = rng.random((m_tilde, m))
    target = rng.uniform(0.0, max_mass, size=m)
    totals = raw.sum(axis=0)
    scale = np.divide(target, totals, out=np.zeros(m), where=totals > 0)
    alphas = np.zeros((m_tilde, m + m_tilde))
    alphas[:, :m] = raw * scale
    return ChannelSpec(m=m, m_tilde=m_tilde, alphas=alphas)


# ============================================================================
# Matrix algebra
# ============================================================================


def build_confusion(spec: ChannelSpec) -> ConfusionMatrix:
    """C = diag(1 - sum_u alpha_u) + sum_u alpha_u e_u^T."""
    if not isinstance(spec, ChannelSpec):
        raise InvalidSpecError(f"expected ChannelSpec, got {type(spec).__name__}")
    n = spec.n_labels
    mass = spec.alphas.sum(axis=0)  # zero on uncertain columns
    entries = np.diag(1.0 - mass)
    entries[:, spec.m:] += spec.alphas.T
    return ConfusionMatrix(m=spec.m, m_tilde=spec.m_tilde, entries=entries)


def _require_full_rank(C: ConfusionMatrix) -> np.ndarray:
    mass = C.class_mass()
    singular = np.flatnonzero(mass > 1 - FULL_RANK_TOL)
    if singular.size:
        raise SingularChannelError(
            f"channel is not full-rank: classes {singular.tolist()} have "
            f"uncertain mass {mass[singular].round(12).tolist()}")
    return mass


def invert_confusion(C: ConfusionMatrix) -> np.ndarray:
    """Closed form C^-1 = diag(1 - sum_u alpha_u)^-1 (I - sum_u alpha_u e_u^T)."""
    _require_full_rank(C)
    n = C.n_labels
    alphas = C.alphas()
    mass = alphas.sum(axis=0)
    correction = np.eye(n)
    correction[:, C.m:] -= alphas.T
    return (1.0 / (1.0 - mass))[:, None] * correction


def kappa_factors(C: ConfusionMatrix) -> KappaFactors:
    """kappa = max_i 1/(1 - s_i), kappa' = max_i (1 + s_i)/(1 - s_i) over classes i.

    Raises:
        SingularChannelError: a class has s_i >= 1 (infinite kappa)
    """
    mass = _require_full_rank(C)
    if mass.size == 0:
        return KappaFactors(1.0, 1.0)
    kappa = float(np.max(1.0 / (1.0 - mass)))
    kappa_prime = float(np.max((1.0 + mass) / (1.0 - mass)))
    return KappaFactors(kappa=kappa, kappa_prime=kappa_prime)


def corollary_kappa_factors(kind: str, m: int, alpha) -> KappaFactors:
    """Closed-form factors of the missing-label and complementary-label corollaries.

    Args:
        kind: 'missing' (alpha is a scalar or per-class vector) or 'complementary'
        m: class count
        alpha: erasure / complement probability
    """
    if kind == 'missing':
        alpha_bar = float(np.max(np.atleast_1d(np.asarray(alpha, dtype=float))))
        _check_probability(alpha_bar, "alpha")
        if alpha_bar > 1 - FULL_RANK_TOL:
            raise SingularChannelError("max alpha = 1: kappa is infinite")
        return KappaFactors(1.0 / (1.0 - alpha_bar), (1.0 + alpha_bar) / (1.0 - alpha_bar))
    if kind == 'complementary':
        alpha = _check_probability(alpha, "alpha")
        if m < 2:
            raise DomainError(f"complementary labels need m >= 2, got {m}")
        if alpha > 1 - FULL_RANK_TOL:
            raise SingularChannelError("alpha = 1: kappa-prime is infinite")
        kappa = (m - 1) / (alpha + (1.0 - alpha) * (m - 1))
        return KappaFactors(kappa, (1.0 + alpha) / (1.0 - alpha))
    raise DomainError(f"no corollary for channel kind {kind!r}")


# ============================================================================
# Sampling
# ============================================================================


def _row_cdf(C: ConfusionMatrix, ys: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(C.entries[ys], axis=1)
    return cdf / cdf[:, -1:]


def corrupt_labels(C: ConfusionMatrix, ys, rng: np.random.Generator) -> np.ndarray:
    """Draw an observed label from row y of C for every y in ys (inverse CDF)."""
    ys = np.asarray(ys, dtype=np.int64).reshape(-1)
    if ys.size and (ys.min() < 0 or ys.max() >= C.m):
        raise DomainError(f"true labels must lie in 0..{C.m - 1}")
    u = rng.random(ys.size)
    if ys.size == 0:
        return ys.copy()
    cdf = _row_cdf(C, ys)
    return (cdf <= u[:, None]).sum(axis=1).astype(np.int64)


def corrupt_label(C: ConfusionMatrix, y: int, rng: np.random.Generator) -> int:
    if not 0 <= int(y) < C.m:
        raise DomainError(f"true label {y} outside 0..{C.m - 1}")
    return int(corrupt_labels(C, [int(y)], rng)[0])


# ============================================================================
# Serialization
# ============================================================================


def channel_to_dict(spec: ChannelSpec) -> Dict:
    return {'m': spec.m, 'm_tilde': spec.m_tilde, 'alphas': spec.alphas.tolist()}


def channel_from_dict(data: Dict) -> ChannelSpec:
    try:
        m, m_tilde = int(data['m']), int(data['m_tilde'])
        alphas = np.asarray(data['alphas'], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"malformed channel object: {exc}") from exc
    if m_tilde == 0:
        alphas = alphas.reshape(0, m)
    return ChannelSpec(m=m, m_tilde=m_tilde, alphas=alphas)


def confusion_to_dict(C: ConfusionMatrix) -> Dict:
    n = C.n_labels
    return {'m': C.m, 'm_tilde': C.m_tilde, 'shape': [n, n],
            'entries': C.entries.reshape(-1).tolist()}


def confusion_from_dict(data: Dict) -> ConfusionMatrix:
    try:
        m, m_tilde = int(data['m']), int(data['m_tilde'])
        rows, cols = (int(v) for v in data['shape'])
        entries = np.asarray(data['entries'], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidSpecError(f"malformed confusion object: {exc}") from exc
    if entries.size != rows * cols:
        raise ShapeMismatchError(f"{entries.size} entries do not fill shape {rows}x{cols}")
    return ConfusionMatrix(m=m, m_tilde=m_tilde, entries=entries.reshape(rows, cols))


def channel_from_config(cfg: Dict, m: Optional[int] = None) -> ChannelSpec:
    """Build a channel from a raw ChannelSpec object or a builder object.

    Builder objects look like {"kind": "missing", "alpha": 0.5, "m": 8};
    `m` may come from the surrounding config instead.
    """
    if 'alphas' in cfg:
        return channel_from_dict(cfg)
    kind = cfg.get('kind')
    if kind not in CHANNEL_KINDS:
        raise InvalidSpecError(f"unknown channel kind {kind!r}; expected one of {CHANNEL_KINDS}")
    m = int(cfg.get('m', m)) if cfg.get('m', m) is not None else None

    if kind == 'group':
        return make_group_channel(cfg['groups'], cfg.get('alpha', 1.0))
    if m is None:
        raise InvalidSpecError(f"channel kind {kind!r} needs the class count m")
    if kind == 'identity':
        return identity_channel(m)
    if kind == 'missing':
        alpha = cfg.get('alpha', 0.0)
        alphas: List[float] = list(alpha) if isinstance(alpha, (list, tuple)) else [alpha] * m
        if len(alphas) != m:
            raise InvalidSpecError(f"missing channel needs {m} alphas, got {len(alphas)}")
        return make_missing_channel(alphas)
    if kind == 'complementary':
        return make_complementary_channel(m, cfg.get('alpha', 0.0))
    return labeled_fraction_channel(m, cfg.get('fraction', 1.0))
