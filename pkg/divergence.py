"""
Exact Divergences on Finite Joints

Total variation, Jensen-Shannon and projection-discriminator
neural-network distance between small discrete joints over
(support point, label), plus numerical verification of the
corrupted-vs-true divergence bounds.

Key Features:
- push_through: corrupt a joint by a confusion matrix
- tv / js / kl with the 0*log 0 = 0 convention (natural log)
- closed-form projection-family distance and a brute-force vertex oracle
- verifiers returning BoundReport chains (lhs <= mid <= rhs)
- seeded random instance generator and the verification sweep
"""

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.special import rel_entr

from channel import (
    ConfusionMatrix,
    build_confusion,
    corollary_kappa_factors,
    kappa_factors,
    make_complementary_channel,
    make_missing_channel,
    random_channel,
)
from errors import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

EXACT_TOL = 1e-12
KAPPA_TOL = 1e-9
CROSSCHECK_TOL = 1e-10
MAX_BRUTEFORCE_PARAMS = 20


@dataclass(eq=False)
class DiscreteJoint:
    """probs[i, label] = P(x_i, label) on a finite support."""
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2 or self.probs.shape[0] < 1 or self.probs.shape[1] < 1:
            raise ShapeMismatchError(f"joint must be a non-empty 2-D table, got {self.probs.shape}")
        if np.any(self.probs < 0) or not np.all(np.isfinite(self.probs)):
            raise DomainError("joint probabilities must be finite and nonnegative")
        if abs(self.probs.sum() - 1.0) > EXACT_TOL:
            raise DomainError(f"joint must sum to 1, sums to {self.probs.sum()!r}")

    @property
    def support_size(self) -> int:
        return self.probs.shape[0]

    @property
    def label_count(self) -> int:
        return self.probs.shape[1]

    def is_uncorrupted(self, m: int) -> bool:
        return bool(np.all(self.probs[:, m:] == 0))


@dataclass(eq=False)
class FeatureMap:
    """psi and psi' evaluated on every support point, shape (s, d)."""
    psi: np.ndarray
    psi_prime: np.ndarray

    def __post_init__(self):
        self.psi = np.atleast_2d(np.asarray(self.psi, dtype=np.float64))
        self.psi_prime = np.atleast_2d(np.asarray(self.psi_prime, dtype=np.float64))
        if self.psi.shape != self.psi_prime.shape:
            raise ShapeMismatchError(f"psi {self.psi.shape} and psi' {self.psi_prime.shape} differ")
        if self.psi.shape[1] < 1:
            raise ShapeMismatchError("feature dimension must be >= 1")
        if not (np.all(np.isfinite(self.psi)) and np.all(np.isfinite(self.psi_prime))):
            raise DomainError("feature tables must be finite")

    @property
    def dim(self) -> int:
        return self.psi.shape[1]


@dataclass
class BoundReport:
    lhs: float
    mid: float
    rhs: float
    kappa_used: float
    passed: bool
    slack: float
    chain: str = ''
    label: str = ''
    equality_holds: Optional[bool] = None
    instance_seed: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            'instance_seed': self.instance_seed,
            'label': self.label,
            'chain': [self.lhs, self.mid, self.rhs],
            'kind': self.chain,
            'kappa': self.kappa_used,
            'passed': self.passed,
            'slack': self.slack,
            'equality_holds': self.equality_holds,
        }


def make_report(lhs: float, mid: float, rhs: float, kappa: float, tol: float = EXACT_TOL,
                chain: str = '', label: str = '') -> BoundReport:
    """Check lhs <= mid <= rhs with a tolerance relative to the largest magnitude."""
    scale = max(1.0, abs(lhs), abs(mid), abs(rhs))
    passed = (lhs <= mid + tol * scale) and (mid <= rhs + tol * scale)
    return BoundReport(lhs=float(lhs), mid=float(mid), rhs=float(rhs), kappa_used=float(kappa),
                       passed=bool(passed), slack=float(min(mid - lhs, rhs - mid)),
                       chain=chain, label=label)


# ============================================================================
# Joint algebra and divergences
# ============================================================================


def _check_same_shape(P: DiscreteJoint, Q: DiscreteJoint):
    if P.probs.shape != Q.probs.shape:
        raise ShapeMismatchError(f"joint shapes differ: {P.probs.shape} vs {Q.probs.shape}")


def push_through(P: DiscreteJoint, C: ConfusionMatrix) -> DiscreteJoint:
    """P~(x, u) = sum_y P(x, y) C[y, u]."""
    if P.label_count != C.n_labels:
        raise ShapeMismatchError(
            f"joint has {P.label_count} labels but channel has {C.n_labels}")
    return DiscreteJoint(P.probs @ C.entries)


def marginal_x(P: DiscreteJoint) -> np.ndarray:
    return P.probs.sum(axis=1)


def tv(P: DiscreteJoint, Q: DiscreteJoint) -> float:
    _check_same_shape(P, Q)
    return float(0.5 * np.abs(P.probs - Q.probs).sum())


def kl(P: DiscreteJoint, Q: DiscreteJoint) -> float:
    """KL(P || Q) in nats; +inf when P puts mass where Q has none."""
    _check_same_shape(P, Q)
    return float(rel_entr(P.probs, Q.probs).sum())


def js(P: DiscreteJoint, Q: DiscreteJoint) -> float:
    _check_same_shape(P, Q)
    mix = 0.5 * (P.probs + Q.probs)
    return float(0.5 * (rel_entr(P.probs, mix).sum() + rel_entr(Q.probs, mix).sum()))


def _projection_coefficients(P: DiscreteJoint, Q: DiscreteJoint, F: FeatureMap) -> np.ndarray:
    _check_same_shape(P, Q)
    if F.psi.shape[0] != P.support_size:
        raise ShapeMismatchError(
            f"feature tables cover {F.psi.shape[0]} points, joint has {P.support_size}")
    diff = P.probs - Q.probs
    label_part = diff.T @ F.psi  # (labels, d): coefficients of V
    x_part = diff.sum(axis=1) @ F.psi_prime  # (d,): coefficients of v
    return np.concatenate([label_part.reshape(-1), x_part])


def projection_nn_distance(P: DiscreteJoint, Q: DiscreteJoint, F: FeatureMap) -> float:
    """sup over the box {|V_ij| <= 1, |v_j| <= 1} of E_P[D] - E_Q[D].

    The objective is linear in (V, v) so the supremum is the l1 norm of its
    coefficients.
    """
    return float(np.abs(_projection_coefficients(P, Q, F)).sum())


def projection_nn_distance_bruteforce(P: DiscreteJoint, Q: DiscreteJoint,
                                      F: FeatureMap) -> float:
    """Maximum of the objective over every vertex of the parameter box."""
    coef = _projection_coefficients(P, Q, F)
    if coef.size > MAX_BRUTEFORCE_PARAMS:
        raise DomainError(f"{coef.size} parameters is too many for vertex enumeration")
    vertices = np.array(list(itertools.product((-1.0, 1.0), repeat=coef.size)))
    return float(np.max(vertices @ coef))


def empirical_joint(samples, support_size: int, label_count: int) -> DiscreteJoint:
    """Normalized frequency table of (support index, label) samples."""
    pairs = np.asarray(list(samples), dtype=np.int64)
    if pairs.size == 0:
        raise DomainError("empirical joint needs at least one sample")
    pairs = pairs.reshape(-1, 2)
    xs, labels = pairs[:, 0], pairs[:, 1]
    if xs.min() < 0 or xs.max() >= support_size or labels.min() < 0 or labels.max() >= label_count:
        raise DomainError("sample index outside the support or label range")
    counts = np.zeros((support_size, label_count))
    np.add.at(counts, (xs, labels), 1.0)
    return DiscreteJoint(counts / counts.sum())


# ============================================================================
# Bound verification
# ============================================================================


def _require_uncorrupted(P: DiscreteJoint, Q: DiscreteJoint, C: ConfusionMatrix):
    for name, joint in (('P', P), ('Q', Q)):
        if joint.label_count != C.n_labels:
            raise ShapeMismatchError(
                f"{name} has {joint.label_count} labels, channel has {C.n_labels}")
        if not joint.is_uncorrupted(C.m):
            raise DomainError(f"{name} must place zero mass on uncertain labels")


def verify_theorem1(P: DiscreteJoint, Q: DiscreteJoint, C: ConfusionMatrix,
                    kappa_scale: float = 1.0) -> Tuple[BoundReport, BoundReport]:
    """TV and JS chains: d(P~,Q~) <= d(P,Q) <= kappa * bound(P~,Q~).

    Args:
        kappa_scale: multiplies kappa; anything but 1.0 is a fault-injection hook

    Returns:
        (tv report, js report)
    """
    _require_uncorrupted(P, Q, C)
    kappa = kappa_factors(C).kappa * kappa_scale
    P_t, Q_t = push_through(P, C), push_through(Q, C)

    tv_t = tv(P_t, Q_t)
    tv_report = make_report(tv_t, tv(P, Q), kappa * tv_t, kappa, chain='tv', label='theorem1')

    js_t = js(P_t, Q_t)
    js_report = make_report(js_t, js(P, Q), kappa * math.sqrt(8.0 * js_t), kappa,
                            chain='js', label='theorem1')
    return tv_report, js_report


def verify_theorem2(P: DiscreteJoint, Q: DiscreteJoint, C: ConfusionMatrix, F: FeatureMap,
                    kappa_scale: float = 1.0) -> BoundReport:
    """d_F(P~,Q~) <= d_F(P,Q) <= kappa' d_F(P~,Q~) for the projection family."""
    _require_uncorrupted(P, Q, C)
    kappa_prime = kappa_factors(C).kappa_prime * kappa_scale
    dist_t = projection_nn_distance(push_through(P, C), push_through(Q, C), F)
    return make_report(dist_t, projection_nn_distance(P, Q, F), kappa_prime * dist_t,
                       kappa_prime, chain='nn', label='theorem2')


def verify_corollaries(kind: str, params: Dict, P: DiscreteJoint, Q: DiscreteJoint,
                       F: Optional[FeatureMap] = None,
                       kappa_scale: float = 1.0) -> List[BoundReport]:
    """Re-run the chains with the corollary closed-form factors.

    Args:
        kind: 'missing' (params: {"alpha": scalar or per-class list}) or
              'complementary' (params: {"alpha": scalar})
        P, Q: uncorrupted joints with m + 1 (missing) or 2m (complementary) labels
        F: optional feature map for the neural-network chain

    For 'complementary' the TV report also records whether the stated
    equality tv(P,Q) = kappa tv(P~,Q~) holds to 1e-9.
    """
    if kind == 'missing':
        m = P.label_count - 1
        alpha = params.get('alpha', 0.0)
        alphas = list(alpha) if isinstance(alpha, (list, tuple, np.ndarray)) else [alpha] * m
        C = build_confusion(make_missing_channel(alphas))
        factors = corollary_kappa_factors('missing', m, alphas)
        label = 'corollary1'
    elif kind == 'complementary':
        if P.label_count % 2:
            raise ShapeMismatchError("complementary joints need 2m labels")
        m = P.label_count // 2
        alpha = float(params.get('alpha', 0.0))
        C = build_confusion(make_complementary_channel(m, alpha))
        factors = corollary_kappa_factors('complementary', m, alpha)
        label = 'corollary2'
    else:
        raise DomainError(f"no corollary for channel kind {kind!r}")

    _require_uncorrupted(P, Q, C)
    kappa = factors.kappa * kappa_scale
    kappa_prime = factors.kappa_prime * kappa_scale
    P_t, Q_t = push_through(P, C), push_through(Q, C)

    tv_t, tv_true = tv(P_t, Q_t), tv(P, Q)
    tv_report = make_report(tv_t, tv_true, kappa * tv_t, kappa, tol=KAPPA_TOL,
                            chain='tv', label=label)
    if kind == 'complementary':
        tv_report.equality_holds = bool(
            abs(tv_true - kappa * tv_t) <= KAPPA_TOL * max(1.0, tv_true))

    js_t = js(P_t, Q_t)
    reports = [
        tv_report,
        make_report(js_t, js(P, Q), kappa * math.sqrt(8.0 * js_t), kappa, tol=KAPPA_TOL,
                    chain='js', label=label),
    ]
    if F is not None:
        dist_t = projection_nn_distance(P_t, Q_t, F)
        reports.append(make_report(dist_t, projection_nn_distance(P, Q, F), kappa_prime * dist_t,
                                   kappa_prime, tol=KAPPA_TOL, chain='nn', label=label))
    return reports


def sample_complexity_bound(p: float, L: float, eps: float, c: float = 1.0) -> int:
    """Smallest integer n with n >= (c p / eps^2) log(p L / eps).

    c is the unspecified universal constant, always supplied by the caller.
    """
    if min(p, L, eps, c) <= 0:
        raise DomainError("p, L, eps and c must all be positive")
    ratio = p * L / eps
    if ratio <= 1:
        raise DomainError(f"p*L/eps = {ratio} <= 1 makes the logarithm nonpositive")
    return int(math.ceil(c * p / (eps * eps) * math.log(ratio)))


def assumption1_closure_check(V, T) -> bool:
    """Whether the box {max|V_ij| <= 1} is closed under V -> T V for ||T||_inf <= 1."""
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    T = np.atleast_2d(np.asarray(T, dtype=np.float64))
    if np.max(np.abs(V)) > 1 + EXACT_TOL:
        raise DomainError("V must satisfy max |V_ij| <= 1")
    if np.max(np.abs(T).sum(axis=1)) > 1 + EXACT_TOL:
        raise DomainError("T must satisfy ||T||_inf <= 1")
    if T.shape[1] != V.shape[0]:
        raise ShapeMismatchError(f"cannot apply T {T.shape} to V {V.shape}")
    return bool(np.max(np.abs(T @ V)) <= 1 + EXACT_TOL)


# ============================================================================
# Random instances and the verification sweep
# ============================================================================


@dataclass(frozen=True)
class SweepLimits:
    max_support: int = 6
    max_classes: int = 4
    max_uncertain: int = 3
    max_feature_dim: int = 3
    max_mass: float = 0.9
    crosscheck_trials: int = 100


def random_joint_pair(rng: np.random.Generator, s: int, m: int, m_tilde: int,
                      matched_marginals: bool = False) -> Tuple[DiscreteJoint, DiscreteJoint]:
    """Two uncorrupted joints on s points x m classes, zero-padded with m_tilde labels."""
    if matched_marginals:
        p_x = rng.dirichlet(np.ones(s))
        tables = [p_x[:, None] * rng.dirichlet(np.ones(m), size=s) for _ in range(2)]
    else:
        tables = [rng.dirichlet(np.ones(s * m)).reshape(s, m) for _ in range(2)]
    padded = [np.hstack([t, np.zeros((s, m_tilde))]) for t in tables]
    return DiscreteJoint(padded[0] / padded[0].sum()), DiscreteJoint(padded[1] / padded[1].sum())


def random_feature_map(rng: np.random.Generator, s: int, d: int) -> FeatureMap:
    return FeatureMap(psi=rng.uniform(-1, 1, (s, d)), psi_prime=rng.uniform(-1, 1, (s, d)))


def random_instance(rng: np.random.Generator, limits: SweepLimits = SweepLimits(),
                    matched_marginals: bool = False):
    """Random (P, Q, C, F) with a full-rank channel."""
    s = int(rng.integers(2, limits.max_support + 1))
    m = int(rng.integers(2, limits.max_classes + 1))
    m_tilde = int(rng.integers(1, limits.max_uncertain + 1))
    C = build_confusion(random_channel(rng, m, m_tilde, limits.max_mass))
    P, Q = random_joint_pair(rng, s, m, m_tilde, matched_marginals)
    F = random_feature_map(rng, s, int(rng.integers(1, limits.max_feature_dim + 1)))
    return P, Q, C, F


def _crosscheck_report(rng: np.random.Generator, limits: SweepLimits) -> BoundReport:
    s = int(rng.integers(2, limits.max_support + 1))
    labels = int(rng.integers(1, 4))
    P, Q = random_joint_pair(rng, s, labels, 0)
    F = random_feature_map(rng, s, int(rng.integers(1, 3)))
    closed = projection_nn_distance(P, Q, F)
    brute = projection_nn_distance_bruteforce(P, Q, F)
    return make_report(closed, brute, closed, 1.0, tol=CROSSCHECK_TOL,
                       chain='nn', label='crosscheck')


def run_instance(instance_seed: int, limits: SweepLimits = SweepLimits(),
                 kappa_scale: float = 1.0, crosscheck: bool = False) -> List[BoundReport]:
    """Every verifier on one seeded instance."""
    rng = np.random.default_rng(instance_seed)
    P, Q, C, F = random_instance(rng, limits)
    reports = list(verify_theorem1(P, Q, C, kappa_scale))
    reports.append(verify_theorem2(P, Q, C, F, kappa_scale))

    s, m = P.support_size, C.m
    alphas = rng.uniform(0.0, limits.max_mass, size=m)
    P1, Q1 = random_joint_pair(rng, s, m, 1)
    reports += verify_corollaries('missing', {'alpha': alphas.tolist()}, P1, Q1,
                                  random_feature_map(rng, s, F.dim), kappa_scale)

    alpha = float(rng.uniform(0.0, limits.max_mass))
    P2, Q2 = random_joint_pair(rng, s, m, m, matched_marginals=True)
    reports += verify_corollaries('complementary', {'alpha': alpha}, P2, Q2,
                                  random_feature_map(rng, s, F.dim), kappa_scale)
    if crosscheck:
        reports.append(_crosscheck_report(rng, limits))

    for report in reports:
        report.instance_seed = instance_seed
    return reports


def run_bound_sweep(trials: int, seed: int, limits: SweepLimits = SweepLimits(),
                    kappa_scale: float = 1.0) -> pd.DataFrame:
    """Run `trials` seeded instances (instance_seed = seed + i), one row per report."""
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rows = []
    for i in range(trials):
        for report in run_instance(seed + i, limits, kappa_scale,
                                   crosscheck=i < limits.crosscheck_trials):
            row = asdict(report)
            if not report.passed:
                logger.warning("instance %d: %s %s chain failed (%.6g, %.6g, %.6g)",
                               report.instance_seed, report.label, report.chain,
                               report.lhs, report.mid, report.rhs)
            rows.append(row)
    return pd.DataFrame(rows)
