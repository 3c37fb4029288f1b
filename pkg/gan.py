"""
Robust Conditional GAN Training

A desk-scale adversarial trainer: an MLP conditional generator and a
projection discriminator, both with hand-written gradients.

Key Features:
- Projection discriminator D(x, y) = onehot(y)^T V psi(x) + v^T psi'(x),
  V clipped to the box after every discriminator update
- RCGAN loss: generated labels are corrupted by the same confusion matrix
  as the real data before the discriminator sees them
- RCGAN(lambda) loss for few-label data: unconditional terms on every
  sample, lambda-weighted conditional terms on the labeled ones; training
  opens with warm-up steps of the conditional terms alone, so the class of
  each generated mode is fixed by the labels before the unlabeled terms act
- labeled_only baseline: the RCGAN loss with the identity channel on the
  labeled records alone
- Exact expected losses on finite joints (the lambda-equivalence identity)
- JSON checkpoints (shape manifest plus a flat parameter vector)

Loss conventions. The discriminator maximizes
    L = E_real[f_real(D)] + E_fake[f_fake(D)]
with phi="log": f_real(s) = log sigmoid(s), f_fake(s) = log(1 - sigmoid(s)),
and phi="linear": f_real(s) = s, f_fake(s) = 1 - s. The generator minimizes
the fake part of L. Setting nonsaturating swaps that for
-E_fake[log sigmoid(D)] (phi="log" only).
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.special import expit, log_expit

from channel import (
    ConfusionMatrix,
    build_confusion,
    corrupt_labels,
    identity_channel,
    uniform_missing_channel,
)
from config import NonNegativeInt, TrainSection, describe_error, dump_json, error_pointer
from data import Dataset, labeled_subset
from divergence import DiscreteJoint, marginal_x, push_through
from errors import (
    DomainError,
    InvalidSpecError,
    ShapeMismatchError,
    SingularChannelError,
    TrainingDivergedError,
)
from nets import MLP, SGD, assign_flat, flatten_params, init_mlp

logger = logging.getLogger(__name__)

EpochCallback = Callable[[int, 'Generator', 'ProjectionDiscriminator'], Dict[str, float]]


class TrainConfig(TrainSection):
    """The `train` config section plus the run seed.

    Invalid values raise InvalidSpecError naming the offending field.
    """
    seed: NonNegativeInt = 0

    def __init__(self, **values: Any):
        try:
            super().__init__(**values)
        except ValidationError as exc:
            first = exc.errors()[0]
            raise InvalidSpecError(f"{error_pointer(first['loc'])}: {describe_error(first)}") from None

    def to_dict(self) -> Dict:
        return self.model_dump(mode='json')

    @classmethod
    def from_dict(cls, data: Dict, seed: Optional[int] = None) -> 'TrainConfig':
        values = dict(data)
        if seed is not None:
            values['seed'] = seed
        return cls(**values)


def one_hot(labels, n_labels: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size and (labels.min() < 0 or labels.max() >= n_labels):
        raise ShapeMismatchError(f"labels must lie in 0..{n_labels - 1}")
    out = np.zeros((labels.size, n_labels))
    out[np.arange(labels.size), labels] = 1.0
    return out


# ============================================================================
# Networks
# ============================================================================


@dataclass(eq=False)
class Generator:
    """x = net(concat(z, onehot(y))) with z ~ N(0, I_latent_dim)."""
    net: MLP
    latent_dim: int
    m: int
    n_labels: int

    def __post_init__(self):
        if self.net.in_dim != self.latent_dim + self.n_labels:
            raise ShapeMismatchError(
                f"generator input width {self.net.in_dim} != latent_dim + n_labels "
                f"({self.latent_dim} + {self.n_labels})")
        if not 1 <= self.m <= self.n_labels:
            raise ShapeMismatchError("generator class count must lie in 1..n_labels")

    @property
    def dim(self) -> int:
        return self.net.out_dim

    def parameters(self) -> List[np.ndarray]:
        return self.net.parameters()

    def _inputs(self, Z: np.ndarray, ys) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64).reshape(-1, self.latent_dim)
        onehot = one_hot(ys, self.n_labels)
        if onehot.shape[0] != Z.shape[0]:
            raise ShapeMismatchError(f"{Z.shape[0]} latent codes but {onehot.shape[0]} labels")
        return np.hstack([Z, onehot])

    def forward(self, Z: np.ndarray, ys):
        return self.net.forward(self._inputs(Z, ys))

    def generate(self, Z: np.ndarray, ys) -> np.ndarray:
        return self.forward(Z, ys)[0]

    def backward(self, cache, d_out: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Parameter gradients and the gradient w.r.t. the latent codes."""
        grads, d_in = self.net.backward(cache, d_out)
        return grads, d_in[:, :self.latent_dim]

    def sample(self, n: int, priors, rng: np.random.Generator):
        """(X, ys, Z) with ys ~ priors drawn before Z."""
        ys, Z = sample_latents(rng, n, priors, self.latent_dim)
        return self.generate(Z, ys), ys, Z



@dataclass(eq=False)
class ProjectionDiscriminator:
    psi: MLP
    psi_prime: MLP
    V: np.ndarray
    v: np.ndarray
    clip_bound: float = 1.0
    feature_clip: Optional[float] = None

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64).reshape(-1)
        d = self.psi.out_dim
        if self.psi_prime.out_dim != d or self.V.ndim != 2 or self.V.shape[1] != d \
                or self.v.shape != (d,):
            raise ShapeMismatchError("feature width, V and v must agree")
        if self.psi.in_dim != self.psi_prime.in_dim:
            raise ShapeMismatchError("psi and psi' must read the same input width")

    @property
    def n_labels(self) -> int:
        return self.V.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.V.shape[1]

    @property
    def dim(self) -> int:
        return self.psi.in_dim

    def parameters(self) -> List[np.ndarray]:
        return self.psi.parameters() + self.psi_prime.parameters() + [self.V, self.v]

    def forward(self, X: np.ndarray, labels):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_labels):
            raise ShapeMismatchError(f"labels must lie in 0..{self.n_labels - 1}")
        H, cache_psi = self.psi.forward(X)
        H2, cache_prime = self.psi_prime.forward(X)
        if H.shape[0] != labels.size:
            raise ShapeMismatchError(f"{H.shape[0]} points but {labels.size} labels")
        scores = np.einsum('ij,ij->i', self.V[labels], H) + H2 @ self.v
        return scores, (labels, H, H2, cache_psi, cache_prime)

    def backward(self, cache, d_scores: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
        """Parameter gradients (parameters() order) and input gradient."""
        labels, H, H2, cache_psi, cache_prime = cache
        d_scores = np.asarray(d_scores, dtype=np.float64).reshape(-1)
        dV = np.zeros_like(self.V)
        np.add.at(dV, labels, d_scores[:, None] * H)
        dv = H2.T @ d_scores
        g_psi, dX = self.psi.backward(cache_psi, d_scores[:, None] * self.V[labels])
        g_prime, dX_prime = self.psi_prime.backward(cache_prime, d_scores[:, None] * self.v[None, :])
        return g_psi + g_prime + [dV, dv], dX + dX_prime

    def clip(self):
        np.clip(self.V, -self.clip_bound, self.clip_bound, out=self.V)
        if self.feature_clip is not None:
            for p in self.psi.parameters() + self.psi_prime.parameters():
                np.clip(p, -self.feature_clip, self.feature_clip, out=p)


def disc_forward(D: ProjectionDiscriminator, x, label) -> float:
    """Raw score of one point for a label vector (one-hot, or any vec(y))."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    label = np.asarray(label, dtype=np.float64).reshape(-1)
    if x.size != D.dim:
        raise ShapeMismatchError(f"x has {x.size} coordinates, discriminator reads {D.dim}")
    if label.size != D.n_labels:
        raise ShapeMismatchError(f"label vector has {label.size} slots, expected {D.n_labels}")
    h = D.psi(x[None, :])[0]
    h2 = D.psi_prime(x[None, :])[0]
    return float(label @ D.V @ h + D.v @ h2)


def init_generator(rng: np.random.Generator, dim: int, m: int, n_labels: int,
                   cfg: TrainConfig) -> Generator:
    sizes = [cfg.latent_dim + n_labels, *cfg.gen_hidden, dim]
    activations = ['tanh'] * len(cfg.gen_hidden) + ['linear']
    return Generator(init_mlp(rng, sizes, activations), cfg.latent_dim, m, n_labels)


def init_discriminator(rng: np.random.Generator, dim: int, n_labels: int,
                       cfg: TrainConfig) -> ProjectionDiscriminator:
    sizes = [dim, *cfg.disc_hidden, cfg.feature_dim]
    activations = ['tanh'] * (len(cfg.disc_hidden) + 1)
    psi = init_mlp(rng, sizes, activations)
    psi_prime = init_mlp(rng, sizes, activations)
    limit = np.sqrt(6.0 / (n_labels + cfg.feature_dim))
    V = rng.uniform(-limit, limit, size=(n_labels, cfg.feature_dim))
    v = rng.uniform(-limit, limit, size=cfg.feature_dim)
    D = ProjectionDiscriminator(psi, psi_prime, V, v, cfg.clip_bound, cfg.feature_clip)
    D.clip()
    return D


def sample_latents(rng: np.random.Generator, n: int, priors, latent_dim: int):
    priors = np.asarray(priors, dtype=np.float64)
    ys = rng.choice(priors.size, size=n, p=priors)
    return ys, rng.standard_normal((n, latent_dim))


# ============================================================================
# Loss terms
# ============================================================================


def real_term(scores: np.ndarray, phi: str) -> Tuple[np.ndarray, np.ndarray]:
    """f_real and its derivative."""
    if phi == 'log':
        return log_expit(scores), expit(-scores)
    return scores, np.ones_like(scores)


def fake_term(scores: np.ndarray, phi: str) -> Tuple[np.ndarray, np.ndarray]:
    """f_fake and its derivative."""
    if phi == 'log':
        return log_expit(-scores), -expit(scores)
    return 1.0 - scores, -np.ones_like(scores)


def generator_term(scores: np.ndarray, phi: str, nonsaturating: bool) -> Tuple[np.ndarray, np.ndarray]:
    if phi == 'log' and nonsaturating:
        return -log_expit(scores), -expit(-scores)
    return fake_term(scores, phi)


def _add(total: Optional[List[np.ndarray]], grads: List[np.ndarray]) -> List[np.ndarray]:
    if total is None:
        return grads
    return [a + b for a, b in zip(total, grads)]


def _scaled(grads: List[np.ndarray], factor: float) -> List[np.ndarray]:
    return [factor * g for g in grads]


def _empty_like_params(params: Sequence[np.ndarray]) -> List[np.ndarray]:
    return [np.zeros_like(p) for p in params]


def disc_objective(D: ProjectionDiscriminator, terms, phi: str) -> Tuple[float, List[np.ndarray]]:
    """Weighted sum of real/fake expectations and its gradient w.r.t. D.

    terms: iterable of (X, labels, kind, weight) with kind in {"real", "fake"};
    each contributes weight * mean f_kind(D(X, labels)). Empty batches add 0.
    """
    value = 0.0
    grads = None
    for X, labels, kind, weight in terms:
        labels = np.asarray(labels).reshape(-1)
        if labels.size == 0 or weight == 0:
            continue
        scores, cache = D.forward(X, labels)
        f, df = (real_term if kind == 'real' else fake_term)(scores, phi)
        value += weight * float(f.mean())
        g, _ = D.backward(cache, weight * df / labels.size)
        grads = _add(grads, g)
    return value, grads if grads is not None else _empty_like_params(D.parameters())


def gen_objective(G: Generator, D: ProjectionDiscriminator, Z: np.ndarray, ys, views,
                  phi: str, nonsaturating: bool) -> Tuple[float, List[np.ndarray]]:
    """Generator loss over x = G(Z; ys) and its gradient w.r.t. G.

    views: iterable of (labels_seen_by_D, weight); each adds
    weight * mean g(D(x, labels)).
    """
    X, g_cache = G.forward(Z, ys)
    value = 0.0
    d_x = np.zeros_like(X)
    for labels, weight in views:
        if weight == 0:
            continue
        scores, cache = D.forward(X, labels)
        f, df = generator_term(scores, phi, nonsaturating)
        value += weight * float(f.mean())
        _, dX = D.backward(cache, weight * df / X.shape[0])
        d_x += dX
    grads, _ = G.backward(g_cache, d_x)
    return value, grads


# ============================================================================
# Steps
# ============================================================================


@dataclass
class StepResult:
    loss_d: float
    loss_g: float


def _check_finite(result: StepResult):
    if not (np.isfinite(result.loss_d) and np.isfinite(result.loss_g)):
        raise TrainingDivergedError(f"non-finite loss (loss_d={result.loss_d}, loss_g={result.loss_g})")


def rcgan_disc_gen_step(real_x: np.ndarray, real_labels, C: ConfusionMatrix, priors,
                        G: Generator, D: ProjectionDiscriminator, opt_d: SGD, opt_g: SGD,
                        cfg: TrainConfig, rng: np.random.Generator) -> StepResult:
    """One discriminator ascent step on L(D, G), then one generator descent step.

    Generated labels pass through C (a fresh draw per sample and per step)
    before D scores them. The same C is used for every generated batch.
    """
    if not C.is_full_rank():
        raise SingularChannelError("RCGAN training needs a full-rank channel")
    if C.n_labels != D.n_labels:
        raise ShapeMismatchError(f"channel has {C.n_labels} labels, discriminator {D.n_labels}")
    batch = len(real_x)

    ys, Z = sample_latents(rng, batch, priors, G.latent_dim)
    fake_x = G.generate(Z, ys)
    fake_labels = corrupt_labels(C, ys, rng)
    loss_d, grads = disc_objective(D, [(real_x, real_labels, 'real', 1.0),
                                       (fake_x, fake_labels, 'fake', 1.0)], cfg.phi)
    opt_d.step(D.parameters(), _scaled(grads, -1.0))
    D.clip()

    ys, Z = sample_latents(rng, batch, priors, G.latent_dim)
    seen = corrupt_labels(C, ys, rng)
    loss_g, g_grads = gen_objective(G, D, Z, ys, [(seen, 1.0)], cfg.phi, cfg.nonsaturating)
    opt_g.step(G.parameters(), g_grads)

    result = StepResult(loss_d, loss_g)
    _check_finite(result)
    return result


def rcgan_lambda_loss(real_x: np.ndarray, labeled_x: np.ndarray, labeled_y, G: Generator,
                      D: ProjectionDiscriminator, cfg: TrainConfig, rng: np.random.Generator,
                      priors=None) -> Tuple[float, List[np.ndarray]]:
    """L_lambda for fresh generated samples, with its gradient w.r.t. D.

    real_x holds every available real point (labeled or not); the two
    unconditional terms score them with the missing-label slot m. The
    lambda-weighted conditional terms use labeled_x / labeled_y and the
    generated (x, y) pairs.
    """
    if len(real_x) == 0:
        raise DomainError("RCGAN(lambda) needs at least one real sample")
    priors = np.full(G.m, 1.0 / G.m) if priors is None else priors
    ys, Z = sample_latents(rng, len(real_x), priors, G.latent_dim)
    fake_x = G.generate(Z, ys)
    return lambda_disc_objective(D, G.m, real_x, labeled_x, labeled_y, fake_x, ys, cfg.lam, cfg.phi)


def lambda_disc_objective(D: ProjectionDiscriminator, m: int, real_x, labeled_x, labeled_y,
                          fake_x, fake_y, lam: float, phi: str) -> Tuple[float, List[np.ndarray]]:
    if D.n_labels <= m:
        raise ShapeMismatchError("RCGAN(lambda) needs a discriminator slot for the missing label")
    missing_real = np.full(len(real_x), m)
    missing_fake = np.full(len(fake_x), m)
    return disc_objective(D, [(real_x, missing_real, 'real', 1.0),
                              (fake_x, missing_fake, 'fake', 1.0),
                              (labeled_x, labeled_y, 'real', lam),
                              (fake_x, fake_y, 'fake', lam)], phi)


def rcgan_lambda_step(real_x: np.ndarray, labeled_x: np.ndarray, labeled_y, priors,
                      G: Generator, D: ProjectionDiscriminator, opt_d: SGD, opt_g: SGD,
                      cfg: TrainConfig, rng: np.random.Generator) -> StepResult:
    """The RCGAN(lambda) counterpart of rcgan_disc_gen_step."""
    loss_d, grads = rcgan_lambda_loss(real_x, labeled_x, labeled_y, G, D, cfg, rng, priors)
    opt_d.step(D.parameters(), _scaled(grads, -1.0))
    D.clip()

    ys, Z = sample_latents(rng, len(real_x), priors, G.latent_dim)
    missing = np.full(len(ys), G.m)
    loss_g, g_grads = gen_objective(G, D, Z, ys, [(missing, 1.0), (ys, cfg.lam)],
                                    cfg.phi, cfg.nonsaturating)
    opt_g.step(G.parameters(), g_grads)

    result = StepResult(loss_d, loss_g)
    _check_finite(result)
    return result


# ============================================================================
# Exact expectations on finite joints
# ============================================================================


def _pad_labels(P: DiscreteJoint, n_labels: int) -> DiscreteJoint:
    if P.label_count == n_labels:
        return P
    if P.label_count > n_labels:
        raise ShapeMismatchError(f"joint has {P.label_count} labels, expected <= {n_labels}")
    pad = np.zeros((P.support_size, n_labels - P.label_count))
    return DiscreteJoint(np.hstack([P.probs, pad]))


def expected_rcgan_loss(P: DiscreteJoint, Q: DiscreteJoint, C: ConfusionMatrix,
                        scores: np.ndarray, phi: str) -> float:
    """L(D, G) = sum P~ f_real(D) + sum Q~ f_fake(D) for a score table D(x_i, label)."""
    scores = np.asarray(scores, dtype=np.float64)
    P_t = push_through(_pad_labels(P, C.n_labels), C)
    Q_t = push_through(_pad_labels(Q, C.n_labels), C)
    if scores.shape != P_t.probs.shape:
        raise ShapeMismatchError(f"score table {scores.shape} != joint {P_t.probs.shape}")
    return float((P_t.probs * real_term(scores, phi)[0]).sum()
                 + (Q_t.probs * fake_term(scores, phi)[0]).sum())


def expected_lambda_loss(P: DiscreteJoint, Q: DiscreteJoint, scores: np.ndarray,
                         lam: float, phi: str) -> float:
    """L_lambda on true joints over m classes; column m of the score table is the missing slot."""
    scores = np.asarray(scores, dtype=np.float64)
    m = scores.shape[1] - 1
    if m < 1 or scores.shape[0] != P.support_size:
        raise ShapeMismatchError(f"score table {scores.shape} does not fit a joint on "
                                 f"{P.support_size} points")
    p = _pad_labels(P, m + 1).probs[:, :m]
    q = _pad_labels(Q, m + 1).probs[:, :m]
    f_real, f_fake = real_term(scores, phi)[0], fake_term(scores, phi)[0]
    unconditional = marginal_x(P) @ f_real[:, m] + marginal_x(Q) @ f_fake[:, m]
    conditional = (p * f_real[:, :m]).sum() + (q * f_fake[:, :m]).sum()
    return float(unconditional + lam * conditional)


# ============================================================================
# Checkpoints
# ============================================================================


def _mlp_manifest(net: MLP) -> Dict:
    return {'shapes': [list(s) for s in net.shapes], 'activations': list(net.activations)}


def make_checkpoint(G: Generator, D: ProjectionDiscriminator,
                    cfg: Optional[TrainConfig] = None) -> Dict:
    return {
        'config': cfg.to_dict() if cfg is not None else None,
        'generator': {'latent_dim': G.latent_dim, 'm': G.m, 'n_labels': G.n_labels,
                      **_mlp_manifest(G.net)},
        'discriminator': {'clip_bound': D.clip_bound, 'feature_clip': D.feature_clip,
                          'n_labels': D.n_labels, 'feature_dim': D.feature_dim,
                          'psi': _mlp_manifest(D.psi), 'psi_prime': _mlp_manifest(D.psi_prime)},
        'params': flatten_params(G.parameters() + D.parameters()).tolist(),
    }


def _empty_mlp(manifest: Dict) -> MLP:
    shapes = [tuple(int(v) for v in s) for s in manifest['shapes']]
    return MLP([np.zeros(s) for s in shapes], [np.zeros(s[1]) for s in shapes],
               manifest['activations'])


def restore_checkpoint(ckpt: Dict) -> Tuple[Generator, ProjectionDiscriminator, Optional[TrainConfig]]:
    try:
        g, d = ckpt['generator'], ckpt['discriminator']
        G = Generator(_empty_mlp(g), int(g['latent_dim']), int(g['m']), int(g['n_labels']))
        D = ProjectionDiscriminator(_empty_mlp(d['psi']), _empty_mlp(d['psi_prime']),
                                    np.zeros((int(d['n_labels']), int(d['feature_dim']))),
                                    np.zeros(int(d['feature_dim'])),
                                    float(d['clip_bound']), d.get('feature_clip'))
        assign_flat(G.parameters() + D.parameters(), ckpt['params'])
        cfg = TrainConfig.from_dict(ckpt['config']) if ckpt.get('config') else None
    except (KeyError, TypeError) as exc:
        raise InvalidSpecError(f"malformed checkpoint: {exc}") from exc
    return G, D, cfg


def save_checkpoint(path: Union[str, Path], G: Generator, D: ProjectionDiscriminator,
                    cfg: Optional[TrainConfig] = None):
    Path(path).write_text(dump_json(make_checkpoint(G, D, cfg)))


def load_checkpoint(path: Union[str, Path]):
    """Returns (G, D, cfg). FileNotFoundError propagates for a missing path."""
    with open(path, 'r') as file:
        try:
            ckpt = json.load(file)
        except json.JSONDecodeError as exc:
            raise InvalidSpecError(f"{path} is not a checkpoint: {exc}") from exc
    return restore_checkpoint(ckpt)


# ============================================================================
# Training loop
# ============================================================================


@dataclass
class TrainResult:
    generator: Generator
    discriminator: ProjectionDiscriminator
    history: pd.DataFrame
    config: TrainConfig
    extras: Dict = field(default_factory=dict)


def _prepare(cfg: TrainConfig, dataset: Dataset, C: Optional[ConfusionMatrix]):
    """Training records, discriminator label count and channel for the configured mode."""
    if cfg.mode == 'labeled_only':
        subset = labeled_subset(dataset)
        if len(subset) == 0:
            raise DomainError("labeled_only training needs at least one labeled record")
        return subset, dataset.m, build_confusion(identity_channel(dataset.m))
    if cfg.mode == 'lambda':
        if dataset.m_tilde != 1:
            raise DomainError("RCGAN(lambda) needs data with a single missing-label slot")
        return dataset, dataset.m + 1, None
    if C is None:
        if dataset.channel is not None:
            C = build_confusion(dataset.channel)
        elif not dataset.is_corrupted:
            C = build_confusion(identity_channel(dataset.m))
        else:
            raise DomainError("RCGAN training needs the channel that corrupted the data")
    if (C.m, C.n_labels) != (dataset.m, dataset.n_labels):
        raise ShapeMismatchError(f"channel label space ({C.m}, {C.n_labels}) does not match "
                                 f"dataset ({dataset.m}, {dataset.n_labels})")
    return dataset, C.n_labels, C


def labeled_warmup(records: Dataset, labeled_idx: np.ndarray, priors, G: Generator,
                   D: ProjectionDiscriminator, opt_d: SGD, opt_g: SGD, cfg: TrainConfig,
                   rng: np.random.Generator) -> int:
    """cfg.warmup_steps conditional steps on labeled batches drawn with replacement.

    The channel never emits the missing slot, so D's slot m stays untouched
    until the RCGAN(lambda) epochs start. Returns the number of steps taken.
    """
    if labeled_idx.size == 0 or cfg.warmup_steps == 0:
        return 0
    C = build_confusion(uniform_missing_channel(G.m, 0.0))
    for _ in range(cfg.warmup_steps):
        idx = rng.choice(labeled_idx, size=cfg.batch_size, replace=True)
        rcgan_disc_gen_step(records.x[idx], records.labels[idx], C, priors,
                            G, D, opt_d, opt_g, cfg, rng)
    return cfg.warmup_steps


def train(cfg: TrainConfig, dataset: Dataset, priors=None, C: Optional[ConfusionMatrix] = None,
          callback: Optional[EpochCallback] = None) -> TrainResult:
    """Alternate discriminator and generator steps for cfg.epochs epochs.

    priors is P_Y for generated labels (uniform when omitted). Every random
    draw comes from default_rng(cfg.seed), so equal seeds give equal runs.

    Raises:
        TrainingDivergedError: a non-finite loss; carries the checkpoint from
            the end of the last completed epoch
    """
    records, n_labels, C = _prepare(cfg, dataset, C)
    if len(records) == 0:
        raise DomainError("cannot train on an empty dataset")
    m = dataset.m
    priors = np.full(m, 1.0 / m) if priors is None else np.asarray(priors, dtype=np.float64)
    if priors.shape != (m,):
        raise ShapeMismatchError(f"priors must have {m} entries")

    rng = np.random.default_rng(cfg.seed)
    G = init_generator(rng, dataset.dim, m, n_labels, cfg)
    D = init_discriminator(rng, dataset.dim, n_labels, cfg)
    opt_d = SGD(cfg.lr_disc, cfg.momentum)
    opt_g = SGD(cfg.lr_gen, cfg.momentum)

    labeled_idx = np.flatnonzero(records.is_labeled)
    n = len(records)
    rows = []
    last_good = make_checkpoint(G, D, cfg)
    logger.info("training %s (phi=%s) on %d records, %d labeled, %d epochs",
                cfg.mode, cfg.phi, n, labeled_idx.size, cfg.epochs)

    if cfg.mode == 'lambda' and cfg.epochs > 0:
        try:
            warmed = labeled_warmup(records, labeled_idx, priors, G, D, opt_d, opt_g, cfg, rng)
        except TrainingDivergedError as exc:
            logger.error("training diverged during the labeled warm-up: %s", exc)
            raise TrainingDivergedError(str(exc), epoch=0, checkpoint=last_good) from exc
        if warmed:
            logger.info("labeled warm-up: %d steps on %d labeled records", warmed, labeled_idx.size)
            last_good = make_checkpoint(G, D, cfg)

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        try:
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                if cfg.mode == 'lambda':
                    if labeled_idx.size:
                        lab = rng.choice(labeled_idx, size=idx.size, replace=True)
                    else:
                        lab = labeled_idx
                    step = rcgan_lambda_step(records.x[idx], records.x[lab], records.labels[lab],
                                             priors, G, D, opt_d, opt_g, cfg, rng)
                else:
                    step = rcgan_disc_gen_step(records.x[idx], records.labels[idx], C, priors,
                                               G, D, opt_d, opt_g, cfg, rng)
                losses.append((step.loss_d, step.loss_g))
        except TrainingDivergedError as exc:
            logger.error("training diverged in epoch %d: %s", epoch, exc)
            raise TrainingDivergedError(str(exc), epoch=epoch, checkpoint=last_good) from exc

        loss_d, loss_g = np.mean(losses, axis=0)
        row = {'epoch': epoch, 'loss_d': float(loss_d), 'loss_g': float(loss_g)}
        if callback is not None:
            row.update(callback(epoch, G, D))
        rows.append(row)
        last_good = make_checkpoint(G, D, cfg)
        logger.info("epoch %d/%d loss_d=%.4f loss_g=%.4f", epoch, cfg.epochs, loss_d, loss_g)

    history = pd.DataFrame(rows, columns=None if rows else ['epoch', 'loss_d', 'loss_g'])
    return TrainResult(G, D, history, cfg)
