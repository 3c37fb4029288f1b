"""
Synthetic Conditional Mixture Data

Generates Gaussian-mixture datasets with known class posteriors, corrupts
their labels through an uncertainty channel or the few-label allocation
protocol, and persists them as CSV.

Key Features:
- MixtureSpec: class means, isotropic sigma per class, class priors
- Dataset: columnar records (x, observed label, labeled flag) plus the
  out-of-band ground truth kept for scoring
- apply_channel: i.i.d. corruption by a confusion matrix
- few_label_split: equal allocation of n labels across classes
- CSV persistence with a JSON sidecar describing the label space

CSV layout: x0,...,x{D-1},label,is_labeled[,true_label]; floats with 9
significant digits; labels are 0-based integers.
"""

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Union

import numpy as np
import pandas as pd

from channel import (
    ChannelSpec,
    ConfusionMatrix,
    channel_from_dict,
    channel_to_dict,
    corrupt_labels,
    make_missing_channel,
)
from errors import (
    DatasetParseError,
    DomainError,
    DoubleCorruptionError,
    InvalidSpecError,
    ShapeMismatchError,
)

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.9g'
PROTOCOLS = ('channel', 'few_label')


@dataclass(eq=False)
class MixtureSpec:
    """Ground-truth P_{X,Y}: y ~ priors, x | y ~ Normal(means[y], sigma[y]^2 I)."""
    m: int
    dim: int
    means: np.ndarray
    sigma: np.ndarray
    priors: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64).reshape(self.m, self.dim)
        self.sigma = np.broadcast_to(np.asarray(self.sigma, dtype=np.float64), (self.m,)).copy()
        self.priors = np.asarray(self.priors, dtype=np.float64).reshape(self.m)
        if not np.all(np.isfinite(self.means)):
            raise InvalidSpecError("mixture means must be finite")
        if np.any(self.sigma <= 0) or not np.all(np.isfinite(self.sigma)):
            raise InvalidSpecError("mixture sigma must be positive")
        if np.any(self.priors < 0) or abs(self.priors.sum() - 1.0) > 1e-9:
            raise InvalidSpecError("mixture priors must be nonnegative and sum to 1")


def default_mixture(m: int = 8, dim: int = 2, radius: float = 5.0,
                    sigma: float = 0.5) -> MixtureSpec:
    """m well-separated modes on a circle in the first two coordinates."""
    angles = 2 * np.pi * np.arange(m) / m
    means = np.zeros((m, dim))
    means[:, 0] = radius * np.cos(angles)
    if dim > 1:
        means[:, 1] = radius * np.sin(angles)
    return MixtureSpec(m=m, dim=dim, means=means, sigma=np.full(m, sigma),
                       priors=np.full(m, 1.0 / m))


def mixture_to_dict(spec: MixtureSpec) -> Dict:
    sigma = spec.sigma
    return {
        'm': spec.m,
        'dim': spec.dim,
        'means': spec.means.tolist(),
        'sigma': float(sigma[0]) if np.all(sigma == sigma[0]) else sigma.tolist(),
        'priors': spec.priors.tolist(),
    }


def mixture_from_dict(data: Dict) -> MixtureSpec:
    try:
        return MixtureSpec(m=int(data['m']), dim=int(data['dim']), means=data['means'],
                           sigma=data['sigma'], priors=data['priors'])
    except (KeyError, TypeError) as exc:
        raise InvalidSpecError(f"malformed mixture object: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, InvalidSpecError):
            raise
        raise InvalidSpecError(f"malformed mixture object: {exc}") from exc


def mixture_from_config(cfg: Dict) -> MixtureSpec:
    """Explicit mixture object, or {"kind": "default", "m", "dim", "radius", "sigma"}."""
    if cfg.get('kind', 'explicit') == 'default':
        return default_mixture(m=int(cfg.get('m', 8)), dim=int(cfg.get('dim', 2)),
                               radius=float(cfg.get('radius', 5.0)),
                               sigma=float(cfg.get('sigma', 0.5)))
    if 'kind' in cfg and cfg['kind'] != 'explicit':
        raise InvalidSpecError(f"unknown mixture kind {cfg['kind']!r}")
    return mixture_from_dict(cfg)


@dataclass(eq=False)
class Dataset:
    """Records with observed labels in 0..m+m_tilde-1.

    is_labeled is derived: a record is labeled iff its observed label is a class label.
    """
    x: np.ndarray
    labels: np.ndarray
    m: int
    m_tilde: int = 0
    channel: Optional[ChannelSpec] = None
    true_labels: Optional[np.ndarray] = None
    protocol: Optional[str] = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ShapeMismatchError(f"x must be (n, dim), got shape {self.x.shape}")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.size != self.x.shape[0]:
            raise ShapeMismatchError(f"{self.x.shape[0]} points but {self.labels.size} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_labels):
            raise InvalidSpecError(f"labels must lie in 0..{self.n_labels - 1}")
        if self.channel is None and self.m_tilde == 0 and np.any(self.labels >= self.m):
            raise InvalidSpecError("an uncorrupted dataset carries class labels only")
        if self.channel is not None and (self.channel.m, self.channel.m_tilde) != (self.m, self.m_tilde):
            raise ShapeMismatchError("dataset label space does not match its channel")
        if self.true_labels is not None:
            self.true_labels = np.asarray(self.true_labels, dtype=np.int64).reshape(-1)
            if self.true_labels.size != self.labels.size:
                raise ShapeMismatchError("true_labels length differs from labels")
            if self.true_labels.size and (self.true_labels.min() < 0
                                          or self.true_labels.max() >= self.m):
                raise InvalidSpecError(f"true labels must lie in 0..{self.m - 1}")
        if self.protocol is not None and self.protocol not in PROTOCOLS:
            raise InvalidSpecError(f"unknown protocol {self.protocol!r}")

    def __len__(self) -> int:
        return int(self.labels.size)

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def n_labels(self) -> int:
        return self.m + self.m_tilde

    @property
    def is_labeled(self) -> np.ndarray:
        return self.labels < self.m

    @property
    def is_corrupted(self) -> bool:
        return self.channel is not None or self.m_tilde > 0

    def ground_truth(self) -> np.ndarray:
        """True class labels: the out-of-band copy, or the labels of an uncorrupted set."""
        if self.true_labels is not None:
            return self.true_labels
        if not self.is_corrupted:
            return self.labels
        raise DomainError("corrupted dataset carries no ground-truth labels")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.x, columns=[f'x{j}' for j in range(self.dim)])
        frame['label'] = self.labels
        frame['is_labeled'] = self.is_labeled.astype(np.int64)
        if self.true_labels is not None:
            frame['true_label'] = self.true_labels
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, m: int, m_tilde: int = 0,
                   channel: Optional[ChannelSpec] = None,
                   protocol: Optional[str] = None) -> 'Dataset':
        x_cols = [c for c in frame.columns if re.fullmatch(r'x\d+', str(c))]
        true = frame['true_label'].to_numpy() if 'true_label' in frame.columns else None
        return cls(x=frame[x_cols].to_numpy(dtype=np.float64).reshape(len(frame), len(x_cols)),
                   labels=frame['label'].to_numpy(), m=m, m_tilde=m_tilde,
                   channel=channel, true_labels=true, protocol=protocol)


# ============================================================================
# Generation and corruption
# ============================================================================


def generate_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator) -> Dataset:
    """n i.i.d. draws of (x, y) from the mixture."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    ys = rng.choice(spec.m, size=n, p=spec.priors)
    noise = rng.standard_normal((n, spec.dim))
    xs = spec.means[ys] + spec.sigma[ys][:, None] * noise
    return Dataset(x=xs, labels=ys, m=spec.m)


def apply_channel(ds: Dataset, C: ConfusionMatrix, rng: np.random.Generator) -> Dataset:
    """Replace every label by a draw from its confusion row; x and order untouched."""
    if ds.is_corrupted:
        raise DoubleCorruptionError("dataset labels are already corrupted")
    if C.m != ds.m:
        raise ShapeMismatchError(f"channel has {C.m} classes, dataset has {ds.m}")
    observed = corrupt_labels(C, ds.labels, rng)
    spec = ChannelSpec(m=C.m, m_tilde=C.m_tilde, alphas=C.alphas())
    logger.info("corrupted %d records: %d keep a class label", len(ds), int((observed < ds.m).sum()))
    return Dataset(x=ds.x.copy(), labels=observed, m=ds.m, m_tilde=C.m_tilde, channel=spec,
                   true_labels=ds.labels.copy(), protocol='channel')


def few_label_split(ds: Dataset, n_labels: int, rng: np.random.Generator) -> Dataset:
    """Keep exactly n_labels / m class labels per class; everything else goes missing.

    Within each class the kept records are chosen uniformly at random. The
    attached channel records the resulting per-class erasure rate.
    """
    if ds.is_corrupted:
        raise DoubleCorruptionError("few-label split needs an uncorrupted dataset")
    if n_labels < 0 or n_labels % ds.m:
        raise DomainError(f"n_labels={n_labels} is not a nonnegative multiple of m={ds.m}")
    per_class = n_labels // ds.m
    observed = np.full(len(ds), ds.m, dtype=np.int64)
    erasure = []
    for cls in range(ds.m):
        members = np.flatnonzero(ds.labels == cls)
        if members.size < per_class:
            raise DomainError(f"class {cls} has {members.size} records, needs {per_class}")
        keep = rng.choice(members, size=per_class, replace=False)
        observed[keep] = cls
        erasure.append(1.0 - per_class / members.size if members.size else 1.0)
    return Dataset(x=ds.x.copy(), labels=observed, m=ds.m, m_tilde=1,
                   channel=make_missing_channel(erasure), true_labels=ds.labels.copy(),
                   protocol='few_label')


def labeled_subset(ds: Dataset) -> Dataset:
    """The class-labeled records only, as an uncorrupted dataset."""
    keep = ds.is_labeled
    true = ds.true_labels[keep] if ds.true_labels is not None else None
    return Dataset(x=ds.x[keep], labels=ds.labels[keep], m=ds.m, true_labels=true)


# ============================================================================
# Persistence
# ============================================================================


def sidecar_path(path: Union[str, Path]) -> Path:
    return Path(str(path) + '.meta.json')


def write_dataset(ds: Dataset, path: Union[str, Path]):
    """Write the CSV and its `<path>.meta.json` sidecar."""
    path = Path(path)
    ds.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    meta = {
        'm': ds.m,
        'm_tilde': ds.m_tilde,
        'channel': channel_to_dict(ds.channel) if ds.channel is not None else None,
        'protocol': ds.protocol,
    }
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True, indent=2) + '\n')


def _first_bad_line(mask: np.ndarray) -> int:
    # +2: one for the header, one for 1-based numbering
    return int(np.flatnonzero(mask)[0]) + 2


def _integer_column(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors='coerce').to_numpy(dtype=np.float64)
    bad = ~np.isfinite(values) | (values != np.round(values))
    if np.any(bad):
        line = _first_bad_line(bad)
        raise DatasetParseError(f"{column} {frame[column].iloc[line - 2]!r} is not an integer", line)
    return values.astype(np.int64)


def read_dataset(path: Union[str, Path], m: Optional[int] = None,
                 m_tilde: Optional[int] = None) -> Dataset:
    """Read a dataset written by write_dataset.

    The label space comes from the sidecar when present, otherwise from the
    explicit m / m_tilde arguments.

    Raises:
        DatasetParseError: malformed file; the message names the offending line
    """
    path = Path(path)
    channel = None
    protocol = None
    meta_file = sidecar_path(path)
    if meta_file.exists():
        try:
            meta = json.loads(meta_file.read_text())
        except json.JSONDecodeError as exc:
            raise DatasetParseError(f"{meta_file.name}: {exc}") from exc
        m = meta['m'] if m is None else m
        m_tilde = meta.get('m_tilde', 0) if m_tilde is None else m_tilde
        if meta.get('channel') is not None:
            channel = channel_from_dict(meta['channel'])
        protocol = meta.get('protocol')
    if m is None:
        raise InvalidSpecError(f"class count unknown for {path}: no sidecar and no m given")
    m_tilde = m_tilde or 0

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        found = re.search(r'line (\d+)', str(exc))
        raise DatasetParseError(str(exc), int(found.group(1)) if found else None) from exc
    except pd.errors.EmptyDataError as exc:
        raise DatasetParseError("file has no header", 1) from exc

    columns = list(frame.columns)
    n_x = sum(1 for c in columns if re.fullmatch(r'x\d+', c))
    expected = [f'x{j}' for j in range(n_x)] + ['label', 'is_labeled']
    if columns not in (expected, expected + ['true_label']) or n_x == 0:
        raise DatasetParseError(f"unexpected header {','.join(columns)}", 1)

    x = frame[expected[:n_x]].apply(pd.to_numeric, errors='coerce').to_numpy(dtype=np.float64)
    bad_x = ~np.all(np.isfinite(x), axis=1) if len(frame) else np.zeros(0, dtype=bool)
    if np.any(bad_x):
        raise DatasetParseError("non-numeric or non-finite coordinate", _first_bad_line(bad_x))

    labels = _integer_column(frame, 'label')
    out_of_range = (labels < 0) | (labels >= m + m_tilde)
    if np.any(out_of_range):
        line = _first_bad_line(out_of_range)
        raise DatasetParseError(
            f"label {labels[line - 2]} outside 0..{m + m_tilde - 1}", line)
    flags = _integer_column(frame, 'is_labeled')
    inconsistent = (flags != (labels < m).astype(np.int64))
    if np.any(inconsistent):
        raise DatasetParseError("is_labeled disagrees with the label", _first_bad_line(inconsistent))

    true = None
    if 'true_label' in columns:
        true = _integer_column(frame, 'true_label')
        bad_true = (true < 0) | (true >= m)
        if np.any(bad_true):
            raise DatasetParseError("true_label is not a class label", _first_bad_line(bad_true))

    parsed = pd.DataFrame(x.reshape(len(frame), n_x), columns=expected[:n_x])
    parsed['label'] = labels
    if true is not None:
        parsed['true_label'] = true
    return Dataset.from_frame(parsed, m, m_tilde, channel=channel, protocol=protocol)
