"""
Command-line front door for the robust conditional GAN toolkit.

    python cli.py verify-bounds --trials 1000 --seed 7
    python cli.py gen-data --out-dir runs/demo
    python cli.py corrupt --data runs/demo/data.csv --alpha 0.5 --out-dir runs/demo
    python cli.py train --data runs/demo/corrupted.csv --out-dir runs/demo
    python cli.py eval --checkpoint runs/demo/checkpoint.json --data runs/demo/corrupted.csv
    python cli.py sweep --alphas 1.0,0.5,0.2 --out-dir runs/sweep

Exit codes: 0 success, 1 usage / I/O / config error, 2 verification failure
or training divergence. Every run writes <out-dir>/manifest.json.
"""

import argparse
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from channel import (
    build_confusion,
    channel_from_config,
    confusion_to_dict,
    labeled_fraction_channel,
)
from config import SEED_ENV_VAR, dump_json, init_config_file, load_config, resolve_config
from data import (
    FLOAT_FORMAT,
    Dataset,
    MixtureSpec,
    apply_channel,
    few_label_split,
    generate_mixture,
    mixture_from_config,
    mixture_to_dict,
    read_dataset,
    write_dataset,
)
from divergence import BoundReport, SweepLimits, run_bound_sweep
from errors import RCGANError, TrainingDivergedError
from evaluation import (
    BayesOracle,
    RecoveryOptions,
    evaluate_generator,
    generated_label_accuracy,
    result_records,
)
from gan import TrainConfig, load_checkpoint, save_checkpoint, train

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FAILED = 2

SWEEP_COLUMNS = ['alpha', 'gen_label_acc', 'label_recovery_acc', 'seed']
FEW_LABEL_COLUMNS = ['n_labels', 'method', 'gen_label_acc_mean', 'gen_label_acc_se',
                     'label_recovery_acc_mean', 'label_recovery_acc_se', 'trials']


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors exit 1, not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _float_list(text: str) -> List[float]:
    return [float(part) for part in text.split(',') if part.strip()]


def _int_list(text: str) -> List[int]:
    return [int(part) for part in text.split(',') if part.strip()]


# ============================================================================
# Shared plumbing
# ============================================================================


class Run:
    """One CLI invocation: resolved config, output directory and manifest."""

    def __init__(self, command: str, args: argparse.Namespace, overrides: Dict):
        self.command = command
        self.started = time.perf_counter()
        file_config = load_config(args.config) if args.config else {}
        self.config = resolve_config(file_config, overrides)
        self.seed = self.config['seed']
        self.out_dir = Path(args.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts: List[str] = []

    def path(self, explicit: Optional[str], default_name: str) -> Path:
        return Path(explicit) if explicit else self.out_dir / default_name

    def record(self, path: Path) -> Path:
        self.artifacts.append(str(path))
        return path

    def write_text(self, path: Path, text: str) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='\n') as file:
            file.write(text)
        return self.record(path)

    def write_frame(self, path: Path, frame: pd.DataFrame) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return self.record(path)

    def finish(self, extra: Optional[Dict] = None):
        manifest = {
            'command': self.command,
            'config': self.config,
            'seed': self.seed,
            'artifacts': self.artifacts,
            'duration_s': round(time.perf_counter() - self.started, 3),
        }
        if extra:
            manifest.update(extra)
        (self.out_dir / 'manifest.json').write_text(dump_json(manifest))


def _mixture(run: Run, path: Optional[str]) -> MixtureSpec:
    if path:
        return mixture_from_config(load_config(path))
    return mixture_from_config(run.config['data']['mixture'])


def _recovery_options(run: Run, seed: int) -> RecoveryOptions:
    return RecoveryOptions(seed=seed, **run.config['eval']['recovery'])


def _train_config(run: Run, seed: int, **changes) -> TrainConfig:
    return TrainConfig.from_dict({**run.config['train'], **changes}, seed=seed)


def _evaluate(run: Run, result, ds: Dataset, mixture: MixtureSpec, seed: int) -> Dict:
    oracle = BayesOracle(mixture)
    return evaluate_generator(result.generator, ds, oracle, run.config['eval']['n'],
                              mixture.priors, _recovery_options(run, seed), seed,
                              run.config['eval']['n_recovery'])


# ============================================================================
# Subcommands
# ============================================================================


def cmd_verify_bounds(args) -> int:
    run = Run('verify-bounds', args, {'seed': args.seed, 'verify': {'trials': args.trials}})
    verify = run.config['verify']
    limits = SweepLimits(**{f.name: verify[f.name] for f in fields(SweepLimits)})
    if args.identity:
        limits = replace(limits, max_mass=0.0)

    frame = run_bound_sweep(verify['trials'], run.seed, limits, kappa_scale=args.kappa_scale)
    reports = [BoundReport(**row).to_dict() for row in frame.to_dict('records')]
    failures = [r for r in reports if not r['passed']]
    worst = float(frame['slack'].min())
    summary = {
        'trials': verify['trials'],
        'seed': run.seed,
        'kappa_scale': args.kappa_scale,
        'all_passed': not failures,
        'worst_slack': worst,
        'failures': len(failures),
        'reports': reports,
    }
    run.write_text(run.path(args.report, 'bounds_report.json'), dump_json(summary))
    run.finish()

    print(f"{len(reports)} chains over {verify['trials']} instances, worst slack {worst:.3g}")
    for failure in failures:
        print(f"FAILED instance {failure['instance_seed']}: {failure['label']} "
              f"{failure['kind']} chain {failure['chain']}", file=sys.stderr)
    return EXIT_FAILED if failures else EXIT_OK


def cmd_gen_data(args) -> int:
    run = Run('gen-data', args, {'seed': args.seed, 'data': {'n': args.n}})
    mixture = _mixture(run, args.mixture)
    ds = generate_mixture(mixture, run.config['data']['n'], np.random.default_rng(run.seed))
    out = run.path(args.out, 'data.csv')
    write_dataset(ds, out)
    run.record(out)
    run.write_text(run.path(args.mixture_out, 'mixture.json'), dump_json(mixture_to_dict(mixture)))
    run.finish()
    print(f"wrote {len(ds)} records to {out}")
    return EXIT_OK


def _channel_overrides(args) -> Optional[Dict]:
    if args.kind is None and args.alpha is None and args.fraction is None:
        return None
    channel = {'kind': args.kind or 'missing'}
    if args.alpha is not None:
        channel['alpha'] = args.alpha
    if args.fraction is not None:
        channel['fraction'] = args.fraction
    return channel


def cmd_corrupt(args) -> int:
    run = Run('corrupt', args, {'seed': args.seed, 'channel': _channel_overrides(args)})
    ds = read_dataset(args.data)
    C = build_confusion(channel_from_config(run.config['channel'], m=ds.m))
    corrupted = apply_channel(ds, C, np.random.default_rng(run.seed))
    out = run.path(args.out, 'corrupted.csv')
    write_dataset(corrupted, out)
    run.record(out)
    run.write_text(run.out_dir / 'confusion.json', dump_json(confusion_to_dict(C)))
    run.finish({'protocol': 'channel'})
    print(f"corrupted {len(corrupted)} records, {int(corrupted.is_labeled.sum())} still labeled")
    return EXIT_OK


def cmd_split(args) -> int:
    run = Run('split', args, {'seed': args.seed})
    ds = read_dataset(args.data)
    split = few_label_split(ds, args.n_labels, np.random.default_rng(run.seed))
    out = run.path(args.out, 'few_labels.csv')
    write_dataset(split, out)
    run.record(out)
    run.finish({'protocol': 'few_label', 'n_labels': args.n_labels})
    print(f"kept {args.n_labels} labels out of {len(split)} records")
    return EXIT_OK


def cmd_train(args) -> int:
    overrides = {'seed': args.seed, 'train': {'epochs': args.epochs, 'mode': args.mode,
                                              'phi': args.phi, 'lam': args.lam,
                                              'warmup_steps': args.warmup_steps}}
    run = Run('train', args, overrides)
    ds = read_dataset(args.data)
    mixture = _mixture(run, args.mixture)
    cfg = _train_config(run, run.seed)

    callback = None
    if args.track_accuracy:
        oracle = BayesOracle(mixture)

        def callback(epoch, G, D):
            rng = np.random.default_rng(run.seed + epoch)
            return {'gen_label_acc': generated_label_accuracy(G, oracle, run.config['eval']['n'],
                                                              mixture.priors, rng)}

    ckpt_path = run.path(args.checkpoint, 'checkpoint.json')
    try:
        result = train(cfg, ds, mixture.priors, callback=callback)
    except TrainingDivergedError as exc:
        run.write_text(ckpt_path, dump_json(exc.checkpoint))
        run.finish({'diverged_epoch': exc.epoch})
        print(f"training diverged in epoch {exc.epoch}; last good checkpoint in {ckpt_path}",
              file=sys.stderr)
        return EXIT_FAILED

    save_checkpoint(ckpt_path, result.generator, result.discriminator, cfg)
    run.record(ckpt_path)
    run.write_frame(run.path(args.history, 'history.csv'), result.history)
    run.finish({'protocol': ds.protocol})
    print(f"trained {cfg.epochs} epochs ({cfg.mode}); checkpoint in {ckpt_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    run = Run('eval', args, {'seed': args.seed, 'eval': {'n': args.n, 'n_recovery': args.n_recovery}})
    G, _, _ = load_checkpoint(args.checkpoint)
    ds = read_dataset(args.data)
    mixture = _mixture(run, args.mixture)
    oracle = BayesOracle(mixture)
    oracle.self_test(10_000, np.random.default_rng(run.seed))
    summary = evaluate_generator(G, ds, oracle, run.config['eval']['n'], mixture.priors,
                                 _recovery_options(run, run.seed), run.seed,
                                 run.config['eval']['n_recovery'])
    run.write_text(run.path(args.results, 'results.json'), dump_json(result_records(summary)))
    run.finish()
    print(f"gen_label_acc={summary['gen_label_acc']:.4f} "
          f"label_recovery_acc={summary['label_recovery_acc']:.4f}")
    return EXIT_OK


def _sweep_row(run: Run, mixture: MixtureSpec, alpha: float, seed: int) -> Dict:
    rng = np.random.default_rng(seed)
    clean = generate_mixture(mixture, run.config['data']['n'], rng)
    C = build_confusion(labeled_fraction_channel(mixture.m, alpha))
    ds = apply_channel(clean, C, rng)
    result = train(_train_config(run, seed, mode='rcgan'), ds, mixture.priors, C)
    metrics = _evaluate(run, result, ds, mixture, seed)
    return {'alpha': alpha, 'gen_label_acc': metrics['gen_label_acc'],
            'label_recovery_acc': metrics['label_recovery_acc'], 'seed': seed}


def cmd_sweep(args) -> int:
    alphas = _float_list(args.alphas) if args.alphas is not None else None
    run = Run('sweep', args, {'seed': args.seed, 'data': {'n': args.n},
                              'train': {'epochs': args.epochs}, 'sweep': {'alphas': alphas}})
    mixture = _mixture(run, args.mixture)

    rows = []
    diverged = False
    for index, alpha in enumerate(run.config['sweep']['alphas']):
        seed = run.seed + index
        try:
            rows.append(_sweep_row(run, mixture, alpha, seed))
        except TrainingDivergedError as exc:
            logger.error("alpha=%g diverged: %s", alpha, exc)
            diverged = True
            rows.append({'alpha': alpha, 'gen_label_acc': np.nan,
                         'label_recovery_acc': np.nan, 'seed': seed})
        logger.info("alpha=%g done", alpha)

    out = run.write_frame(run.path(args.out, 'sweep.csv'), pd.DataFrame(rows, columns=SWEEP_COLUMNS))
    run.finish()
    print(f"{len(rows)} sweep rows written to {out}")
    return EXIT_FAILED if diverged else EXIT_OK


def _few_label_trial(run: Run, mixture: MixtureSpec, n_labels: int, seed: int) -> List[Dict]:
    rng = np.random.default_rng(seed)
    clean = generate_mixture(mixture, run.config['data']['n'], rng)
    split = few_label_split(clean, n_labels, rng)
    rows = []
    for method, mode in (('rcgan_lambda', 'lambda'), ('labeled_only', 'labeled_only')):
        result = train(_train_config(run, seed, mode=mode), split, mixture.priors)
        metrics = _evaluate(run, result, split, mixture, seed)
        rows.append({'n_labels': n_labels, 'method': method,
                     'gen_label_acc': metrics['gen_label_acc'],
                     'label_recovery_acc': metrics['label_recovery_acc']})
    return rows


def summarize_trials(trials: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error over seeds per (n_labels, method), input order kept."""
    if trials.empty:
        return pd.DataFrame(columns=FEW_LABEL_COLUMNS)
    grouped = trials.groupby(['n_labels', 'method'], sort=False)
    summary = grouped.agg(
        gen_label_acc_mean=('gen_label_acc', 'mean'),
        gen_label_acc_se=('gen_label_acc', 'sem'),
        label_recovery_acc_mean=('label_recovery_acc', 'mean'),
        label_recovery_acc_se=('label_recovery_acc', 'sem'),
        trials=('gen_label_acc', 'size'),
    ).reset_index()
    return summary.fillna({'gen_label_acc_se': 0.0, 'label_recovery_acc_se': 0.0})[FEW_LABEL_COLUMNS]


def cmd_few_labels(args) -> int:
    n_labels = _int_list(args.n_labels) if args.n_labels is not None else None
    run = Run('few-labels', args, {'seed': args.seed, 'data': {'n': args.n},
                                   'train': {'epochs': args.epochs,
                                             'warmup_steps': args.warmup_steps},
                                   'few_labels': {'n_labels': n_labels, 'trials': args.trials}})
    mixture = _mixture(run, args.mixture)
    settings = run.config['few_labels']

    rows = []
    for count in settings['n_labels']:
        for trial in range(settings['trials']):
            try:
                rows += _few_label_trial(run, mixture, count, run.seed + trial)
            except TrainingDivergedError as exc:
                logger.error("n_labels=%d trial %d diverged: %s", count, trial, exc)
                run.write_frame(run.path(args.out, 'few_labels.csv'),
                                summarize_trials(pd.DataFrame(rows)))
                run.finish()
                return EXIT_FAILED

    table = summarize_trials(pd.DataFrame(rows))
    out = run.write_frame(run.path(args.out, 'few_labels.csv'), table)
    run.finish()
    print(table.to_string(index=False))
    print(f"written to {out}")
    return EXIT_OK


def cmd_init_config(args) -> int:
    if init_config_file(args.path):
        print(f"created {args.path} with default settings")
    else:
        print(f"{args.path} already exists; left unchanged")
    return EXIT_OK


# ============================================================================
# Parser
# ============================================================================


def _common(sub: argparse.ArgumentParser, default_out: str):
    sub.add_argument('--config', help="JSON or YAML config file (CLI flags override it)")
    sub.add_argument('--seed', type=int,
                     help=f"random seed (falls back to the config, then ${SEED_ENV_VAR}, then 0)")
    sub.add_argument('--out-dir', default=default_out,
                     help=f"directory for artifacts and manifest.json (default: {default_out})")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='cli.py', description="Robust conditional GAN toolkit")
    level = parser.add_mutually_exclusive_group()
    level.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    level.add_argument('-q', '--quiet', action='store_true', help="warnings and errors only")
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    sub = commands.add_parser('verify-bounds', help="randomized check of the divergence bounds")
    _common(sub, 'runs/verify')
    sub.add_argument('--trials', type=int, help="number of random instances (default 1000)")
    sub.add_argument('--report', help="report path (default: <out-dir>/bounds_report.json)")
    sub.add_argument('--identity', action='store_true',
                     help="force identity channels (every kappa equals 1)")
    sub.add_argument('--kappa-scale', type=float, default=1.0,
                     help="test hook: multiply every kappa by this factor (values < 1 inject failures)")
    sub.set_defaults(handler=cmd_verify_bounds)

    sub = commands.add_parser('gen-data', help="sample a Gaussian-mixture dataset")
    _common(sub, 'runs/data')
    sub.add_argument('--n', type=int, help="number of records (default 8000)")
    sub.add_argument('--mixture', help="mixture JSON (default: the config's mixture)")
    sub.add_argument('--out', help="dataset CSV (default: <out-dir>/data.csv)")
    sub.add_argument('--mixture-out', help="mixture JSON copy (default: <out-dir>/mixture.json)")
    sub.set_defaults(handler=cmd_gen_data)

    sub = commands.add_parser('corrupt', help="corrupt labels through an uncertainty channel")
    _common(sub, 'runs/data')
    sub.add_argument('--data', required=True, help="uncorrupted dataset CSV")
    sub.add_argument('--kind', choices=['identity', 'missing', 'complementary', 'labeled_fraction'],
                     help="channel kind (group channels come from the config file)")
    sub.add_argument('--alpha', type=float, help="uncertain-label probability")
    sub.add_argument('--fraction', type=float, help="labeled fraction for kind labeled_fraction")
    sub.add_argument('--out', help="corrupted CSV (default: <out-dir>/corrupted.csv)")
    sub.set_defaults(handler=cmd_corrupt)

    sub = commands.add_parser('split', help="few-label allocation: n_labels/m labels per class")
    _common(sub, 'runs/data')
    sub.add_argument('--data', required=True, help="uncorrupted dataset CSV")
    sub.add_argument('--n-labels', type=int, required=True, help="total labels kept (multiple of m)")
    sub.add_argument('--out', help="output CSV (default: <out-dir>/few_labels.csv)")
    sub.set_defaults(handler=cmd_split)

    sub = commands.add_parser('train', help="train a generator/discriminator pair")
    _common(sub, 'runs/train')
    sub.add_argument('--data', required=True, help="dataset CSV with its .meta.json sidecar")
    sub.add_argument('--mixture', help="mixture JSON supplying P_Y (default: the config's mixture)")
    sub.add_argument('--epochs', type=int, help="training epochs")
    sub.add_argument('--mode', choices=['rcgan', 'lambda', 'labeled_only'], help="training loss")
    sub.add_argument('--phi', choices=['linear', 'log'], help="loss function family")
    sub.add_argument('--lam', type=float, help="lambda weight of RCGAN(lambda)")
    sub.add_argument('--warmup-steps', type=int,
                     help="labeled conditional steps before RCGAN(lambda) training")
    sub.add_argument('--track-accuracy', action='store_true',
                     help="add a gen_label_acc column to the history")
    sub.add_argument('--checkpoint', help="checkpoint path (default: <out-dir>/checkpoint.json)")
    sub.add_argument('--history', help="history CSV (default: <out-dir>/history.csv)")
    sub.set_defaults(handler=cmd_train)

    sub = commands.add_parser('eval', help="generated label and label recovery accuracy")
    _common(sub, 'runs/eval')
    sub.add_argument('--checkpoint', required=True, help="checkpoint JSON written by train")
    sub.add_argument('--data', required=True, help="dataset carrying ground-truth labels")
    sub.add_argument('--mixture', help="mixture JSON for the Bayes oracle")
    sub.add_argument('--n', type=int, help="generated samples for generated label accuracy")
    sub.add_argument('--n-recovery', type=int, help="records scored for label recovery")
    sub.add_argument('--results', help="results JSON (default: <out-dir>/results.json)")
    sub.set_defaults(handler=cmd_eval)

    sub = commands.add_parser('sweep', help="train and evaluate across labeled fractions")
    _common(sub, 'runs/sweep')
    sub.add_argument('--alphas', help="comma-separated labeled fractions in (0, 1]")
    sub.add_argument('--n', type=int, help="records per run")
    sub.add_argument('--epochs', type=int, help="training epochs per run")
    sub.add_argument('--mixture', help="mixture JSON")
    sub.add_argument('--out', help="sweep CSV (default: <out-dir>/sweep.csv)")
    sub.set_defaults(handler=cmd_sweep)

    sub = commands.add_parser('few-labels', help="RCGAN(lambda) against the labeled-only baseline")
    _common(sub, 'runs/few_labels')
    sub.add_argument('--n-labels', help="comma-separated label budgets (multiples of m)")
    sub.add_argument('--trials', type=int, help="seeds per budget")
    sub.add_argument('--n', type=int, help="records per run")
    sub.add_argument('--epochs', type=int, help="training epochs per run")
    sub.add_argument('--warmup-steps', type=int,
                     help="labeled conditional steps before each RCGAN(lambda) run")
    sub.add_argument('--mixture', help="mixture JSON")
    sub.add_argument('--out', help="table CSV (default: <out-dir>/few_labels.csv)")
    sub.set_defaults(handler=cmd_few_labels)

    sub = commands.add_parser('init-config', help="write the default config file")
    sub.add_argument('--path', default='rcgan_config.json', help="where to write it")
    sub.set_defaults(handler=cmd_init_config)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    try:
        return args.handler(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_ERROR
    except (RCGANError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
