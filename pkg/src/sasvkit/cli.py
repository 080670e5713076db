"""Command-line interface: ``sasv <subcommand> ...``.

Data goes to files or standard output, diagnostics to standard error.  Each
subcommand that writes a file also writes ``<output>.manifest.json`` beside
it; ``sasv replay <manifest>`` re-runs the recorded command line.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from typing import Callable

import numpy as np

from . import __version__
from .cascade import CascadeConfig, CascadeOrder, cascade_scores
from .fusion import (
    FusionModel,
    apply_fusion_model,
    fit_linear_calibration,
    fuse_product_sigmoid,
    fuse_sum,
)
from .metrics import TASKS, EerResult, eer_report
from .trials import (
    ScoreSet,
    format_score_file,
    format_trial_list,
    join,
    parse_score_file,
    parse_trial_list,
    read_text,
)
from .lab import data as labdata
from .lab.encoder import ToyEncoder
from .lab.ersa import compute_centers
from .lab.losses import gradient_check
from .lab.synth import SynthConfig, TrialFixtureConfig, make_cm_dataset, make_trial_fixture
from .lab.training import TrainConfig, cm_scores, finetune_ersa, select_bonafide_subset, train

log = logging.getLogger("sasvkit")

MANIFEST_SUFFIX = ".manifest.json"


class CliError(Exception):
    pass


# -- manifest ---------------------------------------------------------------

class Run:
    """Collects the inputs, config and outputs of one invocation."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.args = args
        self.argv = argv
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []

    def read(self, role: str, path: str) -> str:
        try:
            text = read_text(path)
        except OSError as exc:
            raise CliError(f"cannot read {role} {path!r}: {exc.strerror or exc}") from None
        self.inputs[role] = {
            "path": path if path == "-" else os.path.abspath(path),
            "sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        }
        return text

    def write(self, path: str, text: str) -> None:
        if path == "-":
            sys.stdout.write(text)
            return
        parent = os.path.dirname(os.path.abspath(path))
        if not os.path.isdir(parent):
            raise CliError(f"output directory {parent!r} does not exist")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.outputs.append(os.path.abspath(path))

    def manifest(self) -> dict:
        config = {k: v for k, v in sorted(vars(self.args).items()) if k != "func"}
        return {
            "tool": "sasvkit",
            "version": __version__,
            "subcommand": self.args.command,
            "argv": self.argv,
            "inputs": self.inputs,
            "config": config,
            "outputs": self.outputs,
        }

    def write_manifest(self, path: str | None) -> None:
        if path is None or path == "-":
            return
        text = json.dumps(self.manifest(), indent=2, sort_keys=True, default=str) + "\n"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _manifest_path(args) -> str | None:
    if getattr(args, "manifest", None):
        return args.manifest
    out = getattr(args, "output", None)
    if out and out != "-":
        return out + MANIFEST_SUFFIX
    out_dir = getattr(args, "out_dir", None)
    if out_dir:
        return os.path.join(out_dir, "manifest.json")
    return None


# -- helpers ----------------------------------------------------------------

def _fmt_pct(res: EerResult) -> str:
    return f"{res.percent:.3f}"


def _report_lines(report: dict[str, EerResult], prefix: str = "") -> str:
    return "".join(f"{prefix}{name}-EER {_fmt_pct(res)}\n" for name, res in report.items())


def _report_json(report: dict[str, EerResult]) -> dict:
    return {
        name: {
            "eer": r.eer,
            "eer_percent": r.percent,
            "threshold": r.threshold,
            "n_positive": r.n_positive,
            "n_negative": r.n_negative,
        }
        for name, r in report.items()
    }


def _load_trials(run: Run, role: str, path: str):
    try:
        return parse_trial_list(run.read(role, path))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_scores(run: Run, role: str, path: str, name: str) -> ScoreSet:
    try:
        return parse_score_file(run.read(role, path), name)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _system_names(paths: list[str]) -> list[str]:
    names = []
    for i, p in enumerate(paths):
        base = os.path.splitext(os.path.basename(p))[0] or f"sys{i}"
        names.append(base if base not in names else f"{base}-{i}")
    return names


def _load_dataset(run: Run, role: str, path: str, with_ids: bool = False):
    try:
        return labdata.parse_dataset(run.read(role, path), with_ids=with_ids)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _load_encoder(run: Run, path: str) -> ToyEncoder:
    try:
        return ToyEncoder.from_text(run.read("encoder", path))
    except ValueError as exc:
        raise CliError(f"{path}: {exc}") from None


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        lam=args.lam, batch_size=args.batch_size, epochs=args.epochs, lr=args.lr,
        lr_decay=args.lr_decay, optimizer=args.optimizer, seed=args.seed,
        hidden=getattr(args, "hidden", 16), emb_dim=getattr(args, "emb_dim", 8),
    )


# -- subcommands ------------------------------------------------------------

def cmd_eer(run: Run, args) -> None:
    trials = _load_trials(run, "trials", args.trials)
    scores = _load_scores(run, "scores", args.scores, "score")
    data = join(trials, [scores])
    report = eer_report(data, "score")
    if args.json:
        run.write("-", json.dumps(_report_json(report), indent=2, sort_keys=True) + "\n")
    else:
        run.write("-", _report_lines(report))


def cmd_fuse(run: Run, args) -> None:
    if args.method == "calibrated" and not args.model:
        raise CliError("--method calibrated requires --model")
    trials = _load_trials(run, "trials", args.trials)
    names = _system_names(args.scores)
    sets = [_load_scores(run, f"scores[{i}]", p, n) for i, (p, n) in enumerate(zip(args.scores, names))]
    data = join(trials, sets)
    if args.method == "sum":
        fused = fuse_sum(data.columns)
    elif args.method == "sigmoid-product":
        fused = fuse_product_sigmoid(data.columns)
    else:
        try:
            model = FusionModel.from_json(run.read("model", args.model))
        except (KeyError, ValueError) as exc:
            raise CliError(f"{args.model}: invalid fusion model ({exc})") from None
        fused = apply_fusion_model(model, data.columns)
    run.write(args.output, format_score_file(fused, data.keys))


def cmd_calibrate(run: Run, args) -> None:
    trials = _load_trials(run, "trials", args.trials)
    names = _system_names(args.scores)
    sets = [_load_scores(run, f"scores[{i}]", p, n) for i, (p, n) in enumerate(zip(args.scores, names))]
    data = join(trials, sets)
    model, trace = fit_linear_calibration(data, TASKS[args.task.upper()], args.prior)
    log.info("calibration: %d iterations, gradient norm %.3g", trace.iterations, trace.grad_norm)
    run.write(args.output, model.to_json())


def cmd_cascade(run: Run, args) -> None:
    order = CascadeOrder(args.order)
    dev_trials = _load_trials(run, "dev-trials", args.dev_trials)
    dev = join(dev_trials, [
        _load_scores(run, "dev-sv", args.dev_sv, "sv"),
        _load_scores(run, "dev-cm", args.dev_cm, "cm"),
    ])
    ev_trials = _load_trials(run, "eval-trials", args.eval_trials)
    ev = join(ev_trials, [
        _load_scores(run, "eval-sv", args.eval_sv, "sv"),
        _load_scores(run, "eval-cm", args.eval_cm, "cm"),
    ])
    config = CascadeConfig.from_dev(order, dev, "sv", "cm", args.epsilon)
    dev_out = cascade_scores(config, dev.column("sv"), dev.column("cm"))
    ev_out = cascade_scores(config, ev.column("sv"), ev.column("cm"))
    if args.dev_output:
        run.write(args.dev_output, format_score_file(dev_out, dev.keys))
    run.write(args.output, format_score_file(ev_out, ev.keys))

    reports = {}
    for part, trials, out in (("dev", dev_trials, dev_out), ("eval", ev_trials, ev_out)):
        reports[part] = eer_report(join(trials, [out]), out.system_name)
    if args.json:
        payload = {
            "order": order.value,
            "threshold": config.threshold,
            "epsilon": config.epsilon,
            **{part: _report_json(r) for part, r in reports.items()},
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        text = f"order {order.value}\nthreshold {config.threshold!r}\nepsilon {config.epsilon!r}\n"
        text += "".join(_report_lines(r, f"{part} ") for part, r in reports.items())
    # the score file may itself be on stdout; the report then goes to stderr
    stream = sys.stderr if args.output == "-" else sys.stdout
    stream.write(text)


def cmd_make_synth(run: Run, args) -> None:
    if not os.path.isdir(args.out_dir):
        os.makedirs(args.out_dir)
    cm = SynthConfig(dim=args.dim, n_bonafide=args.n_bonafide, n_per_type=args.n_per_type,
                     n_types=args.n_types, radius=args.radius, spread=args.spread, seed=args.seed)
    out = lambda name: os.path.join(args.out_dir, name)  # noqa: E731
    run.write(out("cm_train.txt"), labdata.format_dataset(make_cm_dataset(cm, part=0)))
    for part, unseen in (("dev", 0), ("eval", args.unseen_types)):
        trials, sv, utts = make_trial_fixture(cm, TrialFixtureConfig(unseen_types=unseen), part)
        run.write(out(f"{part}_trials.txt"), format_trial_list(trials))
        run.write(out(f"{part}_sv.txt"), format_score_file(sv))
        run.write(out(f"{part}_utts.txt"), labdata.format_dataset(utts, with_ids=True))


def cmd_train_toy(run: Run, args) -> None:
    config = _train_config(args)
    dataset = _load_dataset(run, "data", args.data)
    result = train(dataset, config)
    log.info("final epoch loss %.6g", result.losses[-1] if result.losses else float("nan"))
    run.write(args.output, result.encoder.to_text())


def cmd_ersa_finetune(run: Run, args) -> None:
    config = _train_config(args)
    encoder = _load_encoder(run, args.encoder)
    dataset = _load_dataset(run, "data", args.data)
    state = compute_centers(encoder, dataset, args.samples_per_center, args.update_period)
    result = finetune_ersa(encoder, dataset, state, config)
    run.write(args.output, result.encoder.to_text())


def cmd_filter_bonafide(run: Run, args) -> None:
    encoder = _load_encoder(run, args.encoder)
    dataset = _load_dataset(run, "data", args.data)
    kept = select_bonafide_subset(encoder, dataset, args.threshold)
    log.info("kept %d of %d records", len(kept), len(dataset))
    run.write(args.output, labdata.format_dataset(kept) if len(kept) else "")


def cmd_score_cm(run: Run, args) -> None:
    encoder = _load_encoder(run, args.encoder)
    utts = _load_dataset(run, "utterances", args.utterances, with_ids=True)
    trials = _load_trials(run, "trials", args.trials)
    by_id = dict(zip(utts.ids, cm_scores(encoder, utts)))
    missing = [t.test_id for t in trials if t.test_id not in by_id]
    if missing:
        raise CliError(f"{len(missing)} trial utterances have no features, e.g. {missing[:10]}")
    scores = ScoreSet("cm", {t.key: float(by_id[t.test_id]) for t in trials})
    run.write(args.output, format_score_file(scores))


def cmd_grad_check(run: Run, args) -> None:
    from .lab.data import BONAFIDE, EmbeddingDataset

    rows = []
    for i in range(args.configs):
        rng = np.random.default_rng([args.seed, i])
        d_in, hidden, d_emb = (int(v) for v in rng.integers(2, 6, size=3))
        d_aux = int(rng.integers(0, 3))
        enc = ToyEncoder.initialize(d_in, hidden, d_emb, rng, d_aux)
        for name, value in enc.params.items():
            enc.params[name] = value + rng.normal(0.0, 0.3, np.shape(value))
        n = int(rng.integers(4, 10))
        labels = [BONAFIDE if j % 2 == 0 else "A01" for j in range(n)]
        aux = rng.normal(size=(n, d_aux)) if d_aux else None
        batch = EmbeddingDataset(rng.normal(size=(n, d_in)), labels, aux)
        injected = rng.normal(size=(2, d_emb))
        for lam in args.lam:
            err = gradient_check(enc, batch, lam, injected)
            rows.append({"config": i, "lambda": lam, "n_params": enc.n_params, "max_rel_error": err})
    worst = max(r["max_rel_error"] for r in rows)
    if args.json:
        run.write("-", json.dumps({"max_rel_error": worst, "runs": rows}, indent=2, sort_keys=True) + "\n")
    else:
        lines = [f"config {r['config']} lambda {r['lambda']:g} params {r['n_params']} "
                 f"max-rel-error {r['max_rel_error']:.3e}\n" for r in rows]
        run.write("-", "".join(lines) + f"worst {worst:.3e}\n")


def cmd_replay(run: Run, args) -> None:
    try:
        with open(args.manifest_file, encoding="utf-8") as fh:
            manifest = json.load(fh)
        argv = manifest["argv"]
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load manifest {args.manifest_file!r}: {exc}") from None
    if argv and argv[0] == "replay":
        raise CliError("refusing to replay a replay")
    code = main(argv)
    if code:
        raise CliError(f"replayed command exited with status {code}")


# -- parser -----------------------------------------------------------------

def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def _prior(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"prior must lie in (0, 1), got {text}")
    return value


def _finite(text: str) -> float:
    value = float(text)
    if not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a finite number, got {text}")
    return value


def _add_training_flags(p: argparse.ArgumentParser, epochs: int, lr: float) -> None:
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--epochs", type=_nonneg_int, default=epochs)
    p.add_argument("--lr", type=float, default=lr)
    p.add_argument("--lr-decay", type=float, default=0.98)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="weight of the one-class confusion loss (default 1)")
    p.add_argument("--batch-size", type=_positive_int, default=64)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasv", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func: Callable, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        return p

    p = add("eer", cmd_eer, "SV-, SPF- and SASV-EER of one score file")
    p.add_argument("--trials", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--json", action="store_true")
    p.add_argument("--manifest")

    p = add("fuse", cmd_fuse, "fuse several score files")
    p.add_argument("--method", choices=["sum", "sigmoid-product", "calibrated"], required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--model", help="fusion model written by 'calibrate'")
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--manifest")

    p = add("calibrate", cmd_calibrate, "train a logistic calibration/fusion model")
    p.add_argument("--trials", required=True)
    p.add_argument("--scores", nargs="+", required=True)
    p.add_argument("--task", choices=["sasv", "sv", "spf", "cm"], default="sasv")
    p.add_argument("--prior", type=_prior, default=0.5)
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--manifest")

    p = add("cascade", cmd_cascade, "two-stage cascade with a dev-set EER gate")
    p.add_argument("--order", choices=[o.value for o in CascadeOrder], required=True)
    for flag in ("--dev-trials", "--dev-sv", "--dev-cm", "--eval-trials", "--eval-sv", "--eval-cm"):
        p.add_argument(flag, required=True)
    p.add_argument("--epsilon", type=_finite, help="floor score for rejected trials")
    p.add_argument("--output", "-o", default="-", help="fused eval score file")
    p.add_argument("--dev-output", help="fused dev score file")
    p.add_argument("--json", action="store_true")
    p.add_argument("--manifest")

    p = add("make-synth", cmd_make_synth, "write a synthetic CM dataset and trial fixtures")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--dim", type=_positive_int, default=8)
    p.add_argument("--n-bonafide", type=_positive_int, default=300)
    p.add_argument("--n-per-type", type=_positive_int, default=60)
    p.add_argument("--n-types", type=_positive_int, default=6)
    p.add_argument("--radius", type=float, default=6.0)
    p.add_argument("--spread", type=float, default=1.0)
    p.add_argument("--unseen-types", type=_nonneg_int, default=1,
                   help="extra attack clusters that appear only in the eval trials")
    p.add_argument("--manifest")

    p = add("train-toy", cmd_train_toy, "train the toy CM encoder")
    p.add_argument("--data", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--hidden", type=_positive_int, default=16)
    p.add_argument("--emb-dim", type=_positive_int, default=8)
    _add_training_flags(p, epochs=60, lr=0.01)
    p.add_argument("--manifest")

    p = add("ersa-finetune", cmd_ersa_finetune, "fine-tune an encoder with ERSA samples")
    p.add_argument("--encoder", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--samples-per-center", type=_nonneg_int, default=2)
    p.add_argument("--update-period", type=_positive_int, default=5, help="epochs between full centre updates")
    _add_training_flags(p, epochs=40, lr=0.003)
    p.add_argument("--manifest")

    p = add("filter-bonafide", cmd_filter_bonafide, "keep records the CM classifies as bonafide")
    p.add_argument("--encoder", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--manifest")

    p = add("score-cm", cmd_score_cm, "score trial test utterances with a CM encoder")
    p.add_argument("--encoder", required=True)
    p.add_argument("--utterances", required=True)
    p.add_argument("--trials", required=True)
    p.add_argument("--output", "-o", default="-")
    p.add_argument("--manifest")

    p = add("grad-check", cmd_grad_check, "finite-difference check of the analytic gradients")
    p.add_argument("--configs", type=_positive_int, default=20)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--lambda", dest="lam", type=float, nargs="+", default=[0.0, 1.0])
    p.add_argument("--json", action="store_true")
    p.add_argument("--manifest")

    p = add("replay", cmd_replay, "re-run the command recorded in a manifest")
    p.add_argument("manifest_file")
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # usage errors (2) and --help/--version (0) end here
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    logging.captureWarnings(True)
    run = Run(args, argv)
    try:
        args.func(run, args)
        if args.command != "replay":
            run.write_manifest(_manifest_path(args))
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"sasv: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
