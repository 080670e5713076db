"""Small builders shared by the test modules."""

import numpy as np

from sasvkit.trials import ScoredTrials, ScoreSet, Trial, TrialLabel


def make_scored(labels, **columns):
    """ScoredTrials from label tokens/objects and per-system score lists."""
    trials = []
    for i, lab in enumerate(labels):
        if isinstance(lab, str):
            lab = TrialLabel.parse(lab)
        trials.append(Trial(f"e{i}", f"u{i}", lab))
    cols = [ScoreSet.from_arrays(name, [t.key for t in trials], vals) for name, vals in columns.items()]
    return ScoredTrials(trials, cols)


def gaussian_sasv(rng, n=300, sv_sep=(3.0, -3.0, 2.5), cm_sep=(2.0, 2.0, -2.0), sv_scale=1.0):
    """Synthetic SV and CM score columns for target / nontarget / spoof trials.

    ``sv_sep`` and ``cm_sep`` give the class means (target, nontarget, spoof)
    for each system; both have unit noise before ``sv_scale`` is applied to SV.
    """
    labels = ["target"] * n + ["nontarget"] * n + ["spoof:A01"] * n
    sv = np.concatenate([rng.normal(m, 1.0, n) for m in sv_sep]) * sv_scale
    cm = np.concatenate([rng.normal(m, 1.0, n) for m in cm_sep])
    return make_scored(labels, sv=sv, cm=cm)


def compactness_pair(seed, epochs=30):
    """Bonafide scatter after training with and without the one-class term."""
    from sasvkit.lab import TrainConfig, bonafide_scatter, train
    from sasvkit.lab.synth import SynthConfig, make_cm_dataset

    data = make_cm_dataset(SynthConfig(n_bonafide=200, n_per_type=40, seed=seed))
    out = {}
    for lam in (0.0, 1.0):
        enc = train(data, TrainConfig(lam=lam, epochs=epochs, seed=seed)).encoder
        out[lam] = bonafide_scatter(enc, data)
    return out


def unseen_spf_eers(seed, pre_epochs=60, fine_epochs=40):
    """SPF-EER on an unseen spoof cluster before and after ERSA fine-tuning.

    The unseen cluster sits halfway between the bonafide mean and one seen
    spoof mean; it never appears in training.
    """
    from sasvkit.lab import TrainConfig, cm_scores, compute_centers, finetune_ersa, train
    from sasvkit.lab.data import BONAFIDE
    from sasvkit.lab.synth import SynthConfig, between, cluster_means, make_cm_dataset, sample_clusters
    from sasvkit.metrics import compute_eer

    cfg = SynthConfig(seed=seed)
    data = make_cm_dataset(cfg)
    means = cluster_means(cfg)
    held = {BONAFIDE: means[BONAFIDE], "U": between(means[BONAFIDE], means["A01"], 0.5)}
    test = sample_clusters(held, {BONAFIDE: 300, "U": 300}, cfg.spread, np.random.default_rng([seed, 900]))
    pre = train(data, TrainConfig(lam=1.0, epochs=pre_epochs, seed=seed)).encoder
    state = compute_centers(pre, data)
    fine = finetune_ersa(pre, data, state, TrainConfig(lam=1.0, epochs=fine_epochs, lr=0.003, seed=seed)).encoder

    def spf(enc):
        s = cm_scores(enc, test)
        return compute_eer(s[test.is_bonafide], s[~test.is_bonafide]).eer

    return spf(pre), spf(fine)


def run_cli(argv, capsys=None):
    """Run the CLI in-process; returns (exit code, stdout, stderr) when capsys is given."""
    from sasvkit.cli import main

    code = main([str(a) for a in argv])
    if capsys is None:
        return code
    out, err = capsys.readouterr()
    return code, out, err


def end_to_end(workdir, seed=0, radius=10.0):
    """make-synth, train-toy, ersa-finetune, score-cm, cascade and eer; returns the dev eer lines."""
    import contextlib
    import io
    import os

    from sasvkit.cli import main

    d = str(workdir)
    p = lambda name: os.path.join(d, name)  # noqa: E731
    steps = [
        ["make-synth", "--out-dir", d, "--seed", seed, "--radius", radius],
        ["train-toy", "--data", p("cm_train.txt"), "-o", p("pre.enc"), "--seed", seed],
        ["ersa-finetune", "--encoder", p("pre.enc"), "--data", p("cm_train.txt"), "-o", p("fine.enc"),
         "--seed", seed],
    ]
    for part in ("dev", "eval"):
        steps.append(["score-cm", "--encoder", p("fine.enc"), "--utterances", p(f"{part}_utts.txt"),
                      "--trials", p(f"{part}_trials.txt"), "-o", p(f"{part}_cm.txt")])
    steps.append(["cascade", "--order", "asv-cm",
                  "--dev-trials", p("dev_trials.txt"), "--dev-sv", p("dev_sv.txt"), "--dev-cm", p("dev_cm.txt"),
                  "--eval-trials", p("eval_trials.txt"), "--eval-sv", p("eval_sv.txt"),
                  "--eval-cm", p("eval_cm.txt"), "-o", p("eval_cascade.txt"),
                  "--dev-output", p("dev_cascade.txt")])
    steps.append(["eer", "--trials", p("dev_trials.txt"), "--scores", p("dev_cascade.txt"), "--json"])
    buf = io.StringIO()
    for argv in steps:
        with contextlib.redirect_stdout(buf if argv[0] == "eer" else io.StringIO()):
            code = main([str(a) for a in argv])
        if code:
            raise RuntimeError(f"step {argv[0]} failed with status {code}")
    import json

    return json.loads(buf.getvalue())
