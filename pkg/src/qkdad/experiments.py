"""End-to-end pipelines: simulate normal data, train, test on fresh 1:1 sets."""
from dataclasses import replace
import warnings

from . import deep_svdd, sim
from .data import featurize_records, featurize_windows, mix_test_set
from .errors import DegenerateAttackWarning
from .evaluation import repeated_eval

TIMESTAMPS = "timestamps"
RECORDS = "records"


def null_attack(profile):
    """Profile whose attack generators reproduce the normal distribution."""
    return replace(profile, calib_gate_shift=0.0, calib_qber_inflation=0.0, muted_weight=0.0)


def training_set(kind, n, profile, window_size=400):
    if kind == TIMESTAMPS:
        w = sim.gen_timestamps_normal(n, window_size, profile, allow_any_size=True)
        return featurize_windows(w, f"kind=ts-normal window={window_size} seed={profile.seed}")
    recs = sim.gen_config_normal(n, profile)
    return featurize_records(recs, f"kind=config-normal seed={profile.seed}")


def test_set_factory(kind, profile, n_per_class, window_size=400):
    """``trial_seed -> labelled Dataset`` drawing fresh normal and attack samples."""
    def make(trial_seed):
        p = profile.with_seed(trial_seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DegenerateAttackWarning)
            if kind == TIMESTAMPS:
                normal = sim.gen_timestamps_normal(n_per_class, window_size, p, allow_any_size=True)
                attack = sim.gen_timestamps_muted_attack(n_per_class, window_size, p,
                                                         allow_any_size=True)
                normal, attack = featurize_windows(normal), featurize_windows(attack)
            else:
                normal = featurize_records(sim.gen_config_normal(n_per_class, p))
                attack = featurize_records(sim.gen_config_calibration_attack(n_per_class, p))
        return mix_test_set(normal, attack, trial_seed)
    return make


def run_experiment(kind, profile=None, config=None, window_size=400, n_train=2000,
                   n_test_per_class=200, n_trials=100, eval_seed=12345):
    """Train on ``n_train`` normal samples, then evaluate on ``n_trials`` test sets.

    Returns ``(model, TrialStats)``.
    """
    profile = profile or sim.SimProfile()
    train = training_set(kind, n_train, profile, window_size)
    model = deep_svdd.train(train, config or deep_svdd.TrainConfig(seed=profile.seed), kind)
    stats = repeated_eval(lambda x: deep_svdd.score_batch(model, x),
                          test_set_factory(kind, profile, n_test_per_class, window_size),
                          n_trials, eval_seed)
    return model, stats
