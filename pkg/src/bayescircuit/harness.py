"""End-to-end experiment orchestration.

Wires together a stimulus process, a Poisson observation population, a
circuit code, the prediction network, and a reference filter; trains the
network over epochs of simulated data; validates against the instantaneous-
decoding baseline and the reference filter; and writes the results as CSV
and JSON artifacts.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .dynamics import (
    LinearSdeSpec,
    PendulumSpec,
    colour_chain,
    simulate,
    step_linear,
    step_markov,
    step_pendulum,
)
from .families import (
    CATEGORICAL,
    GAUSSIAN,
    VARIANCE_PARAM_CEIL,
    VON_MISES_GAUSSIAN,
    NaturalParams,
)
from .learning import cd_signal, ef_signal
from .mlp import (
    AdamState,
    MlpParams,
    adam_update,
    backward,
    forward,
    init,
    init_adam,
    learning_rate,
)
from .oracles import (
    KAPPA_FLOOR,
    VARIANCE_FLOOR,
    discrete_predict,
    ekf_pendulum_predict,
    kalman_predict,
)
from .populations import (
    Concatenation,
    GaussianGrid,
    VonMisesGrid,
    colour_tuning,
    flat_prior,
    natural_encoding,
)
from .wiring import build_naive, build_orthogonal, neural_bayes_update

EXPERIMENTS = ("colour", "track", "pendulum")
CODES = ("naive", "orthogonal")
GRADIENTS = ("ef", "cd")

# population sizes (observation, hidden) and steps per training epoch
_TABLE_DEFAULTS = {
    "colour": {"d_n": 10, "d_h": 100, "n_t": 10_000, "gain": 1.0},
    "track": {"d_n": 10, "d_h": 200, "n_t": 10_000, "gain": 2.0},
    "pendulum": {"d_n": 20, "d_h": 500, "n_t": 20_000, "gain": 2.0},
}

TRAJECTORY_ROW_CAP = 1000


class NumericDivergenceError(RuntimeError):
    """Training produced non-finite network parameters."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    code: str = "orthogonal"
    gradient: str = "ef"
    seed: int = 0
    d_n: int | None = None
    d_h: int | None = None
    n_t: int | None = None
    epochs: int = 20
    n_v: int = 200_000
    gain: float | None = None
    alpha0: float = 5e-5
    lr_decay: float = 1.25

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.code not in CODES:
            raise ValueError(f"unknown code {self.code!r}")
        if self.gradient not in GRADIENTS:
            raise ValueError(f"unknown gradient {self.gradient!r}")
        defaults = _TABLE_DEFAULTS[self.experiment]
        for name in ("d_n", "d_h", "n_t", "gain"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, defaults[name])
        if min(self.d_n, self.d_h, self.n_t, self.n_v) < 1:
            raise ValueError("population sizes and step counts must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.gain <= 0 or self.alpha0 <= 0 or self.lr_decay <= 0:
            raise ValueError("gain, alpha0, and lr_decay must be positive")
        if self.experiment == "pendulum" and self.d_n % 2:
            raise ValueError("pendulum needs an even observation population")


def config_from_dict(data: dict) -> ExperimentConfig:
    data = {k: v for k, v in data.items() if k != "version"}
    allowed = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "experiment" not in data:
        raise ValueError("config must name an experiment")
    return ExperimentConfig(**data)


@dataclass(frozen=True)
class ExperimentBundle:
    """Everything a run needs besides the network parameters."""

    config: ExperimentConfig
    enc: object
    wiring: object
    stepper: object
    dyn_spec: object
    predict: object  # belief NaturalParams -> prediction NaturalParams
    x0: object
    error_kind: str  # "nll" | "mse"


def build_bundle(config: ExperimentConfig) -> ExperimentBundle:
    if config.experiment == "colour":
        tuning = colour_tuning(config.d_n)
        spec = colour_chain()
        stepper, x0, error_kind = step_markov, 1, "nll"
        predict = lambda b: discrete_predict(spec, b)
    elif config.experiment == "track":
        tuning = GaussianGrid(np.linspace(-7.0, 7.0, config.d_n), 2.0)
        spec = LinearSdeSpec()
        stepper, x0, error_kind = step_linear, 0.0, "nll"
        predict = lambda b: kalman_predict(spec, b)
    else:
        half = config.d_n // 2
        tuning = Concatenation(
            VonMisesGrid.evenly_spaced(half, 0.5),
            GaussianGrid(np.linspace(-12.0, 12.0, half), 4.0),
        )
        spec = PendulumSpec()
        stepper, x0, error_kind = step_pendulum, (0.0, 0.0), "mse"
        predict = lambda b: ekf_pendulum_predict(spec, b)
    enc = natural_encoding(tuning, config.gain)
    wiring = build_naive(enc) if config.code == "naive" else build_orthogonal(enc)
    return ExperimentBundle(config, enc, wiring, stepper, spec, predict, x0, error_kind)


@dataclass(frozen=True)
class Metrics:
    epoch: int
    e_z: float
    e_n: float
    e_opt: float
    r: float
    diverged: bool = False


@dataclass
class TrainingReport:
    config: ExperimentConfig
    metrics: list[Metrics]
    params: MlpParams
    hidden_tuning: np.ndarray  # (d_h, n_bins), NaN where a bin is empty
    bin_labels: list[str]
    trajectory_rows: list[dict]  # prefix of the final validation run
    version: str


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def train_epoch(
    bundle: ExperimentBundle,
    params: MlpParams,
    adam: AdamState,
    epoch: int,
    rng: np.random.Generator,
) -> tuple[MlpParams, AdamState]:
    """One epoch: a fresh simulation of n_t steps, a gradient step per
    observation, and periodic resets of the prediction rates. The reset
    cadence (epoch - 1)^2 is read as reset-every-step for the first epochs
    where it is <= 1, growing the circuit's unrolled horizon over training."""
    config = bundle.config
    if not 1 <= epoch:
        raise ValueError("epochs are 1-based")
    traj = simulate(
        bundle.stepper, bundle.dyn_spec, bundle.enc, bundle.x0, config.n_t, rng
    )
    wiring = bundle.wiring
    alpha = learning_rate(epoch, config.alpha0, config.lr_decay)
    reset_every = (epoch - 1) ** 2
    z = wiring.a @ traj.responses[0]
    since_reset = 0
    for n in traj.responses[1:]:
        y, _ = forward(params, z)
        if config.gradient == "ef":
            signal = ef_signal(bundle.enc, wiring, n, y)
        else:
            signal = cd_signal(bundle.enc, wiring, n, y, epoch, rng)
        grad = backward(params, z, signal.delta)
        params, adam = adam_update(params, adam, grad, alpha)
        if not params.finite:
            raise NumericDivergenceError(
                f"non-finite parameters at epoch {epoch} "
                f"({config.experiment}/{config.code}/{config.gradient})"
            )
        since_reset += 1
        if reset_every <= 1 or since_reset >= reset_every:
            z = wiring.a @ n
            since_reset = 0
        else:
            z = neural_bayes_update(wiring, n, y)
    return params, adam


def _categorical_errors(thetas: np.ndarray, states: np.ndarray) -> np.ndarray:
    full = np.column_stack([thetas, np.zeros(len(thetas))])
    return logsumexp(full, axis=1) - full[np.arange(len(states)), states]


def _gaussian_errors(thetas: np.ndarray, xs: np.ndarray) -> np.ndarray:
    t1 = np.minimum(thetas[:, 1], VARIANCE_PARAM_CEIL)
    var = np.maximum(-0.5 / t1, VARIANCE_FLOOR)
    mu = thetas[:, 0] * var
    return 0.5 * np.log(2.0 * np.pi * var) + (xs - mu) ** 2 / (2.0 * var)


def _pendulum_errors(thetas: np.ndarray, xs: np.ndarray) -> np.ndarray:
    mu_vm = np.arctan2(thetas[:, 1], thetas[:, 0])
    t3 = np.minimum(thetas[:, 3], VARIANCE_PARAM_CEIL)
    var = np.maximum(-0.5 / t3, VARIANCE_FLOOR)
    mu_n = thetas[:, 2] * var
    dq = (xs[:, 0] - mu_vm + np.pi) % (2.0 * np.pi) - np.pi
    return 0.5 * (dq**2 + (xs[:, 1] - mu_n) ** 2)


def belief_errors(family_kind: str, error_kind: str, thetas, xs) -> np.ndarray:
    """Per-step error of decoded beliefs against the true stimuli: negative
    log density for the finite and linear tasks, mean-squared error of the
    belief mean (with wrapped angular differences) for the pendulum."""
    thetas = np.asarray(thetas, dtype=float)
    if error_kind == "mse":
        return _pendulum_errors(thetas, np.asarray(xs, dtype=float))
    if family_kind == CATEGORICAL:
        return _categorical_errors(thetas, np.asarray(xs))
    if family_kind == GAUSSIAN:
        return _gaussian_errors(thetas, np.asarray(xs, dtype=float))
    raise ValueError(f"no error definition for {family_kind}/{error_kind}")


def _belief_summary(family_kind: str, theta: np.ndarray) -> dict[str, float]:
    if family_kind == CATEGORICAL:
        full = np.append(theta, 0.0)
        p = np.exp(full - logsumexp(full))
        return {f"p_{i}": float(v) for i, v in enumerate(p)}
    if family_kind == GAUSSIAN:
        t1 = min(theta[1], VARIANCE_PARAM_CEIL)
        var = max(-0.5 / t1, VARIANCE_FLOOR)
        return {"mean": float(theta[0] * var), "variance": float(var)}
    if family_kind == VON_MISES_GAUSSIAN:
        kappa = max(float(np.hypot(theta[0], theta[1])), KAPPA_FLOOR)
        t3 = min(theta[3], VARIANCE_PARAM_CEIL)
        var = max(-0.5 / t3, VARIANCE_FLOOR)
        return {
            "angle_mean": float(np.arctan2(theta[1], theta[0])),
            "angle_concentration": kappa,
            "velocity_mean": float(theta[2] * var),
            "velocity_variance": float(var),
        }
    raise ValueError(f"no summary for {family_kind}")


@dataclass
class ValidationResult:
    metrics: Metrics
    trajectory_rows: list[dict] = field(default_factory=list)


def validate(
    bundle: ExperimentBundle,
    params: MlpParams,
    epoch: int,
    rng: np.random.Generator,
    steps: int | None = None,
    zero_prediction: bool = False,
    keep_rows: int = 0,
) -> ValidationResult:
    """Run one long simulation without resets and score three belief
    streams: the circuit (E_Z), instantaneous decoding of the observations
    (E_N), and the reference filter (E_Opt). r = (E_Z - E_N)/(E_Opt - E_N).

    Divergent circuit rates mark the metrics as diverged instead of raising.
    """
    config = bundle.config
    wiring = bundle.wiring
    enc = bundle.enc
    steps = config.n_v if steps is None else steps
    traj = simulate(bundle.stepper, bundle.dyn_spec, enc, bundle.x0, steps, rng)
    dim = enc.family.dim

    z_thetas = np.empty((steps, dim))
    opt_thetas = np.empty((steps, dim))
    responses = np.asarray(traj.responses)

    diverged = False
    z = wiring.a @ traj.responses[0]
    belief = NaturalParams(enc.family, enc.theta_matrix @ traj.responses[0]
                           + flat_prior(enc.family).theta)
    z_thetas[0] = wiring.theta_z @ z
    opt_thetas[0] = belief.theta
    for k in range(1, steps):
        n = traj.responses[k]
        if not diverged:
            y = np.zeros(wiring.b.shape[1]) if zero_prediction else forward(params, z)[0]
            z = neural_bayes_update(wiring, n, y)
            if not np.all(np.isfinite(z)):
                diverged = True
            else:
                z_thetas[k] = wiring.theta_z @ z
        belief = NaturalParams(
            enc.family, enc.theta_matrix @ n + bundle.predict(belief).theta
        )
        opt_thetas[k] = belief.theta

    xs = np.asarray(traj.stimuli)
    n_thetas = responses @ enc.theta_matrix.T
    e_n = float(np.mean(belief_errors(enc.family.kind, bundle.error_kind, n_thetas, xs)))
    e_opt = float(
        np.mean(belief_errors(enc.family.kind, bundle.error_kind, opt_thetas, xs))
    )
    if diverged:
        metrics = Metrics(epoch, float("nan"), e_n, e_opt, float("nan"), True)
        return ValidationResult(metrics)
    e_z = float(np.mean(belief_errors(enc.family.kind, bundle.error_kind, z_thetas, xs)))
    r = (e_z - e_n) / (e_opt - e_n)
    metrics = Metrics(epoch, e_z, e_n, e_opt, float(r))

    rows = []
    for k in range(min(keep_rows, steps)):
        row = {"time": k}
        x = traj.stimuli[k]
        if bundle.error_kind == "mse":
            row["x_angle"], row["x_velocity"] = float(x[0]), float(x[1])
        else:
            row["x"] = float(x)
        for prefix, theta in (("z", z_thetas[k]), ("opt", opt_thetas[k])):
            for name, value in _belief_summary(enc.family.kind, theta).items():
                row[f"{prefix}_{name}"] = value
        row["spikes"] = int(responses[k].sum())
        rows.append(row)
    return ValidationResult(metrics, rows)


def default_bins(config: ExperimentConfig):
    """Stimulus bins for tuning-curve estimation: the three states for the
    colour task, a uniform grid over the encoded range for the track, and an
    angle x velocity grid for the pendulum."""
    if config.experiment == "colour":
        edges = np.array([-0.5, 0.5, 1.5, 2.5])
        labels = ["red", "green", "blue"]
        return (edges,), labels
    if config.experiment == "track":
        edges = np.linspace(-7.0, 7.0, 21)
        labels = [f"x={0.5 * (a + b):.2f}" for a, b in zip(edges[:-1], edges[1:])]
        return (edges,), labels
    q_edges = np.linspace(-np.pi, np.pi, 9)
    v_edges = np.linspace(-12.0, 12.0, 9)
    labels = [
        f"q={0.5 * (qa + qb):.2f},qd={0.5 * (va + vb):.2f}"
        for qa, qb in zip(q_edges[:-1], q_edges[1:])
        for va, vb in zip(v_edges[:-1], v_edges[1:])
    ]
    return (q_edges, v_edges), labels


def estimate_hidden_tuning(
    bundle: ExperimentBundle,
    params: MlpParams,
    rng: np.random.Generator,
    steps: int | None = None,
    bins=None,
) -> tuple[np.ndarray, list[str]]:
    """Average hidden-unit activation per stimulus bin over a long run with
    the circuit recursion in place. Empty bins are reported as NaN."""
    config = bundle.config
    steps = config.n_v if steps is None else steps
    if bins is None:
        edges, labels = default_bins(config)
    else:
        edges, labels = bins
    traj = simulate(bundle.stepper, bundle.dyn_spec, bundle.enc, bundle.x0, steps, rng)
    d_h = params.b_h.size
    n_bins = len(labels)
    sums = np.zeros((d_h, n_bins))
    counts = np.zeros(n_bins)

    def bin_index(x) -> int:
        if len(edges) == 1:
            i = int(np.searchsorted(edges[0], float(x), side="right")) - 1
            return i if 0 <= i < n_bins else -1
        qi = int(np.searchsorted(edges[0], float(x[0]), side="right")) - 1
        vi = int(np.searchsorted(edges[1], float(x[1]), side="right")) - 1
        n_v_bins = len(edges[1]) - 1
        if 0 <= qi < len(edges[0]) - 1 and 0 <= vi < n_v_bins:
            return qi * n_v_bins + vi
        return -1

    z = bundle.wiring.a @ traj.responses[0]
    for k in range(1, steps):
        y, hidden = forward(params, z)
        z = neural_bayes_update(bundle.wiring, traj.responses[k], y)
        i = bin_index(traj.stimuli[k])
        if i >= 0:
            sums[:, i] += hidden
            counts[i] += 1
    with np.errstate(invalid="ignore"):
        table = sums / counts
    table[:, counts == 0] = np.nan
    return table, labels


def run_training(config: ExperimentConfig) -> TrainingReport:
    """Train for the configured number of epochs with a validation pass
    after each (plus an untrained baseline at epoch 0), then estimate the
    hidden tuning curves. Deterministic given (config, seed)."""
    from . import __version__

    bundle = build_bundle(config)
    params = init(bundle.wiring.d_z, config.d_h, config.d_n, _rng(config.seed, 2))
    adam = init_adam(params)
    metrics: list[Metrics] = []
    rows: list[dict] = []

    baseline = validate(bundle, params, 0, _rng(config.seed, 1, 0),
                        keep_rows=TRAJECTORY_ROW_CAP)
    metrics.append(baseline.metrics)
    rows = baseline.trajectory_rows
    for epoch in range(1, config.epochs + 1):
        params, adam = train_epoch(bundle, params, adam, epoch, _rng(config.seed, 0, epoch))
        result = validate(bundle, params, epoch, _rng(config.seed, 1, epoch),
                          keep_rows=TRAJECTORY_ROW_CAP)
        metrics.append(result.metrics)
        rows = result.trajectory_rows or rows
    tuning, labels = estimate_hidden_tuning(bundle, params, _rng(config.seed, 4))
    return TrainingReport(config, metrics, params, tuning, labels, rows, __version__)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    try:
        path.write_text("\r\n".join(lines) + "\r\n")
    except OSError as err:
        raise OSError(f"failed writing {path}: {err}") from err


def save_checkpoint(path, config: ExperimentConfig, params: MlpParams) -> None:
    np.savez(
        path,
        w_h=params.w_h,
        b_h=params.b_h,
        w_o=params.w_o,
        b_o=params.b_o,
        config=json.dumps(asdict(config), sort_keys=True),
    )


def load_checkpoint(path) -> tuple[ExperimentConfig, MlpParams]:
    with np.load(path) as data:
        config = config_from_dict(json.loads(str(data["config"])))
        params = MlpParams(data["w_h"], data["b_h"], data["w_o"], data["b_o"])
    return config, params


def emit_report(report: TrainingReport, out_dir) -> dict[str, Path]:
    """Write metrics.csv, trajectory.csv, hidden_tuning.csv, config.json,
    and checkpoint.npz. Re-emitting the same report is byte-identical."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["metrics"] = out / "metrics.csv"
    _write_csv(
        paths["metrics"],
        ["epoch", "E_Z", "E_N", "E_Opt", "r"],
        [[m.epoch, m.e_z, m.e_n, m.e_opt, m.r] for m in report.metrics],
    )

    paths["trajectory"] = out / "trajectory.csv"
    if report.trajectory_rows:
        header = list(report.trajectory_rows[0])
        _write_csv(
            paths["trajectory"],
            header,
            [[row[h] for h in header] for row in report.trajectory_rows],
        )
    else:
        _write_csv(paths["trajectory"], ["time"], [])

    paths["hidden_tuning"] = out / "hidden_tuning.csv"
    _write_csv(
        paths["hidden_tuning"],
        ["unit", *report.bin_labels],
        [[i, *row] for i, row in enumerate(report.hidden_tuning)],
    )

    paths["config"] = out / "config.json"
    payload = {"version": report.version, **asdict(report.config)}
    try:
        paths["config"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    except OSError as err:
        raise OSError(f"failed writing {paths['config']}: {err}") from err

    paths["checkpoint"] = out / "checkpoint.npz"
    save_checkpoint(paths["checkpoint"], report.config, report.params)
    return paths
