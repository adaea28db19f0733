"""Command-line interface for training, validating, and inspecting circuits.

Exit codes: 0 on success, 2 on configuration errors, 3 on numeric
divergence during training.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .harness import (
    CODES,
    EXPERIMENTS,
    GRADIENTS,
    ExperimentConfig,
    NumericDivergenceError,
    build_bundle,
    config_from_dict,
    default_bins,
    emit_report,
    estimate_hidden_tuning,
    load_checkpoint,
    run_training,
    validate,
)
from .dynamics import simulate
from .families import NaturalParams
from .populations import flat_prior

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(Exception):
    pass


def _resolve_config(args) -> ExperimentConfig:
    data: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must be a JSON object")
    # explicit flags override file values
    for name in ("experiment", "code", "gradient", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    try:
        return config_from_dict(data)
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from err


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    try:
        report = run_training(config)
    except NumericDivergenceError as err:
        print(f"numeric divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    paths = emit_report(report, args.out)
    final = report.metrics[-1]
    print(f"final epoch {final.epoch}: E_Z={final.e_z:.6g} E_N={final.e_n:.6g} "
          f"E_Opt={final.e_opt:.6g} r={final.r:.6g}")
    print(f"wrote {paths['metrics'].parent}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        config, params = load_checkpoint(args.checkpoint)
    except (OSError, KeyError, ValueError) as err:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {err}") from err
    bundle = build_bundle(config)
    rng = np.random.default_rng([config.seed, 1, 0])
    result = validate(bundle, params, 0, rng, steps=args.steps)
    m = result.metrics
    if m.diverged:
        print("validation diverged (non-finite circuit rates)", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"E_Z={m.e_z:.6g} E_N={m.e_n:.6g} E_Opt={m.e_opt:.6g} r={m.r:.6g}")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    config = ExperimentConfig(args.experiment, seed=args.seed)
    bundle = build_bundle(config)
    rng = np.random.default_rng([config.seed, 3])
    traj = simulate(bundle.stepper, bundle.dyn_spec, bundle.enc, bundle.x0,
                    args.steps, rng)
    belief = NaturalParams(
        bundle.enc.family,
        bundle.enc.theta_matrix @ traj.responses[0] + flat_prior(bundle.enc.family).theta,
    )
    dim = bundle.enc.family.dim
    header = ["time"] + [f"x_{i}" for i in range(1 if args.experiment != "pendulum" else 2)] \
        + [f"theta_{i}" for i in range(dim)]
    print(",".join(header))
    for k in range(args.steps):
        if k > 0:
            belief = NaturalParams(
                bundle.enc.family,
                bundle.enc.theta_matrix @ traj.responses[k]
                + bundle.predict(belief).theta,
            )
        x = traj.stimuli[k]
        x_vals = list(x) if args.experiment == "pendulum" else [x]
        row = [k, *x_vals, *belief.theta]
        print(",".join(format(float(v), ".17g") if not isinstance(v, int) else str(v)
                       for v in row))
    return EXIT_OK


def _parse_bins(config: ExperimentConfig, spec: str | None):
    if spec is None:
        return None
    try:
        parts = [int(p) for p in spec.split("x")]
    except ValueError as err:
        raise ConfigError(f"bad bin spec {spec!r}: use N or NxM") from err
    if config.experiment == "pendulum":
        if len(parts) != 2 or min(parts) < 1:
            raise ConfigError("pendulum bins need the form NxM")
        nq, nv = parts
        q_edges = np.linspace(-np.pi, np.pi, nq + 1)
        v_edges = np.linspace(-12.0, 12.0, nv + 1)
        labels = [
            f"q={0.5 * (qa + qb):.2f},qd={0.5 * (va + vb):.2f}"
            for qa, qb in zip(q_edges[:-1], q_edges[1:])
            for va, vb in zip(v_edges[:-1], v_edges[1:])
        ]
        return (q_edges, v_edges), labels
    if len(parts) != 1 or parts[0] < 1:
        raise ConfigError("one bin count expected")
    if config.experiment == "colour":
        return default_bins(config)
    edges = np.linspace(-7.0, 7.0, parts[0] + 1)
    labels = [f"x={0.5 * (a + b):.2f}" for a, b in zip(edges[:-1], edges[1:])]
    return (edges,), labels


def _cmd_tuning(args) -> int:
    try:
        config, params = load_checkpoint(args.checkpoint)
    except (OSError, KeyError, ValueError) as err:
        raise ConfigError(f"cannot load checkpoint {args.checkpoint}: {err}") from err
    bundle = build_bundle(config)
    bins = _parse_bins(config, args.bins)
    table, labels = estimate_hidden_tuning(
        bundle, params, np.random.default_rng([config.seed, 4]),
        steps=args.steps, bins=bins,
    )
    print(",".join(["unit", *labels]))
    for i, row in enumerate(table):
        print(",".join([str(i), *(format(v, ".17g") for v in row)]))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base = asdict(_resolve_config(args))
    out_root = Path(args.out)
    for code in CODES:
        for gradient in GRADIENTS:
            config = config_from_dict({**base, "code": code, "gradient": gradient})
            try:
                report = run_training(config)
            except NumericDivergenceError as err:
                print(f"{code}/{gradient}: numeric divergence: {err}", file=sys.stderr)
                return EXIT_DIVERGED
            emit_report(report, out_root / f"{config.experiment}_{code}_{gradient}")
            final = report.metrics[-1]
            print(f"{code}/{gradient}: r={final.r:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bayescircuit",
        description="Train and evaluate neural-circuit approximations of Bayes filters.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, require_experiment):
        p.add_argument("--experiment", choices=EXPERIMENTS,
                       required=require_experiment)
        p.add_argument("--code", choices=CODES)
        p.add_argument("--gradient", choices=GRADIENTS)
        p.add_argument("--seed", type=int)
        p.add_argument("--config", help="JSON config file; flags override it")

    p_train = sub.add_parser("train", help="train one circuit and write a report")
    add_config_flags(p_train, require_experiment=False)
    p_train.add_argument("--out", default="out", help="output directory")
    p_train.set_defaults(fn=_cmd_train)

    p_val = sub.add_parser("validate", help="score a trained checkpoint")
    p_val.add_argument("--checkpoint", required=True)
    p_val.add_argument("--steps", type=int, default=200_000)
    p_val.set_defaults(fn=_cmd_validate)

    p_orc = sub.add_parser("oracle", help="emit a reference-filter trajectory as CSV")
    p_orc.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p_orc.add_argument("--steps", type=int, required=True)
    p_orc.add_argument("--seed", type=int, default=0)
    p_orc.set_defaults(fn=_cmd_oracle)

    p_tun = sub.add_parser("tuning", help="estimate hidden-unit tuning curves")
    p_tun.add_argument("--checkpoint", required=True)
    p_tun.add_argument("--bins", help="bin count (N, or NxM for the pendulum)")
    p_tun.add_argument("--steps", type=int, default=200_000)
    p_tun.set_defaults(fn=_cmd_tuning)

    p_sweep = sub.add_parser(
        "sweep", help="train all four code/gradient variants of one experiment"
    )
    add_config_flags(p_sweep, require_experiment=False)
    p_sweep.add_argument("--out", default="out", help="output root directory")
    p_sweep.set_defaults(fn=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
