"""tracelab command line: simulate, thresholds, analyze, presets."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path
from typing import List, Optional

from .accusation import VARIANTS, per_user_epsilons, wald_thresholds
from .analysis import drift_integrals, asymptotic_code_length, expected_termination
from .channel import ATTACKS, make_attack
from .encoder import BiasDistribution
from .scoring import DECODERS, ScoreFunction, averaged_moments
from .sim import (
    PRESET_NOTES,
    PRESETS,
    ExperimentConfig,
    dumps_json,
    preset,
    run_experiment,
    write_trial_events_csv,
    write_trials_csv,
)

SEED_ENV = "TRACELAB_SEED"

# flag dest -> ExperimentConfig field
_OVERRIDES = {
    "n": "n", "c": "c", "c0": "c0", "eps1": "eps1", "eps2": "eps2", "attack": "attack",
    "decoder": "decoder", "scheme": "scheme", "variant": "variant", "delay_B": "delay_B",
    "taint": "tainting", "trials": "trials", "max_segments": "max_segments", "length": "length",
    "eta_final": "eta_final", "eta_initial": "eta_initial", "slope": "slope", "bias": "bias",
    "normalize": "normalize", "single_user": "single_user",
}


def parse_bias(text: str) -> BiasDistribution:
    """``arcsine``, ``cutoff:T`` or ``fixed:P``."""
    kind, _, arg = text.partition(":")
    try:
        if kind == "arcsine" and not arg:
            return BiasDistribution.arcsine()
        if kind == "cutoff":
            return BiasDistribution.with_cutoff(float(arg))
        if kind == "fixed":
            return BiasDistribution.fixed(float(arg))
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None
    raise argparse.ArgumentTypeError(f"bias must be arcsine, cutoff:T or fixed:P (got {text!r})")


def _variant(text: str) -> str:
    v = text.replace("-", "_")
    if v not in VARIANTS:
        raise argparse.ArgumentTypeError(f"variant must be one of {', '.join(VARIANTS)}")
    return v


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int)
    p.add_argument("--c", type=int)
    p.add_argument("--c0", type=int)
    p.add_argument("--eps1", type=float)
    p.add_argument("--eps2", type=float)
    p.add_argument("--attack", choices=ATTACKS)
    p.add_argument("--decoder", choices=DECODERS)
    p.add_argument("--variant", type=_variant)
    p.add_argument("--bias", type=parse_bias, help="arcsine | cutoff:T | fixed:P")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tracelab", description="Sequential fingerprinting workbench.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run Monte Carlo trials, write CSV and JSON")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--config", type=Path, help="JSON file of experiment fields (flags win)")
    _add_experiment_flags(sim)
    sim.add_argument("--scheme", choices=("non_adaptive", "sequential_tardos", "wald_sprt", "truncated_sprt"))
    sim.add_argument("--delay-B", dest="delay_B", type=int)
    sim.add_argument("--taint", action="store_true", default=None)
    sim.add_argument("--trials", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--parallelism", type=int, default=1)
    sim.add_argument("--out", type=Path, help="per-trial CSV; events and aggregate JSON go next to it")
    sim.add_argument("--max-segments", dest="max_segments", type=int)
    sim.add_argument("--length", type=int)
    sim.add_argument("--eta-final", dest="eta_final", type=float)
    sim.add_argument("--eta-initial", dest="eta_initial", type=float)
    sim.add_argument("--slope", type=float)
    sim.add_argument("--normalize", action="store_true", default=None)
    sim.add_argument("--single-user", dest="single_user", action="store_true", default=None)

    th = sub.add_parser("thresholds", help="print the Wald boundary for global error targets")
    th.add_argument("--eps1", type=float, required=True)
    th.add_argument("--eps2", type=float, default=0.0)
    th.add_argument("--n", type=int, default=1)
    th.add_argument("--c", type=int, default=1)
    th.add_argument("--variant", type=_variant, default="upper_only")

    an = sub.add_parser("analyze", help="drifts, thresholds and predicted stopping time as JSON")
    _add_experiment_flags(an)
    an.set_defaults(n=1000, eps1=1e-3, eps2=0.0, attack="interleaving")
    an.add_argument("--printed-all-one", action="store_true",
                    help="use the (0,1) all-one entry with exponent -1/c0")

    sub.add_parser("presets", help="list presets and their parameters")
    return parser


def _seed(flag: Optional[int]) -> Optional[int]:
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer (got {env!r})") from None


def config_from_args(args) -> ExperimentConfig:
    """Preset, then config file, then flags; later sources win."""
    loaded = {}
    if args.config:
        loaded = json.loads(args.config.read_text())
        if not isinstance(loaded, dict):
            raise ValueError("config file must hold a JSON object")
    name = args.preset or loaded.pop("preset", None)
    loaded.pop("preset", None)
    fields = preset(name).to_dict() if name else {}
    fields.update(loaded)
    for dest, field_name in _OVERRIDES.items():
        v = getattr(args, dest, None)
        if v is not None:
            fields[field_name] = v
    seed = _seed(args.seed)
    if seed is not None:
        fields["master_seed"] = seed
    return ExperimentConfig.from_dict(fields)


def cmd_simulate(args, out) -> int:
    config = config_from_args(args)
    result = run_experiment(config, parallelism=max(1, args.parallelism))
    summary = dumps_json(result.summary())
    if args.out is not None:
        with open(args.out, "w", newline="") as f:
            write_trials_csv(f, result.trials)
        with open(args.out.with_suffix(".events.csv"), "w", newline="") as f:
            write_trial_events_csv(f, result.trials)
        args.out.with_suffix(".json").write_text(summary + "\n")
    out.write(summary + "\n")
    return 0


def cmd_thresholds(args, out) -> int:
    e1, e2 = per_user_epsilons(args.eps1, args.eps2, args.n, args.c)
    b = wald_thresholds(e1, e2, args.variant)
    payload = {
        "eps1_per_user": e1,
        "eps2_per_user": e2,
        "variant": args.variant,
        "eta1": b.upper.intercept,
        "eta0": None if b.lower is None else b.lower.intercept,
        "boundary": b.as_dict(),
    }
    out.write(f"eta1 = {b.upper.intercept:.4f}\n")
    out.write(dumps_json(payload) + "\n")
    return 0


def _default_decoder(attack: str) -> str:
    return {"interleaving": "interleaving_ll", "all_one": "all_one"}.get(attack, "generic_np")


def cmd_analyze(args, out) -> int:
    c = args.c if args.c is not None else 10
    c0 = args.c0 if args.c0 is not None else c
    decoder = args.decoder or _default_decoder(args.attack)
    bias = args.bias or BiasDistribution.arcsine()
    score = ScoreFunction(decoder, c0, attack=args.attack if decoder == "generic_np" else None,
                          printed=args.printed_all_one)
    m = averaged_moments(score, make_attack(args.attack, c), bias)
    e1, e2 = per_user_epsilons(args.eps1, args.eps2, args.n, c0)
    eta1 = wald_thresholds(e1, e2, args.variant or "upper_only").upper.intercept
    pred = None
    if m.mu1 > 0.0 and m.mu0 < 0.0:
        pred = expected_termination(e1, e2, m.mu0, m.mu1).expected_T_h1
    elif m.mu1 > 0.0:
        pred = math.log(1.0 / e1) / m.mu1
    payload = {
        "c": c,
        "n": args.n,
        "eps1": args.eps1,
        "eps2": args.eps2,
        "mu0": m.mu0,
        "mu1": m.mu1,
        "I": drift_integrals(c).I if c >= 2 else None,
        "eta1": eta1,
        "predicted_T_h1": pred,
        "asymptotic_length": asymptotic_code_length(c, args.n),
    }
    out.write(dumps_json(payload) + "\n")
    return 0


def cmd_presets(args, out) -> int:
    listing = {name: {"parameters": preset(name).to_dict(), "note": PRESET_NOTES[name]} for name in PRESETS}
    out.write(dumps_json(listing) + "\n")
    return 0


COMMANDS = {"simulate": cmd_simulate, "thresholds": cmd_thresholds, "analyze": cmd_analyze,
            "presets": cmd_presets}


def main(argv: Optional[List[str]] = None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except (ValueError, OSError) as e:
        print(f"tracelab {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
