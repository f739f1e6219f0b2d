"""Config-driven command line: verify suites, sampling runs, campaigns.

Exit codes: 0 success, 1 check failure, 2 config error, 3 runtime error.
Seed precedence: GUIDESAMPLER_SEED env var > --seed flag > config file >
built-in default. Every run writes a resolved-config copy next to its
outputs. Primary outputs (samples, paths, results CSV/JSON) are
byte-reproducible for a fixed seed; wall-clock timings go to separate
diagnostics files.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .acceptance import ACCEPTANCE_CHECKS, DEFAULT_SEED, run_checks
from .bench import (
    resolve_campaign_config,
    run_campaign,
    write_campaign_csv,
    write_campaign_timing_csv,
)
from .core import Alphabet, RandomSource, TabularDistribution, sequence_from_str
from .denoising import (
    ExactDenoiser,
    LogitModifier,
    ModifiedDenoiser,
    ParametricDenoiser,
)
from .errors import ConfigError, GuideSamplerError
from .predictors import CleanPredictor, ExactMarginalPredictor, PairwiseInteractionPredictor
from .sampling import (
    GuidanceConfig,
    SamplerDiagnostics,
    aoarm_sample,
    euler_sample,
    write_paths_jsonl,
)

SAMPLER_DEFAULTS = {
    "route": "aoarm",
    "dt": 0.01,
    "mode": "none",
    "gamma": 1.0,
    "temperature": 1.0,
    "wildtype_weight": 0.0,
    "wildtype": None,
    "t0": 0.0,
    "n_samples": 10,
    "record_paths": True,
}

_TOP_KEYS = {"command", "seed", "output_dir", "model", "predictor", "sampler", "only",
             "campaign", "threads"}


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path, what: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"{what} file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} file {path} is not valid JSON: {e}") from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="guidesampler",
        description="Guided discrete-sequence generation and its verification suite.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, help="root seed (GUIDESAMPLER_SEED overrides)")
        p.add_argument("--out", dest="output_dir", help="output directory (created if missing)")
        p.add_argument("--print-config", action="store_true", help="print resolved config and exit")

    pv = sub.add_parser("verify", help="run acceptance checks")
    common(pv)
    pv.add_argument(
        "--only", action="append", metavar="CHECK",
        help=f"run only the named check(s); known: {', '.join(ACCEPTANCE_CHECKS)}",
    )

    ps = sub.add_parser("sample", help="generate sequences from a model file")
    common(ps)
    ps.add_argument("--model", help="model JSON (kind: tabular | parametric)")
    ps.add_argument("--predictor", help="predictor JSON (for guided modes)")
    ps.add_argument("--n", type=int, dest="n_samples", help="number of sequences")
    ps.add_argument("--route", choices=["aoarm", "euler"])
    ps.add_argument("--mode", choices=["none", "exact", "tag", "deg", "predictor_free"])
    ps.add_argument("--gamma", type=float)
    ps.add_argument("--dt", type=float)
    ps.add_argument("--temperature", type=float)
    ps.add_argument("--wildtype-weight", type=float, dest="wildtype_weight")
    ps.add_argument("--wildtype", help="wild-type sequence string, e.g. ABBA")
    ps.add_argument("--t0", type=float, help="guidance switch point in [0,1]")
    ps.add_argument("--no-paths", action="store_true", help="skip decode-path recording")

    pc = sub.add_parser("campaign", help="run the benchmark campaign")
    common(pc)
    pc.add_argument("--threads", type=int, help="worker pool size for campaign seeds")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    file_cfg = _load_json(args.config, "config") if args.config else {}
    if not isinstance(file_cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(file_cfg) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "command" in file_cfg and file_cfg["command"] != args.command:
        raise ConfigError(
            f"config file is for command {file_cfg['command']!r}, invoked {args.command!r}"
        )
    cfg = {
        "command": args.command,
        "seed": int(file_cfg.get("seed", DEFAULT_SEED)),
        "output_dir": file_cfg.get("output_dir", "guidesampler_out"),
    }
    if args.command == "verify":
        cfg["only"] = file_cfg.get("only", [])
        if args.only:
            cfg["only"] = list(args.only)
    elif args.command == "sample":
        sampler = dict(SAMPLER_DEFAULTS)
        file_sampler = file_cfg.get("sampler", {})
        unknown = set(file_sampler) - set(SAMPLER_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown sampler keys: {sorted(unknown)}")
        sampler.update(file_sampler)
        for key in ("n_samples", "route", "mode", "gamma", "dt", "temperature",
                    "wildtype_weight", "wildtype", "t0"):
            val = getattr(args, key, None)
            if val is not None:
                sampler[key] = val
        if args.no_paths:
            sampler["record_paths"] = False
        cfg["sampler"] = sampler
        cfg["model"] = args.model or file_cfg.get("model")
        cfg["predictor"] = args.predictor or file_cfg.get("predictor")
        if not cfg["model"]:
            raise ConfigError("sample requires a --model file")
    else:  # campaign
        try:
            cfg["campaign"] = resolve_campaign_config(file_cfg.get("campaign"))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        cfg["threads"] = int(args.threads or file_cfg.get("threads", 1))
    if args.seed is not None:
        cfg["seed"] = int(args.seed)
    env_seed = os.environ.get("GUIDESAMPLER_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError as e:
            raise ConfigError(f"GUIDESAMPLER_SEED must be an integer, got {env_seed!r}") from e
    if args.output_dir:
        cfg["output_dir"] = args.output_dir
    return cfg


# ---------------------------------------------------------------------------
# model / predictor loading
# ---------------------------------------------------------------------------


def load_model(path):
    obj = _load_json(path, "model")
    kind = obj.get("kind")
    try:
        if kind == "tabular":
            p = TabularDistribution.from_json(obj)
            return ExactDenoiser(p), p
        if kind == "parametric":
            return ParametricDenoiser.from_json(obj), None
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"corrupted model file {path}: {e}") from e
    raise ConfigError(f"model kind must be 'tabular' or 'parametric', got {kind!r}")


def load_predictor(path, denoiser, p_tab):
    obj = _load_json(path, "predictor")
    kind = obj.get("kind")
    try:
        if kind == "pairwise_interaction":
            pred = PairwiseInteractionPredictor.from_json(obj)
        elif kind == "exact_marginal":
            if p_tab is None:
                raise ConfigError("exact_marginal predictors require a tabular model")
            table = np.asarray(obj["clean_table"], dtype=float)
            if table.shape != (p_tab.S**p_tab.D,):
                raise ConfigError("clean_table length must be S**D of the model")
            from .core import encode_rows

            clean = CleanPredictor(
                lambda x: float(table[encode_rows(x.tokens[None, :], p_tab.S)[0]]),
                batch_fn=lambda rows: table[encode_rows(rows, p_tab.S)],
            )
            pred = ExactMarginalPredictor(clean, p_tab)
        else:
            raise ConfigError(
                f"predictor kind must be 'pairwise_interaction' or 'exact_marginal', got {kind!r}"
            )
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigError(f"corrupted predictor file {path}: {e}") from e
    if (pred.D if hasattr(pred, "D") else denoiser.D) != denoiser.D or (
        getattr(pred, "S", denoiser.S) != denoiser.S
    ):
        raise ConfigError(
            f"model (D={denoiser.D}, S={denoiser.S}) and predictor "
            f"(D={getattr(pred, 'D', '?')}, S={getattr(pred, 'S', '?')}) are incompatible"
        )
    return pred


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_verify(cfg: dict) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "resolved_config.json")
    names = cfg.get("only") or None
    try:
        results = run_checks(names, seed=cfg["seed"])
    except KeyError as e:
        raise ConfigError(str(e)) from e
    for r in results:
        print(r.line())
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} checks passed")
    volatile = {"runtime_s", "wall_time_matched"}
    _dump_json(
        {
            "seed": cfg["seed"],
            "checks": [
                {
                    "name": r.name,
                    "pass": r.passed,
                    "details": r.details,
                    "metrics": {k: v for k, v in r.metrics.items() if k not in volatile},
                }
                for r in results
            ],
        },
        out / "verify_results.json",
    )
    _dump_json(
        {r.name: {"duration_s": r.duration_s} for r in results},
        out / "verify_diagnostics.json",
    )
    return 0 if n_pass == len(results) else 1


def cmd_sample(cfg: dict) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "resolved_config.json")
    denoiser, p_tab = load_model(cfg["model"])
    sampler = cfg["sampler"]
    predictor = None
    if cfg.get("predictor"):
        predictor = load_predictor(cfg["predictor"], denoiser, p_tab)
    if sampler["mode"] in ("exact", "tag", "deg") and predictor is None:
        raise ConfigError(f"mode {sampler['mode']!r} requires --predictor")
    modifier = LogitModifier(
        temperature=float(sampler["temperature"]),
        wildtype_weight=float(sampler["wildtype_weight"]),
        wildtype_sequence=(
            sequence_from_str(sampler["wildtype"], Alphabet(denoiser.S))
            if sampler["wildtype"]
            else None
        ),
    )
    if not modifier.is_identity:
        denoiser = ModifiedDenoiser(denoiser, modifier)
    try:
        gcfg = GuidanceConfig(
            mode=sampler["mode"], gamma=float(sampler["gamma"]), predictor=predictor,
            t0=float(sampler["t0"]),
        )
    except (ValueError, GuideSamplerError) as e:
        raise ConfigError(str(e)) from e

    root = RandomSource(cfg["seed"])
    n = int(sampler["n_samples"])
    sequences, paths = [], []
    agg = SamplerDiagnostics(sampler=sampler["route"], n_chains=n)
    for k in range(n):
        rng = root.substream(k)
        if sampler["route"] == "euler":
            x, path, diag = euler_sample(denoiser, gcfg, _identity(), float(sampler["dt"]), rng)
        else:
            x, path, diag = aoarm_sample(denoiser, gcfg, rng, schedule=_identity(), attach_times=True)
        sequences.append(x)
        paths.append(path)
        agg.n_steps += diag.n_steps
        agg.overflow_renormalizations += diag.overflow_renormalizations
        agg.denoiser_evals += diag.denoiser_evals
        agg.predictor_evals += diag.predictor_evals
        agg.wall_time_s += diag.wall_time_s
    (out / "samples.txt").write_text("".join(str(x) + "\n" for x in sequences))
    with open(out / "paths.jsonl", "w") as fh:
        if sampler["record_paths"]:
            write_paths_jsonl(paths, fh)
    _dump_json(agg.to_json(), out / "diagnostics.json")
    print(f"wrote {n} samples to {out / 'samples.txt'}")
    return 0


def _identity():
    from .core import identity_schedule

    return identity_schedule()


def cmd_campaign(cfg: dict) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(cfg, out / "resolved_config.json")
    results, summary = run_campaign(
        cfg["campaign"], RandomSource(cfg["seed"], 8), threads=cfg.get("threads", 1)
    )
    write_campaign_csv(results, out / "campaign.csv")
    write_campaign_timing_csv(results, out / "campaign_timing.csv")
    wall = {
        arm: summary["arms"][arm].pop("wall_time") for arm in list(summary["arms"])
    }
    matched = summary.pop("matched")
    _dump_json(summary, out / "campaign_summary.json")
    _dump_json({"wall_time": wall, "matched": matched}, out / "campaign_diagnostics.json")
    for arm, m in summary["arms"].items():
        print(
            f"{arm:16s} success={m['success_rate']['mean']:.3f} "
            f"diversity={m['diversity']['mean']:.2f} novelty={m['novelty']['mean']:.2f}"
        )
    print(f"wrote {len(results)} rows to {out / 'campaign.csv'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.print_config:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return 0
    try:
        if cfg["command"] == "verify":
            return cmd_verify(cfg)
        if cfg["command"] == "sample":
            return cmd_sample(cfg)
        return cmd_campaign(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - the CLI boundary reports and exits 3
        traceback.print_exc()
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
