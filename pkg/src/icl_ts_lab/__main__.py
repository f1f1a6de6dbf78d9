from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ValidationError

from icl_ts_lab.core.config import settings
from icl_ts_lab.core.errors import EXIT_OK, ConfigError, VerificationError, exit_code_for
from icl_ts_lab.core.serialization import read_json, write_json, write_table

logger = logging.getLogger("icl_ts_lab")


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _strs(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _build[M: BaseModel](model: type[M], config: dict[str, Any], **flags: Any) -> M:
    """CLI flag > --config JSON > model defaults (which read the environment)."""
    merged = {**config, **{k: v for k, v in flags.items() if v is not None}}
    try:
        return model.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(f"invalid {model.__name__}: {exc}") from exc


def _emit(obj: dict[str, Any]) -> None:
    print(json.dumps(obj, indent=2, default=str))


# -- commands -----------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.data.synth import ArRanges, gen_dataset, write_dataset

    amp = tuple(args.seasonality_amplitude) if args.seasonality_amplitude else None
    if amp is not None and len(amp) != 2:
        raise ConfigError("--seasonality-amplitude takes LOW,HIGH")
    ranges = _build(
        ArRanges,
        config.get("ranges", {}),
        d_choices=args.d,
        q_choices=args.q,
        sigma2_low=args.sigma2_low,
        sigma2_high=args.sigma2_high,
        seasonality_amplitude=amp,
        seasonality_frequency=args.seasonality_frequency,
        stationary=args.stationary,
    )
    n = args.n if args.n is not None else config.get("n", 100)
    T = args.T if args.T is not None else config.get("T", 500)
    ds = gen_dataset(n, ranges, args.seed, T, args.burn_in)
    manifest = write_dataset(ds, args.out)
    bx = ds.bx()
    _emit({"dataset": str(manifest), "n": len(ds), "T": T, "seed": args.seed, "max_bx": max(bx), "mean_bx": sum(bx) / len(bx)})
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.experiments.verify import run_verification

    report = run_verification(
        seed=args.seed,
        n_reformat=args.n_reformat if args.n_reformat is not None else config.get("n_reformat", 100),
        n_gd=args.n_gd if args.n_gd is not None else config.get("n_gd", 50),
        split_heads=args.split_heads if args.split_heads is not None else config.get("split_heads", 1),
        tamper=args.tamper,
        threads=args.threads,
    )
    path = write_json(report.to_dict(), args.out / "verify.json")
    _emit({"report": str(path), "passed": report.passed, "failed": report.failed})
    if not report.passed:
        raise VerificationError(f"failed checks: {', '.join(report.failed)}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.experiments.sweep import SweepSpec, lookback_trend, run_sweep

    spec = _build(
        SweepSpec,
        config,
        lookbacks=args.lookbacks,
        methods=args.methods,
        sigma2=args.sigma2,
        d=args.d,
        q=args.q,
        seeds=args.seeds or ([args.seed] if "seeds" not in config else None),
        test_length=args.test_length,
        n_positions=args.positions,
        icl_steps=args.icl_steps,
        model_path=args.model,
    )
    df = run_sweep(spec, threads=args.threads)
    path = write_table(df, spec.output or args.out / "sweep.csv")
    trend = lookback_trend(df).to_dict(orient="records")
    _emit({"table": str(path), "rows": len(df), "failed": int((df["error"] != "").sum()), "trend": trend})
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.theory.bounds import (
        BoundInputs,
        ar1_bound,
        ar1_condition_check,
        complexity,
        gen_bound,
        test_error_bound,
    )

    base = {k: v for k, v in vars(args).items() if k in BoundInputs.model_fields and v is not None}
    ns = args.n or [config.get("n", 1)]
    reports = []
    for n in ns:
        inp = _build(BoundInputs, config, **{**base, "n": n})
        entry: dict[str, Any] = {
            "inputs": inp.model_dump(),
            "complexity": complexity(inp),
            "gen_bound": gen_bound(inp),
            "test_error": test_error_bound(inp).to_dict(),
        }
        if inp.sigma_eps > 0:
            entry["ar1_bound"] = ar1_bound(inp)
        reports.append(entry)
    out: dict[str, Any] = {"bounds": reports}
    if len(reports) > 1:
        first = reports[0]["complexity"]
        out["complexity_ratios"] = [r["complexity"] / first for r in reports]
    if args.ar1_w is not None:
        sigma = base.get("sigma_eps", config.get("sigma_eps", 0.0))
        cond = ar1_condition_check(args.ar1_w, sigma, base.get("B_x", 1.0), base.get("B_w", 1.0))
        out["conditions"] = {**cond.to_dict(), "passed": cond.passed}
    write_json(out, args.out / "bounds.json")
    _emit(out)
    return EXIT_OK


def cmd_train(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.data.synth import read_dataset
    from icl_ts_lab.train.trainer import TrainConfig, init_params, save_snapshot, train, write_history

    cfg = _build(
        TrainConfig,
        config,
        steps=args.steps,
        lr=args.lr,
        batch=args.batch,
        optimizer=args.optimizer,
        variant=args.variant,
        dim=args.dim,
        layers=args.layers,
        heads=args.heads,
        context_length=args.context_length,
        seed=args.seed,
    )
    dataset = read_dataset(args.data)
    params, history = train(init_params(cfg), dataset, cfg)
    model = save_snapshot(params, cfg, args.out / "model.json")
    hist = write_history(history, args.out / "history.csv")
    final = float(history["train_loss"].iloc[-1]) if len(history) else None
    _emit({"model": str(model), "history": str(hist), "steps": cfg.steps, "final_loss": final})
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, config: dict[str, Any]) -> int:
    from icl_ts_lab.experiments.sweep import SweepSpec, run_sweep

    spec = _build(
        SweepSpec,
        config,
        methods=["trained-model"],
        model_path=args.model,
        lookbacks=args.lookbacks,
        d=args.d,
        q=args.q,
        seeds=args.seeds or [args.seed],
        sigma2=args.sigma2,
        test_length=args.test_length,
        n_positions=args.positions,
    )
    df = run_sweep(spec, threads=args.threads)
    path = write_table(df, args.out / "eval.csv")
    _emit({"table": str(path), "rows": len(df)})
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "bounds": cmd_bounds,
    "train": cmd_train,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icl-ts-lab", description="Transformer time-series in-context learning lab")
    parser.add_argument("--seed", type=int, default=settings.seed)
    parser.add_argument("--out", type=Path, default=Path(settings.output_dir))
    parser.add_argument("--config", type=Path, help="JSON file with command settings")
    parser.add_argument("--threads", type=int, help="worker threads (default ICL_TS_LAB_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic AR dataset")
    gen.add_argument("--n", type=int)
    gen.add_argument("--T", type=int)
    gen.add_argument("--d", type=_ints)
    gen.add_argument("--q", type=_ints)
    gen.add_argument("--sigma2-low", type=float)
    gen.add_argument("--sigma2-high", type=float)
    gen.add_argument("--burn-in", type=int)
    gen.add_argument("--seasonality-amplitude", type=_floats, help="LOW,HIGH amplitude range")
    gen.add_argument("--seasonality-frequency", type=int)
    gen.add_argument("--stationary", action=argparse.BooleanOptionalAction, help="redraw unstable coefficients")

    verify = sub.add_parser("verify", help="check the constructions against their oracles")
    verify.add_argument("--n-reformat", type=int)
    verify.add_argument("--n-gd", type=int)
    verify.add_argument("--split-heads", type=int)
    verify.add_argument("--tamper", choices=["u2"], help="test hook: break block isolation")

    for name, helptext in (("sweep", "lookback sweep over methods"), ("eval", "evaluate a trained model")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--lookbacks", type=_ints)
        p.add_argument("--d", type=_ints)
        p.add_argument("--q", type=_ints)
        p.add_argument("--seeds", type=_ints)
        p.add_argument("--sigma2", type=float)
        p.add_argument("--test-length", type=int)
        p.add_argument("--positions", type=int)
        if name == "sweep":
            p.add_argument("--methods", type=_strs)
            p.add_argument("--icl-steps", type=int)
            p.add_argument("--model", type=Path, help="trained model snapshot (trained-model method)")
        else:
            p.add_argument("--model", type=Path, required=True)

    bounds = sub.add_parser("bounds", help="generalization and test-error bound report")
    bounds.add_argument("--n", type=int, action="append", help="sample count; repeat to compare")
    for flag in ("B_x", "B", "R", "B_w", "sigma_eps", "alpha", "kappa", "epsilon", "delta", "C"):
        bounds.add_argument(f"--{flag}", dest=flag, type=float)
    for flag in ("L", "M", "D", "D_prime", "T", "d"):
        bounds.add_argument(f"--{flag}", dest=flag, type=int)
    bounds.add_argument("--ar1-w", type=_floats, help="AR(1) weights for the weak-dependence clauses")

    tr = sub.add_parser("train", help="desk-scale pretraining")
    tr.add_argument("--data", type=Path, required=True, help="dataset directory or manifest")
    tr.add_argument("--steps", type=int)
    tr.add_argument("--lr", type=float)
    tr.add_argument("--batch", type=int)
    tr.add_argument("--optimizer", choices=["gd", "adamw"])
    tr.add_argument("--variant", choices=["standard", "any_variate"])
    tr.add_argument("--dim", type=int)
    tr.add_argument("--layers", type=int)
    tr.add_argument("--heads", type=int)
    tr.add_argument("--context-length", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else settings.log_level.value,
        format="%(asctime)s [%(name)s] %(levelname)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    logger.info("Running %s (seed %d)", args.command, args.seed)
    try:
        config = read_json(args.config) if args.config else {}
        config.pop("schema", None)
        code = COMMANDS[args.command](args, config)
    except Exception as exc:
        code = exit_code_for(exc)
        logger.error("%s failed: %s", args.command, exc)
        if args.verbose:
            logger.debug("Traceback", exc_info=exc)
    return code


if __name__ == "__main__":
    sys.exit(main())
