"""Command-line pipeline: generate | train | predict | evaluate | influence | gridsearch.

Exit codes: 0 success, 1 validation error (bad flags, bad input data),
2 runtime failure (I/O errors, training divergence, unexpected faults).
Every output records the seed that produced it, and all writes are atomic
(temp file in the target directory, then rename).

A ``--config FILE`` flag reads ``key=value`` lines (``#`` comments allowed)
and treats them as defaults for the long flags of the same name with
underscores swapped for dashes; explicit command-line flags win.
Verbosity comes from ``--log`` or the GRADECAST_LOG environment variable.
"""

from __future__ import annotations

import argparse
import itertools
import json
import logging
import os
import sys
import tempfile
import traceback
import typing
from dataclasses import fields, replace

from . import baselines, influence as influence_mod, metrics, solver
from .errors import DivergenceError, ParseError
from .records import RecordSet, parse_records, serialize_records, split_by_term
from .scale import LetterScale
from .synthetic import SyntheticConfig, generate_synthetic

logger = logging.getLogger(__name__)

METHODS = ("mftci", "mf", "mf0", "nmf")
# config-file keys that correspond to presence-style flags
_BOOL_KEYS = {
    "nonneg-factors",
    "exclude-cold-start",
    "group-by-tag",
}


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def main() -> None:
    sys.exit(run(sys.argv[1:]))


def run(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _inject_config(argv)
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _setup_logging(args)
    try:
        return int(args.handler(args) or 0)
    except (ParseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 2


# -- plumbing -------------------------------------------------------------


def _setup_logging(args):
    level_name = getattr(args, "log", None) or os.environ.get("GRADECAST_LOG") or "WARNING"
    level = getattr(logging, str(level_name).upper(), None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level, format="%(levelname)s %(name)s: %(message)s", force=True
    )


def _inject_config(argv: list[str]) -> list[str]:
    if not argv or argv[0].startswith("-"):
        return argv
    sub, rest = argv[0], argv[1:]
    cfg_path = None
    cleaned = []
    i = 0
    while i < len(rest):
        tok = rest[i]
        if tok == "--config":
            if i + 1 >= len(rest):
                raise ValueError("--config requires a file path")
            cfg_path = rest[i + 1]
            i += 2
            continue
        if tok.startswith("--config="):
            cfg_path = tok.split("=", 1)[1]
            i += 1
            continue
        cleaned.append(tok)
        i += 1
    if cfg_path is None:
        return argv
    cfg_args = []
    for key, value in _read_config(cfg_path):
        flag = "--" + key.replace("_", "-")
        if flag[2:] in _BOOL_KEYS:
            if _parse_bool(value):
                cfg_args.append(flag)
        else:
            cfg_args.extend([flag, value])
    # config entries sit before explicit flags so the command line wins
    return [sub] + cfg_args + cleaned


def _read_config(path: str) -> list[tuple[str, str]]:
    if not os.path.exists(path):
        raise ValueError(f"config file not found: {path}")
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = line.partition("=")
            pairs.append((key.strip(), value.strip()))
    return pairs


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _write_atomic(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".gradecast-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_scale(args) -> LetterScale:
    path = getattr(args, "scale", None)
    if path is None:
        return LetterScale.default()
    if not os.path.exists(path):
        raise ValueError(f"ladder file not found: {path}")
    return LetterScale.from_csv(path)


def _load_records(path: str, scale: LetterScale) -> RecordSet:
    if not os.path.exists(path):
        raise ValueError(f"data file not found: {path}")
    return parse_records(path, scale)


def _load_model_file(path: str):
    if not os.path.exists(path):
        raise ValueError(f"model file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kind = doc.get("kind", "baseline" if "variant" in doc else None)
    text = json.dumps(doc)
    if kind == "mftci":
        return solver.load_model(text)
    if kind == "baseline":
        return baselines.load_baseline(text)
    raise ValueError(f"unrecognized model file {path}")


def _load_pairs(path: str) -> list[tuple[str, str]]:
    if not os.path.exists(path):
        raise ValueError(f"targets file not found: {path}")
    pairs = []
    header_done = False
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if not header_done:
                header_done = True
                if parts[0].lower() == "student_id":
                    continue
            if len(parts) < 2 or not parts[0] or not parts[1]:
                raise ParseError("expected student_id,course_id", line=lineno)
            pairs.append((parts[0], parts[1]))
    if not pairs:
        raise ValueError(f"no target pairs in {path}")
    return pairs


def _typed_overrides(cls, overrides: dict[str, str]) -> dict:
    hints = typing.get_type_hints(cls)
    out = {}
    for key, value in overrides.items():
        if key not in hints:
            names = ", ".join(f.name for f in fields(cls))
            raise ValueError(f"unknown parameter {key!r}; expected one of: {names}")
        target = hints[key]
        if target is bool:
            out[key] = _parse_bool(value)
        elif target is int:
            out[key] = int(value)
        elif target is float:
            out[key] = float(value)
        else:
            out[key] = value
    return out


def _hyper_from_args(args) -> solver.MFTCIHyper:
    return solver.MFTCIHyper(
        k=args.k,
        factor_reg=args.factor_reg,
        nuclear_weight=args.nuclear_weight,
        l1_weight=args.l1_weight,
        rho=args.rho,
        decay=args.decay,
        lr_factors=args.lr_factors,
        lr_influence=args.lr_influence,
        previous_terms=args.prev_terms,
        inner_uv_iters=args.inner_uv,
        inner_a_iters=args.inner_a,
        outer_max_iters=args.outer_iters,
        residual_tol=args.residual_tol,
        rng_seed=args.seed,
        nonneg_factors=args.nonneg_factors,
    )


def _traincfg_from_args(args) -> baselines.TrainConfig:
    return baselines.TrainConfig(
        k=args.k,
        learning_rate=args.lr,
        reg=args.reg,
        max_epochs=args.epochs,
        convergence_tol=args.tol,
        rng_seed=args.seed,
        init_scale=args.init_scale,
    )


def _train_one(train_rs: RecordSet, method: str, args):
    """Train either model family; returns (model, trace state or None)."""
    if method == "mftci":
        model, state = solver.fit(train_rs, _hyper_from_args(args))
        return model, state
    model = baselines.train_baseline(train_rs, method, _traincfg_from_args(args))
    return model, None


def _evaluate_model(model, rs: RecordSet, test_term: int, scale, args) -> tuple:
    """(report, batch) for one model on one held-out term."""
    train_rs, test_rs = split_by_term(rs, test_term)
    if isinstance(model, solver.MFTCIModel):
        batch = solver.predict_term(model, test_rs, train_rs, target_term=test_term)
    else:
        batch = baselines.predict_records(model, test_rs.records)
    if args.exclude_cold_start:
        batch = batch.without_cold_start()
        if not len(batch):
            raise ValueError("no rows left after excluding cold-start predictions")
    return metrics.report(batch, scale, group_by_tag=args.group_by_tag), batch


# -- subcommand handlers ----------------------------------------------------


def _cmd_generate(args) -> int:
    scale = _load_scale(args)
    cfg = SyntheticConfig(
        n_students=args.students,
        m_courses=args.courses,
        n_terms=args.terms,
        true_rank=args.rank,
        courses_per_term=args.courses_per_term,
        noise_sigma=args.noise,
        influence_density=args.influence_density,
        influence_scale=args.influence_scale,
        decay_alpha=args.decay,
        rng_seed=args.seed,
    )
    rs, truth = generate_synthetic(cfg, scale)
    _write_atomic(args.out, f"# seed={args.seed}\n" + serialize_records(rs))
    logger.info("wrote %d records to %s", len(rs.records), args.out)
    if args.truth:
        _write_atomic(args.truth, truth.to_json())
    return 0


def _cmd_train(args) -> int:
    method = args.method.lower()
    scale = _load_scale(args)
    rs = _load_records(args.data, scale)
    train_rs = split_by_term(rs, args.test_term)[0] if args.test_term is not None else rs
    if args.trace and method != "mftci":
        raise ValueError("--trace requires --method mftci")
    model, state = _train_one(train_rs, method, args)
    if method == "mftci":
        _write_atomic(args.out, solver.save_model(model))
        if args.trace:
            _write_atomic(args.trace, solver.export_trace(state))
        logger.info(
            "mftci: %d outer iterations, converged=%s", state.n_iters, state.converged
        )
    else:
        _write_atomic(args.out, baselines.save_baseline(model))
        logger.info("%s: %d epochs", model.variant, len(model.objective_trace))
    return 0


def _cmd_predict(args) -> int:
    model = _load_model_file(args.model)
    pairs = _load_pairs(args.targets)
    scale = _load_scale(args)
    if isinstance(model, solver.MFTCIModel):
        history = _load_records(args.data, scale)
        target_term = args.target_term
        if target_term is None:
            target_term = model.last_train_term + 1
        rows = solver.predict_pairs(model, pairs, history, target_term=target_term)
        seed = model.hyper.rng_seed
    else:
        rows = baselines.predict_pairs_baseline(model, pairs)
        seed = model.seed
    lines = [f"# seed={seed}", "student_id,course_id,predicted,cold_start"]
    for sid, cid, pred, cold in rows:
        lines.append(f"{sid},{cid},{float(pred)!r},{int(cold)}")
    _write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


def _cmd_evaluate(args) -> int:
    if (args.model is None) == (args.method is None):
        raise ValueError("exactly one of --model or --method is required")
    if args.protocol == "sweep" and args.model is not None:
        raise ValueError("--protocol sweep retrains per term and needs --method")
    scale = _load_scale(args)
    rs = _load_records(args.data, scale)

    if args.model is not None:
        model = _load_model_file(args.model)
        if isinstance(model, solver.MFTCIModel):
            seed = model.hyper.rng_seed
            method = "mftci"
            default_term = model.last_train_term + 1
        else:
            seed = model.seed
            method = model.variant.lower()
            default_term = rs.terms[-1]
        test_term = args.test_term if args.test_term is not None else default_term
        rep, batch = _evaluate_model(model, rs, test_term, scale, args)
        _emit_single_report(args, rep, batch, method, test_term, seed)
        return 0

    method = args.method.lower()
    if args.protocol == "single":
        test_term = args.test_term if args.test_term is not None else rs.terms[-1]
        model, _ = _train_one(split_by_term(rs, test_term)[0], method, args)
        rep, batch = _evaluate_model(model, rs, test_term, scale, args)
        _emit_single_report(args, rep, batch, method, test_term, args.seed)
        return 0

    # sweep: retrain and score on each of the last three splittable terms
    eligible = rs.terms[1:]
    if not eligible:
        raise ValueError("sweep protocol needs at least two terms with records")
    sweep_terms = eligible[-3:]
    per_term: dict[str, metrics.MetricsReport] = {}
    for t in sweep_terms:
        model, _ = _train_one(split_by_term(rs, t)[0], method, args)
        rep, _ = _evaluate_model(model, rs, t, scale, args)
        per_term[str(t)] = rep
        logger.info("term %d: mae=%.4f rmse=%.4f", t, rep.mae, rep.rmse)
    doc = {
        "seed": args.seed,
        "method": method,
        "protocol": "sweep",
        "exclude_cold_start": bool(args.exclude_cold_start),
        "per_term": {t: r.to_dict() for t, r in per_term.items()},
        "mean": {
            name: sum(getattr(r, name) for r in per_term.values()) / len(per_term)
            for name in ("rmse", "mae", "pct0", "pct1", "pct2")
        },
    }
    _write_atomic(args.report, json.dumps(doc, indent=1))
    if args.table:
        _write_atomic(args.table, metrics.format_table(per_term))
    return 0


def _emit_single_report(args, rep, batch, method: str, test_term: int, seed: int):
    extra = {
        "method": method,
        "test_term": test_term,
        "exclude_cold_start": bool(args.exclude_cold_start),
    }
    _write_atomic(args.report, metrics.report_to_json(rep, seed=seed, extra=extra))
    if args.table:
        _write_atomic(args.table, metrics.format_table({method: rep}))
    if args.predictions:
        _write_atomic(args.predictions, metrics.batch_to_csv(batch, seed=seed))


def _cmd_influence(args) -> int:
    model = _load_model_file(args.model)
    if not isinstance(model, solver.MFTCIModel):
        raise ValueError("influence export needs a model trained with --method mftci")
    edges = influence_mod.top_influences(model, top_n=model.n_courses**2 or 1)
    if args.course_prefix:
        edges = [
            e
            for e in edges
            if e.source.startswith(args.course_prefix)
            and e.target.startswith(args.course_prefix)
        ]
    edges = edges[: args.top]
    names = influence_mod.load_course_names(args.names) if args.names else None
    text = influence_mod.export_graph(
        edges, fmt=args.format, names=names, seed=model.hyper.rng_seed
    )
    _write_atomic(args.out, text)
    return 0


def _cmd_gridsearch(args) -> int:
    method = args.method.lower()
    scale = _load_scale(args)
    rs = _load_records(args.data, scale)
    test_term = args.test_term if args.test_term is not None else rs.terms[-1]
    train_rs = split_by_term(rs, test_term)[0]

    grid_pairs = _read_config(args.grid)
    if not grid_pairs:
        raise ValueError(f"grid file {args.grid} defines no parameters")
    keys = [k for k, _ in grid_pairs]
    if len(set(keys)) != len(keys):
        raise ValueError("grid file repeats a parameter")
    value_lists = [[v.strip() for v in vals.split(",") if v.strip()] for _, vals in grid_pairs]
    if any(not vals for vals in value_lists):
        raise ValueError("grid parameter with no values")

    cfg_cls = solver.MFTCIHyper if method == "mftci" else baselines.TrainConfig
    base = (
        _hyper_from_args(args) if method == "mftci" else _traincfg_from_args(args)
    )
    rows = []
    for grid_index, combo in enumerate(itertools.product(*value_lists)):
        overrides = _typed_overrides(cfg_cls, dict(zip(keys, combo)))
        cfg = replace(base, **overrides)
        if method == "mftci":
            model, _ = solver.fit(train_rs, cfg)
        else:
            model = baselines.train_baseline(train_rs, method, cfg)
        rep, _ = _evaluate_model(model, rs, test_term, scale, args)
        logger.info("grid %d: %s -> mae=%.4f", grid_index, dict(zip(keys, combo)), rep.mae)
        rows.append((rep.mae, grid_index, rep, cfg))

    rows.sort(key=lambda r: (r[0], r[1]))
    param_names = [f.name for f in fields(cfg_cls)]
    header = ["rank", "grid_index", "mae", "rmse", "pct0", "pct1", "pct2", "n_rows"] + param_names
    lines = [f"# seed={args.seed}", ",".join(header)]
    for rank, (mae_val, grid_index, rep, cfg) in enumerate(rows, start=1):
        cells = [
            str(rank),
            str(grid_index),
            repr(rep.mae),
            repr(rep.rmse),
            repr(rep.pct0),
            repr(rep.pct1),
            repr(rep.pct2),
            str(rep.n_rows),
        ]
        cells += [repr(getattr(cfg, name)) for name in param_names]
        lines.append(",".join(cells))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


# -- parser ------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    p.add_argument("--scale", help="letter ladder CSV (default: built-in 4.0 ladder)")
    p.add_argument("--log", help="log level (or set GRADECAST_LOG)")
    p.add_argument("--config", help="key=value defaults file", dest="_config_unused",
                   metavar="FILE")


def _add_hyper_flags(p):
    h = solver.MFTCIHyper()
    b = baselines.TrainConfig()
    p.add_argument("--k", type=int, default=h.k, help="latent dimension")
    # influence-model knobs
    p.add_argument("--factor-reg", type=float, default=h.factor_reg)
    p.add_argument("--nuclear-weight", type=float, default=h.nuclear_weight)
    p.add_argument("--l1-weight", type=float, default=h.l1_weight)
    p.add_argument("--rho", type=float, default=h.rho)
    p.add_argument("--decay", type=float, default=h.decay)
    p.add_argument("--lr-factors", type=float, default=h.lr_factors)
    p.add_argument("--lr-influence", type=float, default=h.lr_influence)
    p.add_argument("--prev-terms", type=int, choices=(1, 2), default=h.previous_terms)
    p.add_argument("--inner-uv", type=int, default=h.inner_uv_iters)
    p.add_argument("--inner-a", type=int, default=h.inner_a_iters)
    p.add_argument("--outer-iters", type=int, default=h.outer_max_iters)
    p.add_argument("--residual-tol", type=float, default=h.residual_tol)
    p.add_argument("--nonneg-factors", action="store_true")
    # baseline knobs
    p.add_argument("--lr", type=float, default=b.learning_rate, help="baseline SGD rate")
    p.add_argument("--reg", type=float, default=b.reg, help="baseline L2 weight")
    p.add_argument("--epochs", type=int, default=b.max_epochs)
    p.add_argument("--tol", type=float, default=b.convergence_tol)
    p.add_argument("--init-scale", type=float, default=b.init_scale)


def _add_eval_flags(p):
    p.add_argument("--exclude-cold-start", action="store_true")
    p.add_argument("--group-by-tag", action="store_true")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gradecast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="sample a synthetic grade corpus")
    _add_common(p)
    p.add_argument("--students", type=int, required=True)
    p.add_argument("--courses", type=int, required=True)
    p.add_argument("--terms", type=int, required=True)
    p.add_argument("--rank", type=int, required=True, help="planted latent rank")
    p.add_argument("--courses-per-term", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--influence-density", type=float, default=0.0)
    p.add_argument("--influence-scale", type=float, default=0.5)
    p.add_argument("--decay", type=float, default=0.5)
    p.add_argument("--out", required=True, help="records CSV path")
    p.add_argument("--truth", help="planted ground-truth JSON path")
    p.set_defaults(handler=_cmd_generate)

    p = sub.add_parser("train", help="fit a model and save it as JSON")
    _add_common(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", required=True, help="records CSV")
    p.add_argument("--test-term", type=int, help="train only on terms before this")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--trace", help="per-iteration trace CSV (mftci only)")
    _add_hyper_flags(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("predict", help="score (student, course) pairs")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="history records CSV")
    p.add_argument("--targets", required=True, help="CSV of student_id,course_id pairs")
    p.add_argument("--target-term", type=int, help="term being predicted")
    p.add_argument("--out", required=True, help="predictions CSV path")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("evaluate", help="held-out metrics for a model or method")
    _add_common(p)
    p.add_argument("--model", help="existing model JSON")
    p.add_argument("--method", choices=METHODS, help="train from scratch instead")
    p.add_argument("--data", required=True, help="full records CSV (train + test terms)")
    p.add_argument("--test-term", type=int)
    p.add_argument("--protocol", choices=("single", "sweep"), default="single")
    p.add_argument("--report", required=True, help="metrics JSON path")
    p.add_argument("--table", help="aligned text table path")
    p.add_argument("--predictions", help="per-row predictions CSV path")
    _add_eval_flags(p)
    _add_hyper_flags(p)
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("influence", help="export the learned influence graph")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int, default=20)
    p.add_argument("--format", choices=influence_mod.FORMATS, default="json")
    p.add_argument("--names", help="course_id,display_name CSV")
    p.add_argument("--course-prefix", help="keep only edges within this id prefix")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_influence)

    p = sub.add_parser("gridsearch", help="sweep hyper-parameters, rank by MAE")
    _add_common(p)
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--data", required=True)
    p.add_argument("--test-term", type=int, help="validation term (default: last)")
    p.add_argument("--grid", required=True, help="key=v1,v2,... lines")
    p.add_argument("--out", required=True, help="leaderboard CSV path")
    _add_eval_flags(p)
    _add_hyper_flags(p)
    p.set_defaults(handler=_cmd_gridsearch)

    return parser


if __name__ == "__main__":
    main()
