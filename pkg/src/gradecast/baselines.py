"""Baseline factorization predictors: biased MF, bias-free MF0, and NMF.

All three train by per-dyad stochastic gradient descent on the cumulative
training matrix (latest grade wins on retakes):

* ``MF``   predicts mu + p_s + q_c + u_s . v_c with a global bias mu,
  per-student bias p and per-course bias q;
* ``MF0``  predicts u_s . v_c only;
* ``NMF``  is MF0 with U, V projected onto >= 0 after every update.

Stability: the per-dyad update is contractive while
``learning_rate * (k * top_grade**2 + reg) < 1``; with the default grade
ceiling of 4.0 that means lr <= 1/(16k) or so. Larger rates can diverge,
which is detected and raised as :class:`DivergenceError`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import DivergenceError
from .matrix import cumulative_matrix
from .metrics import PredictionBatch, PredictionRow
from .records import GradeRecord, RecordSet

logger = logging.getLogger(__name__)

VARIANTS = ("MF", "MF0", "NMF")
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    k: int = 10
    learning_rate: float = 0.005
    reg: float = 0.01  # L2 weight on factors (and biases for MF)
    max_epochs: int = 500
    convergence_tol: float = 1e-5  # relative objective improvement
    rng_seed: int = 0
    init_scale: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.reg < 0:
            raise ValueError("reg must be >= 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.convergence_tol <= 0:
            raise ValueError("convergence_tol must be > 0")
        if self.init_scale < 0:
            raise ValueError("init_scale must be >= 0")


@dataclass
class BaselineModel:
    variant: str
    k: int
    mu: float
    student_bias: np.ndarray  # (n,)
    course_bias: np.ndarray  # (m,)
    student_factors: np.ndarray  # (n, k)
    course_factors: np.ndarray  # (m, k)
    student_index: dict[str, int]
    course_index: dict[str, int]
    clamp_lo: float
    clamp_hi: float
    train_mean: float
    seen_students: np.ndarray  # (n,) bool: had at least one training dyad
    seen_courses: np.ndarray  # (m,) bool
    seed: int
    objective_trace: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        for arr in (
            self.student_bias,
            self.course_bias,
            self.student_factors,
            self.course_factors,
        ):
            arr.setflags(write=False)

    @property
    def n_students(self) -> int:
        return len(self.student_index)

    @property
    def n_courses(self) -> int:
        return len(self.course_index)


def train_baseline(train: RecordSet, variant: str, cfg: TrainConfig) -> BaselineModel:
    """Fit a baseline by SGD over the cumulative training dyads.

    Deterministic for a fixed ``cfg.rng_seed``: initialization and the
    per-epoch shuffle order both derive from it. Stops when the relative
    objective improvement drops below ``cfg.convergence_tol`` or at
    ``cfg.max_epochs``.
    """
    variant = variant.upper()
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if not train.records:
        raise ValueError("training record set is empty")

    cum = cumulative_matrix(train, train.terms[-1])
    s_idx, c_idx, g = _dyads(cum)
    n, m = cum.n_rows, cum.n_cols

    rng = np.random.default_rng(cfg.rng_seed)
    Us = rng.uniform(0.0, cfg.init_scale, size=(n, cfg.k))
    Vs = rng.uniform(0.0, cfg.init_scale, size=(m, cfg.k))
    p = np.zeros(n)
    q = np.zeros(m)
    use_bias = variant == "MF"
    nonneg = variant == "NMF"
    mu = float(g.mean()) if use_bias else 0.0

    trace = []
    best = math.inf
    best_epoch = 0
    # SGD traces here both bounce epoch-to-epoch and stall for tens of epochs
    # while factor symmetry breaks, so only a long streak without a tol-sized
    # improvement counts as convergence
    patience = 100
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(g)).astype(np.int64)
        mu = kernels.sgd_epoch(
            g, s_idx, c_idx, order, Us, Vs, p, q, mu,
            cfg.learning_rate, cfg.reg, use_bias, nonneg,
        )
        obj = _objective(g, s_idx, c_idx, Us, Vs, p, q, mu, cfg.reg, use_bias)
        if not np.isfinite(obj):
            raise DivergenceError(
                f"{variant} training objective became non-finite; lower learning_rate",
                epoch=epoch,
            )
        trace.append(obj)
        if obj < best * (1.0 - cfg.convergence_tol):
            best, best_epoch = obj, epoch
        elif epoch - best_epoch >= patience:
            break
    logger.debug("%s trained for %d epochs, final objective %.6g", variant, len(trace), trace[-1])

    return BaselineModel(
        variant=variant,
        k=cfg.k,
        mu=mu,
        student_bias=p,
        course_bias=q,
        student_factors=Us,
        course_factors=Vs,
        student_index=dict(train.student_index),
        course_index=dict(train.course_index),
        clamp_lo=train.scale.failing_epsilon,
        clamp_hi=train.scale.top_points,
        train_mean=float(g.mean()),
        seen_students=np.bincount(s_idx, minlength=n) > 0,
        seen_courses=np.bincount(c_idx, minlength=m) > 0,
        seed=cfg.rng_seed,
        objective_trace=tuple(trace),
    )


def predict_baseline(model: BaselineModel, s: int, c: int) -> float:
    """Clamped prediction for student index s on course index c."""
    if not (0 <= s < model.n_students) or not (0 <= c < model.n_courses):
        raise IndexError(f"dyad ({s}, {c}) out of range")
    raw = (
        model.mu
        + model.student_bias[s]
        + model.course_bias[c]
        + float(model.student_factors[s] @ model.course_factors[c])
    )
    # bias slots are numpy scalars; callers expect a plain float
    return float(min(max(raw, model.clamp_lo), model.clamp_hi))


def predict_records(model: BaselineModel, records) -> PredictionBatch:
    """Score grade records; unknown or unseen ids fall back to the training mean."""
    rows = []
    for r in records:
        s = model.student_index.get(r.student_id)
        c = model.course_index.get(r.course_id)
        if s is None or c is None or not model.seen_students[s] or not model.seen_courses[c]:
            pred, cold = model.train_mean, True
        else:
            pred, cold = predict_baseline(model, s, c), False
        rows.append(PredictionRow(r.student_id, r.course_id, pred, r.points, cold, r.tag))
    return PredictionBatch(tuple(rows))


def predict_pairs_baseline(model: BaselineModel, pairs) -> list[tuple[str, str, float, bool]]:
    """Predictions for bare (student_id, course_id) pairs, no actual grades."""
    out = []
    for sid, cid in pairs:
        s = model.student_index.get(sid)
        c = model.course_index.get(cid)
        if s is None or c is None or not model.seen_students[s] or not model.seen_courses[c]:
            out.append((sid, cid, min(max(model.train_mean, model.clamp_lo), model.clamp_hi), True))
        else:
            out.append((sid, cid, predict_baseline(model, s, c), False))
    return out


def _dyads(cum):
    s_parts, c_parts, g_parts = [], [], []
    for i in range(cum.n_rows):
        cols, vals = cum.row(i)
        s_parts.append(np.full(len(cols), i, dtype=np.int64))
        c_parts.append(cols.astype(np.int64))
        g_parts.append(vals)
    return (
        np.concatenate(s_parts) if s_parts else np.zeros(0, np.int64),
        np.concatenate(c_parts) if c_parts else np.zeros(0, np.int64),
        np.concatenate(g_parts) if g_parts else np.zeros(0),
    )


def _objective(g, s_idx, c_idx, Us, Vs, p, q, mu, reg, use_bias):
    pred = mu + p[s_idx] + q[c_idx] + np.einsum("ij,ij->i", Us[s_idx], Vs[c_idx])
    err = g - pred
    obj = 0.5 * float(err @ err) + 0.5 * reg * (np.sum(Us * Us) + np.sum(Vs * Vs))
    if use_bias:
        obj += 0.5 * reg * (float(p @ p) + float(q @ q))
    return obj


def save_baseline(model: BaselineModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "baseline",
        "variant": model.variant,
        "k": model.k,
        "mu": model.mu,
        "p": model.student_bias.tolist(),
        "q": model.course_bias.tolist(),
        "U": model.student_factors.T.tolist(),  # stored k x n, row-major
        "V": model.course_factors.T.tolist(),  # stored k x m
        "student_index": model.student_index,
        "course_index": model.course_index,
        "clamp": [model.clamp_lo, model.clamp_hi],
        "train_mean": model.train_mean,
        "seen_students": [int(b) for b in model.seen_students],
        "seen_courses": [int(b) for b in model.seen_courses],
        "seed": model.seed,
    }
    return json.dumps(doc, indent=1)


def load_baseline(text: str) -> BaselineModel:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')}")
    if doc.get("kind") != "baseline":
        raise ValueError(f"not a baseline model file (kind={doc.get('kind')!r})")
    return BaselineModel(
        variant=doc["variant"],
        k=doc["k"],
        mu=float(doc["mu"]),
        student_bias=np.asarray(doc["p"], dtype=np.float64),
        course_bias=np.asarray(doc["q"], dtype=np.float64),
        student_factors=np.ascontiguousarray(np.asarray(doc["U"], dtype=np.float64).T),
        course_factors=np.ascontiguousarray(np.asarray(doc["V"], dtype=np.float64).T),
        student_index={k: int(v) for k, v in doc["student_index"].items()},
        course_index={k: int(v) for k, v in doc["course_index"].items()},
        clamp_lo=float(doc["clamp"][0]),
        clamp_hi=float(doc["clamp"][1]),
        train_mean=float(doc["train_mean"]),
        seen_students=np.asarray(doc["seen_students"], dtype=bool),
        seen_courses=np.asarray(doc["seen_courses"], dtype=bool),
        seed=int(doc["seed"]),
    )
