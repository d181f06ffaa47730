"""Next-term grade prediction with a learned course-to-course influence matrix.

The predicted grade for student s in course c is

    u_s . v_c  +  sum over depth d in {1, 2} of
        exp(-d * decay) * (sum of influence[c', c] * grade(s, c')
                           over courses c' taken d terms earlier) / count_d

where count_d is how many courses the student took d terms back. The
latent factors absorb overall aptitude/difficulty; the non-negative
influence matrix captures how doing well in one course carries into
another shortly after.

Fitting alternates four steps per outer iteration (an ADMM scheme with two
split copies of the influence matrix):

1. SGD sweeps on the factors against influence-adjusted targets,
2. projected gradient steps on the influence entries that co-occur in
   training windows (all other entries stay exactly zero),
3. closed-form proximal updates of the split copies: singular-value
   shrinkage for the low-rank penalty and one-sided soft thresholding for
   the sparse non-negative penalty,
4. dual updates accumulating the disagreement between the copies.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import DivergenceError
from .matrix import term_matrix
from .metrics import PredictionBatch, PredictionRow
from .prox import shrink_singular_values, soft_threshold
from .records import RecordSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class MFTCIHyper:
    """Hyper-parameters of the influence-aware factorization.

    ``nuclear_weight`` scales the low-rank (singular value) penalty on the
    influence matrix, ``l1_weight`` the sparsity penalty, ``rho`` the ADMM
    coupling strength. ``decay`` is the per-term exponential damping of
    influence from older terms. ``previous_terms`` selects how many prior
    terms feed the influence offset (1 or 2).
    """

    k: int = 10
    factor_reg: float = 0.01
    nuclear_weight: float = 0.1
    l1_weight: float = 0.05
    rho: float = 1.0
    decay: float = 0.5
    lr_factors: float = 0.005
    lr_influence: float = 0.001
    previous_terms: int = 2
    inner_uv_iters: int = 20
    inner_a_iters: int = 5
    outer_max_iters: int = 100
    residual_tol: float = 1e-4
    rng_seed: int = 0
    nonneg_factors: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        for name in ("factor_reg", "nuclear_weight", "l1_weight"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("rho", "decay", "lr_factors", "lr_influence", "residual_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.previous_terms not in (1, 2):
            raise ValueError("previous_terms must be 1 or 2")
        for name in ("inner_uv_iters", "inner_a_iters", "outer_max_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "MFTCIHyper":
        return cls(**doc)


@dataclass(frozen=True)
class HistoryView:
    """Per-student snapshot of the terms feeding the influence offset.

    ``entries[d-1]`` lists (course index, grade points) for the courses
    completed exactly d terms before the prediction term; ``counts[d-1]``
    is how many courses were taken that term. The count can exceed
    ``len(entries[d-1])`` when some of those courses are outside the
    model's vocabulary: they still widen the divisor but contribute no
    influence.
    """

    entries: tuple[tuple[tuple[int, float], ...], ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.entries) != len(self.counts):
            raise ValueError("entries and counts must align")
        for pairs, cnt in zip(self.entries, self.counts):
            if cnt < len(pairs):
                raise ValueError("count cannot be below the listed courses")

    @property
    def max_depth(self) -> int:
        return len(self.entries)

    def at_depth(self, depth: int) -> tuple[tuple[tuple[int, float], ...], int]:
        if not (1 <= depth <= self.max_depth):
            return (), 0
        return self.entries[depth - 1], self.counts[depth - 1]


@dataclass
class MFTCIModel:
    hyper: MFTCIHyper
    student_factors: np.ndarray  # (n, k)
    course_factors: np.ndarray  # (m, k)
    influence: np.ndarray  # (m, m), >= 0, zero off the co-taken support
    co_taken: np.ndarray  # (m, m) bool: pairs seen in a training window
    student_index: dict[str, int]
    course_index: dict[str, int]
    clamp_lo: float
    clamp_hi: float
    train_mean: float
    seen_students: np.ndarray  # (n,) bool
    seen_courses: np.ndarray  # (m,) bool
    last_train_term: int

    def __post_init__(self):
        for arr in (
            self.student_factors,
            self.course_factors,
            self.influence,
            self.co_taken,
            self.seen_students,
            self.seen_courses,
        ):
            arr.setflags(write=False)

    @property
    def n_students(self) -> int:
        return len(self.student_index)

    @property
    def n_courses(self) -> int:
        return len(self.course_index)


@dataclass
class AdmmState:
    """Per-outer-iteration diagnostics collected during a fit."""

    objectives: list[float] = field(default_factory=list)
    primal_r1: list[float] = field(default_factory=list)  # |A - low-rank copy|_F
    primal_r2: list[float] = field(default_factory=list)  # |A - sparse copy|_F
    dual_residuals: list[float] = field(default_factory=list)
    step_seconds: list[tuple[float, float, float, float]] = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False


def influence_delta(model: MFTCIModel, history: HistoryView, c: int, depth: int) -> float:
    """Decayed average influence flowing into course c from ``depth`` terms back."""
    if not (1 <= depth <= model.hyper.previous_terms):
        raise ValueError(f"depth {depth} outside 1..{model.hyper.previous_terms}")
    pairs, count = history.at_depth(depth)
    if count == 0:
        return 0.0
    total = 0.0
    for cp, g in pairs:
        total += float(model.influence[cp, c]) * g
    return math.exp(-depth * model.hyper.decay) * total / count


def predict_grade(model: MFTCIModel, s: int, c: int, history: HistoryView) -> float:
    """Clamped prediction for a known student/course index pair."""
    if not (0 <= s < model.n_students) or not (0 <= c < model.n_courses):
        raise IndexError(f"dyad ({s}, {c}) out of range")
    raw = float(model.student_factors[s] @ model.course_factors[c])
    for depth in range(1, model.hyper.previous_terms + 1):
        raw += influence_delta(model, history, c, depth)
    return min(max(raw, model.clamp_lo), model.clamp_hi)


def residual_target(model: MFTCIModel, points: float, c: int, history: HistoryView) -> float:
    """Observed grade minus the influence offsets: what the factors must fit."""
    out = points
    for depth in range(1, model.hyper.previous_terms + 1):
        out -= influence_delta(model, history, c, depth)
    return out


class AdmmSolver:
    """One fit on one training set; exposes the four update steps for tests.

    All randomness (factor init, SGD shuffle order) comes from a single
    generator seeded with ``hyper.rng_seed``, so a fit is a pure function
    of (training data, hyper-parameters).
    """

    def __init__(self, train: RecordSet, hyper: MFTCIHyper):
        if not train.records:
            raise ValueError("training record set is empty")
        self.train = train
        self.hyper = hyper
        self.n = train.n_students
        self.m = train.n_courses
        recs = train.records
        self.s_idx = np.fromiter(
            (train.student_index[r.student_id] for r in recs), np.int64, len(recs)
        )
        self.c_idx = np.fromiter(
            (train.course_index[r.course_id] for r in recs), np.int64, len(recs)
        )
        self.g = np.fromiter((r.points for r in recs), np.float64, len(recs))
        self._build_history()

        self.rng = np.random.default_rng(hyper.rng_seed)
        self.Us = self.rng.uniform(0.0, 0.1, size=(self.n, hyper.k))
        self.Vs = self.rng.uniform(0.0, 0.1, size=(self.m, hyper.k))
        self.A = np.zeros((self.m, self.m))
        self.Z1 = np.zeros((self.m, self.m))
        self.Z2 = np.zeros((self.m, self.m))
        self.U1 = np.zeros((self.m, self.m))
        self.U2 = np.zeros((self.m, self.m))
        self._p = np.zeros(self.n)  # bias slots the factor kernel requires; stay 0
        self._q = np.zeros(self.m)
        self.state = AdmmState()

    def _build_history(self):
        """Flatten each dyad's prior-term window into CSR-style arrays.

        A dyad observed at term t looks back at terms t-1 and t-2 (subject
        to ``previous_terms``); each prior course contributes weight
        exp(-d*decay) * grade / count_d. A course taken in both windows
        appears twice with different weights.
        """
        train, h = self.train, self.hyper
        mats = {t: term_matrix(train, t) for t in range(train.n_terms)}
        ptr = [0]
        idx_parts: list[np.ndarray] = []
        w_parts: list[np.ndarray] = []
        mask = np.zeros((self.m, self.m), dtype=bool)
        total = 0
        for r in train.records:
            s = train.student_index[r.student_id]
            c = train.course_index[r.course_id]
            for depth in range(1, h.previous_terms + 1):
                tp = r.term - depth
                if tp < 0:
                    continue
                cols, vals = mats[tp].row(s)
                if len(cols) == 0:
                    continue
                w = math.exp(-depth * h.decay) / len(cols)
                idx_parts.append(cols.astype(np.int64))
                w_parts.append(vals * w)
                mask[cols, c] = True
                total += len(cols)
            ptr.append(total)
        self.hist_ptr = np.asarray(ptr, dtype=np.int64)
        self.hist_idx = (
            np.concatenate(idx_parts) if idx_parts else np.zeros(0, dtype=np.int64)
        )
        self.hist_w = np.concatenate(w_parts) if w_parts else np.zeros(0)
        self.co_taken = mask
        self.mask_i, self.mask_j = np.nonzero(mask)

    # -- the four steps ----------------------------------------------------

    def update_factors(self):
        """Step 1: SGD sweeps on the factors, influence matrix held fixed."""
        h = self.hyper
        f = self.g - kernels.delta_for_dyads(
            self.A, self.c_idx, self.hist_ptr, self.hist_idx, self.hist_w
        )
        for _ in range(h.inner_uv_iters):
            order = self.rng.permutation(len(self.g)).astype(np.int64)
            kernels.sgd_epoch(
                f, self.s_idx, self.c_idx, order, self.Us, self.Vs,
                self._p, self._q, 0.0, h.lr_factors, h.factor_reg,
                False, h.nonneg_factors,
            )

    def influence_gradient(self) -> np.ndarray:
        """Dense gradient of the influence subproblem at the current iterate."""
        resid = self.g - self._raw_predictions()
        D = kernels.influence_data_term(
            resid, self.c_idx, self.hist_ptr, self.hist_idx, self.hist_w, self.m
        )
        rho = self.hyper.rho
        return rho * ((self.A - self.Z1) + (self.A - self.Z2) + self.U1 + self.U2) - D

    def update_influence(self):
        """Step 2: projected gradient descent on the co-taken entries only."""
        mi, mj = self.mask_i, self.mask_j
        lr = self.hyper.lr_influence
        for _ in range(self.hyper.inner_a_iters):
            grad = self.influence_gradient()
            self.A[mi, mj] = np.maximum(self.A[mi, mj] - lr * grad[mi, mj], 0.0)

    def update_auxiliaries(self) -> tuple[float, float]:
        """Step 3: proximal refresh of the split copies.

        Returns the Frobenius change of each copy (feeds the dual residual).
        """
        h = self.hyper
        z1_old, z2_old = self.Z1, self.Z2
        self.Z1 = shrink_singular_values(self.A + self.U1, h.nuclear_weight / h.rho)
        self.Z2 = soft_threshold(self.A + self.U2, h.l1_weight / h.rho)
        return (
            float(np.linalg.norm(self.Z1 - z1_old)),
            float(np.linalg.norm(self.Z2 - z2_old)),
        )

    def update_duals(self):
        """Step 4: accumulate the scaled disagreement with each copy."""
        self.U1 += self.A - self.Z1
        self.U2 += self.A - self.Z2

    # -- diagnostics ---------------------------------------------------------

    def _raw_predictions(self) -> np.ndarray:
        return kernels.predict_dyads(
            self.Us, self.Vs, self.A, self.s_idx, self.c_idx,
            self.hist_ptr, self.hist_idx, self.hist_w,
        )

    def objective(self) -> float:
        """Training objective: squared error + factor ridge + matrix penalties."""
        h = self.hyper
        resid = self.g - self._raw_predictions()
        val = 0.5 * float(resid @ resid)
        val += 0.5 * h.factor_reg * (float(np.sum(self.Us * self.Us)) + float(np.sum(self.Vs * self.Vs)))
        val += h.nuclear_weight * float(np.linalg.svd(self.A, compute_uv=False).sum())
        val += h.l1_weight * float(np.abs(self.A).sum())
        return val

    def influence_objective(self) -> float:
        """Value of the influence subproblem (data + quadratic coupling).

        Its exact gradient is :meth:`influence_gradient`; used by the
        finite-difference checks.
        """
        resid = self.g - self._raw_predictions()
        rho = self.hyper.rho
        val = 0.5 * float(resid @ resid)
        val += 0.5 * rho * float(np.sum((self.A - self.Z1 + self.U1) ** 2))
        val += 0.5 * rho * float(np.sum((self.A - self.Z2 + self.U2) ** 2))
        return val

    # -- driver --------------------------------------------------------------

    def run(self) -> tuple[MFTCIModel, AdmmState]:
        h, st = self.hyper, self.state
        for it in range(1, h.outer_max_iters + 1):
            t0 = time.perf_counter()
            self.update_factors()
            t1 = time.perf_counter()
            self.update_influence()
            if not np.all(np.isfinite(self.A)):
                # catch blow-ups before the SVD in step 3 chokes on them
                raise DivergenceError(
                    "influence matrix became non-finite; lower lr_factors/lr_influence",
                    epoch=it,
                )
            t2 = time.perf_counter()
            dz1, dz2 = self.update_auxiliaries()
            t3 = time.perf_counter()
            self.update_duals()
            t4 = time.perf_counter()

            r1 = float(np.linalg.norm(self.A - self.Z1))
            r2 = float(np.linalg.norm(self.A - self.Z2))
            obj = self.objective()
            if not np.isfinite(obj):
                raise DivergenceError(
                    "objective became non-finite; lower lr_factors/lr_influence",
                    epoch=it,
                )
            st.objectives.append(obj)
            st.primal_r1.append(r1)
            st.primal_r2.append(r2)
            st.dual_residuals.append(h.rho * max(dz1, dz2))
            st.step_seconds.append((t1 - t0, t2 - t1, t3 - t2, t4 - t3))
            st.n_iters = it
            logger.debug(
                "iter %d objective=%.6g primal=(%.3g, %.3g) dual=%.3g",
                it, obj, r1, r2, st.dual_residuals[-1],
            )
            if max(r1, r2) / max(1.0, float(np.linalg.norm(self.A))) < h.residual_tol:
                st.converged = True
                break
        return self._to_model(), st

    def _to_model(self) -> MFTCIModel:
        train = self.train
        return MFTCIModel(
            hyper=self.hyper,
            student_factors=self.Us.copy(),
            course_factors=self.Vs.copy(),
            influence=self.A.copy(),
            co_taken=self.co_taken.copy(),
            student_index=dict(train.student_index),
            course_index=dict(train.course_index),
            clamp_lo=train.scale.failing_epsilon,
            clamp_hi=train.scale.top_points,
            train_mean=float(self.g.mean()),
            seen_students=np.bincount(self.s_idx, minlength=self.n) > 0,
            seen_courses=np.bincount(self.c_idx, minlength=self.m) > 0,
            last_train_term=train.terms[-1],
        )


def fit(train: RecordSet, hyper: MFTCIHyper | None = None) -> tuple[MFTCIModel, AdmmState]:
    """Train on a record set; deterministic given data and hyper-parameters."""
    return AdmmSolver(train, hyper or MFTCIHyper()).run()


# -- prediction ---------------------------------------------------------------


def build_history_view(
    model: MFTCIModel, history: RecordSet, student_id: str, target_term: int
) -> HistoryView:
    """History window for one student, anchored just before ``target_term``."""
    mats = _history_matrices(model, history, target_term)
    return _history_view(model, history, mats, student_id)


def _history_matrices(model, history: RecordSet, target_term: int) -> dict:
    mats = {}
    for depth in range(1, model.hyper.previous_terms + 1):
        tp = target_term - depth
        if 0 <= tp < history.n_terms:
            mats[depth] = term_matrix(history, tp)
    return mats


def _history_view(model, history: RecordSet, mats: dict, student_id: str) -> HistoryView:
    course_ids = _ids_by_index(history.course_index)
    s = history.student_index.get(student_id)
    entries, counts = [], []
    for depth in range(1, model.hyper.previous_terms + 1):
        mat = mats.get(depth)
        if mat is None or s is None:
            entries.append(())
            counts.append(0)
            continue
        cols, vals = mat.row(s)
        pairs = []
        for ch, v in zip(cols, vals):
            cm = model.course_index.get(course_ids[ch])
            if cm is not None:
                # unknown courses still widen the divisor via counts below
                pairs.append((cm, float(v)))
        entries.append(tuple(pairs))
        counts.append(len(cols))
    return HistoryView(tuple(entries), tuple(counts))


def _ids_by_index(index: dict[str, int]) -> list[str]:
    out = [""] * len(index)
    for key, i in index.items():
        out[i] = key
    return out


def predict_term(
    model: MFTCIModel,
    test: RecordSet,
    history: RecordSet,
    target_term: int | None = None,
) -> PredictionBatch:
    """Score test records; ``history`` supplies the prior-term courses.

    Only terms strictly before ``target_term`` (default: the term after
    training ended) are read from ``history``. Students or courses the
    model never trained on fall back to the clamped training mean and are
    flagged cold_start.
    """
    if target_term is None:
        target_term = model.last_train_term + 1
    mats = _history_matrices(model, history, target_term)
    fallback = min(max(model.train_mean, model.clamp_lo), model.clamp_hi)
    views: dict[str, HistoryView] = {}
    rows = []
    for r in test.records:
        s = model.student_index.get(r.student_id)
        c = model.course_index.get(r.course_id)
        if s is None or c is None or not model.seen_students[s] or not model.seen_courses[c]:
            pred, cold = fallback, True
        else:
            if r.student_id not in views:
                views[r.student_id] = _history_view(model, history, mats, r.student_id)
            pred, cold = predict_grade(model, s, c, views[r.student_id]), False
        rows.append(PredictionRow(r.student_id, r.course_id, float(pred), r.points, cold, r.tag))
    return PredictionBatch(tuple(rows))


def predict_pairs(
    model: MFTCIModel,
    pairs,
    history: RecordSet,
    target_term: int | None = None,
) -> list[tuple[str, str, float, bool]]:
    """Predictions for bare (student_id, course_id) pairs, no actual grades.

    Returns (student_id, course_id, prediction, cold_start) per pair.
    """
    if target_term is None:
        target_term = model.last_train_term + 1
    mats = _history_matrices(model, history, target_term)
    fallback = min(max(model.train_mean, model.clamp_lo), model.clamp_hi)
    views: dict[str, HistoryView] = {}
    out = []
    for sid, cid in pairs:
        s = model.student_index.get(sid)
        c = model.course_index.get(cid)
        if s is None or c is None or not model.seen_students[s] or not model.seen_courses[c]:
            out.append((sid, cid, fallback, True))
            continue
        if sid not in views:
            views[sid] = _history_view(model, history, mats, sid)
        out.append((sid, cid, predict_grade(model, s, c, views[sid]), False))
    return out


# -- persistence ---------------------------------------------------------------


def save_model(model: MFTCIModel) -> str:
    mi, mj = np.nonzero(model.co_taken)
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "mftci",
        "hyper": model.hyper.to_dict(),
        "U": model.student_factors.T.tolist(),  # stored k x n
        "V": model.course_factors.T.tolist(),  # stored k x m
        "A_sparse": [
            [int(i), int(j), float(model.influence[i, j])] for i, j in zip(mi, mj)
        ],
        "student_index": model.student_index,
        "course_index": model.course_index,
        "clamp": [model.clamp_lo, model.clamp_hi],
        "train_mean": model.train_mean,
        "last_train_term": model.last_train_term,
        "seen_students": [int(b) for b in model.seen_students],
        "seen_courses": [int(b) for b in model.seen_courses],
        "seed": model.hyper.rng_seed,
    }
    return json.dumps(doc, indent=1)


def load_model(text: str) -> MFTCIModel:
    doc = json.loads(text)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')}")
    if doc.get("kind") != "mftci":
        raise ValueError(f"not an influence model file (kind={doc.get('kind')!r})")
    m = len(doc["course_index"])
    influence = np.zeros((m, m))
    co_taken = np.zeros((m, m), dtype=bool)
    for i, j, v in doc["A_sparse"]:
        influence[i, j] = v
        co_taken[i, j] = True
    return MFTCIModel(
        hyper=MFTCIHyper.from_dict(doc["hyper"]),
        student_factors=np.ascontiguousarray(np.asarray(doc["U"], dtype=np.float64).T),
        course_factors=np.ascontiguousarray(np.asarray(doc["V"], dtype=np.float64).T),
        influence=influence,
        co_taken=co_taken,
        student_index={k: int(v) for k, v in doc["student_index"].items()},
        course_index={k: int(v) for k, v in doc["course_index"].items()},
        clamp_lo=float(doc["clamp"][0]),
        clamp_hi=float(doc["clamp"][1]),
        train_mean=float(doc["train_mean"]),
        seen_students=np.asarray(doc["seen_students"], dtype=bool),
        seen_courses=np.asarray(doc["seen_courses"], dtype=bool),
        last_train_term=int(doc["last_train_term"]),
    )


def export_trace(state: AdmmState) -> str:
    """Objective/residual trace as CSV with columns iter,objective,primal_r1,primal_r2."""
    lines = ["iter,objective,primal_r1,primal_r2"]
    for i in range(state.n_iters):
        lines.append(
            f"{i + 1},{state.objectives[i]!r},{state.primal_r1[i]!r},{state.primal_r2[i]!r}"
        )
    return "\n".join(lines) + "\n"
