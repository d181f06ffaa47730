#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python reference backend.

Both backends are imported directly (bypassing the env-var switch) so a
single process can time them side by side on the same inputs. The workload
mirrors what the trainers actually do: an SGD sweep over observed dyads and
the history scatter/gather passes used by the influence updates.

Usage:
    python benchmarks/bench_kernels.py [--students N] [--courses M]
                                       [--reps R] [--seed S]
"""

import argparse
import statistics
import time

import numpy as np

from gradecast._kernels import _reference

try:
    from gradecast._kernels import _fastpath
except ImportError:
    _fastpath = None


def build_workload(n_students, m_courses, seed, hist_len=6):
    rng = np.random.default_rng(seed)
    n_dyads = n_students * 4
    s_idx = rng.integers(0, n_students, n_dyads).astype(np.int64)
    c_idx = rng.integers(0, m_courses, n_dyads).astype(np.int64)
    targets = rng.uniform(1.0, 4.0, n_dyads)
    order = rng.permutation(n_dyads).astype(np.int64)
    k = 10
    Us = rng.uniform(0.0, 0.1, (n_students, k))
    Vs = rng.uniform(0.0, 0.1, (m_courses, k))
    p = np.zeros(n_students)
    q = np.zeros(m_courses)
    A = rng.uniform(0.0, 0.5, (m_courses, m_courses))
    lens = rng.integers(0, hist_len + 1, n_dyads)
    hist_ptr = np.zeros(n_dyads + 1, dtype=np.int64)
    np.cumsum(lens, out=hist_ptr[1:])
    total = int(hist_ptr[-1])
    hist_idx = rng.integers(0, m_courses, total).astype(np.int64)
    hist_w = rng.uniform(0.1, 1.0, total)
    resid = rng.normal(0.0, 0.3, n_dyads)
    return {
        "targets": targets, "s_idx": s_idx, "c_idx": c_idx, "order": order,
        "Us": Us, "Vs": Vs, "p": p, "q": q, "A": A,
        "hist_ptr": hist_ptr, "hist_idx": hist_idx, "hist_w": hist_w,
        "resid": resid, "m": m_courses,
    }


def time_call(fn, reps):
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def bench_backend(impl, w, reps):
    # sgd_epoch mutates the factors, so each rep works on a fresh copy
    def run_sgd():
        Us = w["Us"].copy()
        Vs = w["Vs"].copy()
        p = w["p"].copy()
        q = w["q"].copy()
        impl.sgd_epoch(w["targets"], w["s_idx"], w["c_idx"], w["order"],
                       Us, Vs, p, q, 2.5, 0.005, 0.01, True, False)

    out = {"sgd_epoch": time_call(run_sgd, reps)}
    out["delta_for_dyads"] = time_call(
        lambda: impl.delta_for_dyads(w["A"], w["c_idx"], w["hist_ptr"],
                                     w["hist_idx"], w["hist_w"]), reps)
    out["predict_dyads"] = time_call(
        lambda: impl.predict_dyads(w["Us"], w["Vs"], w["A"], w["s_idx"],
                                   w["c_idx"], w["hist_ptr"], w["hist_idx"],
                                   w["hist_w"]), reps)
    out["influence_data_term"] = time_call(
        lambda: impl.influence_data_term(w["resid"], w["c_idx"], w["hist_ptr"],
                                         w["hist_idx"], w["hist_w"], w["m"]), reps)
    return out


def check_parity(w):
    """Largest |compiled - reference| across all four kernels."""
    worst = 0.0
    ref_args = (w["A"], w["c_idx"], w["hist_ptr"], w["hist_idx"], w["hist_w"])
    worst = max(worst, float(np.max(np.abs(
        _fastpath.delta_for_dyads(*ref_args) - _reference.delta_for_dyads(*ref_args)))))
    pred_args = (w["Us"], w["Vs"], w["A"], w["s_idx"], w["c_idx"],
                 w["hist_ptr"], w["hist_idx"], w["hist_w"])
    worst = max(worst, float(np.max(np.abs(
        _fastpath.predict_dyads(*pred_args) - _reference.predict_dyads(*pred_args)))))
    dat_args = (w["resid"], w["c_idx"], w["hist_ptr"], w["hist_idx"], w["hist_w"], w["m"])
    worst = max(worst, float(np.max(np.abs(
        _fastpath.influence_data_term(*dat_args) - _reference.influence_data_term(*dat_args)))))
    state = {}
    for name, impl in (("fast", _fastpath), ("ref", _reference)):
        Us = w["Us"].copy()
        Vs = w["Vs"].copy()
        p = w["p"].copy()
        q = w["q"].copy()
        mu = impl.sgd_epoch(w["targets"], w["s_idx"], w["c_idx"], w["order"],
                            Us, Vs, p, q, 2.5, 0.005, 0.01, True, False)
        state[name] = (Us, Vs, p, q, mu)
    for a, b in zip(state["fast"][:4], state["ref"][:4]):
        worst = max(worst, float(np.max(np.abs(a - b))))
    worst = max(worst, abs(state["fast"][4] - state["ref"][4]))
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--students", type=int, default=2000)
    ap.add_argument("--courses", type=int, default=60)
    ap.add_argument("--reps", type=int, default=9)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    w = build_workload(args.students, args.courses, args.seed)
    n_dyads = len(w["targets"])
    print(f"workload: {args.students} students, {args.courses} courses, "
          f"{n_dyads} dyads, {len(w['hist_idx'])} history entries, seed={args.seed}")

    ref = bench_backend(_reference, w, args.reps)
    if _fastpath is None:
        print("compiled backend not built; showing reference timings only")
        for name, t in ref.items():
            print(f"  {name:<22} {t * 1e3:10.3f} ms")
        return

    fast = bench_backend(_fastpath, w, args.reps)
    print(f"parity: max |compiled - reference| = {check_parity(w):.3e}")
    print(f"{'kernel':<22} {'reference':>12} {'compiled':>12} {'speedup':>9}")
    for name in ref:
        r, f = ref[name], fast[name]
        print(f"{name:<22} {r * 1e3:10.3f} ms {f * 1e3:10.3f} ms {r / f:8.1f}x")


if __name__ == "__main__":
    main()
