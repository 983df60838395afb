"""Exit criteria for the package, one test (or group) per criterion.

Each check records a PASS/FAIL line that is printed in the pytest terminal
summary under "acceptance criteria".
"""
import csv
import json
import math
import time

import numpy as np
import pytest

from transtab import cli, finite_diff
from transtab import quaternion as qt
from transtab import rigidbody as rb
from transtab.bounds import reference_gains
from transtab.stabilizer import check_contraction, stabilized_step_gradient, stabilized_step_submersion

from conftest import ACCEPTANCE_LINES, random_omegas, sublevel_points, tube_points, ulps

# seed 42, 200 runs, 100 epochs; frozen from the pilot run
DESK_REGRESSION = {
    ("w", "state_error"): (0.14078942958695811, 0.09540841059243409),
    ("w", "manifold_dist"): (0.03861157476811499, 0.036659457462206384),
    ("wo", "state_error"): (0.15018171084800616, 0.10306053025668252),
    ("wo", "manifold_dist"): (0.05226812822330642, 0.049324645600897915),
}


def record(criterion, ok, detail):
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}")
    assert ok, f"{criterion}: {detail}"


def timed_main(argv):
    start = time.perf_counter()
    code = cli.main(argv)
    return code, time.perf_counter() - start


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def observe_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("observe")
    code, elapsed = timed_main(["observe", "--runs", "200", "--epochs", "100", "--seed", "42", "--out-dir", str(out)])
    assert code == 0
    rows = {(r["observer"], r["metric"]): {k: float(r[k]) for k in ("mean", "std", "max", "min")}
            for r in read_csv(out / "observe_table.csv")}
    return rows, elapsed


def test_c1_gain_certification(tmp_path, capsys):
    code, elapsed = timed_main(["bounds", "--epsilon", "0.5", "--delta", "0.059", "--out-dir", str(tmp_path)])
    data = json.loads(capsys.readouterr().out)
    ok = (
        code == 0
        and 3.69 <= data["L"] <= 3.70
        and 0.0159 <= data["alpha_max"] <= 0.0160
        and abs(data["b"] - 4.686) <= 1e-3
        and data["d"] >= 15.87
        and math.isclose(data["alpha_max"], data["delta"] / data["L"], rel_tol=1e-5)
        and data["alpha_max"] < 2 / data["d"]
        and elapsed < 1.0
    )
    record(
        "C1 gain certification",
        ok,
        f"L={data['L']} alpha_max={data['alpha_max']} b={data['b']} d={data['d']} (>=15.87) "
        f"governed by delta/L, {elapsed:.3f}s",
    )


def test_c2_contraction_property():
    start = time.perf_counter()
    rng = np.random.default_rng(42)
    gains = reference_gains(alpha=0.01)
    x = sublevel_points(rng, 10_000)
    om = random_omegas(rng, 10_000, 0.0, 0.5)
    x1 = rb.stabilized_step(x, om, gains.alpha)
    v0, v1 = rb.s3_value(x), rb.s3_value(x1)
    assert v0.max() <= 0.5
    rep = check_contraction(v0, v1, gains)
    violations = int(np.sum(~rep.satisfied))
    elapsed = time.perf_counter() - start
    record(
        "C2 contraction property",
        violations == 0 and elapsed < 5.0 and abs(gains.contraction - 0.9569) < 1e-4,
        f"{violations} violations of V1 <= {gains.contraction:.4f} V0 + 1e-12 on 10^4 points, "
        f"worst ratio {rep.ratio.max():.4f}, {elapsed:.3f}s",
    )


def test_c3_convergence_reproduction(tmp_path):
    code, elapsed = timed_main(
        ["converge", "--runs", "200", "--epochs", "100", "--alpha", "0.01", "--seed", "42", "--out-dir", str(tmp_path)]
    )
    rows = read_csv(tmp_path / "converge_dist.csv")
    mean = np.array([float(r["mean"]) for r in rows])
    ok = (
        code == 0
        and len(mean) == 101
        and bool(np.all(np.diff(mean[1:]) <= 0))
        and mean[100] < 1e-3
        and 0.15 <= mean[0] <= 0.45
        and elapsed < 10.0
    )
    record(
        "C3 convergence at desk scale",
        ok,
        f"epoch0 mean={mean[0]:.4f} epoch100 mean={mean[100]:.3e} "
        f"non-increasing after epoch 1={bool(np.all(np.diff(mean[1:]) <= 0))}, {elapsed:.2f}s",
    )


def test_c4a_state_error_direction(observe_run):
    rows, elapsed = observe_run
    w, wo = rows["w", "state_error"]["mean"], rows["wo", "state_error"]["mean"]
    record("C4a |q - q_hat| mean w < wo", w < wo and elapsed < 30.0, f"w={w:.4f} wo={wo:.4f}, {elapsed:.2f}s")


def test_c4b_manifold_distance_bands(observe_run):
    rows, _ = observe_run
    w, wo = rows["w", "manifold_dist"]["mean"], rows["wo", "manifold_dist"]["mean"]
    record(
        "C4b dist(q_hat, S^3) mean bands",
        0.04 <= w <= 0.17 and 0.06 <= wo <= 0.22,
        f"w={w:.4f} (band [0.04, 0.17]) wo={wo:.4f} (band [0.06, 0.22]); "
        "dist is the Euclidean |norm - 1|",
    )


def test_c4c_manifold_distance_std_ratio(observe_run):
    rows, _ = observe_run
    ratio = rows["wo", "manifold_dist"]["std"] / rows["w", "manifold_dist"]["std"]
    record("C4c std(dist) ratio wo/w >= 1.2", ratio >= 1.2, f"ratio={ratio:.3f}")


def test_c4d_desk_regression(observe_run):
    rows, _ = observe_run
    worst = max(
        max(abs(rows[k]["mean"] - m) / m, abs(rows[k]["std"] - s) / s) for k, (m, s) in DESK_REGRESSION.items()
    )
    record("C4d desk-scale regression constants", worst <= 1e-12, f"max relative deviation {worst:.1e}")


def test_c5_mode_equivalence():
    rng = np.random.default_rng(5)
    x = tube_points(rng, 1000)
    a = stabilized_step_gradient(x, rb.s3_half_constraint(), 0.01)
    b = stabilized_step_submersion(x, rb.s3_submersion(), 0.01)
    diff = float(np.max(np.abs(a - b)))
    record("C5 gradient vs submersion mode", diff <= 1e-12, f"max componentwise difference {diff:.1e} on 10^3 tube points")


def test_c6_numerical_analysis():
    rng = np.random.default_rng(6)
    x = tube_points(rng, 100)
    fd_err = finite_diff.max_relative_error(finite_diff.gradient(rb.s3_value, x), rb.s3_gradient(x))
    lhs = np.sum(rb.s3_gradient(x) ** 2, axis=1)
    rhs = 16 * qt.norm_squared(x) * rb.s3_value(x)
    worst_ulps = float(np.max(np.abs(lhs - rhs) / ulps(rhs, 1)))
    record(
        "C6 finite differences and gradient identity",
        fd_err <= 1e-6 and worst_ulps <= 8,
        f"FD relative error {fd_err:.1e}; |grad V|^2 vs 16|x|^2 V worst {worst_ulps:.1f} ulps",
    )


def test_c7_determinism_across_threads(tmp_path):
    digests = {}
    for cmd, extra in (("converge", []), ("observe", [])):
        for threads in ("1", "4"):
            out = tmp_path / f"{cmd}{threads}"
            code = cli.main([cmd, "--seed", "7", "--runs", "200", "--threads", threads, "--out-dir", str(out)] + extra)
            assert code == 0
            digests[cmd, threads] = {p.name: p.read_bytes() for p in out.glob("*.csv")}
    same = all(digests[c, "1"] == digests[c, "4"] and digests[c, "1"] for c in ("converge", "observe"))
    files = sum(len(digests[c, "1"]) for c in ("converge", "observe"))
    record("C7 byte-identical CSVs for threads {1, 4}", same, f"{files} CSV files compared")
