"""Acceptance suite: one check per criterion, one PASS/FAIL line each.

Run with pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import csv
import gc
import math
import os
import subprocess
import sys
import time
import timeit
from functools import lru_cache
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import norm

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import equilibrium_system, five_atom_chain, random_complex, simplicial  # noqa: E402
from polycomplex import bench, gp, kernels, smiles  # noqa: E402
from polycomplex.atomic import AtomSpec, build_atomic_complex  # noqa: E402
from polycomplex.cli import benchmark_config, read_config  # noqa: E402
from polycomplex.complex_core import (  # noqa: E402
    Cell,
    Complex,
    GlueMap,
    betti_numbers,
    boundary_matrix,
    glue,
    hodge_laplacian,
    laplacian_spectrum,
)
from polycomplex.elements import lookup  # noqa: E402
from polycomplex.featurize import deep_complex, fast_complex, flatten, zero_pad  # noqa: E402
from polycomplex.forcefield import classical_potential  # noqa: E402
from polycomplex.polyatomic import build_polyatomic_complex  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"
ESOL = ROOT / "data" / "ESOL.csv"
ESOL_TARGET = "measured log solubility in mols per litre"

RESULTS: dict[int, str] = {}


def record(n: int, title: str, ok: bool, detail: str) -> bool:
    line = f"[{n:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS[n] = line
    print(line, flush=True)
    return ok


@lru_cache(maxsize=1)
def esol_smiles() -> list[str]:
    with open(ESOL, newline="") as fh:
        return [row["smiles"] for row in csv.DictReader(fh)]


# 1 ---------------------------------------------------------------------------


def check_1(tmp: Path) -> tuple[bool, str]:
    reports = []
    start = time.perf_counter()
    for run, hashseed in enumerate(("1", "2")):
        out = tmp / f"run{run}"
        env = {**os.environ, "PYTHONHASHSEED": hashseed}
        proc = subprocess.run(
            [sys.executable, "-m", "polycomplex.cli", "benchmark",
             "--config", str(CONFIGS / "esol-small.cfg"), "--out", str(out)],
            capture_output=True, text=True, env=env,
        )
        if proc.returncode != 0:
            return False, f"run {run} exited {proc.returncode}: {proc.stderr.strip()}"
        reports.append((out / "report.json").read_bytes())
    elapsed = time.perf_counter() - start
    same = reports[0] == reports[1]
    ok = same and elapsed < 300
    return ok, f"two CLI runs {'byte-identical' if same else 'DIFFER'} ({len(reports[0])} bytes, {elapsed:.1f} s total)"


# 2 ---------------------------------------------------------------------------


def check_2() -> tuple[bool, str]:
    rng = np.random.default_rng(2024)
    pool = esol_smiles()
    picks = rng.choice(len(pool), size=100, replace=False)
    good = 0
    for idx in picks:
        symbols = smiles.inventory_from_smiles(pool[idx]).expand()
        ref = build_polyatomic_complex(symbols, seed=7)
        perm = rng.permutation(len(symbols))
        shuffled = build_polyatomic_complex([symbols[i] for i in perm], seed=7)
        same_fast = fast_complex(ref).values.tobytes() == fast_complex(shuffled).values.tobytes()
        same_deep = deep_complex(ref).values.tobytes() == deep_complex(shuffled).values.tobytes()
        good += same_fast and same_deep
    return good == 100, f"{good}/100 molecules give bit-identical Fast and Deep matrices after shuffling"


# 3 ---------------------------------------------------------------------------


def check_3() -> tuple[bool, str]:
    atoms = {
        "H": lookup("H"), "2H": lookup("H", 2), "He": lookup("He"),
        "C": lookup("C"), "N": lookup("N"), "O": lookup("O"),
    }
    fps = {k: build_atomic_complex(AtomSpec.from_record(r), rng=0).fingerprint() for k, r in atoms.items()}
    pairs = list(combinations(fps, 2))
    distinct = sum(fps[a] != fps[b] for a, b in pairs)
    return distinct == 15 and len(pairs) == 15, f"{distinct}/{len(pairs)} pairs have distinct fingerprints"


# 4 ---------------------------------------------------------------------------


def _interval():
    cx = glue(Complex.empty(), Cell(0, 0, "atom"))
    cx = glue(cx, Cell(1, 0, "atom"))
    return glue(cx, Cell(2, 1, "atom"), GlueMap.alternating(2, [0, 1]))


def check_4() -> tuple[bool, str]:
    rng = np.random.default_rng(4)
    bad_bb, min_eig, n_checked = 0, math.inf, 0
    for _ in range(1000):
        cx = random_complex(rng)
        for k in range(2, cx.max_dim + 1):
            bad_bb += (boundary_matrix(cx, k - 1) @ boundary_matrix(cx, k)).count_nonzero() != 0
            n_checked += 1
        for k in range(cx.max_dim + 1):
            spec = laplacian_spectrum(hodge_laplacian(cx, k))
            if spec.size:
                min_eig = min(min_eig, float(spec.min()))
    fixtures = {
        "interval": (betti_numbers(_interval()), (1, 0)),
        "3-cycle": (betti_numbers(simplicial([(0, 1), (1, 2), (0, 2)])), (1, 1)),
        "filled triangle": (betti_numbers(simplicial([(0, 1, 2)])), (1, 0, 0)),
    }
    betti_ok = all(got == want for got, want in fixtures.values())
    ok = bad_bb == 0 and betti_ok and min_eig >= -1e-10
    detail = (
        f"B_(k-1)B_k nonzero in {bad_bb}/{n_checked} products over 1000 complexes; "
        f"Betti {', '.join(f'{k}={v[0]}' for k, v in fixtures.items())}; min Laplacian eigenvalue {min_eig:.2e}"
    )
    return ok, detail


# 5 ---------------------------------------------------------------------------


def check_5() -> tuple[bool, str]:
    rng = np.random.default_rng(5)
    worst_identity = 0.0
    for _ in range(1000):
        x = rng.normal(size=int(rng.integers(1, 200))) * 10 ** rng.uniform(-3, 3)
        s2 = float(rng.uniform(0.1, 10))
        worst_identity = max(worst_identity, abs(kernels.tanimoto(x, x, s2) - s2) / s2)
    pad_mismatch = 0
    for _ in range(1000):
        n = int(rng.integers(1, 100))
        x, y = rng.normal(size=n), rng.normal(size=n)
        z = np.zeros(int(rng.integers(1, 100)))
        pad_mismatch += kernels.tanimoto(np.r_[x, z], np.r_[y, z]) != kernels.tanimoto(x, y)
    picks = np.random.default_rng(55).choice(len(esol_smiles()), 300, replace=False)
    mats = [fast_complex(build_polyatomic_complex(smiles.inventory_from_smiles(esol_smiles()[i]))) for i in picks]
    X = np.vstack([flatten(m) for m in zero_pad(mats)])
    K = kernels.gram("tanimoto", X, 1.0, gp.JITTER_LADDER[0]).values
    min_eig = float(np.linalg.eigvalsh(K).min())
    ok = worst_identity <= 1e-12 and pad_mismatch == 0 and min_eig >= -1e-8
    detail = (
        f"max |k(x,x)-s2|/s2 = {worst_identity:.1e}; {pad_mismatch}/1000 pad mismatches; "
        f"300-molecule Gram min eigenvalue {min_eig:.3e}"
    )
    return ok, detail


# 6 ---------------------------------------------------------------------------


def check_6() -> tuple[bool, str]:
    rng = np.random.default_rng(6)
    X = rng.random((30, 12))
    y = np.sin(X @ rng.normal(size=12)) + 0.1 * rng.normal(size=30)
    model = gp.fit(X, y, "tanimoto", n_epochs=3, noise=gp.NOISE_FLOOR)
    mean, _ = gp.predict(model, X)
    residual = float(np.max(np.abs(mean - y)))
    free = gp.fit(X, y, "tanimoto", n_epochs=5)
    Q = np.vstack([X, rng.random((500, 12)), np.zeros((1, 12))])
    excess = -math.inf
    for m in (model, free):
        _, var = gp.predict(m, Q)
        prior = m.sigma_f2 * gp._self_kernel(m, Q) + m.noise + m.jitter
        excess = max(excess, float(np.max(var - prior)))
    ok = residual < 1e-4 and excess <= 1e-8
    return ok, f"max train residual {residual:.2e}; max(posterior - prior variance) {excess:.2e}"


# 7 ---------------------------------------------------------------------------


def _crps_monte_carlo(mu: float, sigma: float, y: float, n: int, rng) -> float:
    """CRPS of the empirical law of n stratified normal draws."""
    u = (np.arange(n) + rng.random(n)) / n
    x = np.sort(mu + sigma * norm.ppf(u))
    first = np.mean(np.abs(x - y))
    pair = np.sum(x * (2 * np.arange(n) - n + 1)) / n**2  # sum_{i<j} (x_j - x_i) / n^2
    return float(first - pair)


def check_7() -> tuple[bool, str]:
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        mu, sigma, y = rng.normal(0, 2), rng.uniform(0.1, 3.0), rng.normal(0, 2)
        mc = _crps_monte_carlo(mu, sigma, y, 10**6, rng)
        worst = max(worst, abs(bench.crps_gaussian(mu, sigma, y) - mc))
    at_mean = bench.crps_gaussian(0.0, 1.0, 0.0)
    ok = worst <= 1e-3 and abs(at_mean - 0.2337) <= 5e-4
    return ok, f"max |closed form - MC| = {worst:.1e} over 20 triples; CRPS(mu=y, sigma=1) = {at_mean:.5f}"


# 8 ---------------------------------------------------------------------------

BANDS = {"esol": (1.4, 3.2), "freesolv": (2.5, 5.5)}


@lru_cache(maxsize=None)
def benchmark_rmse(name: str) -> tuple[float, float, float]:
    path = CONFIGS / f"{name}.cfg"
    values = read_config(path)
    values["jobs"] = "1"
    cfg = benchmark_config(values, path.parent)
    start = time.perf_counter()
    reports = bench.run_benchmark(cfg)
    elapsed = time.perf_counter() - start
    agg = next(iter(reports.values()))["aggregates"]["rmse"]
    return agg["mean"], agg["stderr"], elapsed


def check_8_part(name: str) -> tuple[bool, str]:
    rmse, se, elapsed = benchmark_rmse(name)
    lo, hi = BANDS[name]
    ok = lo <= rmse <= hi and elapsed < 1800
    return ok, f"{name} RMSE {rmse:.3f} ± {se:.3f} (band [{lo}, {hi}]) in {elapsed:.0f} s"


def check_8() -> tuple[bool, str]:
    parts = [check_8_part(name) for name in BANDS]
    return all(ok for ok, _ in parts), "; ".join(d for _, d in parts)


# 9 ---------------------------------------------------------------------------


def _encode(smi: str):
    return fast_complex(build_polyatomic_complex(smiles.inventory_from_smiles(smi)))


def check_9() -> tuple[bool, str]:
    sizes = list(range(1, 33))
    samples: dict[int, list[float]] = {n: [] for n in sizes}
    _encode("CCCC")  # warm caches
    rng = np.random.default_rng(9)
    # Sweep all sizes per repeat in random order so drift on the host spreads
    # evenly over sizes.  The per-size median is used: on a shared host the
    # minimum comes from rare fast bursts that only some sizes catch, while
    # the median is stable.  timeit keeps the garbage collector out.
    for _ in range(21):
        for n in rng.permutation(sizes):
            smi = "C" * int(n)
            gc.collect()
            samples[int(n)].append(timeit.Timer(lambda: _encode(smi)).timeit(number=1))
    counts = [3 * n + 2 for n in sizes]
    times = [float(np.median(samples[n])) for n in sizes]
    counts, times = np.array(counts, float), np.array(times)
    slope, intercept = np.polyfit(counts, times, 1)
    fitted = slope * counts + intercept
    r2 = 1 - np.sum((times - fitted) ** 2) / np.sum((times - times.mean()) ** 2)
    ok = r2 >= 0.95
    return ok, f"R^2 = {r2:.4f} for time vs atom count over C1-C32 ({slope * 1e3:.3f} ms/atom)"


# 10 --------------------------------------------------------------------------


def check_10() -> tuple[bool, str]:
    pool = esol_smiles()
    parsed = 0
    for smi in pool:
        try:
            smiles.atom_inventory(smiles.parse(smi))
            parsed += 1
        except smiles.SmilesError:
            pass
    rate = parsed / len(pool)
    rng = np.random.default_rng(10)
    crashes, rejected = [], 0
    for _ in range(10**5):
        data = rng.integers(0, 256, size=int(rng.integers(0, 48)), dtype=np.uint8).tobytes()
        try:
            smiles.atom_inventory(smiles.parse(data))
        except smiles.SmilesError:
            rejected += 1
        except Exception as exc:  # anything else is a crash
            crashes.append((data, repr(exc)))
    ok = len(pool) == 1128 and rate >= 0.99 and not crashes
    return ok, (
        f"{parsed}/{len(pool)} ESOL SMILES parse ({rate:.2%}); "
        f"10^5 random byte strings: {len(crashes)} crashes, {rejected} clean errors"
    )


# 11 --------------------------------------------------------------------------


def check_11() -> tuple[bool, str]:
    from scipy.spatial.transform import Rotation

    cx, xyz, params = five_atom_chain()
    ref, parts = classical_potential(cx, xyz, params)
    worst_rel = 0.0
    rng = np.random.default_rng(11)
    for seed in range(50):
        R = Rotation.random(random_state=seed).as_matrix()
        moved = xyz @ R.T + rng.normal(size=3) * 5
        worst_rel = max(worst_rel, abs(classical_potential(cx, moved, params)[0] - ref) / abs(ref))
    sum_err = abs(sum(parts[k] for k in ("bond", "angle", "dihedral", "lj", "coulomb")) - ref)
    cx_eq, params_eq = equilibrium_system(cx, xyz, params)
    _, eq_parts = classical_potential(cx_eq, xyz, params_eq)
    ok = worst_rel <= 1e-9 and sum_err <= 1e-12 and eq_parts["bond"] == 0.0 and eq_parts["angle"] == 0.0
    return ok, (
        f"rigid-motion rel. change {worst_rel:.1e}; |sum(breakdown) - total| = {sum_err:.1e}; "
        f"harmonic terms at equilibrium bond={eq_parts['bond']!r} angle={eq_parts['angle']!r}"
    )


# pytest wrappers -------------------------------------------------------------

TITLES = {
    1: "determinism", 2: "index invariance", 3: "atomic fingerprint uniqueness",
    4: "topology suite", 5: "kernel suite", 6: "GP suite", 7: "CRPS oracle",
    8: "benchmark bands", 9: "linear encoding cost", 10: "parser robustness",
    11: "force-model suite",
}


def _run(n: int, *args):
    ok, detail = globals()[f"check_{n}"](*args)
    assert record(n, TITLES[n], ok, detail), detail


def test_criterion_01_determinism(tmp_path):
    _run(1, tmp_path)


def test_criterion_02_index_invariance():
    _run(2)


def test_criterion_03_fingerprint_uniqueness():
    _run(3)


def test_criterion_04_topology():
    _run(4)


def test_criterion_05_kernels():
    _run(5)


def test_criterion_06_gp():
    _run(6)


def test_criterion_07_crps():
    _run(7)


@pytest.mark.slow
def test_criterion_08_benchmark_bands():
    _run(8)


def test_criterion_09_linear_cost():
    _run(9)


def test_criterion_10_parser_robustness():
    _run(10)


def test_criterion_11_force_model():
    _run(11)


if __name__ == "__main__":
    import tempfile

    failed = 0
    for n in sorted(TITLES):
        args = (Path(tempfile.mkdtemp()),) if n == 1 else ()
        ok, detail = globals()[f"check_{n}"](*args)
        failed += not record(n, TITLES[n], ok, detail)
    sys.exit(1 if failed else 0)
