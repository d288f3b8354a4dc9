"""Benchmark harness: CSV ingestion, splits, metrics and the trial loop.

A run encodes every molecule once, builds one unit-scale Gram matrix for the
whole dataset, and then for trial ``t`` splits with seed ``seed + t``, fits an
exact GP on the training block and scores the test block.  Reports contain no
timings, so two runs with the same configuration serialise to identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from . import elements, gp, kernels, smiles
from .atomic import AtomConfig
from .featurize import featurize, flatten, zero_pad
from .polyatomic import build_polyatomic_complex
from .smiles import AtomInventory

MISSING = {"", "na", "nan", "none", "null", "?"}


class BenchError(ValueError):
    pass


class MissingColumn(BenchError):
    pass


class UnparseableRow(BenchError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class AllMissingColumn(BenchError):
    pass


class DegenerateSplit(BenchError):
    pass


class LengthMismatch(BenchError):
    pass


class EmptyInput(BenchError):
    pass


class NonPositiveSigma(BenchError):
    pass


class TooFewValues(BenchError):
    pass


class TrialFailed(BenchError):
    pass


class ConfigError(BenchError):
    pass


class FormulaError(BenchError):
    pass


@dataclass
class Dataset:
    ids: list[str]
    smiles: list[str]
    targets: dict[str, np.ndarray]
    imputed: dict[str, dict] = field(default_factory=dict)  # column -> {"rows": [...], "fill": value}

    def __len__(self) -> int:
        return len(self.smiles)

    def subset(self, rows: Sequence[int]) -> "Dataset":
        rows = list(rows)
        return Dataset(
            [self.ids[i] for i in rows],
            [self.smiles[i] for i in rows],
            {k: v[rows] for k, v in self.targets.items()},
            self.imputed,
        )


def _parse_number(text: str) -> float | None:
    if text.strip().lower() in MISSING:
        return None
    return float(text)


def load_dataset(
    path: str | Path,
    smiles_col: str = "smiles",
    target_cols: Sequence[str] = (),
    id_col: str | None = None,
) -> Dataset:
    """Read a CSV and mean-impute missing target cells column by column."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in [smiles_col, *target_cols, *([id_col] if id_col else [])]:
            if col not in header:
                raise MissingColumn(f"{path}: no column {col!r} (have {header})")
        ids, smis = [], []
        raw: dict[str, list[float | None]] = {c: [] for c in target_cols}
        for row in reader:
            line = reader.line_num
            if None in row or any(row.get(c) is None for c in header):
                raise UnparseableRow("wrong number of fields", line)
            smis.append(row[smiles_col].strip())
            ids.append(row[id_col] if id_col else str(len(ids)))
            for c in target_cols:
                try:
                    raw[c].append(_parse_number(row[c]))
                except ValueError:
                    raise UnparseableRow(f"column {c!r} value {row[c]!r} is not a number", line) from None
    targets, imputed = {}, {}
    for c in target_cols:
        observed = [v for v in raw[c] if v is not None]
        if not observed:
            raise AllMissingColumn(f"column {c!r} has no observed values")
        missing = [i for i, v in enumerate(raw[c]) if v is None]
        fill = math.fsum(observed) / len(observed)
        targets[c] = np.array([fill if v is None else v for v in raw[c]], dtype=float)
        if missing:
            imputed[c] = {"rows": missing, "fill": fill}
    return Dataset(ids, smis, targets, imputed)


def split(n: int, ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random partition of ``range(n)``; both parts sorted.

    The training part has ceil(n * ratio) elements, kept within [1, n - 1] so
    neither side is empty.
    """
    if not 0 < ratio < 1:
        raise DegenerateSplit(f"ratio must lie strictly between 0 and 1, got {ratio}")
    if n < 2:
        raise DegenerateSplit(f"cannot split {n} rows into non-empty train and test sets")
    # the small offset keeps e.g. 100 * 0.67 = 67.00000000000001 from rounding up
    n_train = min(max(math.ceil(n * ratio - 1e-9), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _check_pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(truth, dtype=float).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"{p.size} predictions for {t.size} targets")
    if p.size == 0:
        raise EmptyInput("metrics need at least one value")
    return p, t


def mae(pred, truth) -> float:
    p, t = _check_pair(pred, truth)
    return float(np.mean(np.abs(p - t)))


def rmse(pred, truth) -> float:
    p, t = _check_pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def crps_gaussian(mu, sigma, y):
    """CRPS of N(mu, sigma^2) at y: sigma [z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi)]."""
    mu, sigma, y = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (mu, sigma, y)))
    if np.any(~(sigma > 0)):
        raise NonPositiveSigma("sigma must be strictly positive")
    z = (y - mu) / sigma
    out = sigma * (z * (2 * norm.cdf(z) - 1) + 2 * norm.pdf(z) - 1 / math.sqrt(math.pi))
    return float(out) if out.ndim == 0 else out


def mean_crps(mu, sigma, y) -> float:
    return float(np.mean(crps_gaussian(mu, sigma, y)))


def bootstrap_stderr(values, n_resamples: int = 1000, seed: int = 0) -> float:
    """Standard deviation of the mean over ``n_resamples`` resamples with replacement."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise TooFewValues("bootstrap needs at least two values")
    if n_resamples < 100:
        raise BenchError("n_resamples must be at least 100")
    idx = np.random.default_rng(seed).integers(0, v.size, size=(n_resamples, v.size))
    return float(np.std(v[idx].mean(axis=1)))


_FORMULA_TOKEN = re.compile(r"([A-Z][a-z]?)|(\d+(?:\.\d+)?)|([(\[])|([)\]])|(\s+)")


def parse_formula(formula: str) -> AtomInventory:
    """Composition string (e.g. ``"LuTaO4"``, ``"Ca3(PO4)2"``) to an inventory.

    Element counts must be whole numbers once multiplied out.
    """
    if not formula or not formula.strip():
        raise FormulaError("empty formula")
    stack: list[dict[str, float]] = [{}]
    pos = 0

    def multiplier() -> float:
        nonlocal pos
        m = re.compile(r"\d+(?:\.\d+)?").match(formula, pos)
        if m:
            pos = m.end()
            return float(m.group())
        return 1.0

    while pos < len(formula):
        m = _FORMULA_TOKEN.match(formula, pos)
        if m is None:
            raise FormulaError(f"unexpected character {formula[pos]!r} at {pos}")
        pos = m.end()
        symbol, number, opening, closing, _ = m.groups()
        if symbol:
            if not elements.is_element(symbol):
                raise FormulaError(f"unknown element {symbol!r}")
            count = multiplier()
            stack[-1][symbol] = stack[-1].get(symbol, 0.0) + count
        elif number:
            raise FormulaError(f"count {number} without an element at {m.start()}")
        elif opening:
            stack.append({})
        elif closing:
            if len(stack) == 1:
                raise FormulaError(f"unbalanced bracket at {m.start()}")
            group = stack.pop()
            k = multiplier()
            for sym, n in group.items():
                stack[-1][sym] = stack[-1].get(sym, 0.0) + n * k
    if len(stack) != 1:
        raise FormulaError("unclosed bracket")
    records = []
    for sym, n in stack[0].items():
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise FormulaError(f"non-integer count {n} for {sym}")
        records.extend([elements.lookup(sym)] * int(round(n)))
    return AtomInventory.from_records(records)


@dataclass
class BenchmarkConfig:
    dataset: str
    target_cols: list[str]
    smiles_col: str = "smiles"
    representation: str = "fast"  # fast | deep | smiles | graph
    kernel: str = "tanimoto"  # tanimoto | string | wl
    n_trials: int = 20
    n_epochs: int = 5
    train_ratio: float = 0.67
    seed: int = 0
    n_resamples: int = 1000
    max_rows: int | None = None
    include_hydrogens: bool = True
    wl_iterations: int = 3
    jobs: int = 1
    atom_config: AtomConfig = field(default_factory=AtomConfig)

    def validate(self) -> None:
        if self.representation not in ("fast", "deep", "smiles", "graph"):
            raise ConfigError(f"representation: unknown value {self.representation!r}")
        if self.kernel not in kernels.KERNELS:
            raise ConfigError(f"kernel: unknown value {self.kernel!r}")
        needs = {"tanimoto": ("fast", "deep"), "string": ("smiles",), "wl": ("graph",)}
        if self.representation not in needs[self.kernel]:
            raise ConfigError(
                f"kernel: {self.kernel!r} needs representation {' or '.join(needs[self.kernel])}"
            )
        if self.n_trials < 1:
            raise ConfigError("n_trials: must be at least 1")
        if self.n_epochs < 0:
            raise ConfigError("n_epochs: must be non-negative")
        if not 0 < self.train_ratio < 1:
            raise ConfigError("train_ratio: must lie strictly between 0 and 1")
        if self.n_resamples < 100:
            raise ConfigError("n_resamples: must be at least 100")
        if self.max_rows is not None and self.max_rows < 2:
            raise ConfigError("max_rows: must be at least 2")
        if not self.target_cols:
            raise ConfigError("target_cols: at least one target column is required")
        if self.jobs < 1:
            raise ConfigError("jobs: must be at least 1")

    def echo(self) -> dict:
        out = asdict(self)
        out["atom_config"] = asdict(self.atom_config)
        out["dataset"] = Path(self.dataset).name
        out.pop("jobs")
        return out


def encode_smiles(
    smi: str,
    featurizer: str = "fast",
    config: AtomConfig | None = None,
    seed: int = 0,
    include_hydrogens: bool = True,
):
    inventory = smiles.inventory_from_smiles(smi, include_hydrogens)
    poly = build_polyatomic_complex(inventory, config=config, seed=seed)
    return featurize(poly, featurizer)


def representations(data: Dataset, cfg: BenchmarkConfig) -> tuple[list[int], object, list[dict]]:
    """Encode every row; returns kept row indices, the model inputs and skipped rows."""
    kept, items, skipped = [], [], []
    for i, smi in enumerate(data.smiles):
        try:
            if cfg.representation in ("fast", "deep"):
                item = encode_smiles(smi, cfg.representation, cfg.atom_config, cfg.seed, cfg.include_hydrogens)
            elif cfg.representation == "graph":
                item = smiles.parse(smi)
            else:
                item = smi
        except smiles.SmilesError as exc:
            skipped.append({"row": i, "id": data.ids[i], "error": f"{type(exc).__name__}: {exc}"})
            continue
        kept.append(i)
        items.append(item)
    if cfg.representation in ("fast", "deep") and items:
        items = np.vstack([flatten(m) for m in zero_pad(items)])
    return kept, items, skipped


def _trial(t: int, cfg: BenchmarkConfig, K: np.ndarray, k_diag: np.ndarray, y: np.ndarray) -> dict:
    seed = cfg.seed + t
    train, test = split(len(y), cfg.train_ratio, seed)
    model = gp.fit_gram(K[np.ix_(train, train)], y[train], cfg.n_epochs)
    mu, var = gp.predict_gram(model, K[np.ix_(test, train)], k_diag[test])
    sigma = np.sqrt(np.maximum(var, gp.NOISE_FLOOR))
    return {
        "trial": t,
        "seed": seed,
        "n_train": int(len(train)),
        "n_test": int(len(test)),
        "mae": mae(mu, y[test]),
        "rmse": rmse(mu, y[test]),
        "crps": mean_crps(mu, sigma, y[test]),
        "sigma_f2": model.sigma_f2,
        "noise": model.noise,
        "lml": gp.log_marginal_likelihood(model),
    }


def _aggregate(trials: list[dict], n_resamples: int, seed: int) -> dict:
    out = {}
    for metric in ("mae", "rmse", "crps"):
        values = [tr[metric] for tr in trials]
        stderr = bootstrap_stderr(values, n_resamples, seed) if len(values) >= 2 else None
        out[metric] = {"mean": math.fsum(values) / len(values), "stderr": stderr}
    return out


def run_benchmark(cfg: BenchmarkConfig) -> dict[str, dict]:
    """Run the trial loop for every target column; returns ``{target: report}``."""
    cfg.validate()
    data = load_dataset(cfg.dataset, cfg.smiles_col, cfg.target_cols)
    if cfg.max_rows is not None:
        data = data.subset(range(min(cfg.max_rows, len(data))))
    kept, items, skipped = representations(data, cfg)
    if len(kept) < 2:
        raise BenchError("fewer than two usable molecules")
    K = kernels.gram(cfg.kernel, items, 1.0, 0.0, cfg.wl_iterations).values
    k_diag = np.diag(K).copy()

    reports = {}
    for target in cfg.target_cols:
        y = data.targets[target][kept]

        def run(t, y=y):
            try:
                return _trial(t, cfg, K, k_diag, y)
            except Exception as exc:
                raise TrialFailed(f"trial {t} failed: {exc}") from exc

        if cfg.jobs > 1:
            with ThreadPoolExecutor(cfg.jobs) as pool:
                trials = list(pool.map(run, range(cfg.n_trials)))
        else:
            trials = [run(t) for t in range(cfg.n_trials)]
        imputed = data.imputed.get(target)
        reports[target] = {
            "config": {**cfg.echo(), "target": target},
            "n_rows": len(kept),
            "skipped": skipped,
            "imputed_rows": len(imputed["rows"]) if imputed else 0,
            "trials": trials,
            "aggregates": _aggregate(trials, cfg.n_resamples, cfg.seed),
        }
    return reports


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"
