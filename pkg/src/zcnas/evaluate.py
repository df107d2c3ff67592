"""Evaluation of proxy rankings against fully trained results.

The central object is a ResultsTable: one row per architecture, holding
every proxy score plus the trained validation/test macro F1. All metrics
are pure functions over the table.

Ordering conventions, applied everywhere:
  - scores and F1 are higher-is-better;
  - ties break by spec_hash ascending, so results never depend on
    completion order;
  - degenerate proxy scores carry a -inf sentinel and sort last;
  - diverged runs rank last in the trained ordering and are excluded
    from best-trained selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import WindowedDataset, add_gaussian_noise
from .ranking import average_ranks
from .train import RunRecord, evaluate_f1

NEG_INF = float("-inf")


@dataclass
class ResultsTable:
    spec_hashes: list[str]
    proxy_values: dict[str, np.ndarray]     # proxy -> [N], -inf where degenerate
    val_f1: np.ndarray                      # [N]
    test_f1: np.ndarray                     # [N]
    diverged: np.ndarray                    # [N] bool

    def __post_init__(self):
        n = len(self.spec_hashes)
        if len(set(self.spec_hashes)) != n:
            raise ValueError("spec_hash values must be unique")
        self.val_f1 = np.asarray(self.val_f1, dtype=np.float64)
        self.test_f1 = np.asarray(self.test_f1, dtype=np.float64)
        self.diverged = np.asarray(self.diverged, dtype=bool)
        for name in ("val_f1", "test_f1", "diverged"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"column {name} must have length {n}")
        cleaned = {}
        for proxy, vals in self.proxy_values.items():
            vals = np.asarray(vals, dtype=np.float64)
            if vals.shape != (n,):
                raise ValueError(f"proxy column {proxy!r} must have length {n}")
            cleaned[proxy] = np.where(np.isnan(vals), NEG_INF, vals)
        self.proxy_values = cleaned

    def __len__(self) -> int:
        return len(self.spec_hashes)

    @classmethod
    def from_records(cls, records: list[RunRecord],
                     scores: dict[str, dict[str, float]],
                     proxies: tuple[str, ...]) -> "ResultsTable":
        """Join run records with per-architecture proxy values; rows are
        ordered by spec_hash so the table is canonical."""
        records = sorted(records, key=lambda r: r.spec_hash)
        hashes = [r.spec_hash for r in records]
        for h in hashes:
            if h not in scores:
                raise ValueError(f"no proxy scores for architecture {h}")
            for p in proxies:
                if p not in scores[h]:
                    raise ValueError(f"architecture {h} missing proxy {p!r}")
        return cls(
            spec_hashes=hashes,
            proxy_values={p: np.array([scores[h][p] for h in hashes]) for p in proxies},
            val_f1=np.array([r.best_val_f1 for r in records]),
            test_f1=np.array([r.test_f1_at_best_val for r in records]),
            diverged=np.array([r.diverged for r in records]),
        )

    def proxy_column(self, proxy: str) -> np.ndarray:
        if proxy not in self.proxy_values:
            raise KeyError(f"table has no proxy column {proxy!r}")
        return self.proxy_values[proxy]

    def trained_values(self) -> np.ndarray:
        """Validation F1 with diverged rows forced to the bottom."""
        return np.where(self.diverged, NEG_INF, self.val_f1)


def order_by(table: ResultsTable, values: np.ndarray) -> list[int]:
    """Row indices sorted by value descending, spec_hash ascending on ties."""
    return sorted(range(len(table)),
                  key=lambda i: (-values[i], table.spec_hashes[i]))


def best_trained_test(table: ResultsTable) -> float:
    """Test F1 of the row with the highest validation F1 (diverged excluded)."""
    trained = table.trained_values()
    if np.all(trained == NEG_INF):
        raise ValueError("every run diverged; no best trained model exists")
    best = order_by(table, trained)[0]
    return float(table.test_f1[best])


def top_k_candidate(table: ResultsTable, proxy: str, k: int) -> int:
    """Row index of the best-validation row among the proxy's top k."""
    n = len(table)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    top = order_by(table, table.proxy_column(proxy))[:k]
    trained = table.trained_values()
    return min(top, key=lambda i: (-trained[i], table.spec_hashes[i]))


def delta_k(table: ResultsTable, proxy: str, k: int) -> float:
    """Gap between the overall best trained test F1 and the test F1 of
    the candidate picked from the proxy's top k (by validation F1)."""
    cand = top_k_candidate(table, proxy, k)
    return best_trained_test(table) - float(table.test_f1[cand])


def delta_percent(table: ResultsTable, proxy: str, pct: float = 10.0) -> float:
    if not 0 < pct <= 100:
        raise ValueError(f"pct must lie in (0, 100], got {pct}")
    k = math.ceil(pct * len(table) / 100.0)
    return delta_k(table, proxy, k)


def talent_rate(table: ResultsTable, proxy: str, pct: float = 10.0) -> float:
    """Percentage of the proxy's top pct% that also sit in the trained
    (validation F1) top pct%."""
    n = len(table)
    if n < 10:
        raise ValueError(f"talent rate needs at least 10 rows, got {n}")
    if not 0 < pct <= 100:
        raise ValueError(f"pct must lie in (0, 100], got {pct}")
    m = math.ceil(pct * n / 100.0)
    top_pred = set(order_by(table, table.proxy_column(proxy))[:m])
    top_train = set(order_by(table, table.trained_values())[:m])
    return 100.0 * len(top_pred & top_train) / m


def spearman_xy(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation (average ranks on ties); NaN when a
    column has zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two equal-length 1D arrays")
    if len(x) < 2:
        raise ValueError("spearman needs at least 2 observations")
    rx = average_ranks(x)
    ry = average_ranks(y)
    sx = rx.std()
    sy = ry.std()
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))


def spearman(table: ResultsTable, proxy: str) -> float:
    """Rank agreement between a proxy and trained validation F1."""
    return spearman_xy(table.proxy_column(proxy), table.trained_values())


def random_search_baseline(table: ResultsTable, k: int, trials: int = 1000,
                           rng_seed: int = 0) -> dict[str, float]:
    """Monte-Carlo baseline: sample k rows without replacement, pick the
    best-validation row among them, record the test-F1 gap to the overall
    best trained model; return the mean and standard deviation."""
    n = len(table)
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(rng_seed)
    best = best_trained_test(table)
    trained = table.trained_values()
    deltas = np.empty(trials)
    for t in range(trials):
        rows = rng.choice(n, size=k, replace=False)
        cand = min(rows, key=lambda i: (-trained[i], table.spec_hashes[i]))
        deltas[t] = best - table.test_f1[cand]
    return {"mean_delta": float(deltas.mean()), "std_delta": float(deltas.std())}


def noise_robustness(table: ResultsTable, models: dict[str, "object"],
                     test_data: WindowedDataset,
                     variances: tuple[float, ...] = (0.0, 0.001, 0.01, 0.05, 0.5),
                     rng_seed: int = 0,
                     proxies: tuple[str, ...] | None = None,
                     ) -> dict[float, dict[str, float]]:
    """Re-evaluate every trained model on noise-injected test data and
    report, per variance level, the Spearman correlation between each
    proxy and the noisy test F1.

    ``models`` maps spec_hash to a model already holding its trained
    parameters. Per-variance noise seeds derive from ``rng_seed`` and the
    variance's position, so each level is reproducible in isolation.
    """
    if proxies is None:
        proxies = tuple(table.proxy_values.keys())
    missing = [h for h in table.spec_hashes if h not in models]
    if missing:
        raise ValueError(f"missing trained checkpoints for {len(missing)} "
                         f"architectures (first: {missing[0]})")
    out: dict[float, dict[str, float]] = {}
    for vi, variance in enumerate(variances):
        noisy = add_gaussian_noise(test_data, variance, rng_seed + vi)
        noisy_f1 = np.array([evaluate_f1(models[h], noisy) for h in table.spec_hashes])
        out[variance] = {p: spearman_xy(table.proxy_column(p), noisy_f1)
                         for p in proxies}
    return out


@dataclass
class EvalReport:
    n_architectures: int
    best_test_f1: float
    per_proxy: dict[str, dict[str, float]]          # proxy -> metric -> value
    random_search: dict[int, dict[str, float]]       # k -> {mean_delta, std_delta}

    def rows(self) -> list[tuple[str, str, float]]:
        """Flatten to (proxy, metric, value) rows in canonical order."""
        out = [("_table", "best_test_f1", self.best_test_f1),
               ("_table", "n_architectures", float(self.n_architectures))]
        for proxy in sorted(self.per_proxy):
            for metric in sorted(self.per_proxy[proxy]):
                out.append((proxy, metric, self.per_proxy[proxy][metric]))
        for k in sorted(self.random_search):
            out.append(("random_search", f"delta_mean_k{k}",
                        self.random_search[k]["mean_delta"]))
            out.append(("random_search", f"delta_std_k{k}",
                        self.random_search[k]["std_delta"]))
        return out

    def summary_text(self) -> str:
        lines = [f"architectures: {self.n_architectures}",
                 f"best trained test F1: {self.best_test_f1:.4f}", ""]
        columns = ("delta_1", "delta_10", "delta_top10pct",
                   "talent_rate", "spearman_val", "spearman_test")
        lines.append(f"{'proxy':<16}" + "".join(f"{m:>15}" for m in columns))
        for proxy in sorted(self.per_proxy):
            m = self.per_proxy[proxy]
            cells = []
            for name in columns:
                v = m.get(name)
                cells.append(f"{v:>15.4f}" if v is not None and not math.isnan(v)
                             else f"{'-':>15}")
            lines.append(f"{proxy:<16}" + "".join(cells))
        lines.append("")
        for k in sorted(self.random_search):
            rs = self.random_search[k]
            lines.append(f"random search k={k}: delta {rs['mean_delta']:.4f} "
                         f"+/- {rs['std_delta']:.4f}")
        return "\n".join(lines) + "\n"


def build_report(table: ResultsTable, trials: int = 1000,
                 rng_seed: int = 0) -> EvalReport:
    """All headline metrics for every proxy column in the table.

    delta_10 caps k at the table size; the talent rate is omitted for
    tables smaller than 10 rows.
    """
    n = len(table)
    per_proxy: dict[str, dict[str, float]] = {}
    for proxy in table.proxy_values:
        metrics = {
            "delta_1": delta_k(table, proxy, 1),
            "delta_10": delta_k(table, proxy, min(10, n)),
            "delta_top10pct": delta_percent(table, proxy, 10.0),
            "spearman_val": spearman(table, proxy),
            # agreement with recorded test F1: the zero-noise row of the
            # noise report reproduces exactly this column
            "spearman_test": spearman_xy(table.proxy_column(proxy), table.test_f1),
        }
        if n >= 10:
            metrics["talent_rate"] = talent_rate(table, proxy, 10.0)
        per_proxy[proxy] = metrics
    ks = sorted({1, min(10, n), math.ceil(n / 10)})
    random_search = {k: random_search_baseline(table, k, trials, rng_seed)
                     for k in ks}
    return EvalReport(n_architectures=n,
                      best_test_f1=best_trained_test(table),
                      per_proxy=per_proxy,
                      random_search=random_search)
