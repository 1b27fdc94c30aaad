"""Experiment orchestration: k-fold runs, parameter sweeps, and dataset
analyses, aggregated into CSV-ready reports."""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from diffrec import bigraph, corpus, evalmetrics, recommend, simkit
from diffrec.bigraph import BipartiteGraph
from diffrec.corpus import FoldPair, RatingDataset
from diffrec.recommend import MfConfig, RaConfig, RecommendationList
from diffrec.simkit import PimConfig, SimilarityMatrix


class HarnessError(RuntimeError):
    pass


KNOWN_METHODS = ("UBCF", "IBCF", "SVD", "MD", "PIM+RA")
LIST_METRICS = ("gini", "id", "iud", "novelty", "avg_popularity")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_name: str = "dataset"
    k_folds: int = 5
    seed: int = 0
    list_length: int = 100
    like_threshold: float = 3.0
    methods: tuple[str, ...] = KNOWN_METHODS
    theta: float = 0.6
    knn_k: int = 20
    knn_measure: str = "pcc"
    penalty_variant: str = "pair-max"
    step3_weight: str = "literal-w_vi"
    metric_sim: str = "cosine"
    mf: MfConfig = field(default_factory=MfConfig)

    def __post_init__(self):
        if self.k_folds < 2:
            raise HarnessError(f"k_folds must be >= 2, got {self.k_folds}")
        if self.list_length < 1:
            raise HarnessError("list_length must be >= 1")
        unknown = set(self.methods) - set(KNOWN_METHODS)
        if unknown:
            raise HarnessError(f"unknown methods: {sorted(unknown)}")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MetricRow:
    dataset: str
    fold: str
    method: str
    theta: float | None
    length: int | None
    metric: str
    value: float | None
    note: str = ""


@dataclass
class EvaluationReport:
    rows: list[MetricRow]
    config: ExperimentConfig

    def mean(self, method: str, metric: str, theta: float | None = None) -> float:
        vals = [
            r.value
            for r in self.rows
            if r.method == method
            and r.metric == metric
            and r.value is not None
            and (theta is None or r.theta == theta)
        ]
        if not vals:
            raise HarnessError(f"no values for ({method}, {metric})")
        return float(np.mean(vals))

    def with_means(self) -> "EvaluationReport":
        """Append cross-fold mean rows (fold='mean')."""
        groups: dict[tuple, list[float]] = {}
        for r in self.rows:
            if r.fold == "mean" or r.value is None:
                continue
            groups.setdefault((r.method, r.theta, r.length, r.metric), []).append(r.value)
        extra = [
            MetricRow(self.config.dataset_name, "mean", m, th, ln, met, float(np.mean(v)))
            for (m, th, ln, met), v in sorted(
                groups.items(), key=lambda kv: (kv[0][0], str(kv[0][1]), str(kv[0][2]), kv[0][3])
            )
        ]
        return EvaluationReport(rows=self.rows + extra, config=self.config)


def write_report_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("dataset,fold,method,theta,L,metric,value\n")
        for r in report.rows:
            theta = "" if r.theta is None else f"{r.theta:g}"
            length = "" if r.length is None else str(r.length)
            value = "NA" if r.value is None else f"{r.value:.4f}"
            fh.write(f"{r.dataset},{r.fold},{r.method},{theta},{length},{r.metric},{value}\n")


def write_manifest(report: EvaluationReport, path) -> None:
    manifest = {
        "config": asdict(report.config),
        "config_hash": report.config.digest(),
        "seed": report.config.seed,
        "generated_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "rows": len(report.rows),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Per-fold context


class FoldContext:
    """Shared per-fold state: graph, lazily computed similarity matrices,
    the evaluated-user population, and method rankings."""

    def __init__(self, pair: FoldPair, cfg: ExperimentConfig):
        self.pair = pair
        self.cfg = cfg
        self.graph = bigraph.build_graph(pair.train)
        self.likes = evalmetrics.liked_test_set(pair.test, cfg.like_threshold)
        train_active = set(np.unique(pair.train.users).tolist())
        self.test_users = sorted(
            u for u, liked in self.likes.items() if liked and u in train_active
        )
        self.excluded_users = len(self.likes) - len(self.test_users)
        self._sims: dict[tuple[str, str], SimilarityMatrix] = {}
        self._pimra: recommend.PimraScorer | None = None
        self._mf: recommend.MFModel | None = None

    def similarity(self, measure: str, axis: str) -> SimilarityMatrix:
        """Normalized similarity matrix, computed once per (measure, axis)."""
        key = (measure, axis)
        if key not in self._sims:
            if measure == "cosine":
                raw = simkit.cosine_matrix(self.graph, axis)
            elif measure == "pcc":
                raw = simkit.pcc_matrix(self.graph, axis)
            elif measure == "pim":
                ar = simkit.average_cri_ratio(self.graph, axis)
                cfg = PimConfig(ar=ar, penalty_variant=self.cfg.penalty_variant)
                raw = simkit.pim_matrix(self.graph, axis, cfg)
            else:
                raise HarnessError(f"unknown similarity measure {measure!r}")
            self._sims[key] = simkit.normalize(raw)
        return self._sims[key]

    @property
    def metric_sim(self) -> SimilarityMatrix:
        return self.similarity(self.cfg.metric_sim, "items")

    @property
    def pimra_scorer(self) -> recommend.PimraScorer:
        if self._pimra is None:
            g = bigraph.attach_similarity(self.graph, self.similarity("pim", "items"))
            ra = RaConfig(theta=self.cfg.theta, step3_weight=self.cfg.step3_weight)
            self._pimra = recommend.PimraScorer(g, ra)
        return self._pimra

    @property
    def mf_model(self) -> recommend.MFModel:
        if self._mf is None:
            self._mf = recommend.train_mf(self.pair.train, self.cfg.mf)
        return self._mf

    def histories(self) -> dict[int, np.ndarray]:
        return {u: self.graph.user_items(u)[0] for u in self.test_users}

    def rankings(self, method: str, theta: float | None = None) -> list[RecommendationList]:
        try:
            if method == "MD":
                return [recommend.recommend_md(self.graph, u) for u in self.test_users]
            if method == "UBCF":
                sim = self.similarity(self.cfg.knn_measure, "users")
                return [
                    recommend.recommend_knn_cf(sim, self.graph, u, "UBCF", self.cfg.knn_k)
                    for u in self.test_users
                ]
            if method == "IBCF":
                sim = self.similarity(self.cfg.knn_measure, "items")
                return [
                    recommend.recommend_knn_cf(sim, self.graph, u, "IBCF", self.cfg.knn_k)
                    for u in self.test_users
                ]
            if method == "SVD":
                model = self.mf_model
                return [
                    recommend.recommend_mf(model, self.graph, u) for u in self.test_users
                ]
            if method == "PIM+RA":
                scorer = self.pimra_scorer
                return [scorer.recommend(u, theta) for u in self.test_users]
        except Exception as exc:
            raise HarnessError(f"method {method} failed: {exc}") from exc
        raise HarnessError(f"unknown method {method!r}")


def _metric_rows(
    ctx: FoldContext,
    fold: str,
    method: str,
    lists: list[RecommendationList],
    theta: float | None,
    length: int,
) -> list[MetricRow]:
    cfg = ctx.cfg
    name = cfg.dataset_name
    rows = [
        MetricRow(name, fold, method, theta, None, "ars",
                  evalmetrics.ars(lists, ctx.likes))
    ]
    counts = evalmetrics.rec_counts(lists, ctx.graph.n_items, length)
    rows.append(MetricRow(name, fold, method, theta, length, "gini",
                          evalmetrics.gini(counts)))
    try:
        id_val = evalmetrics.internal_diversity(lists, ctx.metric_sim, length)
        rows.append(MetricRow(name, fold, method, theta, length, "id", id_val))
    except evalmetrics.MetricError as exc:
        rows.append(MetricRow(name, fold, method, theta, length, "id", None, str(exc)))
    rows.append(MetricRow(name, fold, method, theta, length, "iud",
                          evalmetrics.inter_user_diversity(lists, length)))
    rows.append(MetricRow(name, fold, method, theta, length, "novelty",
                          evalmetrics.novelty(lists, ctx.histories(), ctx.metric_sim, length)))
    rows.append(MetricRow(name, fold, method, theta, length, "avg_popularity",
                          evalmetrics.avg_popularity(lists, ctx.graph, length)))
    return rows


ListSink = Callable[[int, str, list[RecommendationList]], None]


def run_experiment(
    ds: RatingDataset,
    cfg: ExperimentConfig,
    list_sink: ListSink | None = None,
) -> EvaluationReport:
    """Evaluate every configured method over a k-fold split."""
    folds = corpus.kfold_split(ds, cfg.k_folds, cfg.seed)
    rows: list[MetricRow] = []
    for f, pair in enumerate(folds):
        ctx = FoldContext(pair, cfg)
        if not ctx.test_users:
            raise HarnessError(f"fold {f} has no evaluable test users")
        for method in cfg.methods:
            theta = cfg.theta if method == "PIM+RA" else None
            lists = ctx.rankings(method)
            rows.extend(_metric_rows(ctx, str(f), method, lists, theta, cfg.list_length))
            if list_sink is not None:
                list_sink(f, method, lists)
    return EvaluationReport(rows=rows, config=cfg).with_means()


def sweep_theta(
    ds: RatingDataset, cfg: ExperimentConfig, thetas: Sequence[float]
) -> EvaluationReport:
    """PIM+RA metrics per theta; folds and similarity matrices are shared
    across theta values."""
    for t in thetas:
        if not 0.0 <= t <= 1.0:
            raise HarnessError(f"theta {t} outside [0, 1]")
    folds = corpus.kfold_split(ds, cfg.k_folds, cfg.seed)
    rows: list[MetricRow] = []
    for f, pair in enumerate(folds):
        ctx = FoldContext(pair, cfg)
        if not ctx.test_users:
            raise HarnessError(f"fold {f} has no evaluable test users")
        for theta in thetas:
            lists = ctx.rankings("PIM+RA", theta=theta)
            rows.extend(
                _metric_rows(ctx, str(f), "PIM+RA", lists, theta, cfg.list_length)
            )
    return EvaluationReport(rows=rows, config=cfg).with_means()


def sweep_list_length(
    ds: RatingDataset, cfg: ExperimentConfig, lengths: Sequence[int]
) -> EvaluationReport:
    """List-length sweep; rankings are generated once per (fold, method)."""
    for length in lengths:
        if length < 1:
            raise HarnessError(f"list length {length} must be >= 1")
    folds = corpus.kfold_split(ds, cfg.k_folds, cfg.seed)
    rows: list[MetricRow] = []
    for f, pair in enumerate(folds):
        ctx = FoldContext(pair, cfg)
        if not ctx.test_users:
            raise HarnessError(f"fold {f} has no evaluable test users")
        for method in cfg.methods:
            theta = cfg.theta if method == "PIM+RA" else None
            lists = ctx.rankings(method)
            for length in lengths:
                base = _metric_rows(ctx, str(f), method, lists, theta, length)
                rows.extend(r for r in base if r.metric != "ars")
    return EvaluationReport(rows=rows, config=cfg).with_means()


def sweep_knn(
    ds: RatingDataset,
    cfg: ExperimentConfig,
    ks: Sequence[int],
    measures: Sequence[str] = ("cosine", "pcc", "pim"),
    modes: Sequence[str] = ("UBCF", "IBCF"),
) -> EvaluationReport:
    """Prediction-error table: NRMSE per (measure, mode, neighbor count)."""
    for k in ks:
        if k < 1:
            raise HarnessError(f"k {k} must be >= 1")
    folds = corpus.kfold_split(ds, cfg.k_folds, cfg.seed)
    rows: list[MetricRow] = []
    for f, pair in enumerate(folds):
        graph = bigraph.build_graph(pair.train)
        ctx = FoldContext(pair, cfg)
        for measure in measures:
            for mode in modes:
                axis = "users" if mode == "UBCF" else "items"
                sim = ctx.similarity(measure, axis)
                errors = _knn_errors(sim, graph, pair.test, ks)
                for k, err in zip(ks, errors):
                    rows.append(
                        MetricRow(
                            cfg.dataset_name,
                            str(f),
                            f"{mode}-{measure}",
                            None,
                            k,
                            "nrmse",
                            err / graph.scale.range,
                        )
                    )
    return EvaluationReport(rows=rows, config=cfg).with_means()


def _knn_errors(
    sim: SimilarityMatrix, g: BipartiteGraph, test: RatingDataset, ks: Sequence[int]
) -> np.ndarray:
    """RMSE for every k at once via descending-similarity prefix sums."""
    ks = np.asarray(ks, dtype=np.int64)
    sq = np.zeros(len(ks))
    n = 0
    for u, i, actual in test.triples():
        if sim.axis == "users":
            nbr, ratings = g.item_users(i)
            sims = sim.values[u, nbr]
            ok = sim.defined[u, nbr] & (sims > 0) & (nbr != u)
        else:
            nbr, ratings = g.user_items(u)
            sims = sim.values[i, nbr]
            ok = sim.defined[i, nbr] & (sims > 0) & (nbr != i)
        nbr, sims, ratings = nbr[ok], sims[ok], ratings[ok]
        if len(nbr):
            order = np.lexsort((nbr, -sims))
            csum_num = np.cumsum(sims[order] * ratings[order])
            csum_den = np.cumsum(sims[order])
            idx = np.minimum(ks, len(nbr)) - 1
            preds = csum_num[idx] / csum_den[idx]
        else:
            preds = np.full(len(ks), recommend._fallback(g, u, i))
        preds = np.clip(preds, g.scale.min, g.scale.max)
        sq += (preds - actual) ** 2
        n += 1
    return np.sqrt(sq / n)


# ---------------------------------------------------------------------------
# Corpus analyses


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    p_value: float


@dataclass(frozen=True)
class CorpusAnalysis:
    cri_ratios: np.ndarray
    cri_skewness: float
    activity_popularity: list[tuple[int, float]]
    activity_regression: RegressionResult
    popularity_rating: list[tuple[int, float]]
    popularity_regression: RegressionResult
    similarity_samples: dict[str, np.ndarray]


def analyze_corpus(
    ds: RatingDataset, seed: int = 0, sample_users: int = 50, sim_sample: int = 20000
) -> CorpusAnalysis:
    """Dataset structure analyses: co-rating ratio skew, activity vs item
    popularity, popularity vs mean rating, and normalized similarity
    distributions for the Pearson and corrected-Pearson measures."""
    g = bigraph.build_graph(ds)
    rng = np.random.default_rng(seed)

    active = np.flatnonzero(g.user_degree > 0)
    chosen = (
        rng.choice(active, size=sample_users, replace=False)
        if len(active) > sample_users
        else active
    )
    sets = [set(g.user_items(int(u))[0].tolist()) for u in chosen]
    ratios = []
    for a in range(len(sets)):
        for b in range(a + 1, len(sets)):
            union = len(sets[a] | sets[b])
            ratios.append(len(sets[a] & sets[b]) / union if union else 0.0)
    ratios = np.asarray(ratios)
    if len(ratios) < 3:
        raise HarnessError("need at least 3 user pairs for the skewness analysis")
    skewness = float(stats.skew(ratios))

    act_pop = _grouped_mean(
        g.user_degree[active],
        np.array([g.item_degree[g.user_items(int(u))[0]].mean() for u in active]),
    )
    act_reg = _ols(act_pop)

    items_rated = np.flatnonzero(g.item_degree > 0)
    pop_rating = _grouped_mean(
        g.item_degree[items_rated],
        np.array([g.item_users(int(i))[1].mean() for i in items_rated]),
    )
    pop_reg = _ols(pop_rating)

    samples = {}
    for measure in ("pcc", "pim"):
        if measure == "pcc":
            raw = simkit.pcc_matrix(g, "users")
        else:
            ar = simkit.average_cri_ratio(g, "users")
            raw = simkit.pim_matrix(g, "users", PimConfig(ar=ar))
        norm = simkit.normalize(raw)
        off = norm.defined & ~np.eye(norm.n, dtype=bool)
        iu, ju = np.triu_indices(norm.n, k=1)
        keep = off[iu, ju]
        vals = norm.values[iu[keep], ju[keep]]
        if len(vals) > sim_sample:
            vals = rng.choice(vals, size=sim_sample, replace=False)
        samples[measure] = vals
    return CorpusAnalysis(
        cri_ratios=ratios,
        cri_skewness=skewness,
        activity_popularity=act_pop,
        activity_regression=act_reg,
        popularity_rating=pop_rating,
        popularity_regression=pop_reg,
        similarity_samples=samples,
    )


def _grouped_mean(levels: np.ndarray, values: np.ndarray) -> list[tuple[int, float]]:
    table: dict[int, list[float]] = {}
    for lvl, val in zip(levels.tolist(), values.tolist()):
        table.setdefault(int(lvl), []).append(val)
    return [(lvl, float(np.mean(vs))) for lvl, vs in sorted(table.items())]


def _ols(points: list[tuple[int, float]]) -> RegressionResult:
    if len(points) < 3:
        raise HarnessError("need at least 3 points for a regression")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points])
    res = stats.linregress(xs, ys)
    return RegressionResult(
        slope=float(res.slope), intercept=float(res.intercept), p_value=float(res.pvalue)
    )
