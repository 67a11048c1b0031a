"""Synthetic populations, selection mechanisms and estimator benchmarks.

A scenario fixes one finite population (drawn once from its seed) and a
selection mechanism. Each replication re-draws the non-probability sample by
independent Bernoulli (Poisson) selection and runs every estimator on it.
"""

from __future__ import annotations

import ast
import configparser
import csv
import io
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logit

from .data import CovariateSchema, Dataset, PopulationCells, build_cell_index, cell_counts, margins_from_cells
from .errors import ConfigError, EmptySampleError, NonprobError, ParseError
from .glm import encode_design
from .uncertainty import FAILURE_LIMIT, Auxiliary, EstimatorSpec, bootstrap, run_estimator

BUNDLED = Path(__file__).parent / "scenarios"


@dataclass(frozen=True)
class PopulationConfig:
    schema: CovariateSchema
    N: int
    outcome_intercept: float = 0.0
    outcome_coeffs: dict = field(default_factory=dict)
    family: str = "logistic"
    noise_sd: float = 1.0
    cell_distribution: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("population size must be at least 1")
        if self.family not in ("logistic", "linear"):
            raise ConfigError(f"unknown outcome family {self.family!r}")
        if self.cell_distribution is not None:
            p = np.asarray(self.cell_distribution, dtype=float)
            n_cells = int(np.prod(self.schema.sizes))
            if p.shape != (n_cells,):
                raise ConfigError(f"cell_distribution needs {n_cells} probabilities, got {p.size}")
            if np.any(p < 0) or not np.isclose(p.sum(), 1.0, atol=1e-9):
                raise ConfigError("cell_distribution must be non-negative and sum to 1")


@dataclass(frozen=True)
class SelectionMechanism:
    """Inclusion probability expit(logit(base_rate) + gamma_X . x + gamma_Y * y)."""

    base_rate: float
    covariate_coeffs: dict = field(default_factory=dict)
    outcome_coeff: float = 0.0

    def __post_init__(self):
        if not 0 < self.base_rate < 1:
            raise ConfigError(f"base_rate must lie in (0, 1), got {self.base_rate}")

    @property
    def ignorable(self) -> bool:
        return self.outcome_coeff == 0


@dataclass(frozen=True, eq=False)
class Population:
    dataset: Dataset
    cells: PopulationCells
    true_mean: float


@dataclass(frozen=True)
class Scenario:
    name: str
    population: PopulationConfig
    selection: SelectionMechanism
    estimators: tuple = ()
    replications: int = 200
    seed: int = 0


def linear_predictor(dataset: Dataset, intercept: float, coeffs: dict) -> np.ndarray:
    """intercept + sum of coefficients over named design columns."""
    inter = any(":" in k for k in coeffs)
    X = encode_design(dataset, interactions=inter)
    names = list(X.column_names)
    eta = np.full(dataset.n, float(intercept))
    for key, b in coeffs.items():
        if key not in names:
            raise ConfigError(f"unknown design column {key!r}; available: {', '.join(names[1:])}")
        eta = eta + float(b) * X.values[:, names.index(key)]
    return eta


def generate_population(cfg: PopulationConfig) -> Population:
    rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    index = build_cell_index(cfg.schema)
    C = len(index)
    p = np.full(C, 1.0 / C) if cfg.cell_distribution is None else np.asarray(cfg.cell_distribution, float)
    cid = rng.choice(C, size=cfg.N, p=p / p.sum())
    data = Dataset(cfg.schema, index.codes[cid])
    eta = linear_predictor(data, cfg.outcome_intercept, cfg.outcome_coeffs)
    if cfg.family == "logistic":
        y = (rng.random(cfg.N) < expit(eta)).astype(float)
    else:
        y = eta + cfg.noise_sd * rng.standard_normal(cfg.N)
    cells = PopulationCells(index, np.bincount(cid, minlength=C))
    return Population(Dataset(cfg.schema, data.codes, y), cells, float(np.mean(y)))


def selection_probabilities(pop: Population, mech: SelectionMechanism) -> np.ndarray:
    eta = linear_predictor(pop.dataset, logit(mech.base_rate), mech.covariate_coeffs)
    return expit(eta + mech.outcome_coeff * pop.dataset.target)


def apply_selection(pop: Population, mech: SelectionMechanism, seed) -> Dataset:
    prob = selection_probabilities(pop, mech)
    rng = np.random.default_rng(seed)
    keep = np.flatnonzero(rng.random(pop.dataset.n) < prob)
    if keep.size == 0:
        raise EmptySampleError("selection mechanism produced an empty sample")
    # arrival order, unrelated to population order
    return pop.dataset.take(rng.permutation(keep))


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    estimator: str
    truth: float
    mean_estimate: float
    bias: float
    abs_bias: float
    mc_se: float
    rmse: float
    variance: float
    coverage: float
    mean_n: float
    R: int
    failures: int
    flag: str


COLUMNS = [f for f in MetricsRow.__dataclass_fields__]


@dataclass
class MetricsTable:
    rows: list
    estimates: dict = field(default_factory=dict, repr=False)

    def get(self, scenario: str, estimator: str) -> MetricsRow:
        for r in self.rows:
            if r.scenario == scenario and r.estimator == estimator:
                return r
        raise KeyError((scenario, estimator))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, c)) for c in COLUMNS])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ["scenario", "estimator", "truth", "bias", "mc_se", "rmse", "coverage", "mean_n", "R", "fail", "flag"]
        body = [[r.scenario, r.estimator, f"{r.truth:.4f}", f"{r.bias:+.4f}", f"{r.mc_se:.4f}", f"{r.rmse:.4f}",
                 "-" if np.isnan(r.coverage) else f"{r.coverage:.3f}", f"{r.mean_n:.1f}", str(r.R),
                 str(r.failures), r.flag] for r in self.rows]
        widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
        lines = ["  ".join(h.ljust(wd) for h, wd in zip(head, widths)).rstrip()]
        lines.append("  ".join("-" * wd for wd in widths))
        lines += ["  ".join(c.ljust(wd) for c, wd in zip(b, widths)).rstrip() for b in body]
        notes = {r.flag for r in self.rows if r.flag}
        if notes:
            lines.append("")
        if "residual-bias" in notes:
            lines.append("residual-bias: |bias| > 3 Monte Carlo SE, so the estimator did not remove the selection bias")
        if "unstable" in notes:
            lines.append(f"unstable: more than {FAILURE_LIMIT:.0%} of replications failed")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _scenario_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def summarize(scenario: str, estimator: str, truth: float, est, lo, hi, ns, failures: int) -> MetricsRow:
    est = np.asarray(est, dtype=float)
    R = len(est)
    if R == 0:
        nan = float("nan")
        return MetricsRow(scenario, estimator, truth, nan, nan, nan, nan, nan, nan, nan, nan, 0, failures, "unstable")
    bias = float(np.mean(est) - truth)
    variance = float(np.var(est))
    mc_se = float(np.std(est, ddof=1) / np.sqrt(R)) if R > 1 else float("nan")
    rmse = float(np.sqrt(np.mean((est - truth) ** 2)))
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    coverage = float(np.mean((lo <= truth) & (truth <= hi))) if lo.size and not np.isnan(lo).all() else float("nan")
    total = R + failures
    if failures > FAILURE_LIMIT * total:
        flag = "unstable"
    elif abs(bias) > 3 * mc_se:
        flag = "residual-bias"
    else:
        flag = ""
    return MetricsRow(scenario, estimator, truth, float(np.mean(est)), bias, abs(bias), mc_se, rmse, variance,
                      coverage, float(np.mean(ns)), R, failures, flag)


def _replicate(args):
    scen, pop, aux, specs, seed, r, B = args
    key = _scenario_key(scen.name)
    out = []
    try:
        sample = apply_selection(pop, scen.selection, [seed, key, r])
    except NonprobError:
        return [None] * len(specs)
    for e, spec in enumerate(specs):
        eseed = int(np.random.SeedSequence([seed, key, r, e]).generate_state(1)[0])
        try:
            if B:
                ue = bootstrap(EstimatorSpec(spec.method, spec.options, eseed, spec.label), sample, aux, B, eseed)
                out.append((ue.point, ue.ci_low, ue.ci_high, sample.n))
            else:
                val = run_estimator(spec, sample, aux, seed=eseed).value
                out.append((val, np.nan, np.nan, sample.n))
        except NonprobError:
            out.append(None)
    return out


def run_benchmark(scenarios: Sequence[Scenario], estimators: Optional[Sequence[EstimatorSpec]] = None,
                  R: Optional[int] = None, seed: Optional[int] = None, bootstrap_B: int = 0,
                  n_jobs: int = 1) -> MetricsTable:
    """Score estimators over ``R`` selection re-draws per scenario.

    ``estimators``, ``R`` and ``seed`` override the scenario's own values.
    With ``bootstrap_B > 0`` each replication also gets a bootstrap
    percentile interval, from which coverage is computed.
    """
    rows, all_est = [], {}
    for scen in scenarios:
        specs = list(estimators if estimators is not None else scen.estimators)
        reps = scen.replications if R is None else R
        s = scen.seed if seed is None else seed
        if reps < 2:
            raise ConfigError(f"scenario {scen.name}: need at least 2 replications, got {reps}")
        if not specs:
            raise ConfigError(f"scenario {scen.name}: no estimators given")
        pop = generate_population(scen.population)
        aux = Auxiliary(cells=pop.cells, margins=margins_from_cells(pop.cells))
        jobs = [(scen, pop, aux, specs, s, r, bootstrap_B) for r in range(reps)]
        if n_jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=n_jobs) as ex:
                results = list(ex.map(_replicate, jobs, chunksize=max(1, reps // (4 * n_jobs))))
        else:
            results = [_replicate(j) for j in jobs]
        for e, spec in enumerate(specs):
            got = [res[e] for res in results if res[e] is not None]
            failures = reps - len(got)
            vals = [g[0] for g in got]
            rows.append(summarize(scen.name, spec.name, pop.true_mean, vals, [g[1] for g in got],
                                  [g[2] for g in got], [g[3] for g in got] or [0], failures))
            all_est[(scen.name, spec.name)] = np.array(vals)
    return MetricsTable(rows, all_est)


# scenario files -------------------------------------------------------------

def parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t


def _float_list(text: str):
    return tuple(float(v) for v in text.replace("\n", ",").split(",") if v.strip())


def _coeffs(section, skip):
    return {k: float(v) for k, v in section.items() if k not in skip}


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    """Parse an INI-style scenario description.

    Sections: ``[scenario]`` (name, replications, seed), ``[variables]``
    (one ``name = level, level, ...`` line each), ``[population]`` (size,
    seed, optional cell_distribution), ``[outcome]`` (intercept, family,
    noise_sd, then ``column = coefficient``), ``[selection]`` (base_rate,
    outcome, then ``column = coefficient``) and any number of
    ``[estimator LABEL]`` sections with ``method`` plus method options.
    """
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", 0) or 0
        raise ParseError(source, line, str(exc).splitlines()[0]) from exc
    try:
        for sect in ("scenario", "variables", "population", "outcome", "selection"):
            if not cp.has_section(sect):
                raise ConfigError(f"{source}: missing [{sect}] section")
        sc, pop, out, sel = cp["scenario"], cp["population"], cp["outcome"], cp["selection"]
        schema = CovariateSchema([(k, [lv.strip() for lv in v.split(",") if lv.strip()])
                                  for k, v in cp["variables"].items()])
        dist = _float_list(pop["cell_distribution"]) if "cell_distribution" in pop else None
        pcfg = PopulationConfig(
            schema=schema,
            N=int(pop["size"]),
            outcome_intercept=float(out.get("intercept", "0")),
            outcome_coeffs=_coeffs(out, {"intercept", "family", "noise_sd"}),
            family=out.get("family", "logistic"),
            noise_sd=float(out.get("noise_sd", "1")),
            cell_distribution=dist,
            seed=int(pop.get("seed", "0")),
        )
        mech = SelectionMechanism(
            base_rate=float(sel["base_rate"]),
            covariate_coeffs=_coeffs(sel, {"base_rate", "outcome"}),
            outcome_coeff=float(sel.get("outcome", "0")),
        )
        specs = []
        for sect in cp.sections():
            if sect.startswith("estimator"):
                label = sect[len("estimator"):].strip() or None
                opts = {k: parse_value(v) for k, v in cp[sect].items() if k != "method"}
                if "method" not in cp[sect]:
                    raise ConfigError(f"{source}: [{sect}] lacks a method")
                specs.append(EstimatorSpec(cp[sect]["method"], opts, 0, label))
        scen = Scenario(sc.get("name", Path(source).stem), pcfg, mech, tuple(specs),
                        int(sc.get("replications", "200")), int(sc.get("seed", "0")))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    # fail early on bad coefficient names
    probe = Dataset(schema, build_cell_index(schema).codes)
    linear_predictor(probe, 0.0, pcfg.outcome_coeffs)
    linear_predictor(probe, 0.0, mech.covariate_coeffs)
    return scen


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario file, or a bundled one by name (``srs``, ``ignorable``, ...)."""
    p = Path(path_or_name)
    if not p.exists():
        cand = BUNDLED / f"{path_or_name}.scenario"
        if not cand.exists():
            raise ConfigError(f"no scenario file or bundled scenario named {path_or_name!r}")
        p = cand
    return parse_scenario(p.read_text(encoding="utf-8"), str(p))


def bundled_scenarios() -> list:
    return sorted(p.stem for p in BUNDLED.glob("*.scenario"))


def sample_cell_shares(sample: Dataset) -> np.ndarray:
    index = build_cell_index(sample.schema)
    return cell_counts(sample, index) / sample.n
