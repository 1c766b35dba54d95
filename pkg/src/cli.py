"""Commands of the front end. Each one returns a RunReport, rendered by main.py."""

import logging
import time
from fractions import Fraction
from functools import partial
from typing import Any

import polars as pl
from pydantic import validate_call
from statsmodels.stats.proportion import proportions_ztest

from src.algebra import check_hat_relations, check_quadratic, stationarity_residual
from src.core import Configuration, Sector, parse_config, reduce_species, sector_of, sectors
from src.multiline import count_ancestors, sample_counts
from src.oracle import build_generator, compare_all, stationary
from src.parallel import parallel_map
from src.pushing import ancestor_stages, ancestors, weight_recursive
from src.tensor import build_ansatz, normalization, trace_weight
from src.utils import (
    Command,
    DivergentTraceError,
    EnumerationBoundError,
    LimitsConfig,
    OutputFormat,
    PreconditionError,
    RunConfig,
    RunReport,
    SampleRow,
    TruncationOverflowError,
    VerifyTarget,
    WeightMethod,
)

log = logging.getLogger(__name__)

EXIT_INPUT_ERROR = 2
EXIT_VERIFICATION_FAILED = 3
EXIT_RESOURCE_BOUND = 4


def exit_code(error: Exception) -> int | None:
    """Process exit status of an expected failure, None for anything else"""
    match error:
        case EnumerationBoundError() | TruncationOverflowError() | DivergentTraceError():
            return EXIT_RESOURCE_BOUND
        case ValueError():
            # parse and precondition errors, pydantic validation of the config
            return EXIT_INPUT_ERROR
    return None


def _configuration(text: str | None, n_species: int | None = None) -> Configuration:
    if text is None:
        raise PreconditionError("This command needs a configuration, e.g. config=2103")
    return parse_config(str(text), n_species=n_species)


def _sector(length: int, populations: list[int] | tuple[int, ...]) -> Sector:
    try:
        return Sector(length=length, populations=tuple(populations))
    except ValueError as e:
        raise PreconditionError(f"Invalid sector L={length}, P={populations}: {e}") from e


def _truncation(truncation: int | None) -> int | str:
    return "auto" if truncation is None else truncation


def compute_weight(
    config: Configuration,
    method: WeightMethod,
    truncation: int | None = None,
    limits: LimitsConfig = LimitsConfig(),
    progress: bool = True,
) -> int:
    match WeightMethod(method):
        case WeightMethod.trace:
            return trace_weight(
                config, d=_truncation(truncation), max_doublings=limits.max_doublings
            )
        case WeightMethod.ancestors:
            return weight_recursive(config)
        case WeightMethod.multiline:
            return count_ancestors(
                config, max_multiline=limits.max_multiline, progress=progress
            )


def cmd_weight(
    config_text: str | None,
    method: WeightMethod = WeightMethod.trace,
    truncation: int | None = None,
    n_species: int | None = None,
    limits: LimitsConfig = LimitsConfig(),
) -> RunReport:
    """Stationary weight of one configuration by the chosen method"""
    config = _configuration(config_text, n_species)
    start = time.perf_counter()
    weight = compute_weight(config, method, truncation, limits)
    elapsed = time.perf_counter() - start
    log.info(f"W({config}) = {weight} by {WeightMethod(method).value} in {elapsed:.3f}s")
    return RunReport(
        command=Command.weight.value,
        arguments={
            "config": str(config),
            "method": WeightMethod(method).value,
            "truncation": truncation,
        },
        timings={"weight": elapsed},
        results={
            "configuration": str(config),
            "method": WeightMethod(method).value,
            "weight": str(weight),
        },
    )


def cmd_prob(
    config_text: str | None,
    truncation: int | None = None,
    n_species: int | None = None,
    limits: LimitsConfig = LimitsConfig(),
) -> RunReport:
    """Exact probability W/Z, unreduced and in lowest terms"""
    config = _configuration(config_text, n_species)
    start = time.perf_counter()
    reduced, _ = reduce_species(config)
    weight = trace_weight(reduced, d=_truncation(truncation), max_doublings=limits.max_doublings)
    Z = normalization(sector_of(reduced))
    elapsed = time.perf_counter() - start
    probability = Fraction(weight, Z)
    log.info(f"P({config}) = {weight}/{Z} = {probability}")
    return RunReport(
        command=Command.prob.value,
        arguments={"config": str(config), "truncation": truncation},
        timings={"probability": elapsed},
        results={
            "configuration": str(config),
            "weight": str(weight),
            "normalization": str(Z),
            "probability": f"{weight}/{Z}",
            "reduced": str(probability),
        },
    )


@validate_call
def cmd_table(
    length: int,
    populations: list[int],
    method: WeightMethod = WeightMethod.trace,
    truncation: int | None = None,
    limits: LimitsConfig = LimitsConfig(),
    workers: int = 1,
) -> RunReport:
    """Weights and probabilities of a whole sector, closed by the normalization row"""
    sector = _sector(length, populations)
    configurations = list(sector.configurations(max_states=limits.max_states))
    log.info(f"Tabulating {len(configurations)} configurations of {sector}")

    start = time.perf_counter()
    weights = parallel_map(
        partial(
            compute_weight,
            method=WeightMethod(method),
            truncation=truncation,
            limits=limits,
            progress=False,
        ),
        configurations,
        workers=workers,
        desc="Weights",
    )
    elapsed = time.perf_counter() - start

    reduced, _ = reduce_species(configurations[0])
    Z = normalization(sector_of(reduced))
    rows = [
        {"configuration": str(c), "weight": str(w), "probability": str(Fraction(w, Z))}
        for c, w in zip(configurations, weights)
    ]
    total_probability = sum((Fraction(w, Z) for w in weights), Fraction(0))
    rows.append(
        {
            "configuration": "total",
            "weight": str(sum(weights)),
            "probability": str(total_probability),
        }
    )
    return RunReport(
        command=Command.table.value,
        arguments={
            "l": length,
            "p": list(populations),
            "method": WeightMethod(method).value,
            "truncation": truncation,
        },
        timings={"weights": elapsed},
        results=rows,
        passed=total_probability == 1,
    )


def _stationarity_of_sector(
    sector: Sector, truncation: int | None, max_states: int | None
) -> dict[str, Any]:
    residuals = [
        (c, stationarity_residual(c, d=_truncation(truncation)))
        for c in sector.configurations(max_states=max_states)
    ]
    nonzero = [(c, r) for c, r in residuals if r != 0]
    return {
        "sector": str(sector),
        "n_states": len(residuals),
        "max_residual": str(max((abs(r) for _, r in residuals), default=0)),
        "first_nonzero": str(nonzero[0][0]) if nonzero else None,
    }


def cmd_verify(
    what: VerifyTarget,
    n: int,
    d: int,
    length: int,
    truncation: int | None = None,
    limits: LimitsConfig = LimitsConfig(),
    workers: int = 1,
) -> RunReport:
    """Operator identities or the stationarity residual of every full sector"""
    what = VerifyTarget(what)
    start = time.perf_counter()
    match what:
        case VerifyTarget.quadratic:
            report = check_quadratic(d)
            rows = _check_rows(report.checks)
            passed = report.passed
        case VerifyTarget.hats:
            report = check_hat_relations(n, d)
            rows = _check_rows(report.checks)
            passed = report.passed
        case VerifyTarget.stationarity:
            rows = parallel_map(
                partial(
                    _stationarity_of_sector, truncation=truncation, max_states=limits.max_states
                ),
                list(sectors(length, n)),
                workers=workers,
                desc="Sectors",
            )
            passed = all(row["first_nonzero"] is None for row in rows)
    elapsed = time.perf_counter() - start

    log.info(f"Verification of {what.value}: {'pass' if passed else 'FAIL'}")
    return RunReport(
        command=Command.verify.value,
        arguments={"what": what.value, "n": n, "d": d, "l": length},
        timings={"verify": elapsed},
        results=rows,
        passed=passed,
    )


def _check_rows(checks) -> list[dict[str, Any]]:
    return [
        {
            "name": check.name,
            "holds": check.holds,
            "max_deviation": check.max_deviation,
            "offending_entry": None
            if check.offending_entry is None
            else ",".join(str(i) for i in check.offending_entry),
        }
        for check in checks
    ]


def z_score(count: int, nobs: int, p: Fraction) -> float:
    """One-sample z statistic under the null variance p(1-p)/n"""
    if p in (0, 1):
        return 0.0 if Fraction(count, nobs) == p else float("inf")
    z, _ = proportions_ztest(count, nobs, value=float(p), prop_var=float(p))
    return float(z)


@validate_call
def cmd_sample(
    length: int,
    populations: list[int],
    samples: int,
    seed: int,
    sigmas: float = 4.0,
    limits: LimitsConfig = LimitsConfig(),
    workers: int = 1,
) -> RunReport:
    """Multiline Monte Carlo frequencies against the exact probabilities"""
    sector = _sector(length, populations)
    configurations = list(sector.configurations(max_states=limits.max_states))

    start = time.perf_counter()
    counts = sample_counts(sector, samples, seed, workers=workers)
    elapsed = time.perf_counter() - start
    observed = {c.sites: k for c, k in counts.items()}

    reduced, _ = reduce_species(configurations[0])
    Z = normalization(sector_of(reduced))
    rows = []
    for config in configurations:
        p = Fraction(trace_weight(config, max_doublings=limits.max_doublings), Z)
        count = observed.get(config.sites, 0)
        z = z_score(count, samples, p)
        rows.append(
            SampleRow(
                configuration=str(config),
                count=count,
                frequency=count / samples,
                exact=str(p),
                z_score=z,
                within_band=abs(z) <= sigmas,
            )
        )

    passed = all(row.within_band for row in rows)
    log.info(
        f"{samples} samples of {sector}: "
        f"{sum(row.within_band for row in rows)}/{len(rows)} within {sigmas} sigma"
    )
    return RunReport(
        command=Command.sample.value,
        arguments={"l": length, "p": list(populations), "n": samples, "sigmas": sigmas},
        seed=seed,
        timings={"sampling": elapsed},
        results=[row.model_dump() for row in rows],
        passed=passed,
    )


@validate_call
def cmd_oracle(
    length: int,
    populations: list[int],
    compare: bool = True,
    limits: LimitsConfig = LimitsConfig(),
    workers: int = 1,
) -> RunReport:
    """Exact stationary distribution, optionally cross-checked against every weight route"""
    sector = _sector(length, populations)
    start = time.perf_counter()
    if compare:
        report = compare_all(
            sector,
            max_states=limits.max_states,
            max_multiline=limits.max_multiline,
            max_solve_states=limits.max_solve_states,
            workers=workers,
        )
        rows = [row.model_dump() for row in report.rows]
        passed = report.agree
    else:
        gen = build_generator(sector, max_states=limits.max_states, workers=workers)
        solution = stationary(gen, max_states=limits.max_solve_states)
        rows = [
            {"configuration": str(c), "oracle_probability": str(p)}
            for c, p in zip(solution.configurations, solution.probabilities)
        ]
        passed = True
    elapsed = time.perf_counter() - start

    return RunReport(
        command=Command.oracle.value,
        arguments={"l": length, "p": list(populations), "compare": compare},
        timings={"oracle": elapsed},
        results=rows,
        passed=passed,
    )


def cmd_ancestors(config_text: str | None, n_species: int | None = None) -> RunReport:
    """Intermediate push stages and the final ancestors with their weights"""
    config = _configuration(config_text, n_species)
    start = time.perf_counter()
    rows = []
    for K, stage in enumerate(ancestor_stages(config), start=1):
        for member in sorted(stage, key=lambda c: c.sites):
            rows.append({"stage": f"push {K}", "configuration": str(member), "weight": None})

    total = 0
    for ancestor in sorted(ancestors(config), key=lambda c: c.sites):
        weight = weight_recursive(ancestor)
        total += weight
        rows.append({"stage": "ancestor", "configuration": str(ancestor), "weight": str(weight)})
    rows.append({"stage": "total", "configuration": str(config), "weight": str(total)})
    elapsed = time.perf_counter() - start

    return RunReport(
        command=Command.ancestors.value,
        arguments={"config": str(config)},
        timings={"ancestors": elapsed},
        results=rows,
    )


def cmd_ansatz(n_species: int | None) -> RunReport:
    """Tensor terms of the ansatz operators X_0..X_N, one row per term"""
    if n_species is None:
        raise PreconditionError("This command needs the number of species, e.g. n_species=3")
    start = time.perf_counter()
    ansatz = build_ansatz(n_species)
    elapsed = time.perf_counter() - start

    rows = []
    for K, op in ansatz.items():
        record = op.as_record()
        log.debug(f"X_{K} = {op}")
        rows.extend({"class": K, "rank": record["rank"], **term} for term in record["terms"])

    return RunReport(
        command=Command.ansatz.value,
        arguments={"n_species": n_species},
        timings={"ansatz": elapsed},
        results=rows,
    )


def run(cfg: RunConfig) -> RunReport:
    """Dispatch on cfg.command"""
    match cfg.command:
        case Command.weight:
            return cmd_weight(cfg.config, cfg.method, cfg.truncation, cfg.n_species, cfg.limits)
        case Command.prob:
            return cmd_prob(cfg.config, cfg.truncation, cfg.n_species, cfg.limits)
        case Command.table:
            return cmd_table(
                cfg.sector.l, cfg.sector.p, cfg.method, cfg.truncation, cfg.limits, cfg.workers
            )
        case Command.verify:
            return cmd_verify(
                cfg.verify.what,
                cfg.verify.n,
                cfg.verify.d,
                cfg.verify.l,
                cfg.truncation,
                cfg.limits,
                cfg.workers,
            )
        case Command.sample:
            return cmd_sample(
                cfg.sector.l,
                cfg.sector.p,
                cfg.sample.n,
                cfg.seed,
                cfg.sample.sigmas,
                cfg.limits,
                cfg.workers,
            )
        case Command.oracle:
            return cmd_oracle(cfg.sector.l, cfg.sector.p, cfg.compare, cfg.limits, cfg.workers)
        case Command.ancestors:
            return cmd_ancestors(cfg.config, cfg.n_species)
        case Command.ansatz:
            return cmd_ansatz(cfg.n_species)
    raise PreconditionError(f"Unknown command: {cfg.command}")


def _cell(value: Any) -> Any:
    # tensor monomials print as A⊗A⊗E, the empty one as the identity
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return "⊗".join(value) or "1"
    return value


def as_frame(report: RunReport) -> pl.DataFrame:
    results = report.results if isinstance(report.results, list) else [report.results]
    results = [{k: _cell(v) for k, v in row.items()} for row in results]
    return pl.DataFrame(results, strict=False, infer_schema_length=None)


def render(report: RunReport, fmt: OutputFormat) -> str:
    match OutputFormat(fmt):
        case OutputFormat.json:
            return report.model_dump_json(indent=2)
        case OutputFormat.csv:
            return as_frame(report).write_csv()
        case OutputFormat.table:
            with pl.Config(tbl_rows=-1, tbl_cols=-1, fmt_str_lengths=80):
                return str(as_frame(report))
