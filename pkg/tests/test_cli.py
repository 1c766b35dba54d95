import json

import pytest
from omegaconf import OmegaConf
from pydantic import ValidationError

from src.cli import (
    EXIT_INPUT_ERROR,
    EXIT_RESOURCE_BOUND,
    cmd_ancestors,
    cmd_ansatz,
    cmd_oracle,
    cmd_prob,
    cmd_sample,
    cmd_table,
    cmd_verify,
    cmd_weight,
    exit_code,
    render,
    run,
    z_score,
)
from src.utils import (
    Command,
    ConfigurationParseError,
    ConsistencyError,
    EnumerationBoundError,
    LimitsConfig,
    OutputConfig,
    OutputFormat,
    PathsConfig,
    PreconditionError,
    RunConfig,
    SampleConfig,
    SectorConfig,
    TruncationOverflowError,
    VerifyConfig,
    VerifyTarget,
    WeightMethod,
)


@pytest.mark.parametrize("method", list(WeightMethod))
def test_weight_by_every_method(method):
    report = cmd_weight("2103", method)
    assert report.results["weight"] == "9"
    assert report.results["method"] == method.value
    assert report.passed


def test_weight_with_fixed_truncation():
    assert cmd_weight("0211021", WeightMethod.trace, truncation=8).results["weight"] == "6"


def test_weight_needs_a_configuration():
    with pytest.raises(PreconditionError):
        cmd_weight(None)
    with pytest.raises(ConfigurationParseError):
        cmd_weight("21x3")


def test_prob():
    results = cmd_prob("0210").results
    assert results["probability"] == "3/24"
    assert results["reduced"] == "1/8"
    assert cmd_prob("0211021").results["probability"] == "6/735"


def test_table():
    report = cmd_table(4, [1, 1])
    assert len(report.results) == 13
    assert report.results[-1] == {"configuration": "total", "weight": "24", "probability": "1"}
    assert report.passed


def test_table_of_a_single_species_sector():
    report = cmd_table(3, [1], method=WeightMethod.ancestors)
    assert [row["probability"] for row in report.results[:-1]] == ["1/3"] * 3


def test_table_rejects_an_invalid_sector():
    with pytest.raises(PreconditionError):
        cmd_table(3, [2, 2])


def test_ancestors():
    rows = cmd_ancestors("2103").results
    assert {r["configuration"] for r in rows if r["stage"] == "push 1"} == {"2103", "2013"}
    found = {r["configuration"]: r["weight"] for r in rows if r["stage"] == "ancestor"}
    assert found == {"2100": "3", "0120": "1", "2010": "2", "0210": "3"}
    assert rows[-1] == {"stage": "total", "configuration": "2103", "weight": "9"}


@pytest.mark.parametrize(
    "what, n, d",
    [(VerifyTarget.hats, 3, 6), (VerifyTarget.hats, 2, 5), (VerifyTarget.quadratic, 2, 6)],
)
def test_verify_operator_identities(what, n, d):
    report = cmd_verify(what, n=n, d=d, length=4)
    assert report.passed
    assert all(row["holds"] for row in report.results)


def test_verify_stationarity():
    report = cmd_verify(VerifyTarget.stationarity, n=2, d=8, length=4)
    assert report.passed
    assert {row["sector"] for row in report.results}
    assert all(row["max_residual"] == "0" for row in report.results)


def test_z_score():
    assert z_score(50, 100, 0.5) == pytest.approx(0.0)
    assert z_score(60, 100, 0.5) == pytest.approx(2.0)


def test_sample():
    report = cmd_sample(4, [1, 1], samples=200_000, seed=7)
    assert len(report.results) == 12
    assert sum(row["count"] for row in report.results) == 200_000
    assert report.seed == 7
    row = next(r for r in report.results if r["configuration"] == "0210")
    assert row["exact"] == "1/8"


def test_oracle_without_comparison():
    report = cmd_oracle(4, [1, 1], compare=False)
    assert len(report.results) == 12
    row = next(r for r in report.results if r["configuration"] == "0210")
    assert row["oracle_probability"] == "1/8"


def test_oracle_with_comparison():
    report = cmd_oracle(4, [1, 1, 1])
    assert report.passed
    assert len(report.results) == 24


def make_config(**overrides) -> RunConfig:
    fields = dict(
        paths=PathsConfig(report_file="report.json"),
        command=Command.weight,
        sector=SectorConfig(l=4, p=[1, 1]),
        method=WeightMethod.trace,
        sample=SampleConfig(n=1000),
        verify=VerifyConfig(what=VerifyTarget.quadratic, n=2, d=6, l=4),
        output=OutputConfig(),
        limits=LimitsConfig(),
        seed=7,
    )
    return RunConfig(**(fields | overrides))


def test_run_dispatches_on_the_command():
    cfg = make_config(config="0210", method=WeightMethod.ancestors)
    assert run(cfg).results["weight"] == "3"
    cfg = make_config(command=Command.table, sector=SectorConfig(l=4, p=[1, 1, 1]))
    assert run(cfg).results[-1]["weight"] == "96"
    assert run(make_config(command=Command.verify)).passed


def test_invalid_run_config():
    with pytest.raises(ValueError):
        make_config(truncation=0)


def test_render():
    report = cmd_table(3, [1])
    csv = render(report, OutputFormat.csv)
    assert csv.splitlines()[0] == "configuration,weight,probability"
    assert "total,3,1" in csv
    assert json.loads(render(report, OutputFormat.json))["command"] == "table"
    assert "total" in render(report, OutputFormat.table)


def test_table_by_multiline():
    report = cmd_table(4, [1, 1, 1], method=WeightMethod.multiline)
    assert report.results[-1]["weight"] == "96"
    assert report.passed


def test_ansatz():
    report = cmd_ansatz(3)
    rows = report.results
    assert [row["monomial"] for row in rows if row["class"] == 3] == [["A", "A", "E"]]
    assert {tuple(row["monomial"]) for row in rows if row["class"] == 0} == {
        ("1", "1", "E"),
        ("eps", "1", "D"),
        ("1", "eps", "A"),
    }
    assert all(row["rank"] == 3 and row["coefficient"] == "1" for row in rows)
    assert run(make_config(command=Command.ansatz, n_species=3)).results == rows


def test_ansatz_output():
    csv = render(cmd_ansatz(3), OutputFormat.csv)
    assert csv.splitlines()[0] == "class,rank,coefficient,monomial"
    assert "3,3,1,A⊗A⊗E" in csv.splitlines()
    scalars = render(cmd_ansatz(1), OutputFormat.csv).splitlines()[1:]
    assert scalars == ["0,0,1,1", "1,0,1,1"]
    record = json.loads(render(cmd_ansatz(2), OutputFormat.json))
    assert [row["monomial"] for row in record["results"]] == [["E"], ["D"], ["A"]]


def test_ansatz_needs_the_number_of_species():
    with pytest.raises(PreconditionError):
        cmd_ansatz(None)


def test_exit_codes_of_failed_runs():
    with pytest.raises(TruncationOverflowError) as overflow:
        run(make_config(config="2103", truncation=2))
    assert exit_code(overflow.value) == EXIT_RESOURCE_BOUND

    with pytest.raises(EnumerationBoundError) as bound:
        run(
            make_config(
                command=Command.oracle,
                sector=SectorConfig(l=7, p=[3, 2]),
                limits=LimitsConfig(max_solve_states=100),
            )
        )
    assert exit_code(bound.value) == EXIT_RESOURCE_BOUND

    with pytest.raises(ConfigurationParseError) as malformed:
        run(make_config(config="2²"))
    assert exit_code(malformed.value) == EXIT_INPUT_ERROR

    with pytest.raises(PreconditionError) as missing:
        run(make_config(command=Command.ansatz))
    assert exit_code(missing.value) == EXIT_INPUT_ERROR

    assert exit_code(ConsistencyError("kernel of dimension 2")) is None


def test_exit_code_of_an_invalid_config():
    with pytest.raises(ValidationError) as invalid:
        SectorConfig(l=0, p=[1, 1])
    assert exit_code(invalid.value) == EXIT_INPUT_ERROR

    cfg = OmegaConf.structured(make_config())
    cfg.sector.l = 0
    with pytest.raises(ValueError) as converted:
        OmegaConf.to_object(cfg)
    assert exit_code(converted.value) == EXIT_INPUT_ERROR
