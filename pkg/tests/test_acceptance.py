"""Full-scale acceptance checks, one test per criterion.

Each test prints a PASS/FAIL line (also collected into the terminal summary)
and then asserts the outcome; a failure shows the criterion's details.
"""
import json

import pytest

from bigraph import acceptance, cli

MASTER_SEED = 0


def _check(res, acceptance_log):
    line = res.line(timing=True)
    print(line)
    acceptance_log.append(line)
    assert res.passed, json.dumps(res.to_dict(include_timing=True), indent=2, default=str)


@pytest.mark.slow
@pytest.mark.parametrize("number", range(1, 12))
def test_criterion(number, acceptance_log):
    check = acceptance.CRITERIA[number - 1]
    _check(check(quick=False, seed=MASTER_SEED), acceptance_log)


@pytest.mark.slow
def test_criterion_12_quick_suite_is_byte_identical(tmp_path, acceptance_log, capsys):
    argv = ["verify", "--quick", "--only", ",".join(str(k) for k in range(1, 12))]
    paths = [tmp_path / "first.json", tmp_path / "second.json"]
    codes = [cli.dispatch(argv + ["--out", str(p)]) for p in paths]
    capsys.readouterr()
    same = paths[0].read_bytes() == paths[1].read_bytes()
    res = acceptance.CriterionResult(12, "quick suite is reproducible", same and codes == [0, 0],
                                     {"exit_codes": codes, "bytes": paths[0].stat().st_size})
    _check(res, acceptance_log)
