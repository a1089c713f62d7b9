import csv
import json

import numpy as np
import pytest

from dlsjm import cli
from dlsjm.mixture_rasch import EMConfig
from dlsjm.sampler import SamplerConfig
from dlsjm.simgen import SimDesign
from dlsjm.study import replicate_seeds, row_normalized_confusion, run_study, write_study

TINY = SamplerConfig(n_iterations=200, burn_in=100, thin=5, adapt_window=50)
EM = EMConfig(n_starts=2, max_iter=200)


def test_replicate_seeds_distinct_and_stable():
    seeds = {replicate_seeds(1, c, r) for c in range(6) for r in range(5)}
    assert len(seeds) == 30
    assert replicate_seeds(1, 2, 3) == replicate_seeds(1, 2, 3)
    assert replicate_seeds(1, 2, 3) != replicate_seeds(2, 2, 3)


def test_confusion_rows_and_matching():
    truth = np.array([0, 0, 1, 1, 2, 2])
    pred = np.array([2, 2, 0, 0, 1, 0])
    cm = row_normalized_confusion(truth, pred, 3)
    np.testing.assert_allclose(cm.sum(axis=1), 1.0)
    np.testing.assert_allclose(np.diag(cm), [1.0, 1.0, 0.5])


@pytest.fixture(scope="module")
def study(tmp_path_factory):
    designs = [SimDesign(respondents_per_class=8, p11=0.9, p12=0.9), SimDesign(respondents_per_class=8)]
    result = run_study(designs, 1, TINY, seed=4, em=EM)
    out = tmp_path_factory.mktemp("study")
    write_study(result, out)
    return result, out


def test_table_shape(study):
    result, out = study
    assert len(result.conditions) == 2 and all(c.n_ok == 1 for c in result.conditions)
    with open(out / "table3.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    # two conditions, two methods, three true classes
    assert len(rows) == 12
    for r in rows:
        vals = [float(r[f"cluster_{g}"]) for g in (1, 2, 3)]
        assert sum(vals) == pytest.approx(1.0)
    assert (out / "replicates" / "c0_r0.json").exists()
    assert json.loads((out / "study.json").read_text())["notes"]


def test_study_deterministic(study):
    result, _ = study
    again = run_study([SimDesign(respondents_per_class=8, p11=0.9, p12=0.9)], 1, TINY, seed=4, em=EM)
    np.testing.assert_array_equal(again.replicates[0].confusion["dlsjm"], result.replicates[0].confusion["dlsjm"])


def test_failures_are_recorded():
    # three respondents cannot be split into three spectral clusters
    result = run_study([SimDesign(respondents_per_class=1)], 1, TINY, seed=0, em=EM)
    assert result.conditions[0].n_failed == 1 and result.replicates[0].error


def test_cli_single_condition(tmp_path):
    code = cli.main(["study", "--out", str(tmp_path), "--seed", "2", "--grid", "single", "--replicates", "1",
                     "--per-class", "8", "--iterations", "200", "--burn-in", "100", "--thin", "5",
                     "--adapt-window", "50", "--starts", "2"])
    assert code == 0 and (tmp_path / "table3.csv").exists()
