import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dendro_evo.data import FeatureMatrix  # noqa: E402

# lines collected by the acceptance module, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def iris():
    from sklearn.datasets import load_iris

    d = load_iris()
    names = ("Sepal.Length", "Sepal.Width", "Petal.Length", "Petal.Width")
    labels = np.array([d.target_names[t] for t in d.target], dtype=object)
    return FeatureMatrix.from_array(d.data, names), labels


@pytest.fixture(scope="session")
def wine():
    from sklearn.datasets import load_wine

    d = load_wine()
    return FeatureMatrix.from_array(d.data, tuple(d.feature_names)), np.array([str(t) for t in d.target], dtype=object)


@pytest.fixture
def iris_csv(tmp_path, iris):
    fm, labels = iris
    path = tmp_path / "iris.csv"
    lines = [",".join(fm.names) + ",Species"]
    for i in range(fm.n):
        lines.append(",".join(repr(float(c[i])) for c in fm.columns) + f",{labels[i]}")
    path.write_text("\n".join(lines) + "\n")
    return path
