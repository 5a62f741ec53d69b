import numpy as np
import pytest

from driwsl.model import MAP_NAMES, ModelConfig, PotentialModel


def model_with_biases(config, biases):
    """Zero-weight model whose maps output constant vectors ``biases[name]``."""
    model = PotentialModel.zeros(config)
    deltas = {n: {p: np.zeros(s) for p, s in config.shapes(n).items()} for n in MAP_NAMES}
    for name, b in biases.items():
        deltas[name]["b2"] = np.asarray(b, dtype=float)
    return model.updated(deltas)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    return ModelConfig(feature_dim=3, hidden=4, object_vocab=3, predicate_vocab=2)


# one line per acceptance criterion, printed after the test session
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
