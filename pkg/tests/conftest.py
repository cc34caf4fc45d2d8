import numpy as np
import pytest

from fairfl import _backend
from fairfl.config import parse_config_text
from fairfl.data import LabeledDataset, generate_synthetic


@pytest.fixture(params=_backend.available_backends())
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def pool():
    return generate_synthetic(num_classes=10, input_dim=32, samples_per_class=200, seed=0)


@pytest.fixture
def tiny_dataset():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((12, 4))
    y = np.array([0, 1, 2] * 4)
    return LabeledDataset(X, y, num_classes=3)


def make_config(num_clients=3, num_malicious=0, start_round=0, seed=0, num_rounds=100, defense="none",
                extra_attack="", extra=""):
    text = (f"[experiment]\nname=t{num_clients}_{num_malicious}_{start_round}\nseed={seed}\n"
            f"num_rounds={num_rounds}\nnum_malicious={num_malicious}\n"
            f"[partition]\nnum_clients={num_clients}\n[defense]\nkind={defense}\n{extra}\n")
    if num_malicious:
        text += f"[attack]\nstart_round={start_round}\n{extra_attack}\n"
    return parse_config_text(text)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
