import numpy as np
import pytest

from neuroincept.model import InceptionConfig, ModelConfig, NeuroInceptDecoder

_acceptance_lines = []


@pytest.fixture
def criterion():
    """Recorder for acceptance-criterion outcomes.

    Each acceptance test calls this once; the line is echoed immediately
    and repeated in a terminal summary block so every criterion gets one
    visible PASS/FAIL line regardless of output capturing.
    """
    def record(num, name, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {num} ({name}): {status}"
        if detail:
            line += f" [{detail}]"
        _acceptance_lines.append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_model_config():
    """A scaled-down decoder config for fast structural tests."""
    return ModelConfig(
        n_channels=2,
        context_len=9,
        gru_units=(8, 12, 16),
        dense_units=(24, 16),
        output_dim=6,
        inception=InceptionConfig(branch_filters=3, post_conv_filters=4),
    )


@pytest.fixture
def tiny_decoder(tiny_model_config):
    return NeuroInceptDecoder(tiny_model_config, seed=123)
