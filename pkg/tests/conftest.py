import numpy as np
import pytest

from mmerc.config import RunConfig
from mmerc.dataio import CorpusMeta, synth_corpus


def tiny_config(**kw) -> RunConfig:
    """Small widths so full forward/backward passes stay fast."""
    base = dict(d_h=8, d_h1=6, d_h2=3, d_alpha=4, heads=2, pcm_heads=2, text_heads=2,
                d_cls=5, epochs=3, batch_dialogues=2, dropout=0.0, past=2, future=1,
                learning_rate=0.01)
    base.update(kw)
    return RunConfig(**base)


TINY_META = CorpusMeta(d_a=6, d_v=7, d_l=8, M=3, N_S=2)


@pytest.fixture
def tiny_corpus():
    return synth_corpus(6, (2, 5), 2, TINY_META, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
