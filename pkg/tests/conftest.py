import numpy as np
import pytest

from tagalign.model import ModelConfig, VideoTextModel
from tagalign.textproc import RESERVED, Vocabulary

TOY_VOCAB = Vocabulary(list(RESERVED) + [chr(0x4E00 + i) for i in range(6)])

TOY_CONFIG = ModelConfig(
    vocab_size=len(TOY_VOCAB),
    d_v=4,
    d_h=8,
    d_s=4,
    encoder_layers=1,
    decoder_layers=1,
    attention_heads=2,
    max_text_len=6,
    max_frames=4,
)


@pytest.fixture()
def toy_vocab():
    return TOY_VOCAB


@pytest.fixture()
def toy_model():
    return VideoTextModel(TOY_CONFIG, seed=3)


@pytest.fixture()
def toy_batch():
    rng = np.random.default_rng(11)
    frames = rng.normal(0.0, 1.0, (3, TOY_CONFIG.max_frames, TOY_CONFIG.d_v))
    counts = np.array([4, 2, 3])
    tag_ids = [[(6, 7), (8,)], [(9,)], []]
    token_lists = [[6, 7, 8], [9, 10], [11, 6, 7, 8]]
    return frames, counts, tag_ids, token_lists


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" in nodeid:
                name = nodeid.split("::")[-1]
                lines[name] = "PASS" if outcome == "passed" else "FAIL"
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name in sorted(lines, key=lambda n: int(n.split("_")[2])):
            terminalreporter.write_line(f"{name}: {lines[name]}")
