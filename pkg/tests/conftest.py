from __future__ import annotations

import numpy as np
import pytest

from kidvoice.audio import AudioClip
from kidvoice.synth import SyntheticCorpusSpec, generate_corpus

SR = 16000


def tone(freq: float, seconds: float, amp: float = 0.5, sr: int = SR) -> np.ndarray:
    t = np.arange(int(round(seconds * sr))) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def clip_of(x: np.ndarray, sr: int = SR, source_id: str = "test") -> AudioClip:
    return AudioClip(x, sr, source_id)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 60-utterance synthetic corpus on disk (manifest path)."""
    out = tmp_path_factory.mktemp("corpus")
    return generate_corpus(SyntheticCorpusSpec(n_utterances=60, seed=3), out)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
