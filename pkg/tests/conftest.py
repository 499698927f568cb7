from pathlib import Path

import numpy as np
import pytest

from edsr.phonetics import Lexicon

DATA = Path(__file__).parent / "data"

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def lexicon():
    return Lexicon.load(DATA / "lexicon.txt")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {detail}")


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory):
    """Small synthetic corpus: (directory, utterances, lexicon)."""
    from edsr.synth import SynthSpec, generate

    out = tmp_path_factory.mktemp("toy")
    spec = SynthSpec(n_speakers=2, utterances_per_speaker=8, words_per_utterance=(1, 2), seed=5)
    utts = generate(spec, out)
    return out, utts, Lexicon.load(out / "lexicon.txt", inventory=spec.phonemes)
