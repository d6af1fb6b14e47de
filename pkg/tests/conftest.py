import pytest

from egoagent.memory import build_hierarchy, ingest_clip_logs
from egoagent.synthetic import generate_synthetic_corpus, random_spec
from egoagent.tools import make_mock_dispatcher


@pytest.fixture(scope="session")
def small_corpus():
    """Two short days (1 h of clips each), three planted events."""
    spec = random_spec(seed=11, days=2, clips_per_day=120, n_events=3)
    clips, qas = generate_synthetic_corpus(spec)
    return clips, qas


@pytest.fixture(scope="session")
def small_store(small_corpus):
    clips, _ = small_corpus
    return ingest_clip_logs(clips)


@pytest.fixture(scope="session")
def small_index(small_store):
    return build_hierarchy(small_store)


@pytest.fixture()
def small_dispatcher(small_index, small_store):
    return make_mock_dispatcher(small_index, small_store)
