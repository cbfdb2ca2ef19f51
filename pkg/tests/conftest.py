import pytest
import torch

from src.config import RunConfig
from src.parsing.document import RawExample
from src.parsing.vocab import build_vocab


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training/benchmark tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training, statistics or timing test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture
def toy_corpus():
    return [
        RawExample(
            query="color of kaiborou",
            document=["Kaiborou has color red.", "Kaiborou was founded in 1450.", "Tisa is a town near the river."],
            answer="red",
        ),
        RawExample(
            query="sport of tisa",
            document=["Tisa was founded in 1300.", "Tisa has sport tennis.", "The lake of Tisa attracts visitors."],
            answer="tennis",
        ),
    ]


@pytest.fixture
def toy_vocab(toy_corpus):
    return build_vocab(toy_corpus, max_vocab=200, placeholder_count=4)


@pytest.fixture
def tiny_config():
    """Small, fast model settings; everything else at defaults."""
    return RunConfig({
        "model.embed": 4,
        "model.hidden": 5,
        "model.init_scale": 0.3,
        "selector.filters": 3,
        "selector.width": 2,
        "vocab.placeholders": 4,
        "train.batch_size": 2,
        "train.epochs": 1,
        "train.lr": 0.01,
        "log.level": "WARNING",
    })
