import time

import pytest

from flowfill.duration import DurationModel
from flowfill.network import FieldNet, NetConfig
from flowfill.synth import ToyProcessSpec, generate_dataset
from flowfill.tasks import Infiller
from flowfill.training import TrainConfig, train_audio, train_duration

# Desk budget shared by every test that needs trained models.
AUDIO_STEPS = 1500
FAST = dict(batch_size=16, lr=1e-3, warmup=100)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def toy_train():
    return generate_dataset(ToyProcessSpec(), 2000, seed=3)


@pytest.fixture(scope="session")
def toy_test(toy_train):
    return generate_dataset(ToyProcessSpec(), 200, seed=99, normalizer=toy_train.normalizer)


@pytest.fixture(scope="session")
def duration_regressor(toy_train):
    model = DurationModel.create("regression", toy_train.phones.size, seed=0)
    train_duration(model, toy_train, TrainConfig(steps=300, batch_size=16, lr=1e-3, warmup=30))
    return model


@pytest.fixture(scope="session")
def trained_system(toy_train, duration_regressor):
    """Audio model trained at the desk budget plus the duration regressor."""
    start = time.perf_counter()
    model = FieldNet(NetConfig(vocab=toy_train.phones.size), seed=0)
    log = train_audio(model, toy_train, TrainConfig(steps=AUDIO_STEPS, **FAST))
    infiller = Infiller(model, duration_regressor, toy_train.phones)
    infiller.train_log = log
    infiller.train_seconds = time.perf_counter() - start
    return infiller
