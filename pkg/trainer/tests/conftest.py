import pytest

from dcgrid_trainer.client import spawn_server


@pytest.fixture(scope="session")
def day_server():
    with spawn_server(["bundled:train_day", "bundled:eval_week"]) as srv:
        yield srv
