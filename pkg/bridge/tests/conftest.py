import pytest

from logicdiff_bridge import ModelConfig, ServeConfig, create_model, save_checkpoint, start_in_thread


@pytest.fixture(scope="session")
def checkpoint_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("bridge") / "tiny.pt"
    save_checkpoint(path, create_model(ModelConfig(vocab_size=200, rng_seed=3)))
    return str(path)


def _serve(cfg):
    server, thread = start_in_thread(cfg)
    yield server
    server.shutdown()
    thread.join(timeout=5)


@pytest.fixture(scope="session")
def dense_server(checkpoint_path):
    yield from _serve(ServeConfig(checkpoint=checkpoint_path))


@pytest.fixture(scope="session")
def sparse_server(checkpoint_path):
    yield from _serve(ServeConfig(checkpoint=checkpoint_path, sparse=True))
