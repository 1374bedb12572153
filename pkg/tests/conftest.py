import pytest
from threadpoolctl import threadpool_limits

from spoofnet.cli import main
from spoofnet.pipeline import load_config, parse_protocol, write_protocol


@pytest.fixture(autouse=True, scope="session")
def _single_thread_blas():
    # bit-identical reproducibility is only promised on a single thread
    with threadpool_limits(limits=1):
        yield


@pytest.fixture(scope="session")
def toy_root(tmp_path_factory):
    """The shipped 200/100 toy corpus plus its config, generated once per session."""
    root = tmp_path_factory.mktemp("toy")
    assert main(["gen-toy", "--out", str(root)]) == 0
    return root


@pytest.fixture(scope="session")
def toy_cfg(toy_root):
    return load_config(toy_root / "toy.toml")


def subset_config(cfg, root, out_dir, n_train=32, n_dev=16, **changes):
    """``cfg`` restricted to the first protocol entries, for quick training runs."""
    paths = {}
    for name, src, n in (("train", cfg.paths.train_protocol, n_train),
                         ("dev", cfg.paths.dev_protocol, n_dev)):
        dst = root / f"{name}_{n}.txt"
        if not dst.exists():
            write_protocol(dst, parse_protocol(src)[:n])
        paths[f"{name}_protocol"] = dst
    paths = cfg.paths.__class__(**{**cfg.paths.__dict__, **paths, "out_dir": out_dir})
    return cfg.replace(paths=paths, **changes)
