import numpy as np
import pytest

from g0forge.kinematics import parse_urdf
from g0forge.synthetic.robots import DUAL_ARM_EE, arm6_urdf, dual_arm_urdf, planar_2link_urdf


@pytest.fixture(scope="session")
def planar():
    return parse_urdf(planar_2link_urdf(), {"main": "tool"})


@pytest.fixture(scope="session")
def arm6():
    return parse_urdf(arm6_urdf(), {"main": "tcp"})


@pytest.fixture(scope="session")
def dual():
    return parse_urdf(dual_arm_urdf(), DUAL_ARM_EE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    from g0forge.synthetic.sessions import make_corpus
    return make_corpus(tmp_path_factory.mktemp("fixtures"))


@pytest.fixture(scope="session")
def processed(corpus, tmp_path_factory):
    """The corpus run once through ``g0forge process``; reports the store and wall time."""
    import time

    from g0forge.cli import main

    store = tmp_path_factory.mktemp("store")
    t0 = time.perf_counter()
    code = main(["--config", str(corpus["config"]), "process", str(corpus["config"].parent / "sessions"),
                 "--store", str(store)])
    return {"store": store, "code": code, "elapsed": time.perf_counter() - t0, **corpus}


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """``acceptance(n, ok, detail)`` records one criterion line for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
