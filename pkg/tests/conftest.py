import numpy as np
import pytest

from onlinemep import engine, graph, problem


@pytest.fixture(scope="session")
def ex1():
    return problem.example1()


@pytest.fixture(scope="session")
def ex2():
    return problem.example2()


@pytest.fixture(scope="session")
def ex1_bounds(ex1):
    return problem.estimate_bounds(ex1)


@pytest.fixture(scope="session")
def ex2_bounds(ex2):
    return problem.estimate_bounds(ex2)


@pytest.fixture(scope="session")
def ex1_schedule():
    # zeta_t = (20t + 8)^(-1/2), eta_t = (20t + 8)^(-1/3)
    return engine.StepSchedule.time_varying(0.5, 1.0 / 3.0, scale=20.0, shift=8.0)


@pytest.fixture(scope="session")
def ex1_run(ex1, ex1_schedule):
    return engine.run_exact(ex1, graph.example1_graphs(), ex1_schedule, 2000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
