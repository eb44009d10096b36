import pytest

from minsphere import mcf


@pytest.fixture(scope="session")
def sphere_run():
    return mcf.run_config(mcf.GOLDEN_SPHERE)[0]


@pytest.fixture(scope="session")
def dumbbell_run():
    return mcf.run_config(mcf.GOLDEN_DUMBBELL)[0]


@pytest.fixture(scope="session")
def sphere_foliation(sphere_run):
    return mcf.extract_foliation(sphere_run)


@pytest.fixture(scope="session")
def dumbbell_foliation(dumbbell_run):
    return mcf.extract_foliation(dumbbell_run)


@pytest.fixture(scope="session")
def s3_fol():
    from minsphere import ambient, sweepout
    return sweepout.build_optimal_foliation(ambient.round_sphere(1.0))


@pytest.fixture(scope="session")
def s3_cfg(s3_fol):
    from minsphere import sweepout
    return sweepout.make_config(s3_fol)


@pytest.fixture(scope="session")
def s3_width(s3_fol):
    from minsphere import ambient, sweepout
    return sweepout.width_report(ambient.round_sphere(1.0), fol=s3_fol)


@pytest.fixture(scope="session")
def degeneration_rows():
    from minsphere import sweepout
    return sweepout.degeneration_experiment((1.5, 1.2, 1.0), [2, 4, 8, 16, 32])


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects (criterion, verdict line) pairs for the terminal summary."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
