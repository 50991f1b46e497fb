import numpy as np
import pytest

from ambientmodes.fixtures import build_fixture
from ambientmodes.linearize import linearize
from ambientmodes.network import (
    MachineSet,
    ReducedAdmittance,
    SystemModel,
    VscSet,
)


@pytest.fixture(scope="session")
def ninebus():
    return build_fixture("ninebus_1vsc")


@pytest.fixture(scope="session")
def ninebus_reduced(ninebus):
    return linearize(ninebus.model, reduced=True)


@pytest.fixture(scope="session")
def twomachine():
    return build_fixture("twomachine_1vsc")


@pytest.fixture(scope="session")
def tenmachine():
    return build_fixture("tenmachine_3vsc")


@pytest.fixture()
def single_gen_vsc():
    """One machine tied to one converter bus by a pure j0.2 reactance."""
    y = np.array([[-5j, 5j], [5j, -5j]])
    machines = MachineSet(inertia=[10.0], damping=[1.0], emf=[1.0],
                          p_mech=[0.0], sigma=[0.0])
    vscs = VscSet.constant_power([0.0], [0.0], 1)
    return SystemModel(machines=machines, vscs=vscs, admittance=ReducedAdmittance(y))


def random_connected_admittance(rng, n, lossy=True):
    """Random connected network: a spanning chain plus extra branches."""
    y = np.zeros((n, n), dtype=complex)

    def add(i, j):
        x = rng.uniform(0.1, 0.6)
        r = rng.uniform(0.01, 0.1) if lossy else 0.0
        ys = 1.0 / (r + 1j * x)
        y[i, i] += ys
        y[j, j] += ys
        y[i, j] -= ys
        y[j, i] -= ys

    for i in range(n - 1):
        add(i, i + 1)
    for _ in range(n):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            add(int(i), int(j))
    return y
