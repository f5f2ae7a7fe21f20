import numpy as np
import pytest

from mflq import make_problem


@pytest.fixture(scope="session")
def sp1():
    """Scalar regulator: A=-1, B=Q=R=1, everything else zero."""
    return make_problem(1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]])


@pytest.fixture(scope="session")
def sp2():
    """sp1 plus constant drift b=1 and diffusion sigma=0.5."""
    return make_problem(1, 1, A=[[-1.0]], B=[[1.0]], Q=[[1.0]], R=[[1.0]],
                        b=[1.0], sigma=[0.5])


@pytest.fixture(scope="session")
def spmf():
    """sp1 plus a mean coupling Abar=0.5."""
    return make_problem(1, 1, A=[[-1.0]], Abar=[[0.5]], B=[[1.0]],
                        Q=[[1.0]], R=[[1.0]])


@pytest.fixture(scope="session")
def spmf_b():
    """Mean-coupled problem with a constant drift, so the steady state
    is away from the origin."""
    return make_problem(1, 1, A=[[-1.0]], Abar=[[0.5]], B=[[1.0]],
                        Q=[[1.0]], R=[[1.0]], b=[1.0])


@pytest.fixture(scope="session")
def random_2x2():
    """A fixed 2x2 problem with valid weights and a stabilizable mean
    system (B has full row rank)."""
    rng = np.random.default_rng(11)
    G = rng.standard_normal((2, 2))
    A = 0.3 * rng.standard_normal((2, 2)) - 1.2 * np.eye(2)
    Abar = 0.1 * rng.standard_normal((2, 2))
    B = np.eye(2) + 0.1 * rng.standard_normal((2, 2))
    Q = G.T @ G + np.eye(2)
    S = 0.1 * rng.standard_normal((2, 2))
    C = 0.2 * rng.standard_normal((2, 2))
    D = 0.1 * rng.standard_normal((2, 2))
    return make_problem(2, 2, A=A, Abar=Abar, B=B, C=C, D=D,
                        Q=Q, S=S, R=np.eye(2))
