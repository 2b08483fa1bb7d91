import pytest

from discoverfriends import crypto


@pytest.fixture(scope="session")
def shared_keypair():
    """One RSA pair for tests that do not exercise key generation itself."""
    return crypto.generate_keypair()


@pytest.fixture(scope="session")
def second_keypair():
    return crypto.generate_keypair()
