import json
from pathlib import Path

import pytest

from tre_assure.contracts import TailRiskEnvelope, generate_keypair

FIXTURES = Path(__file__).parent / "fixtures"

# one "PASS/FAIL criterion N: ..." line per acceptance criterion, printed at the end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

# rates and shifts of the reference three-domain tandem
MU = (1.0, 1.15, 1.25)
SHIFTS = (0.6, 0.5, 0.4)


@pytest.fixture(scope="session")
def keypair():
    return generate_keypair()


@pytest.fixture
def tandem_tres():
    return [TailRiskEnvelope(f"d{i + 1}", "gold", 1.0, r, t) for i, (r, t) in enumerate(zip(MU, SHIFTS))]


@pytest.fixture(scope="session")
def two_domain():
    return json.loads((FIXTURES / "two_domain.json").read_text())


def load_instance(data):
    """Stages, SLOs and envelopes of a provisioning instance in the JSON exchange format."""
    from tre_assure.contracts import envelope_from_dict, offer_from_dict, slo_from_dict

    stages = [[offer_from_dict(o) for o in stage] for stage in data["stages"]]
    slos = [slo_from_dict(s) for s in data["slos"]]
    envs = {k: envelope_from_dict(v) for k, v in data["envelopes"].items()}
    return stages, slos, envs
