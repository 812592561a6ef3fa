import numpy as np
import pytest

from dyhg.data import SyntheticSpec, generate_synthetic
from dyhg.dhcm import DhcmConfig
from dyhg.model import ModelConfig, ModelParams, init_params, loss_and_grads
from dyhg.numerics import Rng, gumbel_sample

TINY = dict(N=12, d=8, H=4, M=6, C=3)


class TinyCase:
    """The N=12, d=8, H=4, M=6, C=3 instance in float64 with frozen Gumbel draws."""

    def __init__(self, variant="full", tau=0.1, seed=0, label=1):
        rng = Rng(seed)
        self.x = rng.spawn(7).normal((TINY["N"], TINY["d"]))
        self.noise = gumbel_sample(rng.spawn(8), TINY["N"], TINY["H"])
        self.label = label
        self.cfg = ModelConfig(
            d=TINY["d"], num_classes=TINY["C"], hidden=TINY["M"],
            dhcm=DhcmConfig(TINY["H"], tau, variant),
        )
        self.params = init_params(self.cfg, rng.spawn(9), dtype=np.float64)

    def loss(self, values):
        mp = ModelParams.from_values(values)
        loss, _ = loss_and_grads(self.x, self.label, mp, self.cfg, training=True, noise=self.noise)
        return loss, {k: mp[k].grad for k in values}


@pytest.fixture
def tiny():
    return TinyCase


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """40 small bags over 4 classes, split 5:2:3 per class."""
    root = tmp_path_factory.mktemp("small_ds")
    spec = SyntheticSpec(bags_per_class=10, n_min=32, n_max=96, seed=3)
    manifest, certificate = generate_synthetic(spec, root)
    assert certificate == 1.0
    return root / "manifest.tsv"


# -- acceptance reporting --------------------------------------------------

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA[number] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title}")
