import os

import pytest
from hypothesis import HealthCheck, settings

from busgrid import REPLICATION_CONFIG, data_path
from busgrid.config import WORKERS_ENV, RunConfig
from busgrid.runner import sweep

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _no_worker_env(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


@pytest.fixture(scope="session")
def replication_cfg(tmp_path_factory):
    out = tmp_path_factory.mktemp("replication")
    return RunConfig.load([data_path(REPLICATION_CONFIG)], [f'paths.output_dir="{out.as_posix()}"'])


@pytest.fixture(scope="session")
def small_cfg(tmp_path_factory):
    """Replication feed restricted to its two shortest routes: quick end-to-end solves."""
    out = tmp_path_factory.mktemp("small")
    return RunConfig.load([data_path(REPLICATION_CONFIG)],
                          [f'paths.output_dir="{out.as_posix()}"', 'selection.routes=["22", "187"]'])


@pytest.fixture(scope="session")
def theta_rows(replication_cfg):
    return sweep(replication_cfg, "theta0", write=False)


@pytest.fixture(scope="session")
def eta_rows(replication_cfg):
    return sweep(replication_cfg, "eta", write=False)


def single_route_instance(route_id: str, n_links: int = 8, soc_init: float = 0.2):
    """One benchmark route laid along a straight line, every stop a candidate, fed by a two-node grid."""
    from busgrid.benchmarks import BENCHMARK_ROUTES, benchmark_route
    from busgrid.core import BatteryPolicy, BusStop, EconomicParams, TransitNetwork
    from busgrid.gridsynth import coupling_candidates
    from busgrid.instance import PlanningInstance
    from busgrid.synthetic import CENTER, _offset, two_node_feeder

    b = next(b for b in BENCHMARK_ROUTES if b.route_id == route_id)
    route = benchmark_route(b, n_links)
    ids = route.stops[:-1]
    stops = {s: BusStop(s, "", *_offset(CENTER, 0.0, 0.2 * k)) for k, s in enumerate(ids)}
    net = TransitNetwork(stops, (route,), frozenset(ids))
    grid = two_node_feeder()
    econ = EconomicParams()
    couplings = coupling_candidates(list(stops.values()), grid, econ, k=1)
    return PlanningInstance(net, grid, tuple(couplings), econ, BatteryPolicy(soc_init=soc_init))


@pytest.fixture(scope="session")
def route_instance():
    return single_route_instance
