"""Shared fixtures: the simulated benchmark and one full pipeline run."""

import pytest

from mapsense.config import PipelineConfig
from mapsense.pipeline import run_pipeline
from mapsense.simulator import simulate_benchmark


@pytest.fixture(scope="session")
def benchmark():
    return simulate_benchmark(0)


@pytest.fixture(scope="session")
def pipeline_result(benchmark):
    traces, net, _truth = benchmark
    return run_pipeline(traces, net, PipelineConfig())
