import numpy as np
import pytest

from fedchain import chain, data, fed, netsim


def build_setup(
    n_nodes=6,
    n_pools=2,
    seed=0,
    alpha=0.1,
    aggregation="kl",
    topology=None,
    target=0.90,
    deadline=1e9,
    n_features=6,
    n_classes=3,
    separation=4.0,
    train=None,
    max_rounds=20,
    **overrides,
):
    """Small, fast task/round fixture shared by protocol-level tests."""
    arch = fed.Architecture(n_features=n_features, n_classes=n_classes)
    n_example, n_held = 240, 400
    full = data.make_blobs(
        n_example + n_held + 80 * n_nodes,
        n_features,
        n_classes,
        seed=seed + 1,
        separation=separation,
    )
    example = full.subset(np.arange(n_example))
    held_out = full.subset(np.arange(n_example, n_example + n_held))
    base = full.subset(np.arange(n_example + n_held, len(full)))
    parts = data.partition_noniid(base, n_nodes, alpha=alpha, seed=seed + 4)
    if topology is None:
        topology = netsim.UniformTopology(10, 100)
    latency = netsim.build_topology(n_nodes, seed=seed + 5, model=topology)
    compute = netsim.draw_compute_times(n_nodes, seed=seed + 6)
    task = chain.Task(
        task_id=1,
        arch=arch,
        example=example,
        held_out=held_out,
        target=target,
        deadline=deadline,
        reward=1000,
    )
    setup = chain.RoundSetup(
        task=task,
        latency=latency,
        compute_times=compute,
        miner_data=parts,
        n_pools=n_pools,
        seed=seed,
        aggregation=aggregation,
        train=train or fed.TrainConfig(lr=0.5, epochs=2, batch_size=32),
        max_rounds=max_rounds,
        **overrides,
    )
    return setup


@pytest.fixture
def small_setup():
    return build_setup()
