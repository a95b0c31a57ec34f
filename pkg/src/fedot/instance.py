"""Problem instance bundle and the built-in case-study data."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import Bounds, Network, TypeDistribution, complete_network
from .utility import UtilityModel

# three target types, two sources, linear utilities
CASE_DELTA = [[2.0, 4.0], [2.0, 2.0], [4.0, 4.0]]
CASE_GAMMA = [[2.0, 2.0], [3.0, 2.0], [1.0, 4.0]]
CASE_P_HI = [2.0, 3.0, 4.0]
CASE_Q_HI = [4.0 * 300, 4.0 * 300]
CASE_PROB = [0.5, 0.3, 0.2]
CASE_SHIFTED_PROB = [0.12, 0.65, 0.23]
CASE_POPULATION = 8000
CASE_SHIFT_AT = 600
CASE_ITERATIONS = 8000
CASE_STEP = 0.5


@dataclass(frozen=True, eq=False)
class Instance:
    network: Network
    utility: UtilityModel
    bounds: Bounds
    dist: TypeDistribution

    def __post_init__(self):
        self.bounds.check(self.network)
        if len(self.dist) != self.network.n_types:
            raise ValueError("distribution length does not match the number of types")

    def with_distribution(self, dist: TypeDistribution) -> "Instance":
        return replace(self, dist=dist)


def case_study_instance(prob=CASE_PROB, population=CASE_POPULATION) -> Instance:
    net = complete_network(3, 2)
    return Instance(
        network=net,
        utility=UtilityModel.linear(net, CASE_DELTA, CASE_GAMMA),
        bounds=Bounds.upper(CASE_P_HI, CASE_Q_HI),
        dist=TypeDistribution(np.asarray(prob, dtype=float), population),
    )
