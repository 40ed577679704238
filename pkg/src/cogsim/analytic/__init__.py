"""Closed-form analysis: queue formulas, service chains and throughput regions."""

from .chains import (ChainConstructionError, MarkovChainModel, build_chain_alg4,
                     build_chain_alg4_lumped, build_chain_alg5, stationary)
from .queueing import RenewalQueueParams, UnstableQueueError, busy_idle, generic_queue_rate
from .regions import (Alg5Region, HalfPlane, PhiCheck, QChoice, ThroughputRegion, c1, c2,
                      derivative_check_phi, dphi_dq, inv_pi1, mu1_alg1, mu1_alg3, mu1_alg4,
                      mu1_alg5, non_coding_time, optimize_q, pi3_alg4, region, region_alg1,
                      region_alg3, region_alg4, region_alg5, renewal_r2)

__all__ = [
    "Alg5Region", "ChainConstructionError", "HalfPlane", "MarkovChainModel", "PhiCheck",
    "QChoice", "RenewalQueueParams", "ThroughputRegion", "UnstableQueueError",
    "build_chain_alg4", "build_chain_alg4_lumped", "build_chain_alg5", "busy_idle", "c1", "c2",
    "derivative_check_phi", "dphi_dq", "generic_queue_rate", "inv_pi1", "mu1_alg1",
    "mu1_alg3", "mu1_alg4", "mu1_alg5", "non_coding_time", "optimize_q", "pi3_alg4",
    "region", "region_alg1", "region_alg3", "region_alg4", "region_alg5", "renewal_r2",
    "stationary",
]
