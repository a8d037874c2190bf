"""Lockstep runner for the occupancy engine against the packet-level engine."""

from dataclasses import dataclass, field

import numpy as np

from rlncsim import occupancy
from rlncsim.netmodel import ErasureNetwork, sample_realizations, seed_streams
from rlncsim.packetized import DensePacketizedEngine, PacketizedEngine


@dataclass
class OracleReport:
    epochs: int
    subsets: int
    discrepancies: list = field(default_factory=list)
    delivery_mismatches: int = 0

    @property
    def pairs(self) -> int:
        return self.epochs * self.subsets

    @property
    def rate(self) -> float:
        return len(self.discrepancies) / self.pairs


def run_oracle(network: ErasureNetwork, epochs: int, seed: int, w: int = 16, k=None, dense: bool = False) -> OracleReport:
    """Drive both engines with one realization sequence and compare every b_S.

    After a logged discrepancy the occupancy state is resynchronised to the
    measured one, so each spurious field dependence is counted once rather
    than for every later epoch.
    """
    channel, coding = seed_streams(seed)
    if dense:
        pk = DensePacketizedEngine(network, k, w, coding)
    else:
        pk = PacketizedEngine(network, k, w, coding)
    b = occupancy.zero_state(network.n)
    report = OracleReport(epochs, 1 << network.n)
    for t, real in enumerate(sample_realizations(network, channel, epochs)):
        got = pk.step_epoch(real)
        out = occupancy.step_epoch(network, b, real, check=True)
        measured = pk.measure_all()
        if got != out.delivered:
            report.delivery_mismatches += 1
        bad = np.flatnonzero(measured != out.new_state)
        for s in bad.tolist():
            report.discrepancies.append(
                {
                    "epoch": t,
                    "subset": occupancy.mask_members(s),
                    "model": int(out.new_state[s]),
                    "measured": int(measured[s]),
                    "realization": real.tolist(),
                }
            )
        b = measured.astype(occupancy.DTYPE) if bad.size else out.new_state
    return report
