"""Simplified multi-channel DDR5 timing and energy model.

The controller is deliberately plain: per-channel FCFS with an open-page
policy.  The traces this package produces are long sequential streams, so
a reordering scheduler would buy almost nothing and would make the hand
oracles in the tests much harder to check.  Refresh, ODT and thermal
effects are out of scope; the comparisons built on top of this model are
relative, and those effects land on both sides nearly identically.

Timing follows the usual bank state machine: a read needs an open row
(ACT, then tRCD), consecutive reads are spaced by tCCD (the long flavour
within a bank, the short one across banks), and re-opening a bank costs
tRAS before the precharge plus tRP after it.  Completion of a read is its
issue cycle plus tCL plus the burst transfer time.  One command may issue
per channel per cycle.

Energy is the textbook three-term sum: e_act per activation (precharge
included), e_rd per 64-byte burst, and a background term p_bg * wall
clock per channel.  The default constants are derived from a
representative 16 Gb x4 DDR5-4800 datasheet power calculation; the
arithmetic lives in docs/dram-model.md.  They are calibration inputs,
not ground truth.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Sequence


class CommandKind(enum.Enum):
    ACT = "ACT"
    RD = "RD"
    PRE = "PRE"


class DramCommand(NamedTuple):
    kind: CommandKind
    channel: int
    bank: int
    row: int
    column: int
    issue_cycle: int
    request_index: int = 0


@dataclass(frozen=True)
class DramConfig:
    """Geometry, timing and energy constants for the memory model.

    Timings are in command-clock cycles (2,400 MHz for DDR5-4800, so
    0.4167 ns per cycle).  The channel data path is modeled as 32 data
    bits: ten x4 devices per channel, of which the two ECC devices carry
    no modeled payload.  A 64-byte burst therefore occupies the data bus
    for burst_bytes / 8 = 8 command cycles (BL16, double data rate).
    """

    channels: int = 4
    banks_per_channel: int = 32
    row_bytes: int = 8192
    burst_bytes: int = 64
    interleave_bytes: int = 64
    clock_ns: float = 0.4167
    t_rcd: int = 34
    t_cl: int = 34
    t_rp: int = 34
    t_ras: int = 77
    t_ccd_l: int = 12
    t_ccd_s: int = 8
    e_act_pj: float = 11700.0
    e_rd_pj: float = 9090.0
    p_bg_mw: float = 792.0

    def __post_init__(self) -> None:
        counts = {
            "channels": self.channels,
            "banks_per_channel": self.banks_per_channel,
            "row_bytes": self.row_bytes,
            "burst_bytes": self.burst_bytes,
            "interleave_bytes": self.interleave_bytes,
            "t_rcd": self.t_rcd,
            "t_cl": self.t_cl,
            "t_rp": self.t_rp,
            "t_ras": self.t_ras,
            "t_ccd_l": self.t_ccd_l,
            "t_ccd_s": self.t_ccd_s,
        }
        for name, value in counts.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.clock_ns <= 0:
            raise ValueError("clock_ns must be positive")
        if self.e_act_pj < 0 or self.e_rd_pj < 0 or self.p_bg_mw < 0:
            raise ValueError("energy constants must be non-negative")
        if self.row_bytes % self.burst_bytes:
            raise ValueError("burst_bytes must divide row_bytes")
        if self.interleave_bytes % self.burst_bytes:
            raise ValueError("interleave_bytes must be a multiple of burst_bytes")
        if self.t_ras < self.t_rcd:
            raise ValueError("t_ras must be at least t_rcd")

    @property
    def burst_cycles(self) -> int:
        # 32-bit data path at double data rate: 8 bytes move per cycle.
        return self.burst_bytes // 8

    @property
    def columns_per_row(self) -> int:
        return self.row_bytes // self.burst_bytes


def map_address(config: DramConfig, byte_addr: int) -> tuple[int, int, int, int]:
    """Map a burst-aligned byte address to (channel, bank, row, column).

    Channels interleave round-robin on interleave_bytes granules; within
    a channel the burst index splits column-first, then bank, then row,
    so a sequential stream walks the columns of one row before moving on.
    """
    if byte_addr < 0:
        raise ValueError(f"negative address {byte_addr}")
    if byte_addr % config.burst_bytes:
        raise ValueError(
            f"address {byte_addr} is not {config.burst_bytes}-byte aligned"
        )
    granule = config.interleave_bytes
    channel = (byte_addr // granule) % config.channels
    chan_byte = (byte_addr // (granule * config.channels)) * granule + byte_addr % granule
    burst = chan_byte // config.burst_bytes
    column = burst % config.columns_per_row
    bank = (burst // config.columns_per_row) % config.banks_per_channel
    row = burst // (config.columns_per_row * config.banks_per_channel)
    return channel, bank, row, column


class _ChannelState:
    """Mutable per-channel bank timers for one scheduling pass."""

    def __init__(self, config: DramConfig):
        n = config.banks_per_channel
        self.open_row: list[int | None] = [None] * n
        self.act_cycle = [0] * n       # issue cycle of the opening ACT
        self.act_ready = [0] * n       # earliest next ACT (tRP after PRE)
        self.last_bus = -1             # one command per channel per cycle
        self.last_rd = None            # (issue_cycle, bank) of newest read

    def rd_gap(self, config: DramConfig, bank: int) -> int:
        if self.last_rd is None:
            return 0
        cycle, prev_bank = self.last_rd
        gap = config.t_ccd_l if prev_bank == bank else config.t_ccd_s
        return cycle + gap


def schedule(
    config: DramConfig, requests: Iterable
) -> Iterator[DramCommand]:
    """Turn a physical request stream into a timed DDR command stream.

    Requests are served strictly in arrival order per channel (FCFS) with
    an open-page policy: a row hit costs just the RD; a miss precharges
    the stale row (if any) and activates the new one first.  Yields
    commands lazily so multi-million-burst traces never materialize.
    """
    channels = [_ChannelState(config) for _ in range(config.channels)]
    for index, request in enumerate(requests):
        for offset in range(0, request.len_bytes, config.burst_bytes):
            ch, bank, row, column = map_address(config, request.byte_addr + offset)
            st = channels[ch]
            if st.open_row[bank] != row:
                if st.open_row[bank] is not None:
                    # Close the stale row: tRAS since its ACT, then tRP.
                    pre_at = max(st.last_bus + 1, st.act_cycle[bank] + config.t_ras)
                    st.last_bus = pre_at
                    st.act_ready[bank] = pre_at + config.t_rp
                    yield DramCommand(
                        CommandKind.PRE, ch, bank, st.open_row[bank], 0, pre_at, index
                    )
                    st.open_row[bank] = None
                act_at = max(st.last_bus + 1, st.act_ready[bank])
                st.last_bus = act_at
                st.open_row[bank] = row
                st.act_cycle[bank] = act_at
                yield DramCommand(CommandKind.ACT, ch, bank, row, column, act_at, index)
            rd_at = max(
                st.last_bus + 1,
                st.act_cycle[bank] + config.t_rcd,
                st.rd_gap(config, bank),
            )
            st.last_bus = rd_at
            st.last_rd = (rd_at, bank)
            yield DramCommand(CommandKind.RD, ch, bank, row, column, rd_at, index)


@dataclass(frozen=True)
class SimResult:
    """Outcome of one simulated trace.  Immutable once produced.

    completion_cycles holds the last data beat of each request, indexed
    by request_index; request_reads and request_acts count the RD and ACT
    commands attributed to each request (a PRE carries no energy of its
    own, e_act covers it).
    """

    total_cycles: int
    total_ns: float
    energy_pj: dict
    completion_cycles: tuple
    request_reads: tuple
    request_acts: tuple
    bytes_transferred: int
    num_acts: int
    num_reads: int


def simulate(config: DramConfig, commands: Iterable[DramCommand]) -> SimResult:
    """Replay a command stream, checking legality, and account for it.

    The stream must respect the bank state machine and the configured
    timings; a violation raises ValueError naming the constraint.  The
    trace ends at the last data beat (or the last command, for a stream
    with no reads).  Background energy covers every channel for the whole
    span, busy or not: standby power does not care who is reading.
    """
    open_row: dict = {}
    act_cycle: dict = {}
    pre_cycle: dict = {}
    last_bus: dict = {}
    last_rd: dict = {}

    count_act = 0
    count_rd = 0
    last_cycle = -1
    end_cycle = 0
    reads: dict[int, int] = {}
    acts: dict[int, int] = {}
    completion: dict[int, int] = {}
    n_requests = 0

    for cmd in commands:
        ch, bank = cmd.channel, cmd.bank
        key = (ch, bank)
        if ch >= config.channels or bank >= config.banks_per_channel:
            raise ValueError(f"command addresses channel {ch} bank {bank} outside the config")
        if cmd.issue_cycle <= last_bus.get(ch, -1):
            raise ValueError(f"command bus conflict on channel {ch} at cycle {cmd.issue_cycle}")
        last_bus[ch] = cmd.issue_cycle
        last_cycle = max(last_cycle, cmd.issue_cycle)
        n_requests = max(n_requests, cmd.request_index + 1)

        if cmd.kind is CommandKind.ACT:
            if key in open_row:
                raise ValueError(f"activate on channel {ch} bank {bank} with a row already open")
            if key in pre_cycle and cmd.issue_cycle < pre_cycle[key] + config.t_rp:
                raise ValueError(f"t_rp violated on channel {ch} bank {bank}")
            open_row[key] = cmd.row
            act_cycle[key] = cmd.issue_cycle
            count_act += 1
            acts[cmd.request_index] = acts.get(cmd.request_index, 0) + 1
        elif cmd.kind is CommandKind.PRE:
            if key not in open_row:
                raise ValueError(f"precharge on channel {ch} bank {bank} with no open row")
            if cmd.issue_cycle < act_cycle[key] + config.t_ras:
                raise ValueError(f"t_ras violated on channel {ch} bank {bank}")
            del open_row[key]
            pre_cycle[key] = cmd.issue_cycle
        elif cmd.kind is CommandKind.RD:
            if key not in open_row:
                raise ValueError(f"read on channel {ch} bank {bank} with no open row")
            if open_row[key] != cmd.row:
                raise ValueError(f"read to row {cmd.row} on channel {ch} bank {bank} while row {open_row[key]} is open")
            if cmd.issue_cycle < act_cycle[key] + config.t_rcd:
                raise ValueError(f"t_rcd violated on channel {ch} bank {bank}")
            if ch in last_rd:
                prev_cycle, prev_bank = last_rd[ch]
                gap = config.t_ccd_l if prev_bank == bank else config.t_ccd_s
                name = "t_ccd_l" if prev_bank == bank else "t_ccd_s"
                if cmd.issue_cycle < prev_cycle + gap:
                    raise ValueError(f"{name} violated on channel {ch}")
            last_rd[ch] = (cmd.issue_cycle, bank)
            done = cmd.issue_cycle + config.t_cl + config.burst_cycles
            end_cycle = max(end_cycle, done)
            count_rd += 1
            reads[cmd.request_index] = reads.get(cmd.request_index, 0) + 1
            prev = completion.get(cmd.request_index, 0)
            completion[cmd.request_index] = max(prev, done)
        else:
            raise ValueError(f"unknown command kind {cmd.kind!r}")

    if count_rd == 0:
        total_cycles = last_cycle + 1 if last_cycle >= 0 else 0
    else:
        total_cycles = end_cycle
    total_ns = total_cycles * config.clock_ns
    e_act = config.e_act_pj * count_act
    e_rd = config.e_rd_pj * count_rd
    e_bg = config.p_bg_mw * config.channels * total_ns  # mW * ns = pJ
    energy = {
        "activation": e_act,
        "read": e_rd,
        "background": e_bg,
        "total": e_act + e_rd + e_bg,
    }
    return SimResult(
        total_cycles=total_cycles,
        total_ns=total_ns,
        energy_pj=energy,
        completion_cycles=tuple(completion.get(i, 0) for i in range(n_requests)),
        request_reads=tuple(reads.get(i, 0) for i in range(n_requests)),
        request_acts=tuple(acts.get(i, 0) for i in range(n_requests)),
        bytes_transferred=config.burst_bytes * count_rd,
        num_acts=count_act,
        num_reads=count_rd,
    )


def run_trace(config: DramConfig, requests: Sequence) -> SimResult:
    """Schedule and simulate in one go (the common cold-start case)."""
    return simulate(config, schedule(config, requests))


def energy_breakdown(result: SimResult, tags: Sequence) -> dict:
    """Split a result's energy across the per-request tags.

    Activation and read energy follow the commands each request caused;
    background energy is prorated by bytes moved.  Category totals sum
    back to the result's total.  Every request must carry a tag.
    """
    if len(tags) != len(result.completion_cycles):
        raise ValueError(
            f"got {len(tags)} tags for {len(result.completion_cycles)} requests"
        )
    for index, tag in enumerate(tags):
        if tag is None:
            raise ValueError(f"request {index} is untagged")
    out: dict = {}
    e = result.energy_pj
    for index, tag in enumerate(tags):
        share = 0.0
        if result.num_acts:
            share += e["activation"] * result.request_acts[index] / result.num_acts
        if result.num_reads:
            # Bursts are uniform, so the read-count ratio is the byte ratio.
            share += e["read"] * result.request_reads[index] / result.num_reads
            share += e["background"] * result.request_reads[index] / result.num_reads
        out[tag] = out.get(tag, 0.0) + share
    return out
