"""Backward/forward sweep power flow on radial feeders and the loss-reduction game.

The model is a single-phase equivalent: S = V * conj(I) with V in volts,
impedances in ohms and powers in kW/kVAr. DERs are constant-P, unity power
factor injections.
"""

from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import CoalitionTable, FleetConfig, ReserveGameError, ValidationError, coalition_key, members_of

TOL_PU = 1e-10  # pu; 1e-8 leaves ~1e-6 kW balance error on heavily loaded feeders
MAX_ITER = 100


class TopologyError(ValidationError):
    pass


class DivergenceError(ReserveGameError):
    pass


@dataclass(frozen=True)
class Bus:
    id: str
    load_p: float = 0.0  # kW
    load_q: float = 0.0  # kVAr


@dataclass(frozen=True)
class Branch:
    from_bus: str
    to_bus: str
    r: float  # ohm
    x: float  # ohm


@dataclass(frozen=True, eq=False)
class NetworkModel:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    slack: str
    v_base: float  # volts
    der_sites: Mapping[int, str] = field(default_factory=dict)
    v_slack: float | None = None  # volts; defaults to v_base

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))
        object.__setattr__(self, "der_sites", dict(self.der_sites))
        if not (math.isfinite(self.v_base) and self.v_base > 0):
            raise ValidationError(f"v_base must be positive, got {self.v_base!r}")
        if self.v_slack is not None and not (math.isfinite(self.v_slack) and self.v_slack > 0):
            raise ValidationError(f"v_slack must be positive, got {self.v_slack!r}")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate bus id")
        for b in self.buses:
            if not (math.isfinite(b.load_p) and math.isfinite(b.load_q)):
                raise ValidationError(f"bus {b.id}: load must be finite")
        for br in self.branches:
            if not (math.isfinite(br.r) and math.isfinite(br.x)) or br.r < 0:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus}: r must be >= 0 and r, x finite")
        for der, site in self.der_sites.items():
            if site not in ids:
                raise ValidationError(f"DER {der}: site {site!r} is not a bus")
        object.__setattr__(self, "_topo", _Topology.build(self))

    @property
    def topology(self) -> _Topology:
        return self._topo


@dataclass(frozen=True, eq=False)
class _Topology:
    order: list[str]  # non-slack buses, breadth-first from the slack
    index: dict[str, int]  # bus id -> row in `order`
    parent: list[str]  # upstream neighbour of each bus in `order`
    z: np.ndarray  # impedance of the branch feeding each bus in `order`, ohm
    down: np.ndarray  # down[k, m] = 1 when bus m is at or below the branch feeding bus k
    roots: np.ndarray  # rows of branches leaving the slack bus

    @classmethod
    def build(cls, net: NetworkModel) -> _Topology:
        ids = {b.id for b in net.buses}
        if net.slack not in ids:
            raise TopologyError(f"slack bus {net.slack!r} is not a bus")
        if len(net.branches) != len(ids) - 1:
            raise TopologyError(
                f"a radial feeder with {len(ids)} buses needs {len(ids) - 1} branches, got {len(net.branches)}"
            )
        adj: dict[str, list[tuple[str, Branch]]] = {b: [] for b in ids}
        for br in net.branches:
            if br.from_bus not in ids or br.to_bus not in ids:
                raise TopologyError(f"branch {br.from_bus}-{br.to_bus} references an unknown bus")
            if br.from_bus == br.to_bus:
                raise TopologyError(f"branch {br.from_bus}-{br.to_bus} is a self-loop")
            adj[br.from_bus].append((br.to_bus, br))
            adj[br.to_bus].append((br.from_bus, br))

        parent: dict[str, str] = {}
        feeder: dict[str, Branch] = {}
        order: list[str] = []
        seen = {net.slack}
        queue = deque([net.slack])
        while queue:
            u = queue.popleft()
            for w, br in adj[u]:
                if w in seen:
                    continue
                seen.add(w)
                parent[w] = u
                feeder[w] = br
                order.append(w)
                queue.append(w)
        if len(seen) != len(ids):
            cut = sorted(ids - seen)[0]
            raise TopologyError(f"bus {cut!r} is not connected to the slack bus")

        index = {b: k for k, b in enumerate(order)}
        m = len(order)
        z = np.array([complex(feeder[b].r, feeder[b].x) for b in order], dtype=complex)
        down = np.zeros((m, m))
        for b in order:
            k = index[b]
            node = b
            while node != net.slack:
                down[index[node], k] = 1.0
                node = parent[node]
        roots = np.array([index[b] for b in order if parent[b] == net.slack], dtype=int)
        return cls(order, index, [parent[b] for b in order], z, down, roots)


@dataclass(frozen=True, eq=False)
class PowerFlowSolution:
    v: dict[str, complex]  # per-unit
    branch_flows: dict[tuple[str, str], complex]  # kW + j kVAr at the sending end, keyed (parent, child)
    total_loss: float  # kW
    slack_injection: complex  # kW + j kVAr
    balance_residual: float  # kW
    iterations: int
    converged: bool


def solve(
    network: NetworkModel,
    injections: Mapping[int, float] | None = None,
    tol: float = TOL_PU,
    max_iter: int = MAX_ITER,
    strict: bool = True,
) -> PowerFlowSolution:
    """Run the backward/forward sweep from a flat start.

    ``injections`` maps DER id to active power in kW. With ``strict`` a run that
    hits the iteration cap raises DivergenceError; otherwise the last iterate is
    returned with ``converged=False``.
    """
    topo = network.topology
    injections = dict(injections or {})
    v_base = network.v_base
    v0 = complex(network.v_slack if network.v_slack is not None else v_base)

    m = len(topo.order)
    s_net = np.zeros(m, dtype=complex)  # VA drawn at each bus
    loads = {b.id: b for b in network.buses}
    for bid in topo.order:
        b = loads[bid]
        s_net[topo.index[bid]] = complex(b.load_p, b.load_q) * 1e3
    load_p_total = math.fsum(b.load_p for b in network.buses)
    slack_load = complex(loads[network.slack].load_p, loads[network.slack].load_q)
    inj_total = 0.0
    slack_inj_der = 0.0
    for der, p in injections.items():
        if der not in network.der_sites:
            raise ValidationError(f"DER {der}: no site in the network")
        if not math.isfinite(p):
            raise ValidationError(f"DER {der}: injection must be finite")
        site = network.der_sites[der]
        inj_total += p
        if site == network.slack:
            slack_inj_der += p
        else:
            s_net[topo.index[site]] -= p * 1e3

    v = np.full(m, v0, dtype=complex)
    i_branch = np.zeros(m, dtype=complex)
    converged = m == 0
    iterations = 0
    with np.errstate(all="ignore"):
        while not converged and iterations < max_iter:
            iterations += 1
            i_bus = np.conj(s_net / v)
            i_branch = topo.down @ i_bus
            v_new = v0 - topo.down.T @ (topo.z * i_branch)
            delta = np.max(np.abs(v_new - v)) / v_base
            v = v_new
            if not np.isfinite(delta):
                break
            converged = delta < tol
        if m:
            # currents consistent with the final voltages
            i_branch = topo.down @ np.conj(s_net / v)

    if strict and not converged:
        raise DivergenceError(f"power flow did not converge in {max_iter} iterations")

    loss_w = float(np.sum(topo.z.real * np.abs(i_branch) ** 2))
    slack_va = v0 * np.conj(np.sum(i_branch[topo.roots])) if m else 0j
    slack_injection = slack_va / 1e3 + slack_load - slack_inj_der
    total_loss = loss_w / 1e3
    residual = abs(slack_injection.real + inj_total - load_p_total - total_loss)

    v_pu = {network.slack: v0 / v_base}
    v_pu.update({b: complex(v[topo.index[b]]) / v_base for b in topo.order})
    flows = {}
    for b, up in zip(topo.order, topo.parent):
        k = topo.index[b]
        flows[(up, b)] = complex(v_pu[up] * v_base * np.conj(i_branch[k])) / 1e3
    return PowerFlowSolution(v_pu, flows, total_loss, complex(slack_injection), residual, iterations, converged)


def _coalition_loss(args) -> float:
    network, injections = args
    return solve(network, injections).total_loss


def plr_table(network: NetworkModel, fleet: FleetConfig, parallel: bool = False) -> CoalitionTable:
    """Loss reduction of each coalition: base-case loss minus loss with its DERs injecting P_e."""
    for d in fleet.ders:
        if d.id not in network.der_sites:
            raise ValidationError(f"DER {d.id}: no site in the network")
    try:
        base = solve(network).total_loss
    except DivergenceError as exc:
        raise DivergenceError(f"base case without DERs: {exc}") from None

    n = fleet.n
    p_e = {d.id: d.p_e for d in fleet.ders}
    jobs = [(network, {i: p_e[i] for i in members_of(mask)}) for mask in range(1, 1 << n)]

    values = np.zeros(1 << n)
    if parallel:
        with ProcessPoolExecutor() as pool:
            futures = [pool.submit(_coalition_loss, job) for job in jobs]
            for mask, fut in enumerate(futures, start=1):
                try:
                    values[mask] = base - fut.result()
                except DivergenceError as exc:
                    raise DivergenceError(f"coalition {{{coalition_key(mask)}}}: {exc}") from None
    else:
        for mask, job in enumerate(jobs, start=1):
            try:
                values[mask] = base - _coalition_loss(job)
            except DivergenceError as exc:
                raise DivergenceError(f"coalition {{{coalition_key(mask)}}}: {exc}") from None
    return CoalitionTable(n, values)
