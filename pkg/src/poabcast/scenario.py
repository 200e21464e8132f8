"""Scenario files: declarative descriptions of a run.

A scenario fixes everything the simulator needs - protocol stack, process
count, delay model, crash schedule, leader-oracle script, client
workload - so that a run is reproducible from the file alone. Scenarios
are YAML on disk; see the bundled files under ``scenarios/``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import yaml

from .sim import DelayModel, OmegaScript

PROTOCOLS = ("naive", "tau-seq", "tau-paxos", "barrier-free")


class ScenarioError(Exception):
    pass


@dataclass
class ClientSpec:
    cid: int
    kind: str  # "loop" | "scripted"
    ops: List[str] = field(default_factory=list)
    sends: List[Dict[str, Any]] = field(default_factory=list)
    retry_every: int = 0
    op_size: int = 0
    start_at: int = 0


@dataclass
class Scenario:
    name: str
    protocol: str
    n: int
    horizon: int
    delay: DelayModel
    omega: OmegaScript
    crashes: Dict[int, int] = field(default_factory=dict)
    reorder: bool = False
    per_byte: float = 0.0
    clients: List[ClientSpec] = field(default_factory=list)
    expect_violation: bool = False

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"unknown protocol: {self.protocol}")
        if self.n < 3 or self.n % 2 == 0:
            raise ScenarioError("n must be an odd number >= 3")
        if len(self.crashes) > (self.n - 1) // 2:
            raise ScenarioError("crashes must leave a quorum of correct processes")
        for p in self.crashes:
            if not 0 <= p < self.n:
                raise ScenarioError(f"crash names unknown process {p}")
        seen = set()
        for c in self.clients:
            if c.cid < self.n or c.cid in seen:
                raise ScenarioError("client ids must be unique and >= n")
            seen.add(c.cid)
            if c.kind not in ("loop", "scripted"):
                raise ScenarioError(f"unknown client kind: {c.kind}")
        try:
            self.omega.validate(self.n, self.crashes)
        except ValueError as e:
            raise ScenarioError(str(e)) from e

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "Scenario":
        try:
            name = raw["name"]
            protocol = raw["protocol"]
            n = int(raw["n"])
            horizon = int(raw["horizon"])
        except KeyError as e:
            raise ScenarioError(f"scenario is missing required key: {e}") from e

        if "jitter" in raw and raw["jitter"]:
            j = raw["jitter"]
            delay = DelayModel.jitter(int(j["min"]), int(j["max"]), int(j.get("seed", 0)))
        else:
            delay = DelayModel.fixed(int(raw.get("delta", 10)))

        segments = []
        for seg in raw.get("omega", [{"at": 0, "leader": 0}]):
            at = int(seg["at"])
            if "outputs" in seg:
                outputs = {int(p): int(l) for p, l in seg["outputs"].items()}
            else:
                outputs = {p: int(seg["leader"]) for p in range(n)}
            segments.append((at, outputs))
        omega = OmegaScript(segments)

        clients = []
        for c in raw.get("clients", []):
            sends = []
            for s in c.get("sends", []):
                sends.append(
                    (
                        int(s["at"]),
                        int(s["to"]),
                        int(s["reqid"]),
                        str(s["op"]),
                        int(s.get("size", 0)),
                    )
                )
            clients.append(
                ClientSpec(
                    cid=int(c["id"]),
                    kind=c.get("kind", "loop"),
                    ops=[str(o) for o in c.get("ops", [])],
                    sends=sends,
                    retry_every=int(c.get("retry_every", 0)),
                    op_size=int(c.get("size", 0)),
                    start_at=int(c.get("start_at", 0)),
                )
            )

        scenario = cls(
            name=name,
            protocol=protocol,
            n=n,
            horizon=horizon,
            delay=delay,
            omega=omega,
            crashes={int(p): int(t) for p, t in (raw.get("crashes") or {}).items()},
            reorder=bool(raw.get("reorder", False)),
            per_byte=float(raw.get("per_byte", 0.0)),
            clients=clients,
            expect_violation=bool(raw.get("expect_violation", False)),
        )
        scenario.validate()
        return scenario

    @classmethod
    def from_yaml(cls, text: str) -> "Scenario":
        raw = yaml.safe_load(text)
        if not isinstance(raw, dict):
            raise ScenarioError("scenario file must contain a mapping")
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path: str) -> "Scenario":
        with open(path) as f:
            return cls.from_yaml(f.read())


def random_scenario(seed: int, protocol: str) -> Scenario:
    """A randomized but reproducible stress scenario for one protocol.

    Mixes delay jitter, message reordering, minority crashes, and a leader
    oracle that flaps (including split views) before settling.
    """
    rng = random.Random(seed)
    n = rng.choice([3, 5])
    delta_min, delta_max = 5, rng.randint(8, 20)
    horizon = 3000

    crashes: Dict[int, int] = {}
    for p in rng.sample(range(n), rng.randint(0, (n - 1) // 2)):
        crashes[p] = rng.randint(100, horizon // 2)

    correct = [p for p in range(n) if p not in crashes]
    segments = [(0, {p: rng.randrange(n) for p in range(n)})]
    t = 0
    for _ in range(rng.randint(1, 5)):
        t += rng.randint(60, 300)
        if rng.random() < 0.3:
            # split view: processes disagree about the leader for a while
            outputs = {p: rng.randrange(n) for p in range(n)}
        else:
            leader = rng.randrange(n)
            outputs = {p: leader for p in range(n)}
        segments.append((t, outputs))
    final_leader = rng.choice(correct)
    segments.append((t + rng.randint(60, 200), {p: final_leader for p in range(n)}))

    clients = []
    for i in range(rng.randint(1, 3)):
        ops = [f"op{i}.{k}" for k in range(rng.randint(2, 4))]
        clients.append(
            ClientSpec(
                cid=n + i,
                kind="loop",
                ops=ops,
                retry_every=rng.randint(40, 120),
                start_at=rng.randint(0, 200),
            )
        )

    scenario = Scenario(
        name=f"random-{protocol}-{seed}",
        protocol=protocol,
        n=n,
        horizon=horizon,
        delay=DelayModel.jitter(delta_min, delta_max, seed),
        omega=OmegaScript(segments),
        crashes=crashes,
        reorder=rng.random() < 0.5,
        clients=clients,
    )
    scenario.validate()
    return scenario
