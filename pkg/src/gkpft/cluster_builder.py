"""Resource-state construction: 3-trees polished by ME-SQEC, HRM fusion, hexagonal clusters.

Every tree is a star graph. A fusion consumes one plain leaf of the
surviving tree and the centre of the absorbed tree, after which the surviving
centre inherits the absorbed tree's leaves. An encoded leaf is a Tree(m+2)
absorbed this way: one of its leaves becomes the Bell leaf used for the
deterministic fusion and the other m become repetition-code ancillae, all
hanging on the node.

Passing ``rng=None`` runs the same pipeline with zero deviations and no
rejections, which yields the analytic variance ledger.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

from .devices import IDEAL_QND, LossConfig, QndConfig, lossy_homodyne, qnd_cz
from .gkp_core import (
    GkpQubitState,
    HrmConfig,
    Quadrature,
    fresh_qubit,
)
from .sqec import SqecConfig, me_sqec_until_accepted

Q, P = Quadrature.Q, Quadrature.P


class Role(str, Enum):
    NODE = "node"
    LEAF = "leaf"
    ANCILLA = "ancilla"


class Kind(str, Enum):
    TREE3 = "Tree3"
    TREE4 = "Tree4"
    TREE5 = "Tree5"
    ENC_TREE3 = "EncTree3"
    ENC_TREE5 = "EncTree5"
    HEX = "Hex"


@dataclass
class VarianceLedger:
    var_q: float
    var_p: float
    history: list = field(default_factory=list)


@dataclass
class ClusterNode:
    id: int
    role: Role
    state: GkpQubitState
    group: int | None = None
    history: list = field(default_factory=list)
    # (tag, variance) of every decision whose error lands on this qubit's p frame
    exposures: list = field(default_factory=list)

    def update(self, tag: str, state: GkpQubitState) -> None:
        self.history.append((tag, state.var_q - self.state.var_q, state.var_p - self.state.var_p))
        self.state = state

    @property
    def ledger(self) -> VarianceLedger:
        return VarianceLedger(self.state.var_q, self.state.var_p, list(self.history))


@dataclass
class TreeCluster:
    kind: Kind
    centers: list[int]
    qubits: dict[int, ClusterNode]
    edges: set = field(default_factory=set)

    @property
    def center(self) -> int:
        return self.centers[0]

    def neighbors(self, qid: int) -> list[int]:
        out = []
        for e in self.edges:
            if qid in e:
                (other,) = e - {qid}
                out.append(other)
        return sorted(out)

    def plain_leaves(self, center: int | None = None) -> list[int]:
        c = self.center if center is None else center
        return [
            n for n in self.neighbors(c)
            if self.qubits[n].role is Role.LEAF and self.qubits[n].group is None
        ]

    def groups(self, center: int | None = None) -> dict[int, tuple[int, list[int]]]:
        """group id -> (Bell leaf id, ancilla ids) hanging on ``center``."""
        c = self.center if center is None else center
        out: dict[int, tuple[int | None, list[int]]] = {}
        for n in self.neighbors(c):
            node = self.qubits[n]
            if node.group is None:
                continue
            leaf, ancs = out.get(node.group, (None, []))
            if node.role is Role.LEAF:
                leaf = n
            else:
                ancs = ancs + [n]
            out[node.group] = (leaf, ancs)
        return {g: (lf, sorted(a)) for g, (lf, a) in sorted(out.items())}

    def dump(self) -> str:
        """One line per qubit: id role var_q var_p neighbour ids."""
        lines = []
        for qid in sorted(self.qubits):
            node = self.qubits[qid]
            nbrs = ",".join(str(n) for n in self.neighbors(qid))
            lines.append(
                f"{qid} {node.role.value} {node.state.var_q:.6g} {node.state.var_p:.6g} {nbrs}"
            )
        return "\n".join(lines) + "\n"


@dataclass
class BuildStats:
    attempts: int = 1
    hrm_rejections: int = 0
    qubits_consumed: int = 0

    def __iadd__(self, other: "BuildStats"):
        self.attempts += other.attempts
        self.hrm_rejections += other.hrm_rejections
        self.qubits_consumed += other.qubits_consumed
        return self


@dataclass(frozen=True)
class BuildConfig:
    sigma2: float
    me_sqec_iters: int = 3
    L: int = 4
    m: int = 3
    hrm: HrmConfig = field(default_factory=HrmConfig)
    qnd: QndConfig = field(default_factory=QndConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ideal_gates: bool = False
    max_retries: int = 100_000
    retry: str = "rebuild"

    def __post_init__(self):
        if self.m < 1 or self.m % 2 == 0:
            raise ValueError("m must be odd")
        if self.L < 1:
            raise ValueError("L must be at least 1")
        if self.me_sqec_iters < 0:
            raise ValueError("me_sqec_iters must be nonnegative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if self.retry not in ("rebuild", "redraw"):
            raise ValueError("retry must be 'rebuild' or 'redraw'")

    @property
    def gate(self) -> QndConfig:
        return IDEAL_QND if self.ideal_gates else self.qnd

    @property
    def sqec(self) -> SqecConfig:
        return SqecConfig(hrm=self.hrm, loss=self.loss.construction(), qnd=self.gate)


class Builder:
    """Stateful construction pipeline; one instance per build, single-threaded."""

    def __init__(self, cfg: BuildConfig, rng=None):
        self.cfg = cfg
        self.rng = rng
        self.stats = BuildStats(attempts=0)
        self._ids = itertools.count()
        self._groups = itertools.count()

    # -- primitives -------------------------------------------------------

    def fresh(self, role: Role) -> ClusterNode:
        self.stats.qubits_consumed += 1
        return ClusterNode(next(self._ids), role, fresh_qubit(self.cfg.sigma2, self.rng))

    def cz(self, a: ClusterNode, b: ClusterNode) -> None:
        sa, sb = qnd_cz(a.state, b.state, self.cfg.gate, self.rng)
        a.update("cz", sa)
        b.update("cz", sb)

    def polish(self, node: ClusterNode) -> None:
        """Alternating ME-SQEC rounds; nodes finish in p, everything else in q."""
        order = (Q, P) if node.role is Role.NODE else (P, Q)
        for _ in range(self.cfg.me_sqec_iters):
            for quad in order:
                res, rejected = me_sqec_until_accepted(
                    node.state, quad, self.cfg.sigma2, self.cfg.sqec, self.rng,
                    self.cfg.max_retries,
                )
                self.stats.hrm_rejections += rejected
                self.stats.qubits_consumed += rejected + 1
                node.update(f"me_sqec_{quad.value}", res.data)

    def measure_out(self, tree: TreeCluster, qid: int, center: int) -> None:
        """Remove a leaf by a q readout; a wrong bit lands on the centre's p frame."""
        leaf = tree.qubits.pop(qid)
        tree.edges.discard(frozenset((qid, center)))
        out = lossy_homodyne(leaf.state, Q, self.cfg.loss.construction(), self.rng)
        c = tree.qubits[center]
        if out.bit:
            c.update("removal", c.state.flipped(P))
        c.exposures.append(("plain", leaf.state.var_q + self.cfg.loss.construction().added_variance))
        c.exposures.extend(leaf.exposures)

    # -- trees ------------------------------------------------------------

    def build_3tree(self) -> TreeCluster:
        self.stats.attempts += 1
        x, y = self.fresh(Role.LEAF), self.fresh(Role.NODE)
        self.cz(y, x)
        self.polish(x)
        self.polish(y)
        z = self.fresh(Role.LEAF)
        self.cz(y, z)
        self.polish(y)
        self.polish(z)
        qubits = {n.id: n for n in (x, y, z)}
        edges = {frozenset((y.id, x.id)), frozenset((y.id, z.id))}
        return TreeCluster(Kind.TREE3, [y.id], qubits, edges)

    def regrow_leaf(self, tree: TreeCluster, center: int) -> int:
        """Attach a fresh polished leaf to ``center`` (the 3-tree attachment step)."""
        c = tree.qubits[center]
        leaf = self.fresh(Role.LEAF)
        self.cz(c, leaf)
        self.polish(c)
        self.polish(leaf)
        tree.qubits[leaf.id] = leaf
        tree.edges.add(frozenset((center, leaf.id)))
        return leaf.id

    def _redrawn(self, state: GkpQubitState) -> GkpQubitState:
        if self.rng is None:
            return state
        return state.evolve(true_dev_q=self.rng.normal(0.0, math.sqrt(state.var_q)),
                       true_dev_p=self.rng.normal(0.0, math.sqrt(state.var_p)))

    def _bell(self, x: GkpQubitState, y: GkpQubitState):
        """HRM Bell readout of two qubits: (q_x + p_y) and (p_x + q_y)."""
        loss = self.cfg.loss.construction()
        lv = loss.added_variance
        o1 = lossy_homodyne(
            GkpQubitState(x.true_dev_q + y.true_dev_p, 0.0, 0.0, 0.0, x.logical_bit_q ^ y.logical_bit_p, 0),
            Q, loss, self.rng, self.cfg.hrm,
        )
        o2 = lossy_homodyne(
            GkpQubitState(x.true_dev_p + y.true_dev_q, 0.0, 0.0, 0.0, x.logical_bit_p ^ y.logical_bit_q, 0),
            Q, loss, self.rng, self.cfg.hrm,
        )
        v1 = x.var_q + y.var_p + lv
        v2 = x.var_p + y.var_q + lv
        return o1, o2, v1, v2

    def fuse(self, a: TreeCluster, b: TreeCluster, rebuild_b=None, kind: Kind | None = None) -> TreeCluster:
        """HRM fusion of a plain leaf of ``a`` with the centre of ``b``.

        A rejected Bell readout discards ``b`` and the consumed leaf; ``a``
        regrows a leaf before the next attempt. With ``retry="rebuild"`` a new
        ``b`` is built from scratch, which costs a geometric number of builds
        per nesting level. With ``retry="redraw"`` the same ``b`` is reused
        with its centre's deviations redrawn from its ledger variances; its
        qubits are still counted as consumed.
        """
        rebuild_b = rebuild_b or (lambda: self.build(b.kind))
        for _ in range(self.cfg.max_retries):
            leaf_id = a.plain_leaves()[0]
            leaf = a.qubits[leaf_id]
            cb = b.qubits[b.center]
            o1, o2, v1, v2 = self._bell(leaf.state, cb.state)
            if o1.accepted and o2.accepted:
                break
            self.stats.hrm_rejections += 1
            del a.qubits[leaf_id]
            a.edges.discard(frozenset((a.center, leaf_id)))
            self.regrow_leaf(a, a.center)
            if self.cfg.retry == "redraw":
                self.stats.qubits_consumed += len(b.qubits)
                cb.state = self._redrawn(cb.state)
            else:
                b = rebuild_b()
        else:
            raise RuntimeError("fusion never accepted")
        ca = a.qubits[a.center]
        # the first outcome fixes the sign of the merged centre's stabilizer (a Z error
        # on it); the second fixes the inherited leaves' stabilizers, equivalent to an
        # X error on the centre
        if o1.bit:
            ca.update("fusion", ca.state.flipped(P))
        if o2.bit:
            ca.update("fusion", ca.state.flipped(Q))
        ca.exposures += [("hrm", v1)] + cb.exposures + leaf.exposures
        del a.qubits[leaf_id]
        a.edges.discard(frozenset((a.center, leaf_id)))
        for qid, node in b.qubits.items():
            if qid == b.center:
                continue
            a.qubits[qid] = node
            a.edges.add(frozenset((a.center, qid)))
        if kind is not None:
            a.kind = kind
        return a

    def build_tree(self, size: int) -> TreeCluster:
        """Star with ``size`` qubits: Tree4 = Tree3 + Tree3, Tree5 = Tree3 + Tree4, and so on."""
        if size < 3:
            raise ValueError("trees start at three qubits")
        if size == 3:
            return self.build_3tree()
        if size == 5:
            tree = self.fuse(self.build_3tree(), self.build_tree(4), rebuild_b=lambda: self.build_tree(4))
        else:
            tree = self.fuse(self.build_tree(size - 1), self.build_3tree())
        tree.kind = {4: Kind.TREE4, 5: Kind.TREE5}.get(size, tree.kind)
        return tree

    def attach_group(self, tree: TreeCluster) -> TreeCluster:
        """Absorb a Tree(m+2) as one encoded leaf: a Bell leaf plus m ancillae."""
        g = next(self._groups)
        size = self.cfg.m + 2

        def source():
            src = self.build_tree(size)
            leaves = src.neighbors(src.center)
            for i, qid in enumerate(leaves):
                node = src.qubits[qid]
                node.group = g
                node.role = Role.LEAF if i == 0 else Role.ANCILLA
            return src

        if not tree.plain_leaves():
            self.regrow_leaf(tree, tree.center)
        return self.fuse(tree, source(), rebuild_b=source)

    def build_enc_3tree(self) -> TreeCluster:
        # a 5-tree absorbing three encoded leaves
        tree = self.build_tree(5)
        for _ in range(3):
            tree = self.attach_group(tree)
        tree.kind = Kind.ENC_TREE3
        return tree

    def build_enc_5tree(self) -> TreeCluster:
        tree = self.build_tree(5)
        for _ in range(2):
            tree = self.fuse(tree, self.build_enc_3tree(), rebuild_b=self.build_enc_3tree)
        tree.kind = Kind.ENC_TREE5
        return tree

    def hex_node(self) -> TreeCluster:
        """Encoded 5-tree trimmed or extended to exactly 2L encoded leaves and two plain leaves."""
        tree = self.build_enc_5tree()
        target = 2 * self.cfg.L
        while len(tree.groups()) < target:
            tree = self.attach_group(tree)
        for g, (leaf, ancs) in list(tree.groups().items())[target:]:
            for qid in [leaf] + ancs:
                self.measure_out(tree, qid, tree.center)
        while len(tree.plain_leaves()) < 2:
            self.regrow_leaf(tree, tree.center)
        for qid in tree.plain_leaves()[2:]:
            self.measure_out(tree, qid, tree.center)
        return tree

    def build_hexagonal(self) -> TreeCluster:
        """Six encoded nodes joined in a ring by leaf-leaf HRM fusions."""
        parts = [self.hex_node() for _ in range(6)]
        qubits: dict[int, ClusterNode] = {}
        edges: set = set()
        for t in parts:
            qubits.update(t.qubits)
            edges |= t.edges
        hexc = TreeCluster(Kind.HEX, [t.center for t in parts], qubits, edges)
        for i in range(6):
            ci, cj = hexc.centers[i], hexc.centers[(i + 1) % 6]
            self._ring_fusion(hexc, ci, cj)
        return hexc

    def _ring_fusion(self, hexc: TreeCluster, ci: int, cj: int) -> None:
        for _ in range(self.cfg.max_retries):
            li, lj = hexc.plain_leaves(ci)[0], hexc.plain_leaves(cj)[0]
            o1, o2, v1, v2 = self._bell(hexc.qubits[li].state, hexc.qubits[lj].state)
            if o1.accepted and o2.accepted:
                break
            self.stats.hrm_rejections += 1
            for leaf, c in ((li, ci), (lj, cj)):
                del hexc.qubits[leaf]
                hexc.edges.discard(frozenset((leaf, c)))
                self.regrow_leaf(hexc, c)
        else:
            raise RuntimeError("ring fusion never accepted")
        for leaf, c, out, v in ((li, ci, o1, v1), (lj, cj, o2, v2)):
            node = hexc.qubits[c]
            if out.bit:
                node.update("ring_fusion", node.state.flipped(P))
            node.exposures.append(("hrm", v))
            node.exposures.extend(hexc.qubits[leaf].exposures)
        for leaf, c in ((li, ci), (lj, cj)):
            del hexc.qubits[leaf]
            hexc.edges.discard(frozenset((leaf, c)))
        hexc.edges.add(frozenset((ci, cj)))

    def build(self, kind: Kind) -> TreeCluster:
        return {
            Kind.TREE3: self.build_3tree,
            Kind.TREE4: lambda: self.build_tree(4),
            Kind.TREE5: lambda: self.build_tree(5),
            Kind.ENC_TREE3: self.build_enc_3tree,
            Kind.ENC_TREE5: self.build_enc_5tree,
            Kind.HEX: self.build_hexagonal,
        }[kind]()


def build_3tree(cfg: BuildConfig, rng=None):
    b = Builder(cfg, rng)
    tree = b.build_3tree()
    return tree, b.stats


def fuse_hrm(a: TreeCluster, b: TreeCluster, cfg: BuildConfig, rng=None, builder: Builder | None = None):
    """Fuse ``b`` into ``a``; the result kind follows the construction table."""
    bld = builder or Builder(cfg, rng)
    start = BuildStats(bld.stats.attempts, bld.stats.hrm_rejections, bld.stats.qubits_consumed)
    table = {
        (Kind.TREE3, Kind.TREE3): Kind.TREE4,
        (Kind.TREE3, Kind.TREE4): Kind.TREE5,
        (Kind.TREE4, Kind.TREE3): Kind.TREE5,
    }
    kind = table.get((a.kind, b.kind))
    out = bld.fuse(a, b, kind=kind)
    stats = BuildStats(
        bld.stats.attempts - start.attempts + 1,
        bld.stats.hrm_rejections - start.hrm_rejections,
        bld.stats.qubits_consumed - start.qubits_consumed,
    )
    return out, stats


def build_enc_3tree(cfg: BuildConfig, rng=None):
    b = Builder(cfg, rng)
    return b.build_enc_3tree(), b.stats


def build_hexagonal(cfg: BuildConfig, rng=None):
    b = Builder(cfg, rng)
    return b.build_hexagonal(), b.stats


@dataclass(frozen=True)
class PipelineLedger:
    """Analytic variances of the qubits that reach the deterministic fusion."""

    node_q: float
    node_p: float
    leaf_q: float
    leaf_p: float
    anc_q: float
    anc_p: float
    node_exposures: tuple

    @property
    def pro(self) -> float:
        """Leaf q + leaf p, the Bell-outcome variance before measurement loss."""
        return self.leaf_q + self.leaf_p


@lru_cache(maxsize=256)
def pipeline_ledger(cfg: BuildConfig) -> PipelineLedger:
    """Ledger of one hexagonal node, its Bell leaves and ancillae (no sampling)."""
    b = Builder(cfg, None)
    tree = b.hex_node()
    c = tree.qubits[tree.center]
    groups = tree.groups()
    leaves = [tree.qubits[lf].state for lf, _ in groups.values()]
    ancs = [tree.qubits[a].state for _, aa in groups.values() for a in aa]
    mean = lambda xs: sum(xs) / len(xs)
    return PipelineLedger(
        node_q=c.state.var_q,
        node_p=c.state.var_p,
        leaf_q=mean([s.var_q for s in leaves]),
        leaf_p=mean([s.var_p for s in leaves]),
        anc_q=mean([s.var_q for s in ancs]),
        anc_p=mean([s.var_p for s in ancs]),
        node_exposures=tuple(c.exposures),
    )
