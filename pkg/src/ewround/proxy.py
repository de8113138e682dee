"""Learnable entry-wise affine / concave proxies with analytic gradients.

A proxy maps an instance C to latent representations (W, U_v, Q_uv), which do not
depend on the assignment, and then evaluates

    phi(x)   = W + sum_v U_v x_v + sum_(u,v) Q_uv x_u x_v          (second order)
    phi(x)   = sum_v (U_v x_v + U'_v) prod_(u~v) (Q_vu x_u + Q'_vu)  (higher order)
    AFF(x)   = <w, phi(x)>
    CON(x)   = <w, -relu(phi(x))> + b,  w >= 0

The encoders standing in for graph networks are feature maps over node attributes
(own attributes plus neighbour mean), edge endpoint attributes and the graph mean.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ewconcave import RelaxedFunction, Structure, relu
from .graph import GraphInstance, LabeledSample

__all__ = [
    "ARCHITECTURES",
    "FEATURE_KINDS",
    "TrainConfig",
    "ProxyParams",
    "LatentRep",
    "Topology",
    "TrainingDivergence",
    "build_topology",
    "init_params",
    "encode",
    "phi_second_order",
    "phi_higher_order",
    "aff_eval",
    "con_eval",
    "proxy_eval",
    "proxy_gradient",
    "proxy_function",
    "train_proxy",
    "save_checkpoint",
    "load_checkpoint",
]

ARCHITECTURES = ("AFF", "CON", "higher", "higher-CON")
FEATURE_KINDS = ("linear", "quadratic", "mlp")
CHECKPOINT_FORMAT = "ewround-proxy"
CHECKPOINT_VERSION = 1


class TrainingDivergence(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"training loss became non-finite ({value}) at step {step}")
        self.step = step


def _head(arch: str) -> str:
    return "CON" if arch.endswith("CON") else "AFF"


def _latent(arch: str) -> str:
    return "higher" if arch.startswith("higher") else "second"


# ---------------------------------------------------------------- topology


@dataclass(frozen=True, eq=False)
class Topology:
    """Assignment-independent arrays describing one instance in a given variable scope."""

    scope: str
    n: int
    graph_feat: np.ndarray  # (dg,)
    unit_feat: np.ndarray  # (n, du)
    pair_idx: np.ndarray  # (m, 2) unordered interacting unit pairs
    pair_feat: np.ndarray  # (m, dp)
    nbr_idx: np.ndarray  # (n, D), padded with n
    nbr_mask: np.ndarray  # (n, D)
    dir_feat: np.ndarray  # (n, D, dp) features of directed pairs (v, nbr)

    @property
    def key(self) -> tuple:
        return (self.scope, self.n, self.pair_idx.tobytes(), self.nbr_idx.tobytes())


def _pad_neighbors(nbrs: list[list[int]], n: int) -> tuple[np.ndarray, np.ndarray]:
    width = max(1, max((len(a) for a in nbrs), default=0))
    idx = np.full((n, width), n, dtype=int)
    for v, a in enumerate(nbrs):
        idx[v, : len(a)] = a
    return idx, idx < n


def build_topology(inst: GraphInstance, scope: str) -> Topology:
    z = inst.node_attrs
    if scope == "node":
        nbrs = inst.neighbors()
        nbr_mean = np.array([z[a].mean(axis=0) if a else np.zeros(z.shape[1]) for a in nbrs])
        unit = np.concatenate([z, nbr_mean], axis=1)
        pair_idx = inst.edge_array()
        pair_src = z
        pair_feat = np.concatenate([z[pair_idx[:, 0]], z[pair_idx[:, 1]]], axis=1)
        n = inst.node_count
        dir_src = z
    elif scope == "edge":
        e = inst.edge_array()
        unit = np.concatenate([z[e[:, 0]], z[e[:, 1]]], axis=1)
        pair_idx = np.asarray(inst.edge_adjacent_pairs(), dtype=int).reshape(-1, 2)
        pair_src = unit
        pair_feat = np.concatenate([unit[pair_idx[:, 0]], unit[pair_idx[:, 1]]], axis=1)
        n = inst.edge_count
        nbrs = [[] for _ in range(n)]
        for a, b in pair_idx:
            nbrs[a].append(int(b))
            nbrs[b].append(int(a))
        dir_src = unit
    else:
        raise ValueError(f"unknown scope {scope!r}")
    nbr_idx, nbr_mask = _pad_neighbors(nbrs, n)
    src_pad = np.concatenate([dir_src, np.zeros((1, dir_src.shape[1]))], axis=0)
    dir_feat = np.concatenate(
        [np.broadcast_to(dir_src[:, None, :], nbr_idx.shape + (dir_src.shape[1],)), src_pad[nbr_idx]],
        axis=2,
    )
    return Topology(
        scope=scope,
        n=n,
        graph_feat=z.mean(axis=0),
        unit_feat=unit,
        pair_idx=pair_idx,
        pair_feat=pair_feat.reshape(len(pair_idx), 2 * pair_src.shape[1]),
        nbr_idx=nbr_idx,
        nbr_mask=nbr_mask,
        dir_feat=dir_feat,
    )


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "squared"
    huber_delta: float = 1.0
    step_size: float = 1e-2
    steps: int = 2000
    batch: int = 256
    seed: int = 0
    projection: bool = True
    optimizer: str = "adam"
    width: int = 8
    features: str = "quadratic"
    hidden: int = 16
    normalize: bool = True

    def __post_init__(self) -> None:
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.loss not in ("squared", "huber"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.features not in FEATURE_KINDS:
            raise ValueError(f"unknown feature map {self.features!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class ProxyParams:
    arch: str
    width: int
    scope: str
    features: str
    weights: dict
    scalers: dict
    hidden: int = 16

    def __post_init__(self) -> None:
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; expected one of {ARCHITECTURES}")
        if self.features not in FEATURE_KINDS:
            raise ValueError(f"unknown feature map {self.features!r}")
        w = self.weights.get("w")
        if w is None or w.shape != (self.width,):
            raise ValueError("head weight 'w' missing or of wrong length")
        if _head(self.arch) == "CON" and np.any(w < 0):
            raise ValueError("CON head weights must be nonnegative")

    @property
    def head(self) -> str:
        return _head(self.arch)

    @property
    def latent(self) -> str:
        return _latent(self.arch)

    def replace_weights(self, weights: dict) -> "ProxyParams":
        return ProxyParams(self.arch, self.width, self.scope, self.features, weights, self.scalers, self.hidden)


def _expanded_dim(kind: str, d: int, hidden: int) -> int:
    if kind == "linear":
        return d
    if kind == "quadratic":
        return d + d * (d + 1) // 2
    return hidden


def _map_init(rng, prefix: str, kind: str, d_in: int, d_out: int, hidden: int, bias: np.ndarray) -> dict:
    p = _expanded_dim(kind, d_in, hidden)
    out = {
        f"{prefix}.A": rng.normal(scale=1.0 / math.sqrt(max(p, 1)), size=(p, d_out)),
        f"{prefix}.c": bias.astype(float).copy(),
    }
    if kind == "mlp":
        out[f"{prefix}.H"] = rng.normal(scale=1.0 / math.sqrt(max(d_in, 1)), size=(d_in, hidden))
        out[f"{prefix}.h"] = np.full(hidden, 0.1)
    return out


def _identity_scalers(topo: Topology) -> dict:
    s = {}
    for name, arr in (("graph", topo.graph_feat), ("unit", topo.unit_feat), ("pair", topo.dir_feat)):
        d = arr.shape[-1]
        s[f"{name}.mu"] = np.zeros(d)
        s[f"{name}.sd"] = np.ones(d)
    s["y.mu"] = np.zeros(1)
    s["y.sd"] = np.ones(1)
    return s


def init_params(
    arch: str,
    topo: Topology,
    width: int = 8,
    features: str = "quadratic",
    hidden: int = 16,
    seed=0,
    scalers: dict | None = None,
) -> ProxyParams:
    """Random parameters sized for instances shaped like ``topo``."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}; expected one of {ARCHITECTURES}")
    rng = np.random.default_rng(seed)
    F = width
    dg, du, dp = topo.graph_feat.shape[-1], topo.unit_feat.shape[-1], topo.dir_feat.shape[-1]
    w: dict = {}
    if _latent(arch) == "second":
        w.update(_map_init(rng, "W", features, dg, F, hidden, np.full(F, 1.0)))
        w.update(_map_init(rng, "U", features, du, F, hidden, np.zeros(F)))
        w.update(_map_init(rng, "Q", features, dp, F, hidden, np.zeros(F)))
    else:
        w.update(_map_init(rng, "U", features, du, 2 * F, hidden, np.concatenate([np.zeros(F), np.full(F, 0.5)])))
        w.update(_map_init(rng, "Q", features, dp, 2 * F, hidden, np.concatenate([np.zeros(F), np.ones(F)])))
    head = rng.normal(scale=1.0 / math.sqrt(F), size=F)
    if _head(arch) == "CON":
        w["w"] = np.abs(head)
        w["b"] = np.zeros(1)
    else:
        w["w"] = head
    return ProxyParams(arch, F, topo.scope, features, w, scalers or _identity_scalers(topo), hidden)


# ---------------------------------------------------------------- feature maps


@functools.lru_cache(maxsize=None)
def _triu(d: int) -> tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(d)


def _quad(z: np.ndarray) -> np.ndarray:
    iu, ju = _triu(z.shape[-1])
    return np.concatenate([z, z[..., iu] * z[..., ju]], axis=-1)


def _map_forward(P: ProxyParams, prefix: str, block: str, inp: np.ndarray):
    z = (inp - P.scalers[f"{block}.mu"]) / P.scalers[f"{block}.sd"]
    W = P.weights
    pre = None
    if P.features == "linear":
        psi = z
    elif P.features == "quadratic":
        psi = _quad(z)
    else:
        pre = z @ W[f"{prefix}.H"] + W[f"{prefix}.h"]
        psi = relu(pre)
    out = psi @ W[f"{prefix}.A"] + W[f"{prefix}.c"]
    return out, (z, pre, psi)


def _map_backward(P: ProxyParams, prefix: str, cache, dout: np.ndarray) -> dict:
    z, pre, psi = cache
    d_out = dout.shape[-1]
    flat_psi = psi.reshape(-1, psi.shape[-1])
    flat_d = dout.reshape(-1, d_out)
    grads = {f"{prefix}.A": flat_psi.T @ flat_d, f"{prefix}.c": flat_d.sum(axis=0)}
    if P.features == "mlp":
        dpsi = flat_d @ P.weights[f"{prefix}.A"].T
        dpre = dpsi * (pre.reshape(-1, pre.shape[-1]) > 0)
        grads[f"{prefix}.H"] = z.reshape(-1, z.shape[-1]).T @ dpre
        grads[f"{prefix}.h"] = dpre.sum(axis=0)
    return grads


# ---------------------------------------------------------------- latent representation


@dataclass(frozen=True, eq=False)
class LatentRep:
    """Assignment-independent latent arrays; leading batch axis optional.

    Second order uses W, U, Q; higher order uses U, U2, Q, Q2 with Q shaped (n, D, F).
    """

    pair_idx: np.ndarray
    nbr_idx: np.ndarray | None = None
    nbr_mask: np.ndarray | None = None
    W: np.ndarray | None = None
    U: np.ndarray | None = None
    Q: np.ndarray | None = None
    U2: np.ndarray | None = None
    Q2: np.ndarray | None = None


def _stack_topologies(topos: Sequence[Topology]):
    return (
        np.stack([t.graph_feat for t in topos]),
        np.stack([t.unit_feat for t in topos]),
        np.stack([t.pair_feat for t in topos]),
        np.stack([t.dir_feat for t in topos]),
    )


def _encode_batch(P: ProxyParams, topo: Topology, feats):
    gfeat, ufeat, pfeat, dfeat = feats
    F = P.width
    caches = {}
    if P.latent == "second":
        W, caches["W"] = _map_forward(P, "W", "graph", gfeat)
        U, caches["U"] = _map_forward(P, "U", "unit", ufeat)
        Q, caches["Q"] = _map_forward(P, "Q", "pair", pfeat)
        rep = LatentRep(topo.pair_idx, topo.nbr_idx, topo.nbr_mask, W=W, U=U, Q=Q)
    else:
        UU, caches["U"] = _map_forward(P, "U", "unit", ufeat)
        QQ, caches["Q"] = _map_forward(P, "Q", "pair", dfeat)
        rep = LatentRep(
            topo.pair_idx, topo.nbr_idx, topo.nbr_mask,
            U=UU[..., :F], U2=UU[..., F:], Q=QQ[..., :F], Q2=QQ[..., F:],
        )
    return rep, caches


def encode(P: ProxyParams, inst_or_topo) -> LatentRep:
    topo = inst_or_topo if isinstance(inst_or_topo, Topology) else build_topology(inst_or_topo, P.scope)
    rep, _ = _encode_batch(P, topo, _stack_topologies([topo]))
    return rep


# ---------------------------------------------------------------- latent maps


def _pair_products(pair_idx: np.ndarray, x: np.ndarray) -> np.ndarray:
    if len(pair_idx) == 0:
        return np.zeros(x.shape[:-1] + (0,))
    return x[..., pair_idx[:, 0]] * x[..., pair_idx[:, 1]]


def phi_second_order(rep: LatentRep, x) -> np.ndarray:
    """W + sum_v U_v x_v + sum_pairs Q x_u x_v; batch axes of rep and x broadcast."""
    x = np.asarray(x, dtype=float)
    W, U, Q = rep.W, rep.U, rep.Q
    if U.shape[-2] != x.shape[-1]:
        raise ValueError(f"latent has {U.shape[-2]} units, assignment has {x.shape[-1]}")
    xx = _pair_products(rep.pair_idx, x)
    return W + (U * x[..., :, None]).sum(axis=-2) + (Q * xx[..., :, None]).sum(axis=-2)


def _neighbor_values(rep: LatentRep, x: np.ndarray) -> np.ndarray:
    xp = np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
    return xp[..., rep.nbr_idx]


def _exclusive_prod(a: np.ndarray, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, -1)
    ones = np.ones(a.shape[:-1] + (1,))
    left = np.cumprod(np.concatenate([ones, a[..., :-1]], axis=-1), axis=-1)
    right = np.cumprod(np.concatenate([ones, a[..., :0:-1]], axis=-1), axis=-1)[..., ::-1]
    return np.moveaxis(left * right, -1, axis)


def _higher_parts(rep: LatentRep, x: np.ndarray):
    a = rep.U * x[..., :, None] + rep.U2
    xn = _neighbor_values(rep, x)
    b = rep.Q * xn[..., None] + rep.Q2
    b = np.where(rep.nbr_mask[..., None], b, 1.0)
    return a, xn, b


def phi_higher_order(rep: LatentRep, x) -> np.ndarray:
    """sum_v (U_v x_v + U'_v) prod over neighbours (Q x_u + Q'); computed by direct products."""
    x = np.asarray(x, dtype=float)
    if rep.U.shape[-2] != x.shape[-1]:
        raise ValueError(f"latent has {rep.U.shape[-2]} units, assignment has {x.shape[-1]}")
    a, _, b = _higher_parts(rep, x)
    return (a * b.prod(axis=-2)).sum(axis=-2)


def _phi(P: ProxyParams, rep: LatentRep, x) -> np.ndarray:
    return phi_second_order(rep, x) if P.latent == "second" else phi_higher_order(rep, x)


def aff_eval(w: np.ndarray, phi: np.ndarray) -> np.ndarray:
    return (phi * w).sum(axis=-1)


def con_eval(w: np.ndarray, b: float, phi: np.ndarray) -> np.ndarray:
    if np.any(np.asarray(w) < 0):
        raise ValueError("CON head weights must be nonnegative")
    return -(relu(phi) * w).sum(axis=-1) + b


def _head_eval(P: ProxyParams, phi: np.ndarray) -> np.ndarray:
    w = P.weights["w"]
    # row-wise sums keep batched and single evaluations bit-identical
    r = (phi * w).sum(axis=-1) if P.head == "AFF" else -(relu(phi) * w).sum(axis=-1) + P.weights["b"][0]
    return P.scalers["y.mu"][0] + P.scalers["y.sd"][0] * r


def proxy_eval(P: ProxyParams, inst: GraphInstance, x) -> float:
    rep = encode(P, inst)
    return float(_head_eval(P, _phi(P, rep, np.asarray(x, dtype=float)[None, :]))[0])


# ---------------------------------------------------------------- forward / backward


def _forward(P: ProxyParams, topo: Topology, feats, X: np.ndarray):
    rep, map_caches = _encode_batch(P, topo, feats)
    if P.latent == "second":
        phi = phi_second_order(rep, X)
        parts = None
    else:
        parts = _higher_parts(rep, X)
        a, _, b = parts
        phi = (a * b.prod(axis=-2)).sum(axis=-2)
    y = _head_eval(P, phi)
    return y, (rep, map_caches, phi, parts, X)


def _head_backward(P: ProxyParams, phi: np.ndarray, dy: np.ndarray):
    """d/dphi of sum(dy * y), plus the head-weight gradients."""
    w = P.weights["w"]
    dr = dy * P.scalers["y.sd"][0]
    grads: dict = {}
    if P.head == "AFF":
        grads["w"] = phi.T @ dr
        dphi = dr[:, None] * w[None, :]
    else:
        active = (phi > 0).astype(float)  # subgradient 0 at the kink
        grads["w"] = -(relu(phi).T @ dr)
        grads["b"] = np.array([dr.sum()])
        dphi = -dr[:, None] * active * w[None, :]
    return dphi, grads


def _latent_backward(P: ProxyParams, rep: LatentRep, X: np.ndarray, parts, dphi: np.ndarray):
    """Gradients w.r.t. the assignment batch and the latent arrays, given d/dphi."""
    B, n = X.shape
    dX = np.zeros((B, n))
    if P.latent == "second":
        pi = rep.pair_idx
        xx = _pair_products(pi, X)
        dlat = {
            "W": dphi,
            "U": dphi[:, None, :] * X[:, :, None],
            "Q": dphi[:, None, :] * xx[:, :, None],
        }
        dX += (rep.U * dphi[:, None, :]).sum(axis=-1)
        if len(pi):
            qd = (rep.Q * dphi[:, None, :]).sum(axis=-1)  # (B, m)
            np.add.at(dX.T, pi[:, 0], (qd * X[:, pi[:, 1]]).T)
            np.add.at(dX.T, pi[:, 1], (qd * X[:, pi[:, 0]]).T)
        return dX, dlat
    a, xn, b = parts
    prod = b.prod(axis=-2)  # (B, n, F)
    da = dphi[:, None, :] * prod
    dprod = dphi[:, None, :] * a
    db = dprod[:, :, None, :] * _exclusive_prod(b, axis=-2)
    db = np.where(rep.nbr_mask[None, :, :, None], db, 0.0)
    dlat = {
        "U": np.concatenate([da * X[:, :, None], da], axis=-1),
        "Q": np.concatenate([db * xn[..., None], db], axis=-1),
    }
    dX += (da * rep.U).sum(axis=-1)
    dxn = (db * rep.Q).sum(axis=-1)  # (B, n, D)
    acc = np.zeros((B, n + 1))
    np.add.at(acc.T, rep.nbr_idx, np.moveaxis(dxn, 0, -1))
    dX += acc[:, :n]
    return dX, dlat


def _backward(P: ProxyParams, topo: Topology, cache, dy: np.ndarray):
    """Gradients of sum(dy * y) w.r.t. the assignment batch and every weight."""
    rep, map_caches, phi, parts, X = cache
    dphi, grads = _head_backward(P, phi, dy)
    dX, dlat = _latent_backward(P, rep, X, parts, dphi)
    for name, d in dlat.items():
        grads.update(_map_backward(P, name, map_caches[name], d))
    return dX, grads


def _assignment_gradient(P: ProxyParams, rep: LatentRep, X: np.ndarray) -> np.ndarray:
    """d value / d x with the latent arrays held fixed (they do not depend on x)."""
    if P.latent == "second":
        phi, parts = phi_second_order(rep, X), None
    else:
        parts = _higher_parts(rep, X)
        a, _, b = parts
        phi = (a * b.prod(axis=-2)).sum(axis=-2)
    dphi, _ = _head_backward(P, phi, np.ones(len(X)))
    return _latent_backward(P, rep, X, parts, dphi)[0]


def proxy_gradient(P: ProxyParams, inst_or_topo, x) -> tuple[np.ndarray, dict]:
    """(d value / d x, d value / d weights) at one point, from one forward/backward pass."""
    topo = inst_or_topo if isinstance(inst_or_topo, Topology) else build_topology(inst_or_topo, P.scope)
    X = np.asarray(x, dtype=float).reshape(1, -1)
    _, cache = _forward(P, topo, _stack_topologies([topo]), X)
    dX, grads = _backward(P, topo, cache, np.ones(1))
    return dX[0], grads


def proxy_function(P: ProxyParams, inst: GraphInstance, name: str = "proxy") -> RelaxedFunction:
    """Bind a proxy to one instance; the latent arrays are computed once."""
    topo = build_topology(inst, P.scope)
    rep = encode(P, topo)
    one = lambda x: float(_head_eval(P, _phi(P, rep, x[None, :]))[0])  # noqa: E731
    batch = lambda xs: _head_eval(P, _phi(P, rep, xs))  # noqa: E731

    def grad(x):
        return _assignment_gradient(P, rep, x.reshape(1, -1))[0]

    structure = Structure.AFFINE if P.head == "AFF" else Structure.CONCAVE
    return RelaxedFunction(one, topo.n, structure, grad, batch, name=f"{name}:{P.arch}")


# ---------------------------------------------------------------- training


@dataclass
class _Group:
    topo: Topology
    feats: tuple
    X: np.ndarray
    y: np.ndarray


def _group_dataset(dataset, scope: str) -> list[_Group]:
    groups: dict = {}
    order = []
    for inst, sample in dataset:
        topo = build_topology(inst, scope)
        if len(sample.assignment) != topo.n:
            raise ValueError(
                f"sample has {len(sample.assignment)} variables but {scope}-scope instance has {topo.n}"
            )
        key = topo.key
        if key not in groups:
            groups[key] = ([], [], [])
            order.append(key)
        groups[key][0].append(topo)
        groups[key][1].append(sample.assignment)
        groups[key][2].append(sample.cost)
    out = []
    for key in order:
        topos, xs, ys = groups[key]
        out.append(_Group(topos[0], _stack_topologies(topos), np.asarray(xs, float), np.asarray(ys, float)))
    return out


def _fit_scalers(groups: list[_Group], normalize: bool, template: dict, latent: str) -> dict:
    if not normalize:
        return template
    s = {}
    blocks = {"graph": 0, "unit": 1, "pair": 2 if latent == "second" else 3}
    for name, k in blocks.items():
        arrs = [g.feats[k].reshape(-1, g.feats[k].shape[-1]) for g in groups]
        allv = np.concatenate(arrs, axis=0)
        mu = allv.mean(axis=0) if len(allv) else template[f"{name}.mu"]
        sd = allv.std(axis=0) if len(allv) else template[f"{name}.sd"]
        s[f"{name}.mu"] = mu
        s[f"{name}.sd"] = np.where(sd > 1e-12, sd, 1.0)
    ys = np.concatenate([g.y for g in groups])
    s["y.mu"] = np.array([ys.mean()])
    sd = ys.std()
    s["y.sd"] = np.array([sd if sd > 1e-12 else 1.0])
    return s


def _loss_and_dy(pred: np.ndarray, target: np.ndarray, sd: float, config: TrainConfig):
    """Loss in normalized target units and its derivative w.r.t. pred (original units)."""
    r = (pred - target) / sd
    if config.loss == "squared":
        loss = float(np.mean(r * r))
        dr = 2.0 * r / len(r)
    else:
        d = config.huber_delta
        a = np.abs(r)
        loss = float(np.mean(np.where(a <= d, 0.5 * r * r, d * (a - 0.5 * d))))
        dr = np.where(a <= d, r, d * np.sign(r)) / len(r)
    return loss, dr / sd


def _mse(P: ProxyParams, groups: list[_Group]) -> float:
    se, count = 0.0, 0
    for g in groups:
        y, _ = _forward(P, g.topo, g.feats, g.X)
        se += float(((y - g.y) ** 2).sum())
        count += len(g.y)
    return se / max(count, 1)


def _subset(feats, idx):
    return tuple(f[idx] for f in feats)


def train_proxy(
    dataset: Sequence[tuple[GraphInstance, LabeledSample]],
    config: TrainConfig,
    architecture: str,
    scope: str = "node",
    init: ProxyParams | None = None,
) -> tuple[ProxyParams, list[float]]:
    """Fit a proxy to labeled samples; returns parameters and the per-epoch training MSE.

    CON heads are projected onto w >= 0 after every update.
    """
    if not dataset:
        raise ValueError("cannot train on an empty dataset")
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")
    groups = _group_dataset(dataset, scope)
    rng = np.random.default_rng(config.seed)
    if init is None:
        P = init_params(architecture, groups[0].topo, config.width, config.features, config.hidden, rng)
        P = ProxyParams(P.arch, P.width, P.scope, P.features, P.weights,
                        _fit_scalers(groups, config.normalize, P.scalers, P.latent), P.hidden)
    else:
        if init.arch != architecture or init.scope != scope:
            raise ValueError("resume checkpoint has a different architecture or scope")
        P = init
    weights = {k: v.astype(float).copy() for k, v in P.weights.items()}
    m = {k: np.zeros_like(v) for k, v in weights.items()}
    v2 = {k: np.zeros_like(v) for k, v in weights.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    sizes = np.array([len(g.y) for g in groups], dtype=float)
    total = int(sizes.sum())
    steps_per_epoch = max(1, math.ceil(total / config.batch))
    curve: list[float] = []
    sd = float(P.scalers["y.sd"][0])
    project = P.head == "CON" and config.projection
    for step in range(1, config.steps + 1):
        gi = int(rng.choice(len(groups), p=sizes / sizes.sum())) if len(groups) > 1 else 0
        g = groups[gi]
        k = min(config.batch, len(g.y))
        idx = rng.choice(len(g.y), size=k, replace=False) if k < len(g.y) else np.arange(len(g.y))
        P = P.replace_weights(weights)
        pred, cache = _forward(P, g.topo, _subset(g.feats, idx), g.X[idx])
        loss, dy = _loss_and_dy(pred, g.y[idx], sd, config)
        if not math.isfinite(loss):
            raise TrainingDivergence(step, loss)
        _, grads = _backward(P, g.topo, cache, dy)
        for name, grad in grads.items():
            if config.optimizer == "adam":
                m[name] = b1 * m[name] + (1 - b1) * grad
                v2[name] = b2 * v2[name] + (1 - b2) * grad * grad
                mh = m[name] / (1 - b1**step)
                vh = v2[name] / (1 - b2**step)
                weights[name] = weights[name] - config.step_size * mh / (np.sqrt(vh) + eps)
            else:
                weights[name] = weights[name] - config.step_size * grad
        if project:
            weights["w"] = np.maximum(weights["w"], 0.0)
        if step % steps_per_epoch == 0 or step == config.steps:
            mse = _mse(P.replace_weights(weights), groups)
            if not math.isfinite(mse):
                raise TrainingDivergence(step, mse)
            curve.append(mse)
    return P.replace_weights(weights), curve


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(P: ProxyParams, path: str | Path, config: TrainConfig | None = None,
                    curve: Sequence[float] | None = None) -> Path:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": P.arch,
        "width": P.width,
        "scope": P.scope,
        "features": P.features,
        "hidden": P.hidden,
        "weights": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in P.weights.items()},
        "scalers": {k: v.tolist() for k, v in P.scalers.items()},
        "config": None if config is None else asdict(config),
        "config_hash": None if config is None else config.digest(),
        "loss_curve": list(curve or []),
    }
    path = Path(path)
    path.write_text(json.dumps(payload))
    return path


def load_checkpoint(path: str | Path) -> tuple[ProxyParams, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a proxy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")
    weights = {k: np.asarray(v["data"], dtype=float).reshape(v["shape"]) for k, v in payload["weights"].items()}
    scalers = {k: np.asarray(v, dtype=float) for k, v in payload["scalers"].items()}
    P = ProxyParams(payload["architecture"], payload["width"], payload["scope"], payload["features"],
                    weights, scalers, payload.get("hidden", 16))
    return P, payload
