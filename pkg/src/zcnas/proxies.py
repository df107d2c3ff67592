"""Zero-cost proxies: score an untrained model from one batch (or none).

All scores share a higher-is-better orientation. A proxy that cannot
produce a finite value reports ``degenerate=True`` with a ``-inf``
sentinel so downstream rankings place it last. Every proxy is a pure
function of (architecture, init seed, batch); callers get determinism by
instantiating a fresh model per computation, which ``compute_proxies``
does for them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import ArchSpec, instantiate
from .data import WindowedDataset
from .nn import tensor as T
from .nn.layers import Model
from .ranking import normalized_ranks
from .train import macro_f1, predict

COMPONENT_PROXIES = ("grad_norm", "snip", "grasp", "fisher", "synflow",
                     "synflow_bn", "plain", "jacob_cov", "initial_val_f1")
ALL_PROXIES = COMPONENT_PROXIES + ("ensemble",)

JACOB_COV_K = 1e-5
DEGENERATE_VALUE = float("-inf")


@dataclass(frozen=True)
class ProxyScore:
    proxy_name: str
    value: float
    degenerate: bool = False


@dataclass
class ScoreBatch:
    """One fixed minibatch from the train split: inputs [B, 3, 100], labels [B]."""
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 3:
            raise ValueError(f"score batch inputs must be [B, C, L], got {self.inputs.shape}")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("score batch labels must align with inputs")


def make_score_batch(train_dataset: WindowedDataset, rng_seed: int,
                     batch_size: int = 256) -> ScoreBatch:
    """First batch of the shuffled train split under ``rng_seed``."""
    if train_dataset.split != "train":
        raise ValueError("score batch must come from the train split")
    n = len(train_dataset)
    if n == 0:
        raise ValueError("train split is empty")
    rng = np.random.default_rng(rng_seed)
    idx = rng.permutation(n)[:min(batch_size, n)]
    return ScoreBatch(train_dataset.windows[idx], train_dataset.labels[idx])


def _finalize(name: str, value: float) -> ProxyScore:
    value = float(value)
    if not np.isfinite(value):
        return ProxyScore(name, DEGENERATE_VALUE, degenerate=True)
    return ProxyScore(name, value)


def _loss_backward(model: Model, batch: ScoreBatch, loss_fn=None) -> None:
    """One gradient pass. The default objective is cross-entropy on the
    batch; tests exercise closed-form objectives through ``loss_fn``,
    a callable (model, batch) -> scalar Tensor."""
    model.zero_grad()
    if loss_fn is not None:
        loss = loss_fn(model, batch)
    else:
        logits = model.forward(T.Tensor(batch.inputs))
        loss = T.cross_entropy(logits, batch.labels)
    loss.backward()


def grad_norm(model: Model, batch: ScoreBatch, loss_fn=None) -> ProxyScore:
    """Sum over parameters of the Frobenius norm of each gradient."""
    _loss_backward(model, batch, loss_fn)
    total = sum(float(np.linalg.norm(p.grad)) for p in model.params)
    return _finalize("grad_norm", total)


def snip(model: Model, batch: ScoreBatch, loss_fn=None) -> ProxyScore:
    """Sum of |theta * grad| over all parameters."""
    _loss_backward(model, batch, loss_fn)
    total = sum(float(np.abs(p.data * p.grad).sum()) for p in model.params)
    return _finalize("snip", total)


def plain(model: Model, batch: ScoreBatch, loss_fn=None) -> ProxyScore:
    """Signed sum of theta * grad over all parameters."""
    _loss_backward(model, batch, loss_fn)
    total = sum(float((p.data * p.grad).sum()) for p in model.params)
    return _finalize("plain", total)


def fd_hvp(model: Model, batch: ScoreBatch, loss_fn=None,
           ) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Hessian-gradient product by forward difference of gradients.

    Returns (Hg, g) keyed by parameter name. The step is
    eps = 1e-4 * (1 + max|theta|) / max(max|g|, 1e-12), i.e. the
    perturbation theta + eps*g stays small relative to parameter scale.
    Parameters are restored on exit.
    """
    _loss_backward(model, batch, loss_fn)
    theta = {p.name: p.data.copy() for p in model.params}
    g = {p.name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
         for p in model.params}
    theta_max = max((float(np.abs(v).max()) for v in theta.values() if v.size), default=0.0)
    g_max = max((float(np.abs(v).max()) for v in g.values() if v.size), default=0.0)
    eps = 1e-4 * (1.0 + theta_max) / max(g_max, 1e-12)
    for p in model.params:
        p.data = theta[p.name] + eps * g[p.name]
    _loss_backward(model, batch, loss_fn)
    hvp = {}
    for p in model.params:
        grad2 = p.grad if p.grad is not None else np.zeros_like(p.data)
        hvp[p.name] = (grad2 - g[p.name]) / eps
        p.data = theta[p.name]
    return hvp, g


def grasp(model: Model, batch: ScoreBatch, loss_fn=None) -> ProxyScore:
    """Second-order saliency: -(Hg . theta) summed over parameters."""
    hvp, _ = fd_hvp(model, batch, loss_fn)
    total = -sum(float((hvp[p.name] * p.data).sum()) for p in model.params)
    return _finalize("grasp", total)


def fisher(model: Model, batch: ScoreBatch, loss_fn=None) -> ProxyScore:
    """Per-channel squared activation saliency, summed over channels and
    blocks: for block output a, sum_c (sum_{batch,time} a_c * dL/da_c)^2."""
    _loss_backward(model, batch, loss_fn)
    total = 0.0
    for tap in model.activation_taps:
        grad = tap.grad if tap.grad is not None else np.zeros_like(tap.data)
        inner = (tap.data * grad).sum(axis=(0, 2))   # per channel
        total += float((inner * inner).sum())
    return _finalize("fisher", total)


def synflow(model: Model, input_length: int = 100) -> ProxyScore:
    """Data-free saliency: run the all-ones input through the network
    with every parameter replaced by its absolute value, backpropagate
    the sum of logits, and sum |theta * grad|. Parameters are restored."""
    saved = model.params.state()
    try:
        for p in model.params:
            p.data = np.abs(p.data)
        model.zero_grad()
        ones = T.Tensor(np.ones((1, model.input_channels, input_length)))
        logits = model.forward(ones)
        T.sum_all(logits).backward()
        total = sum(float(np.abs(p.data * (p.grad if p.grad is not None
                                           else np.zeros_like(p.data))).sum())
                    for p in model.params)
    finally:
        model.params.load_state(saved)
    return _finalize("synflow", total)


def synflow_bn(model: Model, input_length: int = 100) -> ProxyScore:
    """Variant that would keep normalization parameters active; this
    architecture family has none, so it coincides with synflow exactly."""
    base = synflow(model, input_length)
    return ProxyScore("synflow_bn", base.value, base.degenerate)


def jacob_cov(model: Model, batch: ScoreBatch) -> ProxyScore:
    """Correlation structure of per-sample input Jacobians.

    One backward pass of the summed logits yields all B Jacobian rows.
    With correlation-matrix eigenvalues v_i, the score is
    -sum_i [log(v_i + k) + 1/(v_i + k)]; batches whose rows cannot be
    correlated (a zero-variance row) are degenerate.
    """
    model.zero_grad()
    x = T.Tensor(batch.inputs, requires_grad=True)
    logits = model.forward(x)
    T.sum_all(logits).backward()
    if x.grad is None:
        return ProxyScore("jacob_cov", DEGENERATE_VALUE, degenerate=True)
    J = x.grad.reshape(batch.inputs.shape[0], -1)
    if J.shape[0] == 1:
        corr = np.ones((1, 1))
    else:
        if np.any(J.std(axis=1) == 0.0):
            return ProxyScore("jacob_cov", DEGENERATE_VALUE, degenerate=True)
        corr = np.corrcoef(J)
    if not np.all(np.isfinite(corr)):
        return ProxyScore("jacob_cov", DEGENERATE_VALUE, degenerate=True)
    nu = np.clip(np.linalg.eigvalsh(corr), 0.0, None)
    score = -float(np.sum(np.log(nu + JACOB_COV_K) + 1.0 / (nu + JACOB_COV_K)))
    return _finalize("jacob_cov", score)


def initial_val_f1(model: Model, val_dataset: WindowedDataset) -> ProxyScore:
    """Macro F1 of the freshly initialized model on the full validation split."""
    if len(val_dataset) == 0:
        raise ValueError("validation split is empty")
    preds = predict(model, val_dataset.windows)
    return _finalize("initial_val_f1", macro_f1(preds, val_dataset.labels))


def ensemble(score_table: dict[str, list[ProxyScore]],
             components: tuple[str, ...] = COMPONENT_PROXIES) -> list[ProxyScore]:
    """Mean of rank-normalized component scores, per architecture.

    Each component proxy's values map to normalized ranks in [0, 1]
    (1 = best, ties averaged, degenerates last); the ensemble is the
    mean across the components (the 9 standard proxies by default).
    """
    if not components:
        raise ValueError("ensemble needs at least one component proxy")
    for name in components:
        if name not in score_table:
            raise ValueError(f"ensemble needs proxy column {name!r}")
    n = len(score_table[components[0]])
    for name in components:
        if len(score_table[name]) != n:
            raise ValueError(f"proxy column {name!r} has wrong length")
    if n == 0:
        return []
    acc = np.zeros(n)
    for name in components:
        values = np.array([DEGENERATE_VALUE if s.degenerate else s.value
                           for s in score_table[name]])
        acc += normalized_ranks(values, higher_is_better=True)
    acc /= len(components)
    return [ProxyScore("ensemble", float(v)) for v in acc]


def compute_proxies(spec: ArchSpec, init_seed: int, batch: ScoreBatch,
                    val_dataset: WindowedDataset,
                    proxies: tuple[str, ...] = COMPONENT_PROXIES,
                    ) -> dict[str, ProxyScore]:
    """Compute the requested component proxies for one architecture.

    Each proxy gets its own freshly initialized model (same seed), so
    scores never depend on computation order.
    """
    out: dict[str, ProxyScore] = {}
    for name in proxies:
        model = instantiate(spec, spec.num_classes, init_seed)
        if name == "grad_norm":
            out[name] = grad_norm(model, batch)
        elif name == "snip":
            out[name] = snip(model, batch)
        elif name == "grasp":
            out[name] = grasp(model, batch)
        elif name == "fisher":
            out[name] = fisher(model, batch)
        elif name == "synflow":
            out[name] = synflow(model)
        elif name == "synflow_bn":
            out[name] = synflow_bn(model)
        elif name == "plain":
            out[name] = plain(model, batch)
        elif name == "jacob_cov":
            out[name] = jacob_cov(model, batch)
        elif name == "initial_val_f1":
            out[name] = initial_val_f1(model, val_dataset)
        else:
            raise ValueError(f"unknown proxy {name!r}")
    return out
