"""Shared helpers for the test suite: finite differences and tiny models."""

import numpy as np

from zcnas.nn.layers import Model, ParamSet
from zcnas.nn.tensor import Tensor


def rel_err(approx: np.ndarray, exact: np.ndarray) -> float:
    """Worst-case elementwise relative error with an absolute floor.

    The floor keeps entries that are legitimately ~0 from blowing up the
    ratio; 1e-8 sits far below any gradient magnitude these tests produce.
    """
    approx = np.asarray(approx, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    denom = np.maximum(np.abs(exact), 1e-8)
    return float(np.max(np.abs(approx - exact) / denom))


def fd_gradients(loss_of_params, params: dict[str, np.ndarray],
                 eps: float = 1e-6) -> dict[str, np.ndarray]:
    """Central-difference gradient of a scalar function of named arrays.

    loss_of_params takes the dict and returns a float. Arrays are copied,
    perturbed one entry at a time, and restored, so the caller's dict is
    left untouched.
    """
    work = {k: v.copy() for k, v in params.items()}
    grads = {}
    for name, arr in work.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            up = loss_of_params(work)
            flat[i] = keep - eps
            down = loss_of_params(work)
            flat[i] = keep
            gflat[i] = (up - down) / (2.0 * eps)
        grads[name] = g
    return grads


def model_fd_check(model: Model, loss_fn, eps: float = 1e-6) -> float:
    """Compare model.backward gradients against central differences.

    loss_fn(model) must build the graph and return a scalar Tensor. Returns
    the worst relative error across all parameters.
    """
    model.zero_grad()
    loss = loss_fn(model)
    loss.backward()
    analytic = {p.name: p.grad.copy() for p in model.params}

    def value(state):
        for p in model.params:
            p.data = state[p.name]
        return float(loss_fn(model).data)

    state = {p.name: p.data.copy() for p in model.params}
    numeric = fd_gradients(value, state, eps=eps)
    for p in model.params:  # restore after fd_gradients mutated live arrays
        p.data = state[p.name]
    return max(rel_err(analytic[n], numeric[n]) for n in analytic)


def model_fd_check_norm(model: Model, loss_fn, eps: float = 1e-6) -> float:
    """Like model_fd_check but scored as a per-tensor norm ratio.

    ||g_analytic - g_fd|| / ||g_fd|| per parameter tensor, worst case
    returned. Elementwise ratios explode on entries whose true gradient
    sits below the finite-difference noise floor (~1e-11 for unit-scale
    losses), so norm comparison is the right yardstick for whole-model
    sweeps with random weights.
    """
    model.zero_grad()
    loss_fn(model).backward()
    analytic = {p.name: p.grad.copy() for p in model.params}

    def value(state):
        for p in model.params:
            p.data = state[p.name]
        return float(loss_fn(model).data)

    state = {p.name: p.data.copy() for p in model.params}
    numeric = fd_gradients(value, state, eps=eps)
    for p in model.params:
        p.data = state[p.name]
    worst = 0.0
    for name, exact in numeric.items():
        denom = max(np.linalg.norm(exact), 1e-12)
        worst = max(worst, float(np.linalg.norm(analytic[name] - exact) / denom))
    return worst


# ---------------------------------------------------------------------------
# brute-force references for the ranking metrics
# ---------------------------------------------------------------------------

def brute_order(hashes, values):
    """Indices by value descending, hash ascending on ties."""
    return sorted(range(len(hashes)), key=lambda i: (-values[i], hashes[i]))


def _brute_trained(val, diverged):
    return [(-np.inf if d else v) for v, d in zip(val, diverged)]


def brute_best_test(hashes, val, test, diverged):
    trained = _brute_trained(val, diverged)
    return test[brute_order(hashes, trained)[0]]


def brute_delta_k(hashes, proxy, val, test, diverged, k):
    trained = _brute_trained(val, diverged)
    top = brute_order(hashes, proxy)[:k]
    cand = min(top, key=lambda i: (-trained[i], hashes[i]))
    return brute_best_test(hashes, val, test, diverged) - test[cand]


def brute_delta_percent(hashes, proxy, val, test, diverged, pct):
    k = int(np.ceil(pct * len(hashes) / 100.0))
    return brute_delta_k(hashes, proxy, val, test, diverged, k)


def brute_talent_rate(hashes, proxy, val, diverged, pct):
    m = int(np.ceil(pct * len(hashes) / 100.0))
    trained = _brute_trained(val, diverged)
    top_pred = set(brute_order(hashes, proxy)[:m])
    top_train = set(brute_order(hashes, trained)[:m])
    return 100.0 * len(top_pred & top_train) / m


def brute_ranks(values):
    """Competition-free average ranks, rank 1 = largest value."""
    values = list(values)
    n = len(values)
    ranks = []
    for i in range(n):
        greater = sum(1 for j in range(n) if values[j] > values[i])
        equal = sum(1 for j in range(n) if j != i and values[j] == values[i])
        ranks.append(1.0 + greater + equal / 2.0)
    return np.array(ranks)


def brute_spearman(x, y):
    rx, ry = brute_ranks(x), brute_ranks(y)
    if rx.std() == 0.0 or ry.std() == 0.0:
        return float("nan")
    return float(np.corrcoef(rx, ry)[0, 1])


def brute_random_search(hashes, val, test, diverged, k, trials, rng_seed):
    """Mirror of the Monte-Carlo baseline with an independently written
    candidate-selection step (the subset draws share the RNG stream)."""
    rng = np.random.default_rng(rng_seed)
    trained = _brute_trained(val, diverged)
    best = brute_best_test(hashes, val, test, diverged)
    deltas = []
    for _ in range(trials):
        rows = rng.choice(len(hashes), size=k, replace=False)
        ordered = sorted(rows, key=lambda i: (-trained[i], hashes[i]))
        deltas.append(best - test[ordered[0]])
    deltas = np.array(deltas)
    return deltas.mean(), deltas.std()


class StubModel:
    """Bare-bones stand-in exposing the model surface the proxies touch.

    Holds an explicit ParamSet and an optional forward; lets closed-form
    examples drive the real proxy functions without a full architecture.
    """

    def __init__(self, params: ParamSet, forward=None, kind: str = "cnn"):
        self.params = params
        self.kind = kind
        self.deterministic = True
        self.activation_taps: list[Tensor] = []
        self._forward = forward

    def forward(self, batch: Tensor) -> Tensor:
        if self._forward is None:
            raise NotImplementedError("stub has no forward pass")
        return self._forward(self, batch)

    def zero_grad(self) -> None:
        self.params.zero_grad()
