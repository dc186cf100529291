"""Finite-difference gradient cases shared by the unit suite and the acceptance run.

Each case takes a seed and returns ``(analytic, numeric)`` gradient vectors.
"""

import numpy as np

from acnmp.autodiff import MLP, LayerSpec, gaussian_nll_grad, sigmoid, softplus
from acnmp.cnmp import ObservationPoint, build_model, cases_to_batch, nll_and_grad
from acnmp.rl import pg_gradient, sample_rollout
from acnmp.transfer import PairedModels, joint_loss_and_grad

STEP = 1e-6
SMOOTH_STEP = 1e-3


def central_diff(f, x, step=STEP):
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + step
        hi = f(x)
        x.flat[i] = old - step
        lo = f(x)
        x.flat[i] = old
        g.flat[i] = (hi - lo) / (2 * step)
    return g


def five_point_diff(f, x, step=SMOOTH_STEP):
    """Fourth-order central differences; only valid for smooth ``f``."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        v = []
        for k in (2, 1, -1, -2):
            x.flat[i] = old + k * step
            v.append(f(x))
        x.flat[i] = old
        g.flat[i] = (-v[0] + 8 * v[1] - 8 * v[2] + v[3]) / (12 * step)
    return g


def numeric(f, x, hidden):
    # relu kinks rule out wide stencils; smooth nets allow them and cut round-off
    return five_point_diff(f, x) if hidden == "softplus" else central_diff(f, x)


def rel_err(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def worst_coordinate_err(a, b, floor=1e-8) -> float:
    """Largest per-coordinate relative error over coordinates with ``|a| > floor``."""
    a, b = np.ravel(a), np.ravel(b)
    m = np.abs(a) > floor
    if not m.any():
        return 0.0
    return float(np.max(np.abs(a - b)[m] / np.maximum(np.abs(a), np.abs(b))[m]))


def mlp_case(seed):
    rng = np.random.default_rng(seed)
    net = MLP([LayerSpec(3, 5, "relu"), LayerSpec(5, 4, "softplus"), LayerSpec(4, 2, "identity")])
    p = net.init_params(rng)
    x = rng.normal(size=(4, 3))
    w = rng.normal(size=(4, 2))
    _, rec = net.forward(p, x, record=True)
    g, _ = net.backward(p, rec, w)
    return g, central_diff(lambda q: float(np.sum(net.forward(q, x) * w)), p)


def mlp_input_case(seed):
    rng = np.random.default_rng(seed)
    net = MLP([LayerSpec(3, 6, "relu"), LayerSpec(6, 2, "softplus")])
    p = net.init_params(rng)
    x = rng.normal(size=(2, 3))
    w = rng.normal(size=(2, 2))
    _, rec = net.forward(p, x, record=True)
    _, gx = net.backward(p, rec, w)
    return gx, central_diff(lambda z: float(np.sum(net.forward(p, z) * w)), x)


def softplus_case(seed):
    x = np.random.default_rng(seed).normal(scale=3.0, size=6)
    return sigmoid(x), central_diff(lambda z: float(np.sum(softplus(z))), x)


def nll_case(seed):
    rng = np.random.default_rng(seed)
    mu, raw, y = rng.normal(size=(3, 5))
    scale = rng.uniform(0.3, 2.0)
    _, d_mu, d_raw = gaussian_nll_grad(mu, raw, y, scale=scale)

    def total(v):
        return float(gaussian_nll_grad(v[:5], v[5:], y, scale=scale)[0].sum())

    return np.concatenate([d_mu, d_raw]), central_diff(total, np.concatenate([mu, raw]))


def _tiny_model(seed, D=2, G=1, hidden="relu"):
    return build_model((D, G), (5, 4, 3), (5, 4), seed=seed, hidden=hidden)


def _cases(rng, D, G, n_cases=3):
    cases = []
    for _ in range(n_cases):
        g = rng.normal(size=G)
        obs = [ObservationPoint(rng.random(), g, rng.normal(size=D)) for _ in range(int(rng.integers(1, 4)))]
        cases.append((obs, ObservationPoint(rng.random(), g, rng.normal(size=D))))
    return cases


def cnmp_case(seed, hidden="relu"):
    rng = np.random.default_rng(seed)
    model = _tiny_model(seed, hidden=hidden)
    batch = cases_to_batch(model, _cases(rng, 2, 1))
    _, grad, _ = nll_and_grad(model, batch)
    return grad, numeric(lambda p: nll_and_grad(model, batch, params=p)[0], model.params, hidden)


def pg_case(seed, hidden="relu"):
    rng = np.random.default_rng(seed)
    model = _tiny_model(seed, hidden=hidden)
    cond = [ObservationPoint(0.0, [0.3], [0.1, -0.2])]
    times = np.linspace(0, 1, 4)
    eps = []
    for k in range(4):
        ep = sample_rollout(model, cond, [0.3], times, 0.7, np.random.default_rng([seed, k]))
        ep.reward = float(rng.normal())
        eps.append(ep)
    _, grad, _ = pg_gradient(model, eps)
    r = np.array([ep.reward for ep in eps])
    adv = (r - r.mean()) / (r.std() + 1e-8)
    q = model.query_rows(times, [0.3])

    def loss(p):
        # surrogate recomputed from the decoder output: mean_e adv_e * sum_t -log N(a | mu, (s*sigma)^2)
        rep = model.encoder.forward(p[: model.n_encoder], model.obs_row(cond[0]))
        out = model.decoder.forward(p[model.n_encoder:], np.hstack([np.tile(rep, (len(q), 1)), q]))
        mu, sig = out[:, :2], 0.7 * (softplus(out[:, 2:]) + 1e-4)
        total = 0.0
        for ep, a in zip(eps, adv):
            z = (ep.actions - mu) / sig
            total += a * np.sum(np.log(sig) + 0.5 * np.log(2 * np.pi) + 0.5 * z * z)
        return total / len(eps)

    return grad, numeric(loss, model.params, hidden)


def joint_case(seed, hidden="relu", weight=3.0):
    rng = np.random.default_rng(seed)
    pair = PairedModels(build_model((3, 0), (4, 3), (4,), seed=seed, hidden=hidden),
                        build_model((4, 0), (4, 3), (4,), seed=seed + 1, hidden=hidden))
    b1 = cases_to_batch(pair.source, _cases(rng, 3, 0, 2))
    b2 = cases_to_batch(pair.target, _cases(rng, 4, 0, 2))
    src_sets, tgt_sets = [], []
    for _ in range(2):
        ts = rng.random(int(rng.integers(1, 4)))
        src_sets.append([ObservationPoint(t, [], rng.normal(size=3)) for t in ts])
        tgt_sets.append([ObservationPoint(t, [], rng.normal(size=4)) for t in ts])
    *_, g1, g2 = joint_loss_and_grad(pair, b1, b2, src_sets, tgt_sets, weight)
    n1 = pair.source.n_params

    def nll(model, batch, p):
        out = model.forward_batch(batch, params=p)
        sig = softplus(out.sigma_raw) + 1e-4
        z = (batch.targets - out.mu) / sig
        return np.sum(np.log(sig) + 0.5 * np.log(2 * np.pi) + 0.5 * z * z) / len(batch.targets)

    src_rows = [np.stack([pair.source.obs_row(o) for o in obs]) for obs in src_sets]
    tgt_rows = [np.stack([pair.target.obs_row(o) for o in obs]) for obs in tgt_sets]

    def rep(model, rows, p):
        return np.array([model.encoder.forward(p[: model.n_encoder], x).mean(axis=0) for x in rows])

    def total(v):
        p1, p2 = v[:n1], v[n1:]
        la = np.mean((rep(pair.source, src_rows, p1) - rep(pair.target, tgt_rows, p2)) ** 2)
        return nll(pair.source, b1, p1) + nll(pair.target, b2, p2) + weight * la

    v = np.concatenate([pair.source.params, pair.target.params])
    return np.concatenate([g1, g2]), numeric(total, v, hidden)


def smooth(case):
    return lambda seed: case(seed, hidden="softplus")


CASES = {
    "mlp": mlp_case,
    "mlp_input": mlp_input_case,
    "softplus": softplus_case,
    "gaussian_nll": nll_case,
    "cnmp_nll": cnmp_case,
    "pg_surrogate": pg_case,
    "joint_align": joint_case,
}

# composite losses on smooth nets, where a per-coordinate check is meaningful
COORDINATE_CASES = {
    "mlp": mlp_case,
    "mlp_input": mlp_input_case,
    "softplus": softplus_case,
    "gaussian_nll": nll_case,
    "cnmp_nll_smooth": smooth(cnmp_case),
    "pg_surrogate_smooth": smooth(pg_case),
    "joint_align_smooth": smooth(joint_case),
}
