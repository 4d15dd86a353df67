"""Layered recurrent spiking network with an LI readout, trained by BPTT.

Arrays inside the trace are time-major ``(T, B, H)``; the public
``forward``/``backward`` interfaces take batch-major ``(B, T, D)`` arrays.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..artifacts import load_arrays, save_arrays
from .config import ConfigError, LayerConfig, NetworkConfig


class NumericalDivergence(FloatingPointError):
    """Non-finite activation during a forward pass."""

    def __init__(self, layer, step: int):
        self.layer = layer
        self.step = step
        super().__init__(f"non-finite activation in layer {layer} at step {step}")


def flush_subnormal(x):
    """Zero entries below the smallest normal float, in place for arrays.

    Subnormal arithmetic is up to 100x slower; silent float32 layers drive
    the surrogate and the backward deltas into that range.
    """
    x = np.asarray(x)
    tiny = np.finfo(x.dtype).tiny
    if x.ndim == 0:
        return x if abs(x) >= tiny else np.zeros_like(x)
    x[np.abs(x) < tiny] = 0
    return x


def slayer_grad(v, alpha: float, c: float):
    """Surrogate derivative c*alpha / (2 exp(alpha |v|)) of the spike function."""
    return flush_subnormal((0.5 * c * alpha) * np.exp(-alpha * np.abs(v)))


def smooth_spike(v, alpha: float, c: float):
    """Continuous function whose exact derivative is ``slayer_grad``."""
    return 0.5 * c * (1.0 + np.sign(v) * (1.0 - np.exp(-alpha * np.abs(v))))


def tau_from_theta(theta, lo: float, hi: float):
    return lo + theta * (hi - lo)


def decay_and_grad(theta, lo: float, hi: float, dt: float):
    """Retention exp(-dt/tau) and its derivative w.r.t. the unit-interval parameter."""
    tau = tau_from_theta(theta, lo, hi)
    d = np.exp(-dt / tau)
    return d, d * dt / (tau * tau) * (hi - lo)


def orthogonal(n: int, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Haar-random orthogonal matrix (QR of a Gaussian with sign correction)."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q *= np.sign(np.diag(r))[None, :]
    return gain * q


def init_params(cfg: NetworkConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Initial weights and neuron parameters (float64)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(7,)))
    p: dict[str, np.ndarray] = {}
    fan_in = cfg.n_inputs
    for l, lc in enumerate(cfg.layers):
        bound = np.sqrt(1.0 / fan_in)
        p[f"l{l}.W_in"] = rng.uniform(-bound, bound, (fan_in, lc.size))
        p[f"l{l}.b_in"] = rng.uniform(-bound, bound, lc.size)
        if lc.recurrent:
            p[f"l{l}.W_rec"] = orthogonal(lc.size, rng)
        p[f"l{l}.theta_u"] = rng.uniform(0.0, 1.0, lc.size)
        if lc.kind != "lif":
            p[f"l{l}.theta_w"] = rng.uniform(0.0, 1.0, lc.size)
            p[f"l{l}.a_hat"] = rng.uniform(0.0, 1.0, lc.size)
            p[f"l{l}.b_hat"] = rng.uniform(0.0, 2.0, lc.size)
        fan_in = lc.size
    bound = np.sqrt(1.0 / fan_in)
    p["out.W"] = rng.uniform(-bound, bound, (fan_in, cfg.n_outputs))
    p["out.b"] = rng.uniform(-bound, bound, cfg.n_outputs)
    if cfg.trainable_tau_out:
        p["out.theta_tau"] = rng.uniform(0.0, 1.0, cfg.n_outputs)
    return p


PARAM_CLIP = {"theta_u": (0.0, 1.0), "theta_w": (0.0, 1.0), "a_hat": (0.0, 1.0), "b_hat": (0.0, 2.0), "theta_tau": (0.0, 1.0)}


def clip_params(params: dict[str, np.ndarray]) -> None:
    """Project reparameterized neuron parameters back onto their intervals, in place."""
    for name, arr in params.items():
        lim = PARAM_CLIP.get(name.split(".", 1)[1])
        if lim is not None:
            np.clip(arr, lim[0], lim[1], out=arr)


@dataclass
class LayerTrace:
    inp: np.ndarray  # (T, B, D) input fed to this layer (post-dropout spikes or data)
    I: np.ndarray  # (T, B, H) synaptic current
    u_hat: np.ndarray
    u: np.ndarray  # post-reset
    w: np.ndarray | None
    S: np.ndarray
    mask: np.ndarray | None = None  # dropout mask applied to this layer's outgoing spikes


@dataclass
class ForwardTrace:
    layers: list[LayerTrace]
    y: np.ndarray  # (T, B, C)
    z: np.ndarray  # (T, B, C) readout drive
    x: np.ndarray  # (T, B, D) effective network input
    closed_loop_from: int | None
    coeffs: list[dict] = field(default_factory=list)
    gamma: np.ndarray | None = None


class Network:
    """Recurrent spiking network; parameters live in ``self.params``."""

    def __init__(self, config: NetworkConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)
        self._check_params()

    def _check_params(self):
        ref = init_params(self.config, 0)
        if set(ref) != set(self.params):
            raise ConfigError(f"parameter set mismatch: {sorted(set(ref) ^ set(self.params))}")
        for k, v in ref.items():
            if self.params[k].shape != v.shape:
                raise ConfigError(f"shape mismatch for {k}: {self.params[k].shape} vs {v.shape}")

    def copy(self) -> "Network":
        return Network(copy.deepcopy(self.config), {k: v.copy() for k, v in self.params.items()})

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # -- neuron coefficients -------------------------------------------------

    def layer_coeffs(self, l: int) -> dict:
        """Per-neuron decay factors, couplings and their parameter derivatives."""
        lc: LayerConfig = self.config.layers[l]
        p, dt = self.params, self.config.dt
        alpha, dalpha = decay_and_grad(p[f"l{l}.theta_u"], *lc.tau_u_range, dt)
        co = {"alpha": alpha, "dalpha": dalpha}
        if lc.kind != "lif":
            beta, dbeta = decay_and_grad(p[f"l{l}.theta_w"], *lc.tau_w_range, dt)
            co.update(beta=beta, dbeta=dbeta, a=lc.q * p[f"l{l}.a_hat"], b=lc.q * p[f"l{l}.b_hat"])
        return co

    def neuron_values(self, l: int) -> dict:
        """Physical per-neuron parameters (tau in ms, a, b)."""
        lc = self.config.layers[l]
        p = self.params
        out = {"tau_u": tau_from_theta(p[f"l{l}.theta_u"], *lc.tau_u_range)}
        if lc.kind != "lif":
            out["tau_w"] = tau_from_theta(p[f"l{l}.theta_w"], *lc.tau_w_range)
            out["a"] = lc.q * p[f"l{l}.a_hat"]
            out["b"] = lc.q * p[f"l{l}.b_hat"]
        return out

    def readout_gamma(self):
        cfg = self.config
        if cfg.trainable_tau_out:
            return decay_and_grad(self.params["out.theta_tau"], *cfg.tau_out, cfg.dt)
        g = np.full(cfg.n_outputs, np.exp(-cfg.dt / cfg.tau_out))
        return g, None

    # -- forward ----------------------------------------------------------------

    def forward(
        self,
        x,
        closed_loop_from: int | None = None,
        dropout_rng: np.random.Generator | None = None,
        record: bool = True,
    ):
        """Run the network on batch-major input ``x`` of shape (B, T, D).

        From step ``closed_loop_from`` on, the input at step k is replaced by
        the readout output of step k-1 (requires D == C). Returns
        ``(trace, y)`` with ``y`` batch-major (B, T, C); ``trace`` is None
        when ``record`` is False.
        """
        cfg = self.config
        dt_ = self.dtype
        X = np.array(np.transpose(np.asarray(x), (1, 0, 2)), dtype=dt_)
        T, B, D = X.shape
        if D != cfg.n_inputs:
            raise ConfigError(f"expected {cfg.n_inputs} input channels, got {D}")
        k0 = T if closed_loop_from is None else max(0, min(int(closed_loop_from), T))
        if k0 < T and cfg.n_inputs != cfg.n_outputs:
            raise ConfigError("closed-loop feedback needs n_inputs == n_outputs")
        P = {k: v.astype(dt_, copy=False) for k, v in self.params.items()}
        L = len(cfg.layers)
        coeffs = [{k: np.asarray(v, dtype=dt_) for k, v in self.layer_coeffs(l).items()} for l in range(L)]
        gamma, _ = self.readout_gamma()
        gamma = gamma.astype(dt_)
        theta = cfg.threshold
        sa, sc = cfg.surrogate.alpha, cfg.surrogate.c
        smooth = cfg.spike_mode == "smooth"

        masks = []
        for l, lc in enumerate(cfg.layers):
            if cfg.dropout > 0 and dropout_rng is not None:
                keep = 1.0 - cfg.dropout
                masks.append((dropout_rng.random((B, lc.size)) < keep).astype(dt_) / keep)
            else:
                masks.append(None)

        def alloc(H):
            return np.empty((T, B, H), dtype=dt_) if record else None

        traces = []
        for l, lc in enumerate(cfg.layers):
            H = lc.size
            traces.append(LayerTrace(
                inp=X if l == 0 else None, I=alloc(H), u_hat=alloc(H), u=alloc(H),
                w=alloc(H) if lc.kind != "lif" else None, S=alloc(H), mask=masks[l],
            ))
        y_all = np.empty((T, B, cfg.n_outputs), dtype=dt_)
        z_all = np.empty((T, B, cfg.n_outputs), dtype=dt_) if record else None

        ff0 = None
        if k0 > 0:
            ff0 = X[:k0] @ P["l0.W_in"] + P["l0.b_in"]
        u = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        w = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        S_prev = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        y = np.zeros((B, cfg.n_outputs), dtype=dt_)
        one_m_gamma = 1.0 - gamma

        for k in range(T):
            if k >= k0:
                X[k] = y
            inp = X[k]
            for l, lc in enumerate(cfg.layers):
                if l == 0:
                    I = ff0[k] if k < k0 else inp @ P["l0.W_in"] + P["l0.b_in"]
                else:
                    I = inp @ P[f"l{l}.W_in"] + P[f"l{l}.b_in"]
                if lc.recurrent:
                    I = I + S_prev[l] @ P[f"l{l}.W_rec"]
                co = coeffs[l]
                alpha = co["alpha"]
                if lc.kind == "lif":
                    u_hat = alpha * u[l] + (1.0 - alpha) * I
                else:
                    u_hat = alpha * u[l] + (1.0 - alpha) * (I - w[l])
                if smooth:
                    S = smooth_spike(u_hat - theta, sa, sc)
                    u_new = u_hat
                else:
                    S = (u_hat > theta).astype(dt_)
                    u_new = u_hat * (1.0 - S)
                if lc.kind != "lif":
                    bb = 1.0 - co["beta"]
                    src = u[l] if lc.kind == "ef" else u_new
                    w[l] = co["beta"] * w[l] + bb * (co["a"] * src + co["b"] * S)
                if not np.isfinite(u_hat).all() or (lc.kind != "lif" and not np.isfinite(w[l]).all()):
                    raise NumericalDivergence(l, k)
                u[l] = u_new
                S_prev[l] = S
                if record:
                    tr = traces[l]
                    tr.I[k], tr.u_hat[k], tr.u[k], tr.S[k] = I, u_hat, u_new, S
                    if tr.w is not None:
                        tr.w[k] = w[l]
                inp = S if masks[l] is None else S * masks[l]
            z = inp @ P["out.W"] + P["out.b"]
            y = gamma * y + one_m_gamma * z
            y_all[k] = y
            if record:
                z_all[k] = z
        y_out = np.transpose(y_all, (1, 0, 2))
        if not record:
            return None, y_out
        trace = ForwardTrace(traces, y_all, z_all, X, None if k0 >= T else k0, coeffs, gamma)
        return trace, y_out

    def predict(self, x, closed_loop_from: int | None = None):
        return self.forward(x, closed_loop_from, record=False)[1]

    # -- backward -----------------------------------------------------------------

    def backward(self, trace: ForwardTrace, grad_y, state_grads: dict | None = None, input_grad: bool = False):
        """Reverse-mode gradients of a scalar loss.

        ``grad_y`` is dL/dy in batch-major (B, T, C). ``state_grads`` maps a
        layer index to an extra dL/du (B, T, H) seed on the post-reset
        membrane potential. Returns a dict of parameter gradients (float64),
        plus ``"input"`` (B, T, D) when ``input_grad`` is True.
        """
        cfg = self.config
        dt_ = self.dtype
        gy_all = np.ascontiguousarray(np.transpose(np.asarray(grad_y, dtype=dt_), (1, 0, 2)))
        T, B, C = gy_all.shape
        if trace.y.shape != (T, B, C) or len(trace.layers) != len(cfg.layers):
            raise ValueError("trace does not match gradient shape or network")
        P = {k: v.astype(dt_, copy=False) for k, v in self.params.items()}
        L = len(cfg.layers)
        coeffs = trace.coeffs
        gamma = trace.gamma
        theta = cfg.threshold
        sa, sc = cfg.surrogate.alpha, cfg.surrogate.c
        smooth = cfg.spike_mode == "smooth"
        k0 = T if trace.closed_loop_from is None else trace.closed_loop_from
        seeds = {}
        for l, g in (state_grads or {}).items():
            seeds[l] = np.transpose(np.asarray(g, dtype=dt_), (1, 0, 2))

        G_uhat = [np.zeros((T, B, lc.size), dtype=dt_) for lc in cfg.layers]
        G_w = [np.zeros((T, B, lc.size), dtype=dt_) if lc.kind != "lif" else None for lc in cfg.layers]
        G_z = np.zeros((T, B, C), dtype=dt_)
        gu = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        gw = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        grec = [np.zeros((B, lc.size), dtype=dt_) for lc in cfg.layers]
        gy_carry = np.zeros((B, C), dtype=dt_)
        g_feedback = np.zeros((B, C), dtype=dt_)
        g_x = np.zeros((T, B, cfg.n_inputs), dtype=dt_) if (input_grad or k0 < T) else None
        g_gamma = np.zeros(C, dtype=np.float64)
        y_prev_all = np.concatenate([np.zeros((1, B, C), dtype=dt_), trace.y[:-1]], axis=0)
        one_m_gamma = 1.0 - gamma

        for k in range(T - 1, -1, -1):
            gy = gy_all[k] + gy_carry + g_feedback
            g_gamma += np.einsum("bc,bc->c", gy, y_prev_all[k] - trace.z[k])
            gz = one_m_gamma * gy
            G_z[k] = gz
            gy_carry = gamma * gy
            g_above = gz @ P["out.W"].T
            for l in range(L - 1, -1, -1):
                lc = cfg.layers[l]
                tr = trace.layers[l]
                co = coeffs[l]
                if tr.mask is not None:
                    g_above = g_above * tr.mask
                gS = g_above + grec[l]
                gu_l = gu[l]
                if l in seeds:
                    gu_l = gu_l + seeds[l][k]
                alpha = co["alpha"]
                S = tr.S[k]
                if lc.kind == "se":
                    bb = 1.0 - co["beta"]
                    gw_l = gw[l]
                    G_w[l][k] = gw_l
                    gu_l = gu_l + gw_l * (bb * co["a"])
                    gS = gS + gw_l * (bb * co["b"])
                elif lc.kind == "ef":
                    bb = 1.0 - co["beta"]
                    gw_l = gw[l]
                    G_w[l][k] = gw_l
                    gS = gS + gw_l * (bb * co["b"])
                v = tr.u_hat[k] - theta
                if smooth:
                    g_uhat = gu_l + gS * slayer_grad(v, sa, sc)
                else:
                    g_uhat = gu_l * (1.0 - S) + gS * slayer_grad(v, sa, sc)
                g_uhat = flush_subnormal(g_uhat)
                G_uhat[l][k] = g_uhat
                gI = (1.0 - alpha) * g_uhat
                if lc.kind == "lif":
                    gu[l] = alpha * g_uhat
                elif lc.kind == "se":
                    gu[l] = alpha * g_uhat
                    gw[l] = co["beta"] * gw_l - gI
                else:
                    gu[l] = alpha * g_uhat + gw_l * (bb * co["a"])
                    gw[l] = co["beta"] * gw_l - gI
                if lc.recurrent:
                    grec[l] = gI @ P[f"l{l}.W_rec"].T
                g_in = gI @ P[f"l{l}.W_in"].T
                if l > 0:
                    g_above = g_in
                elif g_x is not None:
                    g_x[k] = g_in
            if k >= k0 and k > 0:
                # input at step k was the readout output of step k-1
                g_feedback = g_x[k]
            else:
                g_feedback = np.zeros_like(g_feedback)

        grads: dict[str, np.ndarray] = {}
        prev_spikes = None
        for l, lc in enumerate(cfg.layers):
            tr = trace.layers[l]
            co = coeffs[l]
            H = lc.size
            alpha = co["alpha"]
            gI = (1.0 - alpha) * G_uhat[l]
            gI2 = gI.reshape(T * B, H)
            if l == 0:
                inp = trace.x
            else:
                prev = trace.layers[l - 1]
                inp = prev.S if prev.mask is None else prev.S * prev.mask
            grads[f"l{l}.W_in"] = inp.reshape(T * B, -1).T @ gI2
            grads[f"l{l}.b_in"] = gI2.sum(axis=0)
            if lc.recurrent:
                grads[f"l{l}.W_rec"] = tr.S[:-1].reshape((T - 1) * B, H).T @ gI[1:].reshape((T - 1) * B, H)
            u_prev = _shift(tr.u)
            if lc.kind == "lif":
                g_alpha = np.einsum("tbh,tbh->h", G_uhat[l], u_prev - tr.I)
            else:
                w_prev = _shift(tr.w)
                g_alpha = np.einsum("tbh,tbh->h", G_uhat[l], u_prev + w_prev - tr.I)
                src = u_prev if lc.kind == "ef" else tr.u
                bb = 1.0 - co["beta"]
                Gw = G_w[l]
                g_beta = np.einsum("tbh,tbh->h", Gw, w_prev - co["a"] * src - co["b"] * tr.S)
                g_a = bb * np.einsum("tbh,tbh->h", Gw, src)
                g_b = bb * np.einsum("tbh,tbh->h", Gw, tr.S)
                grads[f"l{l}.theta_w"] = g_beta * co["dbeta"]
                grads[f"l{l}.a_hat"] = lc.q * g_a
                grads[f"l{l}.b_hat"] = lc.q * g_b
            grads[f"l{l}.theta_u"] = g_alpha * co["dalpha"]
            prev_spikes = tr.S if tr.mask is None else tr.S * tr.mask
        Gz2 = G_z.reshape(T * B, C)
        grads["out.W"] = prev_spikes.reshape(T * B, -1).T @ Gz2
        grads["out.b"] = Gz2.sum(axis=0)
        if cfg.trainable_tau_out:
            _, dgamma = self.readout_gamma()
            grads["out.theta_tau"] = g_gamma * dgamma
        grads = {k: np.asarray(v, dtype=np.float64) for k, v in grads.items()}
        if input_grad:
            grads["input"] = np.transpose(g_x, (1, 0, 2)).astype(np.float64)
        return grads


def _shift(a: np.ndarray) -> np.ndarray:
    """Previous-step values with a zero initial state."""
    out = np.empty_like(a)
    out[0] = 0.0
    out[1:] = a[:-1]
    return out


def save_network(directory, net: Network, meta: dict | None = None):
    from dataclasses import asdict

    m = {"network": asdict(net.config)}
    m.update(meta or {})
    return save_arrays(directory, {k.replace(".", "__"): v.astype("<f8") for k, v in net.params.items()}, m)


def load_network(directory) -> tuple[Network, dict]:
    arrays, meta = load_arrays(directory)
    cfg = NetworkConfig(**meta["network"])
    params = {k.replace("__", "."): v.astype(np.float64) for k, v in arrays.items()}
    return Network(cfg, params), meta
