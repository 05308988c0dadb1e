"""Toy-scale training and the frequency-generalization experiment.

The duty-cycle task emits a square envelope (duty in {25%, 50%, 75%} for three
classes) that switches a slow carrier against a faster one, plus bandlimited
noise and a super-Nyquist "distractor" tone. Sampled at the base rate the
distractor folds into the visible band; at higher deploy rates it unfolds,
which is exactly the shift that bandlimit masking is meant to absorb. All
content is an analytic function of continuous time, so resampling at an
integer multiple of the base rate changes the sampling, never the signal.

Training follows the mixed scheme: a BPTT share of each batch backprops
through the whole sequence, the rest runs truncated chunks with a detached
state carry. The optimizer is Adam under a linear-decay-from-peak schedule.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .hippo import init_ssm
from .numerics import log_grid
from .regfreq import H2Config, trapezoid_weights
from .rng import CounterRng, _mix
from .ssm import BandlimitConfig, bandlimit_mask, effective_frequency, retarget

# rng stream ids used by this module (parameter init, batching, task signals)
STREAM_IN_PROJ = 10
STREAM_HEAD = 11
STREAM_BATCH = 12
STREAM_TASK_BASE = 1 << 20

# duty-cycle task constants: carriers sit well below the base Nyquist, the
# distractor well above it (it aliases at the base rate and unfolds at 2x/4x)
F_CARRIER_HI = 5.0
F_CARRIER_LO = 2.0
F_DISTRACTOR_LO = 130.0
F_DISTRACTOR_SPAN = 40.0
N_NOISE_COMPONENTS = 3
NOISE_F_MAX = 20.0
DISTRACTOR_GAIN = 2.0

MODEL_MAGIC = b"EVSSMMDL"


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class ToyTask:
    kind: str = "duty-cycle-classification"
    base_rate_hz: float = 100.0
    seq_len: int = 256
    n_classes: int = 3
    noise_std: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("duty-cycle-classification", "smoothed-target-regression"):
            raise ValueError(f"unknown task kind '{self.kind}'")
        if self.seq_len < 8 or self.n_classes < 2 or self.base_rate_hz <= 0:
            raise ValueError("invalid task geometry")


@dataclass
class TrainConfig:
    batch: int = 8
    mixed_fraction: float = 0.5  # share of the batch under full BPTT
    lr: float = 2e-4
    steps: int = 500
    h2: H2Config | None = None
    bandlimit: BandlimitConfig | None = None
    seed: int = 0
    state_size: int = 32
    width: int = 16
    blocks: int = 1
    n_layers: int = 2
    tbptt_chunks: int = 4
    rule: str = "bilinear"
    lr_ssm_scale: float = 0.5  # lr multiplier on (lam, B~, log_delta) like S4-style groups
    n_train: int = 48
    delta_min: float = 0.001
    delta_max: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.mixed_fraction <= 1.0):
            raise ValueError("mixed_fraction must lie in [0, 1]")
        if self.batch < 1 or self.steps < 1 or self.tbptt_chunks < 1:
            raise ValueError("invalid training geometry")


@dataclass
class SweepRow:
    deploy_hz: float
    rate: float
    metric: float


@dataclass
class FrequencySweepReport:
    rows: list[SweepRow]
    performance_drop: float

    def to_csv(self) -> str:
        lines = ["deploy_hz,rate,metric"]
        lines += [f"{r.deploy_hz:g},{r.rate:.6g},{r.metric:.6f}" for r in self.rows]
        lines.append(f"# performance_drop,{self.performance_drop:.6f}")
        return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model_kind: str
    params: dict[str, np.ndarray]
    loss_curve: list[float]
    task: ToyTask
    config: TrainConfig


def _subseed(seed: int, tag: int) -> int:
    return int(_mix(np.asarray([(seed * 0x9E3779B97F4A7C15 + tag) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))[0])


def _signal_params(task: ToyTask, sid: int):
    """Per-sequence continuous-signal parameters; draw order is fixed."""
    rng = CounterRng(task.seed, STREAM_TASK_BASE + sid)
    draws = rng.uniform((8 + 3 * N_NOISE_COMPONENTS,))
    label = sid % task.n_classes
    duty = (label + 1) / (task.n_classes + 1)
    env_phase = draws[0]
    phi_hi = 2 * np.pi * draws[1]
    phi_lo = 2 * np.pi * draws[2]
    amp = 0.8 + 0.4 * draws[3]
    f_d = F_DISTRACTOR_LO + F_DISTRACTOR_SPAN * draws[4]
    phi_d = 2 * np.pi * draws[5]
    a_d = DISTRACTOR_GAIN * (0.75 + 0.5 * draws[6])
    # draws[7] reserved for regression target jitter
    noise = []
    for m in range(N_NOISE_COMPONENTS):
        f_m = 0.5 + (NOISE_F_MAX - 0.5) * draws[8 + 3 * m]
        phi_m = 2 * np.pi * draws[9 + 3 * m]
        a_m = 0.3 + 0.4 * draws[10 + 3 * m]
        noise.append((f_m, phi_m, a_m))
    return label, duty, env_phase, phi_hi, phi_lo, amp, (f_d, phi_d, a_d), noise


def _continuous_signal(task: ToyTask, sid: int, t: np.ndarray):
    label, duty, env_phase, phi_hi, phi_lo, amp, (f_d, phi_d, a_d), noise = _signal_params(task, sid)
    duration = task.seq_len / task.base_rate_hz
    t_env = duration / 2.0  # two envelope periods per sequence
    env = ((t / t_env + env_phase) % 1.0) < duty
    sig = amp * np.where(
        env,
        np.sin(2 * np.pi * F_CARRIER_HI * t + phi_hi),
        np.sin(2 * np.pi * F_CARRIER_LO * t + phi_lo),
    )
    for f_m, phi_m, a_m in noise:
        sig = sig + task.noise_std * a_m * np.sin(2 * np.pi * f_m * t + phi_m)
    sig = sig + task.noise_std * a_d * np.sin(2 * np.pi * f_d * t + phi_d)
    return label, sig


def _regression_target(task: ToyTask, sid: int) -> float:
    # evaluated on a fixed fine grid so the target is independent of rate_hz
    fine_rate = 4.0 * task.base_rate_hz
    n = int(task.seq_len * 4)
    t = np.arange(n) / fine_rate
    _, sig = _continuous_signal(task, sid, t)
    return float(np.tanh(sig).mean())


def make_toy_dataset(task: ToyTask, rate_hz: float, n_seq: int = 60, id_offset: int = 0):
    """Sample n_seq sequences of the task's continuous signals at rate_hz.

    rate_hz must be an integer multiple of the base rate; the sequence length
    scales with the ratio so every rate covers the same time span.
    """
    ratio = rate_hz / task.base_rate_hz
    if abs(ratio - round(ratio)) > 1e-9 or ratio < 1:
        raise ValueError(f"rate {rate_hz} is not an integer multiple of base {task.base_rate_hz}")
    ratio = int(round(ratio))
    length = task.seq_len * ratio
    t = np.arange(length) / rate_hz
    inputs = np.empty((n_seq, length, 1), dtype=np.float64)
    if task.kind == "duty-cycle-classification":
        labels = np.empty(n_seq, dtype=np.int64)
    else:
        labels = np.empty(n_seq, dtype=np.float64)
    for i in range(n_seq):
        sid = id_offset + i
        label, sig = _continuous_signal(task, sid, t)
        inputs[i, :, 0] = sig
        if task.kind == "duty-cycle-classification":
            labels[i] = label
        else:
            labels[i] = _regression_target(task, sid)
    return inputs, labels


def _head_size(task: ToyTask) -> int:
    return task.n_classes if task.kind == "duty-cycle-classification" else 1


def init_model(model_kind: str, task: ToyTask, cfg: TrainConfig) -> dict[str, np.ndarray]:
    """Initialize parameters for the SSM stack or the gated-RNN baseline."""
    h = cfg.width
    k = _head_size(task)
    in_dim = 1
    params: dict[str, np.ndarray] = {}
    rin = CounterRng(cfg.seed, STREAM_IN_PROJ)
    params["in_w"] = rin.normal((in_dim, h)) / np.sqrt(in_dim)
    params["in_b"] = np.zeros(h)
    rh = CounterRng(cfg.seed, STREAM_HEAD)
    params["head_w"] = rh.normal((h, k)) / np.sqrt(h)
    params["head_b"] = np.zeros(k)
    if model_kind == "ssm":
        for layer in range(cfg.n_layers):
            core = init_ssm(
                cfg.state_size, h, cfg.blocks, seed=_subseed(cfg.seed, layer),
                delta_min=cfg.delta_min, delta_max=cfg.delta_max,
            )
            params[f"l{layer}_lam"] = core.lam.copy()
            params[f"l{layer}_b"] = core.b_tilde.copy()
            params[f"l{layer}_c"] = core.c_tilde.copy()
            params[f"l{layer}_d"] = core.d.copy()
            params[f"l{layer}_logdelta"] = core.log_delta.copy()
    elif model_kind == "rnn":
        rr = CounterRng(_subseed(cfg.seed, 17), 0)
        for name, rows in (("wz", in_dim), ("wh", in_dim)):
            params[name] = rr.normal((rows, h)) / np.sqrt(rows)
        for name in ("uz", "uh"):
            params[name] = rr.normal((h, h)) / np.sqrt(h)
        params["bz"] = np.zeros(h)
        params["bh"] = np.zeros(h)
    else:
        raise ValueError(f"unknown model kind '{model_kind}'")
    return params


def _layer_masks(params, cfg: TrainConfig, rate: float):
    """0/1 column masks per layer, or None when bandlimiting is off.

    The mask depends on the rate and on the current (lam, log_delta), so it is
    recomputed per step and treated as a constant inside the tape.
    """
    bl = cfg.bandlimit
    if bl is None or not bl.enabled:
        return [None] * cfg.n_layers
    masks = []
    for layer in range(cfg.n_layers):
        f = effective_frequency(params[f"l{layer}_lam"], params[f"l{layer}_logdelta"], rate)
        masks.append((f <= bl.alpha / 2.0).astype(np.float64))
    return masks


def _ssm_layer_vars(tape, lam, logdelta, b_tilde, rate, u_var, prev_state, rule, parallel=True):
    """Discretize inside the tape and run the differentiable recurrence."""
    step = ad.mul(ad.exp(logdelta), rate)
    if rule == "bilinear":
        w = ad.mul(ad.mul(step, 0.5), lam)
        denom = ad.sub(1.0, w)
        lam_bar = ad.div(ad.add(1.0, w), denom)
        bfac = ad.div(step, denom)
    elif rule == "zoh":
        lam_bar = ad.exp(ad.mul(step, lam))
        bfac = ad.div(ad.sub(lam_bar, 1.0), lam)
    else:
        raise ValueError(f"unknown discretization rule '{rule}'")
    p = lam.value.shape[0]
    b_bar = ad.mul(ad.reshape(bfac, (p, 1)), b_tilde)
    bu = ad.matmul(u_var, ad.transpose(b_bar))
    return ad.scan_recurrence(lam_bar, bu, prev_state, parallel=parallel)


def _h2_penalty_var(tape, lam, b_tilde, c_eff, cfg: H2Config):
    grid = log_grid(cfg.omega_min, cfg.omega_max, cfg.n_points)
    wts = trapezoid_weights(grid)
    p = lam.value.shape[0]
    h_out, h_in = c_eff.value.shape[0], b_tilde.value.shape[1]
    jw = tape.constant((1j * grid)[:, None])
    resolvent = ad.div(1.0, ad.sub(jw, ad.reshape(lam, (1, p))))
    rb = ad.mul(ad.reshape(resolvent, (-1, p, 1)), ad.reshape(b_tilde, (1, p, h_in)))
    g = ad.matmul(c_eff, rb)  # (n, M, U)
    gsq = ad.sum_(ad.sum_(ad.abs2(g), axis=2), axis=1)
    integral = ad.sum_(ad.mul(gsq, tape.constant(wts)))
    norm_sq = ad.mul(integral, 1.0 / np.pi)
    if cfg.squared:
        return ad.mul(norm_sq, cfg.weight)
    return ad.mul(ad.sqrt(norm_sq), cfg.weight)


def ssm_stack_forward(
    tape,
    pvars,
    u,
    cfg: TrainConfig,
    rate: float = 1.0,
    masks=None,
    prev_states=None,
    h2: H2Config | None = None,
    parallel: bool = True,
):
    """Forward the SSM stack over time-first input u (L, B, in_dim).

    Returns (logits Var (B, K), penalty Var or None, final_states list of (B, P)).
    """
    u_const = tape.constant(np.asarray(u, dtype=np.float64))
    x = ad.add(ad.matmul(u_const, pvars["in_w"]), pvars["in_b"])
    masks = masks if masks is not None else [None] * cfg.n_layers
    penalty = None
    finals = []
    for layer in range(cfg.n_layers):
        lam = pvars[f"l{layer}_lam"]
        prev = None if prev_states is None else prev_states[layer]
        xs = _ssm_layer_vars(
            tape, lam, pvars[f"l{layer}_logdelta"], pvars[f"l{layer}_b"],
            rate, x, prev, cfg.rule, parallel=parallel,
        )
        c_eff = pvars[f"l{layer}_c"]
        if masks[layer] is not None:
            c_eff = ad.mul(c_eff, tape.constant(masks[layer][None, :]))
        y = ad.add(ad.real(ad.matmul(xs, ad.transpose(c_eff))), ad.mul(pvars[f"l{layer}_d"], x))
        x = ad.add(x, ad.gelu(y))
        finals.append(xs.value[-1].copy())
        if h2 is not None:
            pen = _h2_penalty_var(tape, lam, pvars[f"l{layer}_b"], c_eff, h2)
            penalty = pen if penalty is None else ad.add(penalty, pen)
    pooled = ad.mean(x, axis=0)
    logits = ad.add(ad.matmul(pooled, pvars["head_w"]), pvars["head_b"])
    return logits, penalty, finals


def rnn_forward(tape, pvars, u, prev_state=None):
    """Gated recurrent cell (update gate + tanh candidate) over u (L, B, in_dim)."""
    u = np.asarray(u, dtype=np.float64)
    length, batch = u.shape[0], u.shape[1]
    width = pvars["bz"].value.shape[0]
    h = tape.constant(np.zeros((batch, width))) if prev_state is None else tape.constant(prev_state)
    acc = None
    for k in range(length):
        uk = tape.constant(u[k])
        z = ad.sigmoid(ad.add(ad.add(ad.matmul(uk, pvars["wz"]), ad.matmul(h, pvars["uz"])), pvars["bz"]))
        cand = ad.tanh(ad.add(ad.add(ad.matmul(uk, pvars["wh"]), ad.matmul(h, pvars["uh"])), pvars["bh"]))
        h = ad.add(ad.mul(ad.sub(1.0, z), h), ad.mul(z, cand))
        acc = h if acc is None else ad.add(acc, h)
    pooled = ad.mul(acc, 1.0 / length)
    logits = ad.add(ad.matmul(pooled, pvars["head_w"]), pvars["head_b"])
    return logits, h.value.copy()


def rnn_baseline_forward(params, u, state=None):
    """Numpy-facing baseline step: per-step head readouts y (L, K) and the final state.

    The head is affine in the hidden state, so mean-pooled logits equal the
    mean of these per-step readouts.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != params["wz"].shape[0]:
        raise ValueError("rnn_baseline_forward expects u of shape (L, in_dim)")
    if state is not None and state.shape != (params["uz"].shape[0],):
        raise ValueError("state width mismatch")
    h = np.zeros(params["uz"].shape[0]) if state is None else state.astype(np.float64)
    out = np.empty((u.shape[0], params["head_b"].shape[0]))
    for k in range(u.shape[0]):
        z = 1.0 / (1.0 + np.exp(-(u[k] @ params["wz"] + h @ params["uz"] + params["bz"])))
        cand = np.tanh(u[k] @ params["wh"] + h @ params["uh"] + params["bh"])
        h = (1.0 - z) * h + z * cand
        out[k] = h @ params["head_w"] + params["head_b"]
    return out, h


def _loss_var(task: ToyTask, logits, labels):
    if task.kind == "duty-cycle-classification":
        return ad.softmax_cross_entropy(logits, labels)
    diff = ad.sub(ad.reshape(logits, (-1,)), labels.astype(np.float64))
    return ad.mean(ad.mul(diff, diff))


class Adam:
    """Adam over named parameters; complex arrays update on their (Re, Im) view."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    @staticmethod
    def _view(arr: np.ndarray) -> np.ndarray:
        return arr.view(np.float64) if np.iscomplexobj(arr) else arr

    def step(self, params, grads, lr: float, multipliers=None):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for key, p in params.items():
            g = self._view(np.ascontiguousarray(grads[key]))
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            m, v = self.m[key], self.v[key]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            scale = lr if multipliers is None else lr * multipliers.get(key, 1.0)
            self._view(p)[...] -= scale * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _accumulate(total: dict, leaves: dict, tape) -> None:
    for key, leaf in leaves.items():
        g = tape.grad(leaf)
        if key in total:
            total[key] = total[key] + g
        else:
            total[key] = g


def _lr_multipliers(model_kind: str, cfg: TrainConfig):
    if model_kind != "ssm":
        return None
    mult = {}
    for layer in range(cfg.n_layers):
        for suffix in ("lam", "b", "logdelta"):
            mult[f"l{layer}_{suffix}"] = cfg.lr_ssm_scale
    return mult


def train(model_kind: str, task: ToyTask, cfg: TrainConfig) -> TrainResult:
    """Train a model on the toy task with mixed BPTT/TBPTT batching."""
    if model_kind not in ("ssm", "rnn"):
        raise ValueError(f"unknown model kind '{model_kind}'")
    inputs, labels = make_toy_dataset(task, task.base_rate_hz, cfg.n_train)
    params = init_model(model_kind, task, cfg)
    adam = Adam()
    multipliers = _lr_multipliers(model_kind, cfg)
    batch_rng = CounterRng(cfg.seed, STREAM_BATCH)
    n_bptt = int(round(cfg.mixed_fraction * cfg.batch))
    n_tb = cfg.batch - n_bptt
    length = inputs.shape[1]
    chunk = max(1, length // cfg.tbptt_chunks)
    loss_curve: list[float] = []

    for step in range(cfg.steps):
        idx = batch_rng.integers(cfg.n_train, (cfg.batch,))
        xb = np.transpose(inputs[idx], (1, 0, 2))  # (L, B, in)
        yb = labels[idx]
        grads: dict[str, np.ndarray] = {}
        loss_val = 0.0

        if n_bptt:
            tape = ad.Tape()
            leaves = {k: tape.leaf(v) for k, v in params.items()}
            if model_kind == "ssm":
                masks = _layer_masks(params, cfg, rate=1.0)
                logits, _, _ = ssm_stack_forward(tape, leaves, xb[:, :n_bptt], cfg, masks=masks)
            else:
                logits, _ = rnn_forward(tape, leaves, xb[:, :n_bptt])
            loss = ad.mul(_loss_var(task, logits, yb[:n_bptt]), n_bptt / cfg.batch)
            tape.backward(loss)
            _accumulate(grads, leaves, tape)
            loss_val += float(loss.value)

        if n_tb:
            states = None
            for c0 in range(0, length, chunk):
                tape = ad.Tape()
                leaves = {k: tape.leaf(v) for k, v in params.items()}
                u_chunk = xb[c0 : c0 + chunk, n_bptt:]
                if model_kind == "ssm":
                    masks = _layer_masks(params, cfg, rate=1.0)
                    logits, _, states = ssm_stack_forward(
                        tape, leaves, u_chunk, cfg, masks=masks, prev_states=states
                    )
                else:
                    logits, final = rnn_forward(tape, leaves, u_chunk, prev_state=states)
                    states = final
                w = (n_tb / cfg.batch) * (min(chunk, length - c0) / length)
                loss = ad.mul(_loss_var(task, logits, yb[n_bptt:]), w)
                tape.backward(loss)
                _accumulate(grads, leaves, tape)
                loss_val += float(loss.value)

        if model_kind == "ssm" and cfg.h2 is not None:
            tape = ad.Tape()
            pen_keys = [f"l{layer}_{s}" for layer in range(cfg.n_layers) for s in ("lam", "b", "c")]
            leaves = {k: tape.leaf(params[k]) for k in pen_keys}
            masks = _layer_masks(params, cfg, rate=1.0)
            penalty = None
            for layer in range(cfg.n_layers):
                c_eff = leaves[f"l{layer}_c"]
                if masks[layer] is not None:
                    c_eff = ad.mul(c_eff, tape.constant(masks[layer][None, :]))
                pen = _h2_penalty_var(tape, leaves[f"l{layer}_lam"], leaves[f"l{layer}_b"], c_eff, cfg.h2)
                penalty = pen if penalty is None else ad.add(penalty, pen)
            tape.backward(penalty)
            _accumulate(grads, leaves, tape)
            loss_val += float(penalty.value)

        if not np.isfinite(loss_val):
            raise TrainingDiverged(f"loss became non-finite at step {step}")
        for key, p in params.items():
            if key not in grads:
                grads[key] = np.zeros_like(p)
        lr_t = cfg.lr * (1.0 - step / cfg.steps)
        adam.step(params, grads, lr_t, multipliers)
        loss_curve.append(loss_val)

    return TrainResult(model_kind=model_kind, params=params, loss_curve=loss_curve, task=task, config=cfg)


def evaluate(result: TrainResult, inputs, labels, rate: float = 1.0, eval_batch: int = 16) -> float:
    """Accuracy (classification) or negative RMSE (regression) at a rate multiplier."""
    task, cfg = result.task, result.config
    n = inputs.shape[0]
    hits = 0.0
    sq = 0.0
    for lo in range(0, n, eval_batch):
        xb = np.transpose(inputs[lo : lo + eval_batch], (1, 0, 2))
        tape = ad.Tape()
        consts = {k: tape.constant(v) for k, v in result.params.items()}
        if result.model_kind == "ssm":
            masks = _layer_masks(result.params, cfg, rate=rate)
            logits, _, _ = ssm_stack_forward(tape, consts, xb, cfg, rate=rate, masks=masks)
        else:
            logits, _ = rnn_forward(tape, consts, xb)
        z = logits.value
        if task.kind == "duty-cycle-classification":
            hits += float(np.sum(np.argmax(z, axis=1) == labels[lo : lo + eval_batch]))
        else:
            sq += float(np.sum((z[:, 0] - labels[lo : lo + eval_batch]) ** 2))
    if task.kind == "duty-cycle-classification":
        return hits / n
    return -float(np.sqrt(sq / n))


EVAL_ID_OFFSET = 1 << 16


def eval_frequency_sweep(
    result: TrainResult,
    deploy_rates_hz,
    n_eval: int = 60,
) -> FrequencySweepReport:
    """Evaluate at each deploy frequency; the SSM retargets its rate, the RNN cannot."""
    task = result.task
    rates = sorted(set(float(r) for r in deploy_rates_hz) | {float(task.base_rate_hz)})
    rows = []
    base_metric = None
    for hz in rates:
        inputs, labels = make_toy_dataset(task, hz, n_eval, id_offset=EVAL_ID_OFFSET)
        r = retarget(task.base_rate_hz, hz) if result.model_kind == "ssm" else 1.0
        metric = evaluate(result, inputs, labels, rate=r)
        rows.append(SweepRow(deploy_hz=hz, rate=r, metric=metric))
        if hz == task.base_rate_hz:
            base_metric = metric
    higher = [row.metric for row in rows if row.deploy_hz > task.base_rate_hz]
    drop = float(np.mean([base_metric - m for m in higher])) if higher else 0.0
    return FrequencySweepReport(rows=rows, performance_drop=drop)


def duty_trainer_preset(seed: int = 0, alpha: float | None = None, h2: H2Config | None = None) -> TrainConfig:
    """Tuned toy-scale hyperparameters for the duty-cycle task (overrides the
    paper-scale default learning rate)."""
    return TrainConfig(
        batch=8,
        mixed_fraction=0.5,
        lr=8e-3,
        steps=500,
        seed=seed,
        bandlimit=None if alpha is None else BandlimitConfig(alpha=alpha),
        h2=h2,
    )


def save_model(path, result: TrainResult) -> None:
    """Flat binary model file: magic, version, JSON metadata, named f64/c128 blocks."""
    meta = {
        "model_kind": result.model_kind,
        "task": asdict(result.task),
        "config": _config_meta(result.config),
        "final_loss": result.loss_curve[-1] if result.loss_curve else None,
    }
    blob = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<II", 1, len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(result.params)))
        for key in sorted(result.params):
            arr = result.params[key]
            code = 1 if np.iscomplexobj(arr) else 0
            payload = np.ascontiguousarray(arr, dtype="<c16" if code else "<f8").tobytes()
            kb = key.encode("utf-8")
            fh.write(struct.pack("<H", len(kb)))
            fh.write(kb)
            fh.write(struct.pack(f"<BB{arr.ndim}I", code, arr.ndim, *arr.shape))
            fh.write(payload)


def _config_meta(cfg: TrainConfig) -> dict:
    meta = asdict(cfg)
    meta["h2"] = None if cfg.h2 is None else asdict(cfg.h2)
    meta["bandlimit"] = None if cfg.bandlimit is None else asdict(cfg.bandlimit)
    return meta


def load_model(path) -> TrainResult:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ValueError("bad model file magic")
    off = len(MODEL_MAGIC)
    version, blob_len = struct.unpack_from("<II", data, off)
    if version != 1:
        raise ValueError(f"unsupported model file version {version}")
    off += 8
    meta = json.loads(data[off : off + blob_len].decode("utf-8"))
    off += blob_len
    (n_params,) = struct.unpack_from("<I", data, off)
    off += 4
    params: dict[str, np.ndarray] = {}
    for _ in range(n_params):
        (klen,) = struct.unpack_from("<H", data, off)
        off += 2
        key = data[off : off + klen].decode("utf-8")
        off += klen
        code, ndim = struct.unpack_from("<BB", data, off)
        off += 2
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        count = int(np.prod(shape, dtype=np.int64))
        dtype = "<c16" if code else "<f8"
        itemsize = 16 if code else 8
        params[key] = np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(shape).copy()
        off += itemsize * count
    task = ToyTask(**meta["task"])
    cfg_meta = dict(meta["config"])
    cfg_meta["h2"] = None if cfg_meta["h2"] is None else H2Config(**cfg_meta["h2"])
    cfg_meta["bandlimit"] = None if cfg_meta["bandlimit"] is None else BandlimitConfig(**cfg_meta["bandlimit"])
    cfg = TrainConfig(**cfg_meta)
    return TrainResult(model_kind=meta["model_kind"], params=params, loss_curve=[], task=task, config=cfg)
