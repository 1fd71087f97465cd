"""Unpaired two-domain translation objective at toy scale.

Two mapper networks translate flattened image patches between a synthetic
domain S and a real domain R; two critics score domain membership. The
trained objective is the least-squares adversarial form plus an L1
cycle-reconstruction term weighted by lam (default 10):

    total = adv_s2r + adv_r2s + lam * cyc

The log-form adversarial losses are provided as a secondary option but are
not used by the training loop (they saturate early and train poorly).

All gradients are hand-derived. Each network records forward passes on a
stack, so a network reused twice in one step (as both mappers are) replays
its backward passes in reverse order of the forwards. cycle_loss uses the
per-element mean, not the sum, so lam is independent of patch size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import substream

DOMAINS = ("S", "R")
DEFAULT_PATCH = 16


class TrainingDivergedError(RuntimeError):
    """Non-finite loss during training; carries the 1-based step."""

    def __init__(self, step: int, message: str = ""):
        super().__init__(message or f"training diverged at step {step}")
        self.step = step


@dataclass
class PatchBatch:
    """Batch of flattened P*P*3 patches with values in [-1, 1]."""

    domain: str
    data: np.ndarray

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}, got {self.domain!r}")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("patch batch must be 2-D (batch, features)")
        if self.data.size and (self.data.min() < -1.0 or self.data.max() > 1.0):
            raise ValueError("patch values outside [-1, 1]")


class _TwoLayerNet:
    """Affine -> tanh -> affine, optionally tanh-squashed at the output.

    forward() pushes its activations on a stack; backward() pops the most
    recent forward, accumulates parameter gradients into .grads, and returns
    the gradient with respect to that forward's input.
    """

    def __init__(self, d_in: int, hidden: int, d_out: int, *, squash: bool,
                 rng: np.random.Generator | None = None):
        if rng is None:
            rng = np.random.default_rng(0)
        self.squash = squash
        self.params = {
            "W1": rng.normal(0.0, 1.0 / np.sqrt(d_in), (hidden, d_in)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0.0, 1.0 / np.sqrt(hidden), (d_out, hidden)),
            "b2": np.zeros(d_out),
        }
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._tape: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def zero_grads(self) -> None:
        for g in self.grads.values():
            g[...] = 0.0
        self._tape.clear()

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        h = np.tanh(x @ self.params["W1"].T + self.params["b1"])
        z2 = h @ self.params["W2"].T + self.params["b2"]
        y = np.tanh(z2) if self.squash else z2
        self._tape.append((x, h, y))
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if not self._tape:
            raise RuntimeError("backward called without a recorded forward")
        x, h, y = self._tape.pop()
        dy = np.asarray(dy, dtype=np.float64)
        dz2 = dy * (1.0 - y * y) if self.squash else dy
        self.grads["W2"] += dz2.T @ h
        self.grads["b2"] += dz2.sum(axis=0)
        dh = dz2 @ self.params["W2"]
        dz1 = dh * (1.0 - h * h)
        self.grads["W1"] += dz1.T @ x
        self.grads["b1"] += dz1.sum(axis=0)
        return dz1 @ self.params["W1"]


class MapperNet(_TwoLayerNet):
    """Patch -> patch map with output squashed to (-1, 1)."""

    def __init__(self, dim: int, hidden: int, rng=None):
        super().__init__(dim, hidden, dim, squash=True, rng=rng)


class CriticNet(_TwoLayerNet):
    """Patch -> scalar score (one value per batch row, unbounded)."""

    def __init__(self, dim: int, hidden: int, rng=None):
        super().__init__(dim, hidden, 1, squash=False, rng=rng)


# --- losses ---------------------------------------------------------------


def _nonempty(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError(f"{name} batch is empty")
    return a


def critic_loss_ls(d_real, d_fake) -> float:
    """Least-squares critic loss: mean((d_real-1)^2) + mean(d_fake^2)."""
    d_real = _nonempty(d_real, "d_real")
    d_fake = _nonempty(d_fake, "d_fake")
    return float(np.mean((d_real - 1.0) ** 2) + np.mean(d_fake**2))


def mapper_adv_loss_ls(d_fake) -> float:
    """Least-squares mapper-side adversarial loss: mean((d_fake-1)^2)."""
    d_fake = _nonempty(d_fake, "d_fake")
    return float(np.mean((d_fake - 1.0) ** 2))


def critic_loss_log(d_real, d_fake) -> float:
    """Log-form critic loss on raw scores via the sigmoid.

    Equals -mean(log sigmoid(d_real)) - mean(log(1 - sigmoid(d_fake))),
    written with softplus for numerical stability.
    """
    d_real = _nonempty(d_real, "d_real")
    d_fake = _nonempty(d_fake, "d_fake")
    softplus = lambda z: np.logaddexp(0.0, z)
    return float(np.mean(softplus(-d_real)) + np.mean(softplus(d_fake)))


def mapper_adv_loss_log(d_fake) -> float:
    """Log-form mapper term mean(log(1 - sigmoid(d_fake))), the quantity the
    mapper minimizes in the log formulation. Unbounded below; kept only for
    parity with the least-squares form, not used in training."""
    d_fake = _nonempty(d_fake, "d_fake")
    return float(-np.mean(np.logaddexp(0.0, d_fake)))


def cycle_loss(s, s_rec, r, r_rec) -> float:
    """Per-element mean |s_rec - s| plus per-element mean |r_rec - r|."""
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    s_rec = np.asarray(s_rec, dtype=np.float64)
    r_rec = np.asarray(r_rec, dtype=np.float64)
    if s.shape != s_rec.shape:
        raise ValueError(f"shape mismatch: s {s.shape} vs s_rec {s_rec.shape}")
    if r.shape != r_rec.shape:
        raise ValueError(f"shape mismatch: r {r.shape} vs r_rec {r_rec.shape}")
    return float(np.mean(np.abs(s_rec - s)) + np.mean(np.abs(r_rec - r)))


@dataclass(frozen=True)
class LossBreakdown:
    adv_s2r: float
    adv_r2s: float
    cyc: float
    total: float
    lam: float


def full_objective(adv_s2r: float, adv_r2s: float, cyc: float, lam: float) -> LossBreakdown:
    """Weighted total: adv_s2r + adv_r2s + lam * cyc."""
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    total = adv_s2r + adv_r2s + lam * cyc
    return LossBreakdown(adv_s2r, adv_r2s, cyc, total, lam)


# --- full-objective gradients ----------------------------------------------


def mapper_objective_grads(g_s2r: MapperNet, g_r2s: MapperNet,
                           d_s: CriticNet, d_r: CriticNet,
                           s: np.ndarray, r: np.ndarray, lam: float):
    """One forward/backward pass of the total objective.

    g_s2r's translations are judged by d_r (does it look like domain R?)
    and vice versa. Returns (LossBreakdown, fake_r, fake_s); afterwards all
    four networks hold the analytic parameter gradients of the total in
    .grads. Critic gradients are those of the mapper-side objective (used by
    the gradient checker; critic training uses critic_step_grads instead).
    """
    for net in (g_s2r, g_r2s, d_s, d_r):
        net.zero_grads()
    fake_r = g_s2r.forward(s)
    fake_s = g_r2s.forward(r)
    s_rec = g_r2s.forward(fake_r)
    r_rec = g_s2r.forward(fake_s)
    d_fr = d_r.forward(fake_r)
    d_fs = d_s.forward(fake_s)

    adv_s2r = mapper_adv_loss_ls(d_fr)
    adv_r2s = mapper_adv_loss_ls(d_fs)
    cyc = cycle_loss(s, s_rec, r, r_rec)
    breakdown = full_objective(adv_s2r, adv_r2s, cyc, lam)

    # Backward in reverse forward order; each net pops its own tape LIFO.
    dfake_s_adv = d_s.backward(2.0 * (d_fs - 1.0) / d_fs.size)
    dfake_r_adv = d_r.backward(2.0 * (d_fr - 1.0) / d_fr.size)
    dfake_s_cyc = g_s2r.backward(lam * np.sign(r_rec - r) / r_rec.size)
    dfake_r_cyc = g_r2s.backward(lam * np.sign(s_rec - s) / s_rec.size)
    g_r2s.backward(dfake_s_adv + dfake_s_cyc)
    g_s2r.backward(dfake_r_adv + dfake_r_cyc)
    return breakdown, fake_r, fake_s


def critic_step_grads(critic: CriticNet, real: np.ndarray, fake: np.ndarray) -> float:
    """Forward/backward of the least-squares critic loss; fills critic.grads."""
    critic.zero_grads()
    d_real = critic.forward(real)
    d_fake = critic.forward(fake)
    loss = critic_loss_ls(d_real, d_fake)
    critic.backward(2.0 * d_fake / d_fake.size)
    critic.backward(2.0 * (d_real - 1.0) / d_real.size)
    return loss


def grad_check(loss_fn, params: dict[str, np.ndarray], eps: float = 1e-5) -> float:
    """Central-difference check of analytic gradients.

    loss_fn(params) must return (value, grads) where grads mirrors the
    params dict; params are perturbed in place one coordinate at a time and
    restored. Returns max over coordinates of
    |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    value, grads = loss_fn(params)
    if not np.isfinite(value):
        raise ValueError(f"loss is not finite: {value}")
    worst = 0.0
    for key in sorted(params):
        flat = params[key].reshape(-1)
        gflat = np.asarray(grads[key]).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            plus, _ = loss_fn(params)
            flat[j] = orig - eps
            minus, _ = loss_fn(params)
            flat[j] = orig
            if not (np.isfinite(plus) and np.isfinite(minus)):
                raise ValueError("loss is not finite under perturbation")
            numeric = (plus - minus) / (2.0 * eps)
            err = abs(gflat[j] - numeric) / max(1e-8, abs(gflat[j]) + abs(numeric))
            worst = max(worst, err)
    return worst


# --- optimizer and training loop -------------------------------------------


class Adam:
    def __init__(self, params: dict[str, np.ndarray], beta1=0.5, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key in sorted(self.params):
            g = grads[key]
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            mhat = self.m[key] / b1c
            vhat = self.v[key] / b2c
            self.params[key] -= lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 10.0
    lr: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    total_steps: int = 2000
    decay_start: int = 1000
    batch_size: int = 32
    seed: int = 7
    patch_size: int = DEFAULT_PATCH
    hidden: int = 32

    def validate(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if self.decay_start > self.total_steps:
            raise ValueError("decay_start must be <= total_steps")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patch_size < 1 or self.hidden < 1:
            raise ValueError("patch_size and hidden must be >= 1")


def learning_rate(config: TrainConfig, step: int) -> float:
    """Constant until decay_start, then linear to exactly 0 at the last step
    (1-based steps)."""
    if step <= config.decay_start:
        return config.lr
    span = config.total_steps - config.decay_start
    return config.lr * (1.0 - (step - config.decay_start) / span)


@dataclass(frozen=True)
class TraceRow:
    step: int
    lr: float
    adv_s2r: float
    adv_r2s: float
    cyc: float
    total: float


@dataclass
class TrainResult:
    config: TrainConfig
    trace: list[TraceRow] = field(default_factory=list)
    nets: dict[str, _TwoLayerNet] = field(default_factory=dict)

    def trace_csv(self) -> str:
        rows = ["step,lr,adv_s2r,adv_r2s,cyc,total"]
        for t in self.trace:
            rows.append(f"{t.step},{t.lr!r},{t.adv_s2r!r},{t.adv_r2s!r},"
                        f"{t.cyc!r},{t.total!r}")
        return "\n".join(rows) + "\n"


def sample_flat_patches(rng: np.random.Generator, batch: int,
                        patch: int = DEFAULT_PATCH) -> PatchBatch:
    """Domain S toy distribution: solid gray patches of random brightness."""
    v = rng.uniform(-0.8, 0.8, size=(batch, 1))
    data = np.repeat(v, patch * patch * 3, axis=1)
    return PatchBatch("S", data)


def sample_striped_patches(rng: np.random.Generator, batch: int,
                           patch: int = DEFAULT_PATCH) -> PatchBatch:
    """Domain R toy distribution: vertical stripes, 2 px period pairs, with
    random bright/dark levels and phase."""
    bright = rng.uniform(0.2, 0.8, size=(batch, 1))
    dark = rng.uniform(-0.8, -0.2, size=(batch, 1))
    phase = rng.integers(0, 4, size=(batch, 1))
    cols = np.arange(patch)[None, :]
    on = ((cols + phase) // 2) % 2 == 0
    row = np.where(on, bright, dark)  # (batch, patch)
    img = np.repeat(row[:, None, :], patch, axis=1)  # rows identical
    data = np.repeat(img[..., None], 3, axis=-1).reshape(batch, -1)
    return PatchBatch("R", data)


def build_nets(config: TrainConfig) -> dict[str, _TwoLayerNet]:
    dim = config.patch_size * config.patch_size * 3
    return {
        "g_s2r": MapperNet(dim, config.hidden, substream(config.seed, 0, "init.g_s2r")),
        "g_r2s": MapperNet(dim, config.hidden, substream(config.seed, 0, "init.g_r2s")),
        "d_s": CriticNet(dim, config.hidden, substream(config.seed, 0, "init.d_s")),
        "d_r": CriticNet(dim, config.hidden, substream(config.seed, 0, "init.d_r")),
    }


def toy_train(config: TrainConfig, sample_s=sample_flat_patches,
              sample_r=sample_striped_patches) -> TrainResult:
    """Alternating mapper/critic training on the toy patch distributions.

    Per step: one Adam update of both mappers on the full objective, then
    one Adam update of each critic on the least-squares critic loss against
    that step's translations. Deterministic given config.seed.

    Raises TrainingDivergedError when any loss goes non-finite.
    """
    config.validate()
    nets = build_nets(config)
    opts = {name: Adam(net.params, config.beta1, config.beta2)
            for name, net in nets.items()}
    result = TrainResult(config=config, nets=nets)

    for step in range(1, config.total_steps + 1):
        lr = learning_rate(config, step)
        s = sample_s(substream(config.seed, step, "batch.S"), config.batch_size,
                     config.patch_size).data
        r = sample_r(substream(config.seed, step, "batch.R"), config.batch_size,
                     config.patch_size).data

        breakdown, fake_r, fake_s = mapper_objective_grads(
            nets["g_s2r"], nets["g_r2s"], nets["d_s"], nets["d_r"],
            s, r, config.lam)
        if not np.isfinite(breakdown.total):
            raise TrainingDivergedError(step)
        opts["g_s2r"].step(nets["g_s2r"].grads, lr)
        opts["g_r2s"].step(nets["g_r2s"].grads, lr)

        loss_dr = critic_step_grads(nets["d_r"], real=r, fake=fake_r)
        loss_ds = critic_step_grads(nets["d_s"], real=s, fake=fake_s)
        if not (np.isfinite(loss_dr) and np.isfinite(loss_ds)):
            raise TrainingDivergedError(step)
        opts["d_r"].step(nets["d_r"].grads, lr)
        opts["d_s"].step(nets["d_s"].grads, lr)

        result.trace.append(TraceRow(step, lr, breakdown.adv_s2r,
                                     breakdown.adv_r2s, breakdown.cyc,
                                     breakdown.total))
    return result
