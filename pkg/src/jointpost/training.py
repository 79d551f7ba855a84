"""Online amortized training: streaming simulation into a ring buffer, the
combined mask + diffusion loss, RAdam with global-norm clipping, EMA shadow
parameters, and a self-contained binary checkpoint format.

Checkpoint layout (little-endian):
    bytes 0..7   magic b"JPNET001"
    bytes 8..11  uint32 header length H
    bytes 12..   UTF-8 JSON header of length H, then raw tensor data
The header carries the net config, task description, training step, and a
tensor index (name, group, dtype, shape, offset, nbytes) for the raw region;
save/load round-trips are bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
import threading
import time
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .model_space import ComplexityPrior
from .nets import InferenceNet, NetConfig, alpha_beta, build_net
from .param_space import ParamLayout
from .simulators import LinearGaussianTask, SymbolicTask, sample_joint

_MAGIC = b"JPNET001"


class BufferNotReady(RuntimeError):
    """Raised when a fetch or step asks for more samples than the buffer holds."""


class CheckpointError(RuntimeError):
    """Raised on magic/version/layout mismatches while loading."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 256
    learning_rate: float = 5e-4
    clip_norm: float = 2.0
    ema_decay: float = 0.999
    buffer_capacity: int = 100_000
    t_min: float = 1e-4
    t_max: float = 80.0
    max_steps: int = 1000
    n_workers: int = 0  # 0 = deterministic in-loop generation
    checkpoint_every: int = 0  # 0 = only at termination
    t_distribution: str = "log_uniform"  # or "log_normal"
    lr_schedule: str = "constant"  # or "cosine"
    lr_floor_fraction: float = 0.05  # cosine decays to this fraction

    def __post_init__(self):
        if self.t_distribution not in ("log_uniform", "log_normal"):
            raise ValueError(
                f"unknown t_distribution {self.t_distribution!r}"
            )
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if not 0.0 < self.lr_floor_fraction <= 1.0:
            raise ValueError("lr_floor_fraction must lie in (0, 1]")
        for name in ("batch_size", "learning_rate", "clip_norm",
                     "buffer_capacity", "t_min", "t_max", "max_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must lie in (0, 1)")


class RingBuffer:
    """Fixed-capacity cyclic store of joint samples; thread-safe."""

    def __init__(self, capacity: int, C: int, d_max: int, n_points: int):
        self.capacity = int(capacity)
        self.lam = np.zeros(capacity, dtype=np.float32)
        self.bits = np.zeros((capacity, C), dtype=np.int8)
        self.z = np.zeros((capacity, d_max), dtype=np.float32)
        self.x = np.zeros((capacity, n_points), dtype=np.float32)
        self.cursor = 0
        self.fill = 0
        self._lock = threading.Lock()

    def push_chunk(self, lam, bits, z, x) -> None:
        n = len(lam)
        if n > self.capacity:
            raise ValueError("chunk larger than buffer capacity")
        with self._lock:
            idx = (self.cursor + np.arange(n)) % self.capacity
            self.lam[idx] = lam
            self.bits[idx] = bits
            self.z[idx] = z
            self.x[idx] = x
            self.cursor = int((self.cursor + n) % self.capacity)
            self.fill = min(self.fill + n, self.capacity)

    def fetch_batch(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample (with replacement) over filled slots, no removal."""
        with self._lock:
            if self.fill == 0:
                raise BufferNotReady("buffer is empty")
            if self.fill < batch_size:
                raise BufferNotReady(
                    f"buffer fill {self.fill} < batch size {batch_size}"
                )
            idx = rng.integers(0, self.fill, size=batch_size)
            return {
                "lam": self.lam[idx].copy(),
                "bits": self.bits[idx].copy(),
                "z": self.z[idx].copy(),
                "x": self.x[idx].copy(),
            }


def sample_chunk(task, prior: ComplexityPrior, rng: np.random.Generator,
                 n: int):
    """n joint draws stacked into arrays ready for the buffer."""
    lam = np.empty(n, dtype=np.float32)
    bits = np.empty((n, task.C), dtype=np.int8)
    z = np.empty((n, task.layout.d_max), dtype=np.float32)
    x = np.empty((n, task.n_points), dtype=np.float32)
    for i in range(n):
        s = sample_joint(task, prior, rng)
        lam[i] = s.lam
        bits[i] = s.mask.bits
        z[i] = s.z
        x[i] = s.x
    return lam, bits, z, x


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def shifted_prev_bits(bits: torch.Tensor) -> torch.Tensor:
    """AR input values: begin-of-sequence marker followed by M_1..M_{C-1}."""
    B, C = bits.shape
    prev = torch.empty(B, C, dtype=torch.long, device=bits.device)
    prev[:, 0] = 2
    prev[:, 1:] = bits[:, :-1].long()
    return prev


def mask_loss(net: InferenceNet, context, bits, lam) -> torch.Tensor:
    """Mean over the batch of the summed per-bit binary cross-entropy."""
    logits = net.mask_logits(context, shifted_prev_bits(bits), lam)
    per_bit = F.binary_cross_entropy_with_logits(
        logits, bits.to(logits.dtype), reduction="none"
    )
    return per_bit.sum(dim=1).mean()


def active_coord_matrix(layout: ParamLayout) -> torch.Tensor:
    """(C, d_max) 0/1 membership of each flat coordinate in each component."""
    M = torch.zeros(layout.n_components, layout.d_max)
    for i in range(layout.n_components):
        M[i, layout.block(i)] = 1.0
    return M


def diffusion_loss(net: InferenceNet, context, z, bits, lam, t, eps,
                   coord_matrix=None) -> torch.Tensor:
    """v-prediction loss restricted to active coordinates.

    t and eps are passed in (drawn per sample by the caller) so the loss is a
    pure function, which keeps gradient checks and replays deterministic.
    """
    if coord_matrix is None:
        coord_matrix = active_coord_matrix(net.layout).to(z.dtype)
    a, b = alpha_beta(t)
    z_t = z + t[:, None] * eps
    v_target = a[:, None] * eps - b[:, None] * z
    v_hat = net.v_predict(context, z_t, t, bits, lam)
    active = bits.to(z.dtype) @ coord_matrix
    return (((v_hat - v_target) ** 2) * active).sum(dim=1).mean()


def draw_t(batch: int, cfg: TrainConfig, gen: torch.Generator,
           dtype=torch.float32) -> torch.Tensor:
    """Diffusion times on [t_min, t_max], log-uniform by default."""
    lo, hi = np.log(cfg.t_min), np.log(cfg.t_max)
    if cfg.t_distribution == "log_normal":
        # EDM-style lognormal, clamped into the training interval
        logt = -1.2 + 1.2 * torch.randn(batch, generator=gen, dtype=dtype)
        return torch.exp(logt.clamp(lo, hi))
    u = torch.rand(batch, generator=gen, dtype=dtype)
    return torch.exp(lo + (hi - lo) * u)


# ---------------------------------------------------------------------------
# Optimizer step and EMA
# ---------------------------------------------------------------------------


def init_ema(net: InferenceNet) -> dict:
    return {
        k: v.detach().clone()
        for k, v in net.state_dict().items()
        if v.dtype.is_floating_point
    }


def update_ema(ema: dict, net: InferenceNet, decay: float) -> None:
    with torch.no_grad():
        sd = net.state_dict()
        for k, shadow in ema.items():
            shadow.mul_(decay).add_(sd[k], alpha=1.0 - decay)


@dataclass
class LossReport:
    step: int
    mask_loss: float
    diffusion_loss: float
    grad_norm: float

    @property
    def total(self) -> float:
        return self.mask_loss + self.diffusion_loss


def scheduled_lr(cfg: TrainConfig, step: int) -> float:
    """Learning rate for `step` under the configured schedule."""
    if cfg.lr_schedule == "constant":
        return cfg.learning_rate
    frac = min(max(step, 0), cfg.max_steps) / cfg.max_steps
    floor = cfg.learning_rate * cfg.lr_floor_fraction
    return floor + 0.5 * (cfg.learning_rate - floor) * (
        1.0 + math.cos(math.pi * frac)
    )


def train_step(net, optimizer, ema, buffer: RingBuffer, cfg: TrainConfig,
               rng: np.random.Generator, torch_gen: torch.Generator,
               step: int, coord_matrix=None) -> LossReport:
    """One optimization step on a freshly fetched batch."""
    lr = scheduled_lr(cfg, step)
    for group in optimizer.param_groups:
        group["lr"] = lr
    batch = buffer.fetch_batch(cfg.batch_size, rng)
    x = torch.from_numpy(batch["x"])
    bits = torch.from_numpy(batch["bits"])
    z = torch.from_numpy(batch["z"])
    lam = torch.from_numpy(batch["lam"])
    t = draw_t(cfg.batch_size, cfg, torch_gen)
    eps = torch.randn(z.shape, generator=torch_gen, dtype=z.dtype)

    context = net.encode(x)
    lm = mask_loss(net, context, bits, lam)
    ld = diffusion_loss(net, context, z, bits, lam, t, eps, coord_matrix)
    loss = lm + ld
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    gnorm = torch.nn.utils.clip_grad_norm_(net.parameters(), cfg.clip_norm)
    optimizer.step()
    update_ema(ema, net, cfg.ema_decay)
    return LossReport(step, float(lm.detach()), float(ld.detach()),
                      float(gnorm))


# ---------------------------------------------------------------------------
# Trainer: producers + consumer loop
# ---------------------------------------------------------------------------


class Trainer:
    """Owns net, optimizer state, EMA, and the simulation pipeline.

    With n_workers = 0 the trainer generates one batch-size chunk per step in
    the training thread, making runs exactly reproducible from the seed; with
    workers, producer threads refresh the buffer concurrently.
    """

    def __init__(self, task, prior: ComplexityPrior, net: InferenceNet,
                 cfg: TrainConfig, seed: int = 0):
        self.task = task
        self.prior = prior
        self.net = net
        self.cfg = cfg
        self.seed = seed
        self.buffer = RingBuffer(
            cfg.buffer_capacity, task.C, task.layout.d_max, task.n_points
        )
        self.optimizer = torch.optim.RAdam(net.parameters(),
                                           lr=cfg.learning_rate)
        self.ema = init_ema(net)
        self.step = 0
        self.fetch_rng = np.random.default_rng(seed + 1)
        self.torch_gen = torch.Generator().manual_seed(seed + 2)
        self.coord_matrix = active_coord_matrix(net.layout)
        self._stop = threading.Event()
        self._workers: list[threading.Thread] = []
        self.squash = bool(getattr(task, "encoder_squash", False))

    def _worker_loop(self, widx: int):
        rng = np.random.default_rng(self.seed + 1000 + widx)
        chunk = self.cfg.batch_size
        while not self._stop.is_set():
            self.buffer.push_chunk(*sample_chunk(self.task, self.prior, rng,
                                                 chunk))
            if self.buffer.fill >= self.buffer.capacity:
                # buffer saturated; keep refreshing but yield
                time.sleep(0.0)

    def start_workers(self):
        for w in range(self.cfg.n_workers):
            th = threading.Thread(target=self._worker_loop, args=(w,),
                                  daemon=True)
            th.start()
            self._workers.append(th)

    def stop_workers(self):
        self._stop.set()
        for th in self._workers:
            th.join(timeout=5.0)
        self._workers.clear()

    def _prepare_x(self, x: np.ndarray) -> np.ndarray:
        return np.arcsinh(x) if self.squash else x

    def run(self, steps: int, loss_log=None, deterministic=None) -> list:
        """Run `steps` optimization steps, returning per-step loss reports."""
        deterministic = (
            self.cfg.n_workers == 0 if deterministic is None else deterministic
        )
        if self.cfg.n_workers > 0 and not self._workers:
            self.start_workers()
        sim_rng = np.random.default_rng(self.seed)
        reports = []
        t0 = time.monotonic()
        for _ in range(steps):
            if deterministic:
                lam, bits, z, x = sample_chunk(
                    self.task, self.prior, sim_rng, self.cfg.batch_size
                )
                self.buffer.push_chunk(lam, bits, z, self._prepare_x(x))
            else:
                while self.buffer.fill < self.cfg.batch_size:
                    time.sleep(0.01)
            report = train_step(
                self.net, self.optimizer, self.ema, self.buffer, self.cfg,
                self.fetch_rng, self.torch_gen, self.step,
                self.coord_matrix,
            )
            self.step += 1
            report.step = self.step
            reports.append(report)
            if loss_log is not None:
                wall = 0.0 if deterministic else time.monotonic() - t0
                loss_log.write(
                    f"{report.step} {report.mask_loss:.17g} "
                    f"{report.diffusion_loss:.17g} {wall:.3f}\n"
                )
        if self.cfg.n_workers > 0:
            self.stop_workers()
        return reports

    def run_with_prepared_buffer(self, steps: int) -> list:
        """Steps against the current buffer contents only (no refresh)."""
        reports = []
        for _ in range(steps):
            report = train_step(
                self.net, self.optimizer, self.ema, self.buffer, self.cfg,
                self.fetch_rng, self.torch_gen, self.step, self.coord_matrix,
            )
            self.step += 1
            reports.append(report)
        return reports


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def task_to_dict(task) -> dict:
    if isinstance(task, SymbolicTask):
        return {
            "kind": "symbolic",
            "library": [
                {
                    "id": s.id,
                    "token": s.token,
                    "kind": s.kind,
                    "expression_key": s.expression_key,
                    "bounds": [list(ab) for ab in s.bounds],
                }
                for s in task.library
            ],
            "grid": list(map(float, task.grid)),
            "encoder_squash": task.encoder_squash,
        }
    if isinstance(task, LinearGaussianTask):
        return {
            "kind": "linear_gaussian",
            "A": np.asarray(task.A).tolist(),
            "sigma": float(task.sigma),
        }
    raise TypeError(f"cannot serialize task of type {type(task)!r}")


def task_from_dict(d: dict):
    from .components import ComponentSpec  # local import to avoid cycle noise

    if d["kind"] == "symbolic":
        lib = tuple(
            ComponentSpec(
                id=e["id"], token=e["token"], kind=e["kind"],
                expression_key=e["expression_key"],
                bounds=tuple(tuple(ab) for ab in e["bounds"]),
            )
            for e in d["library"]
        )
        return SymbolicTask(
            library=lib,
            grid=np.asarray(d["grid"], dtype=np.float64),
            encoder_squash=bool(d.get("encoder_squash", True)),
        )
    if d["kind"] == "linear_gaussian":
        return LinearGaussianTask(A=np.asarray(d["A"]), sigma=d["sigma"])
    raise CheckpointError(f"unknown task kind {d['kind']!r}")


_DTYPES = {
    "float32": torch.float32,
    "float64": torch.float64,
    "int64": torch.int64,
    "int8": torch.int8,
    "bool": torch.bool,
    "uint8": torch.uint8,
}


def _tensor_bytes(t: torch.Tensor) -> bytes:
    return t.detach().contiguous().cpu().numpy().tobytes()


def checkpoint_save(path, net: InferenceNet, ema: dict, task, step: int,
                    train_config: TrainConfig | None = None) -> None:
    groups = {"params": dict(net.state_dict()), "ema": ema}
    index = []
    blobs = []
    offset = 0
    for gname, tensors in groups.items():
        for name, t in tensors.items():
            raw = _tensor_bytes(t)
            index.append(
                {
                    "name": name,
                    "group": gname,
                    "dtype": str(t.dtype).removeprefix("torch."),
                    "shape": list(t.shape),
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            blobs.append(raw)
            offset += len(raw)
    header = {
        "version": 1,
        "net_config": asdict(net.cfg),
        "layout_dims": list(net.layout.dims),
        "n_points": net.n_points,
        "C": net.C,
        "step": int(step),
        "task": task_to_dict(task),
        "train_config": asdict(train_config) if train_config else None,
        "tensors": index,
    }
    hbytes = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(hbytes)))
        fh.write(hbytes)
        for raw in blobs:
            fh.write(raw)


def checkpoint_load(path):
    """Returns (net, ema dict, task, step, header)."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"corrupt header: {e}") from e
        if header.get("version") != 1:
            raise CheckpointError(f"unsupported version {header.get('version')}")
        data = fh.read()
    task = task_from_dict(header["task"])
    if list(task.layout.dims) != header["layout_dims"]:
        raise CheckpointError(
            f"task layout {list(task.layout.dims)} != stored "
            f"{header['layout_dims']}"
        )
    cfg = NetConfig(**header["net_config"])
    net = build_net(cfg, task.layout, header["n_points"], header["C"], seed=0)
    params: dict = {}
    ema: dict = {}
    for entry in header["tensors"]:
        raw = data[entry["offset"] : entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated tensor {entry['name']!r}")
        dtype = _DTYPES[entry["dtype"]]
        arr = np.frombuffer(raw, dtype=str(np.dtype(entry["dtype"]))
                            if entry["dtype"] != "bool" else np.bool_)
        t = torch.from_numpy(arr.copy()).to(dtype).reshape(entry["shape"])
        (params if entry["group"] == "params" else ema)[entry["name"]] = t
    net.load_state_dict(params)
    return net, ema, task, header["step"], header


def net_with_ema(net: InferenceNet, ema: dict) -> InferenceNet:
    """Copy of the net with EMA weights substituted (inference default)."""
    import copy

    out = copy.deepcopy(net)
    sd = out.state_dict()
    for k, v in ema.items():
        sd[k] = v.clone()
    out.load_state_dict(sd)
    return out
