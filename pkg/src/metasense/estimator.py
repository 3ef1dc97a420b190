"""Field estimator: fc -> deconv -> conv -> conv network, trained from scratch.

Maps an L x N measurement matrix to an N_s x M condition-field estimate.
Everything here is plain numpy: forward, analytic backprop, minibatch
gradient descent.  The spatial dimension is the flattened cell index; the
deconvolution upsamples a coarse latent map to M cells per condition.

Measurements are normalized per entry (mean/std over the training split)
and conditions per row to [-1, 1] by min-max, so kelvin and humidity
contribute comparably to the loss.  The optimized loss is the plain sum of
squared normalized errors; RMSE in physical units is reported separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .errors import ConfigError, ShapeError, TrainingError

LEAKY_SLOPE = 0.01
_STD_FLOOR = 1e-9
_SPAN_FLOOR = 1e-9
PARAMS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class NetworkArch:
    """Layer plan; derived sizes are computed so shapes compose exactly.

    The fc layer widens to fc_width = ceil(fc_out / m_in) * m_in so its
    output reshapes to (c0, m_in); the deconvolution upsamples m_in to
    m_up = (m_in - 1) * stride + kernel, and m_up * conv2_channels must
    equal N_s * M.
    """

    input_dims: tuple            # (L, N)
    output_dims: tuple           # (N_s, M)
    fc_out: int = 1024
    deconv: tuple = (16, 4, 2)   # channels, kernel, stride
    conv1: tuple = (16, 3)       # channels, kernel (odd)
    conv2: tuple = (8, 3)        # channels, kernel (odd)
    m_up: int = field(init=False, default=0)
    m_in: int = field(init=False, default=0)
    c0: int = field(init=False, default=0)
    fc_width: int = field(init=False, default=0)

    def __post_init__(self):
        l, n = self.input_dims
        n_s, m = self.output_dims
        d_ch, d_k, d_s = self.deconv
        c1_ch, c1_k = self.conv1
        c2_ch, c2_k = self.conv2
        if min(l, n, n_s, m, self.fc_out, d_ch, d_k, d_s, c1_ch, c1_k, c2_ch, c2_k) < 1:
            raise ConfigError("all architecture sizes must be positive")
        if c1_k % 2 == 0 or c2_k % 2 == 0:
            raise ConfigError("conv kernels must be odd for same-size padding")
        if (n_s * m) % c2_ch:
            raise ConfigError(f"conv2 channels {c2_ch} must divide N_s*M = {n_s * m}")
        m_up = (n_s * m) // c2_ch
        if m_up < d_k or (m_up - d_k) % d_s:
            raise ConfigError(f"deconv (kernel {d_k}, stride {d_s}) cannot produce length {m_up}")
        m_in = (m_up - d_k) // d_s + 1
        c0 = -(-self.fc_out // m_in)  # ceil
        object.__setattr__(self, "m_up", m_up)
        object.__setattr__(self, "m_in", m_in)
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "fc_width", c0 * m_in)

    @property
    def n_inputs(self) -> int:
        return self.input_dims[0] * self.input_dims[1]

    def layer_shapes(self) -> Dict[str, tuple]:
        d_ch, d_k, _ = self.deconv
        c1_ch, c1_k = self.conv1
        c2_ch, c2_k = self.conv2
        return {
            "fc_w": (self.fc_width, self.n_inputs), "fc_b": (self.fc_width,),
            "dc_w": (d_ch, self.c0, d_k), "dc_b": (d_ch,),
            "c1_w": (c1_ch, d_ch, c1_k), "c1_b": (c1_ch,),
            "c2_w": (c2_ch, c1_ch, c2_k), "c2_b": (c2_ch,),
        }

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.layer_shapes().values())


@dataclass(frozen=True, eq=False)
class EstimatorParams:
    """Learnable weights plus the normalization statistics they assume."""

    weights: Dict[str, np.ndarray]
    p_mean: np.ndarray   # (L, N) per-entry measurement mean
    p_std: np.ndarray    # (L, N) per-entry measurement std, floored > 0
    c_min: np.ndarray    # (N_s,) per-condition training minimum
    c_max: np.ndarray    # (N_s,)

    def __post_init__(self):
        for k, v in self.weights.items():
            if not np.all(np.isfinite(v)):
                raise ConfigError(f"non-finite values in weight tensor {k}")
        if np.any(self.p_std <= 0):
            raise ConfigError("measurement std entries must be positive")

    def copy(self) -> "EstimatorParams":
        return EstimatorParams({k: v.copy() for k, v in self.weights.items()},
                               self.p_mean.copy(), self.p_std.copy(),
                               self.c_min.copy(), self.c_max.copy())


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    weight_init_scale: float = 1.0
    momentum: float = 0.0  # 0 = plain gradient descent per the update rule

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError("lr must be >= 0")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")


# ---------------------------------------------------------------- layers

def leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def dleaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (B, n_in) -> (B, n_out)."""
    return x @ w.T + b


def fc_backward(dz: np.ndarray, x: np.ndarray, w: np.ndarray):
    dw = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ w
    return dw, db, dx


def deconv1d_forward(a: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int) -> np.ndarray:
    """Fractionally-strided correlation.  a: (B, C_in, m_in), w: (C_out,
    C_in, k) -> (B, C_out, (m_in-1)*stride + k); out[t] sums w[.,.,kap] * a[.,.,i]
    over i*stride + kap = t."""
    bsz, _, m_in = a.shape
    c_out, _, k = w.shape
    m_up = (m_in - 1) * stride + k
    z = np.broadcast_to(b[None, :, None], (bsz, c_out, m_up)).copy()
    for kap in range(k):
        # output slots kap, kap+stride, ..., one per input position
        z[:, :, kap : kap + (m_in - 1) * stride + 1 : stride] += np.einsum(
            "bci,oc->boi", a, w[:, :, kap])
    return z


def deconv1d_backward(dz: np.ndarray, a: np.ndarray, w: np.ndarray, stride: int):
    _, _, m_in = a.shape
    _, _, k = w.shape
    dw = np.empty_like(w)
    da = np.zeros_like(a)
    hi = (m_in - 1) * stride + 1
    for kap in range(k):
        dz_slice = dz[:, :, kap : kap + hi : stride]  # (B, C_out, m_in)
        dw[:, :, kap] = np.einsum("boi,bci->oc", dz_slice, a)
        da += np.einsum("boi,oc->bci", dz_slice, w[:, :, kap])
    db = dz.sum(axis=(0, 2))
    return dw, db, da


def conv1d_forward(a: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Same-size 1D correlation with odd kernel.  a: (B, C_in, m) -> (B, C_out, m)."""
    _, _, k = w.shape
    pad = (k - 1) // 2
    ap = np.pad(a, ((0, 0), (0, 0), (pad, pad)))
    m = a.shape[2]
    z = np.broadcast_to(b[None, :, None], (a.shape[0], w.shape[0], m)).copy()
    for kap in range(k):
        z += np.einsum("bct,oc->bot", ap[:, :, kap : kap + m], w[:, :, kap])
    return z


def conv1d_backward(dz: np.ndarray, a: np.ndarray, w: np.ndarray):
    _, _, k = w.shape
    pad = (k - 1) // 2
    m = a.shape[2]
    ap = np.pad(a, ((0, 0), (0, 0), (pad, pad)))
    dw = np.empty_like(w)
    dap = np.zeros_like(ap)
    for kap in range(k):
        dw[:, :, kap] = np.einsum("bot,bct->oc", dz, ap[:, :, kap : kap + m])
        dap[:, :, kap : kap + m] += np.einsum("bot,oc->bct", dz, w[:, :, kap])
    da = dap[:, :, pad : pad + m] if pad else dap
    db = dz.sum(axis=(0, 2))
    return dw, db, da


# ------------------------------------------------------- normalization

def normalize_measurements(params: EstimatorParams, p: np.ndarray) -> np.ndarray:
    return (p - params.p_mean) / params.p_std


def normalize_conditions(params: EstimatorParams, c: np.ndarray) -> np.ndarray:
    span = np.maximum(params.c_max - params.c_min, _SPAN_FLOOR)
    shape = (-1, 1) if c.ndim == 2 else (1, -1, 1)
    return 2.0 * (c - params.c_min.reshape(shape)) / span.reshape(shape) - 1.0


def denormalize_conditions(params: EstimatorParams, cn: np.ndarray) -> np.ndarray:
    span = np.maximum(params.c_max - params.c_min, _SPAN_FLOOR)
    shape = (-1, 1) if cn.ndim == 2 else (1, -1, 1)
    return (cn + 1.0) * span.reshape(shape) / 2.0 + params.c_min.reshape(shape)


# ------------------------------------------------------ forward/backward

def _forward_batch(weights: Dict[str, np.ndarray], arch: NetworkArch,
                   xn: np.ndarray, keep_cache: bool = False):
    """xn: (B, L*N) normalized inputs -> (B, N_s, M) normalized outputs."""
    _, _, d_s = arch.deconv
    z1 = fc_forward(xn, weights["fc_w"], weights["fc_b"])
    a1 = leaky(z1).reshape(-1, arch.c0, arch.m_in)
    z2 = deconv1d_forward(a1, weights["dc_w"], weights["dc_b"], d_s)
    a2 = leaky(z2)
    z3 = conv1d_forward(a2, weights["c1_w"], weights["c1_b"])
    a3 = leaky(z3)
    z4 = conv1d_forward(a3, weights["c2_w"], weights["c2_b"])  # final layer affine
    out = z4.reshape(-1, *arch.output_dims)
    cache = (xn, z1, a1, z2, a2, z3, a3) if keep_cache else None
    return out, cache


def _backward_batch(weights: Dict[str, np.ndarray], arch: NetworkArch,
                    cache, dout: np.ndarray) -> Dict[str, np.ndarray]:
    xn, z1, a1, z2, a2, z3, a3 = cache
    _, _, d_s = arch.deconv
    bsz = dout.shape[0]
    dz4 = dout.reshape(bsz, arch.conv2[0], arch.m_up)
    g = {}
    g["c2_w"], g["c2_b"], da3 = conv1d_backward(dz4, a3, weights["c2_w"])
    dz3 = da3 * dleaky(z3)
    g["c1_w"], g["c1_b"], da2 = conv1d_backward(dz3, a2, weights["c1_w"])
    dz2 = da2 * dleaky(z2)
    g["dc_w"], g["dc_b"], da1 = deconv1d_backward(dz2, a1, weights["dc_w"], d_s)
    dz1 = da1.reshape(bsz, arch.fc_width) * dleaky(z1)
    g["fc_w"], g["fc_b"], _ = fc_backward(dz1, xn, weights["fc_w"])
    return g


def _as_matrix(m) -> np.ndarray:
    values = getattr(m, "values", m)
    return np.asarray(values, dtype=float)


def forward(params: EstimatorParams, arch: NetworkArch, m) -> np.ndarray:
    """Estimate the condition field, in physical units, from one matrix."""
    v = _as_matrix(m)
    if v.shape != tuple(arch.input_dims):
        raise ShapeError(f"measurement shape {v.shape} != arch input {arch.input_dims}")
    xn = normalize_measurements(params, v).reshape(1, -1)
    yn, _ = _forward_batch(params.weights, arch, xn)
    return denormalize_conditions(params, yn[0])


def loss(est: np.ndarray, truth: np.ndarray) -> float:
    """Sum of squared errors over all cells and conditions."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape:
        raise ShapeError(f"estimate shape {est.shape} != truth shape {truth.shape}")
    d = est - truth
    return float(np.sum(d * d))


def backward(params: EstimatorParams, arch: NetworkArch, batch_p: np.ndarray,
             batch_truth: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of the batch-mean normalized loss w.r.t. every weight.

    batch_p: (B, L, N) raw measurements; batch_truth: (B, N_s, M) raw
    condition fields.
    """
    batch_p = np.asarray(batch_p, dtype=float)
    batch_truth = np.asarray(batch_truth, dtype=float)
    if batch_p.ndim != 3 or batch_p.shape[0] == 0:
        raise ShapeError("batch must be nonempty with shape (B, L, N)")
    if batch_p.shape[1:] != tuple(arch.input_dims) or batch_truth.shape[1:] != tuple(arch.output_dims):
        raise ShapeError("batch shapes do not match the architecture")
    xn = normalize_measurements(params, batch_p).reshape(batch_p.shape[0], -1)
    tn = normalize_conditions(params, batch_truth)
    yn, cache = _forward_batch(params.weights, arch, xn, keep_cache=True)
    dout = 2.0 * (yn - tn) / batch_p.shape[0]
    return _backward_batch(params.weights, arch, cache, dout)


# ------------------------------------------------------------- training

def init_params(arch: NetworkArch, scale: float, seed: int,
                p_mean: np.ndarray, p_std: np.ndarray,
                c_min: np.ndarray, c_max: np.ndarray) -> EstimatorParams:
    """Uniform(-scale/sqrt(fan_in), +) weights, zero biases."""
    rng = np.random.default_rng(seed)
    fan_in = {
        "fc_w": arch.n_inputs,
        "dc_w": arch.c0 * arch.deconv[1],
        "c1_w": arch.deconv[0] * arch.conv1[1],
        "c2_w": arch.conv1[0] * arch.conv2[1],
    }
    weights = {}
    for name, shape in arch.layer_shapes().items():
        if name.endswith("_b"):
            weights[name] = np.zeros(shape)
        else:
            lim = scale / np.sqrt(fan_in[name])
            weights[name] = rng.uniform(-lim, lim, size=shape)
    return EstimatorParams(weights, np.asarray(p_mean, float), np.asarray(p_std, float),
                           np.asarray(c_min, float), np.asarray(c_max, float))


def _norm_stats(train_p: np.ndarray, train_c: np.ndarray):
    p_mean = train_p.mean(axis=0)
    p_std = np.maximum(train_p.std(axis=0), _STD_FLOOR)
    c_min = train_c.min(axis=(0, 2))
    c_max = train_c.max(axis=(0, 2))
    return p_mean, p_std, c_min, c_max


def _mean_loss(weights, arch, params, xn, tn) -> float:
    yn, _ = _forward_batch(weights, arch, xn)
    return float(np.mean(np.sum((yn - tn) ** 2, axis=(1, 2))))


@dataclass
class TrainHistory:
    train_loss: list
    val_loss: list
    best_epoch: int = 0


def train_verbose(arch: NetworkArch, measurements: np.ndarray, truths: np.ndarray,
                  cfg: TrainConfig) -> Tuple[EstimatorParams, TrainHistory]:
    """Minibatch gradient descent; returns the lowest-validation snapshot.

    measurements: (n, L, N); truths: (n, N_s, M).  The last ~10% of a
    seeded shuffle is held out; normalization stats come from the train
    split only.
    """
    p = np.asarray(measurements, dtype=float)
    c = np.asarray(truths, dtype=float)
    if p.ndim != 3 or p.shape[0] == 0:
        raise ConfigError("training set must be nonempty")
    if p.shape[0] != c.shape[0]:
        raise ConfigError("measurements and truths differ in sample count")
    n = p.shape[0]
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(n)
    n_val = max(1, int(round(0.1 * n))) if n >= 2 else 0
    val_idx, tr_idx = order[n - n_val:], order[: n - n_val]
    params = init_params(arch, cfg.weight_init_scale, cfg.seed,
                         *_norm_stats(p[tr_idx], c[tr_idx]))
    xn_tr = normalize_measurements(params, p[tr_idx]).reshape(len(tr_idx), -1)
    tn_tr = normalize_conditions(params, c[tr_idx])
    if n_val:
        xn_val = normalize_measurements(params, p[val_idx]).reshape(n_val, -1)
        tn_val = normalize_conditions(params, c[val_idx])
    else:
        xn_val, tn_val = xn_tr, tn_tr

    weights = params.weights
    velocity = {k: np.zeros_like(v) for k, v in weights.items()} if cfg.momentum else None
    best = {k: v.copy() for k, v in weights.items()}
    best_val = _mean_loss(weights, arch, params, xn_val, tn_val)
    history = TrainHistory(train_loss=[], val_loss=[best_val])
    n_tr = len(tr_idx)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n_tr)
        for start in range(0, n_tr, cfg.batch_size):
            sl = perm[start : start + cfg.batch_size]
            xb, tb = xn_tr[sl], tn_tr[sl]
            yn, cache = _forward_batch(weights, arch, xb, keep_cache=True)
            dout = 2.0 * (yn - tb) / len(sl)
            grads = _backward_batch(weights, arch, cache, dout)
            for k in weights:
                if velocity is None:
                    weights[k] -= cfg.lr * grads[k]
                else:
                    velocity[k] = cfg.momentum * velocity[k] + grads[k]
                    weights[k] -= cfg.lr * velocity[k]
        tr_loss = _mean_loss(weights, arch, params, xn_tr, tn_tr)
        val_loss = _mean_loss(weights, arch, params, xn_val, tn_val)
        if not (np.isfinite(tr_loss) and np.isfinite(val_loss)):
            raise TrainingError(f"loss diverged at epoch {epoch + 1}")
        history.train_loss.append(tr_loss)
        history.val_loss.append(val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best = {k: v.copy() for k, v in weights.items()}
            history.best_epoch = epoch + 1
    final = EstimatorParams(best, params.p_mean, params.p_std, params.c_min, params.c_max)
    return final, history


def train(arch: NetworkArch, measurements: np.ndarray, truths: np.ndarray,
          cfg: TrainConfig) -> EstimatorParams:
    params, _ = train_verbose(arch, measurements, truths, cfg)
    return params


# ----------------------------------------------------------- evaluation

@dataclass(frozen=True, eq=False)
class EvalReport:
    rmse: np.ndarray        # (N_s,) physical units
    mae: np.ndarray         # (N_s,)
    cell_rmse: np.ndarray   # (N_s, M)
    n_samples: int


def evaluate(params: EstimatorParams, arch: NetworkArch, measurements: np.ndarray,
             truths: np.ndarray) -> EvalReport:
    p = np.asarray(measurements, dtype=float)
    c = np.asarray(truths, dtype=float)
    if p.ndim != 3 or p.shape[0] == 0:
        raise ConfigError("evaluation set must be nonempty")
    xn = normalize_measurements(params, p).reshape(p.shape[0], -1)
    yn, _ = _forward_batch(params.weights, arch, xn)
    est = denormalize_conditions(params, yn)
    err = est - c
    rmse = np.sqrt(np.mean(err ** 2, axis=(0, 2)))
    mae = np.mean(np.abs(err), axis=(0, 2))
    cell_rmse = np.sqrt(np.mean(err ** 2, axis=0))
    return EvalReport(rmse=rmse, mae=mae, cell_rmse=cell_rmse, n_samples=p.shape[0])


def predict_batch(params: EstimatorParams, arch: NetworkArch,
                  measurements: np.ndarray) -> np.ndarray:
    p = np.asarray(measurements, dtype=float)
    xn = normalize_measurements(params, p).reshape(p.shape[0], -1)
    yn, _ = _forward_batch(params.weights, arch, xn)
    return denormalize_conditions(params, yn)


def write_eval_csv(path, report: EvalReport, condition_names=("temperature", "humidity"),
                   header_lines=()) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["condition", "rmse", "mae", "n_samples"])
        for i in range(report.rmse.size):
            name = condition_names[i] if i < len(condition_names) else f"condition_{i}"
            w.writerow([name, repr(float(report.rmse[i])), repr(float(report.mae[i])),
                        report.n_samples])


# ---------------------------------------------------------- persistence

def save_params(path, params: EstimatorParams, arch: NetworkArch,
                train_config: TrainConfig = None) -> None:
    """Versioned npz container: weight arrays + JSON header."""
    header = {
        "format_version": PARAMS_FORMAT_VERSION,
        "arch": {
            "input_dims": list(arch.input_dims),
            "output_dims": list(arch.output_dims),
            "fc_out": arch.fc_out,
            "deconv": list(arch.deconv),
            "conv1": list(arch.conv1),
            "conv2": list(arch.conv2),
        },
        "train_config": None if train_config is None else {
            "lr": train_config.lr, "epochs": train_config.epochs,
            "batch_size": train_config.batch_size, "seed": train_config.seed,
            "weight_init_scale": train_config.weight_init_scale,
            "momentum": train_config.momentum,
        },
    }
    arrays = {f"w_{k}": v for k, v in params.weights.items()}
    arrays.update(p_mean=params.p_mean, p_std=params.p_std,
                  c_min=params.c_min, c_max=params.c_max)
    arrays["header"] = np.asarray(json.dumps(header, sort_keys=True))
    # written by hand instead of np.savez so the zip carries no timestamps
    # and reruns are byte-identical
    import io
    import zipfile

    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as z:
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arrays[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            z.writestr(info, buf.getvalue())


def load_params(path) -> Tuple[EstimatorParams, NetworkArch, dict]:
    with np.load(path, allow_pickle=False) as z:
        # the header may round-trip as 0-d or length-1; item() covers both
        header = json.loads(z["header"].item())
        if header.get("format_version") != PARAMS_FORMAT_VERSION:
            raise ConfigError(f"unsupported params format: {header.get('format_version')}")
        a = header["arch"]
        arch = NetworkArch(input_dims=tuple(a["input_dims"]), output_dims=tuple(a["output_dims"]),
                           fc_out=a["fc_out"], deconv=tuple(a["deconv"]),
                           conv1=tuple(a["conv1"]), conv2=tuple(a["conv2"]))
        weights = {k[2:]: z[k] for k in z.files if k.startswith("w_")}
        params = EstimatorParams(weights, z["p_mean"], z["p_std"], z["c_min"], z["c_max"])
    return params, arch, header
