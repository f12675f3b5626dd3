"""Elman RNN, LSTM and GRU forecasters with a dense multi-output readout.

Each model reads the ``window_len`` input steps from a zero state and maps
the final hidden state to all ``horizon * input_dim`` outputs at once.
Gradients are exact backpropagation through time of the summed squared
error.

Parameter blocks (``H`` hidden units, ``d`` inputs, ``G`` gates):

* ``w_in``  (G*H, d)   input weights, gates stacked row-wise
* ``w_rec`` (G*H, H)   recurrent weights
* ``bias``  (G*H,)
* ``w_out`` (H, n*d)   readout
* ``b_out`` (n*d,)

Gate order is [i, f, g, o] for LSTM and [z, r, n] for GRU.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .numerics import ParamVector
from .windowing import Sample, SampleBatch, as_batch


class CellKind(str, enum.Enum):
    RNN = "RNN"
    LSTM = "LSTM"
    GRU = "GRU"

    @property
    def gates(self) -> int:
        return {"RNN": 1, "LSTM": 4, "GRU": 3}[self.value]

    @classmethod
    def parse(cls, value) -> "CellKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class ModelConfig:
    cell: CellKind
    input_dim: int
    window_len: int
    horizon: int
    hidden_units: int = 10

    def __post_init__(self):
        object.__setattr__(self, "cell", CellKind.parse(self.cell))
        for name in ("input_dim", "hidden_units", "window_len", "horizon"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def output_dim(self) -> int:
        return self.horizon * self.input_dim

    def shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        gh = self.cell.gates * self.hidden_units
        return [
            ("w_in", (gh, self.input_dim)),
            ("w_rec", (gh, self.hidden_units)),
            ("bias", (gh,)),
            ("w_out", (self.hidden_units, self.output_dim)),
            ("b_out", (self.output_dim,)),
        ]


def _sigmoid(a):
    # tanh form: no overflow for large |a|
    return 0.5 * (1.0 + np.tanh(0.5 * a))


class RecurrentModel:
    """A recurrent forecaster: immutable config plus a replaceable ParamVector."""

    def __init__(self, config: ModelConfig, params: ParamVector):
        expected = ParamVector.from_shapes(config.shapes())
        if params.layout != expected.layout:
            raise ValueError("params layout does not match config")
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "RecurrentModel":
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(config.hidden_units)
        p = ParamVector.from_shapes(config.shapes())
        for name in ("w_in", "w_rec", "w_out"):
            block = p[name]
            block[...] = rng.uniform(-bound, bound, size=block.shape)
        return cls(config, p)

    def with_params(self, params: ParamVector) -> "RecurrentModel":
        return RecurrentModel(self.config, params)

    def __repr__(self) -> str:
        c = self.config
        return (f"RecurrentModel({c.cell.value}, d={c.input_dim}, H={c.hidden_units}, "
                f"m={c.window_len}, n={c.horizon}, {len(self.params)} params)")

    # -- checkpoints ----------------------------------------------------

    def to_json(self) -> str:
        c = self.config
        doc = {
            "cell": c.cell.value,
            "input_dim": c.input_dim,
            "hidden_units": c.hidden_units,
            "window_len": c.window_len,
            "horizon": c.horizon,
            "params": [float(v) for v in self.params.data],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "RecurrentModel":
        doc = json.loads(text)
        cfg = ModelConfig(cell=doc["cell"], input_dim=doc["input_dim"], hidden_units=doc["hidden_units"],
                          window_len=doc["window_len"], horizon=doc["horizon"])
        p = ParamVector.from_shapes(cfg.shapes(), np.array(doc["params"], dtype=np.float64))
        return cls(cfg, p)

    # -- forward / backward ----------------------------------------------

    def _check_batch(self, batch: SampleBatch) -> None:
        c = self.config
        if batch.x.shape[1:] != (c.window_len, c.input_dim):
            raise ValueError(f"input block shape {batch.x.shape[1:]} != {(c.window_len, c.input_dim)}")
        if batch.y is not None and batch.y.shape[1:] != (c.horizon, c.input_dim):
            raise ValueError(f"target block shape {batch.y.shape[1:]} != {(c.horizon, c.input_dim)}")

    def _forward(self, x: np.ndarray, p: ParamVector, keep: bool):
        cell = self.config.cell
        w_in, w_rec, bias = p["w_in"], p["w_rec"], p["bias"]
        B, m, _ = x.shape
        H = self.config.hidden_units
        h = np.zeros((B, H))
        # input projections for all steps at once: (m, B, G*H)
        xin = np.einsum("bmd,gd->mbg", x, w_in) + bias
        cache = [] if keep else None
        if cell is CellKind.RNN:
            for s in range(m):
                h_prev = h
                h = np.tanh(xin[s] + h_prev @ w_rec.T)
                if keep:
                    cache.append((h_prev, h))
        elif cell is CellKind.LSTM:
            c = np.zeros((B, H))
            for s in range(m):
                h_prev, c_prev = h, c
                a = xin[s] + h_prev @ w_rec.T
                act = _sigmoid(a)
                i, f, o = act[:, :H], act[:, H:2 * H], act[:, 3 * H:]
                g = np.tanh(a[:, 2 * H:3 * H])
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                if keep:
                    cache.append((h_prev, c_prev, i, f, g, o, tc))
        else:
            u_zr, u_n = w_rec[:2 * H], w_rec[2 * H:]
            for s in range(m):
                h_prev = h
                a_zr = xin[s][:, :2 * H] + h_prev @ u_zr.T
                z = _sigmoid(a_zr[:, :H])
                r = _sigmoid(a_zr[:, H:])
                rh = r * h_prev
                nn = np.tanh(xin[s][:, 2 * H:] + rh @ u_n.T)
                h = (1.0 - z) * nn + z * h_prev
                if keep:
                    cache.append((h_prev, z, r, rh, nn))
        out = h @ p["w_out"] + p["b_out"]
        return out, h, cache

    def _backward(self, x, p: ParamVector, h_last, cache, dout) -> ParamVector:
        cell = self.config.cell
        H = self.config.hidden_units
        w_rec = p["w_rec"]
        grad = p.zeros_like()
        grad["w_out"][...] = h_last.T @ dout
        grad["b_out"][...] = dout.sum(axis=0)
        dh = dout @ p["w_out"].T
        m = x.shape[1]
        da_all = np.empty((m, x.shape[0], cell.gates * H))
        dw_rec = np.zeros_like(w_rec)
        if cell is CellKind.RNN:
            for s in range(m - 1, -1, -1):
                h_prev, h = cache[s]
                da = dh * (1.0 - h * h)
                da_all[s] = da
                dw_rec += da.T @ h_prev
                dh = da @ w_rec
        elif cell is CellKind.LSTM:
            dc = np.zeros_like(dh)
            for s in range(m - 1, -1, -1):
                h_prev, c_prev, i, f, g, o, tc = cache[s]
                do = dh * tc
                dc = dc + dh * o * (1.0 - tc * tc)
                da = da_all[s]
                da[:, :H] = dc * g * i * (1.0 - i)
                da[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
                da[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
                da[:, 3 * H:] = do * o * (1.0 - o)
                dc = dc * f
                dw_rec += da.T @ h_prev
                dh = da @ w_rec
        else:
            u_zr, u_n = w_rec[:2 * H], w_rec[2 * H:]
            for s in range(m - 1, -1, -1):
                h_prev, z, r, rh, nn = cache[s]
                da = da_all[s]
                dn = dh * (1.0 - z)
                da_n = dn * (1.0 - nn * nn)
                drh = da_n @ u_n
                da[:, :H] = dh * (h_prev - nn) * z * (1.0 - z)
                da[:, H:2 * H] = drh * h_prev * r * (1.0 - r)
                da[:, 2 * H:] = da_n
                dw_rec[:2 * H] += da[:, :2 * H].T @ h_prev
                dw_rec[2 * H:] += da_n.T @ rh
                dh = dh * z + drh * r + da[:, :2 * H] @ u_zr
        grad["w_rec"][...] = dw_rec
        grad["w_in"][...] = np.einsum("mbg,bmd->gd", da_all, x)
        grad["bias"][...] = da_all.sum(axis=(0, 1))
        return grad

    # -- public API --------------------------------------------------------

    def predict(self, x, params: ParamVector | None = None) -> np.ndarray:
        """Forecast for one input window (m, d) or a stack (B, m, d).

        Returns a flat vector of ``horizon * input_dim`` entries (horizon-major)
        for a single window, or a (B, horizon * input_dim) array for a stack.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        if single:
            x = x[None]
        self._check_batch(SampleBatch(x, None, None))
        out, _, _ = self._forward(x, self.params if params is None else params, keep=False)
        return out[0] if single else out

    def loss(self, s: Sample, params: ParamVector | None = None) -> float:
        return self.batch_loss([s], params)

    def batch_loss(self, batch, params: ParamVector | None = None) -> float:
        """Sum over samples and output entries of squared error."""
        batch = as_batch(batch)
        self._check_batch(batch)
        out, _, _ = self._forward(batch.x, self.params if params is None else params, keep=False)
        resid = batch.y.reshape(len(batch), -1) - out
        return float(np.sum(resid * resid))

    def loss_and_grad(self, batch, params: ParamVector | None = None) -> tuple[float, ParamVector]:
        batch = as_batch(batch)
        self._check_batch(batch)
        p = self.params if params is None else params
        out, h_last, cache = self._forward(batch.x, p, keep=True)
        resid = out - batch.y.reshape(len(batch), -1)
        grad = self._backward(batch.x, p, h_last, cache, 2.0 * resid)
        return float(np.sum(resid * resid)), grad

    def batch_grad(self, batch, params: ParamVector | None = None) -> ParamVector:
        return self.loss_and_grad(batch, params)[1]


class MeanReduced:
    """View of a model whose batch loss and gradient are averaged over
    samples and output entries instead of summed."""

    def __init__(self, model: RecurrentModel):
        self.model = model

    @property
    def config(self) -> ModelConfig:
        return self.model.config

    @property
    def params(self) -> ParamVector:
        return self.model.params

    def _scale(self, batch) -> float:
        return 1.0 / (len(batch) * self.model.config.output_dim)

    def predict(self, x, params: ParamVector | None = None) -> np.ndarray:
        return self.model.predict(x, params)

    def batch_loss(self, batch, params: ParamVector | None = None) -> float:
        batch = as_batch(batch)
        return self.model.batch_loss(batch, params) * self._scale(batch)

    def batch_grad(self, batch, params: ParamVector | None = None) -> ParamVector:
        batch = as_batch(batch)
        g = self.model.batch_grad(batch, params)
        return g.with_data(g.data * self._scale(batch))
