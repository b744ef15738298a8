"""RealNVP normalizing flow built on the dense-network kernel.

A flow is an ordered stack of affine coupling layers over a standard
normal base density.  Each layer rescales and shifts one half of the
coordinates conditioned on the other half:

    y_u = exp(s_c(x_c)) * x_u + t(x_c),    y_c = x_c

where ``s_c`` is the scale network output passed through a soft clamp
``a * tanh(s / a)`` that keeps exp() bounded for untrained networks while
leaving the identity initialization exact (tanh(0) = 0).  The inverse and
the log-Jacobian-determinant are available in closed form, which makes
the pushforward log-density cheap: one inverse pass per evaluation.

Training gradients are computed by hand-rolled reverse mode through the
inverse pass, i.e. through the base log-density, the clamped scales and
the log-det terms; samples are treated as constants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (
    MlpConfig,
    MlpParams,
    mlp_backward,
    mlp_forward,
    mlp_from_json_dict,
    mlp_init,
    mlp_to_json_dict,
)

__all__ = ["CouplingLayer", "RealNvpFlow", "build_realnvp"]

UPDATE_FIRST_HALF = "update_first_half"
UPDATE_SECOND_HALF = "update_second_half"

LOG_2PI = float(np.log(2.0 * np.pi))


def _check_points(x: np.ndarray, dim: int, require_finite: bool = True) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {x.shape}")
    if require_finite and not np.all(np.isfinite(x)):
        raise ValueError("non-finite input point")
    return x, squeeze


@dataclass
class CouplingLayer:
    """One affine coupling layer.

    ``parity`` selects which half of the coordinates is updated; the
    other half conditions the scale and shift networks.  For odd ``dim``
    the conditioning half gets the extra coordinate, so the updated half
    always has ``dim // 2`` entries.  ``scale_clamp`` is the soft-clamp
    amplitude; ``None`` disables clamping (raw exp(s), useful for exact
    hand-computed checks).
    """

    dim: int
    parity: str
    s_net: MlpParams
    t_net: MlpParams
    scale_clamp: float | None = 5.0

    def __post_init__(self):
        if self.parity not in (UPDATE_FIRST_HALF, UPDATE_SECOND_HALF):
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.scale_clamp is not None and not self.scale_clamp > 0:
            raise ValueError("scale_clamp must be positive or None")
        n_upd = self.dim // 2
        n_cond = self.dim - n_upd
        for name, net in (("s_net", self.s_net), ("t_net", self.t_net)):
            if net.config.input_dim != n_cond or net.config.output_dim != n_upd:
                raise ValueError(
                    f"{name} maps {net.config.input_dim}->{net.config.output_dim}, "
                    f"layer needs {n_cond}->{n_upd}"
                )

    @property
    def updated_slice(self) -> slice:
        if self.parity == UPDATE_FIRST_HALF:
            return slice(0, self.dim // 2)
        return slice(self.dim - self.dim // 2, self.dim)

    @property
    def conditioning_slice(self) -> slice:
        if self.parity == UPDATE_FIRST_HALF:
            return slice(self.dim // 2, self.dim)
        return slice(0, self.dim - self.dim // 2)

    def _clamped_scale(self, s_raw: np.ndarray) -> np.ndarray:
        if self.scale_clamp is None:
            return s_raw
        a = self.scale_clamp
        return a * np.tanh(s_raw / a)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray | float]:
        """Map x -> y; returns (y, log|det dy/dx|).

        Finiteness is not enforced here: layers compose inside a flow and a
        numerically diverged stack must surface as non-finite output, not as
        an input error halfway through.
        """
        xb, squeeze = _check_points(x, self.dim, require_finite=False)
        cond = xb[:, self.conditioning_slice]
        s_raw, _ = mlp_forward(self.s_net, cond)
        t_val, _ = mlp_forward(self.t_net, cond)
        s = self._clamped_scale(s_raw)
        y = xb.copy()
        y[:, self.updated_slice] = np.exp(s) * xb[:, self.updated_slice] + t_val
        log_det = s.sum(axis=1)
        return (y[0], float(log_det[0])) if squeeze else (y, log_det)

    def inverse(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray | float]:
        """Map y -> x; returns (x, log|det dx/dy|) = (x, -sum of scales)."""
        yb, squeeze = _check_points(y, self.dim, require_finite=False)
        cond = yb[:, self.conditioning_slice]
        s_raw, _ = mlp_forward(self.s_net, cond)
        t_val, _ = mlp_forward(self.t_net, cond)
        s = self._clamped_scale(s_raw)
        x = yb.copy()
        x[:, self.updated_slice] = (yb[:, self.updated_slice] - t_val) * np.exp(-s)
        log_det_inv = -s.sum(axis=1)
        return (x[0], float(log_det_inv[0])) if squeeze else (x, log_det_inv)

    def to_json_dict(self) -> dict:
        return {
            "parity": self.parity,
            "scale_clamp": self.scale_clamp,
            "s_net": mlp_to_json_dict(self.s_net),
            "t_net": mlp_to_json_dict(self.t_net),
        }

    @classmethod
    def from_json_dict(cls, dim: int, obj: dict) -> "CouplingLayer":
        clamp = obj["scale_clamp"]
        return cls(
            dim=dim,
            parity=obj["parity"],
            s_net=mlp_from_json_dict(obj["s_net"]),
            t_net=mlp_from_json_dict(obj["t_net"]),
            scale_clamp=None if clamp is None else float(clamp),
        )


class RealNvpFlow:
    """Stack of coupling layers with a standard normal base density.

    Consecutive layers must alternate parity so that pairs of layers
    update every coordinate.  The class exposes the forward map (base to
    target space), its inverse, pushforward log-density, sampling, and
    the training loss with exact parameter gradients.
    """

    def __init__(self, dim: int, layers: list[CouplingLayer]):
        if dim < 2:
            raise ValueError("flow dimension must be >= 2")
        for k, layer in enumerate(layers):
            if layer.dim != dim:
                raise ValueError(f"layer {k} has dim {layer.dim}, flow has {dim}")
            if k > 0 and layer.parity == layers[k - 1].parity:
                raise ValueError(f"layers {k - 1} and {k} do not alternate parity")
        self.dim = dim
        self.layers = layers

    # ------------------------------------------------------------------
    # maps and densities
    # ------------------------------------------------------------------

    def forward(self, x: np.ndarray):
        """Apply all layers in order; returns (y, total log|det|)."""
        xb, squeeze = _check_points(x, self.dim)
        total = np.zeros(xb.shape[0])
        y = xb
        for layer in self.layers:
            y, ld = layer.forward(y)
            total += ld
        return (y[0], float(total[0])) if squeeze else (y, total)

    def inverse(self, y: np.ndarray):
        """Apply layer inverses in reverse order; returns (x, total log|det|)."""
        yb, squeeze = _check_points(y, self.dim)
        total = np.zeros(yb.shape[0])
        x = yb
        for layer in reversed(self.layers):
            x, ld = layer.inverse(x)
            total += ld
        return (x[0], float(total[0])) if squeeze else (x, total)

    def base_log_density(self, z: np.ndarray) -> np.ndarray | float:
        zb, squeeze = _check_points(z, self.dim)
        val = -0.5 * np.sum(zb * zb, axis=1) - 0.5 * self.dim * LOG_2PI
        return float(val[0]) if squeeze else val

    def log_density(self, theta: np.ndarray) -> np.ndarray | float:
        """Pushforward log-density via one inverse pass.

        log rho_hat(theta) = log rho_base(inv(theta)) + log|det d inv/d theta|.
        """
        thetab, squeeze = _check_points(theta, self.dim)
        z, log_det_inv = self.inverse(thetab)
        # base density inlined: z is internal, so a diverged flow must give a
        # non-finite value here rather than an input error
        val = -0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * LOG_2PI + log_det_inv
        return float(val[0]) if squeeze else val

    def sample(self, rng: np.random.Generator, count: int) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``count`` pushforward samples.

        Returns (thetas, log_densities) where the log-density reuses the
        forward-pass log-det, so no inverse pass is needed.
        """
        if count < 1:
            raise ValueError("sample count must be >= 1")
        z = rng.standard_normal((count, self.dim))
        theta, log_det = self.forward(z)
        return theta, self.base_log_density(z) - log_det

    # ------------------------------------------------------------------
    # training loss
    # ------------------------------------------------------------------

    def loss_and_gradients(self, batch: np.ndarray) -> tuple[float, list[np.ndarray]]:
        """Negative mean pushforward log-density and its parameter gradients.

        ``batch`` is (n, dim) with n >= 1.  The returned gradient list is
        aligned with ``parameter_arrays()``.  Gradients are exact reverse
        mode through the inverse pass; the batch points are constants.
        """
        batch = np.asarray(batch, dtype=float)
        if batch.ndim != 2 or batch.shape[1] != self.dim:
            raise ValueError(f"batch must be (n, {self.dim}), got {batch.shape}")
        n = batch.shape[0]
        if n == 0:
            raise ValueError("batch must be nonempty")
        if not np.all(np.isfinite(batch)):
            raise ValueError("non-finite batch point")

        # Inverse pass, last layer first, recording what backward needs.
        records = []
        u = batch
        log_det_inv = np.zeros(n)
        for layer in reversed(self.layers):
            cond = u[:, layer.conditioning_slice]
            upd = u[:, layer.updated_slice]
            s_raw, s_cache = mlp_forward(layer.s_net, cond)
            t_val, t_cache = mlp_forward(layer.t_net, cond)
            s = layer._clamped_scale(s_raw)
            exp_neg_s = np.exp(-s)
            x_upd = (upd - t_val) * exp_neg_s
            nxt = u.copy()
            nxt[:, layer.updated_slice] = x_upd
            records.append((layer, s_raw, s, exp_neg_s, x_upd, s_cache, t_cache))
            log_det_inv -= s.sum(axis=1)
            u = nxt
        z = u

        # inlined base density, as in log_density: a diverged stack yields a
        # non-finite loss for the caller to detect
        log_rho = -0.5 * np.sum(z * z, axis=1) - 0.5 * self.dim * LOG_2PI + log_det_inv
        loss = -float(np.mean(log_rho))

        # Backward: d loss / d z, then back up through the layer inverses
        # in the opposite order, collecting parameter gradients.
        g = z / n  # -(1/n) * grad_z log rho_base(z) = z / n
        grads_per_layer: dict[int, tuple[MlpParams, MlpParams]] = {}
        for layer, s_raw, s, exp_neg_s, x_upd, s_cache, t_cache in reversed(records):
            g_upd = g[:, layer.updated_slice]
            g_cond = g[:, layer.conditioning_slice]

            # x_upd = (y_upd - t) * exp(-s);  log-det term adds -(1/n) * (-sum s)
            g_t = -g_upd * exp_neg_s
            g_s = -g_upd * x_upd + 1.0 / n
            if layer.scale_clamp is not None:
                g_s = g_s * (1.0 - (s / layer.scale_clamp) ** 2)

            s_grads, g_cond_s = mlp_backward(layer.s_net, s_cache, g_s)
            t_grads, g_cond_t = mlp_backward(layer.t_net, t_cache, g_t)

            g_prev = np.empty_like(g)
            g_prev[:, layer.updated_slice] = g_upd * exp_neg_s
            g_prev[:, layer.conditioning_slice] = g_cond + g_cond_s + g_cond_t
            g = g_prev
            grads_per_layer[id(layer)] = (s_grads, t_grads)

        grad_arrays: list[np.ndarray] = []
        for layer in self.layers:
            s_grads, t_grads = grads_per_layer[id(layer)]
            grad_arrays.extend(s_grads.arrays())
            grad_arrays.extend(t_grads.arrays())
        return loss, grad_arrays

    # ------------------------------------------------------------------
    # parameters and serialization
    # ------------------------------------------------------------------

    def parameter_arrays(self) -> list[np.ndarray]:
        """Live views of every trainable array, in a fixed canonical order."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend(layer.s_net.arrays())
            out.extend(layer.t_net.arrays())
        return out

    def parameter_names(self) -> list[str]:
        out: list[str] = []
        for k, layer in enumerate(self.layers):
            out.extend(f"coupling {k} s_net {n}" for n in layer.s_net.array_names())
            out.extend(f"coupling {k} t_net {n}" for n in layer.t_net.array_names())
        return out

    def to_json_dict(self) -> dict:
        return {
            "dim": self.dim,
            "base": "standard_normal",
            "layers": [layer.to_json_dict() for layer in self.layers],
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "RealNvpFlow":
        if obj.get("base", "standard_normal") != "standard_normal":
            raise ValueError(f"unsupported base density {obj.get('base')!r}")
        dim = int(obj["dim"])
        layers = [CouplingLayer.from_json_dict(dim, entry) for entry in obj["layers"]]
        return cls(dim, layers)


def build_realnvp(
    dim: int,
    num_pairs: int = 6,
    hidden_widths=(100, 100, 100),
    seed=0,
    init_scale: float = 0.01,
    zero_final_layer: bool = False,
    scale_clamp: float | None = 5.0,
) -> RealNvpFlow:
    """Construct a RealNVP with ``num_pairs`` pairs of alternating layers.

    The scale/shift networks are near-identity initialized: small Gaussian
    weights, zero biases (exact identity with ``zero_final_layer``).
    Per-network seeds are derived from ``seed``, so construction is
    deterministic.
    """
    if num_pairs < 1:
        raise ValueError("num_pairs must be >= 1")
    n_upd = dim // 2
    n_cond = dim - n_upd
    config = MlpConfig(
        input_dim=n_cond,
        hidden_widths=tuple(hidden_widths),
        output_dim=n_upd,
        init_scale=init_scale,
        zero_final_layer=zero_final_layer,
    )
    layers = []
    for k in range(2 * num_pairs):
        parity = UPDATE_FIRST_HALF if k % 2 == 0 else UPDATE_SECOND_HALF
        s_net = mlp_init(config, np.random.SeedSequence([seed, k, 0]))
        t_net = mlp_init(config, np.random.SeedSequence([seed, k, 1]))
        layers.append(CouplingLayer(dim, parity, s_net, t_net, scale_clamp))
    return RealNvpFlow(dim, layers)
