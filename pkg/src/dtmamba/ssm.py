"""Selective state-space block (one Mamba).

The continuous system ``h' = A h + B x, y = C h`` is discretized by zero-order
hold with a per-timestep step size ``delta``:

    Abar = exp(delta * A)
    Bbar = (delta * A)^-1 (exp(delta * A) - I) delta * B

``A`` is diagonal per channel, so the inverse reduces to an elementwise
division, ``Bbar = expm1(delta * A) / A * B``.  The recurrence
``h_t = Abar_t * h_{t-1} + Bbar_t * x_t``, ``y_t = C_t . h_t`` is run
sequentially by :func:`selective_scan`, which carries its own backward pass.
:func:`naive_scan` is the same recurrence written with primitive tensor ops
and serves as its oracle.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .nn import Linear, Module, Parameter, uniform_init
from .tensor import Tensor

# below this |delta * A| the ZOH factor expm1(z)/A is replaced by its limit delta
SERIES_CUTOFF = 1e-8
# below this |z| the A-derivative of the ZOH factor uses its Taylor series
_DFDA_SERIES = 1e-3


def _min_abs(delta: np.ndarray, A: np.ndarray) -> float:
    # lower bound on |delta * A| without forming the product
    return float(np.abs(delta).min() * np.abs(A).min()) if delta.size and A.size else np.inf


def _zoh_factor(z: np.ndarray, A: np.ndarray, delta: np.ndarray, em1: np.ndarray | None = None) -> np.ndarray:
    """expm1(z) / A with the removable singularity at z = 0 filled by delta."""
    if em1 is None:
        em1 = np.expm1(z)
    if _min_abs(delta, A) >= SERIES_CUTOFF:
        return em1 / A
    small = np.abs(z) < SERIES_CUTOFF
    if not small.any():
        return em1 / A
    f = em1 / np.where(small, 1.0, A)
    d = np.broadcast_to(delta, z.shape)
    f[small] = d[small]
    return f


def _zoh_factor_dA(z: np.ndarray, A: np.ndarray, delta: np.ndarray, em1: np.ndarray) -> np.ndarray:
    # d/dA [expm1(delta A) / A] = (z e^z - expm1 z) / A^2
    #                          = delta^2 (1/2 + z/3 + z^2/8 + z^3/30 + ...)
    if _min_abs(delta, A) >= _DFDA_SERIES:
        return (z * (em1 + 1.0) - em1) / (A * A)
    small = np.abs(z) < _DFDA_SERIES
    if not small.any():
        return (z * (em1 + 1.0) - em1) / (A * A)
    safe_A = np.where(small, 1.0, A)
    out = (z * (em1 + 1.0) - em1) / (safe_A * safe_A)
    zs = z[small]
    ds = np.broadcast_to(delta, z.shape)[small]
    out[small] = ds * ds * (0.5 + zs * (1.0 / 3.0 + zs * (1.0 / 8.0 + zs / 30.0)))
    return out


def discretize(A, B, delta):
    """Zero-order-hold discretization for diagonal ``A``.

    ``A`` is ``[d_inner, d_state]``, ``B`` is ``[..., d_state]`` and ``delta``
    is ``[..., d_inner]``.  Returns ``(Abar, Bbar)``, each
    ``[..., d_inner, d_state]``.
    """
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta <= 0):
        raise ContractError("discretize needs delta > 0")
    d = delta[..., :, None]
    z = d * A
    Abar = np.exp(z)
    Bbar = _zoh_factor(z, A, d) * B[..., None, :]
    return Abar, Bbar


def _check_scan_shapes(u, delta, A, B, C):
    if u.ndim < 2:
        raise ShapeError(f"scan input must be [..., L, d_inner], got {u.shape}")
    D = u.shape[-1]
    if delta.shape != u.shape:
        raise ShapeError(f"delta {delta.shape} must match input {u.shape}")
    if A.ndim != 2 or A.shape[0] != D:
        raise ShapeError(f"A must be [{D}, d_state], got {A.shape}")
    N = A.shape[1]
    want = u.shape[:-1] + (N,)
    if B.shape != want or C.shape != want:
        raise ShapeError(f"B and C must be {want}, got {B.shape} and {C.shape}")


def selective_scan(u, delta, A, B, C, h0=None) -> Tensor:
    """Run the discretized recurrence over axis -2.

    Shapes: ``u, delta: [..., L, D]``, ``A: [D, N]``, ``B, C: [..., L, N]``,
    ``h0: [..., D, N]`` (zeros by default, treated as a constant).
    Returns ``y: [..., L, D]``.
    """
    u, delta, A, B, C = (T.as_tensor(t) for t in (u, delta, A, B, C))
    _check_scan_shapes(u, delta, A, B, C)
    if np.any(delta.data <= 0):
        raise ContractError("selective_scan needs delta > 0")
    ud, dd, Ad, Bd, Cd = u.data, delta.data, A.data, B.data, C.data
    L = ud.shape[-2]
    state_shape = ud.shape[:-2] + Ad.shape
    zero_start = h0 is None or not np.any(h0)
    h_init = None if zero_start else np.broadcast_to(np.asarray(h0, float), state_shape).copy()
    hs = np.empty(ud.shape[:-2] + (L,) + Ad.shape)
    y = np.empty_like(ud)
    h = h_init
    for t in range(L):
        d = dd[..., t, :, None]
        z = d * Ad
        em1 = np.expm1(z)
        drive = _zoh_factor(z, Ad, d, em1)
        drive *= Bd[..., t, None, :]
        drive *= ud[..., t, :, None]
        if h is None:
            h = drive
        else:
            h = (em1 + 1.0) * h + drive
        if not np.all(np.isfinite(h)):
            raise NumericError(f"selective scan state became non-finite at timestep {t}")
        hs[..., t, :, :] = h
        y[..., t, :] = np.einsum("...dn,...n->...d", h, Cd[..., t, :])
    lead = tuple(range(ud.ndim - 2))

    def grad_fn(gy):
        gu = np.empty_like(ud)
        gdelta = np.empty_like(dd)
        gB = np.empty_like(Bd)
        gC = np.empty_like(Cd)
        gA = np.zeros_like(Ad)
        gh = None
        for t in range(L - 1, -1, -1):
            d = dd[..., t, :, None]
            z = d * Ad
            em1 = np.expm1(z)
            f = _zoh_factor(z, Ad, d, em1)
            h_t = hs[..., t, :, :]
            h_prev = hs[..., t - 1, :, :] if t > 0 else h_init
            inject = gy[..., t, :, None] * Cd[..., t, None, :]
            gh = inject if gh is None else gh + inject
            gC[..., t, :] = np.einsum("...d,...dn->...n", gy[..., t, :], h_t)
            Bt = Bd[..., t, None, :]
            ut = ud[..., t, :, None]
            gu[..., t, :] = np.einsum("...dn,...dn,...n->...d", gh, f, Bd[..., t, :])
            gBbar = gh * ut
            gB[..., t, :] = np.einsum("...dn,...dn->...n", gBbar, f)
            gf = gBbar
            gf *= Bt
            gA += (gf * _zoh_factor_dA(z, Ad, d, em1)).sum(axis=lead)
            dA = em1
            dA += 1.0
            # gradient through Bbar = f(delta, A) * B, with df/ddelta = exp(z)
            gdelta[..., t, :] = np.einsum("...dn,...dn->...d", gf, dA)
            if h_prev is not None:
                # gradient through Abar = exp(delta * A)
                gz = gh * h_prev
                gz *= dA
                gdelta[..., t, :] += np.einsum("...dn,dn->...d", gz, Ad)
                gA += (gz * d).sum(axis=lead)
                gh = gh * dA
        return gu, gdelta, gA, gB, gC

    return T._result(y, (u, delta, A, B, C), grad_fn, "selective_scan")


def naive_scan(u, delta, A, B, C, h0=None) -> Tensor:
    """Step-by-step recurrence from primitive ops; the oracle for selective_scan."""
    u, delta, A, B, C = (T.as_tensor(t) for t in (u, delta, A, B, C))
    _check_scan_shapes(u, delta, A, B, C)
    L, D = u.shape[-2:]
    N = A.shape[1]
    state_shape = u.shape[:-2] + (D, N)
    h = Tensor(np.zeros(state_shape) if h0 is None else np.broadcast_to(h0, state_shape))
    ys = []
    for t in range(L):
        d = T.reshape(delta[..., t, :], u.shape[:-2] + (D, 1))
        dA = d * A
        Abar = T.exp(dA)
        Bbar = (Abar - 1.0) / A * T.reshape(B[..., t, :], u.shape[:-2] + (1, N))
        x_t = T.reshape(u[..., t, :], u.shape[:-2] + (D, 1))
        h = Abar * h + Bbar * x_t
        c_t = T.reshape(C[..., t, :], u.shape[:-2] + (1, N))
        ys.append(T.tsum(h * c_t, axis=-1))
    return T.stack(ys, axis=-2)


class SelectiveSSM(Module):
    """Input-dependent (delta, B, C) and the diagonal negative ``A``.

    ``A`` is stored as ``A_log`` with ``A = -exp(A_log)``; it starts at
    ``A[:, k] = -(k + 1)``.  The delta bias starts so that
    ``softplus(bias)`` is log-uniform in ``[dt_min, dt_max]``.
    """

    def __init__(self, d_inner: int, d_state: int, rng: np.random.Generator,
                 dt_min: float = 1e-3, dt_max: float = 1e-1):
        if d_inner < 1 or d_state < 1:
            raise ConfigError(f"d_inner and d_state must be positive, got {d_inner}, {d_state}")
        self.d_inner = d_inner
        self.d_state = d_state
        self.A_log = Parameter(np.log(np.tile(np.arange(1, d_state + 1, dtype=float), (d_inner, 1))))
        self.delta_proj = Linear(d_inner, d_inner, rng)
        dt = np.exp(rng.uniform(np.log(dt_min), np.log(dt_max), size=d_inner))
        self.delta_proj.bias.data = dt + np.log(-np.expm1(-dt))
        self.B_proj = Linear(d_inner, d_state, rng, bias=False)
        self.C_proj = Linear(d_inner, d_state, rng, bias=False)

    def A(self) -> Tensor:
        return -T.exp(self.A_log)

    def selective_params(self, x: Tensor):
        """``(delta, B, C)`` for every timestep of ``x: [..., d_inner]``."""
        delta = T.softplus(self.delta_proj(x))
        return delta, self.B_proj(x), self.C_proj(x)

    def __call__(self, x: Tensor, h0=None) -> Tensor:
        delta, B, C = self.selective_params(x)
        return selective_scan(x, delta, self.A(), B, C, h0)


def ssm_scan(x: Tensor, ssm: SelectiveSSM, h0=None) -> Tensor:
    return ssm(T.as_tensor(x), h0)


class MambaBlock(Module):
    """in_proj -> causal conv -> SiLU -> selective scan, gated by SiLU(gate_proj), -> out_proj."""

    def __init__(self, d_model: int, rng: np.random.Generator, d_state: int = 256,
                 e_fact: int = 1, d_conv: int = 2):
        if d_model < 1:
            raise ConfigError(f"d_model must be positive, got {d_model}")
        if e_fact < 1 or int(e_fact) != e_fact:
            raise ConfigError(f"e_fact must be a positive integer, got {e_fact}")
        if d_conv < 1:
            raise ConfigError(f"d_conv must be >= 1, got {d_conv}")
        self.d_model = d_model
        self.e_fact = int(e_fact)
        self.d_inner = self.e_fact * d_model
        self.d_conv = d_conv
        self.in_proj = Linear(d_model, self.d_inner, rng, bias=False)
        self.gate_proj = Linear(d_model, self.d_inner, rng, bias=False)
        self.conv_weight = Parameter(uniform_init(rng, (d_conv, self.d_inner), d_conv))
        self.conv_bias = Parameter(uniform_init(rng, (self.d_inner,), d_conv))
        self.ssm = SelectiveSSM(self.d_inner, d_state, rng)
        self.out_proj = Linear(self.d_inner, d_model, rng, bias=False)

    def __call__(self, x: Tensor) -> Tensor:
        x = T.as_tensor(x)
        if x.ndim < 2 or x.shape[-2] < 1:
            raise ShapeError(f"Mamba input must be [..., L>=1, d_model], got {x.shape}")
        u = T.silu(T.causal_conv1d(self.in_proj(x), self.conv_weight, self.conv_bias))
        y = self.ssm(u)
        g = T.silu(self.gate_proj(x))
        return self.out_proj(y * g)


def mamba_block(x: Tensor, block: MambaBlock) -> Tensor:
    return block(x)
