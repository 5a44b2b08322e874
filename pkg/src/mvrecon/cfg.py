"""Adaptive classifier-free guidance over time steps and grid views.

The front-view scale follows ``w_t = 2 + 16 (t / 1000)^5`` and every other view
is scaled by ``tau_v``, which falls from 1 at the front view to 0.5 at the back.
"""
from dataclasses import dataclass

import numpy as np

from .camera import ORBIT_AZIMUTHS
from .errors import DomainError, SizeError
from .mvgrid import COLS, ROWS


@dataclass(frozen=True)
class CfgSchedule:
    base: float = 2.0
    amplitude: float = 16.0
    exponent: float = 5.0
    t_max: int = 1000
    tau_front: float = 1.0
    tau_back: float = 0.5
    tau_rule: str = "linear"  # or "cosine"

    def __post_init__(self):
        for tau in (self.tau_front, self.tau_back):
            if not 0.5 <= tau <= 1.0:
                raise DomainError(f"tau must lie in [0.5, 1], got {tau}")
        if self.tau_rule not in ("linear", "cosine"):
            raise DomainError(f"unknown tau rule {self.tau_rule!r}")

    @classmethod
    def fixed(cls, scale):
        """Constant guidance for every step and view (the non-adaptive baseline)."""
        return cls(base=scale, amplitude=0.0, tau_front=1.0, tau_back=1.0)

    @classmethod
    def time_only(cls):
        """Time-adaptive curve applied identically to all views."""
        return cls(tau_back=1.0)

    def to_dict(self):
        return dict(self.__dict__)


DEFAULT_SCHEDULE = CfgSchedule()


def base_weight(t, schedule=DEFAULT_SCHEDULE):
    """Front-view guidance scale at diffusion time ``t`` (fractional ``t`` allowed)."""
    t = float(t)
    if not 0 <= t <= schedule.t_max:
        raise DomainError(f"t must lie in [0, {schedule.t_max}], got {t}")
    return schedule.base + schedule.amplitude * (t / schedule.t_max) ** schedule.exponent


def angular_distance(azimuth_deg, reference_deg=0.0):
    """Smallest absolute angle between two azimuths, in [0, 180]."""
    d = abs(float(azimuth_deg) - reference_deg) % 360.0
    return min(d, 360.0 - d)


def view_tau(azimuth_deg, schedule=DEFAULT_SCHEDULE):
    frac = angular_distance(azimuth_deg) / 180.0
    if schedule.tau_rule == "cosine":
        frac = 0.5 * (1.0 - np.cos(np.pi * frac))
    return schedule.tau_front - (schedule.tau_front - schedule.tau_back) * frac


def view_weight(t, azimuth_deg, schedule=DEFAULT_SCHEDULE):
    return base_weight(t, schedule) * view_tau(azimuth_deg, schedule)


@dataclass(frozen=True)
class GuidanceWeightMap:
    """Per-tile weights on the 3x2 grid at one time step."""

    t: float
    weights: np.ndarray  # (3, 2)

    def as_list(self):
        """Weights in tile (orbit) order."""
        return [float(w) for w in self.weights.reshape(-1)]

    def per_pixel(self, height, width):
        """Expand to a ``(height, width)`` piecewise-constant map."""
        if height % ROWS or width % COLS:
            raise SizeError(f"{height}x{width} field does not tile 3x2")
        return np.repeat(np.repeat(self.weights, height // ROWS, axis=0), width // COLS, axis=1)


def weight_map(t, schedule=DEFAULT_SCHEDULE, azimuths=ORBIT_AZIMUTHS):
    w = np.array([view_weight(t, az, schedule) for az in azimuths]).reshape(ROWS, COLS)
    return GuidanceWeightMap(float(t), w)


def guided_prediction(eps_uncond, eps_cond, wmap):
    """Per-pixel ``eps_u + w (eps_c - eps_u)`` with ``w`` taken from the pixel's tile.

    Fields are ``(H, W)`` or ``(H, W, C)``. Evaluated as ``eps_c + (w - 1)(eps_c - eps_u)``
    so that ``w = 1`` returns ``eps_c`` and ``eps_c == eps_u`` returns ``eps_u`` exactly.
    """
    eps_uncond = np.asarray(eps_uncond, dtype=np.float64)
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    if eps_uncond.shape != eps_cond.shape:
        raise SizeError(f"noise fields differ: {eps_uncond.shape} vs {eps_cond.shape}")
    if eps_cond.ndim not in (2, 3):
        raise SizeError(f"expected (H, W) or (H, W, C) fields, got {eps_cond.shape}")
    w = wmap.per_pixel(*eps_cond.shape[:2])
    if eps_cond.ndim == 3:
        w = w[..., None]
    return eps_cond + (w - 1.0) * (eps_cond - eps_uncond)


# -- sampler ---------------------------------------------------------------


def alphas_cumprod(t_max=1000, beta_start=1e-4, beta_end=0.02):
    """DDPM linear-beta cumulative products, indexed by ``t`` with ``abar[0] = 1``."""
    betas = np.linspace(beta_start, beta_end, t_max)
    return np.concatenate([[1.0], np.cumprod(1.0 - betas)])


def noise_levels(t_max=1000):
    """``sigma_t = sqrt((1 - abar_t) / abar_t)``, the DDIM noise level in scaled-latent form."""
    abar = alphas_cumprod(t_max)
    return np.sqrt((1.0 - abar) / abar)


def timesteps(steps, t_max=1000):
    """Descending integer times ``t_max = t_0 > ... > t_steps = 0``."""
    if steps < 1:
        raise DomainError(f"steps must be >= 1, got {steps}")
    return np.rint(np.linspace(t_max, 0, steps + 1)).astype(np.int64)


def sample_loop(denoiser, shape=None, schedule=DEFAULT_SCHEDULE, steps=50, seed=0, latent=None):
    """Deterministic DDIM sampling with the adaptive guidance map.

    Works on the scaled latent ``x / sqrt(abar_t)``, where a DDIM step reduces to
    ``x <- x + (sigma_next - sigma_t) * eps``. ``denoiser(x, t)`` returns
    ``(eps_cond, eps_uncond)``. When ``latent`` is omitted it is drawn from
    ``seed`` at the largest noise level.
    """
    sigmas = noise_levels(schedule.t_max)
    ts = timesteps(steps, schedule.t_max)
    if latent is None:
        rng = np.random.default_rng(seed)
        latent = rng.standard_normal(shape) * np.sqrt(1.0 + sigmas[ts[0]] ** 2)
    x = np.array(latent, dtype=np.float64)
    for t, t_next in zip(ts[:-1], ts[1:]):
        eps_cond, eps_uncond = denoiser(x, int(t))
        eps = guided_prediction(eps_uncond, eps_cond, weight_map(t, schedule))
        x = x + (sigmas[t_next] - sigmas[t]) * eps
    return x


def schedule_table(schedule=DEFAULT_SCHEDULE, ts=None, azimuths=ORBIT_AZIMUTHS):
    """Rows of ``(t, azimuth, weight)`` for plotting."""
    ts = range(0, schedule.t_max + 1, 10) if ts is None else ts
    return [(int(t), float(az), view_weight(t, az, schedule)) for t in ts for az in azimuths]
