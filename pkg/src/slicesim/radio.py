"""Physical layer: correlated Rayleigh fading, path loss, SINR rates, listening.

All geometry is supplied in kilometres and converted to metres before the
path-loss power law is applied.  Noise power is normalised to 1, so the
configured transmit powers are linear power-to-noise ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import j0

SQRT_HALF = 1.0 / math.sqrt(2.0)


def jakes_rho(doppler_hz: float, slot_s: float) -> float:
    """Slot-to-slot fading correlation rho = J0(2*pi*f_d*T) of the Jakes model."""
    return float(j0(2.0 * math.pi * doppler_hz * slot_s))


@dataclass
class RadioParams:
    """Static physical-layer configuration.

    Powers are linear ratios over the noise floor.  ``link_budget_gain``
    multiplies every transmit-power * path-loss product and sets the SINR
    operating point without touching the geometry.
    """

    num_channels: int = 16
    num_base_stations: int = 5
    num_users: int = 30
    tx_power_to_noise: float = 6.3       # P_B / sigma^2
    jam_power_to_noise: float = 6.3      # P_J / sigma^2
    path_loss_exponent: float = -2.0     # alpha < 0
    bs_height_m: float = 50.0
    jammer_height_m: float = 10.0
    doppler_hz: float = 1.0
    slot_s: float = 0.02
    cell_radius_km: float = 2.5
    link_budget_gain: float = 1.0

    @property
    def rho(self) -> float:
        return jakes_rho(self.doppler_hz, self.slot_s)

    def validate(self) -> None:
        if self.num_channels < 1 or self.num_base_stations < 1 or self.num_users < 1:
            raise ValueError("channel/base-station/user counts must be positive")
        if self.tx_power_to_noise <= 0 or self.jam_power_to_noise < 0:
            raise ValueError("powers must be positive (jam power may be zero)")
        if self.path_loss_exponent >= 0:
            raise ValueError("path-loss exponent must be negative")
        if self.cell_radius_km <= 0 or self.slot_s <= 0:
            raise ValueError("cell radius and slot duration must be positive")
        if self.link_budget_gain <= 0:
            raise ValueError("link budget gain must be positive")
        r = self.rho
        if not 0.0 < r < 1.0:
            raise ValueError(f"fading correlation rho={r:.6f} outside (0, 1)")


def sample_cn(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard circular complex Gaussian CN(0, 1); E|h|^2 = 1."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * SQRT_HALF


@dataclass
class FadingField:
    """Complex fading coefficients of every modelled link, one per channel.

    bs_user : (N_B, N_u, N)   base station -> user
    jam_user: (N_u, N)        jammer -> user
    bs_jam  : (N_B, N)        base station -> jammer
    """

    bs_user: np.ndarray
    jam_user: np.ndarray
    bs_jam: np.ndarray
    rho: float

    @classmethod
    def initial(cls, n_bs: int, n_users: int, n_channels: int, rho: float,
                rng: np.random.Generator) -> "FadingField":
        if not 0.0 <= rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        return cls(
            bs_user=sample_cn(rng, (n_bs, n_users, n_channels)),
            jam_user=sample_cn(rng, (n_users, n_channels)),
            bs_jam=sample_cn(rng, (n_bs, n_channels)),
            rho=rho,
        )


def evolve_fading(field: FadingField, rng: np.random.Generator) -> FadingField:
    """One Gauss-Markov step  h' = rho*h + sqrt(1-rho^2)*e,  e ~ CN(0, 1).

    Marginals stay CN(0, 1) for every rho in [0, 1]; rho=1 freezes the field
    and rho=0 resamples it.  Innovations are drawn even when rho=1 so that the
    consumed random stream does not depend on rho.
    """
    rho = field.rho
    nov = math.sqrt(max(0.0, 1.0 - rho * rho))
    return FadingField(
        bs_user=rho * field.bs_user + nov * sample_cn(rng, field.bs_user.shape),
        jam_user=rho * field.jam_user + nov * sample_cn(rng, field.jam_user.shape),
        bs_jam=rho * field.bs_jam + nov * sample_cn(rng, field.bs_jam.shape),
        rho=rho,
    )


@dataclass
class Geometry:
    """Planar positions in km: base stations (N_B, 2), users (N_u, 2), jammer (2,)."""

    bs_xy: np.ndarray
    user_xy: np.ndarray
    jammer_xy: np.ndarray

    def bs_user_km(self) -> np.ndarray:
        """Horizontal distances, shape (N_B, N_u)."""
        d = self.bs_xy[:, None, :] - self.user_xy[None, :, :]
        return np.sqrt((d * d).sum(axis=2))

    def jam_user_km(self) -> np.ndarray:
        d = self.user_xy - self.jammer_xy[None, :]
        return np.sqrt((d * d).sum(axis=1))

    def bs_jam_km(self) -> np.ndarray:
        d = self.bs_xy - self.jammer_xy[None, :]
        return np.sqrt((d * d).sum(axis=1))


def coverage_mask(bs_xy: np.ndarray, radius_km: float, points_xy: np.ndarray) -> np.ndarray:
    """Boolean mask of points lying inside at least one cell disk."""
    pts = np.atleast_2d(points_xy)
    d = bs_xy[:, None, :] - pts[None, :, :]
    dist = np.sqrt((d * d).sum(axis=2))
    return (dist <= radius_km).any(axis=0)


def path_loss(horizontal_km, height_m: float, alpha: float) -> np.ndarray:
    """L = (dh^2 + dx^2 + dy^2)^(alpha/2) with every distance in metres.

    Raises on zero 3-D separation, which is singular for alpha < 0.
    """
    h_km = np.asarray(horizontal_km, dtype=float)
    d2 = (h_km * 1000.0) ** 2 + float(height_m) ** 2
    if np.any(d2 == 0.0):
        raise ValueError("zero 3-D separation between transmitter and receiver")
    return d2 ** (alpha / 2.0)


def bs_user_power(params: RadioParams, geom: Geometry, field: FadingField) -> np.ndarray:
    """Received power over noise P_B*g*L(b,u)*|h|^2 for every (b, u, c)."""
    loss = path_loss(geom.bs_user_km(), params.bs_height_m, params.path_loss_exponent)
    scale = params.tx_power_to_noise * params.link_budget_gain
    return scale * loss[:, :, None] * np.abs(field.bs_user) ** 2


def jam_user_power(params: RadioParams, geom: Geometry, field: FadingField) -> np.ndarray:
    """Jamming power over noise P_J*g*L(J,u)*|h|^2 for every (u, c)."""
    loss = path_loss(geom.jam_user_km(), params.jammer_height_m, params.path_loss_exponent)
    scale = params.jam_power_to_noise * params.link_budget_gain
    return scale * loss[:, None] * np.abs(field.jam_user) ** 2


def channel_rate_table(sig_pow: np.ndarray, tx_mask: np.ndarray,
                       jam_pow: np.ndarray | None,
                       jam_mask: np.ndarray | None) -> np.ndarray:
    """Achievable rate log2(1 + S / (I + J + 1)) for every (b, u, c).

    sig_pow : (N_B, N_u, N) received powers from ``bs_user_power``
    tx_mask : (N_B, N) 0/1, which base stations actually occupy each channel
    jam_pow : (N_u, N) from ``jam_user_power`` (None if no jammer present)
    jam_mask: (N,) 0/1 jammed channels

    Interference on (b, u, c) sums the received powers of the other
    transmitting cells; the entry for a non-transmitting b is the hypothetical
    rate b would give u on c against the same interference field.
    """
    tx = tx_mask.astype(float)
    total = np.einsum("bc,buc->uc", tx, sig_pow)
    own = tx[:, None, :] * sig_pow
    interference = total[None, :, :] - own
    denom = interference + 1.0
    if jam_pow is not None and jam_mask is not None:
        denom = denom + jam_mask.astype(float)[None, None, :] * jam_pow[None, :, :]
    return np.log2(1.0 + sig_pow / denom)


def channel_rate(sig: float, interference: float, jam: float = 0.0) -> float:
    """Scalar form of the rate law: log2(1 + S / (I + J + sigma^2)) with sigma^2 = 1."""
    return math.log2(1.0 + sig / (interference + jam + 1.0))


def listen_powers(params: RadioParams, geom: Geometry, field: FadingField,
                  tx_mask: np.ndarray) -> np.ndarray:
    """Aggregate downlink power the jammer overhears per channel, plus noise.

    N_listen[c] = sum_b tx[b,c] * P_B*g*L(b,J)*|h(b,J,c)|^2 + 1
    """
    loss = path_loss(geom.bs_jam_km(),
                     params.bs_height_m - params.jammer_height_m,
                     params.path_loss_exponent)
    scale = params.tx_power_to_noise * params.link_budget_gain
    per_bs = scale * loss[:, None] * np.abs(field.bs_jam) ** 2
    return (tx_mask.astype(float) * per_bs).sum(axis=0) + 1.0


def peak_rates(sig_pow: np.ndarray) -> np.ndarray:
    """Best interference-free rate of each channel over all (b, u) pairs."""
    return np.log2(1.0 + sig_pow.max(axis=(0, 1)))
