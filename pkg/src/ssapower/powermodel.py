"""Transmit-power distributions that equalize SNIR under cancellation.

In a slotted random-access channel with spread-spectrum signatures, a
gateway that cancels decoded users in descending power order leaves each
user facing noise plus the residual of everyone stronger and the full
power of everyone weaker.  If every terminal draws its transmit power
independently from a suitably shaped distribution, the resulting
signal-to-noise-and-interference ratio comes out the same at every power
level, so no user is privileged and no feedback loop is needed.

This module solves for that distribution under three cancellation
models:

* ``PerfectSic``        - a cancelled user vanishes completely;
* ``FractionalResidual``- a fraction ``alpha`` of the cancelled power
                          stays in the slot;
* ``ConstantResidual``  - each cancellation leaves a fixed residual
                          power ``epsilon`` behind.

The solved :class:`PowerModel` exposes the density, CDF, quantile and
sampling in linear and decibel units, plus the per-power interference
expectation whose flatness is the whole point of the construction.
Supported load is reported as ``beta``, the ratio of users per slot to
chips per symbol.
"""

import math
from dataclasses import dataclass

import numpy as np

from .lambertw import lambert_w0, _w0_from_ln

__all__ = [
    "PerfectSic",
    "FractionalResidual",
    "ConstantResidual",
    "SicModel",
    "ChannelParams",
    "PowerModel",
    "InfeasibleConfigError",
    "solve_model",
    "to_db",
    "from_db",
]

_LN10 = math.log(10.0)


class InfeasibleConfigError(ValueError):
    """No power distribution exists for the requested parameters."""


def to_db(p):
    """Linear power (or power ratio) to decibels, 10*log10(p)."""
    return 10.0 * np.log10(p)


def from_db(theta):
    """Decibels back to linear units, 10**(theta/10)."""
    return np.power(10.0, np.asarray(theta, dtype=float) / 10.0)


@dataclass(frozen=True)
class PerfectSic:
    """Cancellation removes a decoded user's waveform entirely."""


@dataclass(frozen=True)
class FractionalResidual:
    """Cancellation leaves the fraction ``alpha`` of the user's power.

    alpha = 0 reduces to perfect cancellation; alpha -> 1 means
    cancellation does nothing.  Values are restricted to [0, 1).
    """

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha!r}")


@dataclass(frozen=True)
class ConstantResidual:
    """Cancellation leaves a fixed residual power ``epsilon``.

    epsilon is in the same linear units as the transmit powers and must
    not exceed the power ceiling of the channel it is paired with
    (checked at solve time, since the ceiling lives in ChannelParams).
    """

    epsilon: float

    def __post_init__(self):
        if not self.epsilon >= 0.0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon!r}")


SicModel = PerfectSic | FractionalResidual | ConstantResidual


@dataclass(frozen=True)
class ChannelParams:
    """Operating point shared by the analysis and the simulator.

    noise_power  - variance of the complex noise sample at the
                   despreader output (signatures have unit energy, so
                   this equals the per-chip complex noise variance);
    target_snir  - the common SNIR every power level must attain;
    pmax         - transmit power ceiling of the terminals.

    All linear units.  target_snir * noise_power <= pmax is required,
    otherwise even a lone user at full power cannot reach the target.
    """

    noise_power: float
    target_snir: float
    pmax: float

    def __post_init__(self):
        for name in ("noise_power", "target_snir", "pmax"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be a positive finite number, got {v!r}")
        if self.target_snir * self.noise_power > self.pmax:
            raise ValueError(
                "target_snir * noise_power exceeds pmax "
                f"({self.target_snir * self.noise_power!r} > {self.pmax!r}); "
                "no power level can reach the target"
            )


@dataclass(frozen=True)
class PowerModel:
    """A solved power distribution for one cancellation model.

    pmin and beta are outputs of :func:`solve_model`, not free knobs:
    pmin is where the support must start for the weakest user to hit
    the target, and beta is the largest users-per-chip load the
    distribution can carry while keeping the SNIR flat.

    With ``degenerate`` set (constant residual exactly at the power
    ceiling) the distribution collapses to a point mass at pmax; pmin
    and beta are still meaningful limits but the distribution methods
    refuse to evaluate.
    """

    sic: SicModel
    params: ChannelParams
    pmin: float
    beta: float
    degenerate: bool = False

    @property
    def pmax(self) -> float:
        return self.params.pmax

    @property
    def _eps(self) -> float:
        # support offset: densities go like 1/(p - eps)
        return self.sic.epsilon if isinstance(self.sic, ConstantResidual) else 0.0

    @property
    def _log_span(self) -> float:
        # ln((pmax-eps)/(pmin-eps)); normalizes every density below
        return math.log((self.pmax - self._eps) / (self.pmin - self._eps))

    def _require_distribution(self):
        if self.degenerate:
            raise ValueError(
                "degenerate model (epsilon == pmax): the distribution is a "
                "point mass at pmax and cannot be evaluated"
            )

    # -- distribution in linear units ------------------------------------

    def pdf(self, p):
        """Density of the transmit power; zero outside [pmin, pmax]."""
        self._require_distribution()
        p = np.asarray(p, dtype=float)
        inside = (p >= self.pmin) & (p <= self.pmax)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 1.0 / (self._log_span * (p - self._eps))
        out = np.where(inside, val, 0.0)
        return out if out.ndim else float(out)

    def cdf(self, p):
        """Distribution function; clamps to 0 and 1 outside the support."""
        self._require_distribution()
        p = np.asarray(p, dtype=float)
        eps = self._eps
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.log((p - eps) / (self.pmin - eps)) / self._log_span
        out = np.where(p <= self.pmin, 0.0, np.where(p >= self.pmax, 1.0, val))
        return out if out.ndim else float(out)

    def quantile(self, u):
        """Inverse CDF on [0, 1]; u=0 gives pmin, u=1 gives pmax."""
        self._require_distribution()
        u = np.asarray(u, dtype=float)
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValueError("quantile argument must lie in [0, 1]")
        eps = self._eps
        out = eps + (self.pmin - eps) * np.exp(u * self._log_span)
        return out if out.ndim else float(out)

    def sample(self, rng: np.random.Generator, count: int):
        """Draw ``count`` i.i.d. powers by inverse transform.

        Consumes exactly ``count`` uniforms from ``rng``, so a fixed
        seed pins the draw no matter which cancellation model shaped
        the distribution.
        """
        self._require_distribution()
        if count < 0:
            raise ValueError(f"count must be >= 0, got {count!r}")
        return self.quantile(rng.random(count))

    # -- distribution over decibels --------------------------------------

    def pdf_db(self, theta):
        """Density of the power expressed in dB (change of variables).

        For perfect and fractional-residual cancellation this is flat
        over [to_db(pmin), to_db(pmax)]; a constant residual tilts it.
        """
        p = from_db(theta)
        out = self.pdf(p) * p * (_LN10 / 10.0)
        return out if isinstance(out, np.ndarray) else float(out)

    # -- design targets ---------------------------------------------------

    def expected_interference(self, p):
        """Mean post-cancellation interference power seen at level p.

        Averages over the co-slot population: weaker users count at
        full power, stronger (hence already cancelled) users at their
        model residual.  Affine in p for every cancellation model.
        """
        self._require_distribution()
        p = np.asarray(p, dtype=float)
        tol = 1e-9 * self.pmax
        if np.any(p < self.pmin - tol) or np.any(p > self.pmax + tol):
            raise ValueError(
                f"power outside the support [{self.pmin!r}, {self.pmax!r}]"
            )
        p = np.clip(p, self.pmin, self.pmax)
        g = self.params.target_snir
        if isinstance(self.sic, FractionalResidual):
            a = self.sic.alpha
            out = ((p - self.pmin) + a * (self.pmax - p)) / (g * (1.0 - a))
        elif isinstance(self.sic, ConstantResidual):
            out = (p - self.pmin) / g + self.sic.epsilon * self.beta / 2.0
        else:
            out = (p - self.pmin) / g
        return out if out.ndim else float(out)

    def snir(self, p):
        """Analytic SNIR at power p; equals target_snir across the support."""
        p_arr = np.asarray(p, dtype=float)
        out = p_arr / (self.params.noise_power + self.expected_interference(p))
        return out if out.ndim else float(out)


def solve_model(sic: SicModel, params: ChannelParams) -> PowerModel:
    """Find the support floor and carried load for a cancellation model.

    The flat-SNIR requirement fixes the density shape up to its support,
    and two boundary conditions pin the rest: the weakest user must meet
    the target against everyone else's residuals, and the density must
    integrate to one.  Closed forms:

    * perfect:    pmin = g*N0,  beta = (2/g) ln(pmax/pmin)
    * fractional: pmin = (1-alpha) g N0 + alpha pmax,
                  beta = (2/(g(1-alpha))) ln(pmax/pmin)
    * constant:   pmin = eps (1 + W0(e^{g N0/eps - 1} (pmax-eps)/eps)),
                  beta = (2/g) ln((pmax-eps)/(pmin-eps))

    with g the target SNIR and N0 the noise power.  The constant-residual
    pair satisfies the simultaneous equations pmin = g (N0 + eps beta/2)
    and the log relation; note the "+1" sits outside the W0 call, which
    is what the simultaneous equations demand.

    Raises InfeasibleConfigError when the support would collapse
    (g*N0 == pmax) and ValueError when eps exceeds pmax.  eps == pmax
    returns the degenerate point-mass model with the limiting beta.
    """
    g = params.target_snir
    n0 = params.noise_power
    pmax = params.pmax
    floor = g * n0

    if isinstance(sic, ConstantResidual) and sic.epsilon > pmax:
        raise ValueError(
            f"epsilon exceeds pmax ({sic.epsilon!r} > {pmax!r}); the residual "
            "would be stronger than any signal"
        )
    if floor >= pmax:
        # ChannelParams already rejects floor > pmax; equality lands here
        raise InfeasibleConfigError(
            f"target_snir * noise_power == pmax ({floor!r}): the support "
            "collapses to a single point and no load can be carried"
        )

    if isinstance(sic, FractionalResidual):
        a = sic.alpha
        pmin = (1.0 - a) * floor + a * pmax
        beta = (2.0 / (g * (1.0 - a))) * math.log(pmax / pmin)
        return PowerModel(sic=sic, params=params, pmin=pmin, beta=beta)

    if isinstance(sic, ConstantResidual) and sic.epsilon > 0.0:
        eps = sic.epsilon
        if eps == pmax:
            beta = 2.0 * (pmax - floor) / (g * pmax)
            return PowerModel(sic=sic, params=params, pmin=pmax, beta=beta,
                              degenerate=True)
        ln_arg = floor / eps - 1.0 + math.log((pmax - eps) / eps)
        if ln_arg > 690.0:
            # exp(ln_arg) overflows for small eps; solve in log form
            w = _w0_from_ln(ln_arg)
        else:
            w = lambert_w0(math.exp(ln_arg))
        pmin = eps * (1.0 + w)
        if w < 0.5:
            # near the point-mass limit pmin - eps cancels badly; the
            # identity ln w = ln_arg - w rewrites the log without it
            beta = (2.0 / g) * (w + 1.0 - floor / eps)
        else:
            beta = (2.0 / g) * math.log((pmax - eps) / (pmin - eps))
        return PowerModel(sic=sic, params=params, pmin=pmin, beta=beta)

    # perfect cancellation, and the eps == 0 constant-residual reduction
    pmin = floor
    beta = (2.0 / g) * math.log(pmax / pmin)
    return PowerModel(sic=sic, params=params, pmin=pmin, beta=beta)
