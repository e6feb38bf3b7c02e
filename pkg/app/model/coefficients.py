# app/model/coefficients.py
import math
from dataclasses import replace

from app.errors import DomainError
from app.model.network import PipeParameters

# Standard m3 per Pa -> kSm3 per bar
SM3_PER_PA_TO_KSM3_PER_BAR = 1e5 / 1e3


def _check_positive(pipe: PipeParameters, names: tuple[str, ...]) -> None:
    bad = [n for n in names if not getattr(pipe, n) > 0]
    if bad:
        raise DomainError(f"pipeline parameters must be strictly positive: {', '.join(bad)}")


def weymouth_coefficient(pipe: PipeParameters) -> float:
    """phi = pi^2 lambda^2 R^5 / (16 X F mu T Z rho0^2).

    Units follow from ``unit_constant``; the bundled cases choose it so that
    phi is in (kSm3/h)^2 / bar^2.
    """
    _check_positive(pipe, (
        "length", "diameter", "friction", "gas_constant",
        "temperature", "compressibility", "std_density", "unit_constant",
    ))
    num = math.pi ** 2 * pipe.unit_constant ** 2 * pipe.diameter ** 5
    den = (
        16.0 * pipe.length * pipe.friction * pipe.gas_constant
        * pipe.temperature * pipe.compressibility * pipe.std_density ** 2
    )
    return num / den


def linepack_coefficient(pipe: PipeParameters) -> float:
    """K = (pi/4) X R^2 / (mu T Z rho0), standard volume per unit pressure (SI: Sm3/Pa)."""
    _check_positive(pipe, (
        "length", "diameter", "gas_constant", "temperature", "compressibility", "std_density",
    ))
    return (math.pi / 4.0) * pipe.length * pipe.diameter ** 2 / (
        pipe.gas_constant * pipe.temperature * pipe.compressibility * pipe.std_density
    )


def unit_constant_for(pipe: PipeParameters, target_phi: float) -> float:
    """Unit constant that makes ``weymouth_coefficient`` return ``target_phi``."""
    if target_phi <= 0:
        raise DomainError("target phi must be positive")
    unscaled = weymouth_coefficient(replace(pipe, unit_constant=1.0))
    return math.sqrt(target_phi / unscaled)
