"""Active beyond-diagonal RIS: network model, SISO closed forms, MIMO WMMSE optimization."""
from .channel import ChannelRealization, Geometry, generate_realization
from .mimo import MimoProblem, MimoState, WmmseOptions, spectral_efficiency, waterfilling_rate, wmmse_optimize
from .netcore import Architecture, NoiseModel, ThetaMatrix, validate_theta
from .siso import PowerBudget, SisoChannel, asymptotic_snr, crossover_elements

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization", "Geometry", "generate_realization",
    "MimoProblem", "MimoState", "WmmseOptions", "spectral_efficiency", "waterfilling_rate", "wmmse_optimize",
    "Architecture", "NoiseModel", "ThetaMatrix", "validate_theta",
    "PowerBudget", "SisoChannel", "asymptotic_snr", "crossover_elements",
]
