"""Analysis and synthesis of low-gain integral controllers.

Submodules:

``model``      state-space plants, DC gains, slow dynamics and sensitivity
``measures``   matrix measures and contraction certificates
``lfr``        linear fractional representations and multiplier cones
``sdp``        small dense LMI layer on top of cvxopt
``synthesis``  H-infinity, robust analysis and dualized robust synthesis
``sim``        closed-loop and reduced-model simulation
``examples``   pendulum, power-system and saturated/uncertain instances
``cli``        command-line front end
"""
from .errors import LowGainError
from .kernels import BACKEND
from .lfr import ConePair, ConeSpec, DeltaMap, Lfr, make_lfr
from .model import (DcGains, IntegralController, NonlinearPlant, StateSpace, dc_gains,
                    is_hurwitz, random_stable_system, sensitivity_response)
from .synthesis import (StructureSpec, SynthesisResult, davison_gain, hinf_lti_synthesis,
                        robust_analysis, robust_synthesis)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConePair", "ConeSpec", "DcGains", "DeltaMap", "IntegralController", "Lfr",
    "LowGainError", "NonlinearPlant", "StateSpace", "StructureSpec", "SynthesisResult",
    "dc_gains", "davison_gain", "hinf_lti_synthesis", "is_hurwitz", "make_lfr",
    "random_stable_system", "robust_analysis", "robust_synthesis", "sensitivity_response",
]
