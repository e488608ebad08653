"""cbctus: synthetic robotic CBCT-ultrasound co-registration toolkit.

Hand-eye calibration, phantom simulation, Doppler-guided vessel mapping
into a CT-like volume, and automatic needle trajectory planning, all
verifiable against analytic ground truth.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
