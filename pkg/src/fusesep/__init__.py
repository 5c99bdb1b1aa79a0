"""Fusion of deterministic and generative source-separation estimates.

Subpackages and modules:

spectral     STFT / iSTFT, mel spectrogram, Griffin-Lim, complex angle
alignment    phase/magnitude features and cross-correlation alignment
fusion       dual-head convolutional combiner, oracle weights, training
metrics      SDR, SI-SDR, SI-SDRi, Hungarian / brute-force assignment, segment MSE
bounds       discrete MI identities, Laplace+AWGN MI, rho curve, SDR bounds
synthbench   synthetic sources, simulated separators, benchmark harness
cli          the ``fusesep`` command
"""
from .kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
