"""Mean field annealing restoration of blurred, noisy planar images."""

from ._accel import backend_name
from .baseline import SHARPEN_KERNEL, sharpen, sobel, wiener
from .convolve import BoundaryPolicy, Kernel, convolve2d, correlate2d, flip
from .errors import (DimensionError, DivergenceError, DomainError, FitError, MfaError,
                     ParseError, VerificationError)
from .image import ImageGrid, load, save, scale_intensity
from .mfa import (AnnealingSchedule, MfaParams, NoiseModel, RestorationTrace, anneal, gradient,
                  hamiltonian, mfa_step, quadratic_variation, stopping_indicator)
from .phantom import (Disk, PhantomSpec, Rectangle, degrade, estimate_noise_variance,
                      load_phantom_spec, psnr, render_phantom, rmse)
from .psf import (DepthTrend, Psf, fit_depth_trend, fit_sigma_to_point_source, gaussian_psf,
                  predict_sigma, verify_line_source)

__version__ = "0.1.0"
