"""Information dimension and rate-distortion dimension toolkit."""
from .entropy_lab import block_entropy, conditional_entropy, count_blocks
from .id_estimator import DimensionEstimate, fit_dk, fit_do, id_sweep
from .process_models import ContinuousSpec, ProcessSpec, sample_path, validate_spec
from .quantizer import QuantScheme, quantize_array, quantize_path
from .rd_solver import blahut_arimoto, discretize_source, log_s_grid, rd_curve
from .rdd_estimator import fit_rdd, rdd_of_process, select_window

__version__ = "0.1.0"
