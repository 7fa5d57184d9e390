"""Adaptive-quantization secret key generation from reciprocal RSSI traces."""

from .complexity import lz76, normalized_complexity
from .protocol import run_session
from .quantizer import BitKey, QuantParams, compute_thresholds, quantize_block
from .reconciliation import CalibrationPolicy, correct, make_recon_message, privacy_amplify
from .selector import AdaptiveModel, reference_model, resolve_model, select_params
from .traces import ProbeSession, RssiSample, RssiTrace, SimConfig, align, load_trace, simulate
from .training import build_training_set, fit_model, optimal_block_params

__version__ = "0.1.0"

__all__ = [
    "AdaptiveModel", "BitKey", "CalibrationPolicy", "ProbeSession", "QuantParams",
    "RssiSample", "RssiTrace", "SimConfig", "align", "build_training_set",
    "compute_thresholds", "correct", "fit_model", "load_trace", "lz76",
    "make_recon_message", "normalized_complexity", "optimal_block_params",
    "reference_model", "privacy_amplify", "quantize_block", "resolve_model",
    "run_session", "select_params", "simulate",
]
