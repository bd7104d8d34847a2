"""
cprlab: synthetic CPR signals and multi-modal denoising

This package synthesizes five-channel CPR sessions from the Babbs
hemodynamic model, corrupts them with reproducible artifacts, and removes
the artifacts with a residual CNN autoencoder plus a fusion network,
scored against NLMS and dense-autoencoder baselines.
"""

from .analytics import DenoisingAnalytics
from .babbs_simulator import (
    BabbsParams,
    CprProtocol,
    HemoState,
    PatientProfile,
    hemodynamics,
    patient_sweep,
    synthesize_session,
    synthesize_sweep,
)
from .baselines import NlmsConfig, VanillaAeConfig, nlms_denoise, vanilla_ae_denoise, vanilla_ae_fit
from .corruption import CorruptionConfig, SignalCorruptor, corrupt_session
from .dataset import CHANNELS, Dataset, SignalSession
from .denoiser import DenoiserModel, build_model, denoise_session, load_model, save_model
from .errors import CprLabError
from .manifest import TOOL_VERSION, RunManifest
from .metrics import EvalReport, correlation_matrix, evaluate, matrix_similarity, psnr_db, snr_db
from .preprocessor import SignalPreprocessor
from .trainer import DenoiserTrainer, TrainConfig, TrainHistory, fit, make_dataset
from .visualization import DenoisingDashboard

__version__ = TOOL_VERSION

__all__ = [
    'CHANNELS',
    'BabbsParams',
    'CprProtocol',
    'CorruptionConfig',
    'CprLabError',
    'Dataset',
    'DenoiserModel',
    'DenoiserTrainer',
    'DenoisingAnalytics',
    'DenoisingDashboard',
    'EvalReport',
    'HemoState',
    'NlmsConfig',
    'PatientProfile',
    'RunManifest',
    'SignalCorruptor',
    'SignalPreprocessor',
    'SignalSession',
    'TrainConfig',
    'TrainHistory',
    'VanillaAeConfig',
    'build_model',
    'correlation_matrix',
    'corrupt_session',
    'denoise_session',
    'evaluate',
    'fit',
    'hemodynamics',
    'load_model',
    'make_dataset',
    'matrix_similarity',
    'nlms_denoise',
    'patient_sweep',
    'psnr_db',
    'save_model',
    'snr_db',
    'synthesize_session',
    'synthesize_sweep',
    'vanilla_ae_denoise',
    'vanilla_ae_fit',
]
