"""Child vs adult speaker classification from acoustic, context and language features."""

from .audio import AudioClip, PreprocessMode, load_wav, normalize_energy, remove_silence, write_wav
from .errors import KidVoiceError
from .features import FEATURE_NAMES, N_FEATURES, extract_is10
from .pipeline import Bundle, ExperimentConfig, predict, run_pipeline

__version__ = "0.1.0"
