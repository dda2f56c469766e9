from .functionals import PRIMARY_SET, VOICING_SET, FunctionalSet, compute_functionals
from .is10 import (
    FEATURE_NAMES,
    N_FEATURES,
    FrameConfig,
    Is10Vector,
    LldMatrix,
    apply_functionals,
    compute_llds,
    extract_is10,
    read_features_csv,
    resample,
    write_features_csv,
)
