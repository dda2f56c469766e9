from .base import ADULT, KID, LabeledMatrix, Model, Standardizer, standardize_fit_transform
from .forest import RandomForestModel, Tree, train_random_forest
from .mlp import DESK_HYPER, MlpHyper, MlpModel, desk_layers, paper_layers, train_mlp
from .persist import load_model, model_from_dict, model_to_dict, save_model
from .svm import LinearSvmModel, train_svm


def predict_proba(model, x):
    """(p_adult, p_kid) for one feature vector, or an (n, 2) array for a matrix."""
    return model.predict_proba(x)
