"""Constraint inference from demonstrations."""
from .kkt import (KktData, RegWeights, build_kkt_data, c_step, kkt_residual, lambda_objective,
                  lambda_step)
from .greedy import AltParams, InferenceResult, alternate, cgci, igci, joint_alternate
from .exact import (RankDeficient, SignAmbiguous, detect_binding, detect_hyperplanes, exact_recover)

__all__ = [
    "AltParams", "InferenceResult", "KktData", "RankDeficient", "RegWeights", "SignAmbiguous",
    "alternate", "build_kkt_data", "c_step", "cgci", "detect_binding", "detect_hyperplanes",
    "exact_recover", "igci", "joint_alternate", "kkt_residual", "lambda_objective", "lambda_step",
]
