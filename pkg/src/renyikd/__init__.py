"""Matrix-based Renyi entropy, mutual information and relation-distillation losses."""

from .entropy import (
    EntropyOrder,
    entropy,
    entropy_eig,
    entropy_frob,
    joint_entropy,
    multivariate_mi,
    mutual_information,
)
from .gram import GramMatrix, hadamard_joint, linear_gram, normalize_def1, trace_normalize
from .losses import LossBreakdown, LossWeights, loss_d, loss_info, loss_r, toy_structure_loss
from .relation import RelationParams, init_params, relation_forward
from .tensor import flatten_batch, l2_normalize_rows, load_tensor, save_tensor

__version__ = "0.1.0"
