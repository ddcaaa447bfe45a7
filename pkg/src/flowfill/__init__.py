"""Flow-matching speech infilling on a toy speech process.

Subpackages and modules:

- ``flowfill.numeric``: arrays with reverse-mode gradients, RNG streams, layers, optimizer
- ``flowfill.flow``: conditional OT paths and the masked flow-matching loss
- ``flowfill.ode``: fixed-step and adaptive solvers with NFE accounting
- ``flowfill.sequence``: alignments, ghost silences, masks
- ``flowfill.network``: the transformer vector field and checkpoints
- ``flowfill.duration``: duration regression and duration flow
- ``flowfill.tasks``: zero-shot TTS, transfer, denoising, editing, sampling
- ``flowfill.metrics``: Fréchet distances, duration metrics, style and phone scores
- ``flowfill.synth``: the toy generative process and dataset files
- ``flowfill.training``: training loops
"""

from .flow import SIGMA_MIN, conditional_flow, conditional_vector_field, ot_mean_std
from .network import FieldNet, NetConfig
from .ode import SolverConfig, solve, solve_guided
from .synth import ToyProcess, ToyProcessSpec, generate_dataset

__version__ = "0.1.0"

__all__ = [
    "SIGMA_MIN",
    "FieldNet",
    "NetConfig",
    "SolverConfig",
    "ToyProcess",
    "ToyProcessSpec",
    "conditional_flow",
    "conditional_vector_field",
    "generate_dataset",
    "ot_mean_std",
    "solve",
    "solve_guided",
]
