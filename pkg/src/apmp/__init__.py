"""Augmenting-paths max-product (APMP) for binary submodular energies, with a graph-cuts oracle."""
from .apmp import apmp_solve, detect_islands, phase1_iteration, phase1_run, phase2_run, residual_view, schedule
from .energy import (
    Energy,
    RawEnergy,
    ReparamDelta,
    brute_force_map,
    canonicalize,
    energy_from_dict,
    energy_to_dict,
    evaluate,
    load_energy,
    random_instance,
)
from .equivalence import theorem1_check
from .flow import maxflow_solve
from .messages import MessageState, compute_beliefs, decode, run_strict_mp, strict_mp_round
from .reparam import belief_reparam, canonical_reparam, used_remainder

__version__ = "0.1.0"
