"""Gate-set tomography of mid-circuit measurements with gauge-invariant error strengths."""

__version__ = "0.1.0"

from .pauli_algebra import Circuit, QuantumInstrument, ValidationError, circuit_probability, dumps
from .error_generators import EegIndex, all_eeg_indices, eeg_matrix, project_onto_eegs
from .mcm_gadget import InstrumentDeviation, crunch, first_order_deviation, ideal_instrument
from .fomgi import LABELS, ErrorStrengthReport, basis, classify, composites, extract
from .models import GateSetModel, TruthModelConfig, build_truth_model, ideal_gateset
from .experiments import CircuitDataset, design_circuits, sample_dataset
from .inference import FitReport, bootstrap_decomposition, decompose, evidence_ratio, fit, n_sigma
from .iq_readout import Classifier, IqConfig, postselect, simulate_iq, train_classifier

__all__ = [
    "__version__",
    "Circuit", "QuantumInstrument", "ValidationError", "circuit_probability", "dumps",
    "EegIndex", "all_eeg_indices", "eeg_matrix", "project_onto_eegs",
    "InstrumentDeviation", "crunch", "first_order_deviation", "ideal_instrument",
    "LABELS", "ErrorStrengthReport", "basis", "classify", "composites", "extract",
    "GateSetModel", "TruthModelConfig", "build_truth_model", "ideal_gateset",
    "CircuitDataset", "design_circuits", "sample_dataset",
    "FitReport", "bootstrap_decomposition", "decompose", "evidence_ratio", "fit", "n_sigma",
    "Classifier", "IqConfig", "postselect", "simulate_iq", "train_classifier",
]  # fmt: skip
