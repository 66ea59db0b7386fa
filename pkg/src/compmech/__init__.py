"""Mechanism-competition analysis (factual recall vs in-context copying) for GPT-2-class models."""

from compmech.dataset import PromptRecord, assemble_qna, assemble_redefine
from compmech.lens import AttributionGrid, TargetPair, delta_cofa
from compmech.model_io import ModelConfig, WeightSet, load_weights
from compmech.runtime import CaptureSpec, ForwardTrace, InterventionSpec, Model, forward
from compmech.tokenizer import Tokenizer, load_tokenizer

__all__ = [
    "AttributionGrid", "CaptureSpec", "ForwardTrace", "InterventionSpec", "Model", "ModelConfig",
    "PromptRecord", "TargetPair", "Tokenizer", "WeightSet", "assemble_qna", "assemble_redefine",
    "delta_cofa", "forward", "load_tokenizer", "load_weights",
]

__version__ = "0.1.0"
