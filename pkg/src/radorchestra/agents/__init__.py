"""
Generative agent roles and the grounding validator
"""

from .grounding import GroundingEntry, GroundingReport, Verdict, validate_grounding
from .prompts import PromptLibrary, prompt_library
from .roles import (
    DraftReport,
    KeyFindings,
    PromptExchange,
    SynthesizedReport,
    VisualCaption,
    run_draft,
    run_refiner,
    run_synthesis,
    run_vision,
)

__all__ = [
    "DraftReport",
    "GroundingEntry",
    "GroundingReport",
    "KeyFindings",
    "PromptExchange",
    "PromptLibrary",
    "SynthesizedReport",
    "Verdict",
    "VisualCaption",
    "prompt_library",
    "run_draft",
    "run_refiner",
    "run_synthesis",
    "run_vision",
    "validate_grounding",
]
