"""Syllable-level lexical stress detection.

Pipeline: pronunciation lexicon -> prosodic feature extraction -> word
instances -> masked self-attention classifier (plus per-syllable ordinal
regression / random forest baselines) -> evaluation reports.
"""

from importlib import resources

__version__ = "0.1.0"


def bundled_dictionary_path() -> str:
    """Path of the CMUdict-format sample shipped with the package."""
    return str(resources.files("stressnet").joinpath("data/cmudict_sample.txt"))
