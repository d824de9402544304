"""Speaker classification accuracy (SCA) harness."""
from .adversarial import AdversarialResult, proportions_differ, run_adversarial_arm, train_adversarial_projection
from .arms import ARMS, ExperimentSpec, SCADataset, Split, arm_features, prepare_arm, split_utterances
from .corpus import CUES, SpeakerProfile, SyntheticCorpus, SyntheticCorpusSpec, Utterance, generate_corpus
from .training import SCAReport, accuracy, evaluate_sca, format_table, run_experiment, train_probe_until_plateau

__all__ = [
    "ARMS", "CUES", "AdversarialResult", "ExperimentSpec", "SCADataset", "SCAReport", "SpeakerProfile",
    "Split", "SyntheticCorpus", "SyntheticCorpusSpec", "Utterance", "accuracy", "arm_features",
    "evaluate_sca", "format_table", "generate_corpus", "prepare_arm", "proportions_differ",
    "run_adversarial_arm", "run_experiment", "split_utterances", "train_adversarial_projection",
    "train_probe_until_plateau",
]
