"""Screenplay cue mining and multiple-choice distillation training.

The pipeline runs in four stages, each usable on its own:

1. :mod:`stagecue.screenplay` parses script text into scenes, turns, and
   action lines.
2. :mod:`stagecue.extraction` mines (verbal, context, nonverbal) knowledge
   triples from those scenes, typed by where the nonverbal cue sits.
3. :mod:`stagecue.instances` converts triples into multiple-choice cloze
   instances with pooled distractors.
4. :mod:`stagecue.reader` and :mod:`stagecue.distill` train a small
   bilinear reader on the instances, including two-stage weak/clean
   schedules and teacher-student soft-label distillation.

:mod:`stagecue.synth` builds synthetic corpora with planted cues and a
known triple oracle, used for end-to-end checks.
"""

from .distill import (DatasetBundle, PRESETS, PipelineReport, TrainConfig,
                      TrainingDiverged, load_instances, mix_labels, run_pipeline,
                      save_instances, soft_labels, train_hard, train_soft,
                      train_student, train_teachers)
from .evaluate import EvalReport, MultiSeedResult, accuracy, multi_seed, per_category
from .extraction import (KnowledgeExtractor, KnowledgeTriple, Stoplist, TripleKind,
                         extract_all)
from .instances import (GenerationResult, InstanceGenerator, McInstance,
                        corpus_stats, generate_instances, truncate_context)
from .reader import (ChoiceReader, ReaderParams, build_vocab, check_gradients,
                     init_params, load_params, save_params)
from .screenplay import (ParserConfig, RawScript, Scene, ScreenplayParser,
                         ScriptDecodeError, parse_script, read_script)
from .synth import FixtureSpec, SyntheticCorpus, build_bundle, golden_scene, synthesize_corpus

__version__ = "0.1.0"

__all__ = [
    "ChoiceReader",
    "DatasetBundle",
    "EvalReport",
    "FixtureSpec",
    "GenerationResult",
    "InstanceGenerator",
    "KnowledgeExtractor",
    "KnowledgeTriple",
    "McInstance",
    "MultiSeedResult",
    "PRESETS",
    "ParserConfig",
    "PipelineReport",
    "RawScript",
    "ReaderParams",
    "Scene",
    "ScreenplayParser",
    "ScriptDecodeError",
    "Stoplist",
    "SyntheticCorpus",
    "TrainConfig",
    "TrainingDiverged",
    "TripleKind",
    "accuracy",
    "build_bundle",
    "build_vocab",
    "check_gradients",
    "corpus_stats",
    "extract_all",
    "generate_instances",
    "golden_scene",
    "init_params",
    "load_instances",
    "load_params",
    "mix_labels",
    "multi_seed",
    "parse_script",
    "per_category",
    "read_script",
    "run_pipeline",
    "save_instances",
    "save_params",
    "soft_labels",
    "synthesize_corpus",
    "train_hard",
    "train_soft",
    "train_student",
    "train_teachers",
    "truncate_context",
    "__version__",
]
