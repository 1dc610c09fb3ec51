from .configs import ClassScheme, EmotionAxis, RunConfig, SynthSpec, TrainConfig, TransformerConfig
from .maps import ImageTensor, MapKind, SmoothingWindows, TimeFreqMap, TransformMethod, TransformSettings
from .results import FoldMetrics, FoldPlan, FoldReport, LossRow, MeanMetrics, Metrics, PretrainResult
from .signals import (FilterKind, FilterResult, FilterSpec, Modality, NormalizationParams,
                      PreprocessResult, PreprocessSettings, Segment, Signal)
from .tokens import (EncodedSequence, FinetuneBatch, MaskPlan, MatchExample, PatchGrid, PreparedExample,
                     PretrainBatch, RawExample, TokenModality, TokenSequence)
