"""Question-conditioned region-of-interest toolkit.

Scores image regions against a question via gradient-weighted attention
relevance, turns the winning regions into a single normalized bounding
box, builds two-turn instruct-tuning records around it, and drives the
two-pass locate/answer inference loop against a pluggable model oracle.
"""

from .dataset import (
    AnnotateConfig,
    AnnotatedRecord,
    QaPair,
    annotate,
    read_dump,
    read_records,
    sample_one_qa,
    write_dump,
    write_records,
)
from .inference import InferConfig, MockOracle, OracleTranscript, StdioOracle, run_two_step
from .prompt import Conversation, Turn, build_conversation, build_inst1, build_inst2
from .relevance import (
    AttentionDump,
    RegionScores,
    RelevanceMap,
    attention_forward,
    attention_interpreter,
    propagate_relevance,
    region_scores,
    softmax_backward,
)
from .roi import (
    RegionCatalog,
    RoiBox,
    encode_ans1,
    extend_clamp,
    parse_ans1,
    quantize,
    threshold_mask,
    union_bbox,
)

__version__ = "0.1.0"
