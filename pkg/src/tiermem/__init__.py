"""Three-tier conversational memory: pre-compression, topic-aware short-term memory, consolidated long-term memory."""

from .core import LogicalClock, Phase, PipelineConfig, Turn, load_config, validate_config
from .ltm import LtmStore, UpdateQueue, build_update_queues, consolidate, retrieve, soft_insert
from .metering import UsageMeter, build_report, report
from .pipeline import IdleTrigger, MemoryPipeline
from .segmentation import Segmenter, TopicSegment
from .sensory import CompressedText, compress, compress_text
from .stm import MemoryEntry, StmBuffer, admit_segment, flush

__version__ = "0.1.0"

__all__ = [
    "CompressedText",
    "IdleTrigger",
    "LogicalClock",
    "LtmStore",
    "MemoryEntry",
    "MemoryPipeline",
    "Phase",
    "PipelineConfig",
    "Segmenter",
    "StmBuffer",
    "TopicSegment",
    "Turn",
    "UpdateQueue",
    "UsageMeter",
    "admit_segment",
    "build_report",
    "build_update_queues",
    "compress",
    "compress_text",
    "consolidate",
    "flush",
    "load_config",
    "report",
    "retrieve",
    "soft_insert",
    "validate_config",
]
