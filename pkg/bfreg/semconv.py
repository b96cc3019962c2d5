"""
Semantic Conventions for BFReg
==============================

Standard names shared across the package: parameter names addressed by the
layers and checkpoints, knowledge-level names, span attributes written by the
run tracker, and the keys of metric reports.
"""

from typing import Any, Dict, Optional


class Levels:
    """Conventional level names of a three-level knowledge base."""
    GENE = "gene"
    PROTEIN = "protein"
    PATHWAY = "pathway"


class ParamNames:
    """
    Stable parameter names.

    Everything under ``HEAD_PREFIX`` belongs to the task head; every other
    parameter is trunk and is frozen during fine-tuning.
    """

    HEAD_PREFIX = "head."

    EMBED_W1 = "embed.w1"
    EMBED_B1 = "embed.b1"
    EMBED_W2 = "embed.w2"
    EMBED_B2 = "embed.b2"

    @staticmethod
    def attention(level: str, hop: int, part: str) -> str:
        # part: query | key | value | attention | update
        return f"{level}.hop{hop}.{part}"

    @staticmethod
    def hop_weight(level: str, hop: int) -> str:
        return f"{level}.hop{hop}.weight"

    @staticmethod
    def scorer(level: str, part: str) -> str:
        # part: w1 | b1 | w2 | b2 | pair
        return f"{level}.scorer.{part}"

    @staticmethod
    def hypergraph(level: str, hop: int) -> str:
        return f"{level}.hyper.hop{hop}.weight"

    @staticmethod
    def batch_norm(level: str, part: str) -> str:
        # part: gamma | beta
        return f"{level}.bn.{part}"

    @staticmethod
    def transition(lower: str, upper: str, part: str) -> str:
        # part: weight | bias
        return f"{lower}.to.{upper}.{part}"

    @staticmethod
    def head_layer(index: int, part: str) -> str:
        return f"head.layer{index}.{part}"

    @staticmethod
    def head_cell(part: str) -> str:
        return f"head.cell.{part}"

    @staticmethod
    def field_piece(index: int, part: str) -> str:
        # part: w1 | b1 | w2 | b2 | pair of the piece's hypernetwork
        return f"field.piece{index}.{part}"

    @classmethod
    def is_head(cls, name: str) -> bool:
        return name.startswith(cls.HEAD_PREFIX)


class SpanAttributes:
    """Attribute keys carried by tracker records."""
    RUN_ID = "run.id"
    RUN_TASK = "run.task"
    RUN_SEED = "run.seed"


class SpanKinds:
    RUN = "run"
    EPOCH = "epoch"
    DISCOVERY_RUN = "discovery_run"


class TrackerEvents:
    SPAN_END = "span.end"


class ReportKeys:
    """Top-level keys of every metrics report."""
    TASK = "task"
    SEED = "seed"
    CONFIG_HASH = "config_hash"
    KNOWLEDGE_HASH = "knowledge_hash"
    DATA_HASH = "data_hash"
    METRICS = "metrics"


def get_common_span_attributes(run_id: str, task: Optional[str],
                               seed: Optional[int]) -> Dict[str, Any]:
    """Attributes stamped on every span a tracker emits."""
    return {
        SpanAttributes.RUN_ID: run_id,
        SpanAttributes.RUN_TASK: task or "unknown",
        SpanAttributes.RUN_SEED: seed,
    }
