"""
Pipeline configuration.

One JSON document holds every module default.  All fields are optional;
unknown keys are rejected.  Library functions keep their own keyword
defaults (the same values), so the config only feeds the command line.
"""
import hashlib
import json
from typing import Dict, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator

from momentkit.exceptions import InputError


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class SegmentationSettings(_Section):
    sigma: float = Field(2.0, gt=0)
    threshold: Union[Literal['adaptive'], float] = 'adaptive'
    threshold_c: float = 1.0
    merge_threshold: float = 1.0
    min_event_frames: int = Field(3, ge=1)
    until_fixpoint: bool = False


class TrackingSettings(_Section):
    iou_min: float = Field(0.3, ge=0, le=1)
    feature_cos_min: float = Field(0.5, ge=-1, le=1)
    max_gap_frames: int = Field(5, ge=0)
    iou_weight: float = 1.0
    feature_weight: float = 1.0


class TemporalSettings(_Section):
    n_anchors: int = Field(300, ge=2)
    n_frames: int = Field(300, ge=1)
    dim: int = Field(64, ge=1)
    include_self: bool = True


class TrainingSettings(_Section):
    n_anchors: int = Field(64, ge=2)
    dim: int = Field(16, ge=1)
    learning_rate: float = Field(0.1, gt=0)
    steps: int = Field(500, ge=0)
    supervise_every: int = Field(8, ge=1)
    include_self: bool = True
    random_targets: bool = False


class MetricsSettings(_Section):
    grounding_thresholds: Tuple[float, ...] = (0.3, 0.5, 0.7)
    f1_overlaps: Tuple[float, ...] = (0.10, 0.25, 0.50)
    fps: float = Field(1.0, gt=0)
    iou_grid: Tuple[float, ...] = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
                                   0.85, 0.9, 0.95)


class LlmSettings(_Section):
    endpoint: Optional[str] = None
    model: str = 'vicuna-7b'
    token_env: str = 'MOMENT_LLM_TOKEN'
    max_in_flight: int = Field(4, ge=1)
    retries: int = Field(3, ge=0)
    timeout: float = Field(60.0, gt=0)
    backoff: float = Field(0.5, ge=0)


class PipelineConfig(_Section):
    """
    Every tunable of the pipeline, grouped by module.

    Examples
    --------
    >>> PipelineConfig().segmentation.sigma
    2.0
    >>> PipelineConfig.model_validate({'tracking': {'iou_min': 0.4}}
    ...                               ).tracking.iou_min
    0.4
    """
    seed: int = 0
    segmentation: SegmentationSettings = SegmentationSettings()
    tracking: TrackingSettings = TrackingSettings()
    temporal: TemporalSettings = TemporalSettings()
    training: TrainingSettings = TrainingSettings()
    metrics: MetricsSettings = MetricsSettings()
    llm: LlmSettings = LlmSettings()
    plan: Dict[str, int] = Field(default_factory=dict)
    extra_examples: Dict[str, Tuple[str, ...]] = Field(default_factory=dict)

    @field_validator('plan')
    @classmethod
    def _counts_non_negative(cls, plan):
        bad = {k: v for k, v in plan.items() if v < 0}
        if bad:
            raise ValueError(f'plan counts must be non-negative: {bad}')
        return plan

    def canonical_json(self):
        """Sorted-key JSON of every field, defaults included."""
        return json.dumps(self.model_dump(mode='json'), sort_keys=True,
                          separators=(',', ':'))

    @property
    def config_hash(self):
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def updated(self, section, **values):
        """A copy with the non-None `values` replaced in one section."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        current = getattr(self, section)
        merged = type(current).model_validate({**current.model_dump(),
                                               **values})
        return self.model_copy(update={section: merged})


def load_config(path=None):
    """
    Read a config file, or the defaults when `path` is None.

    Raises
    ------
    InputError
        If the document has unknown keys or invalid values.
    """
    if path is None:
        return PipelineConfig()
    with open(path, encoding='utf-8') as f:
        text = f.read()
    try:
        return PipelineConfig.model_validate_json(text)
    except ValueError as e:
        raise InputError(f'Invalid config {path}: '
                         f'{" ".join(str(e).split())}')


def validate_plan(plan):
    """
    Check a task plan given outside a config file.

    Counts must be JSON integers (not strings or booleans) and non-negative.

    Raises
    ------
    InputError
        If `plan` is not a mapping of task names to such counts.

    Examples
    --------
    >>> validate_plan({'segment_qa': 2})
    {'segment_qa': 2}
    """
    if not isinstance(plan, dict):
        raise InputError('plan must be a JSON object of task counts')
    try:
        return PipelineConfig.model_validate({'plan': plan}, strict=True).plan
    except ValueError as e:
        raise InputError(f'Invalid plan: {" ".join(str(e).split())}')
