"""Extraction job description."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import JobError

DEFAULT_TEMPLATE = "a photo of a {class}"


@dataclass
class ExtractionJob:
    """Everything needed to run one extraction end to end.

    ``dataset`` is either a packed image file (MISDIMG1) or a directory of
    per-class subdirectories containing image files.  ``class_names`` may be
    left empty for either source: packed files carry their own names and
    directories use the sorted subdirectory names.
    """

    model: str = "stub"
    dataset: str = ""
    class_names: list[str] = field(default_factory=list)
    template: str = DEFAULT_TEMPLATE
    embeddings_out: str = ""
    scores_out: str = ""
    batch_size: int = 64
    device: str = "cpu"
    logit_scale: float = 100.0

    def validate(self) -> None:
        if not self.dataset:
            raise JobError("a dataset path is required")
        if self.batch_size < 1:
            raise JobError(f"batch_size must be positive, got {self.batch_size}")
        if self.logit_scale <= 0:
            raise JobError(f"logit_scale must be positive, got {self.logit_scale}")
        if "{class}" not in self.template:
            raise JobError("template must contain the {class} placeholder")

    def prompt_for(self, class_name: str) -> str:
        return self.template.replace("{class}", class_name)
