from pathlib import Path
from typing import Optional, List, Dict, Any

from pydantic import BaseModel, Field, FilePath, field_validator

from config import settings
from models import PoolMode, PoolStructure

# Knob bundles
class DominantSetConfig(BaseModel):
    tol: float = Field(1e-8, gt=0)
    max_iter: int = Field(10000, ge=1)
    support_threshold: float = Field(1e-5, gt=0, lt=1)

    @classmethod
    def from_settings(cls) -> "DominantSetConfig":
        return cls(
            tol=settings.tol,
            max_iter=settings.max_iter,
            support_threshold=settings.support_threshold,
        )

class CliConfig(BaseModel):
    subcommand: str
    inputs: List[FilePath] = []
    outputs: List[str] = []
    structure: Optional[PoolStructure] = None
    tol: float = Field(settings.tol, gt=0)
    max_iter: int = Field(settings.max_iter, ge=1)
    support_threshold: float = Field(settings.support_threshold, gt=0, lt=1)
    depth: int = Field(settings.max_depth, ge=1)
    seed: int = Field(settings.seed, ge=0)
    learning_rate: float = Field(settings.learning_rate, ge=0)
    epochs: int = Field(settings.epochs, ge=0)

    @field_validator("outputs")
    @classmethod
    def output_dirs_exist(cls, outputs: List[str]) -> List[str]:
        for output in outputs:
            if not Path(output).parent.is_dir():
                raise ValueError(f"directory of output {output} does not exist")
        return outputs

    def domset_config(self) -> DominantSetConfig:
        return DominantSetConfig(
            tol=self.tol, max_iter=self.max_iter, support_threshold=self.support_threshold
        )

    def provenance(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude={"subcommand", "inputs", "outputs"})

class SyntheticConfig(BaseModel):
    num_classes: int = Field(4, ge=1)
    objects_per_class: int = Field(40, ge=1)
    n_views: int = Field(12, ge=1)
    dim: int = Field(64, ge=1)
    groups: Optional[List[List[int]]] = None
    noise_sigma: float = Field(0.05, ge=0)
    seed: int = Field(0, ge=0)
    orthogonal_groups: bool = True
    signal_groups: Optional[List[int]] = None
    distractor_level: float = Field(0.0, ge=0)

    def view_groups(self) -> List[List[int]]:
        if self.groups is not None:
            return self.groups
        count = min(3, self.n_views)
        return [list(range(self.n_views))[g::count] for g in range(count)]

# Hierarchy schemas
class HierarchyLevelSchema(BaseModel):
    partition: List[List[int]]
    mode: PoolMode

class HierarchySchema(BaseModel):
    n: int = Field(..., ge=1)
    structure: PoolStructure
    levels: List[HierarchyLevelSchema]
    final_mode: PoolMode
    max_depth: int = Field(settings.max_depth, ge=1)

# Trace schemas
class TraceLevelSchema(BaseModel):
    n_nodes: int
    partition: List[List[int]]
    mode: PoolMode
    argmax: List[Optional[List[int]]]

class TraceSchema(BaseModel):
    n_input: int
    dim: int
    node_counts: List[int]
    levels: List[TraceLevelSchema]
    final_mode: PoolMode
    final_argmax: Optional[List[int]] = None

# Dataset manifest schemas
class ManifestObject(BaseModel):
    id: str = Field(..., min_length=1)
    label: int = Field(..., ge=0)
    features: str = Field(..., min_length=1)

class DatasetManifest(BaseModel):
    classes: int = Field(..., ge=1)
    objects: List[ManifestObject] = Field(..., min_length=1)

# Model file schemas
class ClassifierSchema(BaseModel):
    weights: List[List[float]]
    bias: List[float]
    feature_mean: List[float]
    feature_scale: List[float]
    loss: str = Field("softmax", pattern="^(softmax|hinge)$")
    learning_rate: float = Field(..., ge=0)
    epochs: int = Field(..., ge=0)
    l2: float = Field(..., ge=0)

class FrontEndSchema(BaseModel):
    weights: List[List[float]]
    bias: List[float]

class ModelSchema(BaseModel):
    mode: str = Field(..., pattern="^(fast|e2e)$")
    hierarchy: HierarchySchema
    classifier: ClassifierSchema
    front_end: Optional[FrontEndSchema] = None

# Command responses
class ClusterResponse(BaseModel):
    clusters: List[List[int]]
    config: Dict[str, Any]

class HierarchyResponse(BaseModel):
    structure: PoolStructure
    node_counts: List[int]
    config: Dict[str, Any]

class GradientCheckResponse(BaseModel):
    structure: PoolStructure
    max_relative_error: float
    threshold: float
    passed: bool
    tie_channels: List[int]
    config: Dict[str, Any]

class TrainResponse(BaseModel):
    mode: str
    structure: PoolStructure
    train_accuracy: float
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    node_counts: List[int]
    config: Dict[str, Any]

class SynthResponse(BaseModel):
    manifests: Dict[str, str]
    objects: int
    config: Dict[str, Any]

class EvaluationResponse(BaseModel):
    accuracy: float
    objects: int
    config: Dict[str, Any]

class StructureSummary(BaseModel):
    structure: PoolStructure
    mode: str
    mean_accuracy: float
    min_accuracy: float
    max_accuracy: float
    accuracies: List[float]

class CompareResponse(BaseModel):
    seeds: List[int]
    results: List[StructureSummary]
    config: Dict[str, Any]
