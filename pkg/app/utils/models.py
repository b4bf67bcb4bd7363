from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.utils import config
from app.utils.errors import ConfigError


class GraphConfig(BaseModel):
    k_g: int = Field(300, ge=1, description="Neighbours kept per node in the k-NN affinity graph")
    sigma: float = Field(1.0, gt=0, description="Gaussian kernel width")
    m: int = Field(50, ge=1, description="Number of smallest Laplacian eigenvectors kept")
    dense: bool = Field(False, description="Keep every pairwise affinity instead of a k-NN graph")
    eig_method: Literal["dense", "lanczos", "auto"] = "auto"

    def fitted_to(self, n_samples: int) -> "GraphConfig":
        """Clamp k_g and m to what a graph over `n_samples` nodes can hold."""
        return self.model_copy(
            update={
                "k_g": max(1, min(self.k_g, n_samples - 1)),
                "m": min(self.m, n_samples),
            }
        )


class SolverParams(BaseModel):
    lambda1: float = Field(0.01, ge=0, description="Graph sparsity weight (SAP-I)")
    lambda2: float = Field(1e-4, ge=0, description="Sparse noise weight (SAP-II)")
    lambda3: float = Field(1e-6, ge=0, description="Projection learning weight")
    lambda4: float = Field(0.01, description="Ridge on W, keeps the Sylvester operator positive")
    graph: GraphConfig = Field(default_factory=GraphConfig)
    max_iters: int = Field(5, ge=1)
    rel_tol: float = Field(1e-4, ge=0, description="Stop when the relative objective decrease falls below this")
    lasso_tol: float = Field(config.LASSO_TOL, gt=0)
    lasso_max_sweeps: int = Field(config.LASSO_MAX_SWEEPS, ge=1)
    workers: int = Field(config.WORKERS, ge=1)
    variant: Literal["full", "sap_i_bpl", "bpl", "nn_bpl", "single_l1", "no_l1"] = "full"
    verbose: bool = Field(False, description="Show a progress bar over outer iterations")

    @field_validator("lambda4")
    @classmethod
    def lambda4_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("lambda4 must be > 0 for the Sylvester equation to be well posed")
        return v


class SyntheticSpec(BaseModel):
    d: int = Field(16, ge=1)
    k: int = Field(10, ge=1)
    p: int = Field(8, ge=1)
    q: int = Field(4, ge=1)
    images_per_class: int = Field(30, ge=1)
    K_annotated: int = Field(5, ge=0)
    noise_std: float = Field(0.05, ge=0)
    seed: int = 0
    pool_size: int = Field(0, ge=0, description="Extra unannotated seen-class images (external pool)")
    test_images_per_class: Optional[int] = Field(None, ge=1)
    density: float = Field(0.5, gt=0, le=1, description="Probability that a prototype entry is nonzero")
    min_separation: float = Field(0.0, ge=0, lt=2, description="Minimum L1 distance between any two prototypes")

    @model_validator(mode="after")
    def annotated_fits(self) -> "SyntheticSpec":
        if self.K_annotated > self.images_per_class:
            raise ValueError(
                f"K_annotated={self.K_annotated} exceeds images_per_class={self.images_per_class}"
            )
        return self


class EvalReport(BaseModel):
    per_sample_accuracy: Optional[float] = None
    per_class_accuracy: Optional[float] = None
    acc_u: Optional[float] = None
    acc_s: Optional[float] = None
    harmonic_mean: Optional[float] = None

    @field_validator("*")
    @classmethod
    def fraction(cls, v: Optional[float]) -> Optional[float]:
        if v is not None and not 0.0 <= v <= 1.0:
            raise ValueError(f"accuracy {v} outside [0, 1]")
        return v


class TrainMetrics(BaseModel):
    iterations: int
    converged: bool
    final_objective: float
    objective_trace: List[float]
    w_frobenius: float
    w_norm_bound: float
    n_samples: int
    n_annotated: int
    variant: str
    descent_violations: int = 0


class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class SelfCheckReport(BaseModel):
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class RunConfig(BaseModel):
    command: Literal["train", "eval", "gzsl-eval", "synth", "refine-tags", "selfcheck", "experiment"]
    manifest: Optional[Path] = None
    output_dir: Path = Path(config.OUTPUT_DIR)
    overrides: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0

    @model_validator(mode="after")
    def overrides_valid(self) -> "RunConfig":
        # raises on invalid lambda/graph overrides before any work starts
        self.solver_params()
        return self

    def solver_params(self) -> SolverParams:
        graph_keys = set(GraphConfig.model_fields)
        graph = {k: v for k, v in self.overrides.items() if k in graph_keys and v is not None}
        rest = {k: v for k, v in self.overrides.items() if k not in graph_keys and v is not None}
        return SolverParams(graph=GraphConfig(**graph), **rest)


def build_run_config(**kwargs: Any) -> RunConfig:
    """RunConfig constructor that reports pydantic failures as ConfigError."""
    try:
        return RunConfig(**kwargs)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e
