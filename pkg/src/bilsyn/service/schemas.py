"""Pydantic request/response models for the synthesis service."""

from __future__ import annotations

from typing import List, Literal, Optional, Union

from pydantic import BaseModel, Field

Matrix = List[List[float]]


class SystemIn(BaseModel):
    A: Matrix
    B0: Matrix
    B: Optional[List[Matrix]] = None
    Btilde: Optional[Matrix] = None


class RegionIn(BaseModel):
    ball: Optional[float] = None
    Qz: Optional[Matrix] = None
    Sz: Optional[Matrix] = None
    Rz: Optional[Matrix] = None


class PerformanceIndexIn(BaseModel):
    gamma: Optional[float] = None
    Qp: Optional[Matrix] = None
    Sp: Optional[Matrix] = None
    Rp: Optional[Matrix] = None


class PerformanceIn(BaseModel):
    Bp: Matrix
    Cp: Matrix
    Dpu: Optional[Matrix] = None
    Dpuz: Optional[Matrix] = None
    Dpw: Optional[Matrix] = None
    index: Optional[PerformanceIndexIn] = None


class ProblemIn(BaseModel):
    system: SystemIn
    region: RegionIn
    performance: Optional[PerformanceIn] = None


Mode = Literal["linear", "gs", "gain_scheduled"]
MultiplierStructure = Literal["full", "scaled", "scaled_identity"]


class ValidateResponse(BaseModel):
    valid: bool
    errors: List[str] = Field(default_factory=list)
    N: Optional[int] = None
    m: Optional[int] = None
    has_performance: Optional[bool] = None


class SynthesizeRequest(BaseModel):
    problem: ProblemIn
    mode: Mode = "gain_scheduled"
    multiplier: MultiplierStructure = "full"
    gamma: Optional[float] = None        # None: stability-only (or problem's own index)
    performance: bool = False            # force the performance design path
    verify: bool = True
    samples: int = 2000
    seed: int = 0


class ReportResponse(BaseModel):
    report: dict


class MinimizeGammaRequest(BaseModel):
    problem: ProblemIn
    mode: Mode = "gain_scheduled"
    multiplier: MultiplierStructure = "full"
    target_p: float = 0.0
    verify: bool = True
    samples: int = 2000
    seed: int = 0


class MinimizeGammaResponse(BaseModel):
    gamma_star: float
    report: dict


class SweepRequest(BaseModel):
    problem: ProblemIn
    mode: Mode = "linear"
    multiplier: MultiplierStructure = "full"
    grid: List[float]


class SweepRowOut(BaseModel):
    P: float
    gamma: Optional[float]
    status: str


class SweepResponse(BaseModel):
    rows: List[SweepRowOut]


class ScanIn(BaseModel):
    lo: float
    hi: float
    step: float


class MaxRegionRequest(BaseModel):
    problem: ProblemIn
    mode: Mode = "linear"
    multiplier: MultiplierStructure = "full"
    scan: ScanIn
    gamma: Optional[float] = None
    refine_tol: Optional[float] = None


class ScanPointOut(BaseModel):
    radius_sq: float
    accepted: bool
    status: str


class MaxRegionResponse(BaseModel):
    radius_sq: Optional[float]
    report: Optional[dict]
    problem: Optional[dict] = None       # the problem at the boundary region
    log: List[ScanPointOut]


class ControllerIn(BaseModel):
    K: Matrix
    Kw: Matrix
    mode: str = "gain_scheduled"
    P: Optional[Matrix] = None
    LambdaTilde: Optional[Matrix] = None


class DisturbanceIn(BaseModel):
    kind: Literal["zero", "ball"] = "zero"
    delta: float = 0.0
    values: Optional[Matrix] = None      # explicit sequence overrides kind


class SimulateRequest(BaseModel):
    problem: ProblemIn
    controller: ControllerIn
    z0: List[float]
    steps: int = 200
    seed: int = 0
    wp: Optional[Union[DisturbanceIn, Matrix]] = None


class SimulateResponse(BaseModel):
    Z: Matrix
    U: Matrix
    Zp: Optional[Matrix]
    V: Optional[List[float]]
    truncated: bool
    error: Optional[str]
    final_norm: float
    max_V: Optional[float]
    warnings: List[str] = Field(default_factory=list)


class GainEstimateRequest(BaseModel):
    problem: ProblemIn
    controller: ControllerIn
    delta: float
    samples: int = 10000
    horizon: int = 200
    seed: int = 0


class GainEstimateResponse(BaseModel):
    gamma_lb: float
    samples: int
    horizon: int
    seed: int
    skipped: int


class VerifyRequest(BaseModel):
    problem: ProblemIn
    report: dict
    samples: int = 2000
    seed: int = 0


class CheckOut(BaseModel):
    name: str
    passed: bool
    detail: str


class VerifyResponse(BaseModel):
    passed: bool
    checks: List[CheckOut]
