"""Benchmark harness: single runs, convergence studies, reference caching.

The built-in problems are the two benchmark cases the command line exposes:
a scalar relaxation equation (capacity 1, unit source, u(0) = 1, T = 1) and
a diffusion problem on [0, 1] (capacity 1, p = 1, zero source, sin(pi x)
initial data).  Reference solutions are fine-grid robust-fast solves with
epsilon = (dt_ref/T)^2, cached to disk as a 64-byte text header plus a
little-endian float64 payload.
"""

from __future__ import annotations

import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import OdeProblem, ProblemSpec, SolutionField, SpatialGrid, TimeGrid, VoOrderProfile
from .esa import EsaDivergenceError
from .schemes import solve_ode, solve_pde

__all__ = [
    "builtin_ode_problem",
    "builtin_pde_problem",
    "resolve_epsilon",
    "RunResult",
    "run_single",
    "compute_error",
    "reference_key",
    "compute_reference",
    "save_reference",
    "load_reference",
    "StudyConfig",
    "StudyRow",
    "ConvergenceReport",
    "run_convergence_study",
    "DEFAULT_STUDIES",
]

_EPS_MAX = 1.0 / math.e

SCHEMES = ("l1", "fl1", "rfl1")

_REF_MAGIC = "VOREF1"
_HEADER_BYTES = 64


def builtin_ode_problem() -> OdeProblem:
    return OdeProblem(capacity=1.0, source=lambda t: 1.0, initial=1.0, horizon=1.0)


def builtin_pde_problem() -> ProblemSpec:
    return ProblemSpec(
        capacity=1.0,
        diffusivity=lambda x: 1.0,
        initial=lambda x: np.sin(np.pi * x),
        x_left=0.0,
        x_right=1.0,
        horizon=1.0,
        source=None,
    )


def resolve_epsilon(policy, time_grid: TimeGrid) -> float:
    """Default accuracy policy: 'dt2' means (dt/T)^2; a float passes through."""
    if policy == "dt2":
        return (time_grid.dt / time_grid.horizon) ** 2
    eps = float(policy)
    if not 0.0 < eps <= _EPS_MAX:
        raise ValueError(f"epsilon must lie in (0, 1/e], got {eps!r}")
    return eps


_warmed: set[str] = set()


def _warmup(scheme: str) -> None:
    # first L1 call compiles its kernel; keep that out of timed sections
    if scheme in _warmed:
        return
    grid = TimeGrid(horizon=1.0, steps=4)
    profile = VoOrderProfile.from_endpoints(0.1, 0.2, 1.0)
    solve_ode(builtin_ode_problem(), grid, profile, scheme, resolve_epsilon("dt2", grid))
    _warmed.add(scheme)


@dataclass(frozen=True, eq=False)
class RunResult:
    field: SolutionField
    cpu_seconds: float
    retained_values: int
    quad_count: int
    scheme: str
    epsilon: float | None


def run_single(
    example: str,
    scheme: str,
    n: int,
    m: int = 0,
    alpha0: float = 0.0,
    alpha_end: float = 0.5,
    epsilon="dt2",
    final_only: bool = False,
) -> RunResult:
    """One timed solve of a built-in problem; wall clock covers the solve only."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    time_grid = TimeGrid(horizon=1.0, steps=n)
    profile = VoOrderProfile.from_endpoints(alpha0, alpha_end, 1.0)
    eps = None if scheme == "l1" else resolve_epsilon(epsilon, time_grid)
    _warmup(scheme)
    if example == "ode":
        tic = time.perf_counter()
        result = solve_ode(builtin_ode_problem(), time_grid, profile, scheme, eps)
        toc = time.perf_counter()
    elif example == "pde":
        space_grid = SpatialGrid(left=0.0, right=1.0, cells=m)
        tic = time.perf_counter()
        result = solve_pde(
            builtin_pde_problem(), time_grid, space_grid, profile, scheme, eps, final_only=final_only
        )
        toc = time.perf_counter()
    else:
        raise ValueError(f"unknown example {example!r}; expected 'ode' or 'pde'")
    return RunResult(
        field=result.field,
        cpu_seconds=toc - tic,
        retained_values=result.retained_values,
        quad_count=result.quad_count,
        scheme=scheme,
        epsilon=eps,
    )


def compute_error(solution: SolutionField, reference: SolutionField) -> float:
    """Final-time error against a finer reference sharing the same domain.

    ODE: |u^n - ref^n|.  PDE: max over the solution's spatial nodes of the
    final-time difference; the reference grid must be an integer refinement.
    """
    if solution.time_grid.horizon != reference.time_grid.horizon:
        raise ValueError("incompatible grids: different horizons")
    if reference.time_grid.steps % solution.time_grid.steps != 0:
        raise ValueError("incompatible grids: reference steps not a multiple")
    sol_is_pde = solution.space_grid is not None
    ref_is_pde = reference.space_grid is not None
    if sol_is_pde != ref_is_pde:
        raise ValueError("incompatible grids: mixing scalar and spatial fields")
    if not sol_is_pde:
        return abs(float(solution.final) - float(reference.final))
    m_sol = solution.space_grid.cells
    m_ref = reference.space_grid.cells
    if m_ref % m_sol != 0:
        raise ValueError("incompatible grids: reference cells not a multiple")
    stride = m_ref // m_sol
    return float(np.max(np.abs(solution.final - reference.final[::stride])))


def reference_key(example: str, alpha0: float, alpha_end: float, n: int, m: int) -> str:
    """16-hex-digit digest identifying a reference configuration."""
    text = f"{example}|{alpha0!r}|{alpha_end!r}|{n}|{m}|dt2"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def compute_reference(example: str, alpha0: float, alpha_end: float, n: int, m: int = 0) -> SolutionField:
    """Fine-grid robust-fast solution used as the study reference."""
    if example == "ode":
        run = run_single("ode", "rfl1", n, 0, alpha0, alpha_end)
    else:
        run = run_single("pde", "rfl1", n, m, alpha0, alpha_end, final_only=True)
    return run.field


def save_reference(path, example: str, alpha0: float, alpha_end: float, n: int, m: int = 0) -> SolutionField:
    """Compute and cache a reference; ODE stores the full trace, PDE the final row."""
    ref = compute_reference(example, alpha0, alpha_end, n, m)
    payload = np.asarray(ref.values[-1] if ref.space_grid is not None else ref.values, dtype="<f8")
    header = f"{_REF_MAGIC} {reference_key(example, alpha0, alpha_end, n, m)} {n:>12d} {m:>12d}"
    header = header.ljust(_HEADER_BYTES - 1) + "\n"
    raw = header.encode("ascii")
    if len(raw) != _HEADER_BYTES:
        raise ValueError("reference header does not fit the fixed 64-byte layout")
    with open(path, "wb") as fh:
        fh.write(raw)
        fh.write(payload.tobytes())
    return ref


def load_reference(path, example: str, alpha0: float, alpha_end: float) -> SolutionField:
    """Load a cached reference, rejecting files built from another configuration."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header, payload = raw[:_HEADER_BYTES], raw[_HEADER_BYTES:]
    parts = header.decode("ascii", errors="replace").split()
    if len(parts) != 4 or parts[0] != _REF_MAGIC:
        raise ValueError(f"not a reference cache file: {path}")
    digest, n, m = parts[1], int(parts[2]), int(parts[3])
    if digest != reference_key(example, alpha0, alpha_end, n, m):
        raise ValueError(f"stale reference cache (configuration hash mismatch): {path}")
    values = np.frombuffer(payload, dtype="<f8")
    time_grid = TimeGrid(horizon=1.0, steps=n)
    if m == 0:
        if values.shape[0] != n + 1:
            raise ValueError(f"reference payload truncated: {path}")
        return SolutionField(values=values, time_grid=time_grid)
    if values.shape[0] != m + 1:
        raise ValueError(f"reference payload truncated: {path}")
    return SolutionField(
        values=values.reshape(1, m + 1),
        time_grid=time_grid,
        space_grid=SpatialGrid(left=0.0, right=1.0, cells=m),
        final_only=True,
    )


#: desk-scale study defaults: resolutions, fixed counterpart, reference factor
DEFAULT_STUDIES = {
    ("ode", "time"): {"resolutions": (2**9, 2**10, 2**11, 2**12, 2**13), "fixed": 0, "ref_factor": 16},
    ("pde", "time"): {"resolutions": (2**8, 2**9, 2**10, 2**11, 2**12), "fixed": 2**8, "ref_factor": 8},
    ("pde", "space"): {"resolutions": (2**3, 2**4, 2**5, 2**6), "fixed": 2**12, "ref_factor": 8},
}


@dataclass(frozen=True)
class StudyConfig:
    """One convergence or cost study over a doubling resolution ladder."""

    example: str
    scheme: str
    alpha0: float
    alpha_end: float
    resolutions: tuple[int, ...]
    vary: str = "time"  # refined direction: "time" (n) or "space" (m)
    fixed: int = 0  # counterpart resolution (m for vary=time, n for vary=space)
    epsilon: float | str = "dt2"
    reference: int | str = "auto"  # resolution to compute, or a cache-file path
    out: str | None = None

    def validate(self) -> None:
        if self.example not in ("ode", "pde"):
            raise ValueError(f"unknown example {self.example!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.vary not in ("time", "space"):
            raise ValueError(f"vary must be 'time' or 'space', got {self.vary!r}")
        if self.example == "ode" and self.vary == "space":
            raise ValueError("the scalar example has no spatial resolution")
        if not self.resolutions:
            raise ValueError("resolutions must be non-empty")
        for r in self.resolutions:
            if r < 2 or r & (r - 1):
                raise ValueError(f"resolutions must be powers of two >= 2, got {r}")
        for a, b in zip(self.resolutions, self.resolutions[1:]):
            if b != 2 * a:
                raise ValueError("resolutions must double between rows (rates assume halving)")
        if self.example == "pde" and self.fixed < 2:
            raise ValueError("pde studies need the fixed counterpart resolution")
        if isinstance(self.epsilon, (int, float)):
            if not 0.0 < float(self.epsilon) <= _EPS_MAX:
                raise ValueError(f"epsilon must lie in (0, 1/e], got {self.epsilon!r}")
        elif self.epsilon != "dt2":
            raise ValueError(f"epsilon policy must be 'dt2' or a number, got {self.epsilon!r}")
        if isinstance(self.reference, int):
            top = self.resolutions[-1]
            if self.reference % top != 0 or self.reference <= top:
                raise ValueError("reference resolution must be a proper multiple of the finest row")
        if self.scheme == "fl1" and min(self.alpha0, self.alpha_end) <= 0.0:
            raise EsaDivergenceError(
                "ESA lower index diverges for vanishing order lower bound: "
                "the original-kernel fast scheme cannot run with inf alpha = 0"
            )

    def reference_resolution(self) -> int:
        if isinstance(self.reference, int):
            return self.reference
        return self.resolutions[-1] * DEFAULT_STUDIES[(self.example, self.vary)]["ref_factor"]


@dataclass(frozen=True)
class StudyRow:
    resolution: int
    error: float
    rate: float | None
    cpu_seconds: float
    retained_values: int
    quad_count: int | None


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[StudyRow, ...]
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path) -> None:
        lines = [f"# {key} = {value}" for key, value in self.metadata.items()]
        lines.append("resolution,error,rate,cpu_s,mem_values,quad_count")
        for row in self.rows:
            rate = "" if row.rate is None else repr(row.rate)
            quad = "" if row.quad_count is None else str(row.quad_count)
            lines.append(
                f"{row.resolution},{row.error!r},{rate},{row.cpu_seconds:.4f},{row.retained_values},{quad}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    def to_markdown(self) -> str:
        head = "| resolution | error | rate | cpu (s) | memory | quad terms |"
        sep = "|---|---|---|---|---|---|"
        lines = [head, sep]
        for row in self.rows:
            rate = "-" if row.rate is None else f"{row.rate:.2f}"
            quad = "-" if row.quad_count is None else str(row.quad_count)
            lines.append(
                f"| {row.resolution} | {row.error:.4e} | {rate} | {row.cpu_seconds:.2f} "
                f"| {row.retained_values:.2e} | {quad} |"
            )
        return "\n".join(lines)


def _study_reference(config: StudyConfig) -> tuple[SolutionField, str]:
    if isinstance(config.reference, str) and config.reference != "auto":
        ref = load_reference(config.reference, config.example, config.alpha0, config.alpha_end)
        return ref, f"loaded {config.reference}"
    ref_res = config.reference_resolution()
    if config.example == "ode":
        n_ref, m_ref = ref_res, 0
    elif config.vary == "time":
        n_ref, m_ref = ref_res, config.fixed
    else:
        n_ref, m_ref = config.fixed, ref_res
    ref = compute_reference(config.example, config.alpha0, config.alpha_end, n_ref, m_ref)
    return ref, f"computed rfl1 n={n_ref} m={m_ref} eps=dt2"


def run_convergence_study(config: StudyConfig) -> ConvergenceReport:
    """Run the resolution ladder, compare against the reference, rate the rows."""
    config.validate()
    reference, provenance = _study_reference(config)
    rows: list[StudyRow] = []
    for res in config.resolutions:
        n = res if config.vary == "time" else config.fixed
        m = config.fixed if config.vary == "time" else res
        run = run_single(
            config.example,
            config.scheme,
            n,
            m,
            config.alpha0,
            config.alpha_end,
            config.epsilon,
            final_only=config.example == "pde",
        )
        error = compute_error(run.field, reference)
        rows.append(
            StudyRow(
                resolution=res,
                error=error,
                rate=None,
                cpu_seconds=run.cpu_seconds,
                retained_values=run.retained_values,
                quad_count=None if config.scheme == "l1" else run.quad_count,
            )
        )
    rated = [rows[0]]
    for prev, cur in zip(rows, rows[1:]):
        rate = math.log2(prev.error / cur.error) if prev.error > 0 and cur.error > 0 else None
        rated.append(
            StudyRow(
                resolution=cur.resolution,
                error=cur.error,
                rate=rate,
                cpu_seconds=cur.cpu_seconds,
                retained_values=cur.retained_values,
                quad_count=cur.quad_count,
            )
        )
    metadata = {
        "example": config.example,
        "scheme": config.scheme,
        "alpha0": config.alpha0,
        "alpha_end": config.alpha_end,
        "vary": config.vary,
        "fixed": config.fixed,
        "epsilon": config.epsilon,
        "reference": provenance,
        "date": time.strftime("%Y-%m-%d %H:%M:%S"),
    }
    report = ConvergenceReport(rows=tuple(rated), metadata=metadata)
    if config.out is not None:
        report.to_csv(config.out)
    return report
