from __future__ import annotations

import json
import logging
import math
import time
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix

from voxtop.models import Export
from voxtop.models.Domain import DesignDomain, ProblemSpec, fixed_dofs_for_case, force_vector
from voxtop.models.FEA import (
    MaterialModel,
    compliance_and_sensitivity,
    element_stiffness,
    solve_equilibrium,
)
from voxtop.utils.Constants import SIMPDefaults
from voxtop.utils.Errors import ConvergenceError, OptimizerError
from voxtop.utils.Helpers import as_field, flatten_field


class FilterKernel:
    def __init__(self, domain: DesignDomain, rmin: float):
        """
        Density filter weights h_ij = rmin - dist(i, j) over element centers closer than rmin

        rmin is in meters. Weights are held as a symmetric scipy CSR matrix H together with
        the element volumes v and the row normalization Hs_i = sum_j h_ij v_j
        """
        if not rmin > 0:
            raise ValueError(f"Invalid filter radius: '{rmin}'")

        self.domain = domain
        self.rmin = rmin
        self.volumes = np.full(domain.element_count, domain.element_volume)

        reach = int(math.ceil(rmin / domain.h))
        nx, ny, nz = domain.shape
        ex, ey, ez = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
        ex, ey, ez = (flatten_field(a) for a in (ex, ey, ez))
        rows, cols, vals = [], [], []
        for di in range(-reach, reach + 1):
            for dj in range(-reach, reach + 1):
                for dk in range(-reach, reach + 1):
                    dist = domain.h * math.sqrt(di * di + dj * dj + dk * dk)
                    if dist >= rmin:
                        continue
                    tx, ty, tz = ex + di, ey + dj, ez + dk
                    ok = (tx >= 0) & (tx < nx) & (ty >= 0) & (ty < ny) & (tz >= 0) & (tz < nz)
                    src = ex[ok] + nx * (ey[ok] + ny * ez[ok])
                    dst = tx[ok] + nx * (ty[ok] + ny * tz[ok])
                    rows.append(src)
                    cols.append(dst)
                    vals.append(np.full(src.shape, rmin - dist))

        n = domain.element_count
        self.H = coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        self.Hs = self.H @ self.volumes

    @property
    def neighbor_counts(self) -> np.ndarray:
        return np.diff(self.H.indptr)


def density_filter(x: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """
    Weighted neighborhood average: x~_i = sum_j h_ij v_j x_j / sum_j h_ij v_j

    Accepts either an x-fastest vector or an (nx, ny, nz) array and returns the same layout
    """
    if np.ndim(x) == 3:
        flat = flatten_field(x)
        return as_field(kernel.H @ (kernel.volumes * flat) / kernel.Hs, x.shape)
    return kernel.H @ (kernel.volumes * x) / kernel.Hs


def filter_sensitivity(dc: np.ndarray, kernel: FilterKernel) -> np.ndarray:
    """
    Chain a derivative w.r.t. filtered densities back onto the design densities
    """
    return kernel.volumes * (kernel.H.T @ (dc / kernel.Hs))


def oc_update(
    x: np.ndarray,
    dc: np.ndarray,
    v0: float,
    kernel: FilterKernel,
    move: float = SIMPDefaults.move,
    damping: float = SIMPDefaults.damping,
) -> np.ndarray:
    """
    Optimality-criteria step x_i * (-dc_i / lam)**damping, clamped to the move limit and [0, 1]

    lam is bisected so that the filtered volume sum_i filter(x_next)_i v_i equals v0 * V
    within 1e-4 * V. dc are sensitivities w.r.t. the design densities (already chained
    through the filter)
    """
    if not np.all(np.isfinite(dc)):
        raise OptimizerError("Non-finite sensitivities passed to the OC update")

    total = kernel.volumes.sum()
    target = v0 * total
    lower = np.maximum(0.0, x - move)
    upper = np.minimum(1.0, x + move)
    ndc = np.maximum(0.0, -dc)

    def step(lam):
        return np.clip(x * (ndc / lam) ** damping, lower, upper)

    def gap(xnew):
        return float(density_filter(xnew, kernel) @ kernel.volumes) - target

    # lam -> 0+ drives every element with a nonzero sensitivity to its upper bound
    if gap(np.where(ndc > 0, upper, lower)) < -1e-4 * total:
        raise OptimizerError(
            "OC update cannot reach the volume target within the move limit; "
            "sensitivities are likely corrupt"
        )

    l1 = 0.0
    l2 = float(ndc.mean()) if np.any(ndc) else 1.0
    for _ in range(400):
        if gap(step(l2)) <= 0:
            break
        l1, l2 = l2, 2.0 * l2
    else:
        raise OptimizerError("OC bisection failed to bracket the Lagrange multiplier")

    xnew = step(l2)
    for _ in range(200):
        lmid = 0.5 * (l1 + l2)
        xnew = step(lmid)
        g = gap(xnew)
        if abs(g) <= 1e-6 * total or (l2 - l1) <= 1e-15 * (l1 + l2):
            break
        if g > 0:
            l1 = lmid
        else:
            l2 = lmid

    if abs(gap(xnew)) > 1e-4 * total:
        raise OptimizerError(f"OC bisection ended off the volume target: {gap(xnew):.3e}")

    return xnew


@dataclass(frozen=True)
class SIMPConfig:
    material: MaterialModel = field(default_factory=MaterialModel)
    rmin: float = SIMPDefaults.rmin_elements  # In element edge lengths
    move: float = SIMPDefaults.move
    damping: float = SIMPDefaults.damping
    change_tol: float = SIMPDefaults.change_tol
    max_iter: int = SIMPDefaults.max_iter
    pcg_tol: float = SIMPDefaults.pcg_tol

    def __post_init__(self):
        if not self.rmin > 0:
            raise ValueError(f"Invalid filter radius: '{self.rmin}'")
        if not 0 < self.move <= 1:
            raise ValueError(f"Invalid move limit: '{self.move}'")
        if self.max_iter < 1:
            raise ValueError(f"Invalid iteration cap: '{self.max_iter}'")


@dataclass
class IterationTrace:
    """
    Full history of one SIMP run

    fields[t] is the physical (filtered) density at iteration t as an (nx, ny, nz) array,
    designs[t] the design density it was filtered from. compliance[t] belongs to fields[t];
    change[t] is max |x_t - x_(t-1)| (0 for t = 0); wall_ms[t] is the time spent producing
    entry t
    """

    problem: ProblemSpec
    fields: typing.List[np.ndarray] = field(default_factory=list)
    designs: typing.List[np.ndarray] = field(default_factory=list)
    compliance: typing.List[float] = field(default_factory=list)
    change: typing.List[float] = field(default_factory=list)
    wall_ms: typing.List[float] = field(default_factory=list)
    converged: bool = False

    def __len__(self):
        return len(self.fields)

    def __repr__(self):
        return f"IterationTrace: T={self.T}, converged={self.converged}, seed={self.problem.seed}"

    @property
    def T(self) -> int:
        return len(self.fields) - 1

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]

    def append(self, xphys, x, c, change, wall_ms):
        shape = self.problem.domain.shape
        self.fields.append(as_field(xphys, shape))
        self.designs.append(as_field(x, shape))
        self.compliance.append(c)
        self.change.append(change)
        self.wall_ms.append(wall_ms)

    def elapsed_ms(self, upto: int) -> float:
        """
        Cumulative wall time for entries 0..upto inclusive
        """
        return float(sum(self.wall_ms[: upto + 1]))

    def save(self, outdir: Path):
        """
        Write problem.json, fields.bin, designs.bin, compliance.csv and timing.csv

        Everything except timing.csv is bitwise reproducible for a fixed problem & config
        """
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        self.problem.save(outdir / "problem.json")
        with (outdir / "trace.json").open(mode="w") as fID:
            json.dump({"T": self.T, "converged": self.converged}, fID, indent=2)
        Export.write_fields(outdir / "fields.bin", self.fields)
        Export.write_fields(outdir / "designs.bin", self.designs)
        Export.write_csv(
            outdir / "compliance.csv",
            ("iteration", "compliance", "max_change"),
            [(t, c, d) for t, (c, d) in enumerate(zip(self.compliance, self.change))],
        )
        Export.write_csv(
            outdir / "timing.csv",
            ("iteration", "wall_ms"),
            list(enumerate(self.wall_ms)),
        )
        logging.info(f"Saved trace of {len(self)} iterates to '{outdir}'")

    @staticmethod
    def load(indir: Path) -> IterationTrace:
        indir = Path(indir)
        problem = ProblemSpec.load(indir / "problem.json")
        trace = IterationTrace(problem=problem)
        trace.fields = Export.read_fields(indir / "fields.bin")
        trace.designs = Export.read_fields(indir / "designs.bin")

        rows = Export.read_csv(indir / "compliance.csv")
        trace.compliance = [float(r["compliance"]) for r in rows]
        trace.change = [float(r["max_change"]) for r in rows]

        timing = indir / "timing.csv"
        if timing.exists():
            trace.wall_ms = [float(r["wall_ms"]) for r in Export.read_csv(timing)]
        else:
            trace.wall_ms = [0.0] * len(rows)

        with (indir / "trace.json").open(mode="r") as fID:
            trace.converged = bool(json.load(fID)["converged"])

        return trace


def run_simp(
    problem: ProblemSpec,
    config: SIMPConfig = SIMPConfig(),
    stop: typing.Optional[typing.Callable[[IterationTrace], bool]] = None,
) -> IterationTrace:
    """
    Minimize compliance with the filtered-density SIMP loop, recording every iterate

    Each iteration: OC update -> filter -> FE solve -> compliance & sensitivities. Stops when
    max |x_next - x| < change_tol or after max_iter updates. The optional stop callback is
    evaluated after each recorded iterate and ends the run early when it returns True
    """
    domain = problem.domain
    material = config.material
    kernel = FilterKernel(domain, config.rmin * domain.h)
    dofs = fixed_dofs_for_case(problem.bc_case, domain)
    f = force_vector(problem.loads, domain)
    KE = element_stiffness(material, domain.h)

    trace = IterationTrace(problem=problem)
    x = np.full(domain.element_count, problem.volume_fraction)
    u = None

    def evaluate(x, iteration):
        nonlocal u
        xphys = density_filter(x, kernel)
        try:
            u = solve_equilibrium(
                xphys, f, dofs, domain, material, KE=KE, tol=config.pcg_tol, u0=u
            )
        except ConvergenceError as e:
            e.iteration = iteration
            raise
        c, dc = compliance_and_sensitivity(u, xphys, domain, material, KE=KE)
        return xphys, c, filter_sensitivity(dc, kernel)

    tic = time.perf_counter()
    xphys, c, dc = evaluate(x, 0)
    trace.append(xphys, x, c, 0.0, 1000 * (time.perf_counter() - tic))
    logging.info(
        f"SIMP start: seed {problem.seed}, v0={problem.volume_fraction:.3f}, "
        f"bc case {problem.bc_case}, {len(problem.loads)} load(s), c0={c:.4e}"
    )

    for it in range(1, config.max_iter + 1):
        tic = time.perf_counter()
        xnew = oc_update(x, dc, problem.volume_fraction, kernel, config.move, config.damping)
        change = float(np.max(np.abs(xnew - x)))
        x = xnew
        xphys, c, dc = evaluate(x, it)
        trace.append(xphys, x, c, change, 1000 * (time.perf_counter() - tic))
        logging.debug(f"SIMP it {it}: c={c:.6e}, change={change:.4f}")

        if change < config.change_tol:
            trace.converged = True
            break
        if stop is not None and stop(trace):
            break

    logging.info(
        f"SIMP finished after {trace.T} iterations (converged: {trace.converged}), "
        f"c={trace.compliance[-1]:.4e}"
    )
    return trace


def trace_dirname(seed: int) -> str:
    return f"seed_{seed}"


def save_traces(traces: typing.Iterable[IterationTrace], outdir: Path):
    for trace in traces:
        trace.save(Path(outdir) / trace_dirname(trace.problem.seed))


def load_traces(indir: Path) -> typing.List[IterationTrace]:
    """
    Load every trace directory (anything holding a trace.json) under indir, ordered by seed
    """
    dirs = [p.parent for p in Path(indir).glob("*/trace.json")]
    traces = [IterationTrace.load(d) for d in dirs]
    return sorted(traces, key=lambda t: t.problem.seed)
