"""Manufactured solutions, error norms, EOC and the refinement/conditioning studies."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import gamma, rgamma

from .assembly import (FLUX_KINDS, Discretization, FluxScheme, PenaltyConfig,
                       assemble_operator, assemble_rhs)
from .basis import ReferenceBasis, build_reference_basis, volume_data
from .fracint import FracParams, rl_operator, trace_rays
from .mesh import Mesh, generate_lshape, generate_structured, generate_unstructured, load_mesh
from .quadrature import triangle_rule
from .solver import condition_number, solve_dense

log = logging.getLogger(__name__)

SCHEMA = 1
LOWER = -1.0  # every axis ray of the square and the L-shape starts at -1


# manufactured solutions ---------------------------------------------------------------

@dataclass(frozen=True)
class Factor1D:
    """A polynomial factor X(x) stored in the shifted variable t = x + 1."""

    poly: Polynomial  # in x

    @property
    def dpoly_t(self) -> np.ndarray:
        return self.poly.deriv()(Polynomial([LOWER, 1.0])).coef

    def value(self, x):
        return self.poly(x)

    def deriv(self, x):
        return self.poly.deriv()(x)

    def _apply(self, x, shift: float, fac):
        """sum_n c_n fac(n) t^(n + shift) over the shifted coefficients of X'."""
        t = np.asarray(x, dtype=float) - LOWER
        out = np.zeros_like(t)
        for n, c in enumerate(self.dpoly_t):
            if c == 0.0:
                continue
            k = fac(n)
            if k == 0.0:
                continue
            with np.errstate(divide="ignore"):
                out = out + c * k * np.power(t, n + shift)
        return out

    def flux_divergence(self, mu: float, x):
        """d/dx I^mu[X'](x), the x-part of the model operator."""
        if mu == 0.0:
            return self.poly.deriv(2)(x)
        return self._apply(x, mu - 1.0, lambda n: gamma(n + 1) * rgamma(n + mu))

    def half_flux(self, nu: float, x):
        """I^nu[X'](x)."""
        if nu == 0.0:
            return self.deriv(x)
        return self._apply(x, nu, lambda n: gamma(n + 1) * rgamma(n + 1 + nu))


@dataclass(frozen=True)
class ManufacturedCase:
    """Separable exact solution u = X(x) Y(y) with its consistent forcing."""

    name: str
    X: Factor1D
    Y: Factor1D
    params: FracParams
    domain: str = "square"

    def exact(self, x, y):
        return self.X.value(x) * self.Y.value(y)

    def gradient(self, x, y):
        return self.X.deriv(x) * self.Y.value(y), self.X.value(x) * self.Y.deriv(y)

    def forcing(self, x, y):
        a1, a2 = self.params.orders
        return -(self.Y.value(y) * self.X.flux_divergence(a1, x)
                 + self.X.value(x) * self.Y.flux_divergence(a2, y))

    def half_flux(self, axis: str, nu: float, x, y):
        if axis == "x":
            return self.Y.value(y) * self.X.half_flux(nu, x)
        return self.X.value(x) * self.Y.half_flux(nu, y)


def example1(params: FracParams) -> ManufacturedCase:
    """u = (x^2-1)^3 (y^2-1)^3 on (-1,1)^2."""
    p = Polynomial([-1.0, 0.0, 1.0]) ** 3
    return ManufacturedCase("example1", Factor1D(p), Factor1D(p), params, "square")


def lshape_case(params: FracParams) -> ManufacturedCase:
    """u = x^2 (x^2-1) y^2 (y^2-1), which vanishes on the whole L-shape boundary."""
    p = Polynomial([0.0, 0.0, -1.0, 0.0, 1.0])
    return ManufacturedCase("lshape", Factor1D(p), Factor1D(p), params, "lshape")


CASES: dict[str, Callable[[FracParams], ManufacturedCase]] = {
    "example1": example1,
    "lshape": lshape_case,
}


# error norms ----------------------------------------------------------------------

def _solution_at(mesh: Mesh, basis: ReferenceBasis, U, degree: int):
    vd = volume_data(mesh, basis, triangle_rule(degree))
    coeffs = np.asarray(U, dtype=float).reshape(mesh.K, basis.np)
    return vd, coeffs


def l2_error(mesh: Mesh, basis: ReferenceBasis, U, exact, degree: int | None = None) -> float:
    vd, coeffs = _solution_at(mesh, basis, U, degree or 2 * basis.order + 4)
    uh = np.einsum("kn,kqn->kq", coeffs, vd.phi)
    ex = exact(vd.points[..., 0], vd.points[..., 1])
    return float(np.sqrt(np.sum(vd.weights * (uh - ex) ** 2)))


def jump_seminorm(mesh: Mesh, basis: ReferenceBasis, U, disc: Discretization | None = None) -> float:
    """sqrt(sum_e h_e^-1 int_e [[u_h]]^2), boundary edges taking the one-sided trace."""
    disc = disc or Discretization(mesh, basis)
    fd = disc.faces
    coeffs = np.asarray(U, dtype=float).reshape(mesh.K, basis.np)
    m = mesh.edge_elements[:, 0]
    p = mesh.edge_elements[:, 1]
    um = np.einsum("eqn,en->eq", fd.phi_minus, coeffs[m])
    up = np.einsum("eqn,en->eq", fd.phi_plus, coeffs[np.maximum(p, 0)])
    up[p < 0] = 0.0
    per_edge = np.sum(fd.weights * (um - up) ** 2, axis=1)
    return float(np.sqrt(np.sum(per_edge / mesh.edge_h())))


def energy_error(mesh: Mesh, basis: ReferenceBasis, U, case: ManufacturedCase,
                 params: FracParams | None = None, disc: Discretization | None = None,
                 degree: int | None = None) -> float:
    """Energy-norm error: half-order line seminorms of the broken gradient plus jumps.

    The exact solution is continuous with zero trace, so the jump terms only
    see u_h.
    """
    params = params or case.params
    vd, coeffs = _solution_at(mesh, basis, U, degree or 2 * basis.order + 4)
    pts = vd.flat_points
    owners = vd.owners
    # coefficients of the broken gradient (exact: derivatives stay in P_N)
    base = volume_data(mesh, basis)
    grad = np.einsum("kn,kqnd->kqd", coeffs, base.grad)
    gcoef = np.einsum("kq,kqd,kqn->dkn", base.weights, grad, base.phi)
    total = 0.0
    for d, (axis, order) in enumerate(zip(("x", "y"), params.orders)):
        nu = order / 2.0
        if nu == 0.0:
            approx = np.einsum("kn,kqn->kq", gcoef[d], vd.phi).ravel()
        else:
            bundle = trace_rays(mesh, pts, axis, "left", owners=owners)
            approx = rl_operator(mesh, basis, bundle, nu) @ gcoef[d].ravel()
        ex = case.half_flux(axis, nu, pts[:, 0], pts[:, 1])
        total += float(np.sum(vd.weights.ravel() * (ex - approx) ** 2))
    total += jump_seminorm(mesh, basis, U, disc) ** 2
    return math.sqrt(total)


def eoc(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or errors.size < 2:
        raise ValueError("need at least two (error, h) pairs of equal length")
    if np.any(errors <= 0):
        raise ValueError("errors must be positive")
    if np.any(np.diff(hs) >= 0):
        raise ValueError("h must be strictly decreasing")
    return list(np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:]))


# mesh levels ----------------------------------------------------------------------

@dataclass(frozen=True)
class MeshSpec:
    """One refinement level.

    ``kind`` is ``structured`` (size = m, K = 2 m^2), ``lshape`` (structured
    L-shape, size = m), ``unstructured`` (size = target K) or ``file``.
    """

    kind: str
    size: int | str
    domain: str = "square"
    seed: int = 0

    def build(self) -> Mesh:
        if self.kind == "structured":
            return generate_structured(int(self.size))
        if self.kind == "lshape":
            return generate_lshape(int(self.size))
        if self.kind == "unstructured":
            return generate_unstructured(int(self.size), self.domain, seed=self.seed)
        if self.kind == "file":
            return load_mesh(self.size)
        raise ValueError(f"unknown mesh kind {self.kind!r}")

    def h(self, mesh: Mesh) -> float:
        if self.kind in ("structured", "lshape"):
            return float(mesh.diameters.max())
        area = float(mesh.areas.sum())
        return math.sqrt(2.0 * area / mesh.K)


# reports ----------------------------------------------------------------------------

@dataclass
class ReportRow:
    K: int
    h: float
    N: int
    alpha: float
    beta: float
    flux: str
    l2_error: float = math.nan
    l2_eoc: float = math.nan
    energy_error: float = math.nan
    energy_eoc: float = math.nan
    cond: float = math.nan
    wall_time: float = math.nan


COLUMNS = [f.name for f in fields(ReportRow)]
_INT_COLS = {"K", "N"}
_STR_COLS = {"flux"}


def _fmt(name, value) -> str:
    if name in _INT_COLS:
        return str(int(value))
    if name in _STR_COLS:
        return str(value)
    return f"{float(value):.5e}"


@dataclass
class ConvergenceReport:
    rows: list[ReportRow] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def series(self, N=None, alpha=None, beta=None, flux=None) -> list[ReportRow]:
        return [r for r in self.rows
                if (N is None or r.N == N) and (alpha is None or r.alpha == alpha)
                and (beta is None or r.beta == beta) and (flux is None or r.flux == flux)]

    def fill_eoc(self) -> None:
        groups: dict[tuple, list[ReportRow]] = {}
        for r in self.rows:
            groups.setdefault((r.N, r.alpha, r.beta, r.flux), []).append(r)
        for rows in groups.values():
            for prev, cur in zip(rows, rows[1:]):
                for err, col in (("l2_error", "l2_eoc"), ("energy_error", "energy_eoc")):
                    e0, e1 = getattr(prev, err), getattr(cur, err)
                    if e0 > 0 and e1 > 0 and prev.h > cur.h:
                        setattr(cur, col, math.log(e0 / e1) / math.log(prev.h / cur.h))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# schema={SCHEMA}\n")
        for note in self.notes:
            buf.write(f"# {note}\n")
        buf.write(",".join(COLUMNS) + "\n")
        for r in self.rows:
            d = asdict(r)
            buf.write(",".join(_fmt(c, d[c]) for c in COLUMNS) + "\n")
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceReport":
        lines = text.splitlines()
        if not lines or lines[0].strip() != f"# schema={SCHEMA}":
            raise ValueError("missing or unsupported schema line")
        notes = [ln[2:] for ln in lines[1:] if ln.startswith("# ")]
        body = [ln for ln in lines[1:] if not ln.startswith("#")]
        reader = csv.DictReader(body)
        if reader.fieldnames != COLUMNS:
            raise ValueError(f"unexpected columns {reader.fieldnames}")
        rows = []
        for rec in reader:
            kw = {}
            for c in COLUMNS:
                v = rec[c]
                kw[c] = int(v) if c in _INT_COLS else v if c in _STR_COLS else float(v)
            rows.append(ReportRow(**kw))
        return cls(rows, notes)


# studies ----------------------------------------------------------------------------

@dataclass(frozen=True)
class StudyConfig:
    meshes: tuple[MeshSpec, ...]
    orders: tuple[int, ...] = (1,)
    params: tuple[tuple[float, float], ...] = ((1.4, 1.4),)
    fluxes: tuple[str, ...] = FLUX_KINDS
    case: str = "example1"
    lambda_tilde: float | None = None
    penalty_law: str | None = None
    eta_rule: str = "min-id"
    energy: bool = True
    cond: bool = False
    timings: bool = False
    volume_degree: int | None = None
    face_points: int | None = None

    def penalty(self) -> PenaltyConfig:
        return PenaltyConfig(self.lambda_tilde, self.penalty_law)


def _level_rows(cfg: StudyConfig, level: int, N: int) -> list[tuple[tuple, ReportRow]]:
    spec = cfg.meshes[level]
    mesh = spec.build()
    h = spec.h(mesh)
    basis = build_reference_basis(N, volume_degree=cfg.volume_degree, face_points=cfg.face_points)
    disc = Discretization(mesh, basis)
    out = []
    for ip, (a, b) in enumerate(cfg.params):
        params = FracParams(a, b)
        case = CASES[cfg.case](params)
        rhs = assemble_rhs(disc, case.forcing)
        for jf, kind in enumerate(cfg.fluxes):
            row = ReportRow(mesh.K, h, N, a, b, kind)
            t0 = time.perf_counter()
            try:
                scheme = FluxScheme(kind, cfg.eta_rule)
                A, _ = assemble_operator(disc, params, scheme, cfg.penalty())
                U = solve_dense(A, rhs)
                row.l2_error = l2_error(mesh, basis, U, case.exact)
                if cfg.energy:
                    row.energy_error = energy_error(mesh, basis, U, case, params, disc)
                if cfg.cond:
                    row.cond = condition_number(A)
            except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                log.error("K=%d N=%d (%g,%g) %s failed: %s", mesh.K, N, a, b, kind, exc)
            if cfg.timings:
                row.wall_time = time.perf_counter() - t0
            out.append(((N, ip, jf, level), row))
    return out


def _run_task(args):
    return _level_rows(*args)


def run_convergence_study(cfg: StudyConfig, jobs: int = 1) -> ConvergenceReport:
    tasks = [(cfg, level, N) for N in cfg.orders for level in range(len(cfg.meshes))]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    keyed = sorted((item for res in results for item in res), key=lambda kv: kv[0])
    report = ConvergenceReport([row for _, row in keyed])
    report.fill_eoc()
    h_rule = "element diameter" if cfg.meshes[0].kind in ("structured", "lshape") else "sqrt(2|Omega|/K)"
    report.notes.append(f"case={cfg.case} h={h_rule}")
    return report


def run_condition_study(cfg: StudyConfig, jobs: int = 1) -> ConvergenceReport:
    cfg = StudyConfig(**{**{f.name: getattr(cfg, f.name) for f in fields(cfg)},
                         "cond": True, "energy": False})
    report = run_convergence_study(cfg, jobs)
    report.notes[-1] = report.notes[-1] + " cond=2-norm"
    return report


def condition_table(report: ConvergenceReport) -> str:
    """Table-style CSV: one row per (alpha, beta, K) with a column per flux."""
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA}\n")
    buf.write("alpha,beta,K,kappa_C,kappa_IP,kappa_LDG\n")
    keys = []
    for r in report.rows:
        k = (r.alpha, r.beta, r.K, r.N)
        if k not in keys:
            keys.append(k)
    for a, b, K, N in keys:
        vals = {r.flux: r.cond for r in report.rows if (r.alpha, r.beta, r.K, r.N) == (a, b, K, N)}
        cells = [f"{vals.get(f, math.nan):.5e}" for f in ("central", "ip", "ldg")]
        buf.write(f"{a:.5e},{b:.5e},{K}," + ",".join(cells) + "\n")
    return buf.getvalue()


def check_trends(report: ConvergenceReport) -> list[str]:
    """Violations of: kappa increasing in K per column; kappa_LDG >= kappa_central."""
    problems = []
    groups: dict[tuple, list[ReportRow]] = {}
    for r in report.rows:
        groups.setdefault((r.N, r.alpha, r.beta, r.flux), []).append(r)
    for (N, a, b, flux), rows in groups.items():
        rows = sorted(rows, key=lambda r: r.K)
        for r0, r1 in zip(rows, rows[1:]):
            if not r1.cond > r0.cond:
                problems.append(f"({a},{b}) {flux}: kappa drops from K={r0.K} to K={r1.K}")
    for r in report.rows:
        if r.flux == "ldg":
            c = [s.cond for s in report.rows if s.flux == "central" and
                 (s.N, s.alpha, s.beta, s.K) == (r.N, r.alpha, r.beta, r.K)]
            if c and not r.cond >= c[0]:
                problems.append(f"({r.alpha},{r.beta}) K={r.K}: kappa_LDG < kappa_central")
    return problems
