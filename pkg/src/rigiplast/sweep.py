"""Stiffness sweep: run the same program for decreasing eps and measure limits.

For each eps the evolution runs with C^eps = C/eps on the shared mesh and time
grid. Per-(eps, time) monitors cover the a-priori estimates of the limit
passage (elastic-strain norm, integrated stress norm, deviatoric stress bound,
plastic increment mass, BD surrogate, divergence of the displacement,
hydrostatic deviation about its spatial mean) and the limit-system residuals
(flow-rule gap against the backward-difference velocity). Consecutive-eps
stress distances witness the Cauchy property of the stress trajectory.

Velocities are backward difference quotients (u_k - u_{k-1})/dt, aligned with
the backward-Euler stepping.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .benchmarks import Benchmark, benchmark_catalog
from .evolution import ConvergenceError, bd_norm_surrogate, run_evolution
from .fem import divergence_check, scalar_l2, strain_matrix, strain_of, tensor_l2

from .tensors import HookeTensor, ddot, dev_decompose, norm

METRIC_NAMES = (
    "e_sup",             # sup_t ||e(t)||_2
    "sigma_l2_sq_int",   # int_0^T ||sigma(t)||_2^2 dt
    "sigma_dev_sup",     # sup_t sup_cells |sigma_D|
    "dp_mass_total",     # sum_k ||p_k - p_{k-1}||_mass
    "u_bd_sup",          # sup_t BD surrogate of u
    "div_u_sup",         # sup_t ||div u(t)||_2
    "hydro_dev_l2t",     # L2-in-time of ||tr sigma/n - spatial mean||_2
    "flow_gap_int",      # int_0^T sum_cells area (kappa|Ev| - sigma_D:Ev) dt
    "diss_rate_int",     # int_0^T sum_cells area kappa |Ev| dt
)

CSV_HEADER = ("epsilon,time,e_l2,sigma_l2,sigma_dev_max,dp_mass_cum,u_bd,"
              "div_u_l2,hydro_dev,flow_gap_rate,diss_rate")


@dataclass(frozen=True)
class SweepConfig:
    """What to sweep: a catalog benchmark, an eps list, grid and tolerances."""

    epsilons: tuple[float, ...] = tuple(2.0 ** (-2 * k) for k in range(7))
    benchmark: str = "SHEAR"
    mesh_n: int = 16
    n_steps: int = 32
    shear_modulus: float = 1.0
    bulk_modulus: float = 1.0
    yield_radius: float = 1.0
    mode: str = "strong"
    tol: float = 1e-10
    stress_tol: float = 1e-10
    max_iters: int = 10_000
    load_scale: float = 1.0
    horizon: float = 1.0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if len(eps) == 0 or any(e <= 0 for e in eps):
            raise ValueError("epsilon list must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon list must be strictly decreasing")
        object.__setattr__(self, "epsilons", eps)

    def build_benchmark(self) -> Benchmark:
        return benchmark_catalog(
            self.benchmark, mesh_n=self.mesh_n, n_steps=self.n_steps,
            hooke=HookeTensor(self.shear_modulus, self.bulk_modulus, 1.0),
            yield_radius=self.yield_radius, load_scale=self.load_scale,
            horizon=self.horizon,
        )


@dataclass
class EpsTrajectory:
    """Per-time monitor values for one eps, plus the raw fields it needs."""

    epsilon: float
    e_l2: np.ndarray
    sigma_l2: np.ndarray
    sigma_dev_max: np.ndarray
    dp_mass_cum: np.ndarray
    u_bd: np.ndarray
    div_u_l2: np.ndarray
    hydro_dev: np.ndarray
    flow_gap_rate: np.ndarray     # index k is the rate on (t_{k-1}, t_k]; entry 0 is 0
    diss_rate: np.ndarray
    normal_gap: np.ndarray        # sup over Gamma_D of |(w - u) . nu|
    sigma: np.ndarray             # (M+1, n_cells, 3)
    ev: np.ndarray                # (M+1, n_cells, 3), entry 0 is 0
    u_final: np.ndarray


@dataclass
class SweepReport:
    """All trajectories plus the eps-indexed scalar reductions."""

    config: SweepConfig
    times: np.ndarray
    trajectories: list[EpsTrajectory]
    metrics: dict[str, np.ndarray]
    cauchy_distances: np.ndarray
    mesh_signature: tuple

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([t.epsilon for t in self.trajectories])

    @property
    def limit_proxy(self) -> EpsTrajectory:
        """Fields at the smallest eps in the list."""
        return self.trajectories[-1]

    def csv_rows(self):
        for tr in self.trajectories:
            for k, t in enumerate(self.times):
                yield (tr.epsilon, t, tr.e_l2[k], tr.sigma_l2[k], tr.sigma_dev_max[k],
                       tr.dp_mass_cum[k], tr.u_bd[k], tr.div_u_l2[k], tr.hydro_dev[k],
                       tr.flow_gap_rate[k], tr.diss_rate[k])

    def summary_dict(self) -> dict:
        out = {"epsilons": [tr.epsilon for tr in self.trajectories]}
        out.update({name: list(map(float, vals)) for name, vals in self.metrics.items()})
        out["cauchy_distances"] = list(map(float, self.cauchy_distances))
        return out


def _trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    return float(np.trapezoid(values, times))


def _run_one_epsilon(benchmark: Benchmark, epsilon: float, config: "SweepConfig",
                     B) -> EpsTrajectory:
    mesh = benchmark.mesh
    program = benchmark.program
    yset = benchmark.yield_set
    hooke = benchmark.hooke.with_epsilon(epsilon)
    try:
        states, ledger = run_evolution(program, hooke, yset, mesh, mode=config.mode,
                                       tol=config.tol, stress_tol=config.stress_tol,
                                       max_iters=config.max_iters)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"epsilon={epsilon:g}, step {exc.step_index}: {exc}",
            state=exc.state, decrease_history=exc.decrease_history,
            step_index=exc.step_index,
        ) from exc

    times = program.times
    M = program.n_steps
    n_t = M + 1
    areas = mesh.areas
    kappa = yset.radius

    e_l2 = np.zeros(n_t)
    sigma_l2 = np.zeros(n_t)
    sigma_dev_max = np.zeros(n_t)
    u_bd = np.zeros(n_t)
    div_u_l2 = np.zeros(n_t)
    hydro_dev = np.zeros(n_t)
    flow_gap_rate = np.zeros(n_t)
    diss_rate = np.zeros(n_t)
    normal_gap = np.zeros(n_t)
    sigma_all = np.zeros((n_t, mesh.n_cells, 3))
    ev_all = np.zeros((n_t, mesh.n_cells, 3))

    gauss = (0.5 * (1 - 1 / np.sqrt(3.0)), 0.5 * (1 + 1 / np.sqrt(3.0)))
    for k, st in enumerate(states):
        e_l2[k] = tensor_l2(areas, st.e)
        sigma_l2[k] = tensor_l2(areas, st.sigma)
        dev_s, _ = dev_decompose(st.sigma)
        sigma_dev_max[k] = float(norm(dev_s).max())
        u_bd[k] = bd_norm_surrogate(mesh, st.u)
        eu = strain_of(st.u, mesh, B)
        div_u = eu[:, 0] + eu[:, 2]
        div_u_l2[k] = scalar_l2(areas, div_u)
        hydro = 0.5 * (st.sigma[:, 0] + st.sigma[:, 2])
        hydro_mean = float((areas * hydro).sum() / areas.sum())
        hydro_dev[k] = scalar_l2(areas, hydro - hydro_mean)
        gap_field = program.w[k] - st.u
        for e in mesh.dirichlet_edges:
            ga, gb = gap_field[e.nodes[0]], gap_field[e.nodes[1]]
            for xi in gauss:
                gv = (1 - xi) * ga + xi * gb
                normal_gap[k] = max(normal_gap[k], abs(float(gv @ e.normal)))
        sigma_all[k] = st.sigma
        if k > 0:
            dt = times[k] - times[k - 1]
            v = (st.u - states[k - 1].u) / dt
            ev = strain_of(v, mesh, B)
            ev_all[k] = ev
            gap_cells = kappa * norm(ev) - ddot(dev_s, ev)
            worst = float(gap_cells.min())
            scale = max(kappa * float(norm(ev).max()), 1.0)
            if worst < -1e-12 * scale:
                raise AssertionError(f"flow-rule gap negative ({worst:.3e}) at step {k}")
            flow_gap_rate[k] = float((areas * gap_cells).sum())
            diss_rate[k] = float((areas * kappa * norm(ev)).sum())

    return EpsTrajectory(
        epsilon=epsilon, e_l2=e_l2, sigma_l2=sigma_l2, sigma_dev_max=sigma_dev_max,
        dp_mass_cum=ledger.dissipation / kappa, u_bd=u_bd, div_u_l2=div_u_l2,
        hydro_dev=hydro_dev, flow_gap_rate=flow_gap_rate, diss_rate=diss_rate,
        normal_gap=normal_gap, sigma=sigma_all, ev=ev_all, u_final=states[-1].u,
    )


def run_sweep(config: SweepConfig, threads: int = 1) -> SweepReport:
    """One evolution per eps; metrics assembled in decreasing-eps order."""
    benchmark = config.build_benchmark()
    mesh = benchmark.mesh
    B = strain_matrix(mesh)
    times = benchmark.program.times

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_one_epsilon, benchmark, eps, config, B)
                       for eps in config.epsilons]
            trajectories = [f.result() for f in futures]
    else:
        trajectories = [_run_one_epsilon(benchmark, eps, config, B)
                        for eps in config.epsilons]

    metrics = {name: np.zeros(len(trajectories)) for name in METRIC_NAMES}
    for i, tr in enumerate(trajectories):
        metrics["e_sup"][i] = tr.e_l2.max()
        metrics["sigma_l2_sq_int"][i] = _trapezoid(tr.sigma_l2**2, times)
        metrics["sigma_dev_sup"][i] = tr.sigma_dev_max.max()
        metrics["dp_mass_total"][i] = tr.dp_mass_cum[-1]
        metrics["u_bd_sup"][i] = tr.u_bd.max()
        metrics["div_u_sup"][i] = tr.div_u_l2.max()
        metrics["hydro_dev_l2t"][i] = np.sqrt(_trapezoid(tr.hydro_dev**2, times))
        dt = np.diff(times)
        metrics["flow_gap_int"][i] = float((dt * tr.flow_gap_rate[1:]).sum())
        metrics["diss_rate_int"][i] = float((dt * tr.diss_rate[1:]).sum())

    cauchy = np.zeros(max(len(trajectories) - 1, 0))
    for i in range(len(cauchy)):
        diff = trajectories[i].sigma - trajectories[i + 1].sigma
        per_time = np.array([tensor_l2(mesh.areas, diff[k]) for k in range(len(times))])
        cauchy[i] = np.sqrt(_trapezoid(per_time**2, times))

    signature = (benchmark.id, mesh.n_side, tuple(sorted(mesh.dirichlet_faces)),
                 len(times), float(times[-1]))
    return SweepReport(config=config, times=times.copy(), trajectories=trajectories,
                       metrics=metrics, cauchy_distances=cauchy, mesh_signature=signature)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    n_excluded: int


def fit_rate(epsilons, values, floor: float = 0.0) -> RateFit:
    """Least-squares slope of log(value) against log(eps).

    Values at or below ``floor`` (default: non-positive) have hit the
    numerical floor and are excluded; fewer than 3 survivors is an error.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > floor
    n_excluded = int((~keep).sum())
    if keep.sum() < 3:
        raise ValueError(f"only {int(keep.sum())} values above the floor; need >= 3")
    x = np.log(epsilons[keep])
    y = np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid**2).sum()) / ss_tot
    return RateFit(slope=float(slope), intercept=float(intercept),
                   r_squared=r2, n_excluded=n_excluded)


@dataclass(frozen=True)
class ResidualReport:
    """Per-time residuals of the rigid-plastic limit system at the smallest eps."""

    epsilon: float
    times: np.ndarray
    equilibrium_interior: np.ndarray
    equilibrium_flux: np.ndarray
    feasibility_excess: np.ndarray   # max(|sigma_D| - kappa), <= 0 when feasible
    div_v_l2: np.ndarray
    flow_gap_rate: np.ndarray
    dirichlet_normal_gap: np.ndarray

    def maxima(self) -> dict:
        return {
            "equilibrium_interior": float(self.equilibrium_interior.max()),
            "equilibrium_flux": float(self.equilibrium_flux.max()),
            "feasibility_excess": float(self.feasibility_excess.max()),
            "div_v_l2": float(self.div_v_l2.max()),
            "flow_gap_rate": float(self.flow_gap_rate.max()),
            "dirichlet_normal_gap": float(self.dirichlet_normal_gap.max()),
        }


def rigid_residuals(report: SweepReport, benchmark: Benchmark | None = None) -> ResidualReport:
    """Evaluate the limit-system residuals on the smallest-eps trajectory."""
    if benchmark is None:
        benchmark = report.config.build_benchmark()
    mesh = benchmark.mesh
    program = benchmark.program
    kappa = benchmark.yield_set.radius
    tr = report.limit_proxy
    n_t = len(report.times)
    B = strain_matrix(mesh)

    eq_int = np.zeros(n_t)
    eq_flux = np.zeros(n_t)
    feas = np.zeros(n_t)
    div_v = np.zeros(n_t)

    for k in range(n_t):
        sigma_k = tr.sigma[k]
        eq_int[k], eq_flux[k] = divergence_check(sigma_k, mesh, program.f[k],
                                                 program.g[k], B=B)
        dev_s, _ = dev_decompose(sigma_k)
        feas[k] = float(norm(dev_s).max()) - kappa
        ev = tr.ev[k]
        div_v[k] = scalar_l2(mesh.areas, ev[:, 0] + ev[:, 2])

    return ResidualReport(
        epsilon=tr.epsilon, times=report.times.copy(),
        equilibrium_interior=eq_int, equilibrium_flux=eq_flux,
        feasibility_excess=feas, div_v_l2=div_v,
        flow_gap_rate=tr.flow_gap_rate.copy(),
        dirichlet_normal_gap=tr.normal_gap.copy(),
    )


@dataclass(frozen=True)
class UniquenessReport:
    """Deviatoric-stress agreement on/off the plastic support of two limits."""

    threshold: float
    times: np.ndarray
    on_support_max: np.ndarray
    off_support_max: np.ndarray
    support_fraction: np.ndarray

    @property
    def overall_on_support(self) -> float:
        return float(self.on_support_max.max())

    @property
    def overall_off_support(self) -> float:
        return float(self.off_support_max.max())


def compare_limits(report_a: SweepReport, report_b: SweepReport,
                   threshold: float = 1e-6,
                   support_floor: float = 1e-10) -> UniquenessReport:
    """Compare limit-proxy deviatoric stresses where plastic flow is active.

    The support at each time is the union of cells where either run's |Ev|
    exceeds ``threshold`` times its maximum; elsewhere the same difference is
    reported separately with no smallness claim. Velocity fields whose maximum
    sits below ``support_floor`` are round-off and contribute no support.
    """
    if report_a.mesh_signature != report_b.mesh_signature:
        raise ValueError("sweeps ran on different meshes or programs")
    tr_a, tr_b = report_a.limit_proxy, report_b.limit_proxy
    n_t = len(report_a.times)
    on_max = np.zeros(n_t)
    off_max = np.zeros(n_t)
    frac = np.zeros(n_t)
    for k in range(n_t):
        dev_a, _ = dev_decompose(tr_a.sigma[k])
        dev_b, _ = dev_decompose(tr_b.sigma[k])
        diff = norm(dev_a - dev_b)
        na, nb = norm(tr_a.ev[k]), norm(tr_b.ev[k])
        mask = np.zeros(len(diff), dtype=bool)
        if na.max() > support_floor:
            mask |= na > threshold * na.max()
        if nb.max() > support_floor:
            mask |= nb > threshold * nb.max()
        frac[k] = float(mask.mean())
        on_max[k] = float(diff[mask].max()) if mask.any() else 0.0
        off_max[k] = float(diff[~mask].max()) if (~mask).any() else 0.0
    return UniquenessReport(threshold=threshold, times=report_a.times.copy(),
                            on_support_max=on_max, off_support_max=off_max,
                            support_fraction=frac)
