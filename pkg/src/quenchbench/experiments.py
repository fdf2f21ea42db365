"""Experiment pipelines driven by a RunConfig; each writes its tables through an ArtifactWriter."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimators as est
from .applications.greedy import ParameterSpace, greedy_fit
from .applications.mps import (MpsModelParams, expected_fidelity, mean_fidelity, mps_crossover_prediction,
                               mps_monte_carlo, mps_partition_functions)
from .applications.scans import boltzmann_ensemble, ground_state, parameter_scan, rotated_family
from .config import RunConfig
from .hamiltonians import ModelParams, build_hamiltonian, build_jump_operators, site_occupation
from .io import write_csv, write_snapshot
from .lattice import Basis, enumerate_basis, parse_configuration
from .spectral import (SpectralData, basis_state, diagonal_ensemble_purity, diagonalize, distributions_over_time,
                       evolve_exact, finite_time_average, load_spectrum, outcome_distribution, rescale,
                       time_averaged_distribution)
from .trajectories import TrajectorySpec, simulate_ensemble, single_error_state
from .universal import (delay_time, effective_dimension, f_id_d_series, histogram_ks_distance, no_resonance_check,
                        pt_histogram,
                        single_error_response, weighted_ks_distance)

CACHE_ENV = "QUENCHBENCH_CACHE_DIR"
CACHE_SUFFIX = ".qbspec"


class SetupError(ValueError):
    """The config is well-formed but cannot be realized (raised before any output is written)."""


@dataclass
class ArtifactWriter:
    out_dir: Path
    config_hash: str
    files: list[Path] = field(default_factory=list)

    def csv(self, name: str, columns, rows) -> Path:
        path = write_csv(self.out_dir / name, columns, rows, self.config_hash)
        self.files.append(path)
        return path

    def text(self, name: str, lines) -> Path:
        path = self.out_dir / name
        path.write_text("".join(f"{line}\n" for line in lines))
        self.files.append(path)
        return path

    def snapshot(self, name: str, basis, record, model_hash, time) -> Path:
        path = write_snapshot(self.out_dir / name, basis, record, model_hash, time)
        self.files.append(path)
        return path


@dataclass
class Setup:
    """Basis, quench spectrum and initial state shared by the model-based experiments."""

    basis: Basis
    spectrum: SpectralData
    model_hash: str
    psi0: np.ndarray | None = None
    ensemble: object = None
    p_avg: np.ndarray | None = None


def cache_path(model_hash: str, cache_dir=None) -> Path | None:
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    return Path(cache_dir) / f"{model_hash}{CACHE_SUFFIX}" if cache_dir else None


def model_params(block, overrides: dict | None = None) -> ModelParams:
    values = block.couplings()
    for target, value in (overrides or {}).items():
        name, _, rest = target.partition("[")
        if rest:
            j = int(rest[:-1])
            arr = list(values[name] or [0.0] * block.lattice().n_sites)
            arr[j] = value
            values[name] = arr
        else:
            values[name] = value
    return ModelParams(**values)


def spectrum_for(block, basis: Basis, cache_dir=None) -> SpectralData:
    path = cache_path(block.model_hash(), cache_dir)
    if path is not None and path.exists():
        return load_spectrum(path, block.model_hash())[0]
    return diagonalize(build_hamiltonian(basis, model_params(block)))


def product_state(basis: Basis, text: str) -> np.ndarray:
    i = basis.index_of(parse_configuration(text))
    if i is None:
        raise SetupError(f"initial_state.product: {text!r} is not in the {basis.spec.kind} basis")
    return basis_state(basis.dimension, i)


def load_amplitudes(path: Path, D: int) -> np.ndarray:
    data = np.loadtxt(path, ndmin=2)
    if data.shape[0] != D or data.shape[1] not in (1, 2):
        raise SetupError(f"{path}: expected {D} rows of 're' or 're im', got shape {data.shape}")
    psi = data[:, 0] + (1j * data[:, 1] if data.shape[1] == 2 else 0)
    norm = np.linalg.norm(psi)
    if norm == 0:
        raise SetupError(f"{path}: zero state")
    return psi / norm


def prepare(cfg: RunConfig, base_dir: Path, cache_dir=None) -> Setup | None:
    if cfg.model is None:
        return None
    basis = enumerate_basis(cfg.model.lattice())
    setup = Setup(basis, spectrum_for(cfg.model, basis, cache_dir), cfg.model.model_hash())
    s = cfg.initial_state
    if s is None:
        return setup
    if s.product is not None:
        setup.psi0 = product_state(basis, s.product)
    elif s.amplitudes_file is not None:
        path = Path(s.amplitudes_file)
        setup.psi0 = load_amplitudes(path if path.is_absolute() else base_dir / path, basis.dimension)
    else:
        prep_block = s.gibbs.model or cfg.model
        prep = spectrum_for(prep_block, basis, cache_dir)
        try:
            setup.psi0 = ground_state(prep)
        except ValueError as exc:
            raise SetupError(f"initial_state.gibbs: {exc}") from None
        setup.ensemble = boltzmann_ensemble(prep, s.gibbs.temperature, s.gibbs.cutoff)
    q = cfg.quench
    if q is not None and q.window is not None:
        H = build_hamiltonian(basis, model_params(cfg.model))
        setup.p_avg = finite_time_average(H, setup.psi0, q.window, q.dt, q.krylov_tol)
    else:
        setup.p_avg = time_averaged_distribution(setup.spectrum, setup.psi0)
    return setup


def ideal_distribution(sd: SpectralData, psi0, t: float) -> np.ndarray:
    """p(z, t); the single code path shared by runs and snapshot ingestion."""
    return outcome_distribution(evolve_exact(sd, psi0, t))


def _safe(fn, *args) -> float:
    try:
        return float(fn(*args))
    except (ValueError, ZeroDivisionError):
        return float("nan")


ESTIMATOR_FUNCS = {
    "F_d": lambda q, p, pa: est.f_d(q, p, pa),
    "F_c": lambda q, p, pa: est.f_c(q, p),
    "F_XEB": lambda q, p, pa: est.f_xeb(q, p),
    "F_e": lambda q, p, pa: est.f_e(q, p, pa),
    "F_id_d": lambda q, p, pa: est.f_id_d(p, pa),
    "F_XEB_d": lambda q, p, pa: est.f_xeb_d(q, p, pa),
    "F_d_PH": lambda q, p, pa: est.f_d_ph(q, p, pa),
}


def _record_seed(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=key)


def _gibbs_ensemble(setup: Setup, spec: TrajectorySpec, n_traj: int, threads: int):
    """Unravel the mixed preparation: trajectory counts per eigenstate drawn by weight."""
    ens = setup.ensemble
    counts = np.random.default_rng(_record_seed(spec.seed, 0xB017)).multinomial(n_traj, ens.weights)
    ideal = np.array([evolve_exact(setup.spectrum, setup.psi0, t) for t in spec.sample_times])
    q = np.zeros((len(spec.sample_times), setup.basis.dimension))
    F = np.zeros(len(spec.sample_times))
    start = 0
    for c, col in zip(counts, ens.states.T):
        if c == 0:
            continue
        part = simulate_ensemble(setup.spectrum, col, spec, int(c), threads, ideal_states=ideal, first_index=start)
        q += c * part.q
        F += c * part.fidelity
        start += int(c)
    return q / n_traj, F / n_traj


def run_decay_curve(cfg: RunConfig, setup: Setup, out: ArtifactWriter, threads: int = 1) -> None:
    times = np.array(cfg.quench.time_list())
    noise = cfg.noise
    ops = build_jump_operators(setup.basis, noise.error_model)
    spec = TrajectorySpec(ops, noise.rate, times, noise.seed, noise.unraveling, noise.per_site_rate)
    if setup.ensemble is not None:
        Q, F = _gibbs_ensemble(setup, spec, noise.trajectories, threads)
    else:
        ens = simulate_ensemble(setup.spectrum, setup.psi0, spec, noise.trajectories, threads)
        Q, F = ens.q, ens.fidelity
    P = [ideal_distribution(setup.spectrum, setup.psi0, t) for t in times]
    names = cfg.estimators.names
    columns = ["t"] + [n for n in names if n != "F_hat_d"]
    if "F" not in columns:
        columns.insert(1, "F")
    if "F_hat_d" in names:
        columns += ["F_hat_d", "stat_err"]
    rows = []
    for k, t in enumerate(times):
        values = {"t": t, "F": F[k]}
        for n in names:
            if n in ESTIMATOR_FUNCS:
                values[n] = _safe(ESTIMATOR_FUNCS[n], Q[k], P[k], setup.p_avg)
        if "F_hat_d" in names:
            record = est.sample_record(Q[k], cfg.estimators.M, _record_seed(cfg.estimators.seed, k))
            rep = est.f_hat_d(record, P[k], setup.p_avg, time=t)
            values["F_hat_d"], values["stat_err"] = rep.value, rep.stat_err
            if cfg.estimators.write_snapshots:
                out.snapshot(f"snapshot_t{k:04d}.txt", setup.basis, record, setup.model_hash, t)
        rows.append([values[c] for c in columns])
    out.csv("decay_curve.csv", columns, rows)


def run_pt_statistics(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    times = cfg.quench.time_list()
    P = distributions_over_time(setup.spectrum, setup.psi0, times)
    D = setup.basis.dimension
    d_beta = effective_dimension(setup.spectrum, setup.psi0, setup.p_avg).d_beta
    summary, hist = [], []
    for t, p in zip(times, P):
        ratio, Z = rescale(p, setup.p_avg)
        uniform = np.full(D, 1.0 / D)
        summary.append([t, Z, weighted_ks_distance(ratio, setup.p_avg), histogram_ks_distance(ratio, setup.p_avg),
                        weighted_ks_distance(p * D, uniform), histogram_ks_distance(p * D, uniform), d_beta])
        for x, dens, ref in zip(*pt_histogram(ratio, setup.p_avg)):
            hist.append([t, x, dens, ref])
    out.csv("pt_summary.csv", ["t", "second_moment", "ks_rescaled", "ks_rescaled_hist", "ks_unrescaled",
                               "ks_unrescaled_hist", "D_beta"], summary)
    out.csv("pt_histogram.csv", ["t", "x", "density", "exp_minus_x"], hist)


def run_single_error_response(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    r = cfg.response
    ops = build_jump_operators(setup.basis)
    chosen = [ops[j][1] for j in r.operators] if r.operators else [op for _, op in ops]
    tau = np.array(r.tau.values())
    response, f_beta = single_error_response(setup.spectrum, setup.psi0, chosen, r.error_times, tau, setup.p_avg)
    tau_d = delay_time(tau, response, f_beta)
    out.csv("response.csv", ["tau", "F_d_response"], np.column_stack([tau, response]))
    out.csv("delay_time.csv", ["F_beta", "tau_d"], [[f_beta, tau_d]])


def run_sample_complexity(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    c = cfg.complexity
    sd, psi0 = setup.spectrum, setup.psi0
    ideal = evolve_exact(sd, psi0, c.time)
    p = outcome_distribution(ideal)
    if c.error_site is None:
        p_err, overlap = setup.p_avg, diagonal_ensemble_purity(sd, psi0)
    else:
        V = site_occupation(setup.basis, c.error_site) if setup.basis.spec.kind in ("bose-hubbard", "fermi-hubbard") \
            else build_jump_operators(setup.basis)[c.error_site][1]
        wrong = single_error_state(sd, psi0, V, c.error_time, c.time)
        p_err, overlap = outcome_distribution(wrong), abs(np.vdot(ideal, wrong)) ** 2
    M = cfg.estimators.M
    rows = []
    for iw, w in enumerate(c.ideal_weights):
        q = w * p + (1 - w) * p_err
        F = w + (1 - w) * overlap
        values = np.array([est.f_hat_d(est.sample_record(q, M, _record_seed(cfg.estimators.seed, iw, r)),
                                       p, setup.p_avg).value for r in range(c.replicates)])
        predicted = 1 + 2 * F - F**2
        measured = M * values.var(ddof=1)
        rows.append([w, F, est.f_d(q, p, setup.p_avg), values.mean(), measured, predicted, measured / predicted])
    out.csv("sample_complexity.csv",
            ["ideal_weight", "F", "F_d", "mean_F_hat_d", "M_var", "predicted", "ratio"], rows)


def run_greedy_fit(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    f = cfg.fit
    names = [p.target for p in f.parameters]
    truth = {p.target: p.truth for p in f.parameters}
    space = ParameterSpace(names, [p.lower for p in f.parameters], [p.upper for p in f.parameters],
                           lambda theta: build_hamiltonian(setup.basis, model_params(cfg.model, theta)))
    device = diagonalize(build_hamiltonian(setup.basis, model_params(cfg.model, truth)))
    q = outcome_distribution(evolve_exact(device, setup.psi0, f.time))
    record = est.sample_record(q, cfg.estimators.M, _record_seed(cfg.estimators.seed, 0))
    centre = (space.lower + space.upper) / 2
    starts = [centre]
    if f.starts > 1:
        rng = np.random.default_rng(_record_seed(f.seed, 1))
        starts += list(rng.uniform(space.lower, space.upper, size=(f.starts - 1, space.size)))
    fit = greedy_fit(record, space, setup.psi0, f.time, f.seed, initial=np.array(starts), refine=f.refine)
    rows = []
    for j, p in enumerate(f.parameters):
        sigma = fit.uncertainty[j]
        within = bool(np.isfinite(sigma) and abs(fit.theta[j] - p.truth) <= 2 * sigma)
        rows.append([p.target, p.truth, fit.theta[j], sigma, fit.curvature[j], within])
    out.csv("fit.csv", ["parameter", "truth", "estimate", "uncertainty", "curvature", "within_2sigma"], rows)
    log = [f"score={float(fit.score)!r} stat_err={float(fit.stat_err)!r} sweeps={fit.sweeps} converged={fit.converged}"]
    log += [f"sweep={s.sweep} parameter={s.parameter or '-'} value={float(s.value)!r} F_hat_d={float(s.score)!r}" for s in fit.trace]
    out.text("fit_trace.log", log)


def run_scan(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    s = cfg.scan
    family = rotated_family(setup.basis)
    res = parameter_scan(s.phis, family, family(s.phi_star), setup.spectrum, s.time,
                         cfg.estimators.M, _record_seed(cfg.estimators.seed, 0))
    names, table = res.rows()
    out.csv("scan.csv", list(names), table)


def run_mps_model(cfg: RunConfig, out: ArtifactWriter) -> None:
    m = cfg.mps
    rows = []
    for n_a in m.n_a:
        params = MpsModelParams(m.d, m.chi, m.N, n_a, m.k, m.theta)
        pf = mps_partition_functions(params)
        F_bar = mean_fidelity(params)
        pred = mps_crossover_prediction(params, F_bar)
        seed = int(_record_seed(m.seed, n_a).generate_state(1)[0])
        mc = mps_monte_carlo(params, m.samples, seed)
        ratio, se = mc.ratio
        F_mc, F_se = mc.summary()["F"]
        F_pred = float(np.mean(expected_fidelity(params, mc.purity_a)))
        rows.append([n_a, pf.f_xi, pf.f_xi_chain, pf.f_xs, pred.exact_ratio, pred.ratio, pred.regime,
                     ratio, se, F_bar, F_pred, F_mc, F_se])
    out.csv("mps_model.csv", ["n_a", "f_XI", "f_XI_chain", "f_XS", "exact_ratio", "crossover_ratio", "regime",
                              "mc_ratio", "mc_ratio_se", "F_bar", "F_with_purity", "mc_F", "mc_F_se"], rows)


def run_failure_case(cfg: RunConfig, setup: Setup, out: ArtifactWriter) -> None:
    f = cfg.failure
    times = np.array(cfg.quench.time_list())
    sd, psi0 = setup.spectrum, setup.psi0
    series = f_id_d_series(sd, psi0, times, setup.p_avg)
    columns, cols = ["t", "F_id_d_plus_one"], [times, series + 1]
    if f.error_site is not None:
        V = build_jump_operators(setup.basis)[f.error_site][1]
        P = distributions_over_time(sd, psi0, times)
        F, fd, fph = [], [], []
        for t, p in zip(times, P):
            if t < f.error_time:
                F.append(np.nan), fd.append(np.nan), fph.append(np.nan)
                continue
            phi = single_error_state(sd, psi0, V, f.error_time, t)
            q = outcome_distribution(phi)
            F.append(abs(np.vdot(evolve_exact(sd, psi0, t), phi)) ** 2)
            fd.append(_safe(est.f_d, q, p, setup.p_avg))
            fph.append(_safe(est.f_d_ph, q, p, setup.p_avg))
        columns += ["F", "F_d", "F_d_PH"]
        cols += [np.array(F), np.array(fd), np.array(fph)]
    out.csv("failure_series.csv", columns, np.column_stack(cols))
    res = no_resonance_check(sd.energies, f.resonance_tol)
    summary = [["resonances", res.resonances], ["mirror_pairs", res.mirror_pairs], ["passes", res.passes],
               ["F_id_d_time_std", float(np.std(series))], ["F_id_d_time_mean", float(np.mean(series))]]
    out.csv("failure_summary.csv", ["quantity", "value"], summary)


def run_experiment(cfg: RunConfig, setup: Setup | None, out: ArtifactWriter, threads: int = 1) -> None:
    """Dispatch on the experiment kind; ``setup`` comes from prepare() (None for mps-model)."""
    if cfg.experiment == "mps-model":
        run_mps_model(cfg, out)
        return
    runners = {
        "decay-curve": lambda: run_decay_curve(cfg, setup, out, threads),
        "pt-statistics": lambda: run_pt_statistics(cfg, setup, out),
        "single-error-response": lambda: run_single_error_response(cfg, setup, out),
        "sample-complexity": lambda: run_sample_complexity(cfg, setup, out),
        "greedy-fit": lambda: run_greedy_fit(cfg, setup, out),
        "scan": lambda: run_scan(cfg, setup, out),
        "failure-case": lambda: run_failure_case(cfg, setup, out),
    }
    runners[cfg.experiment]()
