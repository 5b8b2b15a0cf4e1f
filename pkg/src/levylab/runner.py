"""Configuration-driven orchestration: scenario execution, certificate
aggregation and artifact emission.

A run executes solve -> verifiers -> molecule lab -> regularity probe as
requested, recording one certificate per requested verifier.  Artifacts are
written atomically (temp directory, then rename); report.json is byte-stable
for a fixed (config, seed) while wall-clock metrics live in timing.json.
"""

from __future__ import annotations

import hashlib
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import figures
from .config import load_config
from .drifts import MollifierPair, VelocityField, make_divfree, mollify
from .fieldio import canonical_json, write_csv, write_field, write_json, write_symbol_table
from .grid import (
    Grid,
    SampledField,
    lattice_weierstrass_field,
    smooth_random_field,
)
from .kernels import LevyKernel, check_nondegeneracy, tabulate_symbol
from .molecules import (
    compute_constants,
    make_molecule,
    schedule_iterations,
    track_deformation,
)
from .probe import MoleculeFamily, estimate_holder_exponent
from .solver import (
    SolverConfig,
    ViscousProblem,
    backward_dual_solve,
    imex_solve,
    picard_solve,
)
from .spaces import MorreyParams
from .verifiers import (
    calibrate_besov_chain,
    verify_besov_regularity,
    verify_max_principle,
    verify_positivity,
    verify_stroock_varopoulos,
    verify_symbol_bounds,
    verify_transfer,
)


@dataclass
class RunReport:
    scenario_digest: str
    certificates: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    wall_clock: dict = field(default_factory=dict)
    output_dir: str | None = None

    @property
    def all_pass(self) -> bool:
        return all(c.get("verdict") == "pass" for c in self.certificates.values())

    def to_dict(self) -> dict:
        return {
            "scenario_digest": self.scenario_digest,
            "certificates": self.certificates,
            "stages": self.stages,
            "tables": self.tables,
        }


def _digest_config(cfg: dict) -> str:
    scenario = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(scenario).encode()).hexdigest()[:16]


def _build_theta0(cfg: dict, grid: Grid, rng) -> SampledField:
    spec = cfg["theta0"]
    kind = spec.get("kind", "positive-smooth")
    if kind == "constant":
        return SampledField(grid, np.full(grid.shape, float(spec.get("value", 1.0))))
    if kind == "mode":
        kvec = spec.get("mode", [1, 0])
        phase = sum(k * c for k, c in zip(kvec, grid.coords))
        return SampledField(grid, float(spec.get("amplitude", 1.0)) * np.cos(phase))
    if kind == "bump":
        width = float(spec.get("width", 0.5))
        dist = grid.distance_from([grid.side_length / 2] * grid.n)
        vals = np.exp(-(dist**2) / (2 * width**2))
        return SampledField(grid, float(spec.get("amplitude", 1.0)) * vals)
    if kind == "smooth":
        vals = smooth_random_field(grid, rng, corr_scale=float(spec.get("corr_scale", 0.5)),
                                   amplitude=float(spec.get("amplitude", 1.0)))
        return SampledField(grid, vals)
    if kind == "positive-smooth":
        raw = smooth_random_field(grid, rng, corr_scale=float(spec.get("corr_scale", 0.5)))
        lo, hi = raw.min(), raw.max()
        unit = (raw - lo) / (hi - lo) if hi > lo else np.zeros_like(raw)
        amp = float(spec.get("amplitude", 1.0))
        off = float(spec.get("offset", 0.0))
        return SampledField(grid, off + amp * unit)
    if kind == "rough":
        vals = lattice_weierstrass_field(
            grid, float(spec.get("exponent", 0.35)), octaves=int(spec.get("octaves", 8)),
            rng=rng, amplitude=float(spec.get("amplitude", 1.0)),
        )
        return SampledField(grid, vals)
    raise ValueError(f"unknown theta0 kind {kind!r}")


def _build_drift(cfg: dict, grid: Grid, rng) -> VelocityField | None:
    spec = dict(cfg["drift"])
    if spec.get("kind", "none") == "none":
        return None
    morrey = spec.pop("morrey", {"q": 4.0, "a": 2.5, "local": True})
    eps = spec.pop("mollify_epsilon", None)
    profile = MorreyParams(q=morrey.get("q", 4.0), a=morrey.get("a", 2.5),
                           local=morrey.get("local", True))
    v = make_divfree(spec, grid, profile, rng)
    if eps:
        v = mollify(v, MollifierPair(epsilon=float(eps)))
    return v


def _run_stages(cfg: dict, rng) -> RunReport:
    report = RunReport(scenario_digest=_digest_config(cfg))
    t_start = time.perf_counter()
    grid = Grid(**cfg["grid"])
    kernel = LevyKernel(**cfg["kernel"], n=grid.n)
    symbol = tabulate_symbol(kernel, grid)
    report.stages["kernel"] = {
        "nondegeneracy": check_nondegeneracy(kernel).to_dict(),
        "kernel_id": symbol.kernel_id,
    }
    report.wall_clock["kernel"] = time.perf_counter() - t_start

    verifiers = list(cfg["verifiers"])
    if "symbol-bounds" in verifiers:
        report.certificates["symbol-bounds"] = verify_symbol_bounds(symbol, kernel).to_dict()

    artifacts = {"grid": grid, "kernel": kernel, "symbol": symbol}

    # drift + initial data + solve
    t0 = time.perf_counter()
    traj = None
    try:
        v = _build_drift(cfg, grid, rng)
        theta0 = _build_theta0(cfg, grid, rng)
        s = cfg["solver"]
        problem = ViscousProblem(
            kernel=kernel, v=v, epsilon_visc=float(s["epsilon_visc"]),
            theta0=theta0, horizon=float(s["horizon"]),
        )
        sconf = SolverConfig(
            dt=float(s["dt"]), scheme=s["scheme"], picard_tol=float(s["picard_tol"]),
            max_iters=int(s["max_iters"]), store_every=int(s["store_every"]),
        )
        traj = picard_solve(problem, sconf) if s["scheme"] == "picard-duhamel" else imex_solve(
            problem, sconf
        )
        report.stages["solve"] = {
            "scheme": s["scheme"],
            "drift": v.generator if v is not None else "none",
            "drift_norm": v.morrey_report if v is not None else None,
            "steps": len(traj.times) - 1,
        }
        report.tables["norms"] = {
            "times": traj.times.tolist(),
            **{k: vals for k, vals in traj.diagnostics["norms"].items()},
        }
        artifacts.update({"traj": traj, "theta0": theta0, "drift": v, "problem": problem})
    except Exception as exc:  # record and skip downstream stages
        report.stages["solve"] = {"error": f"{type(exc).__name__}: {exc}"}
    report.wall_clock["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if traj is not None:
        if "max-principle" in verifiers:
            report.certificates["max-principle"] = verify_max_principle(traj).to_dict()
        if "positivity" in verifiers:
            try:
                cert = verify_positivity(traj, M=float(cfg["positivity_level"]))
                report.certificates["positivity"] = cert.to_dict()
            except Exception as exc:
                report.certificates["positivity"] = {
                    "name": "positivity", "verdict": "fail",
                    "error": f"{type(exc).__name__}: {exc}",
                }
        if "stroock-varopoulos" in verifiers:
            cert = verify_stroock_varopoulos(traj.final(), symbol, p=4)
            report.certificates["stroock-varopoulos"] = cert.to_dict()
        if "besov-chain" in verifiers:
            calib = [
                SampledField(grid, 1.2 + smooth_random_field(grid, rng))
                for _ in range(6)
            ]
            consts = calibrate_besov_chain(calib, kernel, p=2)
            fresh = SampledField(grid, 1.2 + smooth_random_field(grid, rng))
            cert = verify_besov_regularity(fresh, kernel, 2, consts)
            report.certificates["besov-chain"] = cert.to_dict()
        if "transfer" in verifiers:
            psi0 = SampledField(grid, smooth_random_field(grid, rng))
            problem = artifacts["problem"]
            fw = imex_solve(
                ViscousProblem(kernel=kernel, v=artifacts["drift"], epsilon_visc=0.0,
                               theta0=artifacts["theta0"], horizon=problem.horizon),
                SolverConfig(dt=float(cfg["solver"]["dt"])),
            )
            bw = backward_dual_solve(artifacts["drift"], kernel, psi0, problem.horizon,
                                     dt=float(cfg["solver"]["dt"]))
            report.certificates["transfer"] = verify_transfer(fw, bw).to_dict()
    else:
        for name in verifiers:
            if name != "symbol-bounds":
                report.certificates.setdefault(
                    name, {"name": name, "verdict": "fail", "error": "solve stage failed"}
                )
    report.wall_clock["verifiers"] = time.perf_counter() - t0

    # molecule laboratory
    mcfg = cfg["molecule_lab"]
    if mcfg.get("enabled"):
        t0 = time.perf_counter()
        try:
            bundle = compute_constants(
                {
                    "n": grid.n, "alpha": kernel.alpha, "delta": kernel.delta,
                    "gamma": mcfg.get("gamma", 0.2), "omega": mcfg.get("omega", 0.5),
                    "q": mcfg.get("q", 20.0), "mu": mcfg.get("mu", 1.0),
                    "cbar1": kernel.cbar1,
                }
            )
            lab_grid = grid
            side = mcfg.get("grid_side_length")
            if side and abs(side - grid.side_length) > 1e-12:
                lab_grid = Grid(n=grid.n, points_per_dim=grid.points_per_dim,
                                side_length=float(side))
            traces = {}
            molecules = {}
            verdicts = {}
            lab_drift = _build_drift(cfg, lab_grid, rng) if lab_grid is not grid else artifacts.get("drift")
            for r in mcfg.get("r_list", [1 / 8]):
                mol = make_molecule(
                    float(r), [lab_grid.side_length / 2] * lab_grid.n,
                    bundle.gamma, bundle.omega, bundle.zeta, lab_grid,
                )
                sched = schedule_iterations(
                    float(r), bundle.alpha, mcfg.get("eps_step", 0.1),
                    mcfg.get("T0", 2.0), bundle,
                )
                trace = track_deformation(
                    mol, lab_drift, kernel, bundle, sched, dt=mcfg.get("dt", 2e-3)
                )
                traces[f"r={r:g}"] = trace
                molecules[f"r={r:g}"] = mol
                verdicts[f"r={r:g}"] = trace.all_pass()
            report.stages["molecule_lab"] = {
                "bundle": bundle.to_dict(),
                "verdicts": verdicts,
                "final_l1": {k: float(t.l1s[-1]) for k, t in traces.items()},
            }
            report.certificates["molecule-deformation"] = {
                "name": "molecule-deformation",
                "verdict": "pass" if all(verdicts.values()) else "fail",
                "per_size": verdicts,
            }
            artifacts["traces"] = traces
            artifacts["molecules"] = molecules
            artifacts["bundle"] = bundle
        except Exception as exc:
            report.stages["molecule_lab"] = {"error": f"{type(exc).__name__}: {exc}"}
            report.certificates["molecule-deformation"] = {
                "name": "molecule-deformation", "verdict": "fail",
                "error": f"{type(exc).__name__}: {exc}",
            }
        report.wall_clock["molecule_lab"] = time.perf_counter() - t0

    pcfg = cfg["holder_probe"]
    if pcfg.get("enabled") and traj is None:
        report.stages["holder_probe"] = {"skipped": "solve stage failed"}
    if pcfg.get("enabled") and traj is not None:
        t0 = time.perf_counter()
        try:
            fam = MoleculeFamily.build(
                grid, gamma=pcfg.get("gamma", 0.2), omega=pcfg.get("omega", 0.5),
                zeta=pcfg.get("zeta", 2.0),
                center_stride=pcfg.get("center_stride", 4),
            )
            t_probe = pcfg.get("t_probe", float(traj.times[-1]))
            rep = estimate_holder_exponent(traj, fam, t=t_probe, kernel=kernel)
            report.stages["holder_probe"] = rep.to_dict()
            artifacts["probe"] = rep
        except Exception as exc:
            report.stages["holder_probe"] = {"error": f"{type(exc).__name__}: {exc}"}
        report.wall_clock["holder_probe"] = time.perf_counter() - t0

    report.wall_clock["total"] = time.perf_counter() - t_start
    report._artifacts = artifacts  # noqa: SLF001 - internal handoff to the writer
    return report


def _write_artifacts(report: RunReport, cfg: dict, out_dir: Path):
    """Materialize the report tree atomically."""
    tmp = Path(tempfile.mkdtemp(prefix="levylab-", dir=out_dir.parent))
    try:
        art = report._artifacts
        write_json(tmp / "report.json", report.to_dict())
        write_json(tmp / "config.resolved.json", cfg)
        write_json(tmp / "timing.json", report.wall_clock)
        write_symbol_table(tmp / "symbol.bin", art["symbol"], art["kernel"])
        if "theta0" in art:
            write_field(tmp / "theta0.bin", art["theta0"])
        if art.get("drift") is not None:
            from .fieldio import write_velocity

            write_velocity(tmp / "drift.bin", art["drift"])
        if "traj" in art:
            traj = art["traj"]
            write_field(tmp / "theta_final.bin", traj.final())
            from .fieldio import write_fields

            write_fields(tmp / "trajectory.bin", list(traj.states), traj.grid)
            write_json(tmp / "trajectory_times.json", traj.times.tolist())
            norm_rows = [
                {"time": t, **{f"p{p}": report.tables["norms"][p][i]
                               for p in ("1", "2", "4", "inf")}}
                for i, t in enumerate(report.tables["norms"]["times"])
            ]
            write_csv(tmp / "norms.csv", ["time", "p1", "p2", "p4", "pinf"], norm_rows)
            figures.norm_decay_figure(
                report.tables["norms"]["times"],
                {p: report.tables["norms"][p] for p in ("1", "2", "4", "inf")},
                tmp / "norms.png",
            )
        for key, trace in art.get("traces", {}).items():
            rows = trace.rows()
            header = list(rows[0].keys())
            slug = key.replace("=", "").replace("/", "_")
            write_csv(tmp / f"trace_{slug}.csv", header, rows)
            figures.molecule_trace_figure(rows, tmp / f"trace_{slug}.png")
        for key, mol in art.get("molecules", {}).items():
            slug = key.replace("=", "").replace("/", "_")
            write_field(tmp / f"molecule_{slug}.bin", mol.field)
        if "probe" in art:
            rep = art["probe"]
            rows = rep.details["dual"]["rows"]
            write_csv(
                tmp / "pairings.csv", ["r", "sup_pairing", "l1_mass", "normalized"], rows
            )
            figures.pairing_decay_figure(rows, rep.gamma_dual, tmp / "pairings.png")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)


def run(config_source, output_dir=None) -> RunReport:
    """Execute one scenario and write its artifact tree."""
    cfg = load_config(config_source)
    if output_dir is not None:
        cfg["output_dir"] = str(output_dir)
    rng = np.random.default_rng(int(cfg["seed"]))
    report = _run_stages(cfg, rng)
    out_dir = Path(cfg["output_dir"])
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    _write_artifacts(report, cfg, out_dir)
    report.output_dir = str(out_dir)
    return report


def _norms_key(report: RunReport, p: str = "2"):
    norms = report.tables.get("norms")
    if not norms:
        return None
    return norms[p][-1]


def sweep(config_source, axis: str, values, output_dir=None, workers: int | None = None):
    """Run the scenario once per axis value and aggregate a plot-ready table."""
    from concurrent.futures import ThreadPoolExecutor

    from .config import set_by_path

    if not values:
        raise ValueError("sweep needs a nonempty value list")
    cfg = load_config(config_source)
    base_out = Path(output_dir or (cfg["output_dir"] + "-sweep"))
    base_out.mkdir(parents=True, exist_ok=True)
    if workers is None:
        workers = int(os.environ.get("LEVYLAB_WORKERS", "1"))

    def one(iv):
        i, v = iv
        sub = set_by_path(cfg, axis, v)
        return run(sub, output_dir=base_out / f"value_{i:03d}")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        reports = list(pool.map(one, enumerate(values)))

    rows = []
    for v, rep in zip(values, reports):
        rows.append(
            {
                "axis_value": v,
                "all_pass": rep.all_pass,
                "final_l2": _norms_key(rep),
                "worst_margin": min(
                    (c.get("worst_margin", float("inf")) for c in rep.certificates.values()),
                    default=None,
                ),
            }
        )
    write_csv(
        base_out / "sweep.csv",
        ["axis_value", "all_pass", "final_l2", "worst_margin"],
        rows,
        manifest={"axis": axis},
    )
    figures.sweep_figure(
        axis, values, {"final_l2": [r["final_l2"] for r in rows]}, base_out / "sweep.png"
    )
    return {"axis": axis, "values": list(values), "rows": rows, "reports": reports,
            "output_dir": str(base_out)}
