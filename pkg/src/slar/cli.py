"""Benchmark scenarios and the command-line front end.

Subcommands: `run` integrates one scenario and writes diagnostics.csv,
summary.txt, and config.json into --out; `convergence` measures mesh or
time-step accuracy orders; `scale` times a fixed-step scenario over a list
of mesh sizes.  All randomness flows from the single --seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .advection import SlarConfig, init_problem, predict_ranges, slar_step, support_window
from .diagnostics import RunDiagnostics, error_norms, field_peaks, fit_rate
from .fieldsolve import solve_poisson
from .lowrank import SvdFactors
from .mesh import BoundaryRule, PhaseGrid, UniformGrid1D, time_step_from_cfl
from .slfd import VelocityField
from .vlasov import init_distribution, moments, vp_step


@dataclass
class ScenarioConfig:
    """Fully resolved description of one benchmark run."""

    name: str
    kind: str  # "advection" or "vlasov"
    nx: int
    ny: int
    cfl: float
    tfinal: float
    xlo: float
    xhi: float
    ylo: float
    yhi: float
    ic: str
    field: str = ""  # advection only
    alpha: float = 0.0  # vlasov perturbation
    k: float = 0.0  # vlasov wavenumber
    eps_c: float = 1e-4
    eps_s: float = 1e-3
    r_max: int = 256
    p: int = 5
    s: int = 8
    window_tracking: bool = False
    seed: int = 0

    def slar_config(self) -> SlarConfig:
        return SlarConfig(eps_c=self.eps_c, eps_s=self.eps_s, r_max=self.r_max,
                          p=self.p, s=self.s, window_tracking=self.window_tracking,
                          seed=self.seed)

    def phase_grid(self) -> PhaseGrid:
        gx = UniformGrid1D(self.nx, self.xlo, self.xhi)
        gy = UniformGrid1D(self.ny, self.ylo, self.yhi)
        by = BoundaryRule.PERIODIC if self.kind == "advection" else BoundaryRule.ZERO
        return PhaseGrid(gx, gy, BoundaryRule.PERIODIC, by)


def preset(name: str) -> ScenarioConfig:
    pi = np.pi
    table = {
        "const_adv": ScenarioConfig(
            name="const_adv", kind="advection", nx=64, ny=64, cfl=1.0, tfinal=2.0,
            xlo=-pi, xhi=pi, ylo=-pi, yhi=pi, ic="const_adv_sine", field="const"),
        "rigid_rotation": ScenarioConfig(
            name="rigid_rotation", kind="advection", nx=128, ny=128, cfl=10.0,
            tfinal=2.0 * pi, xlo=-pi, xhi=pi, ylo=-pi, yhi=pi,
            ic="rbr_cosine_bell", field="rotation", window_tracking=True),
        "rigid_rotation_gaussian": ScenarioConfig(
            name="rigid_rotation_gaussian", kind="advection", nx=256, ny=256,
            cfl=10.0, tfinal=2.0 * pi, xlo=-pi, xhi=pi, ylo=-pi, yhi=pi,
            ic="rbr_gaussian", field="rotation", window_tracking=True),
        "swirl": ScenarioConfig(
            name="swirl", kind="advection", nx=256, ny=256, cfl=10.0, tfinal=1.5,
            xlo=-pi, xhi=pi, ylo=-pi, yhi=pi, ic="rbr_cosine_bell", field="swirl",
            window_tracking=True),
        "landau_weak": ScenarioConfig(
            name="landau_weak", kind="vlasov", nx=256, ny=256, cfl=10.0, tfinal=20.0,
            xlo=0.0, xhi=4.0 * pi, ylo=-2.0 * pi, yhi=2.0 * pi,
            ic="landau_weak", alpha=0.01, k=0.5, eps_c=1e-5, eps_s=1e-4),
        "landau_strong": ScenarioConfig(
            name="landau_strong", kind="vlasov", nx=256, ny=256, cfl=10.0, tfinal=40.0,
            xlo=0.0, xhi=4.0 * pi, ylo=-2.0 * pi, yhi=2.0 * pi,
            ic="landau_strong", alpha=0.5, k=0.5),
        "bump_on_tail": ScenarioConfig(
            name="bump_on_tail", kind="vlasov", nx=256, ny=256, cfl=10.0, tfinal=40.0,
            xlo=0.0, xhi=20.0 * pi / 3.0, ylo=-13.0, yhi=13.0,
            ic="bump_on_tail", alpha=0.04, k=0.3),
    }
    if name not in table:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(table)}")
    return table[name]


def make_field(sc: ScenarioConfig) -> VelocityField:
    if sc.field == "const":
        return VelocityField(a=lambda x, y, t: np.ones_like(np.asarray(x, dtype=float)),
                             b=lambda x, y, t: np.ones_like(np.asarray(y, dtype=float)),
                             amax=1.0, bmax=1.0)
    if sc.field == "rotation":
        bound = max(abs(sc.xlo), abs(sc.xhi), abs(sc.ylo), abs(sc.yhi))
        return VelocityField(a=lambda x, y, t: -np.asarray(y, dtype=float),
                             b=lambda x, y, t: np.asarray(x, dtype=float),
                             amax=bound, bmax=bound)
    if sc.field == "swirl":
        T = sc.tfinal
        two_pi = 2.0 * np.pi

        def a(x, y, t):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return -two_pi * np.cos(0.5 * x) ** 2 * np.sin(y) * np.cos(np.pi * t / T)

        def b(x, y, t):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return two_pi * np.sin(x) * np.cos(0.5 * y) ** 2 * np.cos(np.pi * t / T)

        return VelocityField(a=a, b=b, amax=two_pi, bmax=two_pi)
    raise ValueError(f"unknown field {sc.field!r}")


def exact_solution(sc: ScenarioConfig, t: float, pgrid: PhaseGrid) -> np.ndarray | None:
    """Dense reference when one is known in closed form; None otherwise."""
    X = pgrid.gx.centers[:, None]
    Y = pgrid.gy.centers[None, :]
    if sc.ic == "const_adv_sine" and sc.field == "const":
        return np.sin(X + Y - 2.0 * t)
    if sc.field == "rotation":
        c, s = np.cos(t), np.sin(t)
        xr = X * c + Y * s
        yr = -X * s + Y * c
        if sc.ic == "rbr_gaussian":
            return np.exp(-25.0 * xr**2) * np.exp(-2.0 * yr**2)
        if sc.ic == "rbr_cosine_bell":
            from .advection import cosine_bell

            return cosine_bell(xr, yr)
    if sc.field == "swirl" and (abs(t) < 1e-12 or abs(t - sc.tfinal) < 1e-12):
        from .advection import cosine_bell

        return cosine_bell(X, Y)
    return None


@dataclass
class RunResult:
    sc: ScenarioConfig
    diag: RunDiagnostics
    wall: float
    steps: int
    F: object
    pgrid: PhaseGrid
    errors: dict
    extras: dict


def _factored_mass(F: SvdFactors, cell_area: float) -> float:
    if F.rank == 0:
        return 0.0
    return float(cell_area * np.sum(F.sigma * F.U.sum(axis=0) * F.V.sum(axis=0)))


def _dump_pivots(out_dir: Path, step: int, piv_rows, piv_cols) -> None:
    with open(out_dir / f"pivots_{step}.csv", "w") as fh:
        fh.write("row,col\n")
        for i, j in zip(piv_rows, piv_cols):
            fh.write(f"{int(i) + 1},{int(j) + 1}\n")


def run_advection(sc: ScenarioConfig, out_dir: Path | None = None, cadence: int = 1,
                  dump_pivots: bool = False, dt_fixed: float | None = None) -> RunResult:
    pgrid = sc.phase_grid()
    cfg = sc.slar_config()
    rng = np.random.default_rng(sc.seed)
    field = make_field(sc)
    F = init_problem(sc.ic, pgrid)
    area = pgrid.cell_area
    diag = RunDiagnostics()
    diag.record(0.0, F.rank, F.rank, 0, 0.0, _factored_mass(F, area), 0.0, 0.0)

    dt0 = dt_fixed if dt_fixed is not None else time_step_from_cfl(
        sc.cfl, field.amax, field.bmax, pgrid.gx.delta, pgrid.gy.delta)
    t, step, t0 = 0.0, 0, time.time()
    while t < sc.tfinal - 1e-14:
        dt = min(dt0, sc.tfinal - t)
        win = None
        if cfg.window_tracking:
            win = predict_ranges(support_window(F, abs_cut=cfg.eps_s), field,
                                 t, t + dt, pgrid, s=cfg.s, rng=rng)
        F, st = slar_step(F, t, t + dt, field, cfg, pgrid, win=win, rng=rng)
        t += dt
        step += 1
        if step % cadence == 0 or t >= sc.tfinal - 1e-14:
            diag.record(t, st.rank_cross, st.rank_svd, st.oracle_calls,
                        0.0, _factored_mass(F, area), 0.0, 0.0)
        if dump_pivots and out_dir is not None:
            _dump_pivots(out_dir, step, st.piv_rows, st.piv_cols)
    wall = time.time() - t0

    errors = {}
    ref = exact_solution(sc, sc.tfinal, pgrid)
    if ref is not None:
        l1, linf = error_norms(F, ref, pgrid)
        errors = {"l1": l1, "linf": linf}
    res = RunResult(sc=sc, diag=diag, wall=wall, steps=step, F=F, pgrid=pgrid,
                    errors=errors, extras={})
    if out_dir is not None:
        _write_outputs(res, out_dir)
    return res


def run_vlasov(sc: ScenarioConfig, out_dir: Path | None = None, cadence: int = 1,
               dump_pivots: bool = False, dt_fixed: float | None = None,
               use_ilu: bool = True) -> RunResult:
    pgrid = sc.phase_grid()
    xg, vg = pgrid.gx, pgrid.gy
    cfg = sc.slar_config()
    rng = np.random.default_rng(sc.seed)
    F = init_distribution(sc.ic, pgrid, sc.alpha, sc.k)
    mac = moments(F, vg)
    fld = solve_poisson(mac.rho, xg)
    vmax = max(abs(sc.ylo), abs(sc.yhi))

    def energy(m, e_field):
        return float(xg.delta * m.kappa.sum() + 0.5 * xg.delta * np.sum(e_field**2))

    def e_l2(e_field):
        return float(np.sqrt(xg.delta * np.sum(e_field**2)))

    diag = RunDiagnostics()
    diag.record(0.0, F.rank, F.rank, 0, e_l2(fld.E),
                float(xg.delta * mac.rho.sum()), float(xg.delta * mac.J.sum()),
                energy(mac, fld.E))

    mac_prev, dt_prev = None, None
    gmres_per_step: list[tuple[int, ...]] = []
    t, step, t0 = 0.0, 0, time.time()
    while t < sc.tfinal - 1e-14:
        dt = dt_fixed if dt_fixed is not None else sc.cfl / (
            vmax / xg.delta + float(np.abs(fld.E).max()) / vg.delta)
        dt = min(dt, sc.tfinal - t)
        F, mac_new, fld, st = vp_step(F, (mac_prev, mac), fld, t, dt, pgrid, cfg,
                                      dt_prev=dt_prev, rng=rng, use_ilu=use_ilu)
        mac_prev, mac = mac, mac_new
        dt_prev = dt
        t += dt
        step += 1
        gmres_per_step.append(st.gmres_iterations)
        if step % cadence == 0 or t >= sc.tfinal - 1e-14:
            diag.record(t, st.rank_cross, st.rank_svd, st.oracle_calls,
                        e_l2(fld.E), float(xg.delta * mac.rho.sum()),
                        float(xg.delta * mac.J.sum()), energy(mac, fld.E))
        if dump_pivots and out_dir is not None:
            _dump_pivots(out_dir, step, st.stages[-1].piv_rows, st.stages[-1].piv_cols)
    wall = time.time() - t0

    extras = {"gmres_iterations": gmres_per_step}
    e = np.asarray(diag.E_l2)
    if np.all(e > 0.0) and len(e) > 8:
        pk = field_peaks(e)
        extras["peak_indices"] = pk
        extras["peak_times"] = np.asarray(diag.t)[pk]
        # decay-rate fit over the strictly decreasing prefix of peak values;
        # a regrowth (physical or numerical) ends the decay phase
        ndec = 1
        while ndec < pk.size and e[pk[ndec]] < e[pk[ndec - 1]]:
            ndec += 1
        if ndec >= 2:
            extras["fitted_decay_rate"] = fit_rate(diag.t, e, pk[:ndec])
    res = RunResult(sc=sc, diag=diag, wall=wall, steps=step, F=F, pgrid=pgrid,
                    errors={}, extras=extras)
    if out_dir is not None:
        _write_outputs(res, out_dir)
    return res


def run_scenario(sc: ScenarioConfig, **kw) -> RunResult:
    if sc.kind == "advection":
        kw.pop("use_ilu", None)
        return run_advection(sc, **kw)
    return run_vlasov(sc, **kw)


def _write_outputs(res: RunResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res.diag.write_csv(out_dir / "diagnostics.csv")
    with open(out_dir / "config.json", "w") as fh:
        json.dump(dataclasses.asdict(res.sc), fh, indent=2, sort_keys=True)
        fh.write("\n")

    lines = [f"scenario={res.sc.name}", f"nx={res.sc.nx}", f"ny={res.sc.ny}",
             f"cfl={res.sc.cfl:.17g}", f"tfinal={res.sc.tfinal:.17g}",
             f"eps_c={res.sc.eps_c:.17g}", f"eps_s={res.sc.eps_s:.17g}",
             f"seed={res.sc.seed}", f"steps={res.steps}",
             f"wall_seconds={res.wall:.3f}"]
    rs = res.diag.rank_svd[1:] or res.diag.rank_svd
    rc = res.diag.rank_cross[1:] or res.diag.rank_cross
    lines.append(f"avg_rank_svd={np.mean(rs):.2f}")
    lines.append(f"avg_rank_cross={np.mean(rc):.2f}")
    lines.append(f"final_rank_svd={res.diag.rank_svd[-1]}")
    lines.append(f"oracle_calls_total={int(np.sum(res.diag.oracle_calls))}")
    for key, val in sorted(res.errors.items()):
        lines.append(f"final_{key}_error={val:.17g}")
    lines.append(f"max_mass_rel_dev={res.diag.mass_rel_dev().max():.17g}")
    if res.sc.kind == "vlasov":
        lines.append(f"final_E_l2={res.diag.E_l2[-1]:.17g}")
        lines.append(f"max_momentum_dev={res.diag.momentum_dev().max():.17g}")
        lines.append(f"max_energy_rel_dev={res.diag.energy_rel_dev().max():.17g}")
        if "fitted_decay_rate" in res.extras:
            lines.append(f"fitted_decay_rate={res.extras['fitted_decay_rate']:.6g}")
        if "peak_times" in res.extras:
            times = ",".join(f"{v:.4g}" for v in res.extras["peak_times"][:12])
            lines.append(f"peak_times={times}")
    with open(out_dir / "summary.txt", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _restrict_half(fine: np.ndarray) -> np.ndarray:
    """Average 2x2 fine-cell blocks onto the coarse cell centers."""
    return 0.25 * (fine[0::2, 0::2] + fine[1::2, 0::2]
                   + fine[0::2, 1::2] + fine[1::2, 1::2])


def convergence_mesh(sc: ScenarioConfig, meshes: list[int]) -> dict:
    """Errors and successive orders over a mesh refinement sequence."""
    errs_l1, errs_linf = [], []
    for n in meshes:
        s = dataclasses.replace(sc, nx=n, ny=n)
        res = run_scenario(s)
        ref = exact_solution(s, s.tfinal, res.pgrid)
        if ref is not None:
            l1, linf = error_norms(res.F, ref, res.pgrid)
        else:
            s2 = dataclasses.replace(sc, nx=2 * n, ny=2 * n, window_tracking=False)
            res2 = run_scenario(s2)
            coarse = res.F.materialize()
            fine = _restrict_half(res2.F.materialize())
            l1 = float(res.pgrid.cell_area * np.abs(coarse - fine).sum())
            linf = float(np.abs(coarse - fine).max())
        errs_l1.append(l1)
        errs_linf.append(linf)

    def orders(errs):
        out = []
        for a, b in zip(errs, errs[1:]):
            out.append(float(np.log2(a / b)) if a > 0 and b > 0 and a != b else float("nan"))
        return out

    return {"meshes": list(meshes), "l1": errs_l1, "linf": errs_linf,
            "orders_l1": orders(errs_l1), "orders_linf": orders(errs_linf)}


def convergence_cfl(sc: ScenarioConfig, cfls: list[float]) -> dict:
    """Errors over a CFL scan and the least-squares slope in log-log.

    With a closed-form reference the error is measured against it; otherwise
    each run is compared with a 16x-finer-step run of itself, which isolates
    the time discretization.
    """
    errs_l1, errs_linf = [], []
    for c in cfls:
        s = dataclasses.replace(sc, cfl=c)
        res = run_scenario(s)
        ref = exact_solution(s, s.tfinal, res.pgrid)
        if ref is None:
            sref = dataclasses.replace(sc, cfl=c / 16.0)
            ref = run_scenario(sref).F.materialize()
        l1, linf = error_norms(res.F, ref, res.pgrid)
        errs_l1.append(l1)
        errs_linf.append(linf)
    logc = np.log(np.asarray(cfls, dtype=float))
    A = np.column_stack([logc, np.ones(len(cfls))])
    slope_l1 = float(np.linalg.lstsq(A, np.log(errs_l1), rcond=None)[0][0])
    slope_linf = float(np.linalg.lstsq(A, np.log(errs_linf), rcond=None)[0][0])
    return {"cfls": list(cfls), "l1": errs_l1, "linf": errs_linf,
            "slope_l1": slope_l1, "slope_linf": slope_linf}


def scale_study(sc: ScenarioConfig, sizes: list[int], dt: float) -> dict:
    """Wall time across mesh sizes at a fixed time step."""
    walls = []
    for n in sizes:
        s = dataclasses.replace(sc, nx=n, ny=n)
        res = run_scenario(s, dt_fixed=dt)
        walls.append(res.wall)
    ratios = [walls[i + 1] / walls[i] for i in range(len(walls) - 1)]
    return {"sizes": list(sizes), "wall": walls, "ratios": ratios}


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


def _apply_overrides(sc: ScenarioConfig, args) -> ScenarioConfig:
    fields = {}
    for src_name, dst in (("nx", "nx"), ("ny", "ny"), ("cfl", "cfl"),
                          ("tfinal", "tfinal"), ("eps_c", "eps_c"),
                          ("eps_s", "eps_s"), ("rmax", "r_max"),
                          ("samples_p", "p"), ("samples_s", "s"),
                          ("seed", "seed"), ("vmin", "ylo"), ("vmax", "yhi")):
        val = getattr(args, src_name, None)
        if val is not None:
            fields[dst] = val
    if getattr(args, "zero_ic", False):
        fields["alpha"] = 0.0
    return dataclasses.replace(sc, **fields)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True)
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--cfl", type=float)
    p.add_argument("--tfinal", type=float)
    p.add_argument("--eps-c", dest="eps_c", type=float)
    p.add_argument("--eps-s", dest="eps_s", type=float)
    p.add_argument("--rmax", type=int)
    p.add_argument("--samples-p", dest="samples_p", type=int)
    p.add_argument("--samples-s", dest="samples_s", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--vmin", type=float, help="velocity-axis lower bound (kinetic runs)")
    p.add_argument("--vmax", type=float, help="velocity-axis upper bound (kinetic runs)")
    p.add_argument("--out", type=Path, default=None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="slar",
                                     description="low-rank semi-Lagrangian benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one scenario")
    _add_common(p_run)
    p_run.add_argument("--cadence", type=int, default=1)
    p_run.add_argument("--dump-pivots", action="store_true")
    p_run.add_argument("--zero-ic", action="store_true",
                       help="drop the initial perturbation (kinetic runs)")
    p_run.add_argument("--dt", type=float, default=None, help="fixed step override")
    p_run.add_argument("--no-ilu", action="store_true",
                       help="run the implicit stage solves unpreconditioned")

    p_conv = sub.add_parser("convergence", help="mesh or time-step accuracy study")
    _add_common(p_conv)
    p_conv.add_argument("--mode", choices=("mesh", "cfl"), required=True)
    p_conv.add_argument("--meshes", type=_int_list, default=[16, 32, 64, 128])
    p_conv.add_argument("--cfls", type=_float_list, default=[1.25, 2.5, 5.0, 10.0, 20.0])

    p_scale = sub.add_parser("scale", help="wall-time growth over mesh sizes")
    _add_common(p_scale)
    p_scale.add_argument("--sizes", type=_int_list, default=[64, 128, 256, 512])
    p_scale.add_argument("--dt", type=float, default=0.01)

    args = parser.parse_args(argv)
    sc = _apply_overrides(preset(args.scenario), args)

    if args.command == "run":
        res = run_scenario(sc, out_dir=args.out, cadence=args.cadence,
                           dump_pivots=args.dump_pivots,
                           dt_fixed=getattr(args, "dt", None),
                           use_ilu=not getattr(args, "no_ilu", False))
        summary = Path(args.out) / "summary.txt" if args.out else None
        if summary is not None:
            sys.stdout.write(summary.read_text())
        else:
            sys.stdout.write(f"steps={res.steps} wall_seconds={res.wall:.3f}\n")
        return 0

    if args.command == "convergence":
        out = (convergence_mesh(sc, args.meshes) if args.mode == "mesh"
               else convergence_cfl(sc, args.cfls))
        text = json.dumps(out, indent=2)
        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / f"convergence_{args.mode}.json").write_text(text + "\n")
        sys.stdout.write(text + "\n")
        return 0

    out = scale_study(sc, args.sizes, args.dt)
    text = json.dumps(out, indent=2)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "scale.json").write_text(text + "\n")
    sys.stdout.write(text + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
