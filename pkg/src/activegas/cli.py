"""Command-line entry point.

Subcommands: coeffs, stability (eigen|boundary|spinodal), pde
(run|classify|sweep), micro (run|sweep|histogram), compare.  Every run
writes its fully resolved configuration to resolved_config.json in the
output directory; `activegas --config that.json --out NEWDIR` replays it
and reproduces all output files bitwise.

Exit codes: 0 success, 2 invalid configuration, 3 numerical abort, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fvm, io, linstab, micro, observables
from .coeffs import TransportCoefficients
from .errors import CflError, ConvergenceError, ParameterError, ScaleError
from .params import DimensionlessParams, to_physical

TWO_PI = 2.0 * math.pi

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _coeffs() -> TransportCoefficients:
    return TransportCoefficients()


def _parse_grid(text: str):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ParameterError(f"grid must look like 64x64x32, got {text!r}")
    return tuple(int(p) for p in parts)


def _parse_range(text: str) -> list[float]:
    """start:stop:step, inclusive of stop up to rounding."""
    try:
        a, b, s = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ParameterError(f"range must look like 0.5:0.9:0.1, got {text!r}") from exc
    if s <= 0 or b < a:
        raise ParameterError(f"bad range {text!r}")
    return [float(v) for v in np.round(np.arange(a, b + 0.5 * s, s), 12)]


def _physical(cfg):
    d = DimensionlessParams(phi=cfg["phi"], Pe=cfg["pe"], ell=cfg["ell"])
    return to_physical(d, D_E=cfg.get("D_E", 1.0))


def _orientation(cfg) -> str:
    return linstab.RUN_AND_TUMBLE if cfg.get("tumble") else linstab.DIFFUSION


# -- coeffs ----------------------------------------------------------------


def cmd_coeffs(cfg, out: Path) -> int:
    c = _coeffs()
    rho = np.linspace(0.0, 1.0, cfg["rho_points"])
    rows = zip(rho, c.ds(rho), c.ds_prime(rho), c.cal_D(rho), c.s(rho), c.Q(rho))
    io.write_csv(out / "coeffs.csv", "rho,ds,ds_prime,cal_D,s,Q", rows)
    return EXIT_OK


# -- stability -------------------------------------------------------------


def cmd_stability_eigen(cfg, out: Path) -> int:
    prob = linstab.StabilityProblem(
        phi=cfg["phi"],
        params=_physical(cfg),
        omega=TWO_PI * cfg["omega_index"],
        n=cfg["n"],
        orientation_dynamics=_orientation(cfg),
    )
    res = linstab.leading_eigenpair(prob, _coeffs())
    io.write_csv(
        out / "eigen.csv",
        "phi,pe,ell,re_lambda,im_lambda,truncation_error",
        [(cfg["phi"], cfg["pe"], cfg["ell"], res.lambda_max.real,
          res.lambda_max.imag, res.truncation_error)],
    )
    print(f"lambda_max = {res.lambda_max.real:+.9g} {res.lambda_max.imag:+.3g}i")
    return EXIT_OK


def cmd_stability_boundary(cfg, out: Path) -> int:
    coeffs = _coeffs()
    rows = []
    for phi in cfg["phi_grid"]:
        try:
            res = linstab.boundary_pe(
                phi, ell=cfg["ell"], omega=TWO_PI * cfg["omega_index"], n=cfg["n"],
                orientation_dynamics=_orientation(cfg), coeffs=coeffs,
            )
            trunc = None
            if res.pe_star is not None:
                prob = linstab.StabilityProblem(
                    phi=phi,
                    params=to_physical(DimensionlessParams(phi=phi, Pe=res.pe_star, ell=cfg["ell"])),
                    omega=TWO_PI * cfg["omega_index"], n=cfg["n"],
                    orientation_dynamics=_orientation(cfg),
                )
                trunc = linstab.leading_eigenpair(prob, coeffs).truncation_error
            rows.append((phi, res.pe_star, trunc))
        except ConvergenceError as exc:
            print(f"phi={phi}: no convergence ({exc})", file=sys.stderr)
            rows.append((phi, None, None))
    io.write_csv(out / "boundary.csv", "phi,pe_star,truncation_error", rows)
    return EXIT_OK


def cmd_stability_spinodal(cfg, out: Path) -> int:
    coeffs = _coeffs()
    rows = [(phi, linstab.spinodal_pe(phi, coeffs)) for phi in cfg["phi_grid"]]
    io.write_csv(out / "spinodal.csv", "phi,pe_star", rows)
    return EXIT_OK


# -- pde -------------------------------------------------------------------


def _pde_setup(cfg):
    coeffs = _coeffs()
    params = _physical(cfg)
    gx, gy, gt = cfg["grid"]
    grid = fvm.Grid(gx, gy, gt)
    if cfg["ic"] == "eigenmode":
        prob = linstab.StabilityProblem(
            phi=cfg["phi"], params=params, n=cfg["n"],
            orientation_dynamics=_orientation(cfg),
        )
        res = linstab.leading_eigenpair(prob, coeffs)
        f0 = fvm.initial_eigenmode(grid, cfg["phi"], cfg["delta"], res)
    else:
        f0 = fvm.initial_uniform_random(grid, cfg["phi"], cfg["delta"], cfg["seed"])
    solver = fvm.FvmSolver(
        grid, params, coeffs, tumble=bool(cfg.get("tumble")), safety=cfg["safety"]
    )
    return solver, f0, params


def _sidecar(cfg, grid, time):
    return {
        "n_x1": grid.n_x1, "n_x2": grid.n_x2, "n_theta": grid.n_theta,
        "time": time, "phi": cfg["phi"], "Pe": cfg["pe"], "ell": cfg["ell"],
        "D_E": cfg.get("D_E", 1.0), "seed": cfg.get("seed"),
    }


def cmd_pde_run(cfg, out: Path) -> int:
    solver, f0, _ = _pde_setup(cfg)
    counter = [0]

    def snap(field):
        io.write_field_snapshot(
            out / f"snapshot_{counter[0]:04d}.raw", field.values,
            _sidecar(cfg, field.grid, field.time),
        )
        counter[0] += 1

    rec = fvm.run(
        solver, f0, cfg["T"], phi=cfg["phi"],
        series_dt=cfg["series_dt"], snapshot_dt=cfg["snapshot_dt"],
        snapshot_callback=snap,
    )
    io.write_csv(
        out / "series.csv", "t,norm,free_energy,mass,min_f",
        zip(rec.times, rec.norms, rec.free_energies, rec.masses, rec.min_f),
    )
    return EXIT_OK


def cmd_pde_classify(cfg, out: Path) -> int:
    solver, f0, _ = _pde_setup(cfg)
    rec = fvm.run(
        solver, f0, cfg["T"], phi=cfg["phi"], series_dt=cfg["series_dt"],
        snapshot_dt=max(cfg["T"], 1.0), stop_norm=2.0 * cfg["delta"],
    )
    verdict = fvm.classify(rec.times, rec.norms, cfg["delta"], horizon=cfg["T"])
    line = json.dumps(
        {"phi": cfg["phi"], "Pe": cfg["pe"], "ell": cfg["ell"], "verdict": verdict,
         "sup_norm": rec.sup_norm(), "final_slope": rec.final_slope()},
        sort_keys=True,
    )
    (out / "verdict.json").write_text(line + "\n", encoding="utf-8", newline="\n")
    print(line)
    return EXIT_OK


def cmd_pde_sweep(cfg, out: Path) -> int:
    rows = []
    for phi in cfg["phi_grid"]:
        for pe in cfg["pe_grid"]:
            point = dict(cfg, phi=phi, pe=pe)
            solver, f0, _ = _pde_setup(point)
            rec = fvm.run(
                solver, f0, cfg["T"], phi=phi, series_dt=cfg["series_dt"],
                snapshot_dt=max(cfg["T"], 1.0), stop_norm=2.0 * cfg["delta"],
            )
            verdict = fvm.classify(rec.times, rec.norms, cfg["delta"], horizon=cfg["T"])
            rows.append((phi, pe, verdict))
            print(f"phi={phi:g} Pe={pe:g}: {verdict}", flush=True)
    io.write_csv(out / "sweep.csv", "phi,pe,verdict", rows)
    return EXIT_OK


# -- micro -----------------------------------------------------------------


def _micro_one(cfg, out: Path, idx: int, seed: int):
    params = _physical(cfg)
    state = micro.init_product(cfg["N"], cfg["phi"], params, seed)
    dens_meta = {
        "n_x1": cfg["N"], "n_x2": cfg["N"], "phi": cfg["phi"], "Pe": cfg["pe"],
        "ell": cfg["ell"], "D_E": cfg.get("D_E", 1.0), "seed": seed,
        "eps": cfg["eps"], "kind": "local_density",
    }

    def snap(st):
        cf = observables.local_density(st.occ, cfg["eps"])
        io.write_field_snapshot(
            out / f"dens_{idx:02d}_t{st.sim_time:.4f}.raw", cf.values,
            dict(dens_meta, time=st.sim_time, window=cf.window),
        )

    rec = micro.run(
        state, cfg["T"], dt=cfg["dt"], series_dt=cfg["series_dt"],
        snapshot_dt=cfg["snapshot_dt"], snapshot_callback=snap,
    )
    io.write_csv(out / f"phi_series_{idx:02d}.csv", "t,phi_order",
                 zip(rec.times, rec.phi_order))
    occ = state.occ
    zs = np.argwhere(occ >= 0)
    rows = [(int(z1), int(z2), float(state.angles[occ[z1, z2]])) for z1, z2 in zs]
    io.write_csv(out / f"config_{idx:02d}.csv", "z1,z2,theta", rows)
    meta = {"N": cfg["N"], "phi": cfg["phi"], "Pe": cfg["pe"], "ell": cfg["ell"],
            "D_E": cfg.get("D_E", 1.0), "time": state.sim_time, "seed": seed,
            "schema_version": io.SCHEMA_VERSION}
    (out / f"config_{idx:02d}.csv.json").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return rec


def cmd_micro_run(cfg, out: Path) -> int:
    micro.validate_scale(cfg["N"], _physical(cfg))
    seeds = np.random.SeedSequence(cfg["master_seed"]).generate_state(cfg["seeds"])
    series = []
    for idx, seed in enumerate(seeds):
        rec = _micro_one(cfg, out, idx, int(seed))
        t = np.round(np.asarray(rec.times) / cfg["series_dt"]).astype(int)
        series.append(dict(zip(t, rec.phi_order)))
    common = sorted(set.intersection(*(set(s) for s in series)))
    rows = []
    for k in common:
        vals = np.array([s[k] for s in series])
        stderr = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else 0.0
        rows.append((k * cfg["series_dt"], vals.mean(), stderr))
    io.write_csv(out / "phi_series_mean.csv", "t,mean,stderr", rows)
    return EXIT_OK


def cmd_micro_sweep(cfg, out: Path) -> int:
    for pe in cfg["pe_grid"]:
        sub = out / f"pe_{pe:g}"
        sub.mkdir(exist_ok=True)
        cmd_micro_run(dict(cfg, pe=pe), sub)
        print(f"Pe={pe:g} done", flush=True)
    return EXIT_OK


def _load_fields(directory, t_min, t_max, eps=None):
    """Pooled coarse density values from dens_*.raw or snapshot_*.raw files."""
    directory = Path(directory)
    pooled = []
    for path in sorted(directory.glob("dens_*.raw")):
        values, meta = io.read_field_snapshot(path)
        if t_min - 1e-9 <= meta["time"] <= t_max + 1e-9:
            pooled.append(values)
    for path in sorted(directory.glob("snapshot_*.raw")):
        values, meta = io.read_field_snapshot(path)
        if t_min - 1e-9 <= meta["time"] <= t_max + 1e-9:
            dtheta = TWO_PI / meta["n_theta"]
            rho = dtheta * values.sum(axis=2)
            pooled.append(
                observables.coarse_macro_density(rho, eps, 1.0 / meta["n_x1"]).values
            )
    return pooled


def cmd_micro_histogram(cfg, out: Path) -> int:
    pooled = _load_fields(cfg["run_dir"], cfg["t_min"], cfg["t_max"], cfg["eps"])
    if not pooled:
        raise ParameterError(f"no stored fields in {cfg['run_dir']}")
    edges = np.linspace(0.0, 1.0, cfg["bins"] + 1)
    h = observables.histogram(pooled, edges)
    io.write_csv(out / "histogram.csv", "bin_left,bin_right,probability",
                 zip(h.edges[:-1], h.edges[1:], h.probability))
    return EXIT_OK


def cmd_compare(cfg, out: Path) -> int:
    edges = np.linspace(0.0, 1.0, cfg["bins"] + 1)
    hists = {}
    for key in ("micro_dir", "macro_dir"):
        pooled = _load_fields(cfg[key], cfg["t_min"], cfg["t_max"], cfg["eps"])
        if not pooled:
            raise ParameterError(f"no stored fields in {cfg[key]}")
        hists[key] = observables.histogram(pooled, edges)

    def peaks(h):
        centers = 0.5 * (h.edges[:-1] + h.edges[1:])
        mid = len(centers) // 2
        return (float(centers[np.argmax(h.probability[:mid])]),
                float(centers[mid + np.argmax(h.probability[mid:])]))

    result = {
        "distance": observables.histogram_distance(hists["micro_dir"], hists["macro_dir"]),
        "micro_peaks": peaks(hists["micro_dir"]),
        "macro_peaks": peaks(hists["macro_dir"]),
    }
    line = json.dumps(result, sort_keys=True)
    (out / "compare.json").write_text(line + "\n", encoding="utf-8", newline="\n")
    print(line)
    return EXIT_OK


# -- dispatch --------------------------------------------------------------

COMMANDS = {
    "coeffs": (cmd_coeffs, {"rho_points"}),
    "stability.eigen": (cmd_stability_eigen,
                        {"phi", "pe", "ell", "omega_index", "n", "tumble"}),
    "stability.boundary": (cmd_stability_boundary,
                           {"phi_grid", "ell", "omega_index", "n", "tumble"}),
    "stability.spinodal": (cmd_stability_spinodal, {"phi_grid"}),
    "pde.run": (cmd_pde_run,
                {"phi", "pe", "ell", "grid", "ic", "delta", "T", "seed", "tumble",
                 "safety", "n", "series_dt", "snapshot_dt"}),
    "pde.classify": (cmd_pde_classify,
                     {"phi", "pe", "ell", "grid", "ic", "delta", "T", "seed",
                      "tumble", "safety", "n", "series_dt"}),
    "pde.sweep": (cmd_pde_sweep,
                  {"phi_grid", "pe_grid", "ell", "grid", "ic", "delta", "T", "seed",
                   "tumble", "safety", "n", "series_dt"}),
    "micro.run": (cmd_micro_run,
                  {"N", "phi", "pe", "ell", "dt", "T", "seeds", "master_seed",
                   "eps", "series_dt", "snapshot_dt"}),
    "micro.sweep": (cmd_micro_sweep,
                    {"N", "phi", "pe_grid", "ell", "dt", "T", "seeds",
                     "master_seed", "eps", "series_dt", "snapshot_dt"}),
    "micro.histogram": (cmd_micro_histogram,
                        {"run_dir", "eps", "bins", "t_min", "t_max"}),
    "compare": (cmd_compare,
                {"micro_dir", "macro_dir", "eps", "bins", "t_min", "t_max"}),
}


def _build_parser():
    p = argparse.ArgumentParser(prog="activegas",
                                description="Active lattice gas toolkit")
    p.add_argument("--config", help="replay a resolved_config.json")
    p.add_argument("--out", default=".", help="output directory")
    sub = p.add_subparsers(dest="command")
    verbs: dict = {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS)

    def add(name, **kw):
        kw.setdefault("parents", [common])
        parts = name.split(".")
        if len(parts) == 1:
            return sub.add_parser(parts[0], **kw)
        if parts[0] not in verbs:
            top = sub.add_parser(parts[0])
            verbs[parts[0]] = top.add_subparsers(dest="verb")
        return verbs[parts[0]].add_parser(parts[1], **kw)

    c = add("coeffs")
    c.add_argument("--rho-points", type=int, default=101)

    def dimless(sp, phi=True):
        if phi:
            sp.add_argument("--phi", type=float, required=True)
        sp.add_argument("--ell", type=float, default=0.5)

    e = add("stability.eigen")
    dimless(e)
    e.add_argument("--pe", type=float, required=True)
    e.add_argument("--omega-index", type=int, default=1)
    e.add_argument("--n", type=int, default=40)
    e.add_argument("--tumble", action="store_true")

    b = add("stability.boundary")
    b.add_argument("--phi-grid", default="0.5:0.98:0.02")
    b.add_argument("--ell", type=float, default=0.5)
    b.add_argument("--omega-index", type=int, default=1)
    b.add_argument("--n", type=int, default=40)
    b.add_argument("--tumble", action="store_true")

    s = add("stability.spinodal")
    s.add_argument("--phi-grid", default="0.5:0.999:0.005")

    def pde_common(sp):
        sp.add_argument("--ell", type=float, default=0.5)
        sp.add_argument("--grid", default="64x64x32")
        sp.add_argument("--ic", choices=("random", "eigenmode"), default="random")
        sp.add_argument("--delta", type=float, default=1e-4)
        sp.add_argument("--T", type=float, default=4.0)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--tumble", action="store_true")
        sp.add_argument("--safety", type=float, default=1.0)
        sp.add_argument("--n", type=int, default=40)
        sp.add_argument("--series-dt", type=float, default=0.01)

    r = add("pde.run")
    r.add_argument("--phi", type=float, required=True)
    r.add_argument("--pe", type=float, required=True)
    pde_common(r)
    r.add_argument("--snapshot-dt", type=float, default=0.1)

    k = add("pde.classify")
    k.add_argument("--phi", type=float, required=True)
    k.add_argument("--pe", type=float, required=True)
    pde_common(k)

    w = add("pde.sweep")
    w.add_argument("--phi-grid", default="0.44:1.0:0.02")
    w.add_argument("--pe-grid", default="0:40:1")
    pde_common(w)

    def micro_common(sp):
        sp.add_argument("--N", type=int, required=True)
        sp.add_argument("--phi", type=float, required=True)
        sp.add_argument("--ell", type=float, default=0.5)
        sp.add_argument("--dt", type=float, default=1e-3)
        sp.add_argument("--T", type=float, default=4.0)
        sp.add_argument("--seeds", type=int, default=1)
        sp.add_argument("--master-seed", type=int, default=0)
        sp.add_argument("--eps", type=float, default=1 / 16)
        sp.add_argument("--series-dt", type=float, default=0.01)
        sp.add_argument("--snapshot-dt", type=float, default=0.1)

    m = add("micro.run")
    m.add_argument("--pe", type=float, required=True)
    micro_common(m)

    ms = add("micro.sweep")
    ms.add_argument("--pe-grid", default="6:12:2")
    micro_common(ms)

    mh = add("micro.histogram")
    mh.add_argument("--run-dir", required=True)
    mh.add_argument("--eps", type=float, default=1 / 16)
    mh.add_argument("--bins", type=int, default=50)
    mh.add_argument("--t-min", type=float, default=2.0)
    mh.add_argument("--t-max", type=float, default=4.0)

    cp = add("compare")
    cp.add_argument("--micro-dir", required=True)
    cp.add_argument("--macro-dir", required=True)
    cp.add_argument("--eps", type=float, default=1 / 16)
    cp.add_argument("--bins", type=int, default=50)
    cp.add_argument("--t-min", type=float, default=2.0)
    cp.add_argument("--t-max", type=float, default=4.0)
    return p


def _config_from_args(args) -> dict:
    name = args.command
    if getattr(args, "verb", None):
        name = f"{args.command}.{args.verb}"
    if name not in COMMANDS:
        raise ParameterError(f"missing subcommand (try --help)")
    _, keys = COMMANDS[name]
    cfg = {"command": name}
    for key in keys:
        val = getattr(args, key)
        if key.endswith("_grid") and isinstance(val, str):
            val = _parse_range(val)
        if key == "grid" and isinstance(val, str):
            val = list(_parse_grid(val))
        cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            raw = json.loads(Path(args.config).read_text())
            name = raw.get("command")
            if name not in COMMANDS:
                raise ParameterError(f"unknown command in config: {name!r}")
            _, keys = COMMANDS[name]
            cfg = io.load_config(args.config, keys | {"command"})
        else:
            cfg = _config_from_args(args)
            name = cfg["command"]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler, _ = COMMANDS[name]
        params = {k: v for k, v in cfg.items() if k != "command"}
        code = handler(dict(params), out)
        io.write_config(out / "resolved_config.json", cfg)
        return code
    except (ParameterError, ScaleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CflError, ConvergenceError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
