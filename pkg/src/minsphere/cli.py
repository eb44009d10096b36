"""Command-line harness: reproducible experiments with a run manifest.

Every command reads an optional JSON config, writes its outputs and a
``manifest.json`` into ``--out`` and, with ``--check``, evaluates its
acceptance checks. Exit codes: 0 pass, 1 check failure, 2 config error,
3 numerical error.
"""
import argparse
import csv
import hashlib
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, ambient, jacobi, mcf, surfaces, sweepout

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid experiment configuration."""


# ----------------------------------------------------------------------------
# configuration

DEFAULTS = {
    "ellipsoid-areas": {
        "semiaxes": [4.0, 3.0, 2.0, 1.0],
        "bcd": [1.5, 1.2, 1.0],
        "a_grid": [1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 16.0, 32.0, 64.0, 128.0],
        "rtol": 1e-6,
        "tol_per_length": 1e-3,
    },
    "jacobi": {
        "great_sphere_level": 5,
        "k": 9,
        "bcd": [1.5, 1.2, 1.0],
        "a_grid": [2.0, 4.0, 8.0, 16.0, 32.0],
        "h": 0.12,
        "certificate_semiaxes": [4.0, 3.0, 2.0, 1.0],
        "certificate_h": 0.15,
        "tol_eigen": 0.01,
        "tol_A2": 1e-10,
    },
    "mcf": {
        "initial": mcf.GOLDEN_DUMBBELL["initial"],
        "params": mcf.GOLDEN_DUMBBELL["params"],
        "expect_caps": 1,
        "expect_extinction": None,
        "tol_extinction": 0.01,
        "repeat": False,
    },
    "foliate": {
        "initial": mcf.GOLDEN_DUMBBELL["initial"],
        "params": mcf.GOLDEN_DUMBBELL["params"],
        "n_pairs": 1000,
        "skeleton_factor": 5.0,
    },
    "two-param": {
        "space": {"kind": "sphere3", "radius": 1.0},
        "h": 0.05,
        "mu": 0.2,
        "tau_bar": 0.05,
        "n_grid": 21,
        "n_csv": 41,
        "n_symmetry": 200,
    },
    "widths": {
        "space": {"kind": "sphere3", "radius": 1.0},
        "h": 0.05,
        "mu": 0.2,
        "tau_bar": 0.05,
        "n_grid": 21,
        "eps_limit": [0.08, 0.04, 0.02, 0.01],
        "taus": [0.1, 0.05],
        "tol_omega1": 1e-3,
        "tol_unmodified": 0.05,
        "tol_energy": 0.03,
    },
    "degeneration": {
        "bcd": [1.5, 1.2, 1.0],
        "a_grid": [2.0, 4.0, 8.0, 16.0, 32.0],
        "h": 0.08,
        "mu": 0.2,
        "tau_bar": 0.05,
        "n_grid": 11,
        "min_normalized": 0.9,
    },
}

_TOL_KEYS = ("rtol", "tol_", "min_normalized", "skeleton_factor")


def load_config(command, path=None):
    """Defaults for ``command`` overridden by the JSON file at ``path``."""
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path is not None:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError("cannot read config %s: %s" % (path, err)) from err
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(user) - set(cfg)
        if extra:
            raise ConfigError("unknown config keys for %s: %s" % (command, sorted(extra)))
        cfg.update(user)
    for k, v in cfg.items():
        if any(k.startswith(p) for p in _TOL_KEYS) and v is not None \
                and not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError("tolerance %s must be positive" % k)
    return cfg


def config_hash(command, cfg, seed):
    blob = json.dumps({"command": command, "config": cfg, "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _space(obj):
    try:
        return ambient.space_from_json(obj)
    except (KeyError, TypeError) as err:
        raise ConfigError("bad space: %s" % err) from err


def _flow_config(cfg):
    try:
        mcf.FlowParams.from_json(cfg["params"])
        mcf.profile_from_dict(cfg["initial"])
    except (TypeError, KeyError) as err:
        raise ConfigError("bad flow config: %s" % err) from err
    return {"initial": cfg["initial"], "params": cfg["params"]}


def validate(command, cfg):
    """Schema checks that need no computation; raises ConfigError."""
    try:
        if "initial" in cfg:
            _flow_config(cfg)
        if "space" in cfg:
            _space(cfg["space"])
        if "mu" in cfg:
            sweepout.TwoParamConfig(mu=cfg["mu"], tau_bar=cfg["tau_bar"])
        for key in ("semiaxes", "certificate_semiaxes"):
            if key in cfg:
                ambient.ellipsoid(*cfg[key], strict=False)
        if "bcd" in cfg:
            b, c, d = cfg["bcd"]
            if not b >= c >= d > 0:
                raise ConfigError("bcd must satisfy b >= c >= d > 0")
        if "a_grid" in cfg and np.any(np.diff(cfg["a_grid"]) <= 0):
            raise ConfigError("a_grid must be increasing")
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError) as err:
        raise ConfigError(str(err)) from err


# ----------------------------------------------------------------------------
# output helpers


class Run:
    """Collects output files and check verdicts for one command."""

    def __init__(self, out, check):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.do_check = check
        self.checks = {}
        self.files = []

    def check(self, name, ok):
        if name in self.checks:
            raise KeyError("duplicate check %s" % name)
        self.checks[name] = bool(ok)

    def write_json(self, name, obj):
        p = self.out / name
        with open(p, "w") as fh:
            json.dump(sweepout._jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(name)

    def write_text(self, name, text):
        (self.out / name).write_text(text)
        self.files.append(name)

    def write_csv(self, name, header, rows):
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        self.files.append(name)

    def add_file(self, name):
        self.files.append(name)

    def inventory(self):
        inv = {}
        for name in sorted(set(self.files)):
            data = (self.out / name).read_bytes()
            inv[name] = {"bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}
        return inv


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "%.12g" % v
    if v is None:
        return ""
    return v


def _versions():
    import scipy
    import shapely
    return {"minsphere": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "shapely": shapely.__version__}


# ----------------------------------------------------------------------------
# commands


def cmd_ellipsoid_areas(cfg, run, seed):
    ax = cfg["semiaxes"]
    order = [surfaces.planar_sphere_area(ax, i) for i in range(1, 5)]
    b, c, d = cfg["bcd"]
    g1 = surfaces.planar_sphere_area((b, b, c, d), 1)
    rows = []
    for a in cfg["a_grid"]:
        g2 = surfaces.planar_sphere_area((a, b, c, d), 2)
        rows.append((a, g1, g2, g2 / a, g2 / (2 * g1)))
    run.write_csv("areas.csv", ["a", "gamma1", "gamma2", "gamma2_over_a", "gamma2_over_2gamma1"],
                  rows)
    cross = sweepout.crossover(cfg["bcd"], rtol=cfg["rtol"])
    round_area = surfaces.planar_sphere_area((1.0, 1.0, 1.0, 1.0), 1)
    per = {a: surfaces.planar_sphere_area((a, b, c, d), 2) / a for a in (64.0, 128.0)}
    run.write_json("ellipsoid_areas.json", {"semiaxes": ax, "planar_areas": order,
                                            "crossover": cross, "round_gamma1": round_area,
                                            "per_length_64_128": [per[64.0], per[128.0]]})
    if run.do_check:
        run.check("areas_increasing_in_i", all(x < y for x, y in zip(order, order[1:])))
        run.check("crossover_unique", cross["monotone"])
        run.check("crossover_bisection",
                  abs(cross["gamma2_at"] / (2 * cross["gamma1"]) - 1) <= cfg["rtol"])
        run.check("per_length_converged", abs(per[128.0] / per[64.0] - 1) < cfg["tol_per_length"])
        run.check("round_gamma1_is_4pi", abs(round_area / (4 * np.pi) - 1) < 1e-12)


def cmd_jacobi(cfg, run, seed):
    S3 = ambient.round_sphere(1.0)
    s = surfaces.great_sphere(cfg["great_sphere_level"])
    op = jacobi.assemble(s, S3)
    eig = jacobi.spectrum(op, k=cfg["k"])
    run.write_json("spectrum.json", eig.to_json(op.to_json()))
    table = jacobi.index_lower_bound_phiAB(cfg["bcd"], cfg["a_grid"], h=cfg["h"])
    run.write_csv("index_table.csv", ["a", "index", "nullity", "phi1", "phi2", "phi3", "max_A2"],
                  [(r["a"], r["index"], r["nullity"], *r["quotients"], r["max_A2"])
                   for r in table["rows"]])
    E = ambient.ellipsoid(*cfg["certificate_semiaxes"])
    cert = [float(jacobi.assemble(surfaces.planar_sphere(E, i, cfg["certificate_h"]), E).A2.max())
            for i in range(1, 5)]
    g1 = surfaces.planar_sphere(E, 1, cfg["certificate_h"])
    eig1 = jacobi.spectrum(jacobi.assemble(g1, E), k=6)
    run.write_json("index_table.json", {"phi_AB": table, "certificate_max_A2": cert,
                                        "gamma1_spectrum": eig1.to_json()})
    if run.do_check:
        ev = eig.eigenvalues
        exact = np.array([l * (l + 1) - 2.0 for l in (0, 1, 1, 1, 2, 2, 2, 2, 2)])
        n = min(len(ev), len(exact))
        err = np.abs(ev[:n] - exact[:n]) / np.maximum(np.abs(exact[:n]), 2.0)
        run.check("great_sphere_spectrum", n == len(exact) and err.max() < cfg["tol_eigen"])
        run.check("great_sphere_index_1", eig.index == 1)
        run.check("great_sphere_nullity_3", eig.nullity == 3)
        idx = [r["index"] for r in table["rows"]]
        run.check("gamma2_index_nondecreasing", all(y >= x for x, y in zip(idx, idx[1:])))
        run.check("gamma2_index_reaches_3", idx[-1] >= 3)
        q = table["rows"][-1]["quotients"]
        run.check("phi_AB_quotients_negative", all(v is not None and v < 0 for v in q))
        run.check("totally_geodesic", max(cert + [r["max_A2"] for r in table["rows"]])
                  < cfg["tol_A2"])
        run.check("gamma1_index_1", eig1.index == 1)


def _flow(cfg):
    res, params = mcf.run_config(_flow_config(cfg))
    return res, params


def cmd_mcf(cfg, run, seed):
    res, params = _flow(cfg)
    log = res.event_log()
    run.write_text("events.jsonl", log)
    fol = mcf.extract_foliation(res)
    fol.to_csv(run.out / "slices.csv")
    run.add_file("slices.csv")
    caps = [e for e in res.events if e.kind == "cap_replacement"]
    children = {c for e in caps for c in e.children}
    discarded = {e.component for e in res.events if e.kind.startswith("discard")}
    summary = {"extinction_time": res.extinction_time, "bound": res.circumscribed_bound,
               "steps": res.steps, "events": len(res.events), "cap_replacements": len(caps),
               "params": params.to_json()}
    run.write_json("flow.json", summary)
    if run.do_check:
        run.check("extinct", res.final.extinct)
        want = cfg["expect_extinction"]
        if want is not None:
            run.check("extinction_time", abs(res.extinction_time / want - 1) < cfg["tol_extinction"])
        # a round sphere attains the bound; allow the extinction accuracy
        run.check("extinct_before_bound",
                  res.extinction_time <= res.circumscribed_bound * (1 + cfg["tol_extinction"]))
        if cfg["expect_caps"] is not None:
            run.check("cap_replacements", len(caps) == cfg["expect_caps"])
        run.check("post_surgery_discarded", children <= discarded)
        if cfg["repeat"]:
            again, _ = _flow(cfg)
            run.check("event_log_byte_stable", again.event_log() == log)


def cmd_foliate(cfg, run, seed):
    res, _ = _flow(cfg)
    fol = mcf.extract_foliation(res)
    fol.to_csv(run.out / "slices.csv")
    run.add_file("slices.csv")
    rep = fol.verify(cfg["n_pairs"], seed=seed)
    dist = fol.skeleton_distance(-1)
    run.write_json("foliation.json", {"leaves": len(fol.leaves), "spacing": fol.spacing,
                                      "skeleton": fol.skeleton, "final_skeleton_distance": dist,
                                      "pairs": rep["pairs"], "failures": rep["failures"],
                                      "consecutive_failures": rep["consecutive_failures"]})
    if run.do_check:
        run.check("nested_pairs", rep["passed"])
        run.check("final_near_skeleton", dist <= cfg["skeleton_factor"] * fol.spacing)


def cmd_two_param(cfg, run, seed):
    space = _space(cfg["space"])
    fol = sweepout.build_optimal_foliation(space, h=cfg["h"])
    tp = sweepout.make_config(fol, mu=cfg["mu"], tau_bar=cfg["tau_bar"])
    mod = sweepout.catenoid_modify(sweepout.build_two_param(fol, tp), tp)
    mod.to_csv(run.out / "area.csv", n=cfg["n_csv"])
    run.add_file("area.csv")
    res = mod.sample(cfg["n_grid"])
    run.write_json("two_param.json", {"foliation": fol.to_json(), "config": tp.to_json(),
                                      "sup": res["sup"], "argmax": res["argmax"],
                                      "margin": res["margin"], "regions": res["regions"],
                                      "saving": mod.saving, "neck_cost": mod.neck_cost})
    if run.do_check:
        rng = np.random.default_rng(seed)
        st = rng.uniform(-1, 1, size=(cfg["n_symmetry"], 2))
        run.check("area_symmetric", all(mod.area(s, t) == mod.area(t, s) for s, t in st))
        ss = np.linspace(-1 + 2 * tp.eps, 1, 21)
        run.check("boundary_is_foliation",
                  np.allclose(mod.boundary_loop(ss), fol.area(ss), rtol=0, atol=1e-12))
        run.check("sup_below_twice_center", res["margin"] > 0)


def cmd_widths(cfg, run, seed):
    space = _space(cfg["space"])
    fol = sweepout.build_optimal_foliation(space, h=cfg["h"])
    est = sweepout.width_report(space, mu=cfg["mu"], tau_bar=cfg["tau_bar"], fol=fol,
                                n_grid=cfg["n_grid"])
    lim = sweepout.unmodified_limit(fol, cfg["eps_limit"], mu=cfg["mu"])
    energy = [sweepout.log_cutoff_energy(t) for t in cfg["taus"]]
    report = est.to_json()
    report["unmodified_limit"] = {"eps": cfg["eps_limit"], "sup": lim}
    report["log_cutoff_energy"] = [{"tau": t, "measured": m, "exact": e}
                                   for t, (m, e) in zip(cfg["taus"], energy)]
    run.write_json("widths.json", report)
    if run.do_check:
        if space.kind == ambient.SPHERE3:
            exact1 = 4 * np.pi * space.radius ** 2
            run.check("omega1_area", abs(est.omega1_upper / exact1 - 1) < cfg["tol_omega1"])
            run.check("omega2_below_2_exact", est.omega2_upper < 2 * exact1)
            run.check("unmodified_tends_to_2_exact",
                      bool(np.all(np.diff(lim) > 0)) and lim[-1] >= 2 * exact1 - cfg["tol_unmodified"])
        run.check("margin_positive", est.margin > 0)
        run.check("log_cutoff_energy",
                  all(abs(m / e - 1) < cfg["tol_energy"] for m, e in energy))


def cmd_degeneration(cfg, run, seed):
    rows = sweepout.degeneration_experiment(cfg["bcd"], cfg["a_grid"], h=cfg["h"], mu=cfg["mu"],
                                            tau_bar=cfg["tau_bar"], n_grid=cfg["n_grid"])
    run.write_csv("degeneration.csv",
                  ["a", "gamma1", "gamma1_exact", "gamma2_over_a", "eps", "sup2", "normalized",
                   "certified", "omega1", "omega2", "omega3", "omega4"],
                  [(r["a"], r["gamma1"], r["gamma1_exact"], r["gamma2_over_a"], r["eps"],
                    r["sup2"], r["normalized"], int(r["certified"]), *r["omega_upper"])
                   for r in rows])
    if run.do_check:
        norm = [r["normalized"] for r in rows]
        run.check("normalized_increasing", all(y > x for x, y in zip(norm, norm[1:])))
        run.check("normalized_exceeds_min", norm[-1] > cfg["min_normalized"])
        run.check("linear_bound", all(max(r["linear_ratio"]) <= 1 + 1e-12 for r in rows))


COMMANDS = {
    "ellipsoid-areas": cmd_ellipsoid_areas,
    "jacobi": cmd_jacobi,
    "mcf": cmd_mcf,
    "foliate": cmd_foliate,
    "two-param": cmd_two_param,
    "widths": cmd_widths,
    "degeneration": cmd_degeneration,
}

_NUMERIC_ERRORS = (RuntimeError, ArithmeticError, np.linalg.LinAlgError)


# ----------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="minsphere", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        q = sub.add_parser(name, help=COMMANDS[name].__name__[4:].replace("_", " "))
        q.add_argument("--config", help="JSON file overriding the defaults")
        q.add_argument("--out", default=None, help="output directory (default runs/<command>)")
        q.add_argument("--seed", type=int, default=0, help="seed for sampled checks")
        q.add_argument("--check", action="store_true", help="evaluate the acceptance checks")
        q.add_argument("--print-config", action="store_true",
                       help="print the resolved config and exit")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out else Path("runs") / args.command
    t0 = time.perf_counter()
    cfg, error, code = None, None, EXIT_OK
    try:
        cfg = load_config(args.command, args.config)
        validate(args.command, cfg)
    except ConfigError as err:
        error, code = "config error: %s" % err, EXIT_CONFIG
    if args.print_config and cfg is not None:
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return EXIT_OK
    run = Run(out, args.check)
    if error is None:
        try:
            COMMANDS[args.command](cfg, run, args.seed)
            code = EXIT_CHECK if not all(run.checks.values()) else EXIT_OK
        except (ValueError, KeyError, TypeError) as err:
            error, code = "config error: %s: %s" % (type(err).__name__, err), EXIT_CONFIG
        except _NUMERIC_ERRORS as err:
            error, code = "numerical error: %s: %s" % (type(err).__name__, err), EXIT_NUMERIC
    manifest = {"command": args.command, "config": cfg, "seed": args.seed,
                "config_hash": config_hash(args.command, cfg, args.seed),
                "versions": _versions(), "wall_clock_s": round(time.perf_counter() - t0, 3),
                "checks_run": args.check, "checks": run.checks, "files": run.inventory(),
                "exit_code": code, "error": error}
    with open(out / "manifest.json", "w") as fh:
        json.dump(sweepout._jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, ok in run.checks.items():
        print("%-32s %s" % (name, "PASS" if ok else "FAIL"))
    if error:
        print(error, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
