"""Command-line driver: validate a JSON config, run pipeline stages, write reports and CSV tables.

Output files (columns fixed):

* ``report_<stage>.json``: one per stage, validated against ``schemas/report.schema.json``
* ``moduli.csv``: condition, r, omega_tight, omega, Lbar, violations
* ``solution.csv``: x, y, u
* ``gradient.csv``: cell_x, cell_y, du1, du2
* ``oscillation.csv``: rho, osc
* ``comparison.csv``: r, l1_gap, normalized_gap, predicted_rhs

Exit status: 0 on success, 2 on an invalid config, 3 when a stage fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, OrliczError, ProbeError
from .structures import REGISTRY, ModelSpec, build_model

STAGES = ("certificate", "conditions", "approx_verify", "solve", "probes", "comparison")
FULL = ("certificate", "conditions", "approx_verify", "solve", "probes")
DEFAULT_BOUNDARY = (0.0, 1.2, 0.0, 0.0, 0.0, 0.3)
EXIT_OK, EXIT_CONFIG, EXIT_STAGE = 0, 2, 3


def load_schema(name):
    return json.loads(resources.files("orliczlab").joinpath("schemas", name).read_text())


def _path(err):
    parts = list(err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1] if "'" in err.message else ""
        parts.append(missing)
    return ".".join(str(p) for p in parts) or "<root>"


def parse_config(data):
    """Validate a config mapping and fill defaults; raises ConfigError with a field path."""
    validator = jsonschema.Draft202012Validator(load_schema("config.schema.json"))
    errors = sorted(validator.iter_errors(data), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        path = _path(err)
        raise ConfigError(f"invalid config at {path}: {err.message}", path=path)
    family = data["model"]["family"]
    if family not in REGISTRY:
        raise ConfigError(f"invalid config at model.family: unknown family {family!r}; "
                          f"registered families: {', '.join(sorted(REGISTRY))}", path="model.family")
    params = dict(data["model"].get("params", {}))
    allowed = REGISTRY[family][1]
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigError(f"invalid config at model.params: unknown parameters {unknown} for {family}; "
                          f"accepted: {sorted(allowed)}", path="model.params")
    cfg = {
        "model": {"family": family, "params": params},
        "pipeline": data.get("pipeline", "full"),
        "seed": int(data.get("seed", 0)),
        "output": data.get("output"),
        "grid": {"N": 64, "tol": 1e-8, "res_tol": 1e-6, **data.get("grid", {})},
        "boundary": {"coefficients": list(DEFAULT_BOUNDARY), **data.get("boundary", {})},
        "balls": [{"center": list(b["center"]), "r": float(b["r"])} for b in data.get("balls", [])],
        "omega": {"exponent": 0.3, "amplitude": 1.0, **data.get("omega", {})},
        "certificate": {"directions": 64, **data.get("certificate", {})},
        "conditions": {"K": 1.0, "epsilons": [0.1, 0.25, 0.5], **data.get("conditions", {})},
        "approx": {"x0": [0.5, 0.5], "r": 0.1, **data.get("approx", {})},
        "probes": {"center": [0.5, 0.5], "ball_r": 0.2, "bumps": 8, **data.get("probes", {})},
        "comparison": {"mode": "record", "gamma": 0.5, **data.get("comparison", {})},
    }
    if cfg["grid"]["N"] % 4:
        raise ConfigError("invalid config at grid.N: must be divisible by 4", path="grid.N")
    try:
        build_model(ModelSpec(family, params))
    except OrliczError as exc:
        raise ConfigError(f"invalid config at model.params: {exc}", path="model.params") from None
    return cfg


def read_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", path="<file>") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}", path="<file>") from None
    return parse_config(data)


def list_models():
    """Registry dump: family name to parameter descriptions."""
    return {name: {"params": dict(schema)} for name, (_, schema) in sorted(REGISTRY.items())}


def example_config(family):
    return {"model": {"family": family, "params": {}}, "pipeline": "certificate"}


# ---------------------------------------------------------------------------
# serialization


def jsonable(v):
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    if v is None or isinstance(v, (int, str)):
        return v
    if hasattr(v, "to_dict"):
        return jsonable(v.to_dict())
    return repr(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


# ---------------------------------------------------------------------------
# stages


class Run:
    """Holds the config, the built objects and lazily computed stage inputs."""

    def __init__(self, cfg, out, threads=1):
        self.cfg = cfg
        self.out = Path(out)
        self.threads = max(int(threads), 1)
        self.seed = cfg["seed"]
        self.model = build_model(ModelSpec(cfg["model"]["family"], cfg["model"]["params"]))
        self._cert = None
        self._u = None

    def omega(self, r):
        o = self.cfg["omega"]
        return o["amplitude"] * np.asarray(r, float) ** o["exponent"]

    def boundary(self, x):
        c0, cx, cy, cxx, cxy, cyy = self.cfg["boundary"]["coefficients"]
        x = np.asarray(x, float)
        a, b = x[..., 0], x[..., 1]
        return c0 + cx * a + cy * b + cxx * a * a + cxy * a * b + cyy * b * b

    @property
    def cert(self):
        if self._cert is None:
            from .growth import build_growth_function

            self._cert = build_growth_function(self.model, directions=self.cfg["certificate"]["directions"],
                                               seed=self.seed)
        return self._cert

    @property
    def solution(self):
        if self._u is None:
            from .solver import minimize

            g = self.cfg["grid"]
            self._u = minimize(self.model, self.boundary, g["N"], g["tol"], g["res_tol"])
        return self._u

    # each stage returns (results, files)

    def certificate(self):
        from .growth import check_equivalences

        cert = self.cert
        eq = check_equivalences(cert, self.model, seed=self.seed)
        res = cert.to_dict()
        res["equivalence"] = {"c1": eq.c1, "c2": eq.c2, "worst": eq.worst,
                              "integral_identity_residual": eq.integral_identity_residual}
        res["nu_over_Lambda"] = cert.nu / cert.Lambda
        return res, []

    def conditions(self):
        from .conditions import ContinuitySample, continuity_chain

        c = self.cfg["conditions"]
        kw = {"seed": self.seed, "epsilons": tuple(c["epsilons"])}
        if "radii" in c:
            kw["radii"] = tuple(sorted(c["radii"]))
        for key in ("magnitudes", "directions"):
            if key in c:
                kw[key] = c[key]
        sample = ContinuitySample(**kw)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            chain = continuity_chain(self.model, c["K"], c["epsilons"], sample)
        rows = [(name,) + row for name in ("A1", "VA1", "wVA1") for row in chain[name].table()]
        write_csv(self.out / "moduli.csv", ["condition", "r", "omega_tight", "omega", "Lbar", "violations"], rows)
        res = {name: rep.to_dict() for name, rep in chain.items()}
        res["chain_consistent"] = bool((not chain["VA1"].passed or chain["wVA1"].passed)
                                       and (not chain["wVA1"].passed or chain["A1"].passed))
        res["warnings"] = sorted({str(w.message) for w in caught})
        return res, ["moduli.csv"]

    def approx_verify(self):
        from .approx import build_abar, build_fbar, thresholds, verify_growth_of_approx

        a = self.cfg["approx"]
        x0 = np.asarray(a["x0"], float)
        if "t1" in a and "t2" in a:
            t1, t2 = float(a["t1"]), float(a["t2"])
        else:
            t1, t2 = thresholds(self.cert, x0, a["r"], float(self.omega(a["r"])))
        res = {"x0": x0.tolist(), "t1": t1, "t2": t2}
        abar, ab = build_abar(self.model.field, self.cert, x0, t1, t2, r=a["r"])
        fbar, fb = build_fbar(self.model, self.cert, x0, t1, t2, r=a["r"])
        for name, bundle in (("abar", ab), ("fbar", fb)):
            vc = verify_growth_of_approx(bundle, seed=self.seed)
            res[name] = {"bundle": bundle.to_dict(), "nu": vc.nu, "Lambda": vc.Lambda,
                         "Lambda_growth": vc.Lambda_growth, "residuals": vc.residuals}
        t = np.geomspace(2 * t1, t2 / 2, 25)
        dirs = np.stack([np.cos(np.linspace(0, 2 * np.pi, 16, endpoint=False)),
                         np.sin(np.linspace(0, 2 * np.pi, 16, endpoint=False))], -1)
        xi = t[:, None, None] * dirs[None]
        xp = np.broadcast_to(x0, xi.shape)
        res["annulus_identity"] = float(np.max(np.abs(abar.eval(None, xi) - self.model.field.eval(xp, xi))))
        return res, []

    def solve(self):
        from .solver import gradient_csv_rows

        u, rep = self.solution
        write_csv(self.out / "solution.csv", ["x", "y", "u"], u.to_csv_rows())
        write_csv(self.out / "gradient.csv", ["cell_x", "cell_y", "du1", "du2"], gradient_csv_rows(u))
        res = rep.to_dict()
        res["N"] = u.N
        return res, ["solution.csv", "gradient.csv"]

    def probes(self):
        from .probes import higher_integrability, holder_exponent
        from .solver import quasiminimizer_constant

        p = self.cfg["probes"]
        u, _ = self.solution
        center = tuple(p["center"])
        radii = p.get("radii")
        fits = {}
        for key, target in (("holder_u", "u"), ("excess_Du", "Du")):
            try:
                fits[key] = holder_exponent(u, center, radii, target=target).to_dict()
            except ProbeError as exc:
                fits[key] = {"error": str(exc)}
        hi = higher_integrability(self.cert.phi, u, ball=(center, p["ball_r"]), check_caps=False)
        Q, worst = quasiminimizer_constant(self.cert.phi, u, seed=self.seed, n_bumps=p["bumps"]) \
            if p["bumps"] else (None, None)
        files = []
        if "table" in fits["holder_u"]:
            write_csv(self.out / "oscillation.csv", ["rho", "osc"], fits["holder_u"]["table"])
            files.append("oscillation.csv")
        return {**fits, "higher_integrability": hi.to_dict(), "quasiminimizer_Q": Q,
                "quasiminimizer_worst": worst}, files

    def comparison(self):
        from .solver import comparison_experiment

        balls = self.cfg["balls"] or [{"center": [0.5, 0.5], "r": 0.1}]
        g, c = self.cfg["grid"], self.cfg["comparison"]

        def one(ball):
            return comparison_experiment(self.model, self.cert, tuple(ball["center"]), ball["r"], g["N"], g["tol"],
                                         omega=lambda r: float(self.omega(r)), sigma=c.get("sigma"),
                                         boundary=self.boundary, mode=c["mode"], gamma=c["gamma"],
                                         res_tol=g["res_tol"])

        _ = self.cert
        if self.threads > 1 and len(balls) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                records = list(pool.map(one, balls))
        else:
            records = [one(b) for b in balls]
        write_csv(self.out / "comparison.csv", ["r", "l1_gap", "normalized_gap", "predicted_rhs"],
                  [(rec.r, rec.l1_gap, rec.normalized_gap, rec.predicted_rhs) for rec in records])
        return {"records": [rec.to_dict() for rec in records]}, ["comparison.csv"]


def _report(run, stage, status, results, files, error=None):
    rep = {"stage": stage, "status": status, "model": run.cfg["model"], "seed": run.seed, "version": __version__,
           "results": results, "files": files}
    if error is not None:
        rep["error"] = error
    rep = jsonable(rep)
    jsonschema.validate(rep, load_schema("report.schema.json"))
    return rep


def execute(cfg, out, stage=None, threads=1, log=print):
    """Run the configured pipeline (or one stage) and return the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, threads)
    if stage is not None:
        stages = (stage,)
    elif cfg["pipeline"] == "full":
        stages = FULL + (("comparison",) if cfg["balls"] else ())
    else:
        stages = (cfg["pipeline"],)
    for name in stages:
        try:
            results, files = getattr(run, name)()
            rep = _report(run, name, "ok", results, files)
            status = EXIT_OK
        except (OrliczError, ArithmeticError, ValueError) as exc:
            rep = _report(run, name, "failed", {}, [], {"type": type(exc).__name__, "message": str(exc)})
            status = EXIT_STAGE
        (out / f"report_{name}.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
        log(f"{name}: {rep['status']}")
        if status:
            log(f"{name} failed: {rep['error']['type']}: {rep['error']['message']}")
            return status
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="orliczlab", description="Generalized Orlicz growth experiments.")
    ap.add_argument("--config", help="JSON experiment config")
    ap.add_argument("--out", help="output directory (default: config 'output' or ./orliczlab_out)")
    ap.add_argument("--seed", type=int, help="seed for direction and bump sampling (overrides the config)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for independent balls")
    ap.add_argument("--stage", choices=STAGES, help="run a single stage")
    ap.add_argument("--list-models", action="store_true", help="print the model registry and exit")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.list_models:
        print(json.dumps(list_models(), indent=2, sort_keys=True))
        return EXIT_OK
    if not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = read_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("invalid seed: must be nonnegative", path="seed")
            cfg["seed"] = args.seed
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or cfg["output"] or "orliczlab_out"
    return execute(cfg, out, args.stage, args.threads)


if __name__ == "__main__":
    sys.exit(main())
