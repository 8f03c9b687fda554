"""Experiments behind the command line: each returns a report plus CSV tables.

Every function is a pure function of the resolved config and the seed; wall
clock timing is kept out of the report so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .boltzmann import (ConditioningError, make_params, sample_cell_endpoints,
                        sample_conditioned_batch, sample_omegas, endpoint)
from .config import ConfigError, model_cone
from .cones import DegenerateConeError, limit_cov, limit_mean, zeta
from .dp_oracle import exact_distribution, gaussian_peak, llt_discrepancy, llt_normalised
from .moments import cov_exact, lyapunov_ratio, mean_exact, moment_report, sigma_min, char_magnitude
from .primitives import density_ratio
from .stats import cross_cov, ks_normal, loglog_slope, mardia, max_rel_dev, whiten
from .tangent import (DirectionFamily, boundary_chain, cell_means, g_cell_cov, p_tangent_cov,
                      q_marginal_cov, q_tangent_cov, rescale, tangent_point, tangents_from_cells)


class UnsupportedError(ConfigError):
    """The experiment does not support this configuration."""


@dataclass
class Report:
    experiment: str
    label: str
    checks: dict = field(default_factory=dict)
    statistics: dict = field(default_factory=dict)
    verdict: str | None = None

    def check(self, name: str, value, passed: bool, **bounds) -> bool:
        self.checks[name] = {"value": _plain(value), "passed": bool(passed), **_plain(bounds)}
        return bool(passed)

    @property
    def passed(self) -> bool | None:
        if self.verdict == "inconclusive":
            return None
        return all(c["passed"] for c in self.checks.values())

    def to_json(self) -> dict:
        out = {"experiment": self.experiment, "label": self.label, "passed": self.passed,
               "checks": self.checks, "statistics": _plain(self.statistics)}
        if self.verdict:
            out["verdict"] = self.verdict
        return out


@dataclass
class Result:
    report: Report
    tables: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _in(value: float, window) -> bool:
    return window[0] <= value <= window[1]


def _params(cfg: dict, n=None, beta_exponent=None):
    cone, sub = model_cone(cfg)
    n = cfg["model"]["n"] if n is None else n
    beta = None
    if beta_exponent is not None:
        d = cone.d
        beta = (zeta(d + 1) / (zeta(d) * n)) ** beta_exponent
    return make_params(cone, cfg["model"]["k"], n, beta=beta), sub


def _manifest(cfg: dict, seed: int, params_list, **extra) -> dict:
    return {"version": __version__, "seed": seed, "config": cfg,
            "params": [p.to_json() for p in params_list], **_plain(extra)}


def _controls(cfg):
    nc = cfg["experiment"]["negative_control"]
    return nc.get("mean_scale", 1.0), nc.get("cov_scale", 1.0), nc.get("beta_exponent")


# ---------------------------------------------------------------------------


def run_sample(cfg: dict, seed: int, threads: int = 1) -> Result:
    exp = cfg["experiment"]
    params, sub = _params(cfg)
    M, d = exp["M"], params.d
    rep = Report("sample", exp["label"])
    extra = {}
    if exp["mode"] == "Q":
        if sub is not None:
            raise UnsupportedError("conditioned sampling uses the full cone; drop 'subcone'")
        batch = sample_conditioned_batch(params, seed, M, exp["max_trials"], threads=threads)
        if len(batch.counters) < M:
            raise ConditioningError(batch.trials, len(batch.counters))
        counters = batch.counters
        extra = {"trials": batch.trials, "acceptance": batch.acceptance}
    else:
        counters = np.arange(M, dtype=np.uint64)
    omegas = sample_omegas(params, seed, counters, sub)
    ends = np.array([endpoint(w, d) for w in omegas]).reshape(len(omegas), d)
    if exp["mode"] == "Q":
        rep.check("endpoints_equal_target", 0, bool(np.all(ends == params.target())))
    xs = [f"x{i + 1}" for i in range(d)]
    tables = {"endpoints": (["sample", "counter"] + xs,
                            [[i, int(c)] + e.tolist() for i, (c, e) in enumerate(zip(counters, ends))]),
              "omegas": (["sample"] + xs + ["count"],
                         [[i] + list(x) + [m] for i, w in enumerate(omegas) for x, m in w.items()])}
    if exp["directions"]:
        tables["tangents"] = (["sample", "direction"] + xs,
                              [[i, j] + tangent_point(w, u).tolist()
                               for i, w in enumerate(omegas) for j, u in enumerate(exp["directions"])])
    if d == 2:
        rows = []
        for i, w in enumerate(omegas):
            ch = boundary_chain(w)
            for name, verts in (("lower", ch.lower), ("upper", ch.upper)):
                rows += [[i, name, j, int(v[0]), int(v[1])] for j, v in enumerate(verts)]
        tables["chains"] = (["sample", "chain", "i", "x1", "x2"], rows)
    rep.statistics = {"M": M, "mean_endpoint": ends.mean(axis=0), **extra}
    return Result(rep, tables, _manifest(cfg, seed, [params], **extra))


def run_clt(cfg: dict, seed: int, threads: int = 1) -> Result:
    exp = cfg["experiment"]
    tol = exp["tolerances"]
    M = exp["M"]
    if M < 500:
        raise ConfigError("the CLT test needs M >= 500")
    params, sub = _params(cfg)
    mean_scale, cov_scale, _ = _controls(cfg)
    cells = [sub] if sub is not None else None
    X = sample_cell_endpoints(params, seed, np.arange(M), cells, threads)[:, 0, :]
    mean = mean_exact(params, sub)
    cov = cov_exact(params, sub)
    z = whiten(X, mean * mean_scale, cov * cov_scale)
    rep = Report("clt", exp["label"])
    alpha = tol["alpha"]
    for i, (stat, p) in enumerate(ks_normal(z)):
        rep.check(f"ks_{i + 1}", p, p > alpha, statistic=stat, alpha=alpha)
    mt = mardia(z)
    rep.check("mardia_skewness", mt["skewness_p"], mt["skewness_p"] > alpha,
              statistic=mt["skewness_stat"], alpha=alpha)
    rep.check("mardia_kurtosis", mt["kurtosis_p"], mt["kurtosis_p"] > alpha,
              statistic=mt["kurtosis_stat"], alpha=alpha)
    bound = tol["mean_norm_factor"] * math.sqrt(params.d / M)
    mnorm = float(np.linalg.norm(z.mean(axis=0)))
    rep.check("whitened_mean_norm", mnorm, mnorm < bound, max=bound)
    rep.statistics = {"M": M, "n": params.n, "mean_exact": mean, "cov_exact": cov,
                      "sample_mean": X.mean(axis=0), "sample_cov": np.cov(X.T), "b1": mt["b1"], "b2": mt["b2"]}
    xs = [f"x{i + 1}" for i in range(params.d)]
    zs = [f"z{i + 1}" for i in range(params.d)]
    tables = {"samples": (["sample"] + xs + zs,
                          [[i] + X[i].tolist() + [repr(float(v)) for v in z[i]] for i in range(M)])}
    return Result(rep, tables, _manifest(cfg, seed, [params]))


def run_llt(cfg: dict, seed: int, threads: int = 1) -> Result:
    exp = cfg["experiment"]
    if cfg["model"]["d"] != 2:
        raise UnsupportedError("the local limit check supports d = 2 only")
    grid = sorted(exp["n_grid"])
    if not grid:
        raise ConfigError("n_grid is empty")
    window = exp["tolerances"]["llt_ratio"]
    rep = Report("llt", exp["label"])
    rows, plist, sups = [], [], []
    for n in grid:
        params, sub = _params(cfg, n)
        plist.append(params)
        table = exact_distribution(params, sub, B=exp.get("box"))
        s = llt_discrepancy(params, sub, table)
        norm = llt_normalised(params, sub, table)
        peak = gaussian_peak(params, sub)
        sups.append(s)
        rows.append([n, table.B, repr(table.overflow), repr(s), repr(norm),
                     repr(table.prob(params.target())), repr(peak)])
        rep.statistics[f"n={n:g}"] = {"box": table.B, "overflow": table.overflow, "scaled_sup": s,
                                      "normalised_sup": norm, "conservation_error": table.conservation_error,
                                      "p_target": table.prob(params.target()), "gaussian_peak": peak}
    if len(grid) < 2:
        rep.verdict = "inconclusive"
    else:
        for (n0, s0), (n1, s1) in zip(zip(grid, sups), zip(grid[1:], sups[1:])):
            rep.check(f"ratio_{n0:g}_{n1:g}", s1 / s0, _in(s1 / s0, window), window=window)
        rep.verdict = "bounded" if rep.passed else "not within window"
    tables = {"llt": (["n", "box", "overflow", "scaled_sup", "normalised_sup", "p_target", "gaussian_peak"], rows)}
    return Result(rep, tables, _manifest(cfg, seed, plist))


def _rel_block(emp, ref) -> float:
    return max_rel_dev(emp, ref)


def run_marginals(cfg: dict, seed: int, threads: int = 1) -> Result:
    exp = cfg["experiment"]
    tol = exp["tolerances"]
    dirs = exp["directions"]
    if not dirs:
        raise ConfigError("marginals need at least one direction")
    params, sub = _params(cfg)
    _, cov_scale, _ = _controls(cfg)
    base = sub if sub is not None else params.cone
    family = DirectionFamily(base, tuple(tuple(u) for u in dirs))
    cells = family.cell_list()
    M = exp["M"]
    rep = Report("marginals", exp["label"])
    extra = {}
    if exp["mode"] == "Q":
        if sub is not None:
            raise UnsupportedError("conditioned marginals use the full cone; drop 'subcone'")
        batch = sample_conditioned_batch(params, seed, M, exp["max_trials"], cells=cells, threads=threads)
        if len(batch.counters) < M:
            raise ConditioningError(batch.trials, len(batch.counters))
        cs = batch.cells
        extra = {"trials": batch.trials, "acceptance": batch.acceptance}
    else:
        cs = sample_cell_endpoints(params, seed, np.arange(M), cells, threads)
    means = cell_means(params, family)
    tang = tangents_from_cells(cs, family)
    centres = tangents_from_cells(means, family)
    Xt = np.stack([rescale(params, tang[:, i], centres[i]) for i in range(family.m)], axis=1)
    a = params.a
    limit = {}
    for i, u in enumerate(family.directions):
        for j, v in enumerate(family.directions):
            if j < i:
                continue
            emp = cross_cov(Xt[:, i], Xt[:, j])
            key = f"cov_{i + 1}_{j + 1}"
            if exp["mode"] == "P":
                ref = p_tangent_cov(base, a, u, v) * cov_scale
                rep.check(key, _rel_block(emp, ref), _rel_block(emp, ref) < tol["marginal_rel_P"],
                          max=tol["marginal_rel_P"], empirical=emp, reference=ref)
                continue
            try:
                ref = (q_marginal_cov(base, a, u) if i == j else q_tangent_cov(base, a, u, v)) * cov_scale
            except DegenerateConeError:
                ref = None
            if i == j and ref is None:
                # only one side of u is populated: the endpoint pins the tangent point
                spread = int(np.ptp(tang[:, i], axis=0).max())
                rep.check(key, spread, spread == 0, max=0)
            elif i == j:
                dev = _rel_block(emp, ref)
                rep.check(key, dev, dev < tol["marginal_rel_Q"], max=tol["marginal_rel_Q"],
                          empirical=emp, reference=ref)
            else:
                limit[key] = {"empirical": emp, "conditioned_reference": ref}
    if exp["mode"] == "Q":
        gcells = {}
        for b in range(1 << family.m):
            I = family.subset(b)
            try:
                gcells[str(sorted(I))] = g_cell_cov(base, a, family, I)
            except DegenerateConeError:
                gcells[str(sorted(I))] = None
        limit["g_cell_cov"] = gcells
    else:
        acov = {}
        A = rescale(params, cs, means)
        for b, cell in enumerate(cells):
            lc, degenerate = limit_cov(cell, a, with_flag=True)
            if not degenerate:
                acov[str(sorted(family.subset(b)))] = {"empirical": np.cov(A[:, b].T), "limit": lc}
        limit["A_I_cov"] = acov
    rep.statistics = {"M": M, "mode": exp["mode"], "crossed": limit, **extra}
    xs = [f"x{i + 1}" for i in range(params.d)]
    rows = [[s, i] + tang[s, i].tolist() for s in range(len(tang)) for i in range(family.m)]
    return Result(rep, {"tangents": (["sample", "direction"] + xs, rows)},
                  _manifest(cfg, seed, [params], **extra))


def run_scaling(cfg: dict, seed: int, threads: int = 1) -> Result:
    exp = cfg["experiment"]
    tol = exp["tolerances"]
    grid = sorted(exp["n_grid"])
    if len(grid) < 3:
        raise ConfigError("scaling fits need an n_grid of at least three points")
    _, _, beta_exp = _controls(cfg)
    cone, sub = model_cone(cfg)
    base = sub if sub is not None else cone
    d = cone.d
    rep = Report("scaling", exp["label"])
    rows, plist = [], []
    mean_dev, cov_dev, lyap, inv_sd = [], [], [], []
    for n in grid:
        params, _ = _params(cfg, n, beta_exp)
        plist.append(params)
        mu_lim = limit_mean(base, params.a)
        g_lim = limit_cov(base, params.a)
        mu = mean_exact(params, sub)
        G = cov_exact(params, sub)
        mean_dev.append(float(np.abs(mu / n - mu_lim).max() / np.abs(mu_lim).max()))
        cov_dev.append(float(np.abs(G * n ** (-(d + 2) / (d + 1)) - g_lim).max() / np.abs(g_lim).max()))
        lyap.append(lyapunov_ratio(params, sub))
        inv_sd.append(1.0 / math.sqrt(sigma_min(cov=G) * np.linalg.det(G)))
        rows.append([n, len(params.primitives), repr(mean_dev[-1]), repr(cov_dev[-1]),
                     repr(lyap[-1]), repr(inv_sd[-1])])
    fits = {
        "mean": (mean_dev, -1.0 / (d + 1), tol["slope_mean_halfwidth"]),
        "cov": (cov_dev, -1.0 / (d + 1), tol["slope_cov_halfwidth"]),
        "lyapunov": (lyap, -d / (2.0 * (d + 1)), tol["slope_lyapunov_halfwidth"]),
        "inv_sigma_sqrtdet": (inv_sd, -3.0 * (d + 2) / (2.0 * (d + 1)), tol["slope_sigma_halfwidth"]),
    }
    for name, (ys, centre, hw) in fits.items():
        s = loglog_slope(grid, ys)
        window = [centre - hw, centre + hw]
        rep.check(f"slope_{name}", s, _in(s, window), window=window)

    # primitive density remainder as beta halves
    a = plist[0].a
    target = 1.0 / zeta(d)
    betas = sorted(exp["beta_grid"], reverse=True)
    drows = []
    for degree in (0, 1):
        rem = []
        for b in betas:
            r = density_ratio(base, a, b, degree)
            rem.append(abs(r - target))
            drows.append([degree, b, repr(r), repr(rem[-1])])
        label = "f=1" if degree == 0 else "f=x1"
        for b0, b1, r0, r1 in zip(betas, betas[1:], rem, rem[1:]):
            rep.check(f"density_ratio_{label}_{b0:g}_{b1:g}", r1 / r0, _in(r1 / r0, tol["density_ratio"]),
                      window=tol["density_ratio"])
        rel = rem[-1] / target
        rep.check(f"density_limit_{label}", rel, rel < tol["density_limit_rel"], max=tol["density_limit_rel"])
    rep.statistics = {"n_grid": grid, "mean_dev": mean_dev, "cov_dev": cov_dev, "lyapunov": lyap,
                      "inv_sigma_sqrtdet": inv_sd, "beta_grid": betas}
    tables = {"scaling": (["n", "primitives", "mean_dev", "cov_dev", "lyapunov", "inv_sigma_sqrtdet"], rows),
              "density": (["degree", "beta", "ratio", "remainder"], drows)}
    return Result(rep, tables, _manifest(cfg, seed, plist))


def run_moments(cfg: dict, seed: int, threads: int = 1) -> Result:
    params, sub = _params(cfg)
    base = sub if sub is not None else params.cone
    rep = Report("moments", cfg["experiment"]["label"])
    report = moment_report(params, sub)
    report["limit_mean"] = limit_mean(base, params.a)
    report["limit_cov"] = limit_cov(base, params.a)
    report["beta"] = params.beta
    report["a"] = params.a
    if params.d == 2:
        edge = np.linspace(-np.pi, np.pi, 33)
        pts = [(s, t) for s in edge for t in (-np.pi, np.pi)] + [(t, s) for s in edge for t in (-np.pi, np.pi)]
        report["char_boundary_max"] = max(char_magnitude(params, sub, p) for p in pts)
    rep.statistics = report
    return Result(rep, {}, _manifest(cfg, seed, [params]))


RUNNERS = {"sample": run_sample, "clt": run_clt, "llt": run_llt,
           "marginals": run_marginals, "scaling": run_scaling, "moments": run_moments}


# ---------------------------------------------------------------------------
# output


def _dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(_plain(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_result(result: Result, cfg: dict, out_dir: str, elapsed: float) -> str:
    """Write ``<out>/<experiment>/<label>/{manifest.json, report.json, *.csv, timing.json}``."""
    exp = cfg["experiment"]
    path = os.path.join(out_dir, exp["name"], exp["label"])
    os.makedirs(path, exist_ok=True)
    formats = cfg["output"]["formats"]
    _dump(result.manifest, os.path.join(path, "manifest.json"))
    if "json" in formats:
        _dump(result.report.to_json(), os.path.join(path, "report.json"))
    if "csv" in formats:
        for name, (header, rows) in result.tables.items():
            with open(os.path.join(path, f"{name}.csv"), "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
    _dump({"seconds": round(elapsed, 3)}, os.path.join(path, "timing.json"))
    return path


def run(cfg: dict, seed: int, threads: int = 1) -> tuple[Result, float]:
    t0 = time.perf_counter()
    result = RUNNERS[cfg["experiment"]["name"]](cfg, seed, threads)
    return result, time.perf_counter() - t0
