"""Resolution sweeps, error measures, rate fitting and reports."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import _trilinear as tri
from .microstructure import Laminate, Raw, rasterize
from .oracles import laminate_effective
from .schemes import SchemeConfig, effective_tensor, run_scheme
from .spectral import GAUSS_SIGNS
from .tensors import SHEAR_WEIGHTS, UNIT_STRAIN_LABELS, VOIGT_PAIRS, ddot2, ddot4, unit_strain

logger = logging.getLogger(__name__)

CSV_HEADER = ("N", "probe", "error", "iterations", "seconds")
EXACT_TOL = 1e-8


@dataclass(frozen=True)
class StudyRow:
    N: int
    probe: str
    error: float
    iterations: int
    seconds: float
    value: float
    converged: bool = True


@dataclass(eq=False)
class RateStudy:
    """Errors of one scheme over increasing resolutions, with fitted log-log slopes.

    ``errors`` are ``|E:(C_ref - C_N):E|`` (``kind="effective"``) or
    discrete L2 strain distances to the finest solve (``kind="strain"``).
    ``slopes[probe]`` is ``None`` when no fit applies: the microstructure is
    resolved exactly, or the scheme has no proven rate.
    """

    kind: str
    scheme: str
    geometry: dict
    resolutions: tuple
    probes: dict
    rows: list
    reference_kind: str
    reference: dict
    slopes: dict
    resolved_exactly: bool = False
    partial: bool = False
    config: dict = field(default_factory=dict)
    tensors: dict = field(default_factory=dict, repr=False)
    fields: dict = field(default_factory=dict, repr=False)

    @property
    def status(self):
        return "partial" if self.partial else "complete"

    def errors(self, probe):
        return [r.error for r in self.rows if r.probe == probe]

    def to_dict(self):
        return {
            "kind": self.kind,
            "scheme": self.scheme,
            "geometry": self.geometry,
            "resolutions": list(self.resolutions),
            "probes": {k: list(v) for k, v in self.probes.items()},
            "rows": [dataclasses.asdict(r) for r in self.rows],
            "reference_kind": self.reference_kind,
            "reference": dict(self.reference),
            "slopes": dict(self.slopes),
            "resolved_exactly": self.resolved_exactly,
            "status": self.status,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"], scheme=d["scheme"], geometry=d["geometry"],
            resolutions=tuple(d["resolutions"]),
            probes={k: tuple(v) for k, v in d["probes"].items()},
            rows=[StudyRow(**r) for r in d["rows"]],
            reference_kind=d["reference_kind"], reference=dict(d["reference"]),
            slopes=dict(d["slopes"]), resolved_exactly=d["resolved_exactly"],
            partial=d["status"] == "partial", config=d["config"])


# -- numerics -----------------------------------------------------------------------


def fit_slope(resolutions, errors):
    """Least-squares slope of ``log(error)`` against ``log(N)``."""
    N = np.asarray(resolutions, dtype=float)
    e = np.asarray(errors, dtype=float)
    if N.size < 2 or N.size != e.size:
        raise ValueError("need at least two (N, error) pairs")
    if np.any(e <= 0):
        raise ValueError("errors must be positive for a log-log fit")
    slope, _ = np.polyfit(np.log(N), np.log(e), 1)
    return float(slope)


def richardson(n1, v1, n2, v2, order=1.0):
    """Limit of ``v(N) = v_inf + c N^-order`` through ``(n1, v1)`` and ``(n2, v2)``."""
    a, b = n1 ** order, n2 ** order
    return (b * v2 - a * v1) / (b - a)


def selftest_slope(p=1.0, c=3.0, resolutions=(16, 32, 64, 128)):
    """Slope fitted to the synthetic sequence ``c N^-p``."""
    return fit_slope(resolutions, [c * n ** -p for n in resolutions])


# -- sweeps -----------------------------------------------------------------------------


def geometry_dict(geometry):
    if isinstance(geometry, Raw):
        return {"type": "raw"}
    d = {"type": type(geometry).__name__.lower()}
    for f in dataclasses.fields(geometry):
        v = getattr(geometry, f.name)
        d[f.name] = list(v) if isinstance(v, tuple) else v
    return d


def _probe_vectors(probes):
    if probes is None:
        probes = ("e11",)
    out = {}
    for p in probes:
        if isinstance(p, str):
            out[p] = tuple(unit_strain(UNIT_STRAIN_LABELS.index(p)))
        else:
            label, vec = p
            out[label] = tuple(float(x) for x in vec)
    return out


def _check_resolutions(resolutions, minimum=3):
    res = tuple(int(n) for n in resolutions)
    if len(res) < minimum:
        raise ValueError(f"need at least {minimum} resolutions, got {len(res)}")
    if any(b <= a for a, b in zip(res, res[1:])):
        raise ValueError("resolutions must be strictly increasing")
    return res


def _quadratic(C, E):
    return float(ddot2(E, ddot4(C, E)))


def _config_dict(cfg, materials, porous):
    d = dataclasses.asdict(cfg)
    ref = cfg.reference
    d["reference"] = ref if isinstance(ref, str) else {"lambda": ref.lam, "mu": ref.mu}
    d["strain"] = list(cfg.strain)
    d.pop("workers", None)
    d["materials"] = [m.to_json(i) for i, m in enumerate(materials)]
    d["porous"] = bool(porous)
    return d


def sweep(geometry, scheme, resolutions, cfg, materials, probes=None, reference=None,
          porous=False, full_tensor=False, keep_fields=False):
    """Effective-coefficient errors of ``scheme`` on ``geometry`` over ``resolutions``.

    Each probe strain ``E`` gives the scalar ``E:C_N:E``; only the probe load
    cases are solved unless ``full_tensor`` is set.  The reference is
    ``reference`` if given (probe label -> value), the analytic laminate
    tensor for laminates, the first-order Richardson limit of the two finest
    values for the fem scheme, and otherwise the finest value itself.
    """
    res = _check_resolutions(resolutions)
    cfg = replace(cfg, scheme=scheme)
    pv = _probe_vectors(probes)
    values, rows_raw, tensors, fields = {}, [], {}, {}
    partial = False
    for N in res:
        grid = rasterize(geometry, N, materials, porous=porous)
        if full_tensor:
            eff = effective_tensor(grid, cfg)
            tensors[N] = eff.tensor
            partial |= not eff.converged
            its = sum(eff.iterations)
            for label, E in pv.items():
                values[N, label] = _quadratic(eff.tensor, np.asarray(E))
                rows_raw.append((N, label, its, eff.seconds, eff.converged))
            continue
        for label, E in pv.items():
            r = run_scheme(grid, replace(cfg, strain=E))
            partial |= not r.converged
            values[N, label] = float(ddot2(np.asarray(E), r.stress))
            rows_raw.append((N, label, r.iterations, r.seconds, r.converged))
            if keep_fields:
                fields[N, label] = r.displacement if r.displacement is not None else r.strain
            logger.info("%s N=%d %s: %.12g (%d iterations)", scheme, N, label,
                        values[N, label], r.iterations)

    ref_vals = {}
    resolved = False
    if reference is not None:
        kind = "given"
        ref_vals = {k: float(reference[k]) for k in pv}
    elif isinstance(geometry, Laminate) and all(m.is_isotropic() for m in materials):
        kind = "analytic"
        lam = laminate_effective([(materials[i], f) for i, f in
                                  zip(geometry.ids, geometry.fractions)], geometry.axis)
        ref_vals = {k: _quadratic(lam, np.asarray(E)) for k, E in pv.items()}
    elif scheme == "fem":
        kind = "richardson"
        n1, n2 = res[-2], res[-1]
        ref_vals = {k: richardson(n1, values[n1, k], n2, values[n2, k]) for k in pv}
    else:
        kind = "finest"
        ref_vals = {k: values[res[-1], k] for k in pv}

    rows = [StudyRow(N, label, abs(ref_vals[label] - values[N, label]), its, secs,
                     values[N, label], conv)
            for (N, label, its, secs, conv) in rows_raw]
    slopes = {}
    if kind == "analytic" and all(r.error <= EXACT_TOL for r in rows):
        resolved = True
    for label in pv:
        errs = [r.error for r in rows if r.probe == label]
        if resolved or kind == "finest" or scheme != "fem":
            slopes[label] = None
            continue
        try:
            slopes[label] = fit_slope(res, errs)
        except ValueError:
            slopes[label] = None
    return RateStudy(
        kind="effective", scheme=scheme, geometry=geometry_dict(geometry), resolutions=res,
        probes=pv, rows=rows, reference_kind=kind, reference=ref_vals, slopes=slopes,
        resolved_exactly=resolved, partial=partial,
        config=_config_dict(cfg, materials, porous), tensors=tensors, fields=fields)


def strain_l2_distance(u_coarse, u_fine):
    """``||grad^s(P u_coarse - u_fine)||_L2`` on the fine grid (exact 2x2x2 quadrature).

    ``P`` is trilinear prolongation, which embeds the coarse element space in
    the fine one, so the difference is a fine trilinear field.
    """
    Nc, Nf = u_coarse.shape[-1], u_fine.shape[-1]
    if Nf % Nc:
        raise ValueError(f"resolution {Nc} does not divide {Nf}")
    diff = tri.prolong(u_coarse, Nf // Nc) - u_fine
    grads = tri.gauss_gradients(diff)
    total = 0.0
    for signs in GAUSS_SIGNS:
        g = [grads[tri.gradient_key(m, signs)] for m in range(3)]
        for i, (m, n) in enumerate(VOIGT_PAIRS):
            e = 0.5 * (g[m][n] + g[n][m])
            total += SHEAR_WEIGHTS[i] * float(np.sum(e * e))
    return math.sqrt(total / (8.0 * Nf ** 3))


def strain_error_study(geometry, resolutions, cfg, materials, probe="e11", porous=False,
                       solutions=None):
    """Strain errors of fem solves against the finest one, which stands in for the exact field.

    ``solutions`` may map ``N`` to an already computed nodal displacement for
    the probe strain.  Errors are scaled by ``sqrt(E:E)``.
    """
    res = _check_resolutions(resolutions, minimum=4)
    cfg = replace(cfg, scheme="fem")
    label, E = next(iter(_probe_vectors((probe,)).items()))
    solutions = dict(solutions or {})
    its, secs, partial = {}, {}, False
    for N in res:
        if N in solutions:
            its[N], secs[N] = 0, 0.0
            continue
        r = run_scheme(rasterize(geometry, N, materials, porous=porous), replace(cfg, strain=E))
        solutions[N] = r.displacement
        its[N], secs[N] = r.iterations, r.seconds
        partial |= not r.converged
    fine = solutions[res[-1]]
    norm = math.sqrt(float(ddot2(np.asarray(E), np.asarray(E)))) or 1.0
    rows = []
    for N in res[:-1]:
        err = strain_l2_distance(solutions[N], fine) / norm
        rows.append(StudyRow(N, label, err, its[N], secs[N], err, True))
    errs = [r.error for r in rows]
    if max(errs) <= EXACT_TOL * 10:
        slope, resolved = None, True
    else:
        slope, resolved = fit_slope(res[:-1], errs), False
    return RateStudy(
        kind="strain", scheme="fem", geometry=geometry_dict(geometry), resolutions=res,
        probes={label: E}, rows=rows, reference_kind="finest", reference={label: 0.0},
        slopes={label: slope}, resolved_exactly=resolved, partial=partial,
        config=_config_dict(cfg, materials, porous), fields={"solutions": solutions})


# -- reports -----------------------------------------------------------------------------


def _fmt(x):
    return repr(float(x))


def render_csv(study, timings=False):
    buf = io.StringIO()
    meta = {k: v for k, v in study.to_dict().items() if k not in ("rows",)}
    buf.write("# " + json.dumps(meta, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    order = {p: i for i, p in enumerate(study.probes)}
    for r in sorted(study.rows, key=lambda r: (r.N, order[r.probe])):
        w.writerow([r.N, r.probe, _fmt(r.error), r.iterations,
                    f"{r.seconds:.3f}" if timings else ""])
    return buf.getvalue()


def emit_report(study, path, format="csv", timings=False):
    """Write ``study`` as CSV (rate table) or JSON (full content plus provenance).

    The CSV leaves the ``seconds`` column empty unless ``timings`` is set,
    so that repeated runs produce identical bytes.
    """
    path = Path(path)
    if format == "csv":
        text = render_csv(study, timings)
    elif format == "json":
        text = json.dumps(study.to_dict(), indent=2, sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown report format {format!r}")
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc
    return path


def load_report(path):
    """Parse a JSON report back into a :class:`RateStudy`."""
    return RateStudy.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


__all__ = [
    "CSV_HEADER", "RateStudy", "StudyRow", "emit_report", "fit_slope", "load_report",
    "render_csv", "richardson", "selftest_slope", "strain_error_study", "strain_l2_distance",
    "sweep",
]
