"""Scenario files.

A scenario is a flat YAML mapping.  Scalar keys set one value; the keys
``pbar_db``, ``k_factor_db``, ``theta`` and ``inputs`` also accept a list,
which sweeps that parameter (the cases are the cartesian product).  A
``preset`` key loads one of :data:`PRESET_SCENARIOS` first; any other key then
overrides it.

Keys (defaults in brackets):

    preset          fig1 | fig2 | fig3 | fig4
    pbar_db         average SNR in dB, or a list                      [0]
    bandwidth_hz    B                                               [100]
    frame_seconds   T                                                 [1]
    k_factor_db     Rician K of both links in dB ("-inf" = Rayleigh),
                    or a list                                     [-6.88]
    k1_db, k2_db    per-link K, overriding k_factor_db
    mean_power1, mean_power2                                          [1]
    theta           common QoS exponent (1/bit), or a list         [0.01]
    theta1, theta2  per-user exponents, overriding theta
    inputs          [in1, in2] or a list of such pairs; an input is a
                    preset name (bpsk, qpsk, 8psk, 4qam, 16qam, 64qam,
                    gaussian) or {label: name, points: [[re, im, prior], ...]}
    samples         fading ensemble size                           [2000]
    seed            ensemble seed                                     [1]
    lambda_points   weights per region trace                         [21]
    lambda1         weight of user 1 for the policy / validate commands [0.5]
    max_rounds      decoding-order alternation cap                   [10]
    inner_tol, inner_cap, residual_tol, budget_tol, middle_cap, psi_tol,
    outer_cap, psi_update, psi_damping     solver settings
    boundary_z1     z1 values for the boundary command   [12 points, 0.05..4]
    boundary_alpha1, boundary_alpha2     fixed shares              [0.5, 0.5]
    boundary_tol    band for the boundary equality in bits         [1e-4]
    queue_frames    frames per queue simulation                   [1000000]
    queue_seed      seed of the rate redraws                          [7]
    queue_user      transmitter whose rates feed the queue            [1]
    out             output directory                             [results]
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from .channel import RicianSpec, SystemParams, db_to_linear
from .constellation import GAUSSIAN, PRESETS, Constellation, InputModel, is_gaussian, preset, validate
from .errors import InvalidArgument, ParseError
from .power_alloc import QosSpec, SolverTolerances

SWEEP_KEYS = ("pbar_db", "k_factor_db", "theta", "inputs")
TOL_KEYS = tuple(f.name for f in fields(SolverTolerances))

DEFAULTS = {
    "pbar_db": 0.0,
    "bandwidth_hz": 100.0,
    "frame_seconds": 1.0,
    "k_factor_db": -6.88,
    "k1_db": None,
    "k2_db": None,
    "mean_power1": 1.0,
    "mean_power2": 1.0,
    "theta": 0.01,
    "theta1": None,
    "theta2": None,
    "inputs": ["bpsk", "bpsk"],
    "samples": 2000,
    "seed": 1,
    "lambda_points": 21,
    "lambda1": 0.5,
    "max_rounds": 10,
    "boundary_z1": [float(x) for x in np.round(np.geomspace(0.05, 4.0, 12), 6)],
    "boundary_alpha1": 0.5,
    "boundary_alpha2": 0.5,
    "boundary_tol": 1e-4,
    "queue_frames": 1_000_000,
    "queue_seed": 7,
    "queue_user": 1,
    "out": "results",
}
DEFAULTS.update({k: getattr(SolverTolerances(), k) for k in TOL_KEYS})

# Figure presets.  Values the text leaves open are chosen here:
#  - fig1: K from the three measured environment means (-6.88, 4.97,
#    8.61 dB), each at pbar -5 and 0 dB.
#  - fig2, fig3: "QAM" is 4-QAM, the largest square QAM whose joint
#    two-user tables are affordable (16-QAM x 16-QAM would need ~256x the
#    work of 4-QAM x 4-QAM).
#  - fig3: theta in {0.001, 0.01, 0.1} at pbar 5 dB.
#  - fig4: BPSK at transmitter 1, 16-QAM at transmitter 2.
PRESET_SCENARIOS = {
    "fig1": {"pbar_db": [-5.0, 0.0], "k_factor_db": [-6.88, 4.97, 8.61], "theta": 0.01,
             "inputs": ["bpsk", "bpsk"]},
    "fig2": {"pbar_db": [-5.0, 0.0], "k_factor_db": -6.88, "theta": 0.01,
             "inputs": [["bpsk", "bpsk"], ["4qam", "4qam"], ["gaussian", "gaussian"]]},
    "fig3": {"pbar_db": 5.0, "k_factor_db": -6.88, "theta": [0.001, 0.01, 0.1],
             "inputs": [["bpsk", "bpsk"], ["4qam", "4qam"], ["gaussian", "gaussian"]]},
    "fig4": {"pbar_db": 0.0, "k_factor_db": -6.88, "theta": 0.01, "inputs": ["bpsk", "16qam"]},
}
PRESETS_DOC = {
    "fig1": "BPSK, K in {-6.88, 4.97, 8.61} dB, pbar in {-5, 0} dB, theta 0.01",
    "fig2": "K -6.88 dB, pbar in {-5, 0} dB, BPSK / 4-QAM / Gaussian, theta 0.01",
    "fig3": "K -6.88 dB, pbar 5 dB, theta in {0.001, 0.01, 0.1}, BPSK / 4-QAM / Gaussian",
    "fig4": "K -6.88 dB, pbar 0 dB, theta 0.01, BPSK vs 16-QAM",
}


@dataclass(frozen=True)
class Case:
    """One point of a scenario sweep, with every value in linear scale."""

    name: str
    params: SystemParams
    spec1: RicianSpec
    spec2: RicianSpec
    qos: QosSpec
    inputs: tuple

    def describe(self) -> dict:
        return {
            "name": self.name,
            "pbar": self.params.pbar,
            "bandwidth_hz": self.params.bandwidth_hz,
            "frame_seconds": self.params.frame_seconds,
            "k1_db": _num(self.spec1.k_factor_db), "k2_db": _num(self.spec2.k_factor_db),
            "mean_power1": self.spec1.mean_power, "mean_power2": self.spec2.mean_power,
            "theta1": self.qos.theta1, "theta2": self.qos.theta2,
            "inputs": [_input_repr(c) for c in self.inputs],
        }


@dataclass(frozen=True)
class Scenario:
    cases: tuple
    samples: int
    seed: int
    lambda_points: int
    lambda1: float
    max_rounds: int
    tols: SolverTolerances
    boundary_z1: tuple
    boundary_alpha: tuple
    boundary_tol: float
    queue_frames: int
    queue_seed: int
    queue_user: int
    out: str
    preset: str | None = None
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def fingerprint(self) -> str:
        """Hash of everything that affects numerical output (not ``out``)."""
        doc = {
            "cases": [c.describe() for c in self.cases],
            "samples": self.samples, "seed": self.seed,
            "lambda_points": self.lambda_points, "lambda1": self.lambda1,
            "max_rounds": self.max_rounds, "tols": asdict(self.tols),
            "boundary": [list(self.boundary_z1), list(self.boundary_alpha), self.boundary_tol],
            "queue": [self.queue_frames, self.queue_seed, self.queue_user],
        }
        text = json.dumps(doc, sort_keys=True, default=_num)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_overrides(self, seed=None, lambda_points=None, out=None) -> "Scenario":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if lambda_points is not None:
            if lambda_points < 2:
                raise InvalidArgument("lambda_points must be >= 2")
            kw["lambda_points"] = int(lambda_points)
        if out is not None:
            kw["out"] = str(out)
        return replace(self, **kw)


def _num(x):
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def _input_repr(c: InputModel):
    if is_gaussian(c):
        return "gaussian"
    return {"label": c.label, "points": [list(t) for t in c.triples()]}


# ---------------------------------------------------------------- parsing

def _key_lines(text: str) -> dict:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value}


def _float(key, v, line, allow_inf=False):
    if isinstance(v, str) and allow_inf and v.strip().lower() in ("-inf", "-.inf"):
        return -math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ParseError(f"expected a number, got {v!r}", key, line)
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not (allow_inf and v < 0)):
        raise ParseError(f"expected a finite number, got {v!r}", key, line)
    return v


def _int(key, v, line, lo=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ParseError(f"expected an integer, got {v!r}", key, line)
    if lo is not None and v < lo:
        raise ParseError(f"must be >= {lo}, got {v}", key, line)
    return int(v)


def _input(key, v, line) -> InputModel:
    if isinstance(v, str):
        name = v.strip().lower().replace("-", "")
        if name not in PRESETS:
            raise ParseError(f"unknown input preset {v!r}; known: {', '.join(sorted(PRESETS))}",
                             key, line)
        return preset(name)
    if isinstance(v, dict):
        extra = set(v) - {"label", "points"}
        if extra or "points" not in v:
            raise ParseError("a custom input needs 'points' (and optionally 'label')", key, line)
        try:
            pts = np.asarray(v["points"], dtype=float)
        except (TypeError, ValueError):
            raise ParseError("points must be [re, im, prior] triples", key, line) from None
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ParseError("points must be [re, im, prior] triples", key, line)
        try:
            c = Constellation.from_arrays(pts[:, 0] + 1j * pts[:, 1], pts[:, 2],
                                          str(v.get("label", "custom")))
        except InvalidArgument as exc:
            raise ParseError(f"invalid constellation: {exc}", key, line) from None
        rep = validate(c)
        if not rep.ok:
            raise ParseError(f"invalid constellation: {rep}", key, line)
        return c
    raise ParseError(f"an input is a preset name or a mapping, got {v!r}", key, line)


def _input_pairs(v, line):
    if not isinstance(v, list) or not v:
        raise ParseError("inputs must be a pair [in1, in2] or a list of pairs", "inputs", line)
    pairs = v if all(isinstance(p, list) for p in v) else [v]
    out = []
    for p in pairs:
        if len(p) != 2:
            raise ParseError(f"each inputs entry needs exactly two inputs, got {p!r}", "inputs", line)
        out.append((_input("inputs", p[0], line), _input("inputs", p[1], line)))
    return out


def _as_list(v):
    return v if isinstance(v, list) else [v]


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text; raises ParseError with line and key."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"not valid YAML: {getattr(exc, 'problem', exc)}",
                         line=None if mark is None else mark.line + 1) from None
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ParseError("a scenario must be a mapping of key: value lines")
    lines = _key_lines(text)
    known = set(DEFAULTS) | {"preset"}
    for k in doc:
        if not isinstance(k, str) or k not in known:
            raise ParseError("unknown key", str(k), lines.get(k))
    cfg = dict(DEFAULTS)
    name = doc.get("preset")
    if name is not None:
        if name not in PRESET_SCENARIOS:
            raise ParseError(f"unknown preset {name!r}; known: {', '.join(PRESET_SCENARIOS)}",
                             "preset", lines.get("preset"))
        cfg.update(PRESET_SCENARIOS[name])
    cfg.update({k: v for k, v in doc.items() if k != "preset"})
    ln = lines.get

    pbars = [_float("pbar_db", v, ln("pbar_db")) for v in _as_list(cfg["pbar_db"])]
    ks = [_float("k_factor_db", v, ln("k_factor_db"), True) for v in _as_list(cfg["k_factor_db"])]
    thetas = [_float("theta", v, ln("theta")) for v in _as_list(cfg["theta"])]
    pairs = _input_pairs(cfg["inputs"], ln("inputs"))
    for key, vals in (("pbar_db", pbars), ("k_factor_db", ks), ("theta", thetas)):
        if not vals:
            raise ParseError("empty list", key, ln(key))
    if any(t < 0 for t in thetas):
        raise ParseError("theta must be >= 0", "theta", ln("theta"))
    k1 = None if cfg["k1_db"] is None else _float("k1_db", cfg["k1_db"], ln("k1_db"), True)
    k2 = None if cfg["k2_db"] is None else _float("k2_db", cfg["k2_db"], ln("k2_db"), True)
    th1 = None if cfg["theta1"] is None else _float("theta1", cfg["theta1"], ln("theta1"))
    th2 = None if cfg["theta2"] is None else _float("theta2", cfg["theta2"], ln("theta2"))
    bw = _float("bandwidth_hz", cfg["bandwidth_hz"], ln("bandwidth_hz"))
    tf = _float("frame_seconds", cfg["frame_seconds"], ln("frame_seconds"))
    mp = [_float(k, cfg[k], ln(k)) for k in ("mean_power1", "mean_power2")]

    cases = []
    for pb, k, th, (in1, in2) in itertools.product(pbars, ks, thetas, pairs):
        try:
            params = SystemParams(db_to_linear(pb), bw, tf)
            s1 = RicianSpec(k if k1 is None else k1, mp[0])
            s2 = RicianSpec(k if k2 is None else k2, mp[1])
            t1 = th if th1 is None else th1
            t2 = th if th2 is None else th2
            qos = QosSpec.for_params(t1, t2, params)
        except InvalidArgument as exc:
            raise ParseError(str(exc)) from None
        label = f"p{pb:g}_k{k:g}_t{th:g}_{_label(in1)}-{_label(in2)}"
        cases.append(Case(label, params, s1, s2, qos, (in1, in2)))

    tol_kw = {}
    for k in TOL_KEYS:
        v = cfg[k]
        if k == "psi_update":
            if v not in ("secant", "damped"):
                raise ParseError("must be 'secant' or 'damped'", k, ln(k))
            tol_kw[k] = v
        elif k.endswith("_cap"):
            tol_kw[k] = _int(k, v, ln(k), 1)
        else:
            tol_kw[k] = _float(k, v, ln(k))
    try:
        tols = SolverTolerances(**tol_kw)
    except InvalidArgument as exc:
        raise ParseError(str(exc)) from None

    lam = _float("lambda1", cfg["lambda1"], ln("lambda1"))
    if not 0 <= lam <= 1:
        raise ParseError("must lie in [0, 1]", "lambda1", ln("lambda1"))
    bz = [_float("boundary_z1", v, ln("boundary_z1")) for v in _as_list(cfg["boundary_z1"])]
    if any(z < 0 for z in bz):
        raise ParseError("must be >= 0", "boundary_z1", ln("boundary_z1"))
    ba = tuple(_float(k, cfg[k], ln(k)) for k in ("boundary_alpha1", "boundary_alpha2"))
    if any(a < 0 for a in ba):
        raise ParseError("boundary shares must be >= 0", "boundary_alpha1", ln("boundary_alpha1"))
    qu = _int("queue_user", cfg["queue_user"], ln("queue_user"), 1)
    if qu not in (1, 2):
        raise ParseError("must be 1 or 2", "queue_user", ln("queue_user"))
    if not isinstance(cfg["out"], str) or not cfg["out"]:
        raise ParseError("must be a nonempty path", "out", ln("out"))
    return Scenario(
        cases=tuple(cases),
        samples=_int("samples", cfg["samples"], ln("samples"), 1),
        seed=_int("seed", cfg["seed"], ln("seed"), 0),
        lambda_points=_int("lambda_points", cfg["lambda_points"], ln("lambda_points"), 2),
        lambda1=lam,
        max_rounds=_int("max_rounds", cfg["max_rounds"], ln("max_rounds"), 1),
        tols=tols,
        boundary_z1=tuple(bz),
        boundary_alpha=ba,
        boundary_tol=_float("boundary_tol", cfg["boundary_tol"], ln("boundary_tol")),
        queue_frames=_int("queue_frames", cfg["queue_frames"], ln("queue_frames"), 10_000),
        queue_seed=_int("queue_seed", cfg["queue_seed"], ln("queue_seed"), 0),
        queue_user=qu,
        out=cfg["out"],
        preset=name,
        raw=doc,
    )


def _label(c: InputModel) -> str:
    return "gaussian" if c is GAUSSIAN or is_gaussian(c) else c.label


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        return parse_scenario(fh.read())
