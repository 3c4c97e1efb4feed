"""TOML run configuration.

Matrices are written row-major as flat arrays of ``n * n`` numbers next to
an explicit ``n``. A coefficient may instead be a table: an array of
``grid_steps + 1`` such flat arrays, one per grid node. Example::

    [problem]
    n = 1
    T = 1.0
    grid_steps = 2000
    A = [0.0]
    B = [0.0]
    C = [0.0]
    Q = [2.0]
    H = [1.0]
    R0 = [0.0]
    F = [0.0]

    [solver]
    picard_tol = 1e-10

    [output]
    directory = "out"
    formats = ["json", "csv"]
"""

import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .backward import LinearBSDEData
from .paths import Coefficient
from .problem import CoefficientSet, GaugeSpec, SREProblem
from .riccati import SolveOptions


class ConfigError(Exception):
    pass


SECTIONS = {
    "problem": {"n", "T", "grid_steps", "A", "B", "C", "Q", "H", "R0", "F"},
    "solver": {"grid_steps", "picard_tol", "max_iter", "overflow_guard", "override_checks",
               "assumption_tol", "delta", "residual_tol", "identity_tol", "bound_tol"},
    "oracle": {"seed", "n_paths", "antithetic", "grid_steps", "T", "n", "Ahat", "Chat", "Qhat",
               "Hhat", "probes", "sigmas", "bias_c"},
    "explode": {"n", "T", "grid_steps", "Qtil", "X_T", "overflow_guard"},
    "genr": {"n", "T", "B", "C", "F", "S0", "seed", "ladder", "slope_threshold", "flip_sign"},
    "output": {"directory", "formats"},
}


@dataclass
class OracleConfig:
    seed: int
    n_paths: int
    antithetic: bool
    T: float
    grid_steps: int
    data: LinearBSDEData
    probes: list
    sigmas: float = 3.0
    bias_c: float = 5.0


@dataclass
class ExplodeConfig:
    T: float
    grid_steps: int
    Qtil: np.ndarray
    X_T: np.ndarray
    overflow_guard: float


@dataclass
class GenrConfig:
    T: float
    B: np.ndarray
    C: np.ndarray
    F: np.ndarray
    S0: np.ndarray
    seed: int
    ladder: list
    slope_threshold: float
    flip_sign: bool


@dataclass
class RunConfig:
    raw: dict
    problem: SREProblem | None = None
    solver: SolveOptions = field(default_factory=SolveOptions)
    oracle: OracleConfig | None = None
    explode: ExplodeConfig | None = None
    genr: GenrConfig | None = None
    out_dir: str = "isre-out"
    formats: tuple = ("json", "csv")
    echo: dict = field(default_factory=dict)


def _num(sec, key, where, default=None, kind=float, positive=False):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    v = sec[key]
    if kind is bool:
        if not isinstance(v, bool):
            raise ConfigError(f"{where}.{key}: expected true/false, got {v!r}")
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int and (not isinstance(v, int) and not float(v).is_integer()):
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    v = kind(v)
    if not np.isfinite(v):
        raise ConfigError(f"{where}.{key}: must be finite")
    if positive and v <= 0:
        raise ConfigError(f"{where}.{key}: must be positive, got {v!r}")
    return v


def _flat(v, n, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool) and n == 1:
        v = [v]
    if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                          for x in v):
        raise ConfigError(f"{where}: expected a flat array of {n * n} numbers")
    if len(v) != n * n:
        raise ConfigError(f"{where}: expected {n * n} entries for n = {n}, got {len(v)}")
    m = np.array(v, dtype=float).reshape(n, n)
    if not np.all(np.isfinite(m)):
        raise ConfigError(f"{where}: entries must be finite")
    return m


def _matrix(sec, key, n, where, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    return _flat(sec[key], n, f"{where}.{key}")


def _coefficient(sec, key, n, where, T, steps, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"{where}.{key}: missing required field")
        return Coefficient.constant(default)
    v = sec[key]
    if isinstance(v, list) and v and isinstance(v[0], list):
        if len(v) != steps + 1:
            raise ConfigError(f"{where}.{key}: a table needs grid_steps + 1 = {steps + 1} rows, "
                              f"got {len(v)}")
        rows = [_flat(r, n, f"{where}.{key}[{i}]") for i, r in enumerate(v)]
        return Coefficient.table(np.array(rows), T)
    return Coefficient.constant(_flat(v, n, f"{where}.{key}"))


def _symmetric(m, where):
    if np.max(np.abs(m - np.swapaxes(m, -1, -2))) > 1e-12 * (1 + np.max(np.abs(m))):
        raise ConfigError(f"{where}: matrix must be symmetric")


def _check_keys(raw):
    for name, sec in raw.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        extra = set(sec) - SECTIONS[name]
        if extra:
            raise ConfigError(f"[{name}]: unknown field(s) {', '.join(sorted(extra))}")


def _parse_problem(sec, solver_steps):
    w = "problem"
    n = _num(sec, "n", w, kind=int, positive=True)
    T = _num(sec, "T", w, positive=True)
    steps = _num(sec, "grid_steps", w, default=solver_steps, kind=int, positive=True)
    if steps < 2:
        raise ConfigError(f"{w}.grid_steps: must be at least 2")
    z = np.zeros((n, n))
    coefs = {k: _coefficient(sec, k, n, w, T, steps) for k in "ABCQ"}
    _symmetric(coefs["Q"].value, f"{w}.Q")
    F = _coefficient(sec, "F", n, w, T, steps, default=z)
    _symmetric(F.value, f"{w}.F")
    H = _matrix(sec, "H", n, w)
    _symmetric(H, f"{w}.H")
    R0 = _matrix(sec, "R0", n, w, default=z)
    _symmetric(R0, f"{w}.R0")
    try:
        return SREProblem(CoefficientSet(**coefs), GaugeSpec(R0, F, z), H, T, steps), steps
    except ValueError as exc:
        raise ConfigError(f"{w}: {exc}") from None


def _parse_solver(sec):
    w = "solver"
    d = SolveOptions()
    return SolveOptions(
        picard_tol=_num(sec, "picard_tol", w, d.picard_tol, positive=True),
        max_iter=_num(sec, "max_iter", w, d.max_iter, kind=int, positive=True),
        overflow_guard=_num(sec, "overflow_guard", w, d.overflow_guard, positive=True),
        override_checks=_num(sec, "override_checks", w, False, kind=bool),
        assumption_tol=_num(sec, "assumption_tol", w, d.assumption_tol, positive=True),
        delta=_num(sec, "delta", w, positive=True) if "delta" in sec else None,
        residual_tol=_num(sec, "residual_tol", w, d.residual_tol, positive=True),
        identity_tol=_num(sec, "identity_tol", w, d.identity_tol, positive=True),
        bound_tol=_num(sec, "bound_tol", w, d.bound_tol, positive=True),
    )


def _parse_oracle(sec):
    w = "oracle"
    n = _num(sec, "n", w, kind=int, positive=True)
    T = _num(sec, "T", w, 1.0, positive=True)
    steps = _num(sec, "grid_steps", w, 200, kind=int, positive=True)
    z = np.zeros((n, n))
    Ahat = _coefficient(sec, "Ahat", n, w, T, steps, default=z)
    Chat = _coefficient(sec, "Chat", n, w, T, steps, default=z)
    Qhat = _coefficient(sec, "Qhat", n, w, T, steps, default=z)
    _symmetric(Qhat.value, f"{w}.Qhat")
    Hhat = _matrix(sec, "Hhat", n, w)
    _symmetric(Hhat, f"{w}.Hhat")
    probes = sec.get("probes", [[1.0] + [0.0] * (n - 1)])
    if not isinstance(probes, list) or not probes:
        raise ConfigError(f"{w}.probes: expected a non-empty array of vectors")
    vecs = []
    for i, p in enumerate(probes):
        if not isinstance(p, list) or len(p) != n or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in p):
            raise ConfigError(f"{w}.probes[{i}]: expected {n} numbers")
        vecs.append([float(x) for x in p])
    n_paths = _num(sec, "n_paths", w, 100000, kind=int, positive=True)
    return OracleConfig(
        seed=_num(sec, "seed", w, kind=int), n_paths=n_paths,
        antithetic=_num(sec, "antithetic", w, False, kind=bool), T=T, grid_steps=steps,
        data=LinearBSDEData(Ahat, Chat, Qhat, Hhat), probes=vecs,
        sigmas=_num(sec, "sigmas", w, 3.0, positive=True),
        bias_c=_num(sec, "bias_c", w, 5.0, positive=True))


def _parse_explode(sec):
    w = "explode"
    n = _num(sec, "n", w, kind=int, positive=True)
    q = _matrix(sec, "Qtil", n, w, default=np.zeros((n, n)))
    x = _matrix(sec, "X_T", n, w)
    _symmetric(q, f"{w}.Qtil")
    _symmetric(x, f"{w}.X_T")
    return ExplodeConfig(_num(sec, "T", w, positive=True),
                         _num(sec, "grid_steps", w, 2000, kind=int, positive=True), q, x,
                         _num(sec, "overflow_guard", w, 1e12, positive=True))


def _parse_genr(sec):
    w = "genr"
    n = _num(sec, "n", w, kind=int, positive=True)
    z = np.zeros((n, n))
    ladder = sec.get("ladder", [200, 800, 3200])
    if (not isinstance(ladder, list) or len(ladder) < 2
            or not all(isinstance(k, int) and k > 0 for k in ladder)):
        raise ConfigError(f"{w}.ladder: expected at least two positive integers")
    top = max(ladder)
    if any(top % k for k in ladder):
        raise ConfigError(f"{w}.ladder: every level must divide the finest one ({top})")
    S0 = _matrix(sec, "S0", n, w)
    F = _matrix(sec, "F", n, w, default=z)
    _symmetric(S0, f"{w}.S0")
    _symmetric(F, f"{w}.F")
    return GenrConfig(
        T=_num(sec, "T", w, 1.0, positive=True), B=_matrix(sec, "B", n, w, default=z),
        C=_matrix(sec, "C", n, w, default=z), F=F, S0=S0, seed=_num(sec, "seed", w, kind=int),
        ladder=sorted(ladder), slope_threshold=_num(sec, "slope_threshold", w, 0.9),
        flip_sign=_num(sec, "flip_sign", w, False, kind=bool))


def _echo(raw, solver):
    echo = {k: v for k, v in raw.items()}
    echo["solver"] = solver.to_dict()
    return echo


def parse_config(text, need=()):
    """Parse TOML text into a :class:`RunConfig`.

    ``need`` lists sections that must be present for the command at hand.
    Raises :class:`ConfigError` with the offending line or field.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    _check_keys(raw)
    for name in need:
        if name not in raw:
            raise ConfigError(f"missing section [{name}]")
    solver = _parse_solver(raw.get("solver", {}))
    cfg = RunConfig(raw=raw, solver=solver)
    solver_steps = raw.get("solver", {}).get("grid_steps", 2000)
    if "problem" in raw:
        cfg.problem, _ = _parse_problem(raw["problem"], solver_steps)
    if "oracle" in raw:
        cfg.oracle = _parse_oracle(raw["oracle"])
    if "explode" in raw:
        cfg.explode = _parse_explode(raw["explode"])
    if "genr" in raw:
        cfg.genr = _parse_genr(raw["genr"])
    out = raw.get("output", {})
    cfg.out_dir = out.get("directory", cfg.out_dir)
    formats = out.get("formats", ["json", "csv"])
    if not isinstance(formats, list) or not set(formats) <= {"json", "csv"}:
        raise ConfigError("output.formats: expected a subset of [\"json\", \"csv\"]")
    cfg.formats = tuple(formats)
    cfg.echo = _echo(raw, solver)
    return cfg


def load_config(path, need=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, need)
