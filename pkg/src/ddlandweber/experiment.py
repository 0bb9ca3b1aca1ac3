"""End-to-end reconstruction experiments driven by a JSON config.

Pipeline: load expert images, synthesize their exact data, fit the
learned operator, simulate noisy (optionally angle-limited) data of a
truth image, run one scheme and write reconstruction, trace, metrics and
plots into the output directory.
"""
import json
import math
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import radon as radon_mod
from .core import LinearOperator, ParameterError, estimate_operator_norm, frobenius_norm, spectral_norm
from .io import IngestionError, read_pgm, write_pgm
from .learned import DEFAULT_TOL, TrainingSet, assemble_training_matrices, load_operator, train_pseudoinverse
from .radon import RadonGeometry, RadonTransform
from .schlieren import SchlierenOperator, schlieren_inf_norm
from .solver import ConfigError, LambdaSchedule, SolverConfig, StoppingRule, run

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "SCALES",
    "load_dataset",
    "synthesize_outputs",
    "add_gaussian_noise",
    "angle_mask",
    "mask_sinogram",
    "MaskedOperator",
    "build_geometry",
    "run_experiment",
    "emit_plots",
]

SCALES = {
    "desk": {"image_size": 32, "n_angles": 45, "detector_bins": 47},
    "paper": {"image_size": 128, "n_angles": 180, "detector_bins": 185},
}

# desk-scale lambda coefficients: (problem, kind, normalized) -> coefficient
DEFAULT_LAMBDA = {
    ("radon", "quadratic_in_residual", True): 1e-2,
    ("radon", "linear_in_residual", True): 1e-1,
    ("radon", "quadratic_in_residual", False): 3e-4,
    ("radon", "linear_in_residual", False): 5e-3,
    ("schlieren", "quadratic_in_residual", True): 1e-3,
    ("schlieren", "linear_in_residual", True): 1e-2,
    ("schlieren", "quadratic_in_residual", False): 1e-6,
    ("schlieren", "linear_in_residual", False): 1e-5,
}
DEFAULT_PERTURBED_LAMBDA = {"quadratic_in_residual": 1e-4, "linear_in_residual": 2e-3}
# angles within this many degrees of a range end count as inside
ANGLE_TOL_DEG = 1e-9
NORM_ITERATIONS = 200


@dataclass
class ExperimentConfig:
    """All knobs of one experiment; unknown keys in a config file are rejected.

    ``None`` means "use the default for this problem/scale".  Geometry keys
    override the values implied by ``scale``.  ``noise_relative`` (if set)
    replaces ``noise_variance`` by the variance giving an expected
    Frobenius noise norm of ``noise_relative * |y|``.  ``mask`` is a list of
    inclusive ``[low, high]`` degree ranges of kept angles; with
    ``mask_operator`` the forward and learned operators are restricted to
    those angles as well, otherwise only the data is zeroed.
    """

    problem: str = "radon"
    scale: str = "desk"
    image_size: Optional[int] = None
    n_angles: Optional[int] = None
    detector_bins: Optional[int] = None
    support_radius: Optional[float] = None
    mask_support: bool = False
    dataset_dir: Optional[str] = None
    operator_file: Optional[str] = None
    training_tol: float = DEFAULT_TOL
    truth_image: Optional[str] = None
    truth_in_training: bool = True
    intensity_range: tuple = (0.0, 1.0)
    noise_variance: float = 0.0
    noise_relative: Optional[float] = None
    rng_seed: int = 0
    scheme: str = "irl"
    step_size: Optional[float] = None
    lambda_kind: str = "quadratic_in_residual"
    lambda_coefficient: Optional[float] = None
    normalize_damping: bool = True
    tau: float = 2.0
    max_iterations: int = 200
    initial_guess: object = None
    residual_norm: Optional[str] = None
    mask: Optional[list] = None
    mask_operator: bool = False
    output_dir: str = "output"

    def __post_init__(self):
        if self.problem not in ("radon", "schlieren"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}")
        if self.scheme not in ("landweber", "irl", "perturbed"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.scheme == "perturbed" and self.problem != "radon":
            raise ConfigError("the perturbed scheme needs the linear radon problem")
        if self.noise_variance < 0:
            raise ConfigError("noise_variance must be non-negative")
        if self.noise_relative is not None and self.noise_relative < 0:
            raise ConfigError("noise_relative must be non-negative")
        self.intensity_range = tuple(float(v) for v in self.intensity_range)
        if len(self.intensity_range) != 2:
            raise ConfigError("intensity_range must be [low, high]")
        if self.mask is not None:
            self.mask = [list(r) for r in _validate_ranges(self.mask)]
        self.rng_seed = int(self.rng_seed)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = os.path.dirname(os.path.abspath(path))
        for key in ("dataset_dir", "operator_file", "truth_image", "output_dir"):
            if isinstance(data.get(key), str) and not os.path.isabs(data[key]):
                data[key] = os.path.join(base, data[key])
        return cls.from_dict(data)

    def to_dict(self):
        d = asdict(self)
        d["intensity_range"] = list(self.intensity_range)
        return d

    def geometry_values(self):
        vals = dict(SCALES[self.scale])
        for key in ("image_size", "n_angles", "detector_bins"):
            if getattr(self, key) is not None:
                vals[key] = int(getattr(self, key))
        return vals


@dataclass
class ExperimentReport:
    trace: object
    reconstruction: np.ndarray
    metrics: dict
    files: dict = field(default_factory=dict)


def build_geometry(cfg):
    g = cfg.geometry_values()
    kwargs = {"mask_support": cfg.mask_support}
    if cfg.support_radius is not None:
        kwargs["support_radius"] = cfg.support_radius
    elif cfg.problem == "schlieren":
        kwargs["support_radius"] = 1.0
    return RadonGeometry.uniform(g["image_size"], g["n_angles"], g["detector_bins"], **kwargs)


def load_dataset(directory, expected_shape, intensity_range=(0.0, 1.0)):
    """All ``.pgm`` images of a directory in lexicographic order, mapped to ``intensity_range``."""
    if directory is None or not os.path.isdir(directory):
        raise IngestionError(f"dataset directory {directory!r} does not exist")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".pgm"))
    if not names:
        raise IngestionError(f"{directory}: no .pgm images found")
    lo, hi = intensity_range
    return [lo + (hi - lo) * read_pgm(os.path.join(directory, n), expected_shape) for n in names]


def forward_operator(problem, geom):
    return RadonTransform(geom) if problem == "radon" else SchlierenOperator(geom)


def synthesize_outputs(inputs, problem, geom):
    """Pair each input with its exact, noise-free data."""
    F = forward_operator(problem, geom)
    return TrainingSet([(u, F.apply(u)) for u in inputs])


def noise_norm(noise, convention):
    if convention == "spectral":
        return spectral_norm(noise)
    if convention == "schlieren_inf":
        return schlieren_inf_norm(noise)
    if convention == "frobenius":
        return frobenius_norm(noise)
    raise ParameterError(f"unknown noise-level convention {convention!r}")


def add_gaussian_noise(y, variance, seed, convention="spectral"):
    """``y + eps`` with i.i.d. ``N(0, variance)`` entries from a PCG64 stream seeded with ``seed``.

    Returns ``(y_delta, delta)`` where ``delta`` is the norm of ``eps`` in the
    given convention.
    """
    if variance < 0:
        raise ParameterError("variance must be non-negative")
    y = np.asarray(y, dtype=np.float64)
    if variance == 0:
        return y.copy(), 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    eps = rng.normal(0.0, math.sqrt(variance), size=y.shape)
    return y + eps, noise_norm(eps, convention)


def _validate_ranges(ranges):
    out = []
    for r in ranges:
        try:
            lo, hi = (float(v) for v in r)
        except (TypeError, ValueError):
            raise ParameterError(f"malformed angle range {r!r}; expected [low, high]") from None
        if not (0.0 <= lo <= hi <= 180.0):
            raise ParameterError(f"angle range {r!r} must satisfy 0 <= low <= high <= 180")
        out.append((lo, hi))
    return out


def angle_mask(ranges, geom):
    """Boolean per-angle mask: True where the angle lies in one of the inclusive degree ranges."""
    deg = geom.angles_degrees
    keep = np.zeros(deg.shape, dtype=bool)
    for lo, hi in _validate_ranges(ranges):
        keep |= (deg >= lo - ANGLE_TOL_DEG) & (deg <= hi + ANGLE_TOL_DEG)
    return keep


def mask_sinogram(y, ranges, geom):
    """Zero every column whose angle is outside all ranges."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != geom.sinogram_shape:
        raise ParameterError(f"sinogram shape {y.shape} does not match geometry {geom.sinogram_shape}")
    return y * angle_mask(ranges, geom)[None, :]


class MaskedOperator(LinearOperator):
    """Linear operator followed by zeroing of the unmeasured angle columns."""

    def __init__(self, op, keep):
        super().__init__(op.domain_shape, op.range_shape)
        self.op = op
        self.column_mask = np.asarray(keep, dtype=np.float64)[None, :]

    def _apply(self, u):
        return self.op.apply(u) * self.column_mask

    def _adjoint(self, v):
        return self.op.apply_adjoint(v * self.column_mask)


class _MaskedNonlinear:
    linear = False

    def __init__(self, op, keep):
        self.op = op
        self.domain_shape, self.range_shape = op.domain_shape, op.range_shape
        self.column_mask = np.asarray(keep, dtype=np.float64)[None, :]

    def apply(self, u):
        return self.op.apply(u) * self.column_mask

    __call__ = apply

    def derivative_adjoint_apply(self, u, residual):
        return self.op.derivative_adjoint_apply(u, residual * self.column_mask)


def _same_image(a, b):
    return a.shape == b.shape and np.array_equal(a, b)


def _training_images(cfg, geom, truth):
    images = load_dataset(cfg.dataset_dir, geom.image_shape, cfg.intensity_range)
    if cfg.truth_in_training:
        if not any(_same_image(u, truth) for u in images):
            images.append(truth)
    else:
        images = [u for u in images if not _same_image(u, truth)]
        if not images:
            raise IngestionError("no training images left after removing the truth image")
    return images


def _step_size(cfg, F, R, y_delta):
    if cfg.step_size is not None:
        return float(cfg.step_size)
    norm_R = estimate_operator_norm(R, NORM_ITERATIONS, seed=0)
    if cfg.problem == "radon":
        if cfg.scheme == "perturbed":
            return 1.0 / norm_R
        return 1.0 / norm_R**2
    peak = max(float(np.max(np.abs(y_delta))), 1e-12)
    return 0.5 / (peak * norm_R**2)


def _lambda_schedule(cfg):
    if cfg.scheme == "landweber":
        return None
    coef = cfg.lambda_coefficient
    if coef is None:
        if cfg.scheme == "perturbed":
            coef = DEFAULT_PERTURBED_LAMBDA[cfg.lambda_kind]
        else:
            coef = DEFAULT_LAMBDA[(cfg.problem, cfg.lambda_kind, bool(cfg.normalize_damping))]
    return LambdaSchedule(cfg.lambda_kind, float(coef))


def _solver_config(cfg, step):
    norm = cfg.residual_norm or ("spectral" if cfg.problem == "radon" else "schlieren_inf")
    guess = cfg.initial_guess
    if guess is None:
        guess = "zero" if cfg.problem == "radon" else 0.01
    return SolverConfig(
        scheme=cfg.scheme,
        step_size=step,
        lambda_schedule=_lambda_schedule(cfg),
        stopping=StoppingRule(cfg.tau, 0.0, cfg.max_iterations),
        initial_guess=guess,
        residual_norm=norm,
        normalize_damping=cfg.normalize_damping,
    )


def prepare(cfg):
    """Build every input of the solver run; returns a dict of named pieces."""
    geom = build_geometry(cfg)
    if cfg.truth_image is None:
        raise ConfigError("truth_image is required")
    lo, hi = cfg.intensity_range
    truth = lo + (hi - lo) * read_pgm(cfg.truth_image, geom.image_shape)
    F = forward_operator(cfg.problem, geom)
    R = F if cfg.problem == "radon" else RadonTransform(geom)

    A = None
    n_pairs = 0
    if cfg.scheme != "landweber":
        if cfg.operator_file:
            A = load_operator(cfg.operator_file)
            if A.domain_shape != geom.image_shape or A.range_shape != geom.sinogram_shape:
                raise ConfigError("stored operator does not match the configured geometry")
        else:
            ts = synthesize_outputs(_training_images(cfg, geom, truth), cfg.problem, geom)
            U, Y = assemble_training_matrices(ts)
            A = train_pseudoinverse(U, Y, cfg.training_tol, geom.image_shape, geom.sinogram_shape)
        n_pairs = A.n_pairs

    y = F.apply(truth)
    variance = cfg.noise_variance
    if cfg.noise_relative is not None:
        variance = (cfg.noise_relative * frobenius_norm(y)) ** 2 / y.size
    convention = "spectral" if cfg.problem == "radon" else "schlieren_inf"
    y_delta, _ = add_gaussian_noise(y, variance, cfg.rng_seed, convention)

    if cfg.mask is not None:
        keep = angle_mask(cfg.mask, geom)
        y_exact = y * keep[None, :]
        y_delta = y_delta * keep[None, :]
        if cfg.mask_operator:
            F = MaskedOperator(F, keep) if cfg.problem == "radon" else _MaskedNonlinear(F, keep)
            R = MaskedOperator(R, keep)
            if A is not None:
                A = MaskedOperator(A, keep)
    else:
        y_exact = y
    delta = noise_norm(y_delta - y_exact, convention)

    step = _step_size(cfg, F, R, y_delta)
    scfg = _solver_config(cfg, step)
    scfg.stopping = StoppingRule(cfg.tau, delta, cfg.max_iterations)
    return {
        "geometry": geom, "truth": truth, "F": F, "A": A, "y": y_exact, "y_delta": y_delta,
        "delta": delta, "variance": variance, "solver_config": scfg, "n_pairs": n_pairs,
    }


def _metrics(cfg, parts, trace):
    truth = parts["truth"]
    u = trace.final_iterate
    scfg = parts["solver_config"]
    sched = scfg.lambda_schedule
    rel = frobenius_norm(u - truth) / max(frobenius_norm(truth), 1e-300)
    return {
        "problem": cfg.problem,
        "scheme": cfg.scheme,
        "stop_reason": trace.stop_reason,
        "k_star": trace.k_star,
        "final_residual": trace.final_residual_F,
        "relative_error": rel,
        "delta": parts["delta"],
        "tau": cfg.tau,
        "noise_variance": parts["variance"],
        "step_size": scfg.step_size,
        "lambda_kind": sched.kind if sched else "",
        "lambda_coefficient": sched.coefficient if sched else 0.0,
        "normalize_damping": cfg.normalize_damping,
        "n_pairs": parts["n_pairs"],
        "residual_norm": scfg.residual_norm,
        "seed": cfg.rng_seed,
        "backend": radon_mod.BACKEND,
    }


def write_metrics(path, metrics):
    with open(path, "w") as fh:
        for key, value in metrics.items():
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key}={value}\n")


def read_metrics(path):
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


def run_experiment(cfg, plots=True):
    """Run one configured experiment and write its artifacts to ``cfg.output_dir``.

    Files are assembled in a scratch directory and only moved into place
    once every step has succeeded.
    """
    parts = prepare(cfg)
    trace = run(parts["F"], parts["y_delta"], parts["solver_config"], A=parts["A"], truth=parts["truth"])
    metrics = _metrics(cfg, parts, trace)

    os.makedirs(cfg.output_dir, exist_ok=True)
    scratch = tempfile.mkdtemp(prefix=".partial-", dir=cfg.output_dir)
    try:
        lo, hi = cfg.intensity_range
        write_pgm(os.path.join(scratch, "reconstruction.pgm"), trace.final_iterate, lo, hi)
        np.save(os.path.join(scratch, "reconstruction.npy"), trace.final_iterate)
        trace.write_csv(os.path.join(scratch, "trace.csv"))
        write_metrics(os.path.join(scratch, "metrics.txt"), metrics)
        with open(os.path.join(scratch, "config.json"), "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        # a run stopped at k* = 0 has no per-iteration series to draw
        if plots and trace.records:
            emit_plots(trace, scratch, trace.final_iterate)
        files = {}
        for name in sorted(os.listdir(scratch)):
            dest = os.path.join(cfg.output_dir, name)
            os.replace(os.path.join(scratch, name), dest)
            files[name] = dest
    finally:
        shutil.rmtree(scratch, ignore_errors=True)
    return ExperimentReport(trace, trace.final_iterate, metrics, files)


def _axis_range(values):
    finite = values[np.isfinite(values)]
    lo, hi = float(finite.min()), float(finite.max())
    pad = 0.05 * (hi - lo) if hi > lo else max(0.5 * abs(hi), 1.0)
    return lo, hi, (lo - pad, hi + pad)


def emit_plots(trace, report_dir, reconstruction=None):
    """Write the four per-iteration line plots and a reconstruction heatmap.

    Returns the metadata also written to ``plots.json``: for each plot the
    series extrema and axis limits, plus the list of skipped plots.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not trace.records:
        raise ValueError("trace has no records to plot")
    os.makedirs(report_dir, exist_ok=True)
    k = trace.column("k")
    res_F = trace.column("residual_F")
    res_A = trace.column("residual_A")
    lam = trace.column("lambda_k")
    with np.errstate(divide="ignore", invalid="ignore"):
        series = {
            "residual": ("residual_F", res_F),
            "lambda": ("lambda_k", lam),
            "residual_ratio": ("residual_F / residual_A", res_F / res_A),
            "weighted_ratio": ("residual_F / (lambda_k residual_A)", res_F / (lam * res_A)),
        }
    meta = {"plots": {}, "skipped": []}
    for name, (label, values) in series.items():
        if not np.any(np.isfinite(values)):
            meta["skipped"].append(name)
            continue
        lo, hi, ylim = _axis_range(values)
        xlim = (float(k.min()) - 0.5, float(k.max()) + 0.5)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(k, values, marker=".")
        ax.set_xlabel("iteration k")
        ax.set_ylabel(label)
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        fig.tight_layout()
        path = os.path.join(report_dir, f"{name}.png")
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
        meta["plots"][name] = {"file": os.path.basename(path), "min": lo, "max": hi,
                               "ylim": list(ylim), "xlim": list(xlim)}
    if reconstruction is not None:
        fig, ax = plt.subplots(figsize=(4, 4))
        ax.imshow(reconstruction, cmap="gray")
        ax.set_axis_off()
        fig.tight_layout()
        fig.savefig(os.path.join(report_dir, "reconstruction.png"), metadata={"Software": None})
        plt.close(fig)
        meta["plots"]["reconstruction"] = {"file": "reconstruction.png"}
    with open(os.path.join(report_dir, "plots.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return meta
