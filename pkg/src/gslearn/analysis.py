"""Verification and inspection tooling: the randomized aggregation-bound
suite, kernel response curves, learned-parameter summaries, structure
export, and the similarity-buffer complexity probe.

Emitted CSVs format floats with 17 significant digits so a reload
reproduces every value exactly.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .diffcore import ConfigError, RngState, constant
from .encoder import GslModel, bounded_mean_aggregate
from .similarity import (
    GAUSIM_B_DEFAULT,
    GAUSIM_C_DEFAULT,
    EmbeddingMatrix,
    GaussianParams,
    gausim,
    gausim_phi,
    linsim,
    similarity_buffer,
)

FLOAT_FMT = ".17g"

DEFAULT_BOUND_DIMS = (4, 16, 64)
DEFAULT_BOUND_KS = (1, 5, 20)
DEFAULT_BOUND_EPS = (0.1, 0.3, 1.0)


@dataclass
class BoundReport:
    """Outcome of the randomized mean-aggregation bound suite."""

    total_trials: int
    violations: int
    infeasible: int
    configs: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict:
        return {
            "total_trials": self.total_trials,
            "violations": self.violations,
            "infeasible": self.infeasible,
            "passed": self.passed,
            "configs": self.configs,
        }


def _unit_rows(gen, n: int, dim: int) -> np.ndarray:
    v = gen.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _neighbors_within(h: np.ndarray, eps: float, k: int, gen,
                      max_rounds: int = 200):
    """Rejection-sample k unit vectors per anchor, each within distance eps:
    perturb, renormalize, reject anything outside the cap. Returns the
    neighbor stack and the number of slots that never produced a sample
    (those fall back to the anchor itself and are reported infeasible)."""
    trials, dim = h.shape
    out = np.repeat(h[:, None, :], k, axis=1)
    if eps <= 0:
        return out.copy(), 0
    out = out.copy()
    pending = np.ones((trials, k), dtype=bool)
    step = eps / 2.0
    for _ in range(max_rounds):
        if not pending.any():
            break
        idx = np.argwhere(pending)
        base = h[idx[:, 0]]
        cand = base + step * gen.standard_normal((idx.shape[0], dim))
        cand /= np.linalg.norm(cand, axis=1, keepdims=True)
        ok = np.linalg.norm(cand - base, axis=1) <= eps
        rows, cols = idx[ok, 0], idx[ok, 1]
        out[rows, cols] = cand[ok]
        pending[rows, cols] = False
    return out, int(pending.sum())


def aggregation_bound_suite(trials: int = 400,
                            dims=DEFAULT_BOUND_DIMS,
                            ks=DEFAULT_BOUND_KS,
                            eps_grid=DEFAULT_BOUND_EPS,
                            seed: int = 0,
                            slack: float = 1e-9) -> BoundReport:
    """Randomized check that averaging unit neighbors within distance eps
    of a unit anchor stays within eps of the anchor.

    Every (dim, K, eps) combination runs ``trials`` independent anchors.
    A violation is a mean landing more than eps + slack away.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    root = RngState(seed)
    configs = []
    total = violations = infeasible = 0
    for dim in dims:
        for k in ks:
            for eps in eps_grid:
                gen = root.generator("bound", int(dim), int(k), f"{float(eps):.6g}")
                h = _unit_rows(gen, trials, dim)
                neighbors, failed = _neighbors_within(h, float(eps), int(k), gen)
                agg = neighbors.mean(axis=1)
                dist = np.linalg.norm(agg - h, axis=1)
                bad = int((dist > eps + slack).sum())
                total += trials
                violations += bad
                infeasible += failed
                configs.append({
                    "dim": int(dim),
                    "k": int(k),
                    "eps": float(eps),
                    "trials": trials,
                    "max_distance": float(dist.max()),
                    "min_slack": float(eps - dist.max()),
                    "violations": bad,
                    "infeasible_slots": failed,
                })
    return BoundReport(total, violations, infeasible, configs)


def kernel_curve(kernel: str, grid=None, b: float = GAUSIM_B_DEFAULT,
                 c: float = GAUSIM_C_DEFAULT, t: float = 1.0) -> list[tuple[float, float]]:
    """Unnormalized kernel response over a similarity grid.

    Emits the pre-softmax weight each kernel assigns to a candidate at
    inner-product similarity s (for "heat", the raw-kernel value under the
    unit-norm identity ||x-y||^2 = 2(1 - s)).
    """
    if grid is None:
        grid = np.linspace(-1.0, 1.0, 201)
    s = np.asarray(grid, dtype=np.float64)
    if kernel == "lin":
        phi = np.exp(s)
    elif kernel == "diff":
        phi = np.exp(1.0 - s)
    elif kernel in ("gau", "neuralgau"):
        phi = gausim_phi(s, b=b, c=c)
    elif kernel == "heat":
        if t <= 0:
            raise ConfigError(f"heat kernel time t must be positive, got {t}")
        phi = np.exp(-2.0 * (1.0 - s) / t)
    else:
        raise ConfigError(f"no curve for kernel {kernel!r}")
    return [(float(a), float(v)) for a, v in zip(s, phi)]


def write_csv(path, header: list[str], rows):
    """CSV with header; floats formatted to round-trip exactly."""
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FMT)
    return str(v)


def five_number(values) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ConfigError("five_number needs at least one value")
    q = np.percentile(v, [0, 25, 50, 75, 100])
    return {"min": float(q[0]), "q1": float(q[1]), "median": float(q[2]),
            "q3": float(q[3]), "max": float(q[4])}


def param_distribution(model: GslModel, X) -> dict[str, dict[str, float]]:
    """Five-number summaries of the realized per-node Gaussian parameters,
    one pair per layer. The c summaries are of 10 * c_i, matching how the
    width is exported elsewhere (c_scale puts c_i in (0, c_scale))."""
    if model.config.kernel != "neuralgau":
        raise ConfigError(
            f"param_distribution needs the neuralgau kernel, got {model.config.kernel!r}"
        )
    trace: dict = {}
    model.forward(X, RngState(model.config.seed).child("analysis"),
                  training=False, trace=trace)
    out = {}
    for layer in (1, 2):
        info = trace[f"layer{layer}"]
        out[f"b{layer}"] = five_number(info["b_vec"])
        out[f"c{layer}"] = five_number(10.0 * info["c_vec"])
    return out


def export_structure(adjacency, threshold: float, path):
    """Write entries strictly above the threshold as tab-separated
    ``i  j  weight`` rows (one header line)."""
    A = np.asarray(adjacency, dtype=np.float64)
    if A.ndim != 2:
        raise ConfigError(f"adjacency must be a matrix, got ndim={A.ndim}")
    if not 0.0 <= threshold < 1.0:
        raise ConfigError(f"threshold must be in [0, 1), got {threshold}")
    rows, cols = np.nonzero(A > threshold)
    with open(path, "w") as f:
        f.write("i\tj\tweight\n")
        for i, j in zip(rows, cols):
            f.write(f"{i}\t{j}\t{format(A[i, j], FLOAT_FMT)}\n")
    return int(rows.size)


def complexity_probe(n_grid=(1000, 2000, 4000), s: int = 500,
                     mode: str = "transition", dim: int = 32,
                     kernel: str = "gau", repeats: int = 5,
                     seed: int = 0) -> list[dict]:
    """Measure the similarity score-buffer size and wall time as the node
    count grows. Transition mode scores n-by-s, full mode n-by-n; the
    timing is the best of ``repeats`` evaluations after a warmup."""
    if mode not in ("full", "transition"):
        raise ConfigError(f"probe mode must be full or transition, got {mode!r}")
    if kernel not in ("lin", "gau"):
        raise ConfigError(f"probe kernel must be lin or gau, got {kernel!r}")
    n_grid = [int(n) for n in n_grid]
    if sorted(n_grid) != n_grid:
        raise ConfigError("n_grid must be ascending")
    root = RngState(seed)
    rows = []
    prev = None
    for n in n_grid:
        gen = root.generator("probe", n)
        Z = EmbeddingMatrix(constant(_unit_rows(gen, n, dim)), True)
        if mode == "transition":
            cand = EmbeddingMatrix(constant(_unit_rows(gen, s, dim)), True)
        else:
            cand = Z

        def evaluate():
            if kernel == "gau":
                gausim(Z, cand, GaussianParams())
            else:
                linsim(Z, cand)

        evaluate()  # warmup outside the ledger window
        similarity_buffer.reset()
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            evaluate()
            best = min(best, time.perf_counter() - t0)
        entries = similarity_buffer.peak_entries
        row = {
            "n": n,
            "candidates": s if mode == "transition" else n,
            "buffer_entries": entries,
            "seconds": float(best),
            "time_ratio": float(best / prev) if prev else float("nan"),
        }
        rows.append(row)
        prev = best
    return rows


def svg_line_plot(path, xs, series: dict[str, np.ndarray],
                  width: int = 640, height: int = 400,
                  x_label: str = "", y_label: str = ""):
    """Minimal standalone SVG line plot (axes, polylines, legend)."""
    xs = np.asarray(xs, dtype=np.float64)
    pad = 50
    x_min, x_max = xs.min(), xs.max()
    all_y = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    y_min, y_max = all_y.min(), all_y.max()
    x_span = (x_max - x_min) or 1.0
    y_span = (y_max - y_min) or 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")

    def sx(x):
        return pad + (x - x_min) / x_span * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_min) / y_span * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    for tick in np.linspace(x_min, x_max, 5):
        parts.append(
            f'<text x="{sx(tick):.1f}" y="{height - pad + 18}" font-size="11" '
            f'text-anchor="middle">{tick:.3g}</text>'
        )
    for tick in np.linspace(y_min, y_max, 5):
        parts.append(
            f'<text x="{pad - 6}" y="{sy(tick):.1f}" font-size="11" '
            f'text-anchor="end">{tick:.3g}</text>'
        )
    if x_label:
        parts.append(
            f'<text x="{width / 2:.1f}" y="{height - 10}" font-size="12" '
            f'text-anchor="middle">{x_label}</text>'
        )
    if y_label:
        parts.append(
            f'<text x="14" y="{height / 2:.1f}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 14 {height / 2:.1f})">{y_label}</text>'
        )
    for i, (label, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=np.float64)
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
        color = colors[i % len(colors)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{width - pad - 4}" y="{pad + 14 + 16 * i}" font-size="12" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as f:
        f.write("\n".join(parts) + "\n")


__all__ = [
    "BoundReport",
    "aggregation_bound_suite",
    "bounded_mean_aggregate",
    "complexity_probe",
    "export_structure",
    "five_number",
    "kernel_curve",
    "param_distribution",
    "svg_line_plot",
    "write_csv",
]
