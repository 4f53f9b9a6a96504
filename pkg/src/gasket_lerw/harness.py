"""Monte Carlo orchestration: runs, statistics, and artifact emission.

All commands are driven by a ``RunConfig`` and are reproducible from
(config, seed): replicas are fixed-size sample chunks with streams indexed
by replica number, so the thread count changes wall-clock only, never a
number.  Written artifacts are byte-identical across re-runs; wall-clock
timing is reported on the console and deliberately kept out of files.
"""

from __future__ import annotations

import dataclasses
import json
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import sqrt
from pathlib import Path

import numpy as np
from scipy import stats as _scipy_stats

from . import __version__, eraser, exact, lattice, limit, walker
from .lattice import Vertex
from .walker import CrossingVariant

REPLICA_CHUNK = 2000
P_VALUE_FLOOR = 1e-3
DIMENSION_TOLERANCE = 0.05
RESIDUAL_TOLERANCE = 1e-9


class DegenerateCells(ValueError):
    """Pooling low-expectation cells left fewer than two categories."""


# ---------------------------------------------------------------------------
# Chi-square with pooling
# ---------------------------------------------------------------------------


def chi_square(
    observed: dict[str, int] | list[int],
    expected: dict[str, float] | list[float],
    min_expected: float = 5.0,
) -> tuple[float, float]:
    """Pearson statistic and p-value, pooling cells whose expected count is
    below ``min_expected`` (smallest cells merge first)."""
    if isinstance(observed, dict):
        keys = sorted(set(observed) | set(expected))
        obs = [float(observed.get(k, 0)) for k in keys]
        probs = [float(expected.get(k, 0.0)) for k in keys]
    else:
        obs = [float(x) for x in observed]
        probs = [float(p) for p in expected]
    total_p = sum(probs)
    if abs(total_p - 1.0) > 1e-9:
        raise ValueError(f"expected probabilities sum to {total_p}, not 1")
    n = sum(obs)
    if n < 1:
        raise ValueError("need at least one observation")
    # Pooling must depend on the expected masses only (never on the data):
    # ties between equal-mass cells break on their original position.
    cells = sorted(((p, k, o) for k, (p, o) in enumerate(zip(probs, obs))))
    while len(cells) > 1 and cells[0][0] * n < min_expected:
        (p0, k0, o0), (p1, k1, o1) = cells[0], cells[1]
        cells = sorted([(p0 + p1, min(k0, k1), o0 + o1)] + cells[2:])
    if len(cells) < 2:
        raise DegenerateCells("fewer than two cells after pooling")
    stat = sum((o - p * n) ** 2 / (p * n) for p, _, o in cells)
    p_value = float(_scipy_stats.chi2.sf(stat, df=len(cells) - 1))
    return stat, p_value


# ---------------------------------------------------------------------------
# SVG emission
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvgStyle:
    width: int = 720
    margin: float = 24.0
    stroke_width: float = 1.4
    palette: tuple[str, ...] = (
        "#1f77b4",
        "#d62728",
        "#2ca02c",
        "#9467bd",
        "#ff7f0e",
        "#17becf",
    )
    backdrop_level: int | None = None
    backdrop_stroke: str = "#c8c8c8"


def _as_xy(obj) -> list[tuple[float, float]]:
    if isinstance(obj, limit.RefinedPath):
        return [(x, y) for _, x, y in obj.polyline()]
    return [lattice.embed(v) for v in obj]


def emit_svg(paths, style: SvgStyle = SvgStyle()) -> str:
    """Standalone SVG of one or more paths in the Euclidean embedding.

    ``paths`` may be a lattice path, a RefinedPath, or a list of either;
    each list entry gets the next palette color.  Output is deterministic.
    """
    if isinstance(paths, limit.RefinedPath) or (paths and isinstance(paths[0], tuple)):
        paths = [paths]
    if not paths:
        raise ValueError("nothing to draw")
    polys = [_as_xy(p) for p in paths]
    pts = [pt for poly in polys for pt in poly]
    backdrop: list[tuple[tuple[float, float], ...]] = []
    if style.backdrop_level is not None:
        for tri in lattice.triangles_of_generation(style.backdrop_level):
            backdrop.append(tuple(lattice.embed(c) for c in tri.corners()))
        pts = pts + [pt for tri in backdrop for pt in tri]
    x0 = min(p[0] for p in pts)
    x1 = max(p[0] for p in pts)
    y0 = min(p[1] for p in pts)
    y1 = max(p[1] for p in pts)
    span = max(x1 - x0, y1 - y0, 1e-9)
    inner = style.width - 2 * style.margin
    scale = inner / span
    height = (y1 - y0) * scale + 2 * style.margin

    def here(p: tuple[float, float]) -> str:
        x = style.margin + (p[0] - x0) * scale
        y = height - (style.margin + (p[1] - y0) * scale)
        return f"{x:.3f},{y:.3f}"

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{style.width}" '
        f'height="{height:.3f}" viewBox="0 0 {style.width} {height:.3f}">'
    ]
    for tri in backdrop:
        out.append(
            f'<polygon points="{" ".join(here(p) for p in tri)}" fill="none" '
            f'stroke="{style.backdrop_stroke}" stroke-width="0.6"/>'
        )
    for k, poly in enumerate(polys):
        color = style.palette[k % len(style.palette)]
        out.append(
            f'<polyline points="{" ".join(here(p) for p in poly)}" fill="none" '
            f'stroke="{color}" stroke-width="{style.stroke_width}"/>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Configuration and reports
# ---------------------------------------------------------------------------

COMMANDS = ("exact", "mc-shapes", "mc-length", "limit-path", "dimension", "moments")


@dataclass(frozen=True)
class RunConfig:
    command: str
    level: int = 1  # crossing level N, or depth M, or moment order K
    samples: int | None = None
    seed: int = 0
    threads: int = 1
    variant: CrossingVariant = CrossingVariant.DIRECT
    method: str = "rejection"
    out: str | None = None
    fmt: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.samples is not None and self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.fmt not in ("json", "csv", "svg"):
            raise ValueError(f"unknown format {self.fmt!r}")

    def effective_samples(self) -> int:
        if self.samples is not None:
            return self.samples
        if self.command == "mc-shapes":
            return 100_000 if self.level == 1 else 10_000
        if self.command == "mc-length":
            return 10_000 if self.level <= 4 else 1_000
        if self.command == "dimension":
            return 100
        return 1

    def to_dict(self) -> dict:
        # Provenance keeps the fields that determine the numbers; thread
        # count and output routing are execution details.
        d = dataclasses.asdict(self)
        d["variant"] = self.variant.value
        for transient in ("out", "fmt", "threads"):
            d.pop(transient)
        return d


@dataclass(frozen=True)
class McReport:
    command: str
    config: dict
    build: str
    payload: dict
    passed: bool
    wall_clock_s: float = field(compare=False, default=0.0)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = {
            "command": self.command,
            "config": self.config,
            "build": self.build,
            "passed": self.passed,
            **{k: v for k, v in self.payload.items() if not k.startswith("_")},
        }
        if include_timing:
            d["wall_clock_s"] = self.wall_clock_s
        return d

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True) + "\n"


_BUILD_ID: list[str] = []


def build_id() -> str:
    if not _BUILD_ID:
        label = f"gasket-lerw {__version__}"
        try:
            rev = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                cwd=Path(__file__).resolve().parent,
                capture_output=True,
                text=True,
                timeout=5,
            )
            if rev.returncode == 0 and rev.stdout.strip():
                label = f"{label} ({rev.stdout.strip()})"
        except (OSError, subprocess.SubprocessError):
            pass
        _BUILD_ID.append(label)
    return _BUILD_ID[0]


# ---------------------------------------------------------------------------
# Replica workers (top level, picklable)
# ---------------------------------------------------------------------------


def _scale_path(path, shift: int):
    return [(i >> shift, j >> shift) for i, j in path]


def classify_top_shape(path, level: int, table=None) -> str:
    """Shape id of the loop-free coarse view one level below the apex.

    The coarse walk pattern is chronologically erased and rescaled to the
    unit frame; its law is exactly the level-1 loop-erased crossing law.
    """
    coarse = eraser.chronological_erase(walker.coarse_grain(path, level - 1))
    return eraser.classify_shape(_scale_path(coarse, level - 1), table)


def _shapes_worker(args) -> dict[str, int]:
    level, variant_value, method, seed, replica, count = args
    variant = CrossingVariant(variant_value)
    rng = walker.replica_rng(seed, replica)
    table = exact.shape_table()
    counts: dict[str, int] = {}
    for _ in range(count):
        path = walker.sample_crossing(level, variant, method, rng)
        sid = classify_top_shape(path, level, table)
        counts[sid] = counts.get(sid, 0) + 1
    return counts


def _length_worker(args) -> tuple[int, float, float]:
    level, variant_value, method, seed, replica, count = args
    variant = CrossingVariant(variant_value)
    rng = walker.replica_rng(seed, replica)
    total = 0.0
    total_sq = 0.0
    for _ in range(count):
        path = walker.sample_crossing(level, variant, method, rng)
        ell = float(len(eraser.loop_erase(path)) - 1)
        total += ell
        total_sq += ell * ell
    return count, total, total_sq


def _dimension_worker(args) -> list[float]:
    depth, seed, replica, count = args
    slopes = []
    for k in range(count):
        rng = walker.replica_rng(seed, replica * 100_003 + k)
        slopes.append(limit.box_count_dimension(limit.sample_limit_path(depth, rng)))
    return slopes


def _replicas(samples: int) -> list[tuple[int, int]]:
    """Fixed (replica-index, chunk-size) split, independent of thread count."""
    out = []
    k = 0
    left = samples
    while left > 0:
        take = min(REPLICA_CHUNK, left)
        out.append((k, take))
        k += 1
        left -= take
    return out


def _run_replicas(worker, arg_of, replicas, threads: int):
    tasks = [arg_of(r, c) for r, c in replicas]
    if threads == 1:
        return [worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run(config: RunConfig) -> McReport:
    started = time.perf_counter()
    runner = {
        "exact": _run_exact,
        "mc-shapes": _run_mc_shapes,
        "mc-length": _run_mc_length,
        "limit-path": _run_limit_path,
        "dimension": _run_dimension,
        "moments": _run_moments,
    }[config.command]
    payload, passed = runner(config)
    report = McReport(
        command=config.command,
        config=config.to_dict(),
        build=build_id(),
        payload=payload,
        passed=passed,
        wall_clock_s=time.perf_counter() - started,
    )
    if config.out:
        _write_artifacts(config, report)
    return report


def _run_exact(config: RunConfig) -> tuple[dict, bool]:
    order = config.level if config.level >= 1 else 8
    return {"exact": exact.exact_report(moment_order=min(order, 12))}, True


def _run_mc_shapes(config: RunConfig) -> tuple[dict, bool]:
    n = config.effective_samples()
    table = exact.shape_table()
    expected = {k: float(v) for k, v in table.column(config.variant).items()}
    results = _run_replicas(
        _shapes_worker,
        lambda r, c: (config.level, config.variant.value, config.method, config.seed, r, c),
        _replicas(n),
        config.threads,
    )
    counts: dict[str, int] = {}
    for part in results:
        for k, v in sorted(part.items()):
            counts[k] = counts.get(k, 0) + v
    stat, p_value = chi_square(counts, expected)
    payload = {
        "samples": n,
        "counts": dict(sorted(counts.items())),
        "expected": {k: expected[k] for k in sorted(expected)},
        "statistic": stat,
        "p_value": p_value,
        "threshold": P_VALUE_FLOOR,
    }
    return payload, p_value > P_VALUE_FLOOR


def _run_mc_length(config: RunConfig) -> tuple[dict, bool]:
    n = config.effective_samples()
    results = _run_replicas(
        _length_worker,
        lambda r, c: (config.level, config.variant.value, config.method, config.seed, r, c),
        _replicas(n),
        config.threads,
    )
    count = sum(r[0] for r in results)
    total = sum(r[1] for r in results)
    total_sq = sum(r[2] for r in results)
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    se = sqrt(var / count)
    lam = float(limit.growth_rate())
    scale = lam**-config.level
    ancestor = (1, 0) if config.variant is CrossingVariant.DIRECT else (0, 1)
    exact_mean = float(exact.length_mean(config.level, ancestor))
    z = (mean - exact_mean) / se if se else 0.0
    payload = {
        "samples": count,
        "mean_length": mean,
        "stderr": se,
        "scaled_mean": mean * scale,
        "scaled_stderr": se * scale,
        "exact_mean": exact_mean,
        "z_score": z,
        "growth_rate": lam,
    }
    return payload, abs(z) <= 3.0


def _run_limit_path(config: RunConfig) -> tuple[dict, bool]:
    rng = walker.replica_rng(config.seed, 0)
    family = limit.sample_refined_family(config.level, rng)
    path = family[-1]
    s1, s2 = path.s_counts()
    payload = {
        "depth": path.depth,
        "cells": len(path.cells),
        "counts": {"one_visit": s1, "two_visit": s2},
        "scaled_length": path.scaled_length(),
        "_family": family,  # consumed by the artifact writer, stripped from JSON
    }
    return payload, True


def _run_dimension(config: RunConfig) -> tuple[dict, bool]:
    n = config.effective_samples()
    results = _run_replicas(
        _dimension_worker,
        lambda r, c: (config.level, config.seed, r, c),
        _replicas(n),
        config.threads,
    )
    slopes = [s for part in results for s in part]
    mean = sum(slopes) / len(slopes)
    sd = sqrt(sum((s - mean) ** 2 for s in slopes) / max(len(slopes) - 1, 1))
    target = float(exact.spectral_data().dim)
    payload = {
        "samples": len(slopes),
        "depth": config.level,
        "mean_slope": mean,
        "sd_slope": sd,
        "target_dimension": target,
        "tolerance": DIMENSION_TOLERANCE,
    }
    return payload, abs(mean - target) <= DIMENSION_TOLERANCE


def _run_moments(config: RunConfig) -> tuple[dict, bool]:
    order = config.level if config.level > 1 else 8
    table = exact.moment_table(min(order, 12))
    residuals = {}
    worst = 0.0
    for t in (-0.5, -0.1, 0.1):
        r1, r2, rem = exact.functional_equation_residual(table, t)
        residuals[str(t)] = {
            "phi1": float(r1),
            "phi2": float(r2),
            "remainder_estimate": float(rem),
        }
        worst = max(worst, float(r1), float(r2))
    payload = {
        "order": table.K,
        "moments": {str(k): [float(x) for x in table.moment(k)] for k in range(1, table.K + 1)},
        "w_prime_mean": float(table.w_prime_mean),
        "w_prime_variance": float(table.w_prime_variance),
        "residuals": residuals,
        "tolerance": RESIDUAL_TOLERANCE,
    }
    return payload, worst < RESIDUAL_TOLERANCE


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------


def _write_artifacts(config: RunConfig, report: McReport) -> None:
    out = Path(config.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    family = report.payload.get("_family")
    clean = McReport(
        command=report.command,
        config=report.config,
        build=report.build,
        payload={k: v for k, v in report.payload.items() if not k.startswith("_")},
        passed=report.passed,
    )
    if config.fmt == "json":
        out.with_suffix(".json").write_text(clean.to_json())
        if family is not None:
            sk = eraser.Skeleton(
                level=0,
                entries=tuple(
                    eraser.SkeletonEntry(
                        triangle=lattice.TriangleId(c.corner, 0),
                        entry=c.entry,
                        exit=c.exit,
                        kind=c.kind,
                        exit_index=k,
                    )
                    for k, c in enumerate(family[-1].cells)
                ),
            )
            out.with_suffix(".skeleton.json").write_text(eraser.skeleton_to_json(sk) + "\n")
    elif config.fmt == "csv":
        if family is None:
            raise ValueError(f"{config.command} has no csv artifact")
        rows = ["t,x,y"]
        rows += [f"{t:.15g},{x:.15g},{y:.15g}" for t, x, y in family[-1].polyline()]
        out.with_suffix(".csv").write_text("\n".join(rows) + "\n")
    elif config.fmt == "svg":
        if family is None:
            raise ValueError(f"{config.command} has no svg artifact")
        shown = [m for m in family if m.depth in (0, 2, 4, family[-1].depth)]
        out.with_suffix(".svg").write_text(emit_svg(shown))


def summarize(report: McReport) -> str:
    """One console line per run; the only place timing appears."""
    verdict = "pass" if report.passed else "FAIL"
    keys = ("p_value", "z_score", "mean_slope", "scaled_mean", "w_prime_mean")
    bits = [f"{k}={report.payload[k]:.6g}" for k in keys if k in report.payload]
    return (
        f"[{report.command}] {verdict} "
        + " ".join(bits)
        + f" ({report.wall_clock_s:.2f}s, {report.build})"
    )
