"""Batch driver: load or generate points, cluster, optionally verify, report.

Exit codes: 0 success, 1 usage error, 2 I/O or parse error, 3 the result
disagrees with the sequential reference under ``--verify``.

The report file is flat ``key=value`` text, one pair per line, in this order::

    n d eps min_pts algorithm code_width parallel
    num_clusters num_noise num_core
    time_build_ms time_core_ms time_merge_ms time_finalize_ms time_total_ms
    verified                              (true / false / off)
    morton<W>_num_codes_duplicated_gt3    (with --morton-report, W in 32 64)
    morton<W>_num_points_with_duplicate_code
    morton<W>_max_same_code_duplicates
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from . import datasets
from .dbscan import (
    NOISE,
    DbscanOutput,
    DbscanParams,
    check_equivalence,
    dsdbscan_oracle,
    fdbscan,
    fdbscan_densebox,
    fof_connected_components,
    legacy_graph_dbscan,
)
from .dbscan._common import PHASES
from .geometry import as_points, bounding_box
from .morton import WIDTHS, MortonStats, compute_codes, morton_stats

ALGORITHMS = ("fdbscan", "densebox", "fof", "legacy", "oracle")
ORACLE_CEILING = 20_000

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_MISMATCH = 0, 1, 2, 3


class UsageError(Exception):
    pass


class VerificationError(Exception):
    pass


@dataclass
class RunConfig:
    source: str | datasets.Uniform | datasets.GaussianClusters
    algorithm: str = "fdbscan"
    eps: float | None = None
    derive_eps: tuple[float, float, float] | None = None
    min_pts: int = 2
    code_width: int = 64
    fmt: str = "csv"
    verify: bool = False
    parallel: bool = True
    seed: int | None = None
    labels_out: str | None = None
    report_out: str | None = None
    morton_report: bool = False
    oracle_ceiling: int = ORACLE_CEILING

    def resolved_eps(self) -> float:
        if (self.eps is None) == (self.derive_eps is None):
            raise UsageError("give exactly one of eps or derive_eps")
        if self.derive_eps is not None:
            try:
                return datasets.derive_eps(*self.derive_eps)
            except datasets.SpecError as exc:
                raise UsageError(str(exc)) from None
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise UsageError(f"eps must be positive, got {self.eps}")
        return float(self.eps)

    def check(self):
        if self.algorithm not in ALGORITHMS:
            raise UsageError(f"unknown algorithm {self.algorithm!r}")
        if self.code_width not in WIDTHS:
            raise UsageError(f"code width must be 32 or 64, got {self.code_width}")
        if self.algorithm in ("fof", "legacy") and self.min_pts != 2:
            raise UsageError(f"{self.algorithm} is defined for minpts=2 only")
        if self.fmt not in datasets.FORMATS:
            raise UsageError(f"unknown format {self.fmt!r}")
        try:
            DbscanParams(self.resolved_eps(), self.min_pts)
        except ValueError as exc:
            raise UsageError(str(exc)) from None


@dataclass
class RunReport:
    n: int
    d: int
    eps: float
    min_pts: int
    algorithm: str
    code_width: int
    parallel: bool
    num_clusters: int
    num_noise: int
    num_core: int
    timings_ms: dict
    verified: str = "off"
    morton: dict[int, MortonStats] = field(default_factory=dict)

    def items(self) -> list[tuple[str, str]]:
        out = [
            ("n", str(self.n)),
            ("d", str(self.d)),
            ("eps", repr(float(self.eps))),
            ("min_pts", str(self.min_pts)),
            ("algorithm", self.algorithm),
            ("code_width", str(self.code_width)),
            ("parallel", str(self.parallel).lower()),
            ("num_clusters", str(self.num_clusters)),
            ("num_noise", str(self.num_noise)),
            ("num_core", str(self.num_core)),
        ]
        for p in PHASES:
            out.append((f"time_{p}_ms", f"{self.timings_ms.get(p, 0.0):.3f}"))
        out.append(("time_total_ms", f"{sum(self.timings_ms.values()):.3f}"))
        out.append(("verified", self.verified))
        for w, s in sorted(self.morton.items()):
            out.append((f"morton{w}_num_codes_duplicated_gt3", str(s.num_codes_duplicated_gt3)))
            out.append((f"morton{w}_num_points_with_duplicate_code", str(s.num_points_with_duplicate_code)))
            out.append((f"morton{w}_max_same_code_duplicates", str(s.max_same_code_duplicates)))
        return out

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.items())


def parse_report(text: str) -> dict[str, str]:
    out = {}
    for line in text.splitlines():
        if line.strip():
            key, _, value = line.partition("=")
            out[key] = value
    return out


def morton_report(points, widths: Sequence[int] = WIDTHS) -> dict[int, MortonStats]:
    """Duplicate-code statistics of the points' Morton codes at each width."""
    pts = as_points(points)
    if pts.shape[0] == 0:
        return {w: MortonStats(0, 0, 0) for w in widths}
    scene = bounding_box(pts)
    return {w: morton_stats(compute_codes(pts, pts, w, scene)) for w in widths}


def format_morton_table(stats: dict[int, MortonStats]) -> str:
    rows = [
        ("#duplicate codes (> 3 times)", "num_codes_duplicated_gt3"),
        ("#points sharing a code", "num_points_with_duplicate_code"),
        ("max duplicates of one code", "max_same_code_duplicates"),
    ]
    widths = sorted(stats)
    head = f"{'':<30}" + "".join(f"{str(w) + '-bit':>14}" for w in widths)
    lines = [head]
    for label, attr in rows:
        lines.append(f"{label:<30}" + "".join(f"{getattr(stats[w], attr):>14}" for w in widths))
    return "\n".join(lines)


def _cluster(points, cfg: RunConfig, params: DbscanParams) -> DbscanOutput:
    kw = {"code_width": cfg.code_width, "parallel": cfg.parallel}
    if cfg.algorithm == "fdbscan":
        return fdbscan(points, params, **kw)
    if cfg.algorithm == "densebox":
        return fdbscan_densebox(points, params, **kw)
    if cfg.algorithm == "fof":
        return fof_connected_components(points, params.eps, **kw)
    if cfg.algorithm == "legacy":
        return legacy_graph_dbscan(points, params.eps, **kw)
    t0 = time.perf_counter()
    out = dsdbscan_oracle(points, params)
    if not any(out.timings.values()):
        out.timings["core"] = time.perf_counter() - t0
    return out


def load_input(cfg: RunConfig) -> np.ndarray:
    if isinstance(cfg.source, (datasets.Uniform, datasets.GaussianClusters)):
        return datasets.generate(cfg.source, seed=cfg.seed)
    return datasets.load_points(cfg.source, cfg.fmt)


def run(cfg: RunConfig, points=None, out=None) -> tuple[RunReport, np.ndarray]:
    """Cluster according to ``cfg``; writes the labels and report files if requested.

    Raises :class:`UsageError`, :class:`datasets.LoadError`/``OSError`` or
    :class:`VerificationError`.
    """
    out = sys.stdout if out is None else out
    cfg.check()
    params = DbscanParams(cfg.resolved_eps(), cfg.min_pts)
    pts = as_points(load_input(cfg) if points is None else points)
    n, d = pts.shape
    if cfg.verify and n > cfg.oracle_ceiling:
        raise UsageError(f"--verify needs n <= {cfg.oracle_ceiling}, got {n}")

    result = _cluster(pts, cfg, params)
    labels = np.asarray(result.labels, dtype=np.int64)
    report = RunReport(
        n=n,
        d=d,
        eps=params.eps,
        min_pts=params.min_pts,
        algorithm=cfg.algorithm,
        code_width=cfg.code_width,
        parallel=cfg.parallel,
        num_clusters=result.num_clusters,
        num_noise=result.num_noise,
        num_core=result.num_core,
        timings_ms={p: 1000.0 * result.timings.get(p, 0.0) for p in PHASES},
    )
    if cfg.morton_report:
        report.morton = morton_report(pts)

    problems = []
    if cfg.verify:
        problems = check_equivalence(pts, params, result, dsdbscan_oracle(pts, params))
        report.verified = "false" if problems else "true"

    if cfg.labels_out:
        np.savetxt(cfg.labels_out, labels, fmt="%d")
    if cfg.report_out:
        Path(cfg.report_out).write_text(report.to_text(), encoding="utf-8")

    total = sum(report.timings_ms.values())
    print(
        f"{cfg.algorithm}: n={n} d={d} eps={params.eps:.6g} minpts={params.min_pts} -> "
        f"{report.num_clusters} clusters, {report.num_core} core, {report.num_noise} noise "
        f"in {total:.1f} ms",
        file=out,
    )
    if report.morton:
        print(format_morton_table(report.morton), file=out)
    if cfg.verify:
        print("verify: " + ("ok" if not problems else "MISMATCH"), file=out)
        if problems:
            raise VerificationError("; ".join(problems))
    return report, labels


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _triple(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected b,V,n")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not numbers: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lbvhscan", description="DBSCAN and friends-of-friends clustering on a linear BVH.")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", metavar="PATH", help="point file to cluster")
    src.add_argument(
        "--generate",
        metavar="SPEC",
        help="synthetic points, e.g. uniform:n=10000,d=3 or gaussian:n=10000,d=3,k=20,sigma=0.01",
    )
    p.add_argument("--format", choices=datasets.FORMATS, default="csv", help="input file format")
    p.add_argument("--algo", choices=ALGORITHMS, default="fdbscan", help="clustering algorithm (default fdbscan)")
    e = p.add_mutually_exclusive_group(required=True)
    e.add_argument("--eps", type=float, help="neighbourhood radius")
    e.add_argument("--derive-eps", type=_triple, metavar="b,V,n", help="eps = b * (V/n)^(1/3)")
    p.add_argument("--minpts", type=int, default=2, help="core threshold, self included (default 2)")
    p.add_argument("--code-width", type=int, choices=WIDTHS, default=64, help="Morton code bits (default 64)")
    p.add_argument("--verify", action="store_true", help=f"compare against the sequential reference (n <= {ORACLE_CEILING})")
    p.add_argument("--sequential", action="store_true", help="disable threading for reproducible runs")
    p.add_argument("--labels-out", metavar="PATH", help="write one label per line, -1 for noise")
    p.add_argument("--report-out", metavar="PATH", help="write the key=value run report")
    p.add_argument("--morton-report", action="store_true", help="print duplicate Morton code statistics")
    p.add_argument("--seed", type=int, help="generator seed")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    source = args.input
    if args.generate is not None:
        try:
            source = datasets.parse_spec(args.generate)
        except datasets.SpecError as exc:
            raise UsageError(str(exc)) from None
    return RunConfig(
        source=source,
        algorithm=args.algo,
        eps=args.eps,
        derive_eps=args.derive_eps,
        min_pts=args.minpts,
        code_width=args.code_width,
        fmt=args.format,
        verify=args.verify,
        parallel=not args.sequential,
        seed=args.seed,
        labels_out=args.labels_out,
        report_out=args.report_out,
        morton_report=args.morton_report,
    )


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(config_from_args(args))
    except UsageError as exc:
        print(f"lbvhscan: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (datasets.LoadError, OSError) as exc:
        print(f"lbvhscan: {exc}", file=sys.stderr)
        return EXIT_IO
    except VerificationError as exc:
        print(f"lbvhscan: verification failed: {exc}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
