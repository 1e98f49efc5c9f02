"""Command-line entry point: ``gsr-fns <command> [options]``.

Exit codes: 0 success, 2 usage or rejected parameters, 3 data validation
error, 4 MCMC convergence failure. ``GSR_FNS_THREADS`` caps worker threads;
it never changes results.
"""

from __future__ import annotations

import argparse
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__, _random
from .fns import CURVE_COLUMNS, CountDistribution, fns_curve, validate_multiresolution
from .grid_model import GridSpec, Offset, Particle, register
from .inference import (
    DataError,
    ObservedDataset,
    fit,
    fit_table,
    goodness_of_fit,
    read_posterior,
    write_posterior,
)
from .likelihood import build_table, mean_curve, read_table, write_table
from .sizedist import LogTParams

log = logging.getLogger("gsr_fns")

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CONVERGENCE = 4

CASEWORK_PARAMS = (1.53, 1.17, 76.0)


class ConvergenceFailure(RuntimeError):
    pass


def _metadata(args, argv) -> list[str]:
    lines = [f"tool = gsr-fns {__version__}", f"command = gsr-fns {shlex.join(argv)}"]
    if getattr(args, "seed", None) is not None:
        lines.append(f"seed = {args.seed}")
    return lines


def _num(x) -> str:
    return repr(float(x))


def _out(args, name) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    log.info("wrote %s", path)


def _float_list(text: str) -> list[float]:
    """``0.04,0.09`` or ``start:stop:count`` (inclusive linear range)."""
    if ":" in text:
        start, stop, count = text.split(":")
        return list(np.linspace(float(start), float(stop), int(count)))
    return [float(x) for x in text.split(",") if x.strip()]


def _seeded(args):
    if args.seed is None:
        args.seed = _random.fresh_seed()
        log.info("no --seed given; using %d", args.seed)


def cmd_build_likelihood(args, argv):
    _seeded(args)
    table = build_table(GridSpec(args.px), args.a_max, args.a_steps, args.offsets_per_a, args.seed,
                        args.scheme)
    meta = _metadata(args, argv)
    path = _out(args, "likelihood_table.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        write_table(table, fh, meta)
    curve = mean_curve(table)
    lines = [f"# {m}" for m in meta] + ["a_px,mean_b_px,mean_b_over_a"]
    lines += [",".join(map(_num, row)) for row in zip(curve.a_values, curve.mean_b, curve.mean_b_over_a)]
    _write(_out(args, "mean_curve.csv"), "\n".join(lines) + "\n")
    if args.plot:
        from . import plots

        plots.mean_curve_svg(curve, _out(args, "mean_curve.svg"))
        plots.likelihood_svg(table, _out(args, "likelihood.svg"))
    return 0


def _load_dataset(path) -> tuple[ObservedDataset, CountDistribution | None, list[str]]:
    from .ingest import load

    result = load(path)
    return result.dataset, result.counts, result.report.lines()


def cmd_fit(args, argv):
    _seeded(args)
    data, _, report = _load_dataset(args.data)
    for line in report:
        log.info("ingest: %s", line)
    table = fit_table(data.pixel_area, int(data.b_pixels.max()), args.offsets_per_a, args.seed)
    draws = fit(data, table, args.chains, args.iterations, args.warmup, args.seed,
                truncated=not args.untruncated)
    meta = _metadata(args, argv)
    with open(_out(args, "posterior.csv"), "w", encoding="utf-8", newline="") as fh:
        write_posterior(draws, fh, meta)
    summary = goodness_of_fit(draws, data, table)
    text = "".join(f"# {m}\n" for m in meta) + summary.as_text()
    text += f"converged = {draws.converged}\n"
    text += f"pixel_area = {_num(data.pixel_area)}\n"
    text += "".join(f"acceptance_chain{k} = {_num(a)}\n" for k, a in enumerate(draws.acceptance))
    _write(_out(args, "summary.txt"), text)
    hist = [f"# {m}" for m in meta] + ["b_lo_px,b_hi_px,observed,predicted"]
    e = summary.bin_edges
    hist += [",".join(map(_num, (e[k], e[k + 1], summary.observed[k], summary.predicted[k])))
             for k in range(e.size - 1)]
    _write(_out(args, "fit_histogram.csv"), "\n".join(hist) + "\n")
    if args.plot:
        from . import plots

        plots.fit_svg(summary, data.pixel_area, _out(args, "fit.svg"))
    if not draws.converged:
        raise ConvergenceFailure(
            "chains did not converge: "
            + ", ".join(f"rhat[{k}]={v:.3f}" for k, v in draws.rhat.items())
            + "; rerun with more --iterations/--warmup"
        )
    return 0


def _counts_from_args(args) -> CountDistribution:
    if args.counts:
        return CountDistribution.parse(args.counts)
    if args.data:
        _, counts, _ = _load_dataset(args.data)
        if counts is None:
            raise DataError("data file has no characteristic particles to derive P(n) from")
        return counts
    raise DataError("need --counts or --data to define the per-sample particle count law")


def cmd_fns(args, argv):
    if args.posterior:
        with open(args.posterior, encoding="utf-8") as fh:
            draws = read_posterior(fh)
    else:
        mu, sigma, nu = (float(x) for x in args.params.split(","))
        draws = LogTParams(mu, sigma, nu)
    counts = _counts_from_args(args)
    if args.table:
        with open(args.table, encoding="utf-8") as fh:
            table = read_table(fh)
    else:
        _seeded(args)
        table = build_table(GridSpec(1.0), args.a_max, args.a_steps, args.offsets_per_a, args.seed)
    curve = fns_curve(draws, counts, _float_list(args.px), table)
    lines = [f"# {m}" for m in _metadata(args, argv)] + [",".join(CURVE_COLUMNS)]
    lines += [",".join(map(_num, row)) for row in curve.rows()]
    _write(_out(args, "fns_curve.csv"), "\n".join(lines) + "\n")
    if args.plot:
        from . import plots

        plots.fns_svg(curve, _out(args, "fns_curve.svg"))
    return 0


def cmd_validate(args, argv):
    from .ingest import load

    _seeded(args)
    base = load(args.base).dataset
    observed = {}
    for path in args.observed or ():
        for px, ds in load(path, allow_mixed_pixels=True).datasets.items():
            observed[px] = ds.b_area
    targets = _float_list(args.targets)
    results = validate_multiresolution(base.b_area, base.pixel_area, targets, args.seed, observed,
                                       args.bins)
    meta = _metadata(args, argv)
    summary = [f"# {m}" for m in meta] + [f"base_pixel_area = {_num(base.pixel_area)}",
                                          f"base_particles = {len(base)}"]
    for r in results:
        tag = f"{r.px_target:g}"
        rows = [f"# {m}" for m in meta] + ["b_lo_px,b_hi_px,b_lo_um2,b_hi_um2,predicted,observed"]
        for k in range(r.bin_edges.size - 1):
            lo, hi = r.bin_edges[k], r.bin_edges[k + 1]
            obs = "" if r.observed is None else _num(r.observed[k])
            rows.append(f"{lo},{hi},{_num(lo * r.px_target)},{_num(hi * r.px_target)},{_num(r.predicted[k])},{obs}")
        _write(_out(args, f"validation_px{tag}.csv"), "\n".join(rows) + "\n")
        summary.append(f"px_{tag}_undetected = {int((r.b_hat == 0).sum())}")
        if r.chi2 is not None:
            summary.append(f"px_{tag}_chi2 = {_num(r.chi2)}")
            summary.append(f"px_{tag}_dof = {r.dof}")
        if args.plot:
            from . import plots

            plots.validation_svg(r, _out(args, f"validation_px{tag}.svg"))
    _write(_out(args, "validation_summary.txt"), "\n".join(summary) + "\n")
    return 0


def cmd_simulate(args, argv):
    from .ingest import generate_synthetic

    _seeded(args)
    params = LogTParams(args.mu, args.sigma, args.nu)
    counts = CountDistribution.parse(args.counts)
    export = generate_synthetic(params, counts, args.n_samples, args.px, args.seed)
    meta = _metadata(args, argv)
    _write(_out(args, "records.csv"), export.records_text(meta))
    _write(_out(args, "truth.csv"), export.sidecar_text(meta))
    return 0


def cmd_measure(args, argv):
    grid = GridSpec(args.px)
    reg = register(Particle(args.area), grid, Offset(args.u, args.v))
    print(f"covered_pixels = {reg.covered_pixels}")
    print(f"area_b_um2 = {_num(reg.area_b)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gsr-fns", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"gsr-fns {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out-dir", default=".", help="directory for output files")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="random seed (recorded in outputs)")
        sp.add_argument("--plot", action="store_true", help="also render SVG plots")

    def table_opts(sp, offsets=65536):
        sp.add_argument("--a-max", type=float, default=12.0, help="largest area, in pixels")
        sp.add_argument("--a-steps", type=int, default=600)
        sp.add_argument("--offsets-per-a", type=int, default=offsets)

    sp = sub.add_parser("build-likelihood", help="tabulate P(B | A) by offset simulation")
    sp.add_argument("--px", type=float, default=1.0, help="pixel area in um^2")
    sp.add_argument("--scheme", choices=("quasi-lattice", "pseudo-random"), default="quasi-lattice")
    table_opts(sp)
    common(sp)
    sp.set_defaults(func=cmd_build_likelihood)

    sp = sub.add_parser("fit", help="MCMC fit of the log-t size law")
    sp.add_argument("--data", required=True, help="particle record file")
    sp.add_argument("--chains", type=int, default=4)
    sp.add_argument("--iterations", type=int, default=2000)
    sp.add_argument("--warmup", type=int, default=1000)
    sp.add_argument("--offsets-per-a", type=int, default=4096)
    sp.add_argument("--untruncated", action="store_true", help="do not condition on detection")
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("fns", help="false-negative-sample probability versus pixel size")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--posterior", help="posterior.csv from the fit command")
    src.add_argument("--params", help="point parameters mu,sigma,nu")
    sp.add_argument("--counts", help="count law such as 1:0.5,2:0.3,3:0.2")
    sp.add_argument("--data", help="particle record file to take the count law from")
    sp.add_argument("--px", default="0.01:0.4:40", help="pixel areas: list or start:stop:count")
    sp.add_argument("--table", help="likelihood table from build-likelihood")
    table_opts(sp)
    common(sp)
    sp.set_defaults(func=cmd_fns)

    sp = sub.add_parser("validate", help="predict coarse-pixel registrations from fine measurements")
    sp.add_argument("--base", required=True, help="records measured at the finest pixel size")
    sp.add_argument("--targets", required=True, help="target pixel areas, e.g. 0.04,0.09")
    sp.add_argument("--observed", action="append", help="records measured at a target pixel size")
    sp.add_argument("--bins", type=int, default=30)
    common(sp)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("simulate", help="write a synthetic particle record file")
    sp.add_argument("--mu", type=float, default=CASEWORK_PARAMS[0])
    sp.add_argument("--sigma", type=float, default=CASEWORK_PARAMS[1])
    sp.add_argument("--nu", type=float, default=CASEWORK_PARAMS[2])
    sp.add_argument("--counts", default="1:0.5,2:0.25,3:0.125,4:0.125")
    sp.add_argument("--n-samples", type=int, default=320)
    sp.add_argument("--px", type=float, default=0.16)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("measure", help="register one particle at one grid position")
    sp.add_argument("--area", type=float, required=True, help="true area in um^2")
    sp.add_argument("--px", type=float, required=True, help="pixel area in um^2")
    sp.add_argument("--u", type=float, default=0.0, help="center x within the pixel, um")
    sp.add_argument("--v", type=float, default=0.0, help="center y within the pixel, um")
    sp.set_defaults(func=cmd_measure)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(message)s")
    try:
        return args.func(args, argv)
    except ConvergenceFailure as exc:
        print(f"gsr-fns: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (DataError, FileNotFoundError) as exc:
        print(f"gsr-fns: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"gsr-fns: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
