"""Command-line entry point: ``hsr <command> [options]``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import logging
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io as hio
from ._blocks import BlockError, BlockGrid
from .degradation import DegradationSet, Sensor, add_noise, degrade, make_degradation
from .fusion_cp import StereoConfig, coupled_cp_cost, hybrid, scuba, stereo, tenrec
from .fusion_tucker import CoreSystem, ScottConfig, blind_scott, bscott, scott
from .linalg import SingularOperator
from .metrics import MetricsReport, evaluate, stopwatch
from .recoverability import classify_generic, region_map
from .synth import ScenarioName, build_sri, builtin_scenario, default_signatures, read_scenario, read_signatures
from .tensor_core import unfold

log = logging.getLogger("coupled_hsr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

TUCKER_METHODS = ("scott", "bscott", "blindscott")
CP_METHODS = ("tenrec", "stereo", "hybrid", "scuba")
SWEEP_COLUMNS = ("R1", "R2", "R3", "F", "region", "r_snr", "cc", "sam", "ergas", "cond", "f_t", "time_s", "status")


class UsageError(Exception):
    pass


def _ranks(text: str) -> tuple[int, int, int]:
    try:
        r = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ranks must look like R1,R2,R3, got {text!r}") from None
    if len(r) != 3:
        raise argparse.ArgumentTypeError(f"ranks must have three entries, got {text!r}")
    return r


def _int_range(text: str) -> list[int]:
    """``"a:b"`` (inclusive), ``"a:b:s"`` or a comma list."""
    try:
        if ":" in text:
            parts = [int(x) for x in text.split(":")]
            step = parts[2] if len(parts) == 3 else 1
            return list(range(parts[0], parts[1] + 1, step))
        return [int(x) for x in text.split(",")]
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"bad integer range {text!r}") from None


def _dims(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad dimensions {text!r}") from None


def _snr(text: str) -> float:
    return math.inf if text.lower() in ("inf", "none") else float(text)


# --------------------------------------------------------------------------- data


def _add_degradation_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("degradation")
    g.add_argument("--sensor", default="LANDSAT", type=str.upper, choices=[s.value for s in Sensor])
    g.add_argument("--k-m", type=int, help="MSI band count for the CUSTOM sensor")
    g.add_argument("--d", type=int, default=4, help="spatial downsampling ratio")
    g.add_argument("--q", type=int, default=9, help="blur kernel size (odd)")
    g.add_argument("--sigma-blur", type=float, default=2.0)
    g.add_argument("--snr-hsi", type=_snr, default=math.inf, help="dB, 'inf' for noiseless")
    g.add_argument("--snr-msi", type=_snr, default=math.inf, help="dB, 'inf' for noiseless")
    g.add_argument("--seed", type=int, default=0)


def _add_source_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("reference SRI (one of)")
    g.add_argument("--sri", type=Path, help="cube file")
    g.add_argument("--scenario", type=str.upper, choices=[s.value for s in ScenarioName])
    g.add_argument("--scenario-file", type=Path, help="key-value scenario file")
    g.add_argument("--signatures", type=Path, help="signature CSV, one material per column")
    g.add_argument("--bands", type=int, default=200, help="band count of built-in signatures")


def _load_sri(args) -> np.ndarray:
    given = [x is not None for x in (args.sri, args.scenario, args.scenario_file)]
    if sum(given) != 1:
        raise UsageError("give exactly one of --sri, --scenario, --scenario-file")
    if args.sri is not None:
        return hio.read_cube(args.sri)
    sc = builtin_scenario(args.scenario) if args.scenario else read_scenario(args.scenario_file)
    bank = read_signatures(args.signatures) if args.signatures else default_signatures(sc.pmap.n_materials, args.bands)
    return build_sri(sc.pmap, bank, sc.block, sc.sigma)


def _make_deg(args, shape) -> DegradationSet:
    return make_degradation(shape, d=args.d, q=args.q, sigma_blur=args.sigma_blur, sensor=args.sensor, k_m=args.k_m)


def _noisy_pair(sri, deg, snr_hsi, snr_msi, seed_seq: np.random.SeedSequence):
    hsi, msi = degrade(sri, deg)
    s_h, s_m = seed_seq.spawn(2)
    return add_noise(hsi, snr_hsi, np.random.default_rng(s_h)), add_noise(msi, snr_msi, np.random.default_rng(s_m))


# --------------------------------------------------------------------------- fusion


@dataclass
class FuseOutcome:
    sri_hat: np.ndarray
    cond: float = math.nan
    f_t: float = math.nan
    singular: bool = False


def _check_method_flags(method: str, ranks, cprank, r3) -> None:
    if method in CP_METHODS:
        if ranks is not None:
            raise UsageError(f"method {method} is CP-based: use --cprank F, not --ranks")
        if cprank is None:
            raise UsageError(f"method {method} needs --cprank F")
        if method in ("hybrid", "scuba") and r3 is None:
            raise UsageError(f"method {method} needs --r3")
    else:
        if cprank is not None:
            raise UsageError(f"method {method} is Tucker-based: use --ranks R1,R2,R3, not --cprank")
        if ranks is None:
            raise UsageError(f"method {method} needs --ranks R1,R2,R3")


def run_method(method, hsi, msi, deg: DegradationSet, ranks=None, cprank=None, r3=None, lam=1.0,
               blocks: BlockGrid | None = None, on_singular="raise", max_iters=25) -> FuseOutcome:
    """Dispatch one fusion call."""
    blocks = blocks or BlockGrid()
    if method == "scott":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = scott(hsi, msi, deg, ScottConfig(ranks, lam, on_singular))
        m = res.model
        f_t = CoreSystem(hsi, msi, deg, m.u, m.v, m.w, lam).cost(m.core)
        return FuseOutcome(res.sri_hat, res.report.cond, f_t, res.singular)
    if method == "blindscott":
        return FuseOutcome(blind_scott(hsi, msi, deg.pm, ranks))
    if method == "bscott":
        return FuseOutcome(bscott(hsi, msi, deg.pm, ranks, blocks))
    if method == "tenrec":
        model, est = tenrec(hsi, msi, deg, cprank)
        return FuseOutcome(est, f_t=coupled_cp_cost(hsi, msi, deg, model, lam))
    if method == "stereo":
        res = stereo(hsi, msi, deg, StereoConfig(cprank, lam, max_iters))
        return FuseOutcome(res.sri_hat, f_t=res.costs[-1], singular=res.singular_updates > 0)
    if method == "hybrid":
        return FuseOutcome(hybrid(hsi, msi, deg.pm, cprank, r3))
    if method == "scuba":
        return FuseOutcome(scuba(hsi, msi, deg.pm, cprank, r3, blocks))
    raise UsageError(f"unknown method {method!r}")


# --------------------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    sri = _load_sri(args)
    hio.write_cube(args.out, sri)
    log.info("wrote %s with shape %s", args.out, sri.shape)
    return EXIT_OK


def cmd_degrade(args) -> int:
    sri = _load_sri(args)
    deg = _make_deg(args, sri.shape)
    hsi, msi = _noisy_pair(sri, deg, args.snr_hsi, args.snr_msi, np.random.SeedSequence(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hio.write_cube(out / "hsi.hsrc", hsi)
    hio.write_cube(out / "msi.hsrc", msi)
    hio.write_degradation(out / "deg.hsrd", deg)
    if args.write_ref:
        hio.write_cube(out / "sri.hsrc", sri)
    log.info("wrote HSI %s, MSI %s to %s", hsi.shape, msi.shape, out)
    return EXIT_OK


def _write_rows(path, header, rows) -> None:
    fh = open(path, "w", newline="") if path and str(path) != "-" else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _params_label(method, ranks, cprank, r3) -> str:
    if method in CP_METHODS:
        return f"F={cprank}" + (f";R3={r3}" if r3 else "")
    return "R=" + ",".join(map(str, ranks))


def cmd_fuse(args) -> int:
    _check_method_flags(args.method, args.ranks, args.cprank, args.r3)
    hsi, msi = hio.read_cube(args.hsi), hio.read_cube(args.msi)
    deg = hio.read_degradation(args.deg)
    with stopwatch() as t:
        res = run_method(args.method, hsi, msi, deg, args.ranks, args.cprank, args.r3, args.lam,
                         BlockGrid.parse(args.blocks), "min_norm" if args.allow_singular else "raise")
    if res.singular:
        log.warning("singular system: minimum-norm solution returned")
    hio.write_cube(args.out, res.sri_hat)
    if args.ref is not None:
        rep = evaluate(hio.read_cube(args.ref), res.sri_hat, deg.params.get("d", args.d), t[0])
        _write_rows(args.metrics_out, MetricsReport.CSV_HEADER,
                    [rep.csv_row(args.method, _params_label(args.method, args.ranks, args.cprank, args.r3))])
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref, est = hio.read_cube(args.ref), hio.read_cube(args.est)
    rep = evaluate(ref, est, args.d)
    _write_rows(args.out, MetricsReport.CSV_HEADER, [rep.csv_row(args.method, args.params)])
    return EXIT_OK


def _fmt(x) -> str:
    if isinstance(x, float):
        return "" if math.isnan(x) else f"{x:.10g}"
    return str(x)


def sweep_rows(sri, deg, method, grid, snr_hsi, snr_msi, seed, lam=1.0, r3=None, blocks=None,
               timing=True, workers=1, max_iters=25) -> list[list[str]]:
    """One CSV row per grid point; ``grid`` holds ``(R1, R2, R3)`` or ``(F,)`` tuples."""
    i_h, j_h = deg.hsi_shape

    def point(coords):
        ss = np.random.SeedSequence(seed, spawn_key=tuple(int(c) for c in coords))
        if len(coords) == 3:
            ranks, f = coords, None
            region = classify_generic(sri.shape, (i_h, j_h), deg.k_m, ranks).value
        else:
            ranks, f = None, coords[0]
            region = ""
        head = [*(ranks or ("", "", "")), f if f is not None else "", region]
        hsi, msi = _noisy_pair(sri, deg, snr_hsi, snr_msi, ss)
        try:
            with stopwatch() as t, warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = run_method(method, hsi, msi, deg, ranks, f, r3, lam, blocks, "min_norm", max_iters)
            rep = evaluate(sri, res.sri_hat, deg.params.get("d", 1), t[0])
        except (ValueError, BlockError, np.linalg.LinAlgError) as exc:
            log.warning("skipped %s: %s", coords, exc)
            return [*map(_fmt, head), "", "", "", "", "", "", "", f"skipped: {exc}"]
        status = "min_norm" if res.singular else "ok"
        vals = (rep.r_snr, rep.cc, rep.sam, rep.ergas, res.cond, res.f_t, rep.wall_time if timing else math.nan)
        return [*map(_fmt, head), *map(_fmt, vals), status]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, grid))
    return [point(c) for c in grid]


def cmd_sweep(args) -> int:
    sri = _load_sri(args)
    deg = _make_deg(args, sri.shape)
    if args.method in CP_METHODS:
        if args.r1 is not None or args.r3_range is not None:
            raise UsageError("CP methods sweep --f, not --r1/--r3-range")
        if args.f is None:
            raise UsageError("CP sweep needs --f")
        if args.method in ("hybrid", "scuba") and args.r3 is None:
            raise UsageError(f"method {args.method} needs --r3")
        grid = [(f,) for f in args.f]
    else:
        if args.f is not None:
            raise UsageError("Tucker methods sweep --r1/--r2/--r3-range, not --f")
        if args.r1 is None or args.r3_range is None:
            raise UsageError("Tucker sweep needs --r1 and --r3-range")
        r2s = args.r2 if args.r2 is not None else [None]
        grid = [(r1, r1 if r2 is None else r2, r3) for r1 in args.r1 for r2 in r2s for r3 in args.r3_range]
    if not grid:
        raise UsageError("empty sweep grid")
    rows = sweep_rows(sri, deg, args.method, grid, args.snr_hsi, args.snr_msi, args.seed, args.lam, args.r3,
                      BlockGrid.parse(args.blocks), not args.no_time, args.workers, args.max_iters)
    _write_rows(args.out, SWEEP_COLUMNS, rows)
    return EXIT_OK


def svd_profile(hsi, msi, top: int) -> list[list[str]]:
    """Rows ``(index, sigma of MSI unfolding 1, MSI unfolding 2, HSI unfolding 3)``."""
    cols = []
    for t, n in ((msi, 1), (msi, 2), (hsi, 3)):
        s = np.linalg.svd(unfold(t, n), compute_uv=False)
        cols.append(np.pad(s[:top], (0, max(0, top - s.size))))
    return [[str(i + 1), *(f"{c[i]:.17g}" for c in cols)] for i in range(top)]


def cmd_svd_profile(args) -> int:
    if args.hsi is not None or args.msi is not None:
        if args.hsi is None or args.msi is None:
            raise UsageError("give both --hsi and --msi")
        hsi, msi = hio.read_cube(args.hsi), hio.read_cube(args.msi)
    else:
        sri = _load_sri(args)
        deg = _make_deg(args, sri.shape)
        hsi, msi = _noisy_pair(sri, deg, args.snr_hsi, args.snr_msi, np.random.SeedSequence(args.seed))
    _write_rows(args.out, ("index", "msi_unfold1", "msi_unfold2", "hsi_unfold3"), svd_profile(hsi, msi, args.top))
    return EXIT_OK


def cmd_region_map(args) -> int:
    if len(args.dims) != 3 or len(args.hsi_dims) != 2:
        raise UsageError("--dims needs I,J,K and --hsi-dims needs I_H,J_H")
    rows = region_map(args.dims, args.hsi_dims, args.k_m, args.r1, args.r3_range)
    _write_rows(args.out, ("R1", "R2", "R3", "region"), [[r1, r1, r3, lab.value] for r1, r3, lab in rows])
    return EXIT_OK


def cmd_ingest(args) -> int:
    cube = hio.ingest(args.src, args.dims, args.dtype, args.interleave)
    hio.write_cube(args.out, cube)
    log.info("wrote %s with shape %s", args.out, cube.shape)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsr", description="Coupled tensor hyperspectral super-resolution")
    p.add_argument("--config", type=Path, help="INI file; keys of a section named after the command are defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="build a synthetic SRI")
    _add_source_flags(s)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("degrade", help="degrade an SRI into an HSI/MSI pair")
    _add_source_flags(s)
    _add_degradation_flags(s)
    s.add_argument("--out", type=Path, required=True, help="output directory")
    s.add_argument("--write-ref", action="store_true", help="also write the reference SRI")
    s.set_defaults(func=cmd_degrade)

    s = sub.add_parser("fuse", help="fuse an HSI/MSI pair")
    s.add_argument("--hsi", type=Path, required=True)
    s.add_argument("--msi", type=Path, required=True)
    s.add_argument("--deg", type=Path, required=True)
    s.add_argument("--method", choices=TUCKER_METHODS + CP_METHODS, required=True)
    s.add_argument("--ranks", type=_ranks)
    s.add_argument("--cprank", type=int)
    s.add_argument("--r3", type=int, help="spectral rank for hybrid/scuba")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--blocks", default="1x1")
    s.add_argument("--allow-singular", action="store_true", help="return the minimum-norm SCOTT core instead of failing")
    s.add_argument("--ref", type=Path, help="reference SRI for a metrics row")
    s.add_argument("--metrics-out", default="-")
    s.add_argument("--d", type=int, default=4, help="ratio for ERGAS when the degradation file lacks it")
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("metrics", help="compare an estimate with a reference")
    s.add_argument("--ref", type=Path, required=True)
    s.add_argument("--est", type=Path, required=True)
    s.add_argument("--d", type=int, default=4)
    s.add_argument("--method", default="")
    s.add_argument("--params", default="")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("sweep", help="rank sweep to CSV")
    _add_source_flags(s)
    _add_degradation_flags(s)
    s.add_argument("--method", choices=TUCKER_METHODS + CP_METHODS, default="scott")
    s.add_argument("--r1", type=_int_range, help="R1 values (R2 = R1 unless --r2)")
    s.add_argument("--r2", type=_int_range)
    s.add_argument("--r3-range", type=_int_range)
    s.add_argument("--f", type=_int_range, help="CP ranks")
    s.add_argument("--r3", type=int, help="spectral rank for hybrid/scuba")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--blocks", default="1x1")
    s.add_argument("--max-iters", type=int, default=25, help="STEREO iterations")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--no-time", action="store_true", help="leave time_s empty so reruns are byte-identical")
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("svd-profile", help="leading singular values of the data unfoldings")
    s.add_argument("--hsi", type=Path)
    s.add_argument("--msi", type=Path)
    _add_source_flags(s)
    _add_degradation_flags(s)
    s.add_argument("--top", type=int, default=10)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_svd_profile)

    s = sub.add_parser("region-map", help="generic recoverability labels over an R1=R2 by R3 grid")
    s.add_argument("--dims", type=_dims, required=True)
    s.add_argument("--hsi-dims", type=_dims, required=True)
    s.add_argument("--k-m", type=int, required=True)
    s.add_argument("--r1", type=_int_range, required=True)
    s.add_argument("--r3-range", type=_int_range, required=True)
    s.add_argument("--out", default="-")
    s.set_defaults(func=cmd_region_map)

    s = sub.add_parser("ingest", help="convert a flat binary or CSV band stack to a cube file")
    s.add_argument("--src", type=Path, required=True)
    s.add_argument("--dims", type=_dims)
    s.add_argument("--dtype", default="<f4")
    s.add_argument("--interleave", default="bsq", choices=("bsq", "bil", "bip"))
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_ingest)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cp = configparser.ConfigParser()
    if not cp.read(args.config):
        raise UsageError(f"cannot read config {args.config}")
    if not cp.has_section(args.command):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cp.items(args.command):
        dest = key.replace("-", "_")
        dest = "lam" if dest == "lambda" else dest
        if dest not in known:
            raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[dest] = cp.getboolean(args.command, key)
        elif action.type is not None:
            defaults[dest] = action.type(raw)
        else:
            defaults[dest] = raw
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"hsr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hsr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularOperator as exc:
        print(f"hsr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError, BlockError) as exc:
        print(f"hsr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
