"""Command line entry point.

Subcommands:

* train       one training run; writes runs.csv, finals.csv and the fully
              resolved config (config.txt) to the output directory.
* sweep       LR or init sweep over (scheme, width, density) x grid x seeds;
              writes runs.csv, finals.csv, optima.csv and config.txt.
* coordcheck  coordinate check (default), init-scaling table or delta-y
              probe, chosen by experiment.kind; writes one diagnostics CSV.
* oracle      Monte-Carlo moment oracle suite; writes oracle.csv and exits
              nonzero if any comparison misses its tolerance.
* scale       iso-parameter / iso-WPN width calculator; prints the width.
* dst         training (or LR sweep) with dynamic sparsity enabled.

Shared flags: --config FILE, --out DIR, --seed N, --override key=value
(repeatable, dot-path keys). Output directory precedence: --out flag, then
the SUPARLAB_OUT environment variable, then the out.dir config key. Results
are only written after a command finishes, so a bad config or a crashed run
never leaves a partial CSV behind.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

from .config import dump_config, load_config
from .errors import SuparlabError
from .masks import iso_parameter_width, iso_wpn_width

OUT_ENV_VAR = "SUPARLAB_OUT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="suparlab",
        description="sparsity-aware parameterization laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="FILE", default=None,
                       help="config file (flat key = value lines)")
        p.add_argument("--out", metavar="DIR", default=None,
                       help=f"output directory (default: ${OUT_ENV_VAR} or out.dir)")
        p.add_argument("--seed", type=int, default=None, metavar="N",
                       help="base seed; rebases train.seed, train.seeds and oracle.seed")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, repeatable")
        p.add_argument("--quiet", action="store_true",
                       help="suppress per-run progress lines")

    common(sub.add_parser("train", help="single training run"))
    common(sub.add_parser("sweep", help="LR or init sweep with optimum rows"))
    common(sub.add_parser("coordcheck",
                          help="coordinate check / init scaling / delta-y probe"))
    common(sub.add_parser("oracle", help="Monte-Carlo moment oracle suite"))

    scale = sub.add_parser("scale", help="matched-scale width calculator")
    scale.add_argument("--regime", required=True,
                       choices=["iso-wpn", "iso-parameter"])
    scale.add_argument("--base-width", type=int, default=256)
    scale.add_argument("--base-density", type=float, default=1.0)
    scale.add_argument("--density", type=float, required=True,
                       help="target density the width is solved for")
    scale.add_argument("--head-size", type=int, default=64,
                       help="width is rounded to a multiple of this")

    dst = sub.add_parser("dst", help="train (or sweep) with dynamic sparsity")
    common(dst)
    dst.add_argument("--method", choices=["rigl", "gmp"], default=None,
                     help="shorthand for --override dst.method=...")

    return parser


def _resolve_config(args) -> dict:
    cfg = load_config(args.config, args.override)
    if args.seed is not None:
        cfg["train.seed"] = args.seed
        cfg["train.seeds"] = [args.seed + i
                              for i in range(len(cfg["train.seeds"]))]
        cfg["oracle.seed"] = args.seed
    return cfg


def _out_dir(args, cfg: dict) -> Path:
    if args.out is not None:
        out = args.out
    elif os.environ.get(OUT_ENV_VAR):
        out = os.environ[OUT_ENV_VAR]
    else:
        out = cfg["out.dir"]
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _progress(quiet: bool):
    if quiet:
        return None

    def show(rec):
        flag = " DIVERGED" if rec.diverged else ""
        print(f"  {rec.scheme:>22s} d={rec.width:<5d} rho={rec.density:<8g} "
              f"lr={rec.lr:.6g} seed={rec.seed} steps={rec.steps_run} "
              f"val={rec.val_loss:.4f}{flag}", flush=True)
    return show


def cmd_train(args) -> int:
    from .harness import train_single, write_finals_csv, write_runs_csv

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    t0 = time.time()
    rec = train_single(cfg)
    write_runs_csv(out / "runs.csv", [rec], log_every=cfg["train.log_every"])
    write_finals_csv(out / "finals.csv", [rec])
    (out / "config.txt").write_text(dump_config(rec.config))
    flag = " DIVERGED" if rec.diverged else ""
    print(f"{rec.scheme} d={rec.width} rho={rec.density:g}: "
          f"{rec.steps_run} steps, final={rec.final_loss:.4f} "
          f"val={rec.val_loss:.4f}{flag} ({time.time() - t0:.1f}s)")
    print(f"wrote {out / 'runs.csv'}, {out / 'finals.csv'}")
    return 0


def _run_sweep_command(args, kind: str | None = None) -> int:
    from .harness import (run_sweep, write_finals_csv, write_optima_csv,
                          write_runs_csv)

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    result = run_sweep(cfg, kind=kind, progress=_progress(args.quiet))
    write_runs_csv(out / "runs.csv", result.records,
                   log_every=cfg["train.log_every"])
    write_finals_csv(out / "finals.csv", result.records)
    write_optima_csv(out / "optima.csv", result.optima)
    (out / "config.txt").write_text(dump_config(cfg))
    print(f"{len(result.records)} runs -> {out / 'finals.csv'}")
    for row in result.optima:
        print(f"optimum {row['scheme']:>22s} d={row['width']:<5d} "
              f"rho={row['density']:<8g} {row['grid']}={row['best_value']:.6g} "
              f"metric={row['best_metric']:.4f}")
    return 0


def cmd_sweep(args) -> int:
    return _run_sweep_command(args)


def cmd_coordcheck(args) -> int:
    from .diagnostics import (CoordCheckPlan, coord_check, delta_y_probe,
                              init_scaling_table, write_diag_csv)
    from .harness import base_from_config

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    kind = cfg["experiment.kind"]
    if kind not in ("coord-check", "init-scaling", "delta-y-probe"):
        kind = "coord-check"
    probe = kind == "delta-y-probe"
    plan = CoordCheckPlan(
        schemes=tuple(str(s) for s in cfg["sweep.schemes"]),
        widths=tuple(int(w) for w in
                     (cfg["probe.widths"] if probe else cfg["coordcheck.widths"])),
        densities=tuple(float(r) for r in
                        (cfg["probe.densities"] if probe
                         else cfg["coordcheck.densities"])),
        seeds=cfg["probe.seeds"] if probe else cfg["coordcheck.seeds"],
        steps=cfg["probe.steps"] if probe else cfg["coordcheck.steps"],
        n_layers=cfg["model.n_layers"], d_head=cfg["model.d_head"],
        batch_size=cfg["train.batch_size"], seq_len=cfg["model.seq_len"],
        dtype=cfg["model.dtype"], data_seed=cfg["data.seed"],
        corpus=cfg["data.corpus"], base=base_from_config(cfg))

    progress = None
    if not args.quiet:
        def progress(scheme, width, rho, seed, ok):
            mark = "ok" if ok else "DIVERGED"
            print(f"  {scheme:>22s} d={width:<5d} rho={rho:<8g} "
                  f"seed={seed} {mark}", flush=True)

    if kind == "coord-check":
        report = coord_check(plan, progress=progress)
        name = "coordcheck.csv"
        rows = report.rows
        for scheme in plan.schemes:
            ratio = report.flatness.get(scheme, float("nan"))
            print(f"flatness {scheme:>22s}: {ratio:.3f}")
        if report.diverged:
            print(f"{len(report.diverged)} diverged cells (excluded)")
    elif kind == "init-scaling":
        rows = init_scaling_table(plan, progress=progress)
        name = "init_scaling.csv"
    else:
        rows = delta_y_probe(plan, progress=progress)
        name = "delta_y.csv"
    write_diag_csv(out / name, rows)
    print(f"{len(rows)} rows -> {out / name}")
    return 0


def cmd_oracle(args) -> int:
    from .oracles import run_oracle_suite, write_oracle_csv

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    rows = run_oracle_suite(samples=cfg["oracle.samples"],
                            seed=cfg["oracle.seed"],
                            eta_base=cfg["base.eta"],
                            d_base=cfg["base.d_base"],
                            rho_base=cfg["base.rho_base"])
    write_oracle_csv(out / "oracle.csv", rows)
    failed = [r for r in rows if not r["pass"]]
    if not args.quiet:
        for r in rows:
            mark = "pass" if r["pass"] else "FAIL"
            print(f"  {r['quantity']:>12s} {r['grid_point']:<28s} "
                  f"analytic={r['analytic']:.6g} mc={r['mc_mean']:.6g} "
                  f"se={r['mc_se']:.2g} {mark}")
    print(f"{len(rows)} comparisons, {len(failed)} failed -> {out / 'oracle.csv'}")
    if failed:
        print("oracle suite FAILED", file=sys.stderr)
        return 1
    return 0


def cmd_scale(args) -> int:
    pick = iso_wpn_width if args.regime == "iso-wpn" else iso_parameter_width
    width = pick(args.base_width, args.base_density, args.density,
                 args.head_size)
    print(width)
    return 0


def cmd_dst(args) -> int:
    if args.method is not None:
        args.override = list(args.override) + [f"dst.method={args.method}"]
    cfg = load_config(args.config, args.override)
    if cfg["experiment.kind"] == "dst-lr-sweep":
        return _run_sweep_command(args, kind="dst-lr-sweep")

    from .harness import train_single, write_finals_csv, write_runs_csv

    cfg = _resolve_config(args)
    out = _out_dir(args, cfg)
    rec = train_single(cfg, kind="dst-train")
    write_runs_csv(out / "runs.csv", [rec], log_every=cfg["train.log_every"])
    write_finals_csv(out / "finals.csv", [rec])
    (out / "config.txt").write_text(dump_config(rec.config))
    flag = " DIVERGED" if rec.diverged else ""
    print(f"dst[{cfg['dst.method']}] {rec.scheme} d={rec.width} "
          f"rho={rec.density:g}: {rec.steps_run} steps, "
          f"final={rec.final_loss:.4f} val={rec.val_loss:.4f}{flag}")
    print(f"wrote {out / 'runs.csv'}, {out / 'finals.csv'}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "sweep": cmd_sweep,
    "coordcheck": cmd_coordcheck,
    "oracle": cmd_oracle,
    "scale": cmd_scale,
    "dst": cmd_dst,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SuparlabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
