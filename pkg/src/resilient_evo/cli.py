"""Command line entry point: ``resilient-evo {run,batch,sweep,amplitude,oracle,chart}``.

Every option may also come from a flat JSON file given with ``--config``;
keys are the long option names (``change_at`` or ``change-at``). Options on
the command line win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from resilient_evo import chart, oracle
from resilient_evo.domain import FactoryLayout, apply_change
from resilient_evo.errors import BudgetExceeded, ConfigError
from resilient_evo.evolution import EngineConfig
from resilient_evo.experiments import (
    A_SWEEP,
    BEST_WAYCOST,
    BatchSpec,
    Variant,
    amplitude_analysis,
    default_workers,
    make_scenario,
    parse_variants,
    run_batch,
    run_scenario,
    sweep,
)

log = logging.getLogger("resilient_evo")

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_IO = 0, 2, 3, 4

ENGINE_DEFAULTS = {
    "population_size": 50,
    "generations": 100,
    "change_at": 50,
    "mutation_rate": 0.1,
    "crossover_rate": 0.3,
    "hypermutation_rate": 0.1,
    "lambda": None,
    "t": 16,
    "mode": "none",
    "metric": None,
    "A": 3,
    "n": 5,
    "m": 5,
    "width": 500,
    "height": 500,
    "offset": "2500,2500",
    "seed": 0,
}
COMMAND_DEFAULTS = {
    "run": {},
    "batch": {"runs": 1000, "variants": "none,dom,gen"},
    "sweep": {"runs": 100, "variants": None, "axis": None, "values": None},
    "amplitude": {"runs": 100, "variants": "none,dom,gen", "a_values": ",".join(map(str, A_SWEEP))},
    "oracle": {
        "epsilon": oracle.DEFAULT_EPSILON,
        "budget": oracle.DEFAULT_BUDGET,
        "layout": None,
        "layout2": None,
        "dump_table": None,
        "dump_layout": None,
    },
}
OUTPUT_DEFAULTS = {"out": ".", "chart": False, "workers": None, "level": 0.95, "resamples": 2000}


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# -- file output ----------------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    """Write ``text`` next to ``path`` first and rename it into place."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_all(files: dict[Path, str]) -> None:
    # everything is rendered before the first write, so a failed run leaves no files
    for path, text in files.items():
        write_atomic(path, text)
        log.info("wrote %s", path)


def safe_name(label: str) -> str:
    return label.replace(":", "-").replace("@", "_at_").replace("/", "_")


# -- argument handling ----------------------------------------------------------

def _engine_options(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("engine")
    S = argparse.SUPPRESS
    g.add_argument("--population-size", type=int, default=S, help="individuals per generation (default 50)")
    g.add_argument("--generations", type=int, default=S, help="generations per run (default 100)")
    g.add_argument("--change-at", type=int, default=S, help="generation at which F2 replaces F1 (default 50)")
    g.add_argument("--mutation-rate", type=float, default=S, help="mutation probability per individual (default 0.1)")
    g.add_argument("--crossover-rate", type=float, default=S, help="first-mate probability per individual (default 0.3)")
    g.add_argument("--hypermutation-rate", type=float, default=S,
                   help="probability per individual of injecting a fresh random individual (default 0.1)")
    g.add_argument("--lambda", type=float, default=S, dest="lambda",
                   help="weight of the similarity penalty (default: tuned value for --mode, 0 for none)")
    g.add_argument("--t", type=int, default=S, help="trash bits per genome for genealogical diversity (default 16)")
    g.add_argument("--mode", default=S, help="diversity objective: none, dom or gen (default none)")
    g.add_argument("--metric", default=S, help="diversity measure to report: dom or gen (default follows --mode)")
    g.add_argument("--A", type=int, default=S, dest="A", help="stations moved by each change (default 3)")
    g.add_argument("--n", type=int, default=S, help="tasks per route (default 5)")
    g.add_argument("--m", type=int, default=S, help="stations per task (default 5)")
    g.add_argument("--width", type=int, default=S, help="grid width (default 500)")
    g.add_argument("--height", type=int, default=S, help="grid height (default 500)")
    g.add_argument("--offset", default=S, help="displacement of a disabled station as x,y (default 2500,2500)")
    g.add_argument("--seed", type=int, default=S, help="run seed, or master seed for batches (default 0)")


def _output_options(p: argparse.ArgumentParser, batch: bool) -> None:
    S = argparse.SUPPRESS
    g = p.add_argument_group("output")
    g.add_argument("--out", default=S, help="output directory (default .)")
    g.add_argument("--chart", action="store_true", default=S, help="also write SVG charts")
    if batch:
        g.add_argument("--workers", type=int, default=S,
                       help="worker processes (default $RESILIENT_EVO_WORKERS or 1); never changes results")
        g.add_argument("--runs", type=int, default=S, help="paired scenarios per batch")
        g.add_argument("--variants", default=S,
                       help="comma list of mode[:lambda][@metric], e.g. none,dom:8000,gen:80000")
        g.add_argument("--level", type=float, default=S, help="bootstrap confidence level (default 0.95)")
        g.add_argument("--resamples", type=int, default=S, help="bootstrap resamples (default 2000)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resilient-evo",
        description="Diversity-aware evolutionary route planning under unexpected layout change.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, help_text, batch=False):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON file with flat option keys")
        _engine_options(p)
        _output_options(p, batch)
        return p

    command("run", "one seeded run; writes run_<seed>.csv and run_<seed>.json")
    command("batch", "paired batch over several variants; writes per-variant aggregate CSVs", batch=True)
    p = command("sweep", "one paired batch per value of a parameter axis", batch=True)
    p.add_argument("--axis", choices=("lambda", "t", "A"), default=argparse.SUPPRESS, help="parameter to sweep")
    p.add_argument("--values", default=argparse.SUPPRESS,
                   help="comma list or inclusive range start:stop:step, e.g. 0:9500:500")
    p = command("amplitude", "best waycost around the change for several change amounts", batch=True)
    p.add_argument("--a-values", default=argparse.SUPPRESS, help="comma list of A values (default 0,1,2,4,8,12,16,20)")

    p = sub.add_parser("oracle", help="exhaustive optimum and change analysis of one layout",
                       description="Enumerate every route; report the optimum, the share of routes whose "
                                   "cost changes under c_A, and whether the optimum moves.")
    p.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="JSON file with flat option keys")
    _engine_options(p)
    p.add_argument("--layout", type=Path, default=argparse.SUPPRESS,
                   help="layout JSON to analyse (default: generated from --seed)")
    p.add_argument("--layout2", type=Path, default=argparse.SUPPRESS,
                   help="compare against this layout instead of applying a random change")
    p.add_argument("--epsilon", type=float, default=argparse.SUPPRESS, help="cost change threshold (default 0.5)")
    p.add_argument("--budget", type=int, default=argparse.SUPPRESS, help="maximum routes to enumerate (default 1e7)")
    p.add_argument("--dump-table", type=Path, default=argparse.SUPPRESS, help="write route,waycost CSV here")
    p.add_argument("--dump-layout", type=Path, default=argparse.SUPPRESS, help="write the analysed layout JSON here")

    p = sub.add_parser("chart", help="render CSV series as one SVG line chart",
                       description="One line per input CSV, generation on the x axis.")
    p.add_argument("inputs", nargs="+", type=Path, help="run or aggregate CSV files")
    p.add_argument("--column", default=None, help="column to plot (default: best waycost)")
    p.add_argument("--title", default="", help="chart title")
    p.add_argument("--labels", default=None, help="comma list of legend labels (default: file stems)")
    p.add_argument("--output", "-o", type=Path, required=True, help="SVG file to write")
    return parser


def _load_config_file(path: Path) -> dict:
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config {path} is not valid JSON: {exc}", EXIT_CONFIG) from exc
    if not isinstance(data, dict):
        raise CliError(f"config {path} must hold a JSON object", EXIT_CONFIG)
    return {key.replace("-", "_"): value for key, value in data.items()}


def merged_options(args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicit flags."""
    command = args.command
    opts = dict(ENGINE_DEFAULTS)
    opts.update(COMMAND_DEFAULTS[command])
    if command != "oracle":
        opts.update(OUTPUT_DEFAULTS)
    given = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    if "config" in args:
        from_file = _load_config_file(args.config)
        unknown = sorted(set(from_file) - set(opts) - set(given))
        if unknown:
            raise CliError(f"config: unknown keys {', '.join(unknown)}", EXIT_CONFIG)
        opts.update(from_file)
    opts.update(given)
    return opts


def _int_list(text, name: str) -> list[int]:
    if isinstance(text, list):
        return [int(v) for v in text]
    try:
        return [int(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected a comma list of integers, got {text!r}") from None


def parse_values(text, axis: str) -> tuple:
    """``a,b,c`` or inclusive ``start:stop:step``."""
    if text is None:
        raise ConfigError("values: required for sweep")
    if isinstance(text, list):
        values = [float(v) for v in text]
    elif ":" in str(text):
        try:
            start, stop, step = (float(v) for v in str(text).split(":"))
        except ValueError:
            raise ConfigError(f"values: expected start:stop:step, got {text!r}") from None
        if step <= 0:
            raise ConfigError("values: step must be positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        values = [start + k * step for k in range(count)]
    else:
        try:
            values = [float(v) for v in str(text).split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"values: expected numbers, got {text!r}") from None
    if not values:
        raise ConfigError("values: no values given")
    if axis in ("t", "A"):
        if any(v != int(v) for v in values):
            raise ConfigError(f"values: {axis} values must be integers")
        return tuple(int(v) for v in values)
    return tuple(values)


def engine_config(opts: dict) -> EngineConfig:
    try:
        offset = opts["offset"]
        if isinstance(offset, str):
            offset = tuple(int(v) for v in offset.split(","))
        if len(offset) != 2:
            raise ConfigError("offset: expected x,y")
        mode = opts["mode"]
        lam = opts["lambda"]
        if lam is None:
            lam = Variant.parse(mode).lam
        return EngineConfig(
            population_size=int(opts["population_size"]),
            generations=int(opts["generations"]),
            change_generation=int(opts["change_at"]),
            mutation_rate=float(opts["mutation_rate"]),
            crossover_rate=float(opts["crossover_rate"]),
            hypermutation_rate=float(opts["hypermutation_rate"]),
            lam=float(lam),
            t=int(opts["t"]),
            mode=mode,
            metric=opts["metric"],
            change_amount=int(opts["A"]),
            seed=int(opts["seed"]),
            n=int(opts["n"]),
            m=int(opts["m"]),
            width=int(opts["width"]),
            height=int(opts["height"]),
            offset=offset,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def batch_spec(opts: dict, base: EngineConfig, variants, axis=None, values=()) -> BatchSpec:
    if isinstance(variants, str):
        variants = parse_variants(variants)
    return BatchSpec(
        base=base,
        runs=int(opts["runs"]),
        master_seed=int(opts["seed"]),
        variants=tuple(variants),
        axis=axis,
        values=tuple(values),
        level=float(opts["level"]),
        resamples=int(opts["resamples"]),
    )


def _workers(opts: dict) -> int:
    workers = opts["workers"]
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    return workers


# -- commands -----------------------------------------------------------------

def cmd_run(opts: dict) -> int:
    config = engine_config(opts)
    record = run_scenario(config, config.seed)
    out = Path(opts["out"])
    stem = f"run_{config.seed}"
    c1, c2 = record.changes
    echo = {
        "config": record.config.to_dict(),
        "changes": {
            "F1": {"moved": [list(p) for p in c1.moved], "offset": [c1.offset.x, c1.offset.y]},
            "F2": {"moved": [list(p) for p in c2.moved], "offset": [c2.offset.x, c2.offset.y]},
        },
    }
    files = {out / f"{stem}.csv": record.to_csv(), out / f"{stem}.json": json.dumps(echo, indent=2) + "\n"}
    if opts["chart"]:
        gens = [float(s.generation) for s in record.stats]
        series = {"best waycost": (gens, [float(s.best_waycost) for s in record.stats])}
        files[out / f"{stem}.svg"] = chart.render_chart(series, title=f"run seed {config.seed}")
    write_all(files)
    return EXIT_OK


def _summary_csv(batch, label_prefix: str = "") -> list[str]:
    c = batch.spec.base.change_generation
    final = batch.spec.base.generations - 1
    labels = batch.labels
    rows = []
    for label in labels:
        best = batch.data[label][:, :, BEST_WAYCOST]
        row = [label_prefix + label, f"{batch.spikes(label).mean():.6f}",
               f"{best[:, c - 1].mean():.6f}" if c >= 1 else "", f"{best[:, final].mean():.6f}"]
        if label != labels[0] and len(batch.seeds) >= 2:
            diff, lo, hi = batch.paired_spike_difference(labels[0], label)
            row += [f"{diff:.6f}", f"{lo:.6f}", f"{hi:.6f}"]
        else:
            row += ["", "", ""]
        rows.append(",".join(row))
    return rows


SUMMARY_HEADER = "variant,mean_spike,mean_best_before_change,mean_best_final,spike_diff_vs_first,diff_ci_lo,diff_ci_hi"


def _aggregate_files(batch, out: Path, prefix: str, with_chart: bool, title: str) -> dict[Path, str]:
    files = {}
    series = {}
    for label, agg in batch.aggregates.items():
        files[out / f"{prefix}{safe_name(label)}.csv"] = agg.to_csv()
        series[label] = (list(map(float, range(agg.generations))), agg.column("best_waycost").tolist())
    if with_chart:
        files[out / f"{prefix.rstrip('_')}.svg"] = chart.render_chart(series, title=title)
    return files


def cmd_batch(opts: dict) -> int:
    base = engine_config(opts)
    spec = batch_spec(opts, base, opts["variants"])
    batch = run_batch(spec, _workers(opts))
    out = Path(opts["out"])
    files = _aggregate_files(batch, out, "batch_", opts["chart"], f"{spec.runs} runs, A={base.change_amount}")
    files[out / "batch_summary.csv"] = "\n".join([SUMMARY_HEADER, *_summary_csv(batch)]) + "\n"
    write_all(files)
    return EXIT_OK


def cmd_sweep(opts: dict) -> int:
    base = engine_config(opts)
    axis = opts["axis"]
    if axis not in ("lambda", "t", "A"):
        raise ConfigError("axis: required, one of lambda, t, A")
    values = parse_values(opts["values"], axis)
    variants = opts["variants"]
    if variants is None:
        mode = opts["mode"] if opts["mode"] != "none" else "dom"
        variants = mode
    spec = batch_spec(opts, base, variants, axis, values)
    batches = sweep(spec, _workers(opts))
    out = Path(opts["out"])
    files = {}
    summary = ["value," + SUMMARY_HEADER]
    chart_series = {}
    for value, batch in batches.items():
        for label, agg in batch.aggregates.items():
            name = f"sweep_{axis}_{value:g}_{safe_name(label)}.csv"
            files[out / name] = agg.to_csv()
            chart_series[f"{axis}={value:g} {label}"] = (
                list(map(float, range(agg.generations))), agg.column("best_waycost").tolist()
            )
        summary += [f"{value:g}," + row for row in _summary_csv(batch)]
    files[out / f"sweep_{axis}_summary.csv"] = "\n".join(summary) + "\n"
    if opts["chart"]:
        files[out / f"sweep_{axis}.svg"] = chart.render_chart(chart_series, title=f"sweep over {axis}")
    write_all(files)
    return EXIT_OK


def cmd_amplitude(opts: dict) -> int:
    base = engine_config(opts)
    values = tuple(_int_list(opts["a_values"], "a_values"))
    spec = batch_spec(opts, base, opts["variants"], "A", values)
    report = amplitude_analysis(spec, _workers(opts))
    out = Path(opts["out"])
    files = {out / "amplitude.csv": report.to_csv()}
    if opts["chart"]:
        c = report.change_generation
        labels = list(dict.fromkeys(label for _, label, *_ in report.rows))
        series = {}
        for label in labels:
            rows = [r for r in report.rows if r[1] == label]
            xs = [float(r[0]) for r in rows]
            series[f"{label} gen{c - 1}"] = (xs, [r[2] for r in rows])
            series[f"{label} gen{c}"] = (xs, [r[3] for r in rows])
        svg = chart.render_chart(series, title="best waycost around the change vs A")
        files[out / "amplitude.svg"] = svg.replace(">generation</text>", ">A</text>")
    write_all(files)
    return EXIT_OK


def _read_layout(path: Path) -> FactoryLayout:
    try:
        return FactoryLayout.from_json(path.read_text())
    except OSError as exc:
        raise CliError(f"cannot read layout {path}: {exc}", EXIT_IO) from exc


def cmd_oracle(opts: dict, out=None) -> int:
    out = sys.stdout if out is None else out
    config = engine_config(opts)
    budget = int(opts["budget"])
    epsilon = float(opts["epsilon"])
    if opts["layout"] is not None:
        layout = _read_layout(Path(opts["layout"]))
    else:
        layout = make_scenario(config, config.seed).layout
    if opts["layout2"] is not None:
        changed = _read_layout(Path(opts["layout2"]))
        moved = None
    else:
        amount = config.change_amount
        if not 0 <= amount <= layout.n * layout.m:
            raise ConfigError(f"A: must be in [0, {layout.n * layout.m}], got {amount}")
        rng = np.random.default_rng([config.seed, 0xC4A])
        changed, record = apply_change(layout, amount, config.offset, rng)
        moved = record.moved
    table = oracle.plan_table(layout, budget)
    route, cost = oracle.enumerate_optimum(layout, budget)
    changed_route, changed_cost = oracle.enumerate_optimum(changed, budget)
    fraction = oracle.affected_fraction(layout, changed, epsilon, budget)
    unexpected = oracle.is_unexpected(layout, changed, budget)
    files = {}
    if opts["dump_table"] is not None:
        files[Path(opts["dump_table"])] = table.to_csv()
    if opts["dump_layout"] is not None:
        files[Path(opts["dump_layout"])] = layout.to_json() + "\n"
    write_all(files)
    lines = [
        f"routes enumerated: {len(table)}",
        f"optimum route: {'-'.join(map(str, route))}",
        f"optimum waycost: {cost}",
    ]
    if moved is not None:
        lines.append(f"moved stations: {' '.join(f'{i}:{j}' for i, j in moved) or '-'}")
    lines += [
        f"changed optimum route: {'-'.join(map(str, changed_route))}",
        f"changed optimum waycost: {changed_cost}",
        f"affected fraction: {fraction:.6f}",
        f"unexpected: {'true' if unexpected else 'false'}",
    ]
    out.write("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_chart(args: argparse.Namespace) -> int:
    labels = args.labels.split(",") if args.labels else [p.stem for p in args.inputs]
    if len(labels) != len(args.inputs):
        raise ConfigError("labels: need one label per input")
    series = {}
    for label, path in zip(labels, args.inputs):
        try:
            series[label] = chart.read_series(path, args.column)
        except OSError as exc:
            raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
        except chart.ChartError as exc:
            raise CliError(str(exc), EXIT_CONFIG) from exc
    svg = chart.render_chart(series, title=args.title, ylabel=args.column or "best waycost")
    write_all({args.output: svg})
    return EXIT_OK


COMMANDS = {"run": cmd_run, "batch": cmd_batch, "sweep": cmd_sweep, "amplitude": cmd_amplitude, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "chart":
            return cmd_chart(args)
        return COMMANDS[args.command](merged_options(args))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceeded as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
