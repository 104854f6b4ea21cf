"""Command-line front end.

Exit codes: 0 success, 1 domain failure (invalid instance, infeasible model,
allocation overflow), 2 usage or I/O error. The default output directory is
taken from ``CTOPRATES_OUT`` (falls back to the current directory).
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from .ctop import AllocationOverflow, FlowSimError, evaluate_rates
from .fixture import paper_fixture
from .io import (FormatError, allocation_to_csv, capacities_to_csv, costs_to_csv, load_instance,
                 rates_from_csv, rates_to_csv, save_instance, traces_to_csv)
from .lp import BACKENDS, solve
from .network import Instance, derive_demand, derive_split_ratios, validate_instance
from .sbo import DEFAULT_SEEDS, SEED_HEURISTICS, SearchConfig, two_phase_optimize
from .stoch import MODEL_KINDS, build_model, extract_fca_rates, per_scenario_costs

OUT_ENV = "CTOPRATES_OUT"
EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


@dataclass
class RunReport:
    command: str
    lines: list[str] = field(default_factory=list)

    def add(self, line: str = ""):
        self.lines.append(line)

    def render(self) -> str:
        return "\n".join([f"$ {self.command}"] + self.lines) + "\n"


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def _overrides(inst: Instance, args) -> Instance:
    if getattr(args, "cg", None) is not None or getattr(args, "ca", None) is not None:
        inst = inst.with_costs(args.cg, args.ca)
    if getattr(args, "probs", None) is not None:
        inst = inst.with_probabilities(args.probs)
    return inst


def _summary(inst: Instance) -> str:
    return (f"instance {inst.name}: {len(inst.fcas)} FCAs, {len(inst.pcas)} PCAs, {len(inst.paths)} paths, "
            f"{inst.scenario_tree.n_scenarios} scenarios, {inst.horizon.active}+{inst.horizon.padding} periods, "
            f"{len(inst.flights)} flights, c_g={inst.costs.ground:g}, c_a={inst.costs.air:g}")


def _cost_table(b, names) -> list[str]:
    out = [f"{'Scenario':<10}{'Prob':>7}{'Ground':>12}{'Air':>12}{'Total':>12}"]
    for q in range(b.ground.size):
        out.append(f"{names[q]:<10}{b.probabilities[q]:>7.2f}{b.ground[q]:>12.2f}{b.air[q]:>12.2f}"
                   f"{b.total[q]:>12.2f}")
    out.append(f"Expected cost {b.expected:.2f}   Running time {b.runtime:.3f} s")
    return out


# -- commands ----------------------------------------------------------------------

def cmd_fixture(args, rep: RunReport) -> int:
    inst = paper_fixture(n_flights=args.flights_n, seed=args.seed,
                         probabilities=args.probs or (0.3, 0.4, 0.3),
                         c_ground=1.0 if args.cg is None else args.cg,
                         c_air=2.0 if args.ca is None else args.ca)
    out = _out_dir(args)
    save_instance(inst, out / "instance.json")
    (out / "capacity.csv").write_text(capacities_to_csv(inst))
    rep.add(_summary(inst))
    rep.add(f"wrote {out / 'instance.json'} and {out / 'capacity.csv'}")
    return EXIT_OK


def cmd_validate(args, rep: RunReport) -> int:
    inst = load_instance(args.instance)
    report = validate_instance(inst)
    rep.add(_summary(inst))
    for v in report:
        rep.add(v)
    rep.add("valid" if report.ok else f"{len(report)} violation(s)")
    return EXIT_OK if report.ok else EXIT_DOMAIN


def cmd_solve(args, rep: RunReport) -> int:
    inst = _overrides(load_instance(args.instance), args)
    rep.add(_summary(inst))
    demand = derive_demand(inst.flights, inst)
    ratios = {a.key: a.split_ratio for a in inst.arcs if a.split_ratio is not None}
    if len(ratios) < len(inst.arcs):
        ratios = {**derive_split_ratios(inst.flights, inst), **ratios}
    t0 = time.perf_counter()
    model = build_model(args.model, inst, demand, ratios)
    sol = solve(model, args.backend)
    wall = time.perf_counter() - t0
    rep.add(f"model {args.model}: {model.n_vars} variables, {model.n_cons} constraints")
    rep.add(f"status {sol.status}")
    if not sol.optimal:
        return EXIT_DOMAIN
    costs = per_scenario_costs(sol, inst)
    costs = type(costs)(costs.ground, costs.air, costs.probabilities, costs.c_ground, costs.c_air,
                        args.model, wall)
    rates = extract_fca_rates(sol, inst, args.model)
    rep.lines.extend(_cost_table(costs, inst.scenario_tree.names))
    out = _out_dir(args)
    (out / f"rates_{args.model}.csv").write_text(rates_to_csv(rates, inst.horizon.labels()))
    (out / f"costs_{args.model}.csv").write_text(costs_to_csv([costs], inst.scenario_tree.names))
    rep.add(f"wrote {out / f'rates_{args.model}.csv'} and {out / f'costs_{args.model}.csv'}")
    return EXIT_OK


def cmd_evaluate(args, rep: RunReport) -> int:
    inst = _overrides(load_instance(args.instance), args)
    rates = rates_from_csv(Path(args.rates).read_text())
    rep.add(_summary(inst))
    try:
        ev = evaluate_rates(rates, inst, args.backend)
    except AllocationOverflow as e:
        rep.add(f"allocation overflow: flight {e.flight_id} cannot be placed")
        return EXIT_DOMAIN
    except FlowSimError as e:
        rep.add(f"flow simulation failed: {e}")
        return EXIT_DOMAIN
    rep.add(f"reroute cost {ev.reroute:.2f}")
    rep.add(f"ground cost  {ev.ground:.2f}")
    rep.add(f"air cost     {ev.air:.2f}")
    rep.add(f"total cost   {ev.total:.2f}")
    if args.out or os.environ.get(OUT_ENV):
        out = _out_dir(args)
        (out / "allocation.csv").write_text(allocation_to_csv(ev.allocation))
        rep.add(f"wrote {out / 'allocation.csv'}")
    return EXIT_OK


def cmd_optimize(args, rep: RunReport) -> int:
    inst = _overrides(load_instance(args.instance), args)
    rep.add(_summary(inst))
    unknown = [s for s in args.seeds if s not in SEED_HEURISTICS]
    if unknown:
        rep.add(f"unknown seed heuristic(s): {', '.join(unknown)}")
        return EXIT_IO
    cfg = SearchConfig(subset=args.subset or (), time_budget=args.budget_s, max_evals=args.max_evals,
                       workers=args.workers)
    res = two_phase_optimize(inst, args.seeds, cfg, args.backend)
    rep.add(f"searched FCAs: {', '.join(res.subset)}")
    rep.add(f"{'Seed':<14}{'SeedCost':>12}{'Refined':>12}{'Gain%':>8}{'Evals':>7}{'Stop':>14}")
    for r in res.reports:
        rep.add(f"{r.name:<14}{r.seed_cost:>12.2f}{r.refined_cost:>12.2f}{100 * r.improvement:>8.2f}"
                f"{r.trace.evaluations:>7}{r.trace.stop_reason:>14}")
    rep.add(f"best: {res.best_seed} with cost {res.cost:.2f}")
    out = _out_dir(args)
    (out / "best_rates.csv").write_text(rates_to_csv(res.rates, inst.horizon.labels()))
    (out / "trace.csv").write_text(traces_to_csv([(r.name, r.trace) for r in res.reports]))
    rep.add(f"wrote {out / 'best_rates.csv'} and {out / 'trace.csv'}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, costs: bool = True):
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
    if costs:
        p.add_argument("--cg", type=float, help="ground-delay cost per period")
        p.add_argument("--ca", type=float, help="air-holding cost per period")
        p.add_argument("--probs", type=_floats, help="scenario probabilities, comma separated")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ctoprates", description="FCA rate planning for multi-resource CTOPs")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="write the built-in ZDC/EWR instance")
    _common(p)
    p.add_argument("--flights-n", type=int, default=50, help="number of synthetic flights")
    p.add_argument("--seed", type=int, default=7, help="flight generator seed")
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("validate", help="check an instance document")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", help="solve a stochastic rate model")
    p.add_argument("instance")
    p.add_argument("--model", choices=MODEL_KINDS, default="esom")
    p.add_argument("--backend", choices=BACKENDS, default="highs")
    _common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("evaluate", help="price a rate plan by allocation and flow simulation")
    p.add_argument("instance")
    p.add_argument("rates")
    p.add_argument("--backend", choices=BACKENDS, default="highs")
    _common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="two-phase heuristic + pattern search")
    p.add_argument("instance")
    p.add_argument("--seeds", type=_names, default=DEFAULT_SEEDS,
                   help=f"seed heuristics, comma separated ({', '.join(SEED_HEURISTICS)})")
    p.add_argument("--budget-s", type=float, default=300.0, help="total time budget in seconds")
    p.add_argument("--subset", type=_names, help="FCAs to search (default: two most congested)")
    p.add_argument("--max-evals", type=int, default=2000, help="evaluation budget per seed")
    p.add_argument("--workers", type=int, default=1, help="parallel evaluation processes")
    p.add_argument("--backend", choices=BACKENDS, default="highs")
    _common(p)
    p.set_defaults(func=cmd_optimize)
    return ap


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_IO if e.code else EXIT_OK
    rep = RunReport("ctoprates " + " ".join(argv))
    try:
        code = args.func(args, rep)
    except (OSError, FormatError) as e:
        rep.add(f"error: {e}")
        code = EXIT_IO
    except ValueError as e:
        rep.add(f"error: {e}")
        code = EXIT_DOMAIN
    sys.stdout.write(rep.render())
    return code


if __name__ == "__main__":
    raise SystemExit(main())
