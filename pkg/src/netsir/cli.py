"""``netsir`` command line: graphs, simulations, experiments and games.

Every command resolves its configuration first (JSON file, then command-line
overrides, then the seed from ``--seed`` / file / ``NETSIR_SEED``), writes
it to ``<out>/config.json`` and stamps each CSV it produces with the config
fingerprint.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from netsir import __version__
from netsir import config as cfgmod
from netsir import games
from netsir.contact_graph import assign_labels, binarize, export_graph, generate_weights, graph_stats
from netsir.errors import ConfigurationError, NetsirError
from netsir.scenarios import (
    STRATEGY_LABELS,
    Kind,
    ReplicationsIncomplete,
    Timing,
    build_payoff_matrix,
    draw_replication,
    interaction_effect,
    read_bimatrix_csv,
    replication_seed,
    resolve_schedule,
    run_replications,
    ScenarioResult,
)
from netsir.sir_dynamics import run_epidemic

log = logging.getLogger("netsir")


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, help="master seed (else file, else $NETSIR_SEED, else 0)")
    p.add_argument("--n-iter", type=int, dest="n_iter", help="replications per cell")
    p.add_argument("--topology", choices=["hom", "block"], help="group layout")
    p.add_argument("--out", help="output directory")
    p.add_argument("--desk-scale", action="store_true", default=None, dest="desk_scale",
                   help="10 replications, wider tolerances")
    p.add_argument("--independent-seeds", action="store_true", default=None,
                   dest="independent_seeds", help="separate random streams per cell")
    p.add_argument("--threads", type=int, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="netsir", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"netsir {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-graph", help="write one contact graph as CSV")
    _common(p)

    p = sub.add_parser("simulate", help="replicate one strategy profile")
    _common(p)
    p.add_argument("--strategies", help="comma list, one per group, e.g. Conf,ConfVacc")
    p.add_argument("--timing", choices=[t.name.lower() for t in Timing])

    p = sub.add_parser("experiment1", help="co-operative strategies x timings table")
    _common(p)

    p = sub.add_parser("payoff", help="two-group infection-load payoff matrix")
    _common(p)

    p = sub.add_parser("nash", help="pure equilibria of a payoff CSV")
    _common(p)
    p.add_argument("--payoff", required=True, help="bimatrix CSV (payoff or cost)")
    p.add_argument("--intensities", help="I0,I1: compound with preference rankings first")
    p.add_argument("--objective", default="12", help="objective ranking, e.g. 12 or 11")
    p.add_argument("--scheme", choices=sorted(games.SCHEMES))

    p = sub.add_parser("sweep", help="equilibria over ranking intensities")
    _common(p)
    p.add_argument("--hom", help="homogeneous payoff CSV")
    p.add_argument("--block", help="block payoff CSV")
    p.add_argument("--objectives", default="12,11")
    p.add_argument("--intensities", help="range such as 1-9 or list 3,5,7")
    p.add_argument("--scheme", choices=sorted(games.SCHEMES))
    return parser


def resolve(args, default_topology="hom"):
    if args.config:
        cfg = cfgmod.load_config(args.config)
    else:
        cfg = cfgmod.default_config(args.topology or default_topology)
    cfg = cfgmod.apply_overrides(
        cfg, topology=args.topology, n_iter=args.n_iter, out=args.out,
        desk_scale=args.desk_scale, independent_seeds=args.independent_seeds,
        threads=args.threads,
    )
    return cfgmod.resolve_seed(cfg, args.seed)


def _header(cfg, what):
    return (f"{what}\nfingerprint={cfg.fingerprint()} seed={cfg.seed} "
            f"n_iter={cfg.n_iter} netsir={__version__}")


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    return out


def _write_csv(path, header, columns, rows):
    with open(path, "w") as fh:
        for line in header.splitlines():
            fh.write(f"# {line}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6f}"
    return str(v)


def _write_records(out, cfg, records_by_rep, started):
    rec_dir = out / "records"
    rec_dir.mkdir(exist_ok=True)
    for r, cells in enumerate(records_by_rep):
        if not cells:
            continue
        seed = next(iter(cells.values()))["seed"]
        cons = max(c["conservation"] for c in cells.values())
        rec = cfgmod.run_record(cfg, seed, {str(k): v for k, v in cells.items()}, cons,
                                started, replication=r)
        (rec_dir / f"rep_{r:03d}.json").write_text(rec.to_json() + "\n")


def _by_replication(recs, n_iter):
    reps = [dict() for _ in range(n_iter)]
    for key, rows in recs.items():
        for r, row in enumerate(rows):
            reps[r][key] = row
    return reps


def _run(cfg, pairs, started):
    """Run replications; on failure save what finished and re-raise."""
    topo = cfg.topology_config()
    try:
        return run_replications(topo, cfg.epidemic, pairs, cfg.n_iter, cfg.seed,
                                cfg.independent_seeds, cfg.threads)
    except ReplicationsIncomplete as exc:
        out = _outdir(cfg)
        _write_records(out, cfg, _by_replication(exc.partial, cfg.n_iter), started)
        raise


def cmd_generate_graph(args, cfg):
    out = _outdir(cfg)
    topo = cfg.topology_config()
    w = generate_weights(topo)
    g = binarize(w, topo.n_connect, assign_labels(topo))
    export_graph(g, out, _header(cfg, f"contact graph, topology={topo.topology.value}"))
    stats = graph_stats(g)
    stats["degree_histogram"] = stats["degree_histogram"].tolist()
    (out / "graph_stats.json").write_text(json.dumps(stats, indent=1) + "\n")
    print(f"mean degree {stats['mean_degree']:.2f}, max {stats['max_degree']}, "
          f"isolated {stats['isolated']} -> {out}")
    return 0


def cmd_simulate(args, cfg, started):
    if args.strategies:
        kinds = args.strategies.split(",")
        cfg = replace(cfg, control=replace(cfg.control, strategies=tuple(kinds)))
    if args.timing:
        cfg = replace(cfg, control=replace(cfg.control, timing=args.timing.upper()))
    cfg = cfgmod.validate(cfg)
    strategies = cfg.strategies()
    out = _outdir(cfg)
    recs = _run(cfg, {"cell": strategies}, started)["cell"]
    res = ScenarioResult.from_records(strategies, recs)
    _write_records(out, cfg, _by_replication({"cell": recs}, cfg.n_iter), started)
    cols = ["replication", "seed", "infection_load", "activation_margin"]
    cols += [f"infection_load_g{g}" for g in range(cfg.graph.n_groups)]
    cols += ["peak_mean_infection", "peak_step", "conservation"]
    rows = [[r, rec["seed"], rec["infection_load"], rec["activation_margin"],
             *rec["group_infection_load"], rec["peak_mean_infection"], rec["peak_step"],
             rec["conservation"]] for r, rec in enumerate(recs)]
    label = ",".join(s.kind.label for s in strategies)
    header = _header(cfg, f"per-replication metrics, strategies={label}")
    _write_csv(out / "metrics.csv", header, cols, rows)

    # plot-ready curves of the first replication
    topo = cfg.topology_config()
    rep = draw_replication(topo, cfg.epidemic, replication_seed(cfg.seed, 0))
    traj = run_epidemic(rep.weights, rep.labels, cfg.epidemic,
                        resolve_schedule(strategies, cfg.epidemic.steps), rep.beta, rep.delta,
                        state=rep.init, rng=np.random.default_rng(rep.vacc_seed),
                        n_connect=topo.n_connect)
    traj.to_csv(out / "trajectory.csv", _header(cfg, "group means and variances, replication 0"))
    traj.write_event_log(out / "events.json")
    print(f"{label}: infection load {res.infection_load:.3f} (sd {res.infection_load_sd:.3f}), "
          f"groups {np.round(res.group_infection_load, 3).tolist()} -> {out}")
    return 0


def cmd_experiment1(args, cfg, started):
    out = _outdir(cfg)
    n_groups = cfg.graph.n_groups
    pairs = {(t.name, k.label): (cfg.strategy(k, t),) * n_groups for t in Timing for k in Kind}
    recs = _run(cfg, pairs, started)
    _write_records(out, cfg, _by_replication(recs, cfg.n_iter), started)
    table = {key: ScenarioResult.from_records(pairs[key], r) for key, r in recs.items()}
    cols = ["timing"] + list(STRATEGY_LABELS)
    header = _header(cfg, "mean infection load, co-operative strategies")
    rows = [[t.name.title()] + [table[(t.name, s)].infection_load for s in STRATEGY_LABELS]
            for t in Timing]
    _write_csv(out / "experiment1.csv", header, cols, rows)
    sd_rows = [[t.name.title()] + [table[(t.name, s)].infection_load_sd for s in STRATEGY_LABELS]
               for t in Timing]
    _write_csv(out / "experiment1_sd.csv", _header(cfg, "infection load standard deviation"),
               cols, sd_rows)
    summary = {
        "tolerances": cfg.tolerances,
        "peak_step": table[("EARLY", "No")].peak_step,
        "max_conservation_error": max(r.conservation for r in table.values()),
    }
    (out / "experiment1_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    width = max(len(c) for c in cols)
    print("  ".join(c.rjust(width) for c in cols))
    for row in rows:
        print("  ".join([row[0].rjust(width)] + [f"{v:.3f}".rjust(width) for v in row[1:]]))
    return 0


def cmd_payoff(args, cfg, started):
    out = _outdir(cfg)
    topo = cfg.topology_config()
    timing = Timing.parse(cfg.control.timing)
    try:
        pm, recs = build_payoff_matrix(topo, cfg.epidemic, cfg.n_iter, cfg.seed, timing,
                                       cfg.independent_seeds, cfg.threads, return_records=True)
    except ReplicationsIncomplete as exc:
        _write_records(out, cfg, _by_replication(exc.partial, cfg.n_iter), started)
        raise
    pm = replace(pm, fingerprint=cfg.fingerprint())
    name = topo.topology.value
    base = ",".join(f"{b:.6f}" for b in pm.baseline)
    pm.to_csv(out / f"payoff_{name}.csv",
              header=_header(cfg, f"infection-load change per group, topology={name}")
              + f"\nbaseline={base}")
    pm.to_csv(out / f"payoff_{name}_sd.csv", values=pm.sd,
              header=_header(cfg, "standard deviation of group infection loads"))
    _write_records(out, cfg, _by_replication(
        {f"{STRATEGY_LABELS[i]},{STRATEGY_LABELS[j]}": v for (i, j), v in recs.items()},
        cfg.n_iter), started)
    baseline = {
        "fingerprint": cfg.fingerprint(),
        "baseline_per_group": pm.baseline.tolist(),
        "baseline_total": pm.baseline_total,
        "interaction_cooperative": interaction_effect(pm, "cooperative").tolist(),
        "interaction_unilateral": interaction_effect(pm, "unilateral").tolist(),
        "nash": games.cell_names(games.pure_nash(pm.delta)),
    }
    (out / f"baseline_{name}.json").write_text(json.dumps(baseline, indent=1) + "\n")
    print(f"baseline {base}; equilibria {baseline['nash']} -> {out}")
    return 0


def cmd_nash(args, cfg, started):
    values, strategies, meta = read_bimatrix_csv(args.payoff)
    if args.intensities:
        i0, i1 = (float(x) for x in args.intensities.split(","))
        if meta.get("baseline") is None:
            raise ConfigurationError(f"{args.payoff}: compounding needs a '# baseline=' line")
        r0, r1 = cfg.game.rankings
        cp = games.compound_payoff(
            values, games.PreferenceProfile(r0, i0), games.PreferenceProfile(r1, i1),
            _objective(args.objective), baseline=meta["baseline"],
            scheme=args.scheme or cfg.game.scheme,
            objective_intensity=cfg.game.objective_intensity,
        )
        values = cp.cells
    cells = games.pure_nash(values)
    names = games.cell_names(cells, strategies)
    if args.out:
        out = _outdir(cfg)
        _write_csv(out / "nash.csv", _header(cfg, f"pure equilibria of {args.payoff}"),
                   ["cell_row", "cell_col"], names)
    for a, b in names:
        print(f"{a},{b}")
    if not names:
        print("no pure equilibrium")
    return 0


def _objective(text):
    digits = [int(c) for c in str(text).replace(",", "").replace(" ", "")]
    if len(digits) != 2:
        raise ConfigurationError(f"objective ranking needs two digits, got {text!r}")
    return tuple(digits)


def _intensities(text, default):
    if not text:
        return tuple(default)
    if "-" in text:
        a, b = (int(x) for x in text.split("-"))
        return tuple(range(a, b + 1))
    return tuple(int(x) for x in text.split(","))


def cmd_sweep(args, cfg, started):
    payoffs, baselines = {}, {}
    for name, path in (("hom", args.hom), ("block", args.block)):
        if path:
            values, _, meta = read_bimatrix_csv(path)
            if meta.get("baseline") is None:
                raise ConfigurationError(f"{path}: sweep needs a '# baseline=' line")
            payoffs[name], baselines[name] = values, meta["baseline"]
    if not payoffs:
        raise ConfigurationError("sweep needs --hom and/or --block")
    objectives = tuple(_objective(o) for o in args.objectives.split(","))
    intensities = _intensities(args.intensities, cfg.game.intensities)
    nmap = games.intensity_sweep(payoffs, intensities, objectives, cfg.game.rankings,
                                 scheme=args.scheme or cfg.game.scheme, baselines=baselines,
                                 objective_intensity=cfg.game.objective_intensity)
    out = _outdir(cfg)
    header = _header(cfg, f"pure equilibria over intensities {intensities[0]}-{intensities[-1]}")
    nmap.to_csv(out / "nash_map.csv", header)
    rows = []
    for (topo, obj, (i, j)), rects in nmap.coalesced().items():
        for r0, r1 in rects:
            rows.append([topo, obj, STRATEGY_LABELS[i], STRATEGY_LABELS[j],
                         games.format_range(r0), games.format_range(r1)])
    _write_csv(out / "nash_ranges.csv", header,
               ["topology", "objective", "cell_row", "cell_col", "I0", "I1"], rows)
    for row in rows:
        print(f"{row[0]:5s} [{row[1][0]},{row[1][1]}] {row[2]:>8s},{row[3]:<8s} ({row[4]}, {row[5]})")
    return 0


COMMANDS = {
    "generate-graph": lambda a, c, s: cmd_generate_graph(a, c),
    "simulate": cmd_simulate,
    "experiment1": cmd_experiment1,
    "payoff": cmd_payoff,
    "nash": cmd_nash,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](args, cfg, started)
    except ReplicationsIncomplete as exc:
        print(f"netsir: {exc}; partial records kept", file=sys.stderr)
        return 1
    except ConfigurationError as exc:
        print(f"netsir: configuration error: {exc}", file=sys.stderr)
        return 2
    except (NetsirError, OSError) as exc:
        print(f"netsir: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
