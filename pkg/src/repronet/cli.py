"""Command-line interface.

Subcommands read a scenario file (``--config``), honor ``--seed``, and
write CSVs into the scenario's output directory:

* ``simulate``      integrate the model and write ``states.csv``
* ``compute-rn``    entity-level RN matrices (``local_rn.csv``) and the
                    network-level series (``network_rn.csv``)
* ``cluster-rn``    cluster matrices per sampled epoch (``cluster_rn.csv``)
* ``pipeline``      the aggregation pipeline per sampled epoch; with
                    ``--no-privacy`` its ``cluster_rn.csv`` is byte-identical
                    to ``cluster-rn``'s
* ``accuracy``      RMSE sweep over a privacy-level grid
* ``report``        threshold diagnostics per node and cluster

Exit codes: 0 success, 2 configuration error, 3 numeric error, 4 privacy
calibration infeasible.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import analysis, csvio, protocol, reproduction
from .exceptions import RepronetError
from .model import integrate
from .reproduction import MatrixKind, build_matrix, network_reproduction
from .scenario import (
    Scenario,
    build_initial_state,
    build_network,
    build_partition,
    build_privacy_spec,
    load_scenario,
)

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repronet")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--output-dir", default=None, help="override the output directory")

    common(sub.add_parser("simulate", help="integrate the epidemic model"))
    common(sub.add_parser("compute-rn", help="entity-level reproduction numbers"))
    common(sub.add_parser("cluster-rn", help="cluster-level reproduction matrices"))
    pipeline = sub.add_parser("pipeline", help="run the aggregation pipeline")
    common(pipeline)
    pipeline.add_argument("--no-privacy", action="store_true", help="skip the randomizer")
    pipeline.add_argument("--trace", default=None, help="write a message trace (JSON lines)")
    accuracy = sub.add_parser("accuracy", help="privacy/accuracy sweep")
    common(accuracy)
    accuracy.add_argument("--eps", default="1,2,3", help="comma-separated epsilon grid")
    accuracy.add_argument("--trials", type=int, default=100, help="pipeline runs per epoch")
    common(sub.add_parser("report", help="threshold diagnostics"))
    return parser


class _Context:
    def __init__(self, args):
        scenario = load_scenario(args.config)
        if args.seed is not None:
            scenario = dataclasses.replace(scenario, seed=args.seed)
        if args.output_dir is not None:
            scenario = dataclasses.replace(scenario, output_dir=args.output_dir)
        self.scenario = scenario
        self.base_dir = Path(args.config).parent
        self.out = Path(scenario.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.net = build_network(scenario, self.base_dir)
        self.state0 = build_initial_state(scenario, self.net)
        self.partition = build_partition(scenario, self.net)

    def trajectory(self):
        s = self.scenario
        return integrate(self.net, self.state0, s.model_kind, s.dt, s.steps)

    def sampled(self, trajectory):
        return [(epoch, trajectory[epoch]) for epoch in self.scenario.sampled_epochs()]


def _cmd_simulate(args) -> int:
    ctx = _Context(args)
    trajectory = ctx.trajectory()
    csvio.write_states_csv(ctx.out / "states.csv", trajectory)
    final = trajectory[-1]
    print(f"simulated {len(trajectory) - 1} steps to t={final.t:g}; wrote {ctx.out / 'states.csv'}")
    print(f"final infected fraction range: [{final.x.min():.6g}, {final.x.max():.6g}]")
    return 0


def _cmd_compute_rn(args) -> int:
    ctx = _Context(args)
    scenario = ctx.scenario
    clamp = scenario.privacy.clamp
    trajectory = ctx.trajectory()
    records = []
    network_rows = []
    for _, state in ctx.sampled(trajectory):
        matrix = build_matrix(
            ctx.net, state, MatrixKind.EFFECTIVE, scenario.infection_floor, clamp
        )
        for i in range(ctx.net.n):
            for j in range(ctx.net.n):
                records.append((state.t, i, j, matrix.values[i, j], "effective"))
        network_rows.append(
            (state.t, network_reproduction(ctx.net), network_reproduction(ctx.net, state))
        )
    csvio.write_rn_csv(ctx.out / "local_rn.csv", records)
    with open(ctx.out / "network_rn.csv", "w", newline="") as fh:
        fh.write("t,r0,rt\n")
        for t, r0, rt in network_rows:
            fh.write(f"{t:.17g},{r0:.17g},{rt:.17g}\n")
    print(f"wrote {ctx.out / 'local_rn.csv'} and {ctx.out / 'network_rn.csv'}")
    return 0


def _cluster_records(matrices):
    for state_t, matrix in matrices:
        kind = "cluster_private" if matrix.private else "cluster"
        for q in range(matrix.m):
            for r in range(matrix.m):
                yield (state_t, q, r, matrix.values[q, r], kind)


def _cmd_cluster_rn(args) -> int:
    ctx = _Context(args)
    scenario = ctx.scenario
    trajectory = ctx.trajectory()
    matrices = [
        (
            state.t,
            reproduction.cluster_matrix(
                ctx.net, state, ctx.partition, scenario.infection_floor, scenario.privacy.clamp
            ),
        )
        for _, state in ctx.sampled(trajectory)
    ]
    csvio.write_rn_csv(ctx.out / "cluster_rn.csv", _cluster_records(matrices))
    print(f"wrote {ctx.out / 'cluster_rn.csv'} ({len(matrices)} epochs)")
    return 0


def _cmd_pipeline(args) -> int:
    ctx = _Context(args)
    scenario = ctx.scenario
    spec = None if args.no_privacy else build_privacy_spec(scenario, ctx.partition)
    trajectory = ctx.trajectory()
    trace_fh = open(args.trace, "w") if args.trace else None
    try:
        matrices = []
        for epoch, state in ctx.sampled(trajectory):
            matrix = protocol.run_pipeline(
                ctx.net,
                state,
                ctx.partition,
                spec,
                master_seed=scenario.seed,
                epoch=epoch,
                floor=scenario.infection_floor,
                clamp=scenario.privacy.clamp,
                trace=trace_fh,
            )
            matrices.append((state.t, matrix))
    finally:
        if trace_fh is not None:
            trace_fh.close()
    csvio.write_rn_csv(ctx.out / "cluster_rn.csv", _cluster_records(matrices))
    mode = "no privacy" if spec is None else f"epsilon0={spec.epsilon0:g}"
    print(f"pipeline ({mode}) wrote {ctx.out / 'cluster_rn.csv'} ({len(matrices)} epochs)")
    return 0


def _cmd_accuracy(args) -> int:
    ctx = _Context(args)
    scenario = ctx.scenario
    try:
        eps_grid = [float(v) for v in args.eps.split(",") if v.strip()]
    except ValueError:
        raise RepronetError(f"invalid --eps grid: {args.eps!r}") from None
    trajectory = ctx.trajectory()
    sampled_states = [state for _, state in ctx.sampled(trajectory)]
    report = analysis.rmse_sweep(
        ctx.net,
        sampled_states,
        ctx.partition,
        eps_grid,
        trials=args.trials,
        master_seed=scenario.seed,
        delta=scenario.privacy.delta,
        k=scenario.privacy.k,
        bounds=scenario.privacy.bounds,
        clamp=scenario.privacy.clamp,
        floor=scenario.infection_floor,
    )
    csvio.write_accuracy_csv(ctx.out / "accuracy.csv", report)
    csvio.write_accuracy_summary_csv(ctx.out / "accuracy_summary.csv", report)
    for summary in report.summaries:
        if summary.feasible:
            print(
                f"eps={summary.eps:g}: rmse={summary.rmse:.6g} "
                f"({100 * summary.pct_error:.2f}% of mean exact magnitude)"
            )
        else:
            print(f"eps={summary.eps:g}: infeasible ({summary.message})")
    print(f"wrote {ctx.out / 'accuracy.csv'} and {ctx.out / 'accuracy_summary.csv'}")
    return 0


def _cmd_report(args) -> int:
    ctx = _Context(args)
    scenario = ctx.scenario
    trajectory = ctx.trajectory()
    report = analysis.threshold_report(
        ctx.net,
        trajectory,
        ctx.partition,
        scenario.model_kind,
        scenario.infection_floor,
    )
    csvio.write_threshold_csvs(
        ctx.out / "threshold_nodes.csv", ctx.out / "threshold_clusters.csv", report
    )
    print(f"wrote {ctx.out / 'threshold_nodes.csv'} and {ctx.out / 'threshold_clusters.csv'}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compute-rn": _cmd_compute_rn,
    "cluster-rn": _cmd_cluster_rn,
    "pipeline": _cmd_pipeline,
    "accuracy": _cmd_accuracy,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except RepronetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", 3)


if __name__ == "__main__":
    sys.exit(main())
