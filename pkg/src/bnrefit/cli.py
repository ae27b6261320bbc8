"""Command line interface.

Four subcommands: ``run`` fits a network to constraints and writes the
refitted network (plus an optional report), ``check`` measures how far a
network is from a constraint set, ``divergence`` compares two networks,
and ``gen`` writes a seeded random instance.  Set ``BNREFIT_LOG`` to
``debug`` or ``info`` to see solver internals on stderr.

Exit codes:

  0  success; for run, the solver converged
  1  check found violated constraints
  2  usage error
  3  unreadable or invalid input (syntax, schema, validation)
  4  run ended oscillating (constraints look contradictory)
  5  run hit the cycle budget before converging
  6  a constraint demands mass where the distribution has none
  7  a constraint's subnet exceeds the size budget
  8  a dense operation was asked for over the variable ceiling
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    BnError,
    DominanceError,
    NetworkSpec,
    ValidationError,
    _reextracted_product,
    extract_cpt,
    i_divergence,
    joint_from_network,
)
from .decomposed import SubnetSizeError, run_d_ipfp
from .dense import RunReport, Schedule, StopPolicy, Termination, run_e_ipfp, run_ipfp
from .elimination import marginal
from .fileio import (
    parse_constraints,
    parse_network,
    report_to_bytes,
    serialize_constraints,
    serialize_network,
    write_atomic,
)
from .generate import generate_instance

logger = logging.getLogger("bnrefit")

DENSE_CEILING = 25
"""Most variables a dense joint is allowed to span (2^25 cells puts a
quarter-gigabyte table on the floor; past that only d-ipfp and check make
sense)."""

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_INVALID_INPUT = 3
EXIT_OSCILLATING = 4
EXIT_MAX_CYCLES = 5
EXIT_DOMINANCE = 6
EXIT_SUBNET_BUDGET = 7
EXIT_DENSE_CEILING = 8

_TERMINATION_EXIT = {
    Termination.CONVERGED: EXIT_OK,
    Termination.OSCILLATING: EXIT_OSCILLATING,
    Termination.MAX_CYCLES: EXIT_MAX_CYCLES,
}


class DenseCeilingError(BnError):
    """A dense joint was requested over more variables than the ceiling."""


@dataclass(frozen=True)
class CliConfig:
    """Validated arguments for one invocation."""

    command: str
    network: str | None = None
    constraints: str | None = None
    algorithm: str = "e-ipfp"
    epsilon: float = 1e-9
    max_cycles: int = 10_000
    schedule: str = "document-order"
    out: str | None = None
    report: str | None = None
    first: str | None = None
    second: str | None = None
    seed: int | None = None
    nodes: int = 15
    num_constraints: int = 8

    @staticmethod
    def from_args(args: argparse.Namespace) -> "CliConfig":
        return CliConfig(**{
            k: v for k, v in vars(args).items() if k != "func"
        })


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0.0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bnrefit",
        description="Refit Bayesian-network probability tables to marginal "
                    "constraints while keeping the structure fixed.",
        epilog=__doc__.split("Exit codes:")[1].join(["Exit codes:", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser(
        "run",
        help="fit a network to constraints and write the result",
        description="Fit a network to constraints and write the refitted "
                    "network. With --algorithm ipfp the joint is fitted "
                    "without preserving structure; the written network then "
                    "carries the CPTs extracted from that joint (its closest "
                    "structured reading) and the report's structural_residual "
                    "says how far the raw joint is from factoring.",
    )
    run.add_argument("--network", required=True, help="input network file")
    run.add_argument("--constraints", required=True, help="input constraint file")
    run.add_argument("--algorithm", choices=["ipfp", "e-ipfp", "d-ipfp"],
                     default="e-ipfp")
    run.add_argument("--epsilon", type=_positive_float, default=1e-9,
                     help="convergence tolerance (default 1e-9)")
    run.add_argument("--max-cycles", type=_positive_int, default=10_000,
                     dest="max_cycles", help="cycle budget (default 10000)")
    run.add_argument("--schedule", choices=["document-order", "ancestors-first"],
                     default="document-order",
                     help="constraint visiting order within a cycle")
    run.add_argument("--out", required=True, help="output network file")
    run.add_argument("--report", help="optional run report file")
    run.set_defaults(func=cmd_run)

    check = sub.add_parser(
        "check",
        help="measure a network against constraints",
        description="Print the residual of every constraint and the "
                    "structural residual of the network's joint; exit 1 if "
                    "any constraint is off by more than epsilon.",
    )
    check.add_argument("--network", required=True)
    check.add_argument("--constraints", required=True)
    check.add_argument("--epsilon", type=_positive_float, default=1e-9)
    check.set_defaults(func=cmd_check)

    div = sub.add_parser(
        "divergence",
        help="I-divergence between the joints of two networks",
        description="Print the I-divergence (natural log) of the first "
                    "network's joint from the second's. The declarations "
                    "must match.",
    )
    div.add_argument("first", help="network file whose joint is P")
    div.add_argument("second", help="network file whose joint is Q")
    div.set_defaults(func=cmd_divergence)

    gen = sub.add_parser(
        "gen",
        help="write a seeded random instance",
        description="Generate a sparse random network and a satisfiable "
                    "constraint set for it, deterministically from the seed, "
                    "and write both files.",
    )
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--nodes", type=_positive_int, default=15)
    gen.add_argument("--num-constraints", type=_positive_int, default=8,
                     dest="num_constraints")
    gen.add_argument("--network", required=True, help="output network file")
    gen.add_argument("--constraints", required=True, help="output constraint file")
    gen.set_defaults(func=cmd_gen)

    return parser


def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _require_dense(net: NetworkSpec, what: str) -> None:
    if len(net.variables) > DENSE_CEILING:
        raise DenseCeilingError(
            f"{what} needs the dense joint over {len(net.variables)} "
            f"variables; the ceiling is {DENSE_CEILING}"
        )


def cmd_run(cfg: CliConfig) -> int:
    net = parse_network(_read(cfg.network))
    constraints = parse_constraints(_read(cfg.constraints), net)
    stop = StopPolicy(epsilon=cfg.epsilon, max_cycles=cfg.max_cycles)
    if cfg.schedule == "ancestors-first":
        schedule = Schedule.ancestors_first(net, constraints)
    else:
        schedule = Schedule.document_order(len(constraints))

    report: RunReport
    if cfg.algorithm == "d-ipfp":
        out_net, report = run_d_ipfp(net, constraints, stop, schedule,
                                     dense_report_ceiling=DENSE_CEILING)
    elif cfg.algorithm == "e-ipfp":
        _require_dense(net, "e-ipfp")
        out_net, report = run_e_ipfp(net, constraints, stop, schedule)
    else:
        _require_dense(net, "ipfp")
        q, report = run_ipfp(net, constraints, stop, schedule)
        if report.cycles == 0:
            out_net = net
        else:
            cpts = {
                v.name: extract_cpt(q, v.name, net.parents[v.name])
                for v in net.variables
            }
            out_net = NetworkSpec(net.variables, net.parents, cpts)

    write_atomic(cfg.out, serialize_network(out_net))
    if cfg.report:
        write_atomic(cfg.report, report_to_bytes(report))

    worst = max(report.per_constraint_residuals, default=0.0)
    divergence = ("n/a" if report.final_divergence is None
                  else format(report.final_divergence, ".6g"))
    print(f"{cfg.algorithm}: {report.termination.value} after "
          f"{report.cycles} cycles; max residual {worst:.3e}; "
          f"divergence {divergence}; wrote {cfg.out}")
    return _TERMINATION_EXIT[report.termination]


def cmd_check(cfg: CliConfig) -> int:
    net = parse_network(_read(cfg.network))
    constraints = parse_constraints(_read(cfg.constraints), net)
    violations = 0
    for i, r in enumerate(constraints, start=1):
        m = marginal(net, r.scope)
        residual = float(np.max(np.abs(m - r.dist.probs)))
        ok = residual <= cfg.epsilon
        violations += 0 if ok else 1
        scope = ", ".join(r.scope)
        print(f"constraint {i} over ({scope}): residual {residual:.3e} "
              f"{'ok' if ok else 'VIOLATED'}")
    if len(net.variables) <= DENSE_CEILING:
        q = joint_from_network(net)
        gap = float(np.max(np.abs(q.probs - _reextracted_product(q, net))))
        print(f"structural residual: {gap:.3e}")
    else:
        print(f"structural residual: skipped ({len(net.variables)} variables "
              f"is over the dense ceiling of {DENSE_CEILING}); a network's "
              f"own joint factors by construction")
    if violations:
        print(f"result: {violations} of {len(constraints)} constraints "
              f"violated at epsilon {cfg.epsilon:g}")
        return EXIT_CHECK_FAILED
    print(f"result: all {len(constraints)} constraints met at epsilon "
          f"{cfg.epsilon:g}")
    return EXIT_OK


def cmd_divergence(cfg: CliConfig) -> int:
    first = parse_network(_read(cfg.first))
    second = parse_network(_read(cfg.second))
    if first.variables != second.variables:
        raise ValidationError(
            "the two networks declare different variables; divergence needs "
            "identical declarations"
        )
    _require_dense(first, "divergence")
    value = i_divergence(joint_from_network(first), joint_from_network(second))
    print(format(value, ".17g"))
    return EXIT_OK


def cmd_gen(cfg: CliConfig) -> int:
    net, constraints = generate_instance(cfg.seed, n_nodes=cfg.nodes,
                                         num_constraints=cfg.num_constraints)
    write_atomic(cfg.network, serialize_network(net))
    write_atomic(cfg.constraints, serialize_constraints(constraints))
    print(f"wrote {cfg.network} ({cfg.nodes} variables) and "
          f"{cfg.constraints} ({len(constraints)} constraints)")
    return EXIT_OK


def _configure_logging() -> None:
    level_name = os.environ.get("BNREFIT_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging()
    cfg = CliConfig.from_args(args)
    try:
        return args.func(cfg)
    except SubnetSizeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SUBNET_BUDGET
    except DominanceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMINANCE
    except DenseCeilingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DENSE_CEILING
    except (BnError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
