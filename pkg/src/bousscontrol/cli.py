"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (usage, config, validation),
2 numerical failure (solver breakdown, CFL violation or a failed check).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .adjoint import gradient_check
from .config import ConfigError, load_config
from .forms import DiscreteForms, check_smallness, coercivity_constants, form_identity_battery
from .optimize import GroupParametrization, conditional_gradient_solve, projected_gradient_solve
from .oracle import brute_force_oracle
from .outputs import write_outputs
from .state import NumericalError

log = logging.getLogger("bousscontrol")

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (default: output.dir from the config)")
    common.add_argument("--seed", type=int, help="seed for every random draw (overrides the config)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dot-path override, e.g. physics.beta=0 (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")
    p = _Parser(prog="bousscontrol", description="Boundary control of Boussinesq flow on a staggered grid.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="forward solve with the initial controls")
    sub.add_parser("optimize", parents=[common], help="minimise the cost over the admissible box")
    g = sub.add_parser("gradient-check", parents=[common], help="adjoint gradient vs central differences")
    g.add_argument("--flip-sign", action="store_true", help="negate the adjoint pairing (sanity check)")
    sub.add_parser("verify-forms", parents=[common], help="skew-symmetry and coercivity battery")
    sub.add_parser("check-smallness", parents=[common], help="smallness condition for uniqueness")
    sub.add_parser("oracle", parents=[common], help="exhaustive search over a 3-parameter control family")
    return p


def _out_dir(args, cfg) -> Path:
    return Path(args.out if args.out else cfg["output"]["dir"])


def cmd_simulate(args, cfg) -> int:
    prob = cfg.problem()
    v = cfg.initial_controls(prob.domain, prob.time)
    traj = prob.forward(v)
    J = prob.cost(v)
    summary = {"J": J, "max_div": float(traj.max_div.max()), "max_cfl": float(traj.cfl.max()),
               "sup_norms": traj.sup_norms()}
    manifest = write_outputs(_out_dir(args, cfg), cfg, trajectory=traj, controls=v,
                             documents={"summary.json": summary})
    print(f"J = {J:.12g}; max |div z| = {summary['max_div']:.2e}; {len(manifest['files'])} files written")
    return EXIT_OK


def cmd_optimize(args, cfg) -> int:
    prob = cfg.problem()
    v0 = cfg.initial_controls(prob.domain, prob.time)
    a = cfg["algorithm"]
    solver = projected_gradient_solve if a["method"] == "projected_gradient" else conditional_gradient_solve
    rep = solver(prob, v0, tol_rel=a["tol_rel"], max_iter=a["max_iter"], parametrization=cfg.parametrization(prob.domain))
    traj = prob.forward(rep.controls)
    adj = rep.adjoint
    write_outputs(_out_dir(args, cfg), cfg, trajectory=traj, controls=rep.controls, report=rep, adjoint=adj)
    print(f"{rep.method}: {rep.n_iter} iterations, J = {rep.J_final:.12g}, R = {rep.residual[-1]:.3e} "
          f"(tol {rep.tol:.3e}), termination: {rep.termination}, "
          f"bang-bang agreement {rep.switching.get('agreement', float('nan')):.3f}")
    return EXIT_OK if rep.converged else EXIT_NUMERICAL


def cmd_gradient_check(args, cfg) -> int:
    prob = cfg.problem()
    v = cfg.initial_controls(prob.domain, prob.time)
    rep = gradient_check(prob, v, epsilons=cfg["algorithm"]["epsilons"], seed=cfg.seed, flip_sign=args.flip_sign)
    write_outputs(_out_dir(args, cfg), cfg, documents={"gradient_check.json": rep.as_dict()})
    print(rep.table())
    return EXIT_OK if rep.passed else EXIT_NUMERICAL


def cmd_verify_forms(args, cfg) -> int:
    checks = form_identity_battery(cfg.domain(), cfg.params(), samples=cfg["algorithm"]["samples"], seed=cfg.seed)
    rows = []
    for c in checks:
        line = f"{'PASS' if c.passed else 'FAIL'}  {c.name:<34} value={c.value:.3e}  tol={c.tol:.1e}"
        print(line)
        rows.append({"name": c.name, "value": c.value, "tol": c.tol, "passed": c.passed})
    write_outputs(_out_dir(args, cfg), cfg, documents={"verify_forms.json": rows})
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


def cmd_check_smallness(args, cfg) -> int:
    d = cfg.domain()
    params = cfg.params()
    c1, c1p = coercivity_constants(d, DiscreteForms(d, params))
    rep = check_smallness(params, c1, c1p)
    doc = {"c1": c1, "c1_prime": c1p, "lhs": rep.lhs, "rhs": rep.rhs, "margin": rep.margin, "passes": rep.passes}
    write_outputs(_out_dir(args, cfg), cfg, documents={"smallness.json": doc})
    print(f"c1 = {c1:.10g}, c1' = {c1p:.10g}")
    print(f"lhs = {rep.lhs:.10g}, rhs = {rep.rhs:.10g}: {'PASS' if rep.passes else 'FAIL'}")
    return EXIT_OK


def cmd_oracle(args, cfg) -> int:
    prob = cfg.problem()
    d = prob.domain
    a1, b1, a2, b2 = cfg.bounds(d)
    if any(np.ptp(x) > 0 for x in (a1, b1, a2, b2)):
        raise ConfigError("the oracle needs scalar bounds")
    par = GroupParametrization.inlet_outlet_walls(d, (a1[0], b1[0], a2[0], b2[0]))
    v0 = cfg.initial_controls(d, prob.time)
    res = brute_force_oracle(prob, par, levels=cfg["algorithm"]["oracle_levels"], template=v0)
    rep = projected_gradient_solve(prob, v0, tol_rel=cfg["algorithm"]["tol_rel"],
                                   max_iter=cfg["algorithm"]["max_iter"], parametrization=par)
    rel = (rep.J_final - res.best_J) / max(abs(res.best_J), 1e-300)
    ok = rel <= 1e-8
    out = _out_dir(args, cfg)
    names = ["v1_left", "v1_right", "v2_walls"]
    doc = {"oracle_best_J": res.best_J, "oracle_best_theta": res.best_theta, "optimizer_J": rep.J_final,
           "optimizer_theta": rep.x, "relative_difference": rel, "agree": ok}
    write_outputs(out, cfg, report=rep, tables={"oracle_table.csv": (names + ["J"], res.table)},
                  documents={"oracle.json": doc})
    print(f"oracle best J = {res.best_J:.12g} at {np.round(res.best_theta, 12).tolist()}")
    print(f"restricted optimizer J = {rep.J_final:.12g} at {np.round(rep.x, 12).tolist()}")
    print(f"{'PASS' if ok else 'FAIL'}: relative difference {rel:.2e}")
    return EXIT_OK if ok else EXIT_NUMERICAL


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "gradient-check": cmd_gradient_check,
            "verify-forms": cmd_verify_forms, "check-smallness": cmd_check_smallness, "oracle": cmd_oracle}


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.override, args.seed)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
