"""Command-line entry point: ``rmj generate | fit | eval | verify | demo-inconsistency | convert-sushi``."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from collections import defaultdict
from pathlib import Path
from typing import Sequence

import numpy as np

from . import io
from .choice import ChoiceData, component_log_probs, logsumexp_rows, mixture_log_likelihood
from .estimation import FitOptions, coverage_report, fit
from .mixture import EmOptions, MixtureModel, fit_mixture
from .oracle import ORACLE_CAP, f_n, inconsistency_demo, verify_suite
from .ranking import Ranking, validate_q
from .simulate import DisplayPolicy, generate

EXIT_OK, EXIT_INVALID, EXIT_VERIFY = 0, 1, 2


def _parse_center(text: str, n: int) -> Ranking:
    center = Ranking(tuple(int(t) for t in text.replace(",", " ").split()))
    if center.n != n:
        raise ValueError(f"centre lists {center.n} items but n={n}")
    return center


def _load_generating_model(args) -> MixtureModel:
    if args.model:
        return io.read_model(args.model)
    if args.n is None or args.q is None:
        raise ValueError("give either --model or both --n and --q")
    center = _parse_center(args.center, args.n) if args.center else Ranking.identity(args.n)
    return MixtureModel.single(center, validate_q(args.q))


def _out_stream(path: str | None):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", encoding="utf-8", newline="\n")


def _emit_json(obj, path: str | None = None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_generate(args) -> int:
    mix = _load_generating_model(args)
    policy = DisplayPolicy(args.policy, mix.n)
    if args.T < 0:
        raise ValueError("T must be nonnegative")
    records = generate(mix, args.T, policy, args.k, np.random.default_rng(args.seed))
    stream = _out_stream(args.out)
    try:
        io.write_choice_log(stream, mix.n, records)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


def _load_data(path: str) -> ChoiceData:
    chlog = io.read_choice_log(path)
    if not chlog.records:
        raise ValueError(f"{path}: no records")
    return ChoiceData.from_observations(chlog.records, chlog.n)


def cmd_fit(args) -> int:
    cd = _load_data(args.log)
    cov = coverage_report(cd)
    report: dict = {"n": cd.n, "records": int(cd.total), "components": args.mixture}
    if args.mixture == 1:
        res = fit(cd, FitOptions(args.exact_cap, args.restarts, args.seed))
        mix = MixtureModel.single(res.center, res.q_hat)
        report.update(objective=res.objective, solver_status=res.solver_status)
    else:
        options = EmOptions(restarts=args.restarts, exact_cap=args.exact_cap, seed=args.seed)
        mix, trace = fit_mixture(cd, args.mixture, options)
        report.update(
            solver_status="exact" if cd.n <= args.exact_cap else "heuristic",
            em={"restart": trace.restart, "iterations": trace.iterations, "termination": trace.reason},
        )
    report["log_likelihood"] = mixture_log_likelihood(mix, cd)
    report["coverage"] = {"fully_covered": cov.fully_covered, "uncovered_pairs": [list(p) for p in cov.uncovered]}
    if not cov.fully_covered:
        print(f"warning: {len(cov.uncovered)} item pairs never appear together; their order is not identifiable", file=sys.stderr)
    report["model"] = io.model_to_dict(mix)
    if args.out:
        io.write_model(args.out, mix)
    _emit_json(report, args.report)
    return EXIT_OK


def evaluate(mix: MixtureModel, cd: ChoiceData) -> dict:
    per_obs = logsumexp_rows(component_log_probs(mix, cd))
    uniform = np.array([-(math.lgamma(m + 1) - math.lgamma(m - k + 1)) for m, k in zip(cd.sizes.tolist(), cd.ks.tolist())])
    by_size: dict[int, list[float]] = defaultdict(lambda: [0.0, 0.0, 0.0])
    for size, c, ll, u in zip(cd.sizes.tolist(), cd.counts.tolist(), per_obs.tolist(), uniform.tolist()):
        acc = by_size[size]
        acc[0] += c
        acc[1] += c * ll
        acc[2] += c * u
    total = float(np.dot(cd.counts, per_obs))
    base = float(np.dot(cd.counts, uniform))
    return {
        "records": int(cd.total),
        "log_likelihood": total,
        "mean_log_likelihood": total / cd.total,
        "uniform_log_likelihood": base,
        "uniform_mean_log_likelihood": base / cd.total,
        "by_display_size": [
            {
                "size": s,
                "records": int(a[0]),
                "log_likelihood": a[1],
                "mean_log_likelihood": a[1] / a[0],
                "uniform_log_likelihood": a[2],
            }
            for s, a in sorted(by_size.items())
        ],
    }


def cmd_eval(args) -> int:
    mix = io.read_model(args.model)
    chlog = io.read_choice_log(args.log)
    if chlog.n != mix.n:
        raise ValueError(f"log has n={chlog.n} but the model has n={mix.n}")
    if not chlog.records:
        raise ValueError(f"{args.log}: no records")
    cd = ChoiceData.from_observations(chlog.records, chlog.n)
    _emit_json(evaluate(mix, cd), args.report)
    return EXIT_OK


def _q_grid(text: str) -> list[float]:
    return [validate_q(float(t)) for t in text.split(",") if t.strip()]


def cmd_verify(args) -> int:
    if args.n > ORACLE_CAP:
        raise ValueError(f"n={args.n} exceeds the oracle cap of {ORACLE_CAP}")
    center = _parse_center(args.center, args.n) if args.center else None
    results = verify_suite(args.n, _q_grid(args.q_grid), center)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name:<14} cases={r.cases:<6} max_error={r.max_error:.3e} tol={r.tolerance:.0e}")
    ok = all(r.passed for r in results)
    print("verify: all checks passed" if ok else "verify: FAILED")
    return EXIT_OK if ok else EXIT_VERIFY


def _one_based(r: Ranking) -> str:
    return "(" + ",".join(str(x + 1) for x in r.order) + ")"


def cmd_demo(args) -> int:
    if args.n < 4:
        raise ValueError("the construction needs n >= 4")
    q = validate_q(args.q)
    fv = f_n(args.n, q)
    print(f"n={args.n} q={q!r} (items numbered from 1)")
    print(f"F_n(q) = {fv:.12g}")
    if fv <= 0:
        # nothing to enumerate: the construction does not apply here
        print("construction inconclusive: F_n(q) <= 0")
        return EXIT_OK
    if args.n > ORACLE_CAP:
        raise ValueError(f"n={args.n} exceeds the oracle cap of {ORACLE_CAP}")
    rep = inconsistency_demo(args.n, q)
    print(f"max |choice prob difference| over displays of size >= 3: {rep.choice_max_diff:.3e}")
    print(f"max |top-(n-2) marginal difference|: {rep.marginal_max_diff:.3e}")
    print(f"P(item {rep.n - 1} before item {rep.n}) = {rep.swapped_pair_prob:.12g}")
    print(f"min P(i before j) over other pairs i<j = {rep.other_pairs_min:.12g}")
    print(f"P_A closed form = {rep.pa_closed:.15g}, enumerated = {rep.pa_enumerated:.15g}")
    print(f"max class probability difference: {rep.class_max_diff:.3e}")
    print(f"group-1 mass closed form = {rep.group1_closed:.15g}, enumerated = {rep.group1_enumerated:.15g}")
    print(f"true ranking      {_one_based(rep.truth)}")
    print(f"recovered ranking {_one_based(rep.recovered)}")
    print("demo: inconsistency reproduced" if rep.passed else "demo: FAILED")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_convert_sushi(args) -> int:
    chlog = io.read_sushi(args.input, args.k)
    stream = _out_stream(args.out)
    try:
        io.write_choice_log(stream, chlog.n, chlog.records)
    finally:
        if stream is not sys.stdout:
            stream.close()
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors count as validation failures (exit 1); 2 is reserved for failed checks."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rmj", description="RMJ ranking and choice models.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="sample a synthetic choice log")
    g.add_argument("--model", help="model file to sample from")
    g.add_argument("--n", type=int, help="universe size (inline single model)")
    g.add_argument("--q", type=float, help="dispersion (inline single model)")
    g.add_argument("--center", help="comma-separated centre, default identity")
    g.add_argument("--T", type=int, required=True, help="number of records")
    g.add_argument("--policy", default="full", help="full | all-pairs | all-subsets-ge:M | file:PATH")
    g.add_argument("--k", type=int, default=1, help="length of each ranked response")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", help="output path, default stdout")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="estimate a model or mixture from a choice log")
    f.add_argument("log")
    f.add_argument("--mixture", type=int, default=1, metavar="M")
    f.add_argument("--seed", type=int, required=True)
    f.add_argument("--exact-cap", type=int, default=20)
    f.add_argument("--restarts", type=int, default=20)
    f.add_argument("--out", help="write the model file here")
    f.add_argument("--report", help="write the JSON report here, default stdout")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("eval", help="log-likelihood of a choice log under a model")
    e.add_argument("--model", required=True)
    e.add_argument("log")
    e.add_argument("--report", help="write the JSON report here, default stdout")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="check closed forms against enumeration")
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--q-grid", default="0.1,0.5,0.9")
    v.add_argument("--center", help="comma-separated centre, default identity")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("demo-inconsistency", help="reproduce the Mallows-smoothing counterexample")
    d.add_argument("--n", type=int, required=True)
    d.add_argument("--q", type=float, required=True)
    d.set_defaults(func=cmd_demo)

    c = sub.add_parser("convert-sushi", help="convert sushi-survey rankings to a choice log")
    c.add_argument("input")
    c.add_argument("--k", type=int, help="keep only the top k of each ranking")
    c.add_argument("--out", help="output path, default stdout")
    c.set_defaults(func=cmd_convert_sushi)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:  # FormatError is a ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
