"""Command-line front end.

Every command reads angles from a CSV file (or simulates them), runs one
model family and writes a JSON report plus, for learners, the graph as
JSON and DOT into the output directory.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .core import AngleMatrix, circular_summary
from .errors import InvalidArgumentError, TorographError
from .glasso import stability_select
from .graphs import Dag, dag_validate, emit_graph, parse_graph, separates
from .io import atomic_write, dump_json, export_ramachandran, ingest_csv, matrix_csv
from .nonparanormal import isnpn_fit
from .sine_vm import CvmDagModel, cvm_lrt_select, cvm_sample
from .stereographic import DEFAULT_EPSILON, IsnParams, isn_ci_query, isn_fit
from .wrapped_normal import WindingTruncation, WnParams, unwrapped_edge_select, wn_fit_approx_mle, wn_sample

logger = logging.getLogger("torograph")

EXIT_OK, EXIT_CONFIG, EXIT_PARSE, EXIT_NUMERICAL, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


class ConfigError(InvalidArgumentError):
    exit_code = EXIT_CONFIG


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _vertices(text, columns):
    """Comma-separated 1-based indices or column names to 0-based indices."""
    out = []
    for tok in (t.strip() for t in (text or "").split(",")):
        if not tok:
            continue
        if tok.isdigit():
            idx = int(tok) - 1
            if not 0 <= idx < len(columns):
                raise ConfigError(f"vertex {tok} out of range 1..{len(columns)}")
            out.append(idx)
        elif tok in columns:
            out.append(columns.index(tok))
        else:
            raise ConfigError(f"unknown vertex {tok!r}")
    return out


def _common(p, stochastic=False, needs_input=True):
    if needs_input:
        p.add_argument("--input", required=True, help="CSV file with a header row of column names")
        p.add_argument("--degrees", action="store_true", help="input angles are in degrees")
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=stochastic, default=None)
    p.add_argument("--error-json", action="store_true", help="also print errors as JSON on stdout")


def build_parser():
    parser = _Parser(prog="torograph", description="Graphical models for angles on the torus.")
    parser.add_argument("--version", action="version", version=f"torograph {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit-wn", help="unwrapped Normal graph (wrapped Normal fit + Holm-corrected tests)")
    _common(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--truncation", type=int, default=1, help="winding-number radius r, grid {-r..r}^p")
    p.add_argument("--test-scale", choices=["precision", "covariance"], default="precision")

    for name, kind in (("fit-isn", "isn"), ("fit-isnpn", "isnpn")):
        p = sub.add_parser(name, help=f"{kind} graph by stability selection over an adaptive graphical lasso")
        _common(p, stochastic=True)
        p.add_argument("--folds", type=int, default=5)
        p.add_argument("--repeats", type=int, default=50)
        p.add_argument("--threshold", type=float, default=0.5)
        p.add_argument("--rho-grid", type=_floats, default=None, help="comma-separated penalties")
        p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)

    p = sub.add_parser("fit-cvm-dag", help="conditional von Mises DAG with likelihood-ratio edge selection")
    _common(p)
    p.add_argument("--ordering", required=True, help="node ordering: 1-based indices or column names")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--correction", choices=["none", "holm"], default="none")

    p = sub.add_parser("simulate", help="draw a sample from one of the model families")
    _common(p, stochastic=True, needs_input=False)
    p.add_argument("--model", choices=["wn", "isn", "isnpn", "cvm"], required=True)
    p.add_argument("--p", type=int, default=3)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--params", default=None, help="JSON file with model parameters (default: a chain model)")

    p = sub.add_parser("ci-query", help="conditional independence / separation query")
    _common(p, needs_input=False)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--sigma", help="covariance matrix as JSON (list of rows) or headerless CSV")
    src.add_argument("--graph", help="graph JSON as written by the fit commands")
    p.add_argument("--A", dest="set_a", required=True)
    p.add_argument("--C", dest="set_c", required=True)
    p.add_argument("--S", dest="set_s", default="")

    p = sub.add_parser("summary", help="circular summaries and Ramachandran scatter data")
    _common(p)
    p.add_argument("--pairs", default="", help="column pairs as a:b,c:d for the scatter export")
    return parser


def _config_echo(args):
    # the output directory is not part of the result
    skip = {"verbose", "error_json", "output"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _document(args, **body):
    doc = {"tool": "torograph", "version": __version__, "command": args.command,
           "config": _config_echo(args), "seed": args.seed}
    doc.update(body)
    return doc


def _write_outputs(args, doc, graph=None, report=None):
    out = args.output
    atomic_write(os.path.join(out, "report.json"), dump_json(doc))
    if graph is not None:
        atomic_write(os.path.join(out, "graph.json"), emit_graph(graph, "json", report) + "\n")
        atomic_write(os.path.join(out, "graph.dot"), emit_graph(graph, "dot"))


def _load(args):
    return ingest_csv(args.input, "degrees" if args.degrees else "radians")


def cmd_fit_wn(args):
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    data = _load(args)
    trunc = WindingTruncation(args.truncation, data.p)
    fit = wn_fit_approx_mle(data, trunc)
    graph, report = unwrapped_edge_select(fit.params, data.n, args.alpha, args.test_scale, data=data,
                                          trunc=trunc, labels=data.columns)
    summary = circular_summary(data)
    doc = _document(
        args,
        model="unwrapped-normal",
        columns=list(data.columns),
        n=data.n,
        parameters=fit.params.as_dict(),
        loglik=fit.loglik,
        edges=report.as_list(),
        diagnostics={
            "converged": fit.converged,
            "iterations": fit.n_iter,
            "truncation_radius": args.truncation,
            "truncation_saturation": fit.saturation,
            "condition_number": float(np.linalg.cond(fit.params.sigma)),
            "mardia_variance": summary.mardia_variance,
        },
        graph=json.loads(emit_graph(graph, "json", report)),
    )
    _write_outputs(args, doc, graph, report)


def cmd_fit_stereo(args):
    kind = "isn" if args.command == "fit-isn" else "isnpn"
    data = _load(args)
    graph, stab = stability_select(data, kind, folds=args.folds, repeats=args.repeats, threshold=args.threshold,
                                   rho_grid=args.rho_grid, seed=args.seed, epsilon=args.epsilon)
    if kind == "isn":
        params = isn_fit(data, args.epsilon)
        extra = {"parameters": params.as_dict()}
    else:
        model = isnpn_fit(data, args.epsilon)
        extra = {"parameters": model.params.as_dict(), "transform": model.transform.as_dict()}
    report = stab.edge_report()
    doc = _document(
        args,
        model=kind,
        columns=list(data.columns),
        n=data.n,
        edges=report.as_list(),
        stability=stab.as_dict(),
        diagnostics={"failed_repeats": stab.failed, "failures": stab.failures},
        graph=json.loads(emit_graph(graph, "json", report)),
        **extra,
    )
    _write_outputs(args, doc, graph, report)


def cmd_fit_cvm(args):
    data = _load(args)
    ordering = _vertices(args.ordering, list(data.columns))
    if sorted(ordering) != list(range(data.p)):
        raise ConfigError("--ordering must list every column exactly once")
    correction = None if args.correction == "none" else args.correction
    dag, report, model = cvm_lrt_select(data, ordering, alpha=args.alpha, correction=correction)
    doc = _document(
        args,
        model="conditional-von-mises-dag",
        columns=list(data.columns),
        n=data.n,
        parameters=model.as_dict(),
        edges=report.as_list(),
        graph=json.loads(emit_graph(dag, "json", report)),
    )
    _write_outputs(args, doc, dag, report)


def chain_covariance(p, partial=0.5, variance=0.3):
    """Covariance whose inverse is tridiagonal with the given partial correlations."""
    omega = np.eye(p) - partial * (np.eye(p, k=1) + np.eye(p, k=-1))
    sigma = np.linalg.inv(omega)
    d = np.sqrt(np.diag(sigma))
    return variance * sigma / np.outer(d, d)


def _simulate(args):
    params = None
    if args.params:
        with open(args.params, encoding="utf-8") as fh:
            params = json.load(fh)
    p, n = args.p, args.n
    if p < 1 or n < 1:
        raise ConfigError("--p and --n must be positive")
    labels = tuple(f"theta{j + 1}" for j in range(p))
    if args.model == "cvm":
        if params:
            parents = [[] for _ in range(len(params["mu"]))]
            lam = {}
            for parent, child, value in params["lambda"]:
                parents[child - 1].append(parent - 1)
                lam[(parent - 1, child - 1)] = value
            ordering = [v - 1 for v in params.get("ordering", range(1, len(parents) + 1))]
            labels = tuple(f"theta{j + 1}" for j in range(len(parents)))
            model = CvmDagModel(dag_validate(ordering, parents, labels), params["mu"], params["kappa"], lam)
        else:
            dag = dag_validate(range(p), [[j - 1] if j else [] for j in range(p)], labels)
            model = CvmDagModel(dag, np.zeros(p), np.full(p, 2.0), {(j - 1, j): 1.0 for j in range(1, p)})
        return cvm_sample(model, n, args.seed), model.as_dict(), None
    if params:
        mu, sigma = np.asarray(params["mu"], float), np.asarray(params["sigma"], float)
    else:
        mu, sigma = np.zeros(p), chain_covariance(p, variance=0.3 if args.model == "wn" else 1.0)
    if args.model == "wn":
        wn = WnParams(mu, sigma)
        data, windings = wn_sample(wn, n, args.seed)
        return data, wn.as_dict(), windings
    rng = np.random.default_rng(args.seed)
    x = rng.multivariate_normal(mu, sigma, size=n, method="cholesky")
    if args.model == "isnpn":
        # h = asinh, so U = sinh(X)
        x = np.sinh(x)
    return AngleMatrix(2.0 * np.arctan(x), labels[: x.shape[1]]), IsnParams(mu, sigma).as_dict(), None


def cmd_simulate(args):
    data, params, windings = _simulate(args)
    atomic_write(os.path.join(args.output, "samples.csv"), matrix_csv(data.columns, data.values))
    if windings is not None:
        atomic_write(os.path.join(args.output, "windings.csv"), matrix_csv(data.columns, windings))
    _write_outputs(args, _document(args, model=args.model, parameters=params, n=data.n, p=data.p))


def _read_matrix(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return np.asarray(json.loads(text), dtype=float)
    except json.JSONDecodeError:
        return np.loadtxt(path, delimiter=",", ndmin=2)


def cmd_ci_query(args):
    if args.sigma:
        sigma = _read_matrix(args.sigma)
        names = [str(j + 1) for j in range(sigma.shape[0])]
        A, C, S = (_vertices(x, names) for x in (args.set_a, args.set_c, args.set_s))
        result = isn_ci_query(sigma, A, C, S)
        how = "isn-precision"
    else:
        with open(args.graph, encoding="utf-8") as fh:
            graph = parse_graph(fh.read())
        if isinstance(graph, Dag):
            raise ConfigError("ci-query needs an undirected graph")
        names = list(graph.labels)
        A, C, S = (_vertices(x, names) for x in (args.set_a, args.set_c, args.set_s))
        result = separates(graph, A, C, S)
        how = "graph-separation"
    doc = _document(args, method=how, A=[a + 1 for a in A], C=[c + 1 for c in C], S=[s + 1 for s in S],
                    independent=result)
    _write_outputs(args, doc)
    print(json.dumps({"independent": result}))


def cmd_summary(args):
    data = _load(args)
    summary = circular_summary(data)
    pairs = []
    for tok in (t.strip() for t in args.pairs.split(",")):
        if tok:
            a, sep, b = tok.partition(":")
            if not sep:
                raise ConfigError(f"pair {tok!r} must look like a:b")
            pairs.append((a, b))
    for a, b in pairs:
        data.column_index(a), data.column_index(b)
    path = export_ramachandran(data, pairs, os.path.join(args.output, "ramachandran.csv"))
    _write_outputs(args, _document(args, n=data.n, summary=summary.as_dict(),
                                   ramachandran=None if path is None else "ramachandran.csv"))


COMMANDS = {
    "fit-wn": cmd_fit_wn,
    "fit-isn": cmd_fit_stereo,
    "fit-isnpn": cmd_fit_stereo,
    "fit-cvm-dag": cmd_fit_cvm,
    "simulate": cmd_simulate,
    "ci-query": cmd_ci_query,
    "summary": cmd_summary,
}


def _exit_code(exc):
    if isinstance(exc, TorographError):
        return exc.exit_code
    if isinstance(exc, (OSError, ValueError, KeyError, json.JSONDecodeError)):
        return EXIT_PARSE
    return EXIT_NUMERICAL


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    want_json = "--error-json" in argv
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args)
    except (TorographError, OSError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        code = _exit_code(exc)
        print(f"torograph: error: {exc}", file=sys.stderr)
        if want_json:
            err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
            for attr in ("row", "column", "condition_number"):
                if getattr(exc, attr, None) is not None:
                    err[attr] = getattr(exc, attr)
            print(json.dumps(err, sort_keys=True))
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
