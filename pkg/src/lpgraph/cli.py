"""Command line interface.

Exit status 0 on success, 2 on configuration or input errors, 3 on numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import io as lio
from .harness import (POWER_HEADER, ConfigError, ExperimentConfig, load_config, make_probability,
                      run_eigendecay, run_null_histogram, run_power_table)
from .inference import estimate_p, verify_expansion
from .linalg import SolverError, dense_matvec, eig_dense, eig_topk_lanczos
from .lptest import TestConfig, adaptive_spectrum, run_pair_test
from .model import ModelError, sample_adjacency
from .rng import replicate_seed
from .theory import bound_certificate, default_j_max, select_rank_datadriven, select_rank_test

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit(args, header, rows):
    text = lio.csv_text(header, rows)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _config(args) -> ExperimentConfig:
    if not getattr(args, "config", None):
        raise ConfigError("--config is required")
    overrides = {"seed": args.seed, "n": args.n, "rho": args.rho,
                 "replicates": args.replicates, "threads": args.threads,
                 "epsilon": args.epsilon, "alpha": args.alpha, "draws": args.draws,
                 "rank_mode": args.rank}
    if args.hollow:
        overrides["hollow"] = "1"
    if getattr(args, "exclude_self", False):
        overrides["exclude_self"] = "1"
    return load_config(args.config, overrides)


def _graph(args):
    if not args.edges:
        raise ConfigError("--edges is required")
    return lio.read_graph(args.edges)


def _spectrum(a: np.ndarray, k: int, seed: int):
    n = a.shape[0]
    if n <= 400 or 4 * k > n:
        return eig_dense(a, max_n=max(n, 4000)).head(min(k, n))
    return eig_topk_lanczos(dense_matvec(a), n, k, seed=seed)


# subcommands ----------------------------------------------------------------

def cmd_simulate(args):
    cfg = _config(args)
    eps = cfg.eps_grid[0] if cfg.eps_grid else None
    sample, p = make_probability(cfg, eps)
    adj = sample_adjacency(p, replicate_seed(cfg.base_seed, 0), hollow=cfg.hollow)
    if not args.out:
        raise ConfigError("--out is required")
    lio.write_edge_list(adj, args.out)
    if args.packed:
        lio.write_packed(adj, args.packed)
    if args.latents_out:
        lio.write_csv(args.latents_out, [f"x{k}" for k in range(sample.coords.shape[1])],
                      sample.coords.tolist())


def cmd_spectrum(args):
    a = _graph(args).dense()
    dec = _spectrum(a, args.k, args.seed or 0)
    rows = [(k, dec.eigenvalues[k], dec.residuals[k]) for k in range(dec.k)]
    _emit(args, ["index", "eigenvalue", "residual"], rows)
    if args.vectors:
        lio.write_decomposition(dec, args.out or "/dev/null", args.vectors)


def cmd_select_rank(args):
    adj = _graph(args)
    a = adj.dense()
    n = a.shape[0]
    j_max = args.j_max or default_j_max(n, n)
    if args.rule == "test":
        d_ave = float(a.sum()) / n
        dec = adaptive_spectrum(a, d_ave, j_max, TestConfig(seed=args.seed or 0))
        rep = select_rank_test(dec.eigenvalues, d_ave, n, j_max=min(j_max, dec.k - 1))
    else:
        dec = _spectrum(a, j_max + 1, args.seed or 0)
        rho = args.rho if args.rho is not None else 1.0
        rep = select_rank_datadriven(dec.eigenvalues, args.nu, n, rho, j_max=j_max,
                                     general=args.rule == "datadriven-general")
    if rep.rhat is None:
        print(f"warning: {rep.warning or 'no admissible rank'}", file=sys.stderr)
    _emit(args, ["j", "gap", "threshold", "admissible"], rep.rows())


def cmd_estimate_p(args):
    a = _graph(args).dense()
    n = a.shape[0]
    if args.rank in (None, "auto"):
        d_ave = float(a.sum()) / n
        dec = adaptive_spectrum(a, d_ave, default_j_max(n, n), TestConfig())
        r = select_rank_test(dec.eigenvalues, d_ave, n, j_max=dec.k - 1).rhat or 1
    else:
        r = int(args.rank)
        dec = _spectrum(a, r, 0)
    phat = estimate_p(dec, r, clip=args.clip)
    if not args.out:
        raise ConfigError("--out is required")
    if args.format == "binary":
        lio.write_matrix_binary(phat, args.out)
    else:
        lio.write_csv(args.out, [f"c{k}" for k in range(n)], phat.tolist())


def cmd_test_pair(args):
    if args.edges:
        a = _graph(args)
        n = a.n
        seed = args.seed or 0
        draws = args.draws or 200_000
        alpha = args.alpha if args.alpha is not None else 0.05
        rank = args.rank or "auto"
        i = args.i if args.i is not None else 0
        j = args.j if args.j is not None else n - 1
    else:
        cfg = _config(args)
        _, p = make_probability(cfg, cfg.eps_grid[0] if cfg.eps_grid else 0.0)
        seed = replicate_seed(cfg.base_seed, 0)
        a = sample_adjacency(p, seed, hollow=cfg.hollow)
        draws, alpha, rank = cfg.draws, cfg.alpha, cfg.rank_mode
        i = args.i if args.i is not None else cfg.pair[0]
        j = args.j if args.j is not None else cfg.pair[1]
    rank = rank if rank == "auto" else int(rank)
    tc = TestConfig(rank=rank, draws=draws, seed=seed, exclude_self=args.exclude_self,
                    backend=args.backend)
    rep = run_pair_test(a, i, j, alpha, tc)
    if rep.rank_fallback:
        print("warning: no eigengap cleared the threshold; using rank 1", file=sys.stderr)
    row = rep.row()
    _emit(args, list(row), [list(row.values())])


def cmd_power_table(args):
    cfg = _config(args)
    rows = run_power_table(cfg)
    _emit(args, POWER_HEADER, [r.csv_row() for r in rows])


def cmd_null_histogram(args):
    cfg = _config(args)
    cfg = replace(cfg, eps_grid=(0.0,))
    hist = run_null_histogram(cfg)
    rows = [(r.replicate_index, r.seed, r.rhat, r.T, r.p_value, r.degenerate)
            for r in hist.records]
    _emit(args, ["replicate", "seed", "rhat", "T", "pvalue", "degenerate"], rows)
    wpath = args.weights or (args.out + ".weights.csv" if args.out else None)
    if wpath:
        lio.write_csv(wpath, ["index", "weight", "sigma"],
                      [(k, w, hist.sigma) for k, w in enumerate(hist.weights)])


def cmd_eigendecay(args):
    cfg = _config(args)
    if args.k:
        cfg = replace(cfg, top_k=args.k)
    res = run_eigendecay(cfg)
    _emit(args, ["replicate", "r", "lambda_over_n", "gap_over_n"], res.rows)
    print(f"slope {res.slope:.6g}; gap maxima {res.gap_maxima}", file=sys.stderr)


def cmd_verify_expansion(args):
    cfg = _config(args)
    _, p = make_probability(cfg)
    seed = replicate_seed(cfg.base_seed, 0)
    a = sample_adjacency(p, seed, hollow=cfg.hollow).dense()
    r = args.rank_value or 1
    p_dec = eig_dense(p.entries, max_n=max(4000, cfg.n))
    a_dec = _spectrum(a, r, seed)
    rep = verify_expansion(a_dec, p_dec, p.entries, a, r, args.scaling, rho=cfg.rho, nu=args.nu)
    header = ["n", "r", "alpha", "main_2toinf", "residual_2toinf", "aligned_2toinf",
              "main_bound", "dominated", "bound_holds"]
    _emit(args, header, [(cfg.n, r, rep.alpha, rep.main_term_2toinf, rep.residual_2toinf,
                          rep.aligned_error_2toinf, rep.theory_bound, rep.dominated,
                          rep.bound_holds)])


def cmd_certify_bound(args):
    cfg = _config(args)
    _, p = make_probability(cfg)
    a = sample_adjacency(p, replicate_seed(cfg.base_seed, 0), hollow=cfg.hollow).dense()
    m = p.entries * args.signal_scale
    e = a - p.entries
    r = args.rank_value or 1
    cert = bound_certificate(m, e, r, nu=args.nu, rho=cfg.rho)
    header = (["n", "r", "psd_mode", "E0", "E1", "E2"] + list(cert.terms)
              + ["total", "lhs", "holds"])
    row = ([cfg.n, r, cert.psd_mode] + [cert.events[k] for k in ("E0", "E1", "E2")]
           + list(cert.terms.values()) + [cert.total, cert.lhs, cert.holds])
    _emit(args, header, [row])


# parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lpgraph", description="Spectral inference for latent position graphs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, graph=False, config=False):
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int)
        if graph:
            sp.add_argument("--edges", help="edge list or packed adjacency")
        if config:
            sp.add_argument("--config")
            sp.add_argument("--n", type=int)
            sp.add_argument("--rho", type=float)
            sp.add_argument("--replicates", type=int)
            sp.add_argument("--threads", type=int)
            sp.add_argument("--epsilon")
            sp.add_argument("--alpha", type=float)
            sp.add_argument("--draws", type=int)
            sp.add_argument("--rank")
            sp.add_argument("--hollow", action="store_true")
            sp.add_argument("--exclude-self", action="store_true")

    sp = sub.add_parser("simulate")
    common(sp, config=True)
    sp.add_argument("--packed")
    sp.add_argument("--latents-out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("spectrum")
    common(sp, graph=True)
    sp.add_argument("--k", type=int, default=10)
    sp.add_argument("--vectors")
    sp.set_defaults(func=cmd_spectrum)

    sp = sub.add_parser("select-rank")
    common(sp, graph=True)
    sp.add_argument("--rule", choices=["test", "datadriven", "datadriven-general"],
                    default="test")
    sp.add_argument("--nu", type=float, default=1.0)
    sp.add_argument("--rho", type=float)
    sp.add_argument("--j-max", type=int)
    sp.set_defaults(func=cmd_select_rank)

    sp = sub.add_parser("estimate-p")
    common(sp, graph=True)
    sp.add_argument("--rank", default="auto")
    sp.add_argument("--format", choices=["csv", "binary"], default="csv")
    sp.add_argument("--clip", action="store_true")
    sp.set_defaults(func=cmd_estimate_p)

    sp = sub.add_parser("test-pair")
    common(sp, graph=True, config=True)
    sp.add_argument("--i", type=int)
    sp.add_argument("--j", type=int)
    sp.add_argument("--backend", choices=["mc", "exact"], default="mc")
    sp.set_defaults(func=cmd_test_pair)

    for name, func in (("power-table", cmd_power_table),
                       ("null-histogram", cmd_null_histogram)):
        sp = sub.add_parser(name)
        common(sp, config=True)
        if name == "null-histogram":
            sp.add_argument("--weights")
        sp.set_defaults(func=func)

    sp = sub.add_parser("eigendecay")
    common(sp, config=True)
    sp.add_argument("--k", type=int)
    sp.set_defaults(func=cmd_eigendecay)

    for name, func in (("verify-expansion", cmd_verify_expansion),
                       ("certify-bound", cmd_certify_bound)):
        sp = sub.add_parser(name)
        common(sp, config=True)
        sp.add_argument("--r", dest="rank_value", type=int)
        sp.add_argument("--nu", type=float, default=1.0)
        if name == "verify-expansion":
            sp.add_argument("--scaling", type=float, default=0.5, choices=[0.0, 0.5, 1.0])
        else:
            sp.add_argument("--signal-scale", type=float, default=1.0)
        sp.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ModelError, lio.FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
