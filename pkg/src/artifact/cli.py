"""Command-line interface: assemble, eigen, solve-linear, solve, verify, norms, report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline, storage
from .config import ConfigError, load_config
from .kernels import BACKEND
from .model import build_model

log = logging.getLogger("artifact")

LEMMAS = ("velocity", "nln", "chi", "alpha-int")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="artifact", description=__doc__)
    p.add_argument("--config", type=Path, help="flat 'key = value' configuration file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--threads", type=int, default=1, help="threads for the compiled kernels")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("assemble", help="velocity grid, collision operator, basis identities")
    e = sub.add_parser("eigen", help="slow eigenpair and admissibility matrix per u")
    e.add_argument("--u", type=float, action="append", help="drift values (default eigen.u_list)")
    sub.add_parser("solve-linear", help="penalized linear problem with boundary data only")
    s = sub.add_parser("solve", help="nonlinear solve with boundary tuning")
    s.add_argument("--no-tune", action="store_true", help="skip the admissibility tuning")
    s.add_argument("--eps", type=float, help="boundary amplitude (default bc.eps)")
    v = sub.add_parser("verify", help="lemma verification tables")
    v.add_argument("--lemma", choices=LEMMAS, required=True)
    v.add_argument("--samples", type=int, default=None)
    v.add_argument("--seed", dest="lemma_seed", type=int, default=None)
    sub.add_parser("norms", help="regularity norms of a tuned solve")
    sub.add_parser("report", help="run every check and write a versioned report")
    return p


def _overrides(items: list[str], seed: int | None) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    if seed is not None:
        out["seed"] = str(seed)
    return out


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args.set, args.seed))
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "cache"
    digest = cfg.digest()
    log.info("backend=%s digest=%s", BACKEND, digest[:12])
    try:
        return _dispatch(args, cfg, out, cache, digest)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args, cfg, out: Path, cache: Path, digest: str) -> int:
    cmd = args.command
    if cmd == "assemble":
        body = pipeline.assemble_summary(cfg, cache)
        storage.write_report(out / "assemble.json", "assemble", body, digest)
        return 0
    if cmd == "eigen":
        recs = pipeline.eigen_records(cfg, cache, args.u)
        text = "".join(storage.dumps(r).replace("\n", " ").strip() + "\n" for r in recs)
        (out / "eigen.jsonl").write_text(text)
        sys.stdout.write(text)
        return 0
    if cmd == "solve-linear":
        model = build_model(cfg, cache, args.threads, with_gamma=False)
        body, g = pipeline.linear_summary(model)
        storage.write_field(out / "g_linear.bin", g, {"x": model.space.nodes, "orbit": np.arange(model.rs.m)},
                            {"velocities": model.rs.xi.tolist()})
        storage.write_report(out / "solve_linear.json", "solve-linear", body, digest)
        return 0
    if cmd == "solve":
        model = build_model(cfg, cache, args.threads)
        run = pipeline.run_solve(model, args.eps, tune=not args.no_tune)
        pipeline.write_solution(out, run)
        storage.write_report(out / "solve.json", "solve", run.summary, digest)
        return 0
    if cmd == "verify":
        defaults = {"velocity": 10_000, "nln": int(cfg["nln.samples"]), "chi": 100_001, "alpha-int": 0}
        n = args.samples if args.samples is not None else defaults[args.lemma]
        seed = args.lemma_seed if args.lemma_seed is not None else int(cfg["seed"])
        rows, summ = pipeline.verify_lemma(cfg, args.lemma, n, seed)
        name = args.lemma.replace("-", "_")
        storage.write_csv(out / f"verify_{name}.csv", ["sample", "lhs", "rhs", "margin"], rows)
        storage.write_report(out / f"verify_{name}.json", f"verify-{args.lemma}",
                             {"samples": n, "seed": seed, **summ}, digest)
        return 0 if summ["pass"] else 1
    if cmd == "norms":
        model = build_model(cfg, cache, args.threads)
        run = pipeline.run_solve(model)
        body, tables = pipeline.run_norms(run, args.threads)
        pipeline.write_norms(out, body, tables)
        storage.write_report(out / "norms.json", "norms", {"solve": run.summary, "norms": body}, digest)
        return 0
    if cmd == "report":
        body = pipeline.verification_suite(cfg, cache, args.threads)
        storage.write_report(out / "report.json", "report", body, digest)
        failed = [c["name"] for c in body["checks"] if not c["pass"]]
        for c in body["checks"]:
            print(f"{'PASS' if c['pass'] else 'FAIL'} {c['name']}: {c['detail']}")
        return 1 if failed else 0
    raise AssertionError(cmd)


if __name__ == "__main__":
    sys.exit(main())
