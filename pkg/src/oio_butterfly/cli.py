"""``oio-bench``: run, sweep and verify from the command line.

Exit codes: 0 success, 1 accuracy-gate failure, 2 invalid arguments.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .bench import ALGORITHMS, RunSpec, emit_csv, run_single, run_sweep
from .kernels import KERNEL_NAMES, dense_contract, make_kernel
from .tensor_butterfly import tbf_construct, tbf_contract

EXIT_OK, EXIT_GATE, EXIT_USAGE = 0, 1, 2

# (kernel, d, n) covered by ``verify``
ORACLE_CASES = (
    ("green-plates", 2, 32),
    ("green-cubes", 3, 16),
    ("radon-2d", 2, 32),
    ("radon-3d", 3, 16),
    ("dft", 1, 32),
    ("dft", 2, 32),
    ("dft", 3, 16),
    ("nudft", 2, 32),
)
ORACLE_TOLS = (1e-3, 1e-6)


def read_manifest(path: str) -> dict:
    """``key = value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _int_list(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty size list")
    return vals


def _str_list(text: str) -> list[str]:
    return [v for v in text.replace(",", " ").split() if v]


def _common(p: argparse.ArgumentParser, sweep: bool) -> None:
    p.add_argument("--manifest", help="key=value file supplying defaults for these options")
    p.add_argument("--kernel", choices=KERNEL_NAMES)
    p.add_argument("--d", type=int)
    if sweep:
        p.add_argument("--n", type=_int_list, help="sizes, e.g. 32,64,128")
        p.add_argument("--algo", type=_str_list, default=["tensor-bf"], help="one or more algorithms")
        p.add_argument("--jobs", type=int, default=1,
                       help="worker processes for independent runs (timings then not comparable)")
    else:
        p.add_argument("--n", type=int)
        p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--tol", type=float)
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--nv", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bitrev", choices=("none", "both", "source", "target"), default="none")
    p.add_argument("--out", help="CSV output path")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oio-bench", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="one factorization and application"), sweep=False)
    _common(sub.add_parser("sweep", help="size sweep with log-log slope fits"), sweep=True)
    v = sub.add_parser("verify", help="oracle-equivalence suite against dense products")
    v.add_argument("--inputs", type=int, default=20, help="random inputs per case")
    v.add_argument("--seed", type=int, default=0)
    return p


def _parse(argv):
    parser = build_parser()
    # manifests act as defaults: parse once to find them, then again with them applied
    pre, _ = parser.parse_known_args(argv)
    manifest = getattr(pre, "manifest", None)
    if manifest:
        try:
            values = read_manifest(manifest)
        except (OSError, ValueError) as exc:
            parser.error(str(exc))
        sp = parser._subparsers._group_actions[0].choices[pre.command]
        known = {a.dest for a in sp._actions}
        unknown = set(values) - known
        if unknown:
            parser.error(f"unknown manifest keys: {', '.join(sorted(unknown))}")
        sp.set_defaults(**values)
    args = parser.parse_args(argv)
    if args.command in ("run", "sweep"):
        for name in ("kernel", "d", "n", "tol", "algo"):
            if getattr(args, name) is None:
                parser.error(f"--{name} is required (on the command line or in the manifest)")
        if args.command == "sweep":
            bad = [a for a in args.algo if a not in ALGORITHMS]
            if bad:
                parser.error(f"unknown algorithm(s): {', '.join(bad)}")
            if len(args.n) < 3:
                parser.error("a sweep needs at least 3 sizes")
            if args.jobs < 1:
                parser.error("--jobs must be >= 1")
    return parser, args


def _spec(args, n, algo) -> RunSpec:
    return RunSpec(kernel=args.kernel, d=args.d, n=n, tol=args.tol, algo=algo, L=args.L,
                   n_v=args.nv, seed=args.seed, bitrev=None if args.bitrev == "none" else args.bitrev)


def _show(rec) -> str:
    err = "-" if rec.rel_error is None else f"{rec.rel_error:.3e}"
    return (f"{rec.algo:9s} {rec.kernel} d={rec.d} n={rec.n} tol={rec.tol:g} L={rec.L} r={rec.r} "
            f"r_min={rec.r_min} factor={rec.factor_time_s:.3f}s apply={rec.apply_time_s:.4f}s "
            f"mem={rec.memory_bytes}B err={err}")


@dataclass
class VerifyOutcome:
    kernel: str
    d: int
    n: int
    tol: float
    L: int
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= 10 * self.tol


def verify_suite(inputs: int = 20, seed: int = 0, cases=None, tols=None):
    """Tensor butterfly contraction against the dense matricized product."""
    cases = ORACLE_CASES if cases is None else cases
    tols = ORACLE_TOLS if tols is None else tols
    out = []
    for name, d, n in cases:
        kern = make_kernel(name, n, d)
        rng = np.random.default_rng(seed)
        F = rng.standard_normal(kern.col_shape + (inputs,)) + 1j * rng.standard_normal(kern.col_shape + (inputs,))
        exact = dense_contract(kern, F)
        for tol in tols:
            bf = tbf_construct(kern, tol=tol, seed=seed)
            err = float(np.linalg.norm(tbf_contract(bf, F) - exact) / np.linalg.norm(exact))
            out.append(VerifyOutcome(name, d, n, tol, bf.L, err))
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        parser, args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE

    if args.command == "verify":
        if args.inputs < 1:
            print("error: --inputs must be >= 1", file=sys.stderr)
            return EXIT_USAGE
        results = verify_suite(args.inputs, args.seed)
        for res in results:
            flag = "PASS" if res.ok else "FAIL"
            print(f"{flag} {res.kernel} d={res.d} n={res.n} L={res.L} tol={res.tol:g} "
                  f"rel_error={res.rel_error:.3e} bound={10 * res.tol:g}")
        return EXIT_OK if all(r.ok for r in results) else EXIT_GATE

    try:
        if args.command == "run":
            rec = run_single(_spec(args, args.n, args.algo))
            records = [rec]
            print(_show(rec))
        else:
            res = run_sweep(_spec(args, args.n[0], args.algo[0]), args.n, args.algo, jobs=args.jobs)
            records = res.records
            for rec in records:
                print(_show(rec))
            for (algo, metric), s in sorted(res.slopes.items()):
                print(f"slope {algo} {metric} vs n^d: {s:.3f}")
            for spec, msg in res.failures:
                print(f"failed {spec.algo} n={spec.n}: {msg}", file=sys.stderr)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.out:
        try:
            emit_csv(records, args.out)
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return EXIT_USAGE
    gate_ok = all(rec.passes_gate() for rec in records)
    if args.command == "sweep" and res.failures:
        gate_ok = False
    return EXIT_OK if gate_ok else EXIT_GATE


if __name__ == "__main__":
    sys.exit(main())
