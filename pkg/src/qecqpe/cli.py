"""Command-line driver for the estimation pipeline.

Six subcommands cover the workflow end to end: ``calibrate`` fits the
exponential decay law to calibration-circuit outcomes, ``qpe`` samples
estimation shots into a record file, ``estimate`` turns records into
likelihood grids and an energy document, ``sweep`` maps q(k) against one
noise parameter at a time, ``verify`` runs the gadget conformance suite,
and ``resources`` counts circuit costs.

Every artifact embeds its resolved configuration and seed and is
reproducible byte for byte from them.  ``--threads`` changes wall time
only, never output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import engine, inference, noise, qpe, verify
from .circuit import count_resources

__all__ = ["build_parser", "main"]

_PREFIX_SIZES = (100, 500)


# ---------------------------------------------------------------------------
# Argument plumbing

def _int_list(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _load_model(spec: str) -> noise.NoiseModel:
    if spec == "ideal":
        return noise.NoiseModel.ideal()
    if spec == "default":
        return noise.default_model()
    return noise.NoiseModel.from_file(spec)


def _derived_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# Shared runners

def _run_outcomes(circuit, model: noise.NoiseModel, shots: int,
                  master_seed: int, threads: int) -> list[Optional[int]]:
    config = engine.RunConfig(
        n_shots=shots, master_seed=master_seed, processes=threads
    )
    return [
        qpe.shot_outcome(circuit, res)
        for res in engine.run_shots(circuit, model, config)
    ]


def _calibration_point(setup: str, k: int, shots: int, model: noise.NoiseModel,
                       seed: int, threads: int, *, dd: bool = True,
                       lam: Optional[float] = None) -> dict:
    """One decay-law point: P0 with binomial error at a single k.

    The trial state is the exact step eigenstate, so a noiseless circuit
    yields m=0 with certainty and every count above zero is decoherence.
    With ``lam`` given, outcomes come from the closed-form depolarized
    model instead of circuit simulation.
    """
    snapped = setup != "unencoded"
    if lam is not None:
        p1 = 0.5 - (1.0 - lam) ** k * 0.5    # eigenstate ansatz: ideal P1 = 0
        rng = np.random.default_rng(_derived_seed(seed, 2, k))
        ones = int(rng.binomial(shots, p1))
        kept = shots
    else:
        ansatz = qpe.AnsatzParams.eigenstate(snapped=snapped)
        circuit = qpe.build_calibration_circuit(setup, k, ansatz=ansatz, dd=dd)
        outcomes = _run_outcomes(
            circuit, model, shots, _derived_seed(seed, 2, k), threads
        )
        kept = sum(1 for m in outcomes if m is not None)
        ones = sum(1 for m in outcomes if m == 1)
    if kept == 0:
        raise RuntimeError(f"k={k}: every shot was discarded")
    p0 = 1.0 - ones / kept
    sigma = math.sqrt(max(p0 * (1.0 - p0), 0.0) / kept)
    return {
        "k": k, "shots": shots, "kept": kept, "ones": ones,
        "p0": p0, "sigma": sigma,
        "q": 2.0 * (1.0 - p0), "sigma_q": 2.0 * sigma,
    }


# ---------------------------------------------------------------------------
# Subcommands

def cmd_calibrate(args: argparse.Namespace) -> int:
    model = _load_model(args.noise)
    config = {
        "command": "calibrate", "setup": args.setup,
        "k_list": list(args.k_list), "shots": args.shots,
        "noise": args.noise, "noise_params": model.to_dict(),
        "lambda_override": args.lam, "seed": args.seed,
    }
    points = [
        _calibration_point(args.setup, k, args.shots, model,
                           args.seed, args.threads, lam=args.lam)
        for k in args.k_list
    ]
    fit = inference.fit_calibration([(p["k"], p["p0"], p["sigma"]) for p in points])
    doc = {
        "config": config,
        "points": points,
        "lambda": fit.lam,
        "sigma_lambda": fit.sigma_lam,
        "q_fit_residuals": list(fit.residuals),
    }
    if args.out:
        _write(Path(args.out), _dump_json(doc))
    for p in points:
        print(f"k={p['k']:3d}  P0={p['p0']:.4f} +/- {p['sigma']:.4f}"
              f"  q={p['q']:.4f}")
    print(f"lambda = {fit.lam:.5f} +/- {fit.sigma_lam:.5f}"
          f"  ({len(points)} points, {args.shots} shots each)")
    return 0


def cmd_qpe(args: argparse.Namespace) -> int:
    model = _load_model(args.noise)
    job = qpe.sample_parameters(
        args.setup, args.kmax, args.pairs, args.shots,
        np.random.default_rng(_derived_seed(args.seed, 0)),
    )
    config = {
        "command": "qpe", "setup": args.setup, "kmax": args.kmax,
        "pairs": args.pairs, "shots": args.shots,
        "noise": args.noise, "noise_params": model.to_dict(),
        "lambda": args.lam, "seed": args.seed,
    }
    ansatz = qpe.AnsatzParams.calibration()
    samples: list[inference.QpeSample] = []
    for idx, (k, beta) in enumerate(zip(job.ks, job.betas)):
        if args.setup == "unencoded":
            circuit = qpe.build_unencoded_qpe(k, beta, ansatz)
        else:
            circuit = qpe.build_encoded_qpe(args.setup, k, beta, ansatz)
        pair_seed = _derived_seed(args.seed, 1, idx)
        for m in _run_outcomes(circuit, model, args.shots, pair_seed, args.threads):
            samples.append(inference.QpeSample(
                k=k, beta=beta, m=-1 if m is None else m,
                discarded=m is None, setup=args.setup, seed=pair_seed,
            ))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        fh.write(json.dumps({"config": config}, sort_keys=True) + "\n")
        inference.samples_to_jsonl(samples, fh)
    discarded = sum(1 for s in samples if s.discarded)
    frac = discarded / len(samples) if samples else 0.0
    print(f"{len(samples)} records -> {out}")
    print(f"discarded {discarded} ({100.0 * frac:.1f}%)")
    return 0


def _read_samples(path: Path) -> tuple[Optional[dict], list[inference.QpeSample]]:
    header: Optional[dict] = None
    with path.open() as fh:
        first = fh.readline()
        if first.strip():
            rec = json.loads(first)
            if "config" in rec:
                header = rec["config"]
        fh.seek(0)
        return header, inference.samples_from_jsonl(fh)


def cmd_estimate(args: argparse.Namespace) -> int:
    path = Path(args.samples)
    if not path.exists():
        print(f"no such sample file: {path}", file=sys.stderr)
        return 2
    header, samples = _read_samples(path)
    kept = [s for s in samples if not s.discarded]
    if not kept:
        print("no usable samples (empty or all discarded)", file=sys.stderr)
        return 2
    lam = args.lam
    if lam is None:
        lam = (header or {}).get("lambda") or 0.0
    params = qpe.HamiltonianParams.default()
    config = {
        "command": "estimate", "samples": str(args.samples),
        "grid": args.grid, "bootstrap": args.bootstrap,
        "lambda": lam, "seed": args.seed,
    }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    prefixes = [n for n in _PREFIX_SIZES if n < len(kept)] + [len(kept)]
    curve_files = {}
    for n in prefixes:
        grid = inference.log_likelihood_grid(kept[:n], lam, grid_size=args.grid)
        curve = inference.normalized_curve(grid.log_values)
        name = f"distribution_{n}.csv"
        rows = "\n".join(
            f"{float(phi)!r},{float(q)!r}" for phi, q in zip(grid.phis, curve)
        )
        _write(out_dir / name, "phi,q\n" + rows + "\n")
        curve_files[str(n)] = name

    if args.bootstrap >= 2:
        est = inference.bootstrap_estimate(
            kept, lam, args.bootstrap, params.t,
            _derived_seed(args.seed, 3), grid_size=args.grid,
        )
        phase, sigma_phi = est.phi, est.sigma_phi
        energy, sigma_energy, branch = est.energy, est.sigma_energy, est.branch
    else:
        grid = inference.log_likelihood_grid(kept, lam, grid_size=args.grid)
        phase = inference.argmax_phase(grid)
        energy, branch = inference.phase_to_energy(phase, params.t)
        sigma_phi = sigma_energy = None

    doc = {
        "config": config,
        "n_records": len(samples),
        "n_samples": len(kept),
        "discard_fraction": 1.0 - len(kept) / len(samples),
        "lambda": lam,
        "phase": phase,
        "sigma_phi": sigma_phi,
        "energy": energy,
        "sigma_energy": sigma_energy,
        "branch": branch,
        "t": params.t,
        "distributions": curve_files,
    }
    _write(out_dir / "estimate.json", _dump_json(doc))
    sig = "n/a" if sigma_energy is None else f"{sigma_energy:.5f}"
    print(f"E = {energy:.5f} +/- {sig} hartree"
          f"  (phase {phase:.6f}, {len(kept)} samples, lambda {lam:.4f})")
    print(f"wrote {out_dir / 'estimate.json'} and {len(prefixes)} distribution files")
    return 0


_SWEEP_FAMILIES = {
    # every other noise source zeroed so the response is single-parameter
    "p2": lambda v: noise.NoiseModel.ideal().with_(
        p2=v, p_readout_1to0=v, p_readout_0to1=v
    ),
    "g": lambda v: noise.NoiseModel.ideal().with_(g=v),
    "f": lambda v: noise.NoiseModel.ideal().with_(f=v),
}


def cmd_sweep(args: argparse.Namespace) -> int:
    config = {
        "command": "sweep", "setup": args.setup, "param": args.param,
        "values": list(args.values), "k_list": list(args.k_list),
        "shots": args.shots, "dd": args.dd, "seed": args.seed,
    }
    rows = []
    print(f"param={args.param}  setup={args.setup}  shots={args.shots}"
          f"  dd={'on' if args.dd else 'off'}")
    for i, value in enumerate(args.values):
        model = _SWEEP_FAMILIES[args.param](value)
        for k in args.k_list:
            point = _calibration_point(
                args.setup, k, args.shots, model,
                _derived_seed(args.seed, 4, i), args.threads, dd=args.dd,
            )
            rows.append({"param": args.param, "value": value, **point})
            print(f"  {args.param}={value:<10g} k={k:3d}"
                  f"  q={point['q']:.4f} +/- {point['sigma_q']:.4f}"
                  f"  ({point['kept']}/{point['shots']} kept)")
    if args.out:
        lines = ["# " + json.dumps(config, sort_keys=True),
                 "param,value,k,shots,kept,q,sigma_q"]
        lines += [
            f"{r['param']},{float(r['value'])!r},{r['k']},{r['shots']},"
            f"{r['kept']},{float(r['q'])!r},{float(r['sigma_q'])!r}"
            for r in rows
        ]
        _write(Path(args.out), "\n".join(lines) + "\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    results = verify.run_all(args.seed)
    failed = 0
    for r in results:
        mark = "ok  " if r.ok else "FAIL"
        print(f"{mark} {r.name}: {r.detail}")
        failed += 0 if r.ok else 1
    if failed:
        print(f"{failed} of {len(results)} checks failed")
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def cmd_resources(args: argparse.Namespace) -> int:
    model = _load_model(args.noise)
    ansatz = qpe.AnsatzParams.calibration()
    if args.setup == "unencoded":
        circuit = qpe.build_unencoded_qpe(args.kmax, 0.0, ansatz)
    else:
        circuit = qpe.build_encoded_qpe(args.setup, args.kmax, 0.0, ansatz)
    static = count_resources(circuit)
    doc = {
        "config": {
            "command": "resources", "setup": args.setup, "kmax": args.kmax,
            "shots": args.shots, "noise": args.noise, "seed": args.seed,
        },
        "static": {
            "two_qubit_gates": static.two_qubit_gates,
            "mid_circuit_measurements": static.mid_circuit_measurements,
            "resets": static.resets,
            "max_qubits_live": static.max_qubits_live,
            "depth": static.depth,
        },
    }
    print(f"{args.setup} k={args.kmax}: static 2q={static.two_qubit_gates}"
          f" mid-meas={static.mid_circuit_measurements} resets={static.resets}"
          f" qubits={static.max_qubits_live}")
    if args.shots > 0:
        runs = engine.run_shots(circuit, model, engine.RunConfig(
            n_shots=args.shots, master_seed=_derived_seed(args.seed, 5),
            processes=args.threads,
        ))
        observed = [r.resources for r in runs]
        discarded = sum(1 for r in runs if r.discarded)
        means = {
            field: float(np.mean([getattr(r, field) for r in observed]))
            for field in ("two_qubit_gates", "mid_circuit_measurements", "resets")
        }
        doc["observed"] = {
            "shots": args.shots, "discarded": discarded, "mean": means,
        }
        print(f"observed over {args.shots} shots ({discarded} discarded):"
              f" 2q={means['two_qubit_gates']:.1f}"
              f" mid-meas={means['mid_circuit_measurements']:.1f}"
              f" resets={means['resets']:.1f}")
    if args.out:
        _write(Path(args.out), _dump_json(doc))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qecqpe",
        description="Simulate, calibrate and analyse the encoded "
                    "phase-estimation pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, *, setup: str = "unencoded",
                   with_noise: bool = True) -> None:
        p.add_argument("--setup", choices=qpe.SETUPS, default=setup)
        if with_noise:
            p.add_argument(
                "--noise", default="ideal", metavar="FILE",
                help="'ideal', 'default' (packaged parameter set), or a "
                     "JSON parameter file",
            )
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("calibrate", help="fit the decay law over a k list")
    add_common(p)
    p.add_argument("--k-list", type=_int_list, dest="k_list",
                   default=tuple(range(1, 13)), metavar="a,b,c")
    p.add_argument("--shots", type=int, default=500)
    p.add_argument("--lambda", type=float, dest="lam", default=None,
                   help="sample the closed-form depolarized model instead "
                        "of simulating circuits")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("qpe", help="sample estimation shots to a record file")
    add_common(p)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--pairs", type=int, default=230)
    p.add_argument("--shots", type=int, default=10,
                   help="shots per sampled (k, beta) pair")
    p.add_argument("--lambda", type=float, dest="lam", default=None,
                   help="calibrated decay to embed for the estimation step")
    p.add_argument("--out", required=True, metavar="PATH")
    p.set_defaults(func=cmd_qpe)

    p = sub.add_parser("estimate", help="likelihood grids and energy document")
    p.add_argument("samples", help="record file written by the qpe subcommand")
    p.add_argument("--grid", type=int, default=inference.DEFAULT_GRID)
    p.add_argument("--bootstrap", type=int, default=1000, metavar="R",
                   help="resamples for the error bar; below 2 skips it")
    p.add_argument("--lambda", type=float, dest="lam", default=None,
                   help="decay parameter (default: the sample file's header)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="q(k) against one noise parameter")
    add_common(p, setup="pft", with_noise=False)
    p.add_argument("--param", choices=sorted(_SWEEP_FAMILIES), required=True)
    p.add_argument("--values", type=_float_list, required=True, metavar="a,b,c")
    p.add_argument("--k-list", type=_int_list, dest="k_list",
                   default=(7, 14), metavar="a,b,c")
    p.add_argument("--shots", type=int, default=200)
    p.add_argument("--dd", action=argparse.BooleanOptionalAction, default=True,
                   help="decoupling pulses in idle windows")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the gadget conformance suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("resources", help="circuit cost counts")
    add_common(p)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--shots", type=int, default=0,
                   help="also report observed counts over this many shots")
    p.add_argument("--out", default=None, metavar="PATH")
    p.set_defaults(func=cmd_resources)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
