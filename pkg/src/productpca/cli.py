"""Command line front end.

Four subcommands: fit (one estimator on one CSV), simulate (a replicated
study from a JSON config), perturb (numeric-vs-theory report on an exact
model), faces (contaminate/reconstruct an image corpus).  Every run writes
its outputs plus a manifest.json recording the subcommand, resolved
configuration, seed, package version, and a sha256 digest per output file;
rerunning with the same inputs and seed reproduces every byte.

Exit codes: 0 success, 2 malformed input or configuration, 3 numeric
failure (rank collapse, tie, lost index match, incomplete study).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import secrets
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (
    FormatError,
    InvalidInput,
    ProductPcaError,
)
from .estimators import cdm_pca_fit, load_data_matrix, pca_fit, ppca_fit
from .faces import (
    contact_sheet_svg,
    contaminate_s1,
    contaminate_s2,
    fit_corpus,
    load_corpus,
    pgm_bytes,
    reconstruct_from_estimate,
)
from .population import (
    PerturbationScenario,
    SpectralModel,
    TheoryReport,
    d_vector,
    eigvec_alignment_pca,
    eigvec_alignment_ppca,
    eigvec_perturbation_theory,
    flip_leading_direction,
    flip_thresholds,
    perturbed_rho_pca,
    perturbed_rho_ppca,
    rho,
    tau_jk_numeric,
    tau_jk_theory,
    tau_numeric,
    tau_theory,
)
from .simulation import (
    SimulationConfig,
    _fmt,
    run_study,
    study_csv,
    study_raw_csv,
    xi_curves_svg,
)

_METHOD_ALIASES = {"pca": "pca", "ppca": "ppca", "cdm": "cdmpca", "cdmpca": "cdmpca"}

_DESK_DEFAULTS = {"n": 200, "p": 100, "replicates": 100}
_PAPER_DEFAULTS = {"n": 500, "p": 250, "replicates": 200}


def _fresh_seed() -> int:
    return secrets.randbits(32)


def _write_outputs(out_dir: Path, subcommand: str, config: dict, seed: int, outputs: dict) -> None:
    """Write content files then the manifest; nothing touches disk before
    this point, so failed runs leave no partial output."""
    out_dir.mkdir(parents=True, exist_ok=True)
    digests = {}
    for name in sorted(outputs):
        data = outputs[name]
        if isinstance(data, str):
            data = data.encode("utf-8")
        (out_dir / name).write_bytes(data)
        digests[name] = "sha256:" + hashlib.sha256(data).hexdigest()
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": seed,
        "config": config,
        "outputs": digests,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def _matrix_csv(m: np.ndarray) -> str:
    return "\n".join(",".join(_fmt(v) for v in row) for row in np.atleast_2d(m)) + "\n"


def cmd_fit(args) -> int:
    data = load_data_matrix(args.data)
    method = _METHOD_ALIASES[args.method]
    seed = args.seed if args.seed is not None else _fresh_seed()
    rng = np.random.default_rng(seed)
    if method == "pca":
        est = pca_fit(data, args.rank)
    elif method == "ppca":
        est = ppca_fit(data, args.rank, rng=rng)
    else:
        est = cdm_pca_fit(data, args.rank, rng=rng)
    values = est.eigenvalues[: args.rank]
    vectors = est.eigenvectors[:, : args.rank]
    lines = ["index,value"]
    lines += [f"{i + 1},{_fmt(v)}" for i, v in enumerate(values)]
    outputs = {
        "eigenvalues.csv": "\n".join(lines) + "\n",
        "eigenvectors.csv": _matrix_csv(vectors),
    }
    config = {
        "data": str(args.data),
        "method": method,
        "rank": args.rank,
        "n": data.shape[0],
        "p": data.shape[1],
    }
    _write_outputs(Path(args.out), "fit", config, seed, outputs)
    return 0


def _config_error(path: str, detail: str) -> FormatError:
    return FormatError(f"config.{path}: {detail}" if path else f"config: {detail}")


def _check_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise _config_error(path, "expected an integer")
    return value


def _check_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _config_error(path, "expected a number")
    return float(value)


def _load_sim_config(path: Path, paper_scale: bool) -> SimulationConfig:
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise _config_error("", "top level must be a JSON object")
    known = {"version", "n", "p", "r", "nu", "pi", "replicates", "seed", "methods", "q_grid"}
    for key in raw:
        if key not in known:
            raise _config_error("", f"unknown field '{key}'")
    if "version" in raw and _check_int(raw["version"], "version") != 1:
        raise _config_error("version", "only schema version 1 is supported")
    scale = _PAPER_DEFAULTS if paper_scale else _DESK_DEFAULTS
    fields: dict = {"n": scale["n"], "p": scale["p"], "replicates": scale["replicates"]}
    for key in ("n", "p", "r", "replicates", "seed"):
        if key in raw:
            fields[key] = _check_int(raw[key], key)
    for key in ("nu", "pi"):
        if key in raw:
            fields[key] = _check_number(raw[key], key)
    if "methods" in raw:
        if not isinstance(raw["methods"], list) or not raw["methods"]:
            raise _config_error("methods", "expected a nonempty list")
        methods = []
        for i, m in enumerate(raw["methods"]):
            if not isinstance(m, str) or m not in _METHOD_ALIASES:
                raise _config_error(f"methods[{i}]", f"expected one of {sorted(_METHOD_ALIASES)}")
            methods.append(_METHOD_ALIASES[m])
        fields["methods"] = tuple(methods)
    if "q_grid" in raw:
        if not isinstance(raw["q_grid"], list) or not raw["q_grid"]:
            raise _config_error("q_grid", "expected a nonempty list")
        fields["q_grid"] = tuple(
            _check_int(q, f"q_grid[{i}]") for i, q in enumerate(raw["q_grid"])
        )
    if "seed" not in fields:
        fields["seed"] = _fresh_seed()
    try:
        return SimulationConfig(**fields)
    except InvalidInput as exc:
        raise FormatError(f"config: {exc}") from exc


def cmd_simulate(args) -> int:
    config = _load_sim_config(Path(args.config), args.paper_scale)
    study = run_study(config, threads=args.threads)
    if study.failures:
        print(f"warning: {len(study.failures)} method-replicate failures", file=sys.stderr)
    outputs = {
        "xi_mean.csv": study_csv(study),
        "xi_raw.csv": study_raw_csv(study),
    }
    if args.svg:
        outputs["curves.svg"] = xi_curves_svg(study)
    config_dict = asdict(config)
    config_dict["methods"] = list(config.methods)
    config_dict["q_grid"] = list(config.q_grid)
    _write_outputs(Path(args.out), "simulate", config_dict, config.seed, outputs)
    return 0


def _load_model(path: Path) -> SpectralModel:
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise FormatError(f"{path}: top level must be a JSON object")
    for key in raw:
        if key not in {"version", "eigenvalues", "eigenvectors", "r"}:
            raise FormatError(f"{path}: unknown field '{key}'")
    if "version" in raw and raw["version"] != 1:
        raise FormatError(f"{path}: only schema version 1 is supported")
    if "eigenvalues" not in raw or "r" not in raw:
        raise FormatError(f"{path}: need 'eigenvalues' and 'r'")
    try:
        eigenvalues = np.asarray(raw["eigenvalues"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: eigenvalues must be numeric") from exc
    if eigenvalues.ndim != 1:
        raise FormatError(f"{path}: eigenvalues must be a flat list")
    if "eigenvectors" in raw:
        try:
            eigenvectors = np.asarray(raw["eigenvectors"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"{path}: eigenvectors must be numeric") from exc
    else:
        eigenvectors = np.eye(eigenvalues.size)
    if not isinstance(raw["r"], int) or isinstance(raw["r"], bool):
        raise FormatError(f"{path}: r must be an integer")
    return SpectralModel(eigenvalues=eigenvalues, eigenvectors=eigenvectors, r=raw["r"])


def _parse_floats(text: str, what: str) -> list:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise FormatError(f"{what}: expected comma-separated numbers") from exc
    if not values:
        raise FormatError(f"{what}: empty list")
    return values


def _report_row(rep: TheoryReport) -> str:
    j = "" if rep.j is None else str(rep.j)
    k = "" if rep.k is None else str(rep.k)
    return ",".join(
        [
            rep.quantity,
            j,
            k,
            _fmt(rep.eps),
            _fmt(rep.numeric),
            _fmt(rep.theory),
            _fmt(rep.abs_gap),
            _fmt(rep.rel_gap),
        ]
    )


def cmd_perturb(args) -> int:
    model = _load_model(Path(args.model))
    x = load_data_matrix(args.x).ravel()
    if x.size != model.p:
        raise FormatError(f"{args.x}: expected {model.p} values, got {x.size}")
    eps_list = _parse_floats(args.eps, "--eps")
    example = None
    if args.example is not None:
        a_eps = _parse_floats(args.example, "--example")
        if len(a_eps) != 2:
            raise FormatError("--example: expected 'a,eps'")
        example = (a_eps[0], a_eps[1])
    reports = []
    w = model.eigenvalues
    d = d_vector(model, x)
    for eps in eps_list:
        scenario = PerturbationScenario(model=model, x=x, eps=eps)
        for j in range(1, model.r + 1):
            for k in range(model.r + 1, model.p + 1):
                base = rho(w[j - 1], w[k - 1])
                eta = base * (1.0 - base)
                first_order = base + eta * (d[j - 1] - d[k - 1]) * eps
                reports.append(
                    TheoryReport("rho_pca", eps, perturbed_rho_pca(scenario, j, k), first_order, j, k)
                )
                reports.append(
                    TheoryReport("rho_ppca", eps, perturbed_rho_ppca(scenario, j, k), first_order, j, k)
                )
                reports.append(
                    TheoryReport(
                        "tau_jk",
                        eps,
                        tau_jk_numeric(scenario, j, k),
                        tau_jk_theory(model, x, eps, j, k),
                        j,
                        k,
                    )
                )
        for j in range(1, model.p + 1):
            theory = eigvec_perturbation_theory(model, x, eps, j)
            reports.append(
                TheoryReport("eigvec_pca", eps, eigvec_alignment_pca(scenario, j), theory, j, None)
            )
            reports.append(
                TheoryReport("eigvec_ppca", eps, eigvec_alignment_ppca(scenario, j), theory, j, None)
            )
        reports.append(
            TheoryReport("tau", eps, tau_numeric(scenario), tau_theory(model, x, eps), None, None)
        )
    lines = ["quantity,j,k,eps,numeric,theory,abs_gap,rel_gap"]
    lines += [_report_row(rep) for rep in reports]
    outputs = {"report.csv": "\n".join(lines) + "\n"}
    if example is not None:
        a, eps = example
        th = flip_thresholds(a, eps)
        margin = 1e-3
        flip_lines = ["method,threshold,below,above,cdm_more_robust"]
        for method, threshold in (("pca", th.eta_pca), ("cdm", th.eta_cdm)):
            below = flip_leading_direction(a, eps, threshold * (1.0 - margin), method)
            above = flip_leading_direction(a, eps, threshold * (1.0 + margin), method)
            flip_lines.append(
                f"{method},{_fmt(threshold)},{below},{above},{int(th.cdm_more_robust)}"
            )
        outputs["flip.csv"] = "\n".join(flip_lines) + "\n"
    config = {
        "model": str(args.model),
        "x": str(args.x),
        "eps": eps_list,
        "example": list(example) if example else None,
        "p": model.p,
        "r": model.r,
    }
    _write_outputs(Path(args.out), "perturb", config, 0, outputs)
    return 0


def _parse_ints(text: str, what: str) -> list:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as exc:
        raise FormatError(f"{what}: expected comma-separated integers") from exc
    if not values:
        raise FormatError(f"{what}: empty list")
    return values


def cmd_faces(args) -> int:
    corpus = load_corpus(args.corpus)
    ranks = _parse_ints(args.ranks, "--ranks")
    indices = _parse_ints(args.indices, "--indices")
    for idx in indices:
        if not 0 <= idx < corpus.n:
            raise FormatError(f"--indices: {idx} outside [0, {corpus.n})")
    if any(r < 1 for r in ranks):
        raise FormatError("--ranks: ranks must be >= 1")
    seed = args.seed if args.seed is not None else _fresh_seed()
    rng = np.random.default_rng(seed)
    if args.scheme == "s1":
        fit_on, contaminated = contaminate_s1(corpus, args.s1_fraction, rng)
        contaminated = [int(i) for i in contaminated]
    elif args.scheme == "s2":
        fit_on = contaminate_s2(corpus, args.s2_count, rng)
        contaminated = list(range(corpus.n, fit_on.n))
    else:
        fit_on, contaminated = corpus, []
    rmax = max(ranks)
    recons = {}
    for method in ("pca", "ppca"):
        est = fit_corpus(fit_on, method, rmax, rng)
        recons[method] = {r: reconstruct_from_estimate(fit_on, est, r) for r in ranks}

    outputs = {}
    mean_image = fit_on.images.mean(axis=0).reshape(corpus.height, corpus.width)
    outputs["mean.pgm"] = pgm_bytes(mean_image)
    sheet_rows = []
    ranks_sorted = sorted(ranks)
    for idx in indices:
        outputs[f"original_{idx:03d}.pgm"] = pgm_bytes(corpus.image(idx))
        for method in ("pca", "ppca"):
            row_images = [corpus.image(idx), mean_image]
            for r in ranks_sorted:
                recon = recons[method][r].image(idx)
                outputs[f"recon_{method}_r{r}_img{idx:03d}.pgm"] = pgm_bytes(recon)
                row_images.append(recon)
            sheet_rows.append((f"img {idx} {method}", row_images))
    col_labels = ["original", "mean"] + [f"r={r}" for r in ranks_sorted]
    outputs["contact_sheet.svg"] = contact_sheet_svg(sheet_rows, col_labels)
    config = {
        "corpus": str(args.corpus),
        "scheme": args.scheme,
        "ranks": ranks,
        "indices": indices,
        "s1_fraction": args.s1_fraction,
        "s2_count": args.s2_count,
        "contaminated": contaminated,
        "n": corpus.n,
        "height": corpus.height,
        "width": corpus.width,
    }
    _write_outputs(Path(args.out), "faces", config, seed, outputs)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="productpca",
        description="Product-PCA estimators, perturbation reports, studies, and the faces demo.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit one estimator on a headerless CSV data matrix")
    p_fit.add_argument("data", help="n x p CSV, rows are observations")
    p_fit.add_argument("--method", required=True, choices=["pca", "ppca", "cdm"])
    p_fit.add_argument("--rank", required=True, type=int)
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run a replicated subspace-recovery study")
    p_sim.add_argument("config", help="JSON study configuration")
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--paper-scale", action="store_true")
    p_sim.add_argument("--threads", type=int, default=1)
    p_sim.add_argument("--svg", action="store_true", help="also emit curves.svg")
    p_sim.set_defaults(func=cmd_simulate)

    p_pert = sub.add_parser("perturb", help="numeric-vs-theory perturbation report")
    p_pert.add_argument("model", help="JSON spectral model {eigenvalues, r[, eigenvectors]}")
    p_pert.add_argument("--x", required=True, help="CSV holding the perturbation direction")
    p_pert.add_argument("--eps", default="1e-2,1e-3")
    p_pert.add_argument("--example", default=None, metavar="A,EPS",
                        help="also emit the two-point flip-threshold report")
    p_pert.add_argument("--out", required=True)
    p_pert.set_defaults(func=cmd_perturb)

    p_faces = sub.add_parser("faces", help="contaminate and reconstruct an image corpus")
    p_faces.add_argument("corpus", help="corpus CSV with JSON sidecar")
    p_faces.add_argument("--scheme", default="none", choices=["none", "s1", "s2"])
    p_faces.add_argument("--ranks", required=True)
    p_faces.add_argument("--indices", required=True)
    p_faces.add_argument("--seed", type=int, default=None)
    p_faces.add_argument("--s1-fraction", type=float, default=0.1)
    p_faces.add_argument("--s2-count", type=int, default=20)
    p_faces.add_argument("--out", required=True)
    p_faces.set_defaults(func=cmd_faces)
    return parser


_FORMAT_ERRORS = (FormatError, InvalidInput)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _FORMAT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProductPcaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
