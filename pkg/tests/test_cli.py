"""End-to-end checks of the command line interface.

Each test drives main() in-process with an explicit argv and a tmp_path
output directory, then inspects the written files against the library.
"""

import hashlib
import json

import numpy as np
import numpy.testing as npt
import pytest

from productpca import cli
from productpca.cli import main
from productpca.errors import FormatError
from productpca.estimators import pca_fit
from productpca.faces import ImageCorpus, save_corpus
from productpca.population import (
    PerturbationScenario,
    SpectralModel,
    eigvec_alignment_pca,
    eigvec_alignment_ppca,
    eigvec_perturbation_theory,
    flip_thresholds,
    perturbed_rho_pca,
    perturbed_rho_ppca,
    tau_jk_numeric,
    tau_jk_theory,
    tau_numeric,
    tau_theory,
)
from productpca.simulation import SimulationConfig, run_study, study_csv


def write_matrix_csv(path, m):
    path.write_text(
        "\n".join(",".join(format(float(v), ".17g") for v in row) for row in m) + "\n"
    )


def manifest_of(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


def digest_of(path):
    return "sha256:" + hashlib.sha256(path.read_bytes()).hexdigest()


def check_manifest_digests(out_dir):
    manifest = manifest_of(out_dir)
    assert manifest["outputs"], "manifest lists no outputs"
    for name, digest in manifest["outputs"].items():
        assert digest_of(out_dir / name) == digest
    return manifest


def read_table(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [dict(zip(header, line.split(","))) for line in lines[1:]]


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(42)
    data = rng.standard_normal((24, 6)) * np.array([3.0, 2.0, 1.5, 1.0, 0.7, 0.5])
    path = tmp_path / "data.csv"
    write_matrix_csv(path, data)
    return path, data


class TestFit:
    def test_pca_round_trip(self, tmp_path, data_csv):
        path, data = data_csv
        out = tmp_path / "out"
        assert main(["fit", str(path), "--method", "pca", "--rank", "3", "--out", str(out)]) == 0
        est = pca_fit(data, 3)
        header, rows = read_table(out / "eigenvalues.csv")
        assert header == ["index", "value"]
        assert [row["index"] for row in rows] == ["1", "2", "3"]
        npt.assert_allclose(
            [float(row["value"]) for row in rows], est.eigenvalues[:3], rtol=1e-10
        )
        vectors = np.array(
            [
                [float(tok) for tok in line.split(",")]
                for line in (out / "eigenvectors.csv").read_text().splitlines()
            ]
        )
        npt.assert_allclose(vectors, est.eigenvectors[:, :3], rtol=1e-10, atol=1e-12)

    def test_manifest_records_run(self, tmp_path, data_csv):
        path, _ = data_csv
        out = tmp_path / "out"
        main(["fit", str(path), "--method", "pca", "--rank", "2", "--out", str(out)])
        manifest = check_manifest_digests(out)
        assert manifest["subcommand"] == "fit"
        assert isinstance(manifest["seed"], int)
        config = manifest["config"]
        assert config["method"] == "pca"
        assert config["rank"] == 2
        assert config["n"] == 24
        assert config["p"] == 6

    def test_ppca_seed_makes_rerun_identical(self, tmp_path, data_csv):
        path, _ = data_csv
        argv = ["fit", str(path), "--method", "ppca", "--rank", "3", "--seed", "5"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        assert manifest_of(tmp_path / "a")["outputs"] == manifest_of(tmp_path / "b")["outputs"]

    def test_cdm_alias_normalized_in_manifest(self, tmp_path, data_csv):
        path, _ = data_csv
        out = tmp_path / "out"
        argv = ["fit", str(path), "--method", "cdm", "--rank", "2", "--seed", "1"]
        assert main(argv + ["--out", str(out)]) == 0
        assert manifest_of(out)["config"]["method"] == "cdmpca"

    def test_rank_too_large_exits_2(self, tmp_path, data_csv, capsys):
        path, _ = data_csv
        code = main(["fit", str(path), "--method", "pca", "--rank", "99", "--out", str(tmp_path / "o")])
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")
        assert not (tmp_path / "o").exists()

    def test_rank_deficient_data_exits_3(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        data = np.outer(rng.standard_normal(20), [1.0, 2.0, -1.0, 0.5])
        path = tmp_path / "flat.csv"
        write_matrix_csv(path, data)
        code = main(["fit", str(path), "--method", "cdm", "--rank", "2", "--seed", "0",
                     "--out", str(tmp_path / "o")])
        assert code == 3
        assert capsys.readouterr().err.startswith("error:")

    def test_missing_data_file_exits_2(self, tmp_path, capsys):
        code = main(["fit", str(tmp_path / "nope.csv"), "--method", "pca", "--rank", "1",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "cannot read" in capsys.readouterr().err


SIM_CONFIG = {
    "version": 1,
    "n": 24,
    "p": 8,
    "r": 2,
    "replicates": 4,
    "seed": 11,
    "methods": ["pca", "ppca"],
    "q_grid": [2, 3, 4],
}


def write_sim_config(tmp_path, **overrides):
    raw = dict(SIM_CONFIG)
    raw.update(overrides)
    path = tmp_path / "study.json"
    path.write_text(json.dumps(raw))
    return path


class TestSimulate:
    def test_outputs_match_library_and_rerun(self, tmp_path):
        path = write_sim_config(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["simulate", str(path), "--out", str(out1)]) == 0
        assert main(["simulate", str(path), "--out", str(out2)]) == 0
        mean_text = (out1 / "xi_mean.csv").read_text()
        assert mean_text == (out2 / "xi_mean.csv").read_text()
        study = run_study(
            SimulationConfig(
                n=24, p=8, r=2, replicates=4, seed=11,
                methods=("pca", "ppca"), q_grid=(2, 3, 4),
            )
        )
        assert mean_text == study_csv(study)
        header, _ = read_table(out1 / "xi_mean.csv")
        assert header == ["method", "q", "mean_xi", "sd_xi", "replicates", "n", "p", "r", "nu", "pi", "seed"]
        raw_header, raw_rows = read_table(out1 / "xi_raw.csv")
        assert raw_header == ["replicate", "method", "q", "xi"]
        assert len(raw_rows) == 4 * 2 * 3
        manifest = check_manifest_digests(out1)
        assert manifest["seed"] == 11
        assert manifest["config"]["q_grid"] == [2, 3, 4]

    def test_svg_flag_adds_curves(self, tmp_path):
        path = write_sim_config(tmp_path)
        out = tmp_path / "out"
        assert main(["simulate", str(path), "--out", str(out), "--svg"]) == 0
        assert (out / "curves.svg").exists()
        assert "curves.svg" in manifest_of(out)["outputs"]

    def test_unknown_field_exits_2(self, tmp_path, capsys):
        path = write_sim_config(tmp_path, bogus=1)
        assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "config: unknown field 'bogus'" in capsys.readouterr().err

    def test_fractional_q_exits_2(self, tmp_path, capsys):
        path = write_sim_config(tmp_path, q_grid=[2.5, 3])
        assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "config.q_grid[0]: expected an integer" in capsys.readouterr().err

    def test_bad_method_exits_2(self, tmp_path, capsys):
        path = write_sim_config(tmp_path, methods=["pca", "svd"])
        assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "config.methods[1]" in capsys.readouterr().err

    def test_invalid_geometry_reports_config_error(self, tmp_path, capsys):
        path = write_sim_config(tmp_path, r=0)
        assert main(["simulate", str(path), "--out", str(tmp_path / "o")]) == 2
        assert "config:" in capsys.readouterr().err

    def test_scale_defaults(self, tmp_path):
        path = tmp_path / "minimal.json"
        path.write_text(json.dumps({"r": 2, "seed": 1}))
        desk = cli._load_sim_config(path, paper_scale=False)
        assert (desk.n, desk.p, desk.replicates) == (200, 100, 100)
        paper = cli._load_sim_config(path, paper_scale=True)
        assert (paper.n, paper.p, paper.replicates) == (500, 250, 200)

    def test_explicit_fields_beat_scale_defaults(self, tmp_path):
        path = tmp_path / "minimal.json"
        path.write_text(json.dumps({"n": 64, "p": 16, "r": 2, "seed": 1}))
        cfg = cli._load_sim_config(path, paper_scale=True)
        assert (cfg.n, cfg.p, cfg.replicates) == (64, 16, 200)


WORKED_EIGENVALUES = [2.0, 1.0, 0.5]


@pytest.fixture
def perturb_files(tmp_path):
    model_path = tmp_path / "model.json"
    model_path.write_text(json.dumps({"eigenvalues": WORKED_EIGENVALUES, "r": 1}))
    x_path = tmp_path / "x.csv"
    x_path.write_text("0,1,1\n")
    return model_path, x_path


class TestPerturb:
    def run(self, tmp_path, model_path, x_path, *extra):
        out = tmp_path / "out"
        argv = ["perturb", str(model_path), "--x", str(x_path), "--out", str(out)]
        assert main(argv + list(extra)) == 0
        return out

    def test_report_matches_library(self, tmp_path, perturb_files):
        model_path, x_path = perturb_files
        out = self.run(tmp_path, model_path, x_path, "--eps", "1e-2,1e-3")
        model = SpectralModel(np.array(WORKED_EIGENVALUES), np.eye(3), 1)
        x = np.array([0.0, 1.0, 1.0])
        header, rows = read_table(out / "report.csv")
        assert header == ["quantity", "j", "k", "eps", "numeric", "theory", "abs_gap", "rel_gap"]
        # 2 (j,k) pairs x 3 quantities + 3 eigvec pairs x 2 + 1 tau, per eps.
        assert len(rows) == 2 * (2 * 3 + 3 * 2 + 1)
        by_key = {(row["quantity"], row["j"], row["k"], float(row["eps"])): row for row in rows}
        assert len(by_key) == len(rows)
        for eps in (1e-2, 1e-3):
            scenario = PerturbationScenario(model=model, x=x, eps=eps)
            for k in (2, 3):
                expected = {
                    "rho_pca": perturbed_rho_pca(scenario, 1, k),
                    "rho_ppca": perturbed_rho_ppca(scenario, 1, k),
                    "tau_jk": tau_jk_numeric(scenario, 1, k),
                }
                for quantity, value in expected.items():
                    row = by_key[(quantity, "1", str(k), eps)]
                    npt.assert_allclose(float(row["numeric"]), value, rtol=1e-10)
                row = by_key[("tau_jk", "1", str(k), eps)]
                npt.assert_allclose(
                    float(row["theory"]), tau_jk_theory(model, x, eps, 1, k), rtol=1e-10
                )
            for j in (1, 2, 3):
                theory = eigvec_perturbation_theory(model, x, eps, j)
                row = by_key[("eigvec_pca", str(j), "", eps)]
                npt.assert_allclose(float(row["numeric"]), eigvec_alignment_pca(scenario, j), rtol=1e-10)
                npt.assert_allclose(float(row["theory"]), theory, rtol=1e-10)
                row = by_key[("eigvec_ppca", str(j), "", eps)]
                npt.assert_allclose(float(row["numeric"]), eigvec_alignment_ppca(scenario, j), rtol=1e-10)
            row = by_key[("tau", "", "", eps)]
            npt.assert_allclose(float(row["numeric"]), tau_numeric(scenario), rtol=1e-10)
            npt.assert_allclose(float(row["theory"]), tau_theory(model, x, eps), rtol=1e-10)

    def test_gap_columns_are_consistent(self, tmp_path, perturb_files):
        model_path, x_path = perturb_files
        out = self.run(tmp_path, model_path, x_path, "--eps", "1e-2")
        _, rows = read_table(out / "report.csv")
        for row in rows:
            numeric, theory = float(row["numeric"]), float(row["theory"])
            # The table carries 12 significant digits, so recomputing the
            # difference from rounded values is only good to ~1e-12 of the
            # operand scale.
            slack = 1e-11 * max(abs(numeric), abs(theory), 1.0)
            npt.assert_allclose(
                float(row["abs_gap"]), abs(numeric - theory), rtol=1e-6, atol=slack
            )
            scale = max(abs(numeric), abs(theory))
            if scale > 0:
                npt.assert_allclose(
                    float(row["rel_gap"]),
                    abs(numeric - theory) / scale,
                    rtol=1e-6,
                    atol=slack / scale,
                )

    def test_flip_report(self, tmp_path, perturb_files):
        model_path, x_path = perturb_files
        out = self.run(tmp_path, model_path, x_path, "--example", "2,0.05")
        th = flip_thresholds(2.0, 0.05)
        header, rows = read_table(out / "flip.csv")
        assert header == ["method", "threshold", "below", "above", "cdm_more_robust"]
        by_method = {row["method"]: row for row in rows}
        assert set(by_method) == {"pca", "cdm"}
        npt.assert_allclose(float(by_method["pca"]["threshold"]), th.eta_pca, rtol=1e-9)
        npt.assert_allclose(float(by_method["cdm"]["threshold"]), th.eta_cdm, rtol=1e-9)
        npt.assert_allclose(float(by_method["pca"]["threshold"]), 19.0, rtol=1e-9)
        npt.assert_allclose(float(by_method["cdm"]["threshold"]), 27.0, rtol=1e-9)
        for row in rows:
            assert row["below"] == "signal"
            assert row["above"] == "outlier"
            assert row["cdm_more_robust"] == "1"
        manifest = check_manifest_digests(out)
        assert manifest["config"]["example"] == [2.0, 0.05]

    def test_without_example_no_flip_file(self, tmp_path, perturb_files):
        model_path, x_path = perturb_files
        out = self.run(tmp_path, model_path, x_path)
        assert not (out / "flip.csv").exists()

    def test_wrong_x_length_exits_2(self, tmp_path, perturb_files, capsys):
        model_path, _ = perturb_files
        short = tmp_path / "short.csv"
        short.write_text("0,1\n")
        code = main(["perturb", str(model_path), "--x", str(short), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "expected 3 values" in capsys.readouterr().err

    def test_model_unknown_field_exits_2(self, tmp_path, perturb_files, capsys):
        _, x_path = perturb_files
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"eigenvalues": [1.0], "r": 1, "rank": 1}))
        code = main(["perturb", str(bad), "--x", str(x_path), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "unknown field 'rank'" in capsys.readouterr().err

    def test_bad_eps_exits_2(self, tmp_path, perturb_files, capsys):
        model_path, x_path = perturb_files
        code = main(["perturb", str(model_path), "--x", str(x_path), "--eps", "small",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--eps" in capsys.readouterr().err

    def test_example_needs_two_values(self, tmp_path, perturb_files, capsys):
        model_path, x_path = perturb_files
        code = main(["perturb", str(model_path), "--x", str(x_path), "--example", "2",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--example" in capsys.readouterr().err


@pytest.fixture
def corpus_csv(tmp_path):
    rng = np.random.default_rng(9)
    images = rng.integers(0, 256, size=(30, 256)).astype(float)
    path = tmp_path / "corpus.csv"
    save_corpus(ImageCorpus(images, 16, 16), path)
    return path


class TestFaces:
    def test_outputs_and_determinism(self, tmp_path, corpus_csv):
        argv = ["faces", str(corpus_csv), "--ranks", "2,1", "--indices", "0,3",
                "--scheme", "s1", "--seed", "7"]
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(argv + ["--out", str(out1)]) == 0
        assert main(argv + ["--out", str(out2)]) == 0
        for name in [
            "mean.pgm",
            "original_000.pgm",
            "original_003.pgm",
            "recon_pca_r1_img000.pgm",
            "recon_pca_r2_img000.pgm",
            "recon_ppca_r1_img003.pgm",
            "recon_ppca_r2_img003.pgm",
            "contact_sheet.svg",
        ]:
            assert (out1 / name).exists(), name
        assert (out1 / "mean.pgm").read_bytes().startswith(b"P5\n16 16\n255\n")
        manifest = check_manifest_digests(out1)
        assert manifest["outputs"] == manifest_of(out2)["outputs"]
        config = manifest["config"]
        assert config["scheme"] == "s1"
        assert config["n"] == 30
        contaminated = config["contaminated"]
        assert len(contaminated) == 3  # floor(0.1 * 30)
        assert contaminated == sorted(contaminated)
        assert all(0 <= i < 30 for i in contaminated)

    def test_s2_scheme_appends_rows(self, tmp_path, corpus_csv):
        out = tmp_path / "out"
        assert main(["faces", str(corpus_csv), "--ranks", "1", "--indices", "0",
                     "--scheme", "s2", "--s2-count", "4", "--seed", "3",
                     "--out", str(out)]) == 0
        config = manifest_of(out)["config"]
        assert config["contaminated"] == [30, 31, 32, 33]
        assert config["n"] == 30

    def test_no_scheme_leaves_corpus_alone(self, tmp_path, corpus_csv):
        out = tmp_path / "out"
        assert main(["faces", str(corpus_csv), "--ranks", "1", "--indices", "0",
                     "--seed", "3", "--out", str(out)]) == 0
        assert manifest_of(out)["config"]["contaminated"] == []

    def test_index_out_of_range_exits_2(self, tmp_path, corpus_csv, capsys):
        code = main(["faces", str(corpus_csv), "--ranks", "1", "--indices", "0,99",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--indices: 99 outside [0, 30)" in capsys.readouterr().err

    def test_zero_rank_exits_2(self, tmp_path, corpus_csv, capsys):
        code = main(["faces", str(corpus_csv), "--ranks", "0,1", "--indices", "0",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--ranks" in capsys.readouterr().err

    def test_garbage_ranks_exit_2(self, tmp_path, corpus_csv, capsys):
        code = main(["faces", str(corpus_csv), "--ranks", "one", "--indices", "0",
                     "--out", str(tmp_path / "o")])
        assert code == 2
        assert "--ranks: expected comma-separated integers" in capsys.readouterr().err


class TestArgumentErrors:
    def test_missing_required_raises_system_exit(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["fit"])
        assert excinfo.value.code == 2

    def test_unknown_command_raises_system_exit(self):
        with pytest.raises(SystemExit) as excinfo:
            main(["frobnicate"])
        assert excinfo.value.code == 2

    def test_no_partial_outputs_on_failure(self, tmp_path):
        # A failing run must not leave a half-written output directory.
        model = tmp_path / "model.json"
        model.write_text(json.dumps({"eigenvalues": [1.0, 2.0], "r": 1}))
        x = tmp_path / "x.csv"
        x.write_text("1,1\n")
        out = tmp_path / "o"
        code = main(["perturb", str(model), "--x", str(x), "--out", str(out)])
        assert code != 0
        assert not out.exists()
