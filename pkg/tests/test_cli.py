"""End-to-end command-line interface tests on tiny corpora."""

import os

import numpy as np
import pytest

from rxnbridge import cli

RXNS = [
    "[CH2:1]=[CH2:2].[Br:3][Br:4]>>[CH2:1]([Br:3])[CH2:2][Br:4]",
    "[CH3:1][Cl:2].[NH3:3]>>[CH3:1][NH2:3]",
    "[CH4:1]>>[CH4:1]",
    "[CH3:1][OH:2]>>[CH3:1][OH:2]",
]

BAD_LINES = [
    "",  # empty
    "not a reaction",  # format
    "[CH4:1]>>[NH3:1]",  # map-element-mismatch
    "CC>>CC",  # unmapped-atom
]


def run(argv):
    return cli.main(argv)


@pytest.fixture()
def corpus(tmp_path):
    path = tmp_path / "rxns.txt"
    path.write_text("".join(r + "\n" for r in RXNS))
    return str(path)


@pytest.fixture()
def mixed_corpus(tmp_path):
    path = tmp_path / "mixed.txt"
    path.write_text("".join(r + "\n" for r in RXNS + BAD_LINES))
    return str(path)


class TestConfigPlumbing:
    def test_config_file_parsing(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("lr = 0.01  # learning rate\n\nn_steps=5\n")
        cfg = cli.load_config_file(str(p))
        assert cfg == {"lr": "0.01", "n_steps": "5"}

    def test_config_file_rejects_bad_line(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("just words\n")
        with pytest.raises(ValueError, match="key=value"):
            cli.load_config_file(str(p))

    def test_env_var_resolves_relative_paths(self, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.DATA_DIR_ENV, str(tmp_path))
        assert cli.resolve_path("x.txt") == str(tmp_path / "x.txt")
        assert cli.resolve_path("/abs/x.txt") == "/abs/x.txt"
        monkeypatch.delenv(cli.DATA_DIR_ENV)
        assert cli.resolve_path("x.txt") == "x.txt"

    def test_cli_flag_beats_config_beats_default(self, tmp_path):
        class Args:
            n_steps = 7

        assert cli._merged_option(Args(), {"n_steps": "3"}, "n_steps", int, 1) == 7

        class NoFlag:
            n_steps = None

        assert cli._merged_option(NoFlag(), {"n_steps": "3"}, "n_steps", int, 1) == 3
        assert cli._merged_option(NoFlag(), {}, "n_steps", int, 1) == 1


class TestIngest:
    def test_accounting_and_reasons(self, mixed_corpus, tmp_path):
        out = tmp_path / "splits"
        assert run(["ingest", mixed_corpus, "--output-dir", str(out)]) == 0
        kept = sum(
            len((out / f"{n}.txt").read_text().splitlines())
            for n in ("train", "valid", "test")
        )
        rejected = (out / "rejected.tsv").read_text().splitlines()
        assert kept == len(RXNS)
        assert len(rejected) - 1 == len(BAD_LINES)  # header row
        reasons = [r.split("\t")[1] for r in rejected[1:]]
        assert reasons == ["empty", "format", "map-element-mismatch",
                           "unmapped-atom"]

    def test_split_fractions_on_100_lines(self, tmp_path):
        path = tmp_path / "big.txt"
        path.write_text("[CH4:1]>>[CH4:1]\n" * 100)
        out = tmp_path / "splits"
        assert run(["ingest", str(path), "--output-dir", str(out),
                    "--fractions", "0.8,0.1,0.1"]) == 0
        sizes = [len((out / f"{n}.txt").read_text().splitlines())
                 for n in ("train", "valid", "test")]
        assert sizes == [80, 10, 10]

    def test_bad_fractions_rejected(self, corpus, tmp_path):
        assert run(["ingest", corpus, "--output-dir", str(tmp_path / "o"),
                    "--fractions", "0.5,0.5,0.5"]) == 2

    def test_all_rejected_is_an_error(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("junk\n")
        assert run(["ingest", str(path), "--output-dir",
                    str(tmp_path / "o")]) == 2


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    """One tiny CLI training run shared by the predict/evaluate tests."""
    root = tmp_path_factory.mktemp("cli_train")
    rxn_file = root / "rxns.txt"
    rxn_file.write_text("".join(r + "\n" for r in RXNS))
    ckpt = root / "model.bin"
    loss = root / "loss.csv"
    rc = run([
        "train", "--train-file", str(rxn_file), "--checkpoint", str(ckpt),
        "--loss-log", str(loss), "--n-steps", "60", "--batch-size", "4",
        "--lr", "0.003", "--warmup-steps", "5", "--log-every", "10",
        "--latent-dim", "16", "--n-enc-layers", "1", "--n-merge-layers", "1",
        "--n-dec-layers", "1", "--n-heads", "2", "--seed", "0",
    ])
    assert rc == 0
    return root


class TestTrainCommand:
    def test_outputs_exist(self, trained_dir):
        assert (trained_dir / "model.bin").exists()
        assert (trained_dir / "loss.csv").exists()
        assert (trained_dir / "loss.png").stat().st_size > 0

    def test_loss_log_format(self, trained_dir):
        rows = (trained_dir / "loss.csv").read_text().splitlines()
        assert rows[0] == ",".join(cli.LOSS_COLUMNS)
        assert len(rows[1].split(",")) == 6
        steps = [int(r.split(",")[0]) for r in rows[1:]]
        assert steps == [10, 20, 30, 40, 50, 60]
        totals = [float(r.split(",")[1]) for r in rows[1:]]
        assert totals[-1] < totals[0]

    def test_config_file_with_cli_override(self, trained_dir, tmp_path):
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "train_file = {}\nn_steps = 4\nbatch_size = 2\nlatent_dim = 16\n"
            "n_enc_layers = 1\nn_merge_layers = 1\nn_dec_layers = 1\n"
            "n_heads = 2\nwarmup_steps = 2\nlog_every = 2\n".format(
                trained_dir / "rxns.txt")
        )
        ckpt = tmp_path / "m.bin"
        loss = tmp_path / "l.csv"
        rc = run(["train", "--config", str(cfg), "--checkpoint", str(ckpt),
                  "--loss-log", str(loss), "--n-steps", "6"])
        assert rc == 0
        steps = [int(r.split(",")[0])
                 for r in loss.read_text().splitlines()[1:]]
        assert steps[-1] == 6  # CLI override wins over config's 4

    def test_resume_extends_loss_log(self, trained_dir, tmp_path):
        ckpt2 = tmp_path / "resumed.bin"
        loss2 = tmp_path / "loss2.csv"
        rc = run([
            "train", "--train-file", str(trained_dir / "rxns.txt"),
            "--resume", str(trained_dir / "model.bin"),
            "--checkpoint", str(ckpt2), "--loss-log", str(loss2),
            "--n-steps", "70", "--batch-size", "4", "--lr", "0.003",
            "--warmup-steps", "5", "--log-every", "10",
            "--latent-dim", "16", "--n-enc-layers", "1",
            "--n-merge-layers", "1", "--n-dec-layers", "1", "--n-heads", "2",
        ])
        assert rc == 0
        steps = [int(r.split(",")[0]) for r in loss2.read_text().splitlines()[1:]]
        assert steps == [70]

    def test_mismatched_resume_config_rejected(self, trained_dir, tmp_path):
        rc = run([
            "train", "--train-file", str(trained_dir / "rxns.txt"),
            "--resume", str(trained_dir / "model.bin"),
            "--checkpoint", str(tmp_path / "x.bin"),
            "--loss-log", str(tmp_path / "x.csv"),
            "--n-steps", "70", "--latent-dim", "32", "--n-enc-layers", "1",
            "--n-merge-layers", "1", "--n-dec-layers", "1", "--n-heads", "2",
        ])
        assert rc == 2


class TestPredictCommand:
    def make_inputs(self, trained_dir, tmp_path):
        inp = tmp_path / "inputs.txt"
        inp.write_text("C=C.BrBr\n" + RXNS[2] + "\n")
        return str(inp)

    def test_predictions_tsv_format(self, trained_dir, tmp_path):
        inp = self.make_inputs(trained_dir, tmp_path)
        out = tmp_path / "preds.tsv"
        rc = run(["predict", "--checkpoint", str(trained_dir / "model.bin"),
                  "--input", inp, "--direction", "forward",
                  "--output", str(out), "--n-samples", "4", "--n-steps", "3"])
        assert rc == 0
        seen = {}
        for row in out.read_text().splitlines():
            idx, rank, freq, smi = row.split("\t")
            seen.setdefault(int(idx), []).append((int(rank), int(freq), smi))
        for idx, rows in seen.items():
            assert [r[0] for r in rows] == list(range(1, len(rows) + 1))
            freqs = [r[1] for r in rows]
            assert freqs == sorted(freqs, reverse=True)
            assert sum(freqs) <= 4

    def test_predictions_byte_identical_across_runs(self, trained_dir, tmp_path):
        inp = self.make_inputs(trained_dir, tmp_path)
        outs = []
        for name in ("a.tsv", "b.tsv"):
            out = tmp_path / name
            rc = run(["predict", "--checkpoint",
                      str(trained_dir / "model.bin"), "--input", inp,
                      "--direction", "retro", "--output", str(out),
                      "--n-samples", "4", "--n-steps", "3", "--seed", "5"])
            assert rc == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_retro_direction_accepts_product_smiles(self, trained_dir, tmp_path):
        inp = tmp_path / "prods.txt"
        inp.write_text("C\n")
        out = tmp_path / "p.tsv"
        rc = run(["predict", "--checkpoint", str(trained_dir / "model.bin"),
                  "--input", str(inp), "--direction", "retro",
                  "--output", str(out), "--n-samples", "2", "--n-steps", "2"])
        assert rc == 0


class TestEvaluateCommand:
    def write_preds(self, path, rows):
        path.write_text("".join("\t".join(map(str, r)) + "\n" for r in rows))

    def test_topk_monotone_and_component_order_ignored(self, tmp_path):
        truth = tmp_path / "truth.txt"
        truth.write_text("".join(r + "\n" for r in RXNS[:2]))
        preds = tmp_path / "preds.tsv"
        # input 0 correct at rank 2 with reordered components; input 1 wrong
        self.write_preds(preds, [
            (0, 1, 3, "CC"),
            (0, 2, 1, "BrCCBr"),  # canonical product
            (1, 1, 4, "O"),
        ])
        report = tmp_path / "report.txt"
        rc = run(["evaluate", "--predictions", str(preds), "--truth",
                  str(truth), "--direction", "forward",
                  "--report", str(report)])
        assert rc == 0
        lines = dict(l.split(" ") for l in report.read_text().splitlines())
        assert float(lines["top1"]) == 0.0
        assert float(lines["top3"]) == 0.5
        assert float(lines["top5"]) == 0.5
        assert lines["n_inputs"] == "2"
        assert (tmp_path / "report.png").stat().st_size > 0

    def test_retro_truth_uses_reactant_side(self, tmp_path):
        truth = tmp_path / "truth.txt"
        truth.write_text(RXNS[0] + "\n")
        preds = tmp_path / "preds.tsv"
        self.write_preds(preds, [(0, 1, 2, "BrBr.C=C")])
        report = tmp_path / "r.txt"
        rc = run(["evaluate", "--predictions", str(preds), "--truth",
                  str(truth), "--direction", "retro", "--report", str(report)])
        assert rc == 0
        lines = dict(l.split(" ") for l in report.read_text().splitlines())
        assert float(lines["top1"]) == 1.0

    def test_empty_candidate_lists_counted(self, tmp_path):
        truth = tmp_path / "truth.txt"
        truth.write_text("".join(r + "\n" for r in RXNS[:2]))
        preds = tmp_path / "preds.tsv"
        self.write_preds(preds, [(0, 1, 1, "C")])
        report = tmp_path / "r.txt"
        rc = run(["evaluate", "--predictions", str(preds), "--truth",
                  str(truth), "--direction", "forward", "--report",
                  str(report)])
        assert rc == 0
        lines = dict(l.split(" ") for l in report.read_text().splitlines())
        assert lines["empty_candidate_lists"] == "1"

    def test_out_of_range_indices_rejected(self, tmp_path):
        truth = tmp_path / "truth.txt"
        truth.write_text(RXNS[0] + "\n")
        preds = tmp_path / "preds.tsv"
        self.write_preds(preds, [(5, 1, 1, "C")])
        rc = run(["evaluate", "--predictions", str(preds), "--truth",
                  str(truth), "--direction", "forward",
                  "--report", str(tmp_path / "r.txt")])
        assert rc == 2

    def test_non_contiguous_ranks_rejected(self, tmp_path):
        preds = tmp_path / "preds.tsv"
        self.write_preds(preds, [(0, 2, 1, "C")])
        with pytest.raises(ValueError, match="rank"):
            cli.read_predictions(str(preds))


class TestInspectPath:
    def test_rows_satisfy_simplex_and_zero_sum(self, tmp_path):
        out = tmp_path / "path.csv"
        rc = run(["inspect-path", "--x0", "2", "--x1", "0", "-K", "4",
                  "--sigma", "1.0", "--n-grid", "11", "--output", str(out)])
        assert rc == 0
        rows = out.read_text().splitlines()
        assert rows[0] == "t,p0,p1,p2,p3,v0,v1,v2,v3"
        for row in rows[1:]:
            vals = [float(x) for x in row.split(",")]
            p, v = vals[1:5], vals[5:9]
            # the table is printed with 8 decimals, so sums carry
            # accumulated rounding of up to K * 0.5e-8
            assert sum(p) == pytest.approx(1.0, abs=1e-7)
            assert sum(v) == pytest.approx(0.0, abs=1e-7)
        assert (tmp_path / "path.png").stat().st_size > 0

    def test_endpoint_rows_are_one_hot(self, tmp_path):
        out = tmp_path / "path.csv"
        rc = run(["inspect-path", "--x0", "1", "--x1", "3", "-K", "5",
                  "--sigma", "0.5", "--n-grid", "5", "--output", str(out)])
        assert rc == 0
        rows = out.read_text().splitlines()
        first = [float(x) for x in rows[1].split(",")]
        last = [float(x) for x in rows[-1].split(",")]
        assert first[1 + 1] == pytest.approx(1.0, abs=1e-12)  # p at x0=1, t=0
        assert last[1 + 3] == pytest.approx(1.0, abs=1e-12)  # p at x1=3, t=1
        # the known midpoint values for sigma=1, K=4 appear with x0=0,x1=1
        out2 = tmp_path / "mid.csv"
        rc = run(["inspect-path", "--x0", "0", "--x1", "1", "-K", "4",
                  "--sigma", "1.0", "--n-grid", "3", "--output", str(out2)])
        assert rc == 0
        mid = [float(x) for x in out2.read_text().splitlines()[2].split(",")]
        assert mid[1:5] == pytest.approx([0.375, 0.375, 0.125, 0.125])

    def test_bad_class_rejected(self, tmp_path):
        rc = run(["inspect-path", "--x0", "9", "--x1", "0", "-K", "4",
                  "--output", str(tmp_path / "x.csv")])
        assert rc == 2
