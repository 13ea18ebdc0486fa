import os

import numpy as np
import pytest

import stochnet as sn
from stochnet.cli import main
from stochnet.config import ConfigError, load_config
from stochnet.pnm import read_pnm, write_pgm, write_ppm


def write_xor_csv(path):
    path.write_text("0,0,0\n0,1,1\n1,0,1\n1,1,0\n")


def xor_config(tmp_path, mode="ebp", iterations=400, extra=""):
    csv = tmp_path / "xor.csv"
    write_xor_csv(csv)
    conf = tmp_path / "run.conf"
    conf.write_text(f"""# xor experiment
[network]
input = 2
layer1 = tanh 6 dense 0
layer2 = sigmoid 1 dense 1
init_scale = 0.5

[train]
mode = {mode}
step_size = 2.0
iterations = {iterations}
batch_size = 4
seed = 1
eval_period = 0
metric = accuracy

[data]
kind = csv
path = {csv}

[output]
dir = {tmp_path / 'out'}
figures = false
{extra}
""")
    return conf


def blob_model_config(tmp_path, trained=True):
    """A tiny local-connectivity image model, trained briefly."""
    conf = tmp_path / "blob.conf"
    conf.write_text(f"""
[network]
input = image 8 8 3
layer1 = sigmoid local grid 8x8 dl 1 dr 1 image
layer2 = sigmoid local grid 8x8 dl 1 dr 1
init_scale = 0.1

[train]
mode = ebp
step_size = 1.0
iterations = {60 if trained else 0}
batch_size = 4
seed = 3
metric = iou

[data]
kind = blobs
blob_count = 8
blob_height = 8
blob_width = 8
blob_seed = 5
train_count = 6
split_seed = 2

[inference]
samples = 400
burn_in = 20
sweeps = 200
thinning = 2
seed = 9

[segment]
image_index = 0
mode = deterministic

[output]
dir = {tmp_path / 'out'}
figures = false
""")
    return conf


class TestConfigParsing:
    def test_sections_keys_comments(self, tmp_path):
        conf = xor_config(tmp_path)
        cfg = load_config(str(conf))
        assert cfg.get("train", "step_size") == 2.0
        assert cfg.get("train", "mode") == "ebp"
        spec = cfg.network_spec()
        assert spec.input_count == 2
        assert spec.layers[0].kind == sn.TANH

    def test_unknown_key_rejected(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("[train]\nnot_a_key = 3\n")
        with pytest.raises(ConfigError, match="not_a_key"):
            load_config(str(conf))

    def test_unknown_section_rejected(self, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("[nonsense]\nx = 1\n")
        with pytest.raises(ConfigError, match="nonsense"):
            load_config(str(conf))

    def test_set_overrides(self, tmp_path):
        conf = xor_config(tmp_path)
        cfg = load_config(str(conf), ["train.step_size=0.25", "train.mode=bn"])
        assert cfg.get("train", "step_size") == 0.25
        assert cfg.get("train", "mode") == "bn"

    def test_local_layer_grammar(self, tmp_path):
        conf = blob_model_config(tmp_path)
        spec = load_config(str(conf)).network_spec()
        assert spec.input_grid == (8, 8, 3)
        assert spec.layers[0].conn.image_access is True
        assert spec.layers[1].conn.grid == (8, 8)


class TestTrainCommand:
    def test_ebp_writes_checkpoint_and_metrics(self, tmp_path, capsys):
        conf = xor_config(tmp_path, iterations=400)
        assert main(["train", "--config", str(conf)]) == 0
        out = tmp_path / "out"
        assert (out / "model.ckpt").exists()
        lines = (out / "metrics.csv").read_text().splitlines()
        assert lines[0].startswith("iter,")
        assert len(lines) == 2  # eval_period 0: final row only
        final = lines[1].split(",")
        assert float(final[3]) == 1.0  # train accuracy reaches 100%

    def test_paired_mode_writes_both_logs_same_grid(self, tmp_path):
        conf = xor_config(tmp_path, mode="paired", iterations=40,
                          extra="")
        assert main(["train", "--config", str(conf),
                     "--set", "train.eval_period=10",
                     "--set", "train.eval_samples=50"]) == 0
        out = tmp_path / "out"
        ebp = (out / "metrics.ebp.csv").read_text().splitlines()
        bn = (out / "metrics.bn.csv").read_text().splitlines()
        grid_e = [r.split(",")[0] for r in ebp[1:]]
        grid_b = [r.split(",")[0] for r in bn[1:]]
        assert grid_e == grid_b
        assert (out / "model.ebp.ckpt").exists()
        assert (out / "model.bn.ckpt").exists()

    def test_paired_mode_shares_init(self, tmp_path):
        conf = xor_config(tmp_path, mode="paired", iterations=0)
        assert main(["train", "--config", str(conf)]) == 0
        out = tmp_path / "out"
        a = sn.load_network(str(out / "model.ebp.ckpt"))
        b = sn.load_network(str(out / "model.bn.ckpt"))
        assert np.array_equal(a.param_vector(), b.param_vector())

    def test_invalid_key_exits_2(self, tmp_path, capsys):
        conf = xor_config(tmp_path)
        code = main(["train", "--config", str(conf), "--set", "train.bogus=1"])
        assert code == 2
        assert "bogus" in capsys.readouterr().err

    def test_figures_rendered(self, tmp_path):
        conf = xor_config(tmp_path, iterations=30)
        assert main(["train", "--config", str(conf),
                     "--set", "output.figures=true",
                     "--set", "train.eval_period=10"]) == 0
        assert (tmp_path / "out" / "learning_curves.png").exists()


class TestEvalCommand:
    def test_reports_metrics_and_gap(self, tmp_path, capsys):
        conf = xor_config(tmp_path, iterations=400)
        assert main(["train", "--config", str(conf)]) == 0
        capsys.readouterr()
        assert main(["eval", "--config", str(conf)]) == 0
        out = capsys.readouterr().out
        assert "train_accuracy=1.0000" in out
        assert "gap=" in out

    def test_deterministic_given_seed(self, tmp_path, capsys):
        conf = blob_model_config(tmp_path)
        assert main(["train", "--config", str(conf)]) == 0
        capsys.readouterr()
        assert main(["eval", "--config", str(conf)]) == 0
        first = capsys.readouterr().out
        assert main(["eval", "--config", str(conf)]) == 0
        second = capsys.readouterr().out
        assert first == second

    def test_missing_checkpoint_exits_3(self, tmp_path):
        conf = xor_config(tmp_path)
        assert main(["eval", "--config", str(conf)]) == 3

    def test_corrupt_checkpoint_exits_3(self, tmp_path):
        conf = xor_config(tmp_path)
        out = tmp_path / "out"
        out.mkdir()
        (out / "model.ckpt").write_text("GARBAGE HEADER\n")
        assert main(["eval", "--config", str(conf)]) == 3


class TestOracleCommand:
    def test_suite_passes(self, tmp_path, capsys):
        conf = tmp_path / "oracle.conf"
        conf.write_text("""
[oracle]
nets = 2
inputs = 2
hidden = 2
outputs = 2
samples = 40000
tol = 0.008
gibbs_burn_in = 100
gibbs_sweeps = 8000
gibbs_thinning = 4
seed = 11

[output]
dir = out
""")
        assert main(["oracle", "--config", str(conf)]) == 0
        out = capsys.readouterr().out
        assert "all checks passed" in out
        assert "FAIL" not in out

    def test_oversized_net_refused(self, tmp_path, capsys):
        conf = tmp_path / "oracle.conf"
        conf.write_text("[oracle]\nnets = 1\nhidden = 30\n")
        assert main(["oracle", "--config", str(conf)]) == 2
        assert "state space" in capsys.readouterr().err

    def test_seed_variation_stays_in_bounds(self, tmp_path, capsys):
        conf = tmp_path / "oracle.conf"
        conf.write_text("""
[oracle]
nets = 1
inputs = 2
hidden = 2
outputs = 1
samples = 30000
tol = 0.009
gibbs_burn_in = 100
gibbs_sweeps = 6000
gibbs_thinning = 3
""")
        outs = []
        for seed in (3, 4):
            assert main(["oracle", "--config", str(conf),
                         "--set", f"oracle.seed={seed}"]) == 0
            outs.append(capsys.readouterr().out)
        assert outs[0] != outs[1]  # measured errors differ with the seed


class TestSegmentCommand:
    def test_zero_weight_model_uniform_gray(self, tmp_path):
        conf = blob_model_config(tmp_path, trained=False)
        assert main(["train", "--config", str(conf),
                     "--set", "network.init_scale=0"]) == 0
        assert main(["segment", "--config", str(conf)]) == 0
        img = read_pnm(str(tmp_path / "out" / "marginal.pgm"))
        assert img.shape == (8, 8)
        assert (img == 128).all()

    def test_scribbles_all_clamped_decision_equals_scribble(self, tmp_path):
        conf = blob_model_config(tmp_path, trained=False)
        assert main(["train", "--config", str(conf)]) == 0
        scribble = np.zeros((8, 8), dtype=np.uint8)
        scribble[:4] = 255  # top half fg, bottom half bg, nothing free
        write_pgm(str(tmp_path / "scrib.pgm"), scribble)
        assert main(["segment", "--config", str(conf),
                     "--set", f"segment.scribbles={tmp_path / 'scrib.pgm'}"]) == 0
        dec = read_pnm(str(tmp_path / "out" / "clamped_decision.pgm"))
        assert np.array_equal(dec, scribble)
        marg = read_pnm(str(tmp_path / "out" / "clamped_marginal.pgm"))
        assert set(np.unique(marg)) <= {0, 255}

    def test_noise_sweep_emits_file_per_level(self, tmp_path):
        conf = blob_model_config(tmp_path)
        assert main(["train", "--config", str(conf)]) == 0
        assert main(["segment", "--config", str(conf),
                     "--set", "segment.noise_sigmas=0.05,0.15,0.3",
                     "--set", "segment.blur_radii=1.0"]) == 0
        out = tmp_path / "out"
        for j in range(3):
            assert (out / f"marginal_sigma_{j}.pgm").exists()
        assert (out / "marginal_blur_0.pgm").exists()
        rows = (out / "noise.csv").read_text().splitlines()
        assert rows[0] == "kind,level,iou"
        assert len(rows) == 5

    def test_missing_model_exits_3(self, tmp_path):
        conf = blob_model_config(tmp_path)
        assert main(["segment", "--config", str(conf)]) == 3

    def test_deterministic_outputs(self, tmp_path):
        conf = blob_model_config(tmp_path)
        assert main(["train", "--config", str(conf)]) == 0
        assert main(["segment", "--config", str(conf),
                     "--set", "segment.mode=sampled"]) == 0
        first = (tmp_path / "out" / "marginal.pgm").read_bytes()
        assert main(["segment", "--config", str(conf),
                     "--set", "segment.mode=sampled"]) == 0
        assert (tmp_path / "out" / "marginal.pgm").read_bytes() == first


class TestReportCommand:
    def test_regenerates_figures_from_csvs(self, tmp_path):
        conf = xor_config(tmp_path, iterations=30)
        assert main(["train", "--config", str(conf),
                     "--set", "train.eval_period=10"]) == 0
        assert main(["report", "--config", str(conf)]) == 0
        assert (tmp_path / "out" / "learning_curves.png").exists()

    def test_no_outputs_exits_3(self, tmp_path):
        conf = xor_config(tmp_path)
        (tmp_path / "out").mkdir()
        assert main(["report", "--config", str(conf)]) == 3
