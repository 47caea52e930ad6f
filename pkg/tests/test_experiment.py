"""Config grammar, sweep artifacts, and the FER probe."""

import math

import numpy as np
import pytest

from parastream import config, data, experiment, training
from parastream.config import ConfigError, ExperimentConfig

from helpers import toy_model


def sweep_config(**overrides):
    base = dict(
        corpus_count=4,
        corpus_size=16,
        semantic=False,
        snr_points=(8.0,),
        trials=1,
        images=2,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestConfigGrammar:
    def test_empty_text_gives_defaults(self):
        assert config.parse_config("") == ExperimentConfig()

    def test_defaults_fill_q_points(self):
        cfg = config.parse_config("[pipeline]\nq = 30\n")
        assert cfg.q_points == (30,)

    def test_template_parses_back_to_defaults(self):
        assert config.parse_config(config.default_config_text()) == ExperimentConfig()

    def test_range_grammar(self):
        cfg = config.parse_config("[sweep]\nsnr_db = 2:12:2\n")
        assert cfg.snr_points == (2.0, 4.0, 6.0, 8.0, 10.0, 12.0)

    def test_comma_list_grammar(self):
        cfg = config.parse_config("[sweep]\nsnr_db = 1,3.5\nq = 10,50\n")
        assert cfg.snr_points == (1.0, 3.5)
        assert cfg.q_points == (10, 50)

    def test_unknown_section_is_line_anchored(self):
        with pytest.raises(ConfigError) as err:
            config.parse_config("[pipeline]\nq = 50\n\n[nope]\nx = 1\n")
        assert err.value.line == 4
        assert "unknown section" in str(err.value)

    def test_unknown_key_is_line_anchored(self):
        with pytest.raises(ConfigError) as err:
            config.parse_config("[sweep]\ntrials = 3\nbogus = 1\n")
        assert err.value.line == 3

    def test_bad_value_is_line_anchored(self):
        with pytest.raises(ConfigError) as err:
            config.parse_config("[sweep]\nsnr_db = oops\n")
        assert err.value.line == 2
        assert "sweep.snr_db" in str(err.value)

    def test_missing_section_header_is_syntax_error(self):
        with pytest.raises(ConfigError, match="syntax"):
            config.parse_config("q = 50\n")

    def test_bad_channel_kind_rejected(self):
        with pytest.raises(ConfigError, match="kind"):
            config.parse_config("[channel]\nkind = fancy\n")

    def test_bad_range_step(self):
        with pytest.raises(ConfigError, match="step"):
            config.parse_config("[sweep]\nsnr_db = 2:12:0\n")

    def test_quality_bounds(self):
        with pytest.raises(ConfigError, match="1..100"):
            ExperimentConfig(q=0)
        with pytest.raises(ConfigError, match="1..100"):
            ExperimentConfig(q_points=(10, 101))

    def test_positive_counts(self):
        with pytest.raises(ConfigError, match="positive"):
            ExperimentConfig(trials=0)

    def test_load_config_reads_files(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[sweep]\ntrials = 2\n", encoding="utf-8")
        assert config.load_config(path).trials == 2


class TestSweep:
    def test_row_count_is_points_times_seeds(self):
        cfg = sweep_config(snr_points=(2.0, 4.0, 6.0, 8.0, 10.0, 12.0),
                           q_points=(10,), trials=5, images=1)
        rows = experiment.sweep_rows(cfg)
        assert len(rows) == 30
        seeds = [r.seed for r in rows[:5]]
        assert seeds == [0, 1, 2, 3, 4]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = sweep_config(snr_points=(6.0, 8.0), trials=2)
        first = experiment.rows_to_csv(experiment.sweep_rows(cfg))
        second = experiment.rows_to_csv(experiment.sweep_rows(cfg))
        assert first.encode() == second.encode()
        a = experiment.write_outputs(experiment.sweep_rows(cfg), tmp_path / "a")
        b = experiment.write_outputs(experiment.sweep_rows(cfg), tmp_path / "b")
        for pa, pb in zip(a, b):
            assert pa.read_bytes() == pb.read_bytes()

    def test_csv_schema(self):
        cfg = sweep_config()
        text = experiment.rows_to_csv(experiment.sweep_rows(cfg))
        lines = text.split("\n")
        assert lines[0] == "snr_db,cbr,psnr_db,ms_ssim,corruption_rate,seed"
        assert lines[1].count(",") == 5
        assert text.endswith("\n")

    def test_mean_cbr_monotone_in_quality(self):
        cfg = sweep_config(q_points=(10, 50, 90))
        rows = experiment.sweep_rows(cfg)
        means = [
            np.mean([r.cbr for r in rows if r.q == q]) for q in (10, 50, 90)
        ]
        assert means[0] <= means[1] <= means[2]

    def test_infinite_psnr_serializes_empty(self):
        # exact reconstruction is the sentinel case: the cell stays blank
        row = experiment.MetricsRow(
            snr_db=10.0, q=50, cbr=0.5, psnr_db=math.inf,
            ms_ssim=1.0, corruption_rate=0.0, seed=0,
        )
        body = experiment.rows_to_csv([row]).split("\n")[1]
        assert body == "10.000000,0.500000,,1.000000,0.000000,0"

    def test_noiseless_channel_is_transparent(self):
        # with sigma^2 = 0 the digital branch decodes exactly, so the
        # only loss left is the codec's own
        cfg = sweep_config(snr_points=(math.inf,), trials=1)
        rows = experiment.sweep_rows(cfg)
        assert rows[0].corruption_rate == 0.0
        assert rows[0].psnr_db > 25.0

    def test_low_snr_reports_corruption(self):
        rows = experiment.sweep_rows(sweep_config(snr_points=(0.0,)))
        assert rows[0].corruption_rate == 1.0
        rows = experiment.sweep_rows(sweep_config(snr_points=(8.0,)))
        assert rows[0].corruption_rate == 0.0

    def test_plot_data_blocks_per_quality(self, tmp_path):
        cfg = sweep_config(q_points=(10, 50), snr_points=(6.0, 8.0))
        paths = experiment.write_outputs(experiment.sweep_rows(cfg), tmp_path / "s")
        assert [p.name for p in paths] == [
            "s.csv", "s_psnr_db.dat", "s_ms_ssim.dat",
            "s_corruption_rate.dat", "s_cbr.dat",
        ]
        text = paths[1].read_text()
        assert "# q = 10" in text and "# q = 50" in text
        blocks = text.strip().split("\n\n")
        assert len(blocks) == 2
        for block in blocks:
            rows = [l for l in block.splitlines() if not l.startswith("#")]
            assert all(len(r.split()) == 2 for r in rows)

    def test_run_experiment_end_to_end(self, tmp_path):
        ini = tmp_path / "exp.ini"
        ini.write_text(
            "[corpus]\ncount = 4\nsize = 16\n"
            "[pipeline]\nsemantic = false\n"
            f"[sweep]\nsnr_db = 8\ntrials = 1\nimages = 2\nout = {tmp_path}/run\n",
            encoding="utf-8",
        )
        paths = experiment.run_experiment(ini)
        assert paths[0].exists()
        assert paths[0].read_text().startswith("snr_db,")


class TestCorpusLoading:
    def test_ppm_directory(self, tmp_path):
        for i in range(2):
            data.write_ppm(tmp_path / f"img{i}.ppm", data.make_corpus(1, 16, i)[0])
        cfg = sweep_config(ppm_dir=str(tmp_path))
        images = experiment.load_corpus(cfg)
        assert len(images) == 2
        assert images[0].shape == (16, 16, 3)

    def test_empty_ppm_directory_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            experiment.load_corpus(sweep_config(ppm_dir=str(tmp_path)))

    def test_procedural_corpus_dimensions(self):
        images = experiment.load_corpus(sweep_config(corpus_count=3, corpus_size=32))
        assert len(images) == 3
        assert images[0].shape == (32, 32, 3)


class TestModelLoading:
    def test_disabled_semantic_needs_no_model(self):
        assert experiment.load_experiment_model(sweep_config(semantic=False)) is None

    def test_fresh_model_is_deterministic(self):
        a = experiment.load_experiment_model(sweep_config(semantic=True))
        b = experiment.load_experiment_model(sweep_config(semantic=True))
        sa, sb = a.state_dict(), b.state_dict()
        assert all(np.array_equal(sa[k], sb[k]) for k in sa)

    def test_checkpoint_round_trip(self, tmp_path):
        model = toy_model(seed=5)
        path = tmp_path / "ckpt.npz"
        training.save_model(path, model)
        cfg = sweep_config(semantic=True, checkpoint=str(path))
        loaded = experiment.load_experiment_model(cfg)
        sa, sb = model.state_dict(), loaded.state_dict()
        assert all(np.array_equal(sa[k], sb[k]) for k in sa)


class TestFerMonteCarlo:
    def test_deterministic(self):
        a = experiment.fer_monte_carlo(4.0, 30, seed=3)
        b = experiment.fer_monte_carlo(4.0, 30, seed=3)
        assert a == b

    def test_deep_in_the_cliff_every_frame_fails(self):
        assert experiment.fer_monte_carlo(0.0, 20, seed=1, max_iter=5) == 1.0

    def test_above_the_cliff_frames_survive(self):
        assert experiment.fer_monte_carlo(8.0, 20, seed=1) == 0.0
