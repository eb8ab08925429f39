import numpy as np
import pytest

from testembed import container
from testembed.config import RunConfig
from testembed.encoder import Encoder
from testembed.errors import ConfigError, EvalError
from testembed.pipeline import (
    Checkpoint, classification_report, encoder_config, evaluate, forecast_report, match_words,
    resolve_vocab, restore_encoder, split_dataset, train_phase1, train_phase2,
)
from testembed.synthetic import make_ar2, make_cls3

TINY = dict(num_blocks=1, hidden_channels=4, kernel=2, epochs_phase1=1, epochs_phase2=1, batch_size=8,
            queue_capacity=32, len_min=8, len_max=16, step_min=4, step_max=8, token_len=16, prompt_length=2)


@pytest.fixture(scope="module")
def cls_data():
    return make_cls3(n_per_class=10, length=32, seed=0)


@pytest.fixture(scope="module")
def ar_data():
    return make_ar2(n=30, length=32, seed=0)


@pytest.fixture(scope="module")
def cls_run(cls_data):
    cfg = RunConfig(**TINY)
    c1 = train_phase1(cfg, cls_data)
    return cfg, c1, train_phase2(cfg, c1, cls_data)


class TestConfig:
    def test_parse(self, tmp_path):
        (tmp_path / "c.cfg").write_text("# comment\ndataset = d.txt\nlr = 0.01\nnum_blocks = 2  # inline\n")
        cfg = RunConfig.from_file(tmp_path / "c.cfg")
        assert cfg.lr == 0.01 and cfg.num_blocks == 2
        assert cfg.dataset == str(tmp_path / "d.txt")

    @pytest.mark.parametrize("text, msg", [
        ("bogus = 1", "unknown key"),
        ("lr = fast", "bad float"),
        ("lr", "expected 'key = value'"),
        ("lr = 1\nlr = 2", "duplicate"),
        ("task = regress", "task must be"),
        ("momentum = 2", "momentum"),
    ])
    def test_rejected(self, text, msg):
        with pytest.raises(ConfigError, match=msg):
            RunConfig.parse(text)

    def test_dumps_round_trip(self):
        cfg = RunConfig(lr=0.003, prototypes="fixed", seed=4)
        assert RunConfig.parse(cfg.dumps()) == cfg

    def test_from_dict_rejects_unknown(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({"nope": 1})


def test_split_is_seeded_80_20():
    data = make_cls3(n_per_class=125, length=16, seed=0)
    tr, ho = split_dataset(data, RunConfig(seed=3))
    assert (len(tr), len(ho)) == (300, 75)
    tr2, _ = split_dataset(data, RunConfig(seed=3))
    assert all(a is b for a, b in zip(tr, tr2))


def test_synthetic_suites():
    cls = make_cls3(seed=1)
    assert len(cls) == 375 and sorted({s.label for s in cls}) == [0, 1, 2]
    assert make_cls3(seed=1) == cls
    ar = make_ar2(n=5, seed=1)
    assert all(s.target.shape == (1, 1) and s.T == 128 for s in ar)


class TestPhase1:
    def test_zero_epochs_is_initialization(self, cls_data):
        cfg = RunConfig(**{**TINY, "epochs_phase1": 0})
        ck = train_phase1(cfg, cls_data)
        init = Encoder(encoder_config(cfg, resolve_vocab(cfg).M), 1, seed=cfg.seed).state_dict()
        assert container.dumps(ck.subset("enc")) == container.dumps(init)
        assert ck.history == []

    def test_deterministic(self, cls_data, cls_run):
        cfg, c1, _ = cls_run
        assert train_phase1(cfg, cls_data) == c1

    def test_history_fields(self, cls_run):
        _, c1, _ = cls_run
        assert [set(h) for h in c1.history] == [{"epoch", "loss", "ins", "text"}]

    def test_too_small_dataset(self, cls_data):
        with pytest.raises(ConfigError):
            train_phase1(RunConfig(**{**TINY, "batch_size": 64}), cls_data)

    def test_forecast_trains_decoder(self, ar_data):
        cfg = RunConfig(**{**TINY, "task": "forecast"})
        ck = train_phase1(cfg, ar_data)
        assert "dec.w" in ck.tensors and "ae" in ck.history[0]


class TestPhase2:
    def test_schema_and_frozen_encoder(self, cls_run):
        _, c1, c2 = cls_run
        assert c2.phase == "phase2"
        assert {"head.cls.w", "head.cls.b", "prompt.pe"} <= set(c2.tensors)
        assert c2.checksum("enc") == c1.checksum("enc")
        assert c2.tensors["prompt.pe"].shape == (2, 64)

    def test_forecast_head(self, ar_data):
        cfg = RunConfig(**{**TINY, "task": "forecast"})
        c2 = train_phase2(cfg, train_phase1(cfg, ar_data), ar_data)
        assert "dec.w" in c2.tensors and "head.cls.w" not in c2.tensors
        rep = evaluate(c2, ar_data)
        assert set(rep) >= {"mse", "rmse", "persistence_mse"}

    def test_task_mismatch(self, cls_data, cls_run):
        _, c1, _ = cls_run
        with pytest.raises(ConfigError):
            train_phase2(RunConfig(**{**TINY, "task": "forecast"}), c1, cls_data)

    def test_round_trip(self, tmp_path, cls_run):
        _, _, c2 = cls_run
        c2.save(tmp_path / "ck")
        back = Checkpoint.load(tmp_path / "ck")
        assert back == c2
        assert (tmp_path / "ck" / "weights.tste").read_bytes() == container.dumps(c2.tensors)

    def test_deterministic(self, cls_data, cls_run):
        cfg, c1, c2 = cls_run
        assert train_phase2(cfg, c1, cls_data) == c2


class TestEvaluate:
    def test_perfect_predictor(self):
        y = [0, 1, 2, 2, 1]
        assert classification_report(y, y, 3)["accuracy"] == 1.0

    def test_constant_forecaster(self):
        target = np.full((4, 1, 1), 2.0)
        assert forecast_report(np.full((4, 1, 1), 2.0), target, np.full((4, 1), 2.0))["mse"] == 0.0

    def test_random_baseline(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, 300)
        acc = classification_report(y, rng.integers(0, 3, 300), 3)["accuracy"]
        assert 0.23 <= acc <= 0.43

    def test_report_shape(self, cls_data, cls_run):
        _, _, c2 = cls_run
        rep = evaluate(c2, cls_data)
        assert rep["n"] == len(cls_data)
        assert np.sum(rep["confusion"]) == len(cls_data)
        assert evaluate(c2, cls_data) == rep

    def test_needs_phase2(self, cls_data, cls_run):
        with pytest.raises(EvalError):
            evaluate(cls_run[1], cls_data)


class TestMatchWords:
    def test_empty_lists(self, cls_data, cls_run):
        rep = match_words(cls_run[1], cls_data[:3], resolve_vocab(cls_run[0]), 0)
        assert rep["tokens"] and all(t["words"] == [] for t in rep["tokens"])
        assert rep["frequencies"] == {}

    def test_identical_tokens(self, cls_data, cls_run):
        rep = match_words(cls_run[1], [cls_data[0], cls_data[0]], resolve_vocab(cls_run[0]), 4)
        half = len(rep["tokens"]) // 2
        assert [t["words"] for t in rep["tokens"][:half]] == [t["words"] for t in rep["tokens"][half:]]

    def test_frequency_total(self, cls_data, cls_run):
        rep = match_words(cls_run[1], cls_data[:5], resolve_vocab(cls_run[0]), 3)
        assert sum(rep["frequencies"].values()) == 3 * len(rep["tokens"])


def test_restore_encoder_matches_checkpoint(cls_run):
    _, c1, _ = cls_run
    enc = restore_encoder(c1)
    assert container.dumps(enc.state_dict()) == container.dumps(c1.subset("enc"))
