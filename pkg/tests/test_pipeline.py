import numpy as np
import pytest

from triembed.corpus import SyntheticConfig, generate_synthetic_corpus, write_corpus
from triembed.pipeline import (
    PRESETS,
    ConfigError,
    TrainConfig,
    build_model,
    evaluate,
    format_config,
    load_config,
    load_model,
    parse_config_text,
    save_model,
    train,
)

TINY = SyntheticConfig(n_concepts=10, n_train=40, n_val=10, grid_rows=2, grid_cols=2, cell_size=8,
                       audio_frames=16, feat_dim=6, span_min=4, span_max=8, n_fillers=5)


def tiny_cfg(**kw):
    base = dict(epochs=2, batch_size=10, image_channels=(4, 4, 4), audio_channels=(8, 8), emb_size=8,
                eval_every=1, init_gain=2.45, base_lr=3e-4)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def corpus():
    return generate_synthetic_corpus(TINY)


def test_zero_epochs_is_a_no_op(corpus):
    cfg = tiny_cfg(epochs=0)
    model, runlog = train(corpus, cfg)
    init = build_model(cfg, corpus).state()
    assert runlog.epochs == []
    for k, v in model.state().items():
        np.testing.assert_array_equal(v, init[k])


def test_training_reduces_loss_on_noise_free_data():
    corpus = generate_synthetic_corpus(SyntheticConfig(**{**TINY.__dict__, "noise_sigma": 0.0}))
    _, runlog = train(corpus, tiny_cfg(epochs=30, eval_every=0))
    assert runlog.epochs[-1].mean_loss < runlog.epochs[0].mean_loss


def test_runs_are_bit_identical(corpus, tmp_path):
    outs = []
    for name in ("a", "b"):
        model, runlog = train(corpus, tiny_cfg())
        save_model(model, tmp_path / f"{name}.bin")
        outs.append((runlog.loss_csv(), runlog.metrics_csv(tiny_cfg()), (tmp_path / f"{name}.bin").read_bytes()))
    assert outs[0] == outs[1]


def test_frozen_table_untouched_and_text_idle_when_bimodal(corpus):
    cfg = tiny_cfg(epochs=1)
    model, _ = train(corpus, cfg)
    np.testing.assert_array_equal(model.text.table.data, build_model(cfg, corpus).text.table.data)
    cfg = tiny_cfg(epochs=1, trimodal=False, frozen_text=False)
    model, _ = train(corpus, cfg)
    np.testing.assert_array_equal(model.text.table.data, build_model(cfg, corpus).text.table.data)
    assert model.text.table.grad is None or not model.text.table.grad.any()


def test_unfrozen_table_moves_when_trimodal(corpus):
    cfg = tiny_cfg(epochs=1, frozen_text=False)
    model, _ = train(corpus, cfg)
    assert not np.array_equal(model.text.table.data, build_model(cfg, corpus).text.table.data)


def test_runlog_formats(corpus):
    cfg = tiny_cfg()
    _, runlog = train(corpus, cfg)
    loss_lines = runlog.loss_csv().splitlines()
    assert loss_lines[0] == "epoch,lr,mean_loss" and len(loss_lines) == 3
    metrics = runlog.metrics_csv(cfg).splitlines()
    assert metrics[0] == "# seed=0,modes=SIMA|SIMT|STMA,eta=1.0,epochs=2,trimodal=true"
    assert metrics[1] == "epoch,direction,k,recall"
    assert metrics[2].startswith("0,image,1,")


def test_single_item_split_recalls_one(corpus):
    small = generate_synthetic_corpus(SyntheticConfig(**{**TINY.__dict__, "n_val": 1}))
    reports = evaluate(small, build_model(tiny_cfg(), small), tiny_cfg(), "val")
    for rep in reports.values():
        assert rep.B == 1 and set(rep.recalls.values()) == {1.0}


def test_empty_split_rejected(corpus):
    with pytest.raises(ValueError, match="empty"):
        evaluate(corpus, build_model(tiny_cfg(), corpus), tiny_cfg(), "test")


def test_batch_larger_than_training_set(corpus):
    with pytest.raises(ValueError, match="batch_size"):
        train(corpus, tiny_cfg(batch_size=41))


def test_untrained_recall_at_chance():
    hits, n = 0.0, 0
    for seed in range(5):
        corpus = generate_synthetic_corpus(SyntheticConfig(n_concepts=200, n_train=2, n_val=200, feat_dim=16,
                                                           seed=seed))
        cfg = TrainConfig(seed=seed, image_channels=(8, 8, 8), audio_channels=(16, 16), init_gain=2.45)
        reports = evaluate(corpus, build_model(cfg, corpus), cfg, "val", ks=(1,))
        for rep in reports.values():
            hits += rep.recalls[1] * rep.B
            n += rep.B
    p = 1 / 200
    assert abs(hits / n - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_checkpoint_roundtrip(corpus, tmp_path):
    cfg = tiny_cfg(epochs=1)
    model, _ = train(corpus, cfg)
    save_model(model, tmp_path / "ck.bin")
    back = load_model(tmp_path / "ck.bin", cfg, corpus)
    a = evaluate(corpus, model, cfg)["image"].recalls
    assert evaluate(corpus, back, cfg)["image"].recalls == a


def test_config_text_roundtrip(tmp_path):
    cfg = tiny_cfg(modes=PRESETS["places"]["modes"], normalize=True, eta=0.5)
    path = tmp_path / "run.cfg"
    path.write_text(format_config(cfg))
    assert TrainConfig(**load_config(path)) == cfg


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("learning_rate = 1")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config_text("epochs = many")
    with pytest.raises(ConfigError, match="missing.cfg"):
        load_config(tmp_path / "missing.cfg")
    with pytest.raises(ConfigError):
        TrainConfig(modes=("STMA", "SIMT", "SIMA"))
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=1)


def test_inconsistent_manifest_rejected(corpus, tmp_path):
    path = write_corpus(corpus, tmp_path)
    text = path.read_text().replace("\t5 ", "\t99 ", 1)
    if text == path.read_text():
        pytest.skip("no token to corrupt")
    path.write_text(text)
    from triembed.corpus import load_corpus

    with pytest.raises(ValueError, match="vocabulary"):
        load_corpus(path)
