import numpy as np
import pytest

from triembed.corpus import (
    ActionAnnotation,
    NarrationAnnotation,
    SyntheticConfig,
    adjust_narration_span,
    align_actions_narrations,
    format_manifest,
    generate_synthetic_corpus,
    load_corpus,
    read_actions_csv,
    read_manifest,
    read_narrations_csv,
    select_frames,
    stem,
    texts_match,
    write_corpus,
)


@pytest.mark.parametrize(
    "action,narration,expected",
    [
        ("open fridge", "open fridge", True),
        ("opening the fridge door", "open fridge", True),
        ("wash plate", "cut onion", False),
        ("washing plates", "wash plate", True),
        ("put down the knife", "knife put", False),
    ],
)
def test_texts_match(action, narration, expected):
    assert texts_match(action, narration) is expected


@pytest.mark.parametrize("word,root", [("opening", "open"), ("opened", "open"), ("boxes", "box"),
                                       ("plates", "plate"), ("glass", "glass"), ("is", "is"), ("red", "red")])
def test_stem(word, root):
    assert stem(word) == root


def test_alignment_greedy_nearest():
    actions = [
        ActionAnnotation("v1", 1.0, 3.0, "open fridge"),
        ActionAnnotation("v1", 20.0, 22.0, "opening the fridge door"),
        ActionAnnotation("v1", 5.0, 6.0, "wash plate"),
        ActionAnnotation("v2", 1.0, 2.0, "open fridge"),
        ActionAnnotation("v1", 30.0, 31.0, "open fridge", language="it"),
    ]
    narrations = [
        NarrationAnnotation("v1", 19.5, 21.0, "open fridge"),
        NarrationAnnotation("v1", 2.0, 3.0, "open fridge"),
        NarrationAnnotation("v1", 8.0, 9.0, "cut onion"),
    ]
    res = align_actions_narrations(actions, narrations)
    got = [(a.start_s, n.start_s) for a, n in res.pairs]
    assert got == [(1.0, 2.0), (20.0, 19.5)]
    assert res.non_english == 1
    assert res.unmatched_narrations == 1
    assert res.unmatched_actions == 2


def test_frame_selection_examples():
    assert select_frames(15, "train") == [2, 5, 7, 9, 12]
    assert select_frames(15, "val") == [7]
    assert select_frames(7, "train") == [1, 2, 3, 4, 5]
    with pytest.raises(ValueError):
        select_frames(0, "train")


def test_span_examples():
    assert adjust_narration_span(10.0, 12.0) == (9.7, 12.0)
    assert adjust_narration_span(5.0, 9.0) == (4.7, 7.7)
    assert adjust_narration_span(0.1, 0.15) == (0.0, 0.15)
    assert adjust_narration_span(0.0, 0.05) is None
    with pytest.raises(ValueError):
        adjust_narration_span(2.0, 2.0)


def test_synthetic_counts_and_distinct_val():
    c = generate_synthetic_corpus(SyntheticConfig(n_train=100, n_val=20))
    splits = [r.split for r in c.records]
    assert splits.count("train") == 100 and splits.count("val") == 20
    val_concepts = [r.concept for r in c.records if r.split == "val"]
    assert len(set(val_concepts)) == 20


def test_noise_free_signatures_align():
    cfg = SyntheticConfig(n_concepts=5, n_train=6, n_val=2, noise_sigma=0.0, seed=3)
    c = generate_synthetic_corpus(cfg)
    for i in range(len(c.records)):
        img = c.images[i].reshape(-1, cfg.feat_dim)
        aud = c.audio[i]
        cell = img[np.abs(img).sum(1) > 0][0]
        frame = aud[np.abs(aud).sum(1) > 0][0]
        cos = cell @ frame / (np.linalg.norm(cell) * np.linalg.norm(frame))
        assert cos == pytest.approx(1.0, abs=1e-12)
        concept = int(c.records[i].concept[1:])
        assert concept in c.records[i].tokens


def test_n_val_exceeding_concepts():
    with pytest.raises(ValueError, match="n_val"):
        SyntheticConfig(n_concepts=5, n_val=6)


def test_synthetic_files_byte_identical(tmp_path):
    cfg = SyntheticConfig(n_train=30, n_val=10, seed=7)
    a = write_corpus(generate_synthetic_corpus(cfg), tmp_path / "a")
    b = write_corpus(generate_synthetic_corpus(cfg), tmp_path / "b")
    for name in ("manifest.tsv", "payloads.bin"):
        assert (a.parent / name).read_bytes() == (b.parent / name).read_bytes()


def test_corpus_roundtrip(tmp_path):
    c = generate_synthetic_corpus(SyntheticConfig(n_train=12, n_val=4, seed=1))
    path = write_corpus(c, tmp_path)
    d = load_corpus(path)
    assert [r.id for r in d.records] == [r.id for r in c.records]
    np.testing.assert_array_equal(d.images, c.images)
    np.testing.assert_array_equal(d.audio, c.audio)
    np.testing.assert_array_equal(d.tokens, c.tokens)
    assert d.vocab_size == c.vocab_size


def test_manifest_format_and_errors(tmp_path):
    c = generate_synthetic_corpus(SyntheticConfig(n_concepts=3, n_train=2, n_val=1))
    text = format_manifest(c.records, {"seed": "0"})
    assert text.splitlines()[0] == "# seed=0"
    assert text.splitlines()[1] == "# id\tsplit\tconcept\timage_ref\taudio_ref\ttokens"
    path = tmp_path / "m.tsv"
    path.write_text(text + "broken\tline\n")
    with pytest.raises(ValueError, match="tab-separated"):
        read_manifest(path)
    with pytest.raises(FileNotFoundError):
        read_manifest(tmp_path / "absent.tsv")
    with pytest.raises(ValueError, match="unique"):
        format_manifest(c.records + c.records[:1])


def test_missing_payload_named(tmp_path):
    c = generate_synthetic_corpus(SyntheticConfig(n_concepts=3, n_train=2, n_val=1))
    path = write_corpus(c, tmp_path)
    (tmp_path / "payloads.bin").unlink()
    with pytest.raises(FileNotFoundError, match="payloads.bin"):
        load_corpus(path)


def test_annotation_csv_readers(tmp_path):
    p = tmp_path / "actions.csv"
    p.write_text("video_id,start_s,end_s,text,language\nv1,1.0,2.5,open fridge,en\n")
    (a,) = read_actions_csv(p)
    assert (a.video_id, a.start_s, a.end_s, a.text, a.language) == ("v1", 1.0, 2.5, "open fridge", "en")
    q = tmp_path / "narr.csv"
    q.write_text("video_id,start_s,end_s,text\nv1,1.2,2.0,open fridge\n")
    (n,) = read_narrations_csv(q)
    assert n.start_s == 1.2
    with pytest.raises(ValueError):
        ActionAnnotation("v", 2.0, 1.0, "x")
