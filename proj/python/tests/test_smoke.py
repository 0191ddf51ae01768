import math

import pytest

import orseq


def test_bleu_examples():
    assert orseq.sentence_bleu([10, 11, 12, 13], [10, 11, 12, 13]) == pytest.approx(1.0)
    assert orseq.sentence_bleu([10, 11, 12, 13], [10, 11, 12, 14]) == pytest.approx(0.6581, abs=1e-4)
    assert orseq.sentence_bleu([], [4, 5]) == 0.0
    assert orseq.corpus_bleu([[4, 5, 6, 7]], [[4, 5, 6, 7]]) == pytest.approx(1.0)
    with pytest.raises(orseq.Error):
        orseq.corpus_bleu([[4]], [])


def test_decay():
    assert orseq.truth_prob(12.0, 0) == pytest.approx(12 / 13, abs=1e-12)
    assert orseq.truth_prob(12.0, 12) == pytest.approx(12 / (12 + math.e), abs=1e-12)
    with pytest.raises(orseq.Error):
        orseq.truth_prob(0.0, 1)


def test_perturbed_argmax_follows_softmax():
    logits = [math.log(1), math.log(2), math.log(3)]
    counts = [0, 0, 0]
    for seed in range(3000):
        counts[orseq.perturbed_argmax(logits, 1.0, seed)] += 1
    assert counts[2] > counts[1] > counts[0]


def test_vocabulary_and_synthetic():
    src, tgt = orseq.gen_synthetic("reverse", vocab_size=10, min_len=3, max_len=3, pairs=5, seed=4)
    assert len(src) == len(tgt) == 5
    assert [s.split()[::-1] for s in src] == [t.split() for t in tgt]
    vocab = orseq.Vocabulary.from_tokens(["a", "b"])
    assert len(vocab) == 6
    assert vocab.encode("a b zz") == [4, 5, 1]
    assert vocab.decode([4, 5, 3, 4]) == "a b"


def test_train_translate_round_trip(tmp_path):
    files = {}
    for name, seed, pairs in [("train", 1, 40), ("valid", 2, 8)]:
        src, tgt = orseq.gen_synthetic("copy", vocab_size=8, min_len=2, max_len=4, pairs=pairs, seed=seed)
        for side, lines in (("src", src), ("tgt", tgt)):
            path = tmp_path / f"{name}.{side}"
            path.write_text("".join(line + "\n" for line in lines))
            files[f"{name}-{side}"] = str(path)
    code, out, err = orseq.run_cli([
        "train", "--train-src", files["train-src"], "--train-tgt", files["train-tgt"],
        "--valid-src", files["valid-src"], "--valid-tgt", files["valid-tgt"],
        "--out-dir", str(tmp_path / "run"), "--dim", "6", "--epochs", "2", "--batch-size", "8",
        "--valid-beam", "2", "--oracle", "word-noise", "--quiet",
    ])
    assert code == 0, err
    model = orseq.Model.load(str(tmp_path / "run" / "best.ckpt"))
    lines = (tmp_path / "valid.src").read_text().splitlines()
    hyps = model.translate(lines, beam=2)
    assert len(hyps) == len(lines)
    bleu = model.evaluate(lines, (tmp_path / "valid.tgt").read_text().splitlines(), beam=2)
    assert 0.0 <= bleu <= 1.0
    assert len(model.sentence_oracle(lines[0], lines[0], 3).split()) == len(lines[0].split())

    code, out, err = orseq.run_cli(["train", "--oracle", "nonsense"])
    assert code != 0
    assert err
