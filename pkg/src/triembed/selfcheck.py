"""Self-verification suites shared by the CLI and the test suite.

``gradient_suite`` runs finite-difference checks per operation and through
the full encoder-to-loss path; ``oracle_suite`` compares the vectorized
matchmap, pooling and loss code against the nested-loop references.
"""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .diffcore import (
    Tensor,
    amax,
    conv1d,
    conv2d,
    gradcheck,
    hinge,
    l2_normalize,
    matmul,
    maxpool1d,
    maxpool2d,
    mean,
    relu,
    sum_,
)
from .encoders import AudioEncoder, ImageEncoder, ImageGridFeatures, SequenceFeatures, TextTable
from .loss import MarginConfig, Minibatch, ranking_loss, sample_impostors, similarity_tables
from .matchmap import MODES, compute_matchmap, inner_matchmap, pool, pool_similarity
from .oracles import loop_matchmap, loop_pool, loop_ranking_loss

Case = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


def _param(rng, *shape) -> Tensor:
    return Tensor(rng.standard_normal(shape), requires_grad=True)


def _matmul(rng):
    a, b = _param(rng, 3, 4), _param(rng, 4, 2)
    return (lambda: sum_(matmul(a, b) * matmul(a, b))), [a, b]


def _relu_hinge(rng):
    x = _param(rng, 12)
    return (lambda: sum_(relu(x) * x) + sum_(hinge(x * -2.0 + 0.5))), [x]


def _amax(rng):
    x = _param(rng, 3, 4, 5)
    return (lambda: sum_(amax(x, axis=(0, 2)) * amax(x, axis=(0, 2)))), [x]


def _l2_normalize(rng):
    x, w = _param(rng, 4, 5), Tensor(rng.standard_normal((4, 5)))
    return (lambda: sum_(l2_normalize(x) * w)), [x]


def _conv2d(rng):
    x, w, b = _param(rng, 2, 4, 4, 2), _param(rng, 3, 3, 2, 3), _param(rng, 3)
    return (lambda: mean(maxpool2d(relu(conv2d(x, w, b))))), [x, w, b]


def _conv1d(rng):
    x, w, b = _param(rng, 2, 7, 3), _param(rng, 3, 3, 2), _param(rng, 2)
    return (lambda: mean(maxpool1d(relu(conv1d(x, w, b))) * 2.0)), [x, w, b]


def _pool_case(mode: str) -> Case:
    def case(rng):
        x = _param(rng, 4, 8) if mode == "STMA" else _param(rng, 3, 3, 8)
        y = _param(rng, 5, 8)
        # a large margin keeps the hinge active so the pooled gradient is exercised
        return (lambda: hinge(pool(inner_matchmap(x, y), mode) * -1.0 + 50.0)), [x, y]
    return case


def _end_to_end(trimodal: bool, modes=("SIMA", "SIMT", "STMA"), normalize: bool = False) -> Case:
    """Encoders, matchmaps, pooling and the hinge loss on a tiny batch."""

    def case(rng):
        seeds = rng.integers(0, 2**31, size=4)
        image = ImageEncoder(2, (3,), 4, seed=int(seeds[0]), init_gain=2.0)
        audio = AudioEncoder(3, (3, 3), 4, kernel=3, seed=int(seeds[1]), init_gain=2.0)
        text = TextTable(6, 4, frozen=False, seed=int(seeds[2]))
        images = Tensor(rng.standard_normal((3, 4, 4, 2)))
        spec = Tensor(rng.standard_normal((3, 8, 3)))
        tokens = rng.integers(0, 6, size=(3, 2))
        imp = sample_impostors(3, trimodal, int(seeds[3]))
        cfg = MarginConfig(1.0, modes, normalize)

        def f():
            batch = Minibatch(image(images), audio(spec), text(tokens) if trimodal else None)
            return ranking_loss(similarity_tables(batch, cfg, trimodal), imp, cfg.eta, trimodal)

        params = [*image.params.values(), *audio.params.values()]
        if trimodal:
            params += list(text.params.values())
        return f, params
    return case


GRADIENT_CASES: dict[str, Case] = {
    "matmul": _matmul,
    "relu+hinge": _relu_hinge,
    "max": _amax,
    "l2_normalize": _l2_normalize,
    "conv2d+maxpool2d": _conv2d,
    "conv1d+maxpool1d": _conv1d,
    **{f"matchmap+{m}": _pool_case(m) for m in MODES},
    "encoders->bimodal loss": _end_to_end(False),
    "encoders->trimodal loss": _end_to_end(True),
    "encoders->trimodal loss (MISA/MIST, cosine)": _end_to_end(True, ("MISA", "MIST", "STMA"), True),
}


def gradient_suite(seeds: Iterable[int] = range(3), cases: dict[str, Case] | None = None,
                   max_coords: int | None = 40) -> dict[str, tuple[float, int, int]]:
    """Worst relative error, checked and skipped coordinate counts per case over ``seeds``."""
    out = {}
    for name, case in (cases or GRADIENT_CASES).items():
        worst, checked, skipped = 0.0, 0, 0
        for seed in seeds:
            rng = np.random.default_rng(seed)
            fn, params = case(rng)
            res = gradcheck(fn, params, max_coords=max_coords, rng=rng)
            worst = max(worst, res.max_rel_error)
            checked += res.checked
            skipped += res.skipped
        out[name] = (worst, checked, skipped)
    return out


def _random_pair(rng, mode):
    D = int(rng.integers(1, 9))
    if mode == "STMA":
        x = SequenceFeatures(Tensor(rng.standard_normal((rng.integers(1, 7), D))), "text")
    else:
        x = ImageGridFeatures(Tensor(rng.standard_normal((rng.integers(1, 7), rng.integers(1, 7), D))))
    kind = "audio" if mode in ("SIMA", "MISA", "STMA") else "text"
    y = SequenceFeatures(Tensor(rng.standard_normal((rng.integers(1, 7), D))), kind)
    return x, y


def oracle_suite(instances: int = 100, loss_instances: int = 20, seed: int = 0) -> dict[str, float]:
    """Largest absolute deviation from the loop references per component."""
    rng = np.random.default_rng(seed)
    out: dict[str, float] = {}
    for normalize in (False, True):
        tag = "cosine" if normalize else "dot"
        for mode in MODES:
            dev_m = dev_p = 0.0
            for _ in range(instances):
                x, y = _random_pair(rng, mode)
                xa = x.grid.data if isinstance(x, ImageGridFeatures) else x.seq.data
                m = compute_matchmap(x, y, normalize)
                ref = loop_matchmap(xa, y.seq.data, normalize)
                dev_m = max(dev_m, float(np.max(np.abs(m.values.data - ref))))
                dev_p = max(dev_p, abs(pool_similarity(m, mode).item() - loop_pool(ref, mode)))
            out[f"matchmap[{m.pair},{tag}]"] = max(out.get(f"matchmap[{m.pair},{tag}]", 0.0), dev_m)
            out[f"pool[{mode},{tag}]"] = dev_p
    for modes in (("SIMA", "SIMT", "STMA"), ("MISA", "MIST", "STMA")):
        cfg = MarginConfig(float(rng.uniform(0.1, 2.0)), modes)
        dev_b = dev_t = 0.0
        for _ in range(loss_instances):
            B = int(rng.integers(2, 7))
            batch = Minibatch(Tensor(rng.standard_normal((B, 2, 3, 4))), Tensor(rng.standard_normal((B, 5, 4))),
                              Tensor(rng.standard_normal((B, 3, 4))))
            imp = sample_impostors(B, True, rng)
            tables = similarity_tables(batch, cfg, True)
            nested = {k: v.data.tolist() for k, v in tables.items()}
            slots = {s: list(getattr(imp, s)) for s in "jklmno"}
            dev_t = max(dev_t, abs(ranking_loss(tables, imp, cfg.eta, True).item()
                                   - loop_ranking_loss(nested, slots, cfg.eta, True)))
            dev_b = max(dev_b, abs(ranking_loss(tables, imp, cfg.eta, False).item()
                                   - loop_ranking_loss(nested, slots, cfg.eta, False)))
        out[f"bimodal loss[{modes[0]}]"] = dev_b
        out[f"trimodal loss[{'/'.join(modes)}]"] = dev_t
    return out
