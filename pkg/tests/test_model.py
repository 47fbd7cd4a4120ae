import numpy as np
import pytest

from mmerc import numerics as nx
from mmerc.config import ConfigError, RunConfig, load_config, parse_flags
from mmerc.dataio import CorpusMeta, synth_corpus
from mmerc.model import build_params, forward, make_batch, parameter_count
from mmerc.numerics import Tensor

from conftest import TINY_META, tiny_config


def test_forward_shapes(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config()
    params = build_params(cfg, meta)
    b = make_batch(cfg, convs[:2])
    out = forward(params, cfg, b)
    assert out.logits.shape == (b.n, meta.M)
    assert out.fused.shape == (b.n, cfg.fused_width())
    assert set(out.graph_out) == {"a", "v", "l"}
    assert all(g.shape == (b.n, cfg.heads * cfg.d_h2) for g in out.graph_out.values())
    assert all(z.shape == (b.n, 2 * cfg.d_h) for z in out.pairs.values())


def test_fusion_order(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config()
    out = forward(build_params(cfg, meta), cfg, make_batch(cfg, convs[:1]))
    blocks = [out.graph_out[m].data for m in "avl"]
    blocks += [out.pairs[p].data for p in (("a", "v"), ("v", "l"), ("l", "a"))]
    np.testing.assert_array_equal(out.fused.data, np.concatenate(blocks, axis=1))


def test_batching_matches_single_conversations(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config()
    params = build_params(cfg, meta)
    joint = forward(params, cfg, make_batch(cfg, convs[:3])).logits.data
    alone = np.concatenate([forward(params, cfg, make_batch(cfg, [c])).logits.data
                            for c in convs[:3]])
    np.testing.assert_allclose(joint, alone, atol=1e-12)


def test_init_is_seeded():
    cfg = tiny_config(seed=3)
    a = build_params(cfg, TINY_META).arrays()
    b = build_params(cfg, TINY_META).arrays()
    c = build_params(cfg.replace(seed=4), TINY_META).arrays()
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert any(not np.array_equal(a[k], c[k]) for k in a)


def test_training_forward_needs_rng(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config(dropout=0.3)
    with pytest.raises(ValueError):
        forward(build_params(cfg, meta), cfg, make_batch(cfg, convs[:1]), training=True)


def test_end_to_end_gradients_one_weight_per_module():
    # the all-parameter sweep lives in the acceptance suite
    meta = CorpusMeta(d_a=2, d_v=3, d_l=2, M=2, N_S=2)
    meta, convs = synth_corpus(1, (2, 2), 2, meta, seed=1)
    cfg = RunConfig(d_h=2, d_h1=2, d_h2=2, d_alpha=2, heads=2, pcm_heads=2, text_heads=2,
                    d_cls=3, dropout=0.0, past=1, future=1)
    params = build_params(cfg, meta)
    b = make_batch(cfg, convs)
    inputs = {m: Tensor(b.features[m]) for m in "avl"}
    loss = lambda: nx.cross_entropy(forward(params, cfg, b, inputs=inputs).logits,  # noqa: E731
                                    b.labels)
    names = ["encoders.audio.W", "encoders.text.layer0.Wq", "encoders.speaker.table",
             "rtgcn.rgcn0.W.past_l", "rtgcn.gt0.head1.W4", "pcm.l_to_a.layer1.Omega1",
             "head.Phi0"]
    errs = nx.check_gradients(loss, [params[k] for k in names] + [inputs["v"]])
    assert max(errs) < 1e-3, dict(zip(names + ["x_v"], errs))


def test_modality_independence_without_cross_modal_paths(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config(no_rmulti=True, no_pcm=True)
    params = build_params(cfg, meta)
    b = make_batch(cfg, convs[:2])
    inputs = {m: Tensor(b.features[m], requires_grad=True) for m in "avl"}
    out = forward(params, cfg, b, inputs=inputs)
    w = np.random.default_rng(0).normal(size=out.graph_out["a"].shape)
    nx.backward((out.graph_out["a"] * Tensor(w)).sum())
    assert np.any(inputs["a"].grad != 0.0)
    for m in "vl":
        assert inputs[m].grad is None or np.all(inputs[m].grad == 0.0)


def test_modality_coupling_with_cross_modal_paths(tiny_corpus):
    meta, convs = tiny_corpus
    cfg = tiny_config()
    params = build_params(cfg, meta)
    b = make_batch(cfg, convs[:2])
    inputs = {m: Tensor(b.features[m], requires_grad=True) for m in "avl"}
    nx.backward(forward(params, cfg, b, inputs=inputs).graph_out["a"].sum())
    assert np.any(inputs["v"].grad != 0.0) and np.any(inputs["l"].grad != 0.0)


@pytest.mark.parametrize("mods", ["a", "at", "avt"])
def test_unimodal_and_bimodal_parameter_layout(mods):
    cfg = tiny_config(modalities=mods)
    params = build_params(cfg, TINY_META)
    n_mod = len(cfg.modality_set)
    pcm = parameter_count(params, "pcm")
    multi = sum(p.data.size for k, p in params.items() if "->" in k)
    if n_mod == 1:
        assert pcm == 0 and multi == 0
    else:
        assert pcm > 0 and multi > 0
        assert multi == n_mod * n_mod * cfg.d_h1 * cfg.d_h


def test_fused_and_classifier_widths():
    cfg = RunConfig()
    assert cfg.fused_width() == 3 * 7 * 200 + 3 * 2 * 200
    assert cfg.classifier_width() == round(cfg.fused_width() / 2)
    assert RunConfig(no_pcm=True).fused_width() == 3 * 7 * 200
    assert RunConfig(no_rtgcn=True).fused_width() == 3 * 2 * 200
    assert RunConfig(modalities="a", no_pcm=False).fused_width() == 7 * 200


def test_config_validation():
    for bad in ({"eta": 1.5}, {"dropout": 1.0}, {"modalities": "ax"}, {"d_V": 3},
                {"heads": 0}, {"no_rtgcn": True, "no_pcm": True},
                {"no_rtgcn": True, "modalities": "a"}):
        with pytest.raises(ConfigError):
            RunConfig(**bad)


def test_load_config_and_overrides(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('seed = 7\nlearning_rate = 0.01\nmodalities = "at"\nno_pcm = true\n')
    cfg = load_config(p, {"epochs": "4", "no_rtemp": "yes"})
    assert (cfg.seed, cfg.learning_rate, cfg.modality_set, cfg.no_pcm) == (7, 0.01, ("a", "l"), True)
    assert cfg.epochs == 4 and cfg.no_rtemp is True
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, {"lr": 1})
    with pytest.raises(ConfigError):
        load_config(None, {"epochs": "many"})
    (tmp_path / "bad.toml").write_text("seed = = 1\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.toml")


def test_config_dict_roundtrip():
    cfg = tiny_config(no_rmulti=True, modalities="vt")
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def test_parse_flags():
    assert parse_flags("no_pcm, modalities=at") == {"no_pcm": True, "modalities": "at"}
    with pytest.raises(ConfigError):
        parse_flags("no_such_thing")
