import numpy as np
import pytest
from hypothesis import given, strategies as st

from compmech import lens
from compmech.errors import ConfigError, NotCapturedError
from compmech.lens import AttributionGrid, TargetPair
from compmech.runtime import CaptureSpec, InterventionSpec, forward

from conftest import load_fixture, rel_err

PROMPT = "Redefine: iPhone was developed by Google. iPhone was developed by"
TARGETS = TargetPair(4196, 3012)  # " Apple", " Google"


@pytest.fixture(scope="module")
def trace(tiny_model):
    return tiny_model.forward(tiny_model.encode(PROMPT), CaptureSpec.everything())


def final_pair(trace, pos=-1):
    return trace.logits[pos, TARGETS.ids].astype(np.float64)


def test_lens_at_final_layer_equals_logits(trace, tiny_model):
    grid = lens.logit_lens_grid(trace, tiny_model.weights, TARGETS)
    last = trace.last
    got = np.array(grid.cell(tiny_model.config.n_layers, last))
    assert rel_err(got, final_pair(trace)) < 1e-5
    # and the full-vocab projection agrees
    w = tiny_model.weights
    full = lens.project_to_vocab(trace.residuals[-1, last], (w.lnf_g, w.lnf_b),
                                 (trace.final_norm_mean[last], trace.final_norm_std[last]), w.W_U)
    assert rel_err(full, trace.logits[last]) < 1e-5


def test_zero_residual_gives_bias_direction(tiny_model):
    w = tiny_model.weights
    std = 2.0
    got = lens.project_to_vocab(np.zeros(w.lnf_g.shape), (w.lnf_g, w.lnf_b), (0.0, std), w.W_U, TARGETS.ids)
    np.testing.assert_allclose(got, w.lnf_b @ w.W_U[:, TARGETS.ids], rtol=1e-5, atol=1e-6)
    got = lens.project_to_vocab(np.zeros(w.lnf_g.shape), (w.lnf_g, w.lnf_b), (0.5, std), w.W_U, TARGETS.ids)
    expect = (-0.5 / std * w.lnf_g + w.lnf_b) @ w.W_U[:, TARGETS.ids]
    np.testing.assert_allclose(got, expect, rtol=1e-5, atol=1e-6)


def test_nonpositive_std_rejected(tiny_model):
    w = tiny_model.weights
    with pytest.raises(ConfigError):
        lens.project_to_vocab(np.zeros(w.lnf_g.shape), (w.lnf_g, w.lnf_b), (0.0, 0.0), w.W_U)


def test_grid_shape(trace, tiny_model):
    grid = lens.logit_lens_grid(trace, tiny_model.weights, TARGETS)
    assert grid.rows == list(range(tiny_model.config.n_layers + 1))
    assert grid.cols == list(range(trace.seq_len))
    assert lens.LENS_METADATA.items() <= grid.metadata.items()


def test_single_token_grid(tiny_model):
    tr = tiny_model.forward([7133], CaptureSpec(capture_residuals=True))
    grid = lens.logit_lens_grid(tr, tiny_model.weights, TARGETS)
    assert grid.cols == [0]


def test_grid_requires_residuals(tiny_model):
    tr = tiny_model.forward([7133, 373])
    with pytest.raises(NotCapturedError):
        lens.logit_lens_grid(tr, tiny_model.weights, TARGETS)


@pytest.mark.parametrize("position", [None, 3, 8])
def test_decomposition_reproduces_logits(trace, tiny_model, position):
    parts = lens.decompose_final_logits(trace, tiny_model.weights, TARGETS, position)
    total = parts["embed"] + parts["attn"].sum(0) + parts["mlp"].sum(0) + parts["offset"]
    pos = trace.last if position is None else position
    assert rel_err(total, final_pair(trace, pos)) < 1e-3


def test_heads_plus_bias_equal_block(trace, tiny_model):
    w = tiny_model.weights
    fact, cofa = lens.head_contribution_matrix(trace, w, TARGETS)
    for l in range(tiny_model.config.n_layers):
        block = np.array(lens.block_logit_contribution(trace, w, l, "attn", TARGETS))
        heads = np.array([fact[l].sum(), cofa[l].sum()]) + lens.bias_path_contribution(trace, w, l, TARGETS)
        assert rel_err(heads, block) < 1e-4
        for h in range(tiny_model.config.n_heads):
            np.testing.assert_allclose(lens.head_logit_contribution(trace, w, l, h, TARGETS),
                                       (fact[l, h], cofa[l, h]), rtol=1e-9)


def test_block_contribution_falls_back_to_heads(tiny_model):
    ids = tiny_model.encode(PROMPT)
    tr = tiny_model.forward(ids, CaptureSpec(capture_head_outputs=True))
    full = tiny_model.forward(ids, CaptureSpec(capture_attn_outputs=True))
    w = tiny_model.weights
    a = lens.block_logit_contribution(tr, w, 1, "attn", TARGETS)
    b = lens.block_logit_contribution(full, w, 1, "attn", TARGETS)
    np.testing.assert_allclose(a, b, rtol=1e-4)
    with pytest.raises(NotCapturedError):
        lens.block_logit_contribution(full, w, 1, "mlp", TARGETS)
    with pytest.raises(ValueError):
        lens.block_logit_contribution(full, w, 1, "embed", TARGETS)


def test_zero_vector_contributes_nothing(trace, tiny_model):
    zero = np.zeros(tiny_model.config.d_model)
    assert lens.component_projection(trace, tiny_model.weights, zero, TARGETS) == (0.0, 0.0)


def test_knocked_out_head_keeps_only_value_bias(tiny_model):
    ids = tiny_model.encode(PROMPT)
    last = len(ids) - 1
    iv = InterventionSpec(1, 2, last, tuple(range(last)), 0.0)
    tr = tiny_model.forward(ids, CaptureSpec.everything(), [iv])
    w = tiny_model.weights
    # only the self-attention weight on ``last`` remains
    a_self = tr.attention[1, 2, tr.slot(last), last]
    # recompute the value vector at ``last`` for that head
    pre = forward(w, tiny_model.config, ids, CaptureSpec(capture_residuals=True))
    x = pre.residuals[1, last]
    h = (x - x.mean()) / np.sqrt(x.var() + 1e-5) * w.ln1_g[1] + w.ln1_b[1]
    v = h @ w.W_V[1, 2] + w.b_V[1, 2]
    np.testing.assert_allclose(tr.head_contribs[1, 2, tr.slot(last)], a_self * v @ w.W_O[1, 2], rtol=1e-3, atol=1e-5)


def test_delta_cofa_values():
    assert lens.delta_cofa(2.0, 2.0) == 0.0
    assert lens.delta_cofa(1.0, 3.5) == 2.5


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e3, 1e3))
def test_delta_cofa_properties(f, c, shift):
    assert lens.delta_cofa(f, c) == -lens.delta_cofa(c, f)
    assert abs(lens.delta_cofa(f + shift, c + shift) - lens.delta_cofa(f, c)) <= 1e-6 * (abs(f) + abs(c) + abs(shift) + 1)


def test_target_pair_validation():
    with pytest.raises(ConfigError):
        TargetPair(3, 3)
    with pytest.raises(ConfigError):
        TargetPair(-1, 3)


def _grid(fact, cofa, count=None):
    fact, cofa = np.asarray(fact, float), np.asarray(cofa, float)
    count = np.ones(fact.shape, np.int64) if count is None else np.asarray(count)
    return AttributionGrid(list(range(fact.shape[0])), list(range(fact.shape[1])), fact, cofa, count)


def test_grid_mean_is_count_weighted():
    a = _grid([[1.0, 2.0]], [[0.0, 0.0]])
    b = _grid([[3.0, np.nan]], [[2.0, np.nan]], [[1, 0]])
    m = AttributionGrid.mean([a, b])
    np.testing.assert_allclose(m.fact_logits, [[2.0, 2.0]])
    np.testing.assert_array_equal(m.count, [[2, 1]])
    assert AttributionGrid.mean([a]).cell(0, 1) == a.cell(0, 1)


def test_grid_mean_errors():
    with pytest.raises(ConfigError):
        AttributionGrid.mean([])
    with pytest.raises(ConfigError):
        AttributionGrid.mean([_grid([[1.0]], [[1.0]]), _grid([[1.0, 2.0]], [[1.0, 2.0]])])
    with pytest.raises(ConfigError):
        AttributionGrid([0], [0, 1], np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))


def test_empty_cells_dropped_from_records():
    g = _grid([[1.0, np.nan]], [[2.0, np.nan]], [[1, 0]])
    recs = g.to_records()
    assert len(recs) == 1 and recs[0]["delta_cofa"] == 1.0


def test_gpt2_small_layer6_lens(gpt2_model):
    ref = load_fixture("gold_reference.json")["lens"]
    tr = gpt2_model.forward(gpt2_model.encode(ref["text"]), CaptureSpec(capture_residuals=True))
    grid = lens.logit_lens_grid(tr, gpt2_model.weights, TargetPair(*ref["target_ids"]))
    got = np.array(grid.cell(ref["layer"], tr.last))
    assert np.max(np.abs(got - np.array(ref["logits"]))) < 1e-3
