import numpy as np
import pytest

from acnmp.autodiff import RejectedInput
from acnmp.cnmp import DemonstrationSet, Trajectory, build_model, generate
from acnmp.envs.button import SOURCE_ARM, TARGET_ARM, ButtonEnv, button_demo, proxy_pairs
from acnmp.envs.viapoint import viapoint_demos
from acnmp.rl import AdaptConfig
from acnmp.transfer import (
    PairedDemo,
    PairedModels,
    align_loss,
    cross_generate,
    joint_state,
    joint_train,
    joint_train_step,
    load_pairs,
    pair_demos,
    pair_latents,
    save_pairs,
    transfer_adapt,
    write_success_curve,
)

FRACTIONS = np.linspace(0, 1, 5)


@pytest.fixture(scope="module")
def proxy():
    return proxy_pairs(3, np.random.default_rng(0), n_source=60, n_target=40)


def small_pair(src, tgt, seeds=(1, 2)):
    return PairedModels(build_model(src, (32, 32, 8), (32, 32), seed=seeds[0]),
                        build_model(tgt, (32, 32, 8), (32, 32), seed=seeds[1]))


def test_align_loss_examples():
    assert align_loss([1.0, 2.0], [3.0, 4.0]) == pytest.approx(4.0)
    v = np.array([0.3, -1.2, 5.0])
    assert align_loss(v, v) == 0.0


def test_identical_models_have_zero_alignment(proxy):
    src, _ = proxy
    m = build_model(src, (8, 4), (8,), seed=0)
    pair = PairedModels(m, m.copy())
    r1, r2 = pair_latents(pair, pair_demos(src, src), FRACTIONS)
    assert align_loss(r1, r2) == 0.0


def test_pairing_validation(proxy):
    src, tgt = proxy
    with pytest.raises(RejectedInput):
        pair_demos(src, DemonstrationSet(list(tgt)[:-1]))
    a = Trajectory("a", [1.0], [0, 1], [[0, 0, 0], [1, 1, 1]])
    b = Trajectory("a", [2.0], [0, 1], [[0, 0, 0, 0], [1, 1, 1, 1]])
    with pytest.raises(RejectedInput):
        PairedDemo(a, b)
    with pytest.raises(RejectedInput):
        PairedModels(build_model((3, 0), (8, 4), (8,)), build_model((4, 0), (8, 5), (8,)))


def test_proxy_pairs_use_different_sample_counts(proxy):
    src, tgt = proxy
    assert src.sm_width == 3 and tgt.sm_width == 4
    assert all(len(s) == 60 and len(t) == 40 for s, t in zip(src, tgt))
    assert [s.id for s in src] == [t.id for t in tgt]


def test_cross_generate_shape_determinism_and_warning(proxy):
    src, tgt = proxy
    pair = small_pair(src, tgt)
    with pytest.warns(UserWarning):
        cross_generate(pair, src[0])
    st = joint_state(pair, pair_demos(src, tgt))
    joint_train_step(pair, st, np.random.default_rng(0), batch_size=2)
    a = cross_generate(pair, src[0], np.linspace(0, 1, 30), FRACTIONS)
    b = cross_generate(pair, src[0], np.linspace(0, 1, 30), FRACTIONS)
    assert a.values.shape == (30, 4)
    np.testing.assert_array_equal(a.values, b.values)
    with pytest.raises(RejectedInput):
        cross_generate(pair, tgt[0])


def test_zero_weight_does_not_count_as_alignment(proxy):
    src, tgt = proxy
    pair = small_pair(src, tgt)
    st = joint_state(pair, pair_demos(src, tgt))
    l1, l2, la = joint_train_step(pair, st, np.random.default_rng(0), 4, align_weight=0.0)
    assert la == 0.0 and pair.aligned_steps == 0
    joint_train_step(pair, st, np.random.default_rng(0), 4, align_weight=1.0)
    assert pair.aligned_steps == 1


def test_joint_training_aligns_held_out_pairs(proxy):
    src, tgt = proxy
    pairs = pair_demos(src, tgt)
    train_pairs, held = pairs[:9], pairs[9:]
    pair = small_pair(src, tgt)
    before = align_loss(*pair_latents(pair, held, FRACTIONS))
    joint_train(pair, joint_state(pair, train_pairs), 5000, np.random.default_rng(0), 16, 64.0)
    after = align_loss(*pair_latents(pair, held, FRACTIONS))
    assert after < 0.1 * before


def test_degenerate_pair_matches_own_generation():
    demos = viapoint_demos(6, np.random.default_rng(0))
    pair = small_pair(demos, demos)
    joint_train(pair, joint_state(pair, pair_demos(demos, demos)), 3000, np.random.default_rng(0), 16, 64.0)
    for tr in demos:
        crossed = cross_generate(pair, tr, tr.times, FRACTIONS)
        own = generate(pair.target, [tr.observation_at(f) for f in FRACTIONS], tr.task_params, tr.times)
        assert np.max(np.abs(crossed.values - own.values)) < 0.05


def test_pairs_roundtrip(proxy, tmp_path):
    src, tgt = proxy
    save_pairs(tmp_path / "p", src, tgt)
    back = load_pairs(tmp_path / "p")
    assert len(back) == len(src)
    np.testing.assert_array_equal(back[3].target_traj.values, tgt[3].values)
    with pytest.raises(FileNotFoundError):
        load_pairs(tmp_path / "missing")


def test_transfer_adapt_bookkeeping(proxy, tmp_path):
    src, tgt = proxy
    pair = small_pair(src, tgt)
    joint_train(pair, joint_state(pair, pair_demos(src, tgt)), 50, np.random.default_rng(0), 8, 1.0)
    sol = button_demo(ButtonEnv(arm=SOURCE_ARM), n_samples=60)
    cfg = AdaptConfig(max_rollouts=20, query_points=11, solution_points=40, stop_when="batch", seed=3)
    res = transfer_adapt(pair, sol, ButtonEnv(arm=TARGET_ARM), cfg, tgt, provisional_steps=20)
    assert res.provisional.sm_width == 4
    best = [b for _, _, b in res.success_curve]
    assert best == sorted(best)
    assert len(res.success_curve) == 4
    write_success_curve(tmp_path / "c.csv", res)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "iteration,success_rate,best_success_rate"
