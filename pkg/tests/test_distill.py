import numpy as np
import pytest

from _factories import random_instances
from stagecue.distill import (PRESETS, DatasetBundle, TrainConfig,
                              TrainingDiverged, load_instances, load_soft_labels,
                              mix_labels, run_pipeline, save_instances,
                              save_soft_labels, soft_labels,
                              strip_weak_documents, train_hard, train_soft,
                              train_student, train_teachers)
from stagecue.reader import build_vocab, init_params, option_probs


def tiny_bundle(seed=0, n_weak=2, labeled=8, weak=10, dev=6, test=6):
    rng = np.random.default_rng(seed)
    data = random_instances(rng, labeled + n_weak * weak + dev + test)
    cut = labeled
    weak_sets = []
    for _ in range(n_weak):
        weak_sets.append(data[cut : cut + weak])
        cut += weak
    return DatasetBundle(labeled=data[:labeled], weak_sets=weak_sets,
                         dev=data[cut : cut + dev], test=data[cut + dev :])


def small_cfg(**kwargs):
    defaults = dict(embed_dim=4, batch_size=4, learning_rate=0.5,
                    epochs_stage1=1, epochs_stage2=2, seed=0)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


# ------------------------------------------------------------------- config

@pytest.mark.parametrize("kwargs", [
    {"learning_rate": 0.0},
    {"batch_size": 0},
    {"epochs_stage1": -1},
    {"epochs_stage2": -1},
    {"teacher_epochs": -1},
    {"hard_label_weight": 1.5},
    {"stage2_labels": "warm"},
])
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_train_config_as_dict_round_trips():
    cfg = small_cfg(teacher_epochs=3, stage2_labels="hard")
    assert TrainConfig(**cfg.as_dict()) == cfg


# ------------------------------------------------------------- label mixing

def test_mix_labels_single_teacher_half_weight():
    out = mix_labels(np.array([1.0, 0.0]), np.array([0.6, 0.4]), 0.5)
    np.testing.assert_allclose(out, [0.8, 0.2], atol=1e-15)


def test_mix_labels_averages_teacher_rows():
    hard = np.array([0.0, 1.0])
    probs = np.array([[0.5, 0.5], [0.1, 0.9]])
    np.testing.assert_allclose(mix_labels(hard, probs, 0.5), [0.15, 0.85], atol=1e-15)


def test_mix_labels_weight_one_is_exactly_hard():
    hard = np.array([0.0, 0.0, 1.0])
    probs = np.array([0.2, 0.5, 0.3])
    assert mix_labels(hard, probs, 1.0).tolist() == hard.tolist()


def test_mix_labels_rejects_bad_weight():
    with pytest.raises(ValueError, match="weight"):
        mix_labels(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 1.2)


def test_gold_dominance_for_half_or_more_hard_weight():
    rng = np.random.default_rng(21)
    for _ in range(500):
        n = int(rng.integers(2, 6))
        gold = int(rng.integers(n))
        hard = np.zeros(n)
        hard[gold] = 1.0
        probs = rng.dirichlet(np.ones(n))
        for weight in (0.5, 0.7, 1.0):
            s = mix_labels(hard, probs, weight)
            assert s[gold] >= s.max() - 1e-15
            if weight > 0.5:
                others = np.delete(s, gold)
                assert (s[gold] > others).all()


# -------------------------------------------------------------- soft labels

def test_soft_labels_branch_by_membership():
    bundle = tiny_bundle()
    cfg = small_cfg(hard_label_weight=0.5, teacher_epochs=0)
    teachers = train_teachers(bundle, cfg)
    assert len(teachers) == bundle.n_teachers
    labels = soft_labels(bundle, teachers, cfg.hard_label_weight)
    assert set(labels) == {i.id for i in bundle.all_train()}

    # teacher_epochs=0 leaves every teacher at the shared init, so the
    # expected mixtures are computable directly from option_probs
    for inst in bundle.labeled:
        probs = np.array([option_probs(inst, t) for t in teachers])
        want = 0.5 * np.eye(len(inst.options))[inst.gold] + 0.5 * probs.mean(axis=0)
        np.testing.assert_allclose(labels[inst.id], want, atol=1e-12)
    for wset, teacher in zip(bundle.weak_sets, teachers):
        for inst in wset:
            want = 0.5 * np.eye(len(inst.options))[inst.gold] \
                + 0.5 * option_probs(inst, teacher)
            np.testing.assert_allclose(labels[inst.id], want, atol=1e-12)


def test_soft_labels_require_matching_teacher_count():
    bundle = tiny_bundle(n_weak=2)
    cfg = small_cfg(teacher_epochs=0)
    teachers = train_teachers(bundle, cfg)
    with pytest.raises(ValueError, match="teachers"):
        soft_labels(bundle, teachers[:1], 0.5)
    with pytest.raises(ValueError, match="teacher"):
        soft_labels(bundle, [], 0.5)


def test_train_teachers_needs_weak_sets():
    bundle = tiny_bundle(n_weak=0)
    with pytest.raises(ValueError, match="weak"):
        train_teachers(bundle, small_cfg())


def test_swapping_weak_sets_swaps_teachers():
    bundle = tiny_bundle(n_weak=2)
    cfg = small_cfg(teacher_epochs=2)
    swapped = DatasetBundle(labeled=bundle.labeled,
                            weak_sets=[bundle.weak_sets[1], bundle.weak_sets[0]],
                            dev=bundle.dev, test=bundle.test)
    t_ab = train_teachers(bundle, cfg)
    t_ba = train_teachers(swapped, cfg)
    np.testing.assert_array_equal(t_ab[0].embeddings, t_ba[1].embeddings)
    np.testing.assert_array_equal(t_ab[1].bilinear, t_ba[0].bilinear)


def test_teacher_epochs_overrides_stage1_epochs():
    bundle = tiny_bundle()
    base = small_cfg(epochs_stage1=1, teacher_epochs=0)
    teachers = train_teachers(bundle, base)
    init = init_params(build_vocab(bundle.all_train()), dim=base.embed_dim,
                       seed=base.seed, scale=base.init_scale)
    np.testing.assert_array_equal(teachers[0].embeddings, init.embeddings)


# ----------------------------------------------------------------- training

def test_zero_epochs_is_a_copy_not_an_alias():
    bundle = tiny_bundle()
    cfg = small_cfg()
    params = init_params(build_vocab(bundle.labeled), dim=4)
    out = train_hard(bundle.labeled, params, cfg, epochs=0)
    assert out is not params
    np.testing.assert_array_equal(out.embeddings, params.embeddings)


def test_training_does_not_mutate_input_params():
    bundle = tiny_bundle()
    cfg = small_cfg()
    params = init_params(build_vocab(bundle.labeled), dim=4, scale=0.1)
    before = params.embeddings.copy()
    train_hard(bundle.labeled, params, cfg, epochs=2)
    np.testing.assert_array_equal(params.embeddings, before)


def test_training_reduces_loss_on_learnable_data():
    from stagecue.reader import encode_dataset, hard_label, batch_loss

    bundle = tiny_bundle()
    data = bundle.labeled
    cfg = small_cfg(learning_rate=1.0)
    params = init_params(build_vocab(data), dim=8, scale=0.3)
    trained = train_hard(data, params, cfg, epochs=10)
    encoded = encode_dataset(data, params.vocab)
    labels = [hard_label(len(i.options), i.gold) for i in data]
    assert batch_loss(encoded, labels, trained) < batch_loss(encoded, labels, params)


def test_train_soft_requires_labels_for_every_instance():
    bundle = tiny_bundle()
    cfg = small_cfg()
    params = init_params(build_vocab(bundle.labeled), dim=4)
    with pytest.raises(ValueError, match="no soft label"):
        train_soft(bundle.labeled, {}, params, cfg, epochs=1)


def test_train_soft_validates_label_vectors():
    bundle = tiny_bundle()
    cfg = small_cfg()
    params = init_params(build_vocab(bundle.labeled), dim=4)
    labels = {i.id: np.full(len(i.options), 0.1) for i in bundle.labeled}
    with pytest.raises(ValueError, match="sums to"):
        train_soft(bundle.labeled, labels, params, cfg, epochs=1)


@pytest.mark.filterwarnings("ignore:divide by zero")
def test_divergence_is_reported_with_location():
    bundle = tiny_bundle()
    cfg = small_cfg(learning_rate=1.0, init_scale=40.0, embed_dim=16)
    params = init_params(build_vocab(bundle.labeled), dim=16, scale=40.0)
    with pytest.raises(TrainingDiverged) as err:
        train_hard(bundle.labeled, params, cfg, epochs=3)
    assert err.value.epoch >= 0
    assert "non-finite" in str(err.value)


def test_hard_weight_one_reproduces_hard_training_exactly():
    # soft labels with weight 1 are one-hots; the student's trajectory must
    # match plain two-stage hard training bit for bit
    bundle = tiny_bundle()
    cfg = small_cfg(hard_label_weight=1.0, teacher_epochs=1)
    teachers = train_teachers(bundle, cfg)
    labels = soft_labels(bundle, teachers, 1.0)
    final_soft, stage1_soft = train_student(bundle, labels, cfg)

    from stagecue.distill import _shared_params, _stage1_data
    params = _shared_params(bundle, cfg)
    stage1_hard = train_hard(_stage1_data(bundle, cfg), params, cfg, cfg.epochs_stage1)
    final_hard = train_hard(bundle.labeled, stage1_hard,
                            cfg, cfg.epochs_stage2)
    np.testing.assert_array_equal(stage1_soft.embeddings, stage1_hard.embeddings)
    np.testing.assert_array_equal(final_soft.embeddings, final_hard.embeddings)
    np.testing.assert_array_equal(final_soft.bilinear, final_hard.bilinear)
    assert final_soft.bias == final_hard.bias


def test_stage2_hard_uses_gold_labels():
    bundle = tiny_bundle()
    cfg_hard = small_cfg(stage2_labels="hard", teacher_epochs=1)
    teachers = train_teachers(bundle, cfg_hard)
    labels = soft_labels(bundle, teachers, 0.5)
    final_hard, _ = train_student(bundle, labels, cfg_hard)
    final_soft, _ = train_student(bundle, labels, small_cfg(teacher_epochs=1))
    assert not np.array_equal(final_hard.embeddings, final_soft.embeddings)


# ------------------------------------------------------------------ bundles

def test_bundle_helpers():
    bundle = tiny_bundle(n_weak=2, labeled=3, weak=4)
    assert bundle.n_teachers == 2
    train = bundle.all_train()
    assert len(train) == 3 + 8
    assert train[:3] == bundle.labeled
    bundle.validate()
    bundle.weak_sets[0][0] = bundle.labeled[0]
    with pytest.raises(ValueError, match="duplicate"):
        bundle.validate()


def test_strip_weak_documents_only_touches_weak_sets():
    bundle = tiny_bundle()
    stripped = strip_weak_documents(bundle)
    assert all(i.document == "" for wset in stripped.weak_sets for i in wset)
    assert all(i.document for i in stripped.labeled)
    assert stripped.labeled is bundle.labeled
    assert all(i.document for wset in bundle.weak_sets for i in wset)
    ids = lambda b: [i.id for w in b.weak_sets for i in w]
    assert ids(stripped) == ids(bundle)


# ---------------------------------------------------------------- pipelines

def test_run_pipeline_baseline_report_shape():
    bundle = tiny_bundle()
    report = run_pipeline("baseline", bundle, small_cfg(), n_seeds=2)
    assert report.preset == "baseline"
    assert report.seeds == [0, 1]
    assert len(report.per_seed["dev"]) == 2
    assert report.stage1 is None
    assert set(report.mean) == {"dev", "test"}
    assert report.sizes["labeled"] == len(bundle.labeled)
    d = report.as_dict()
    assert d["schema"] == "pipeline-report/v1"
    assert "baseline" in report.format_table()


@pytest.mark.parametrize("preset", [p for p in PRESETS if p != "baseline"])
def test_run_pipeline_presets_have_stage1(preset):
    bundle = tiny_bundle()
    report = run_pipeline(preset, bundle, small_cfg(), n_seeds=1)
    assert report.stage1 is not None
    assert len(report.stage1["per_seed"]["test"]) == 1
    assert 0.0 <= report.mean["test"] <= 1.0


def test_run_pipeline_is_deterministic():
    bundle = tiny_bundle()
    a = run_pipeline("combined_two_stage", bundle, small_cfg(), n_seeds=2)
    b = run_pipeline("combined_two_stage", bundle, small_cfg(), n_seeds=2)
    assert a.as_dict() == b.as_dict()


def test_run_pipeline_rejects_unknowns():
    bundle = tiny_bundle()
    with pytest.raises(ValueError, match="preset"):
        run_pipeline("magic", bundle, small_cfg())
    with pytest.raises(ValueError, match="weak_index"):
        run_pipeline("single_weak_two_stage", bundle, small_cfg(), n_seeds=1,
                     weak_index=9)
    with pytest.raises(ValueError, match="seed"):
        run_pipeline("baseline", bundle, small_cfg(), seeds=[])


def test_run_pipeline_explicit_seeds():
    bundle = tiny_bundle()
    report = run_pipeline("baseline", bundle, small_cfg(), seeds=[5, 9])
    assert report.seeds == [5, 9]


# ---------------------------------------------------------------------- IO

def test_soft_label_file_round_trip(tmp_path):
    bundle = tiny_bundle()
    cfg = small_cfg(teacher_epochs=1)
    labels = soft_labels(bundle, train_teachers(bundle, cfg), 0.5)
    path = tmp_path / "soft.jsonl"
    save_soft_labels(path, labels, config_hash_value="c0ffee", seed=3)
    loaded = load_soft_labels(path)
    assert set(loaded) == set(labels)
    for key in labels:
        np.testing.assert_allclose(loaded[key], labels[key], atol=1e-15)
    first = path.read_text(encoding="utf-8").splitlines()[0]
    assert '"soft-labels/v1"' in first


def test_instance_file_round_trip(tmp_path):
    data = random_instances(np.random.default_rng(0), 7)
    path = tmp_path / "inst.jsonl"
    save_instances(path, data, config_hash_value="aa", seed=1)
    assert load_instances(path) == data
