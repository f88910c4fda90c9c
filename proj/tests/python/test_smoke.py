"""End-to-end smoke tests for the python bindings.

Fast paths only: tiny blob tasks, short training schedules. The heavy
quality gates live in the C++ acceptance suite; here we check that the
surface is importable, runs, and round-trips values sensibly.
"""

import math

import pytest

import caedet


def test_version_and_surface():
    assert caedet.__version__
    assert callable(caedet.synth_blobs)
    assert callable(caedet.run_periodic_update)


def test_synth_blobs_deterministic_and_bounded():
    a = caedet.synth_blobs(20, 4, 0.8, 0.05, 7)
    b = caedet.synth_blobs(20, 4, 0.8, 0.05, 7)
    assert a.name == b.name
    assert len(a.samples) == 40
    for sa, sb in zip(a.samples, b.samples):
        assert sa.label == sb.label
        assert sa.features.data == sb.features.data
        assert all(0.0 <= v <= 1.0 for v in sa.features.data)
    labels = {s.label for s in a.samples}
    assert labels == {-1, 1}


def test_svm_trains_separable_and_roundtrips(tmp_path):
    task = caedet.synth_blobs(30, 2, 0.8, 0.05, 17)
    cfg = caedet.SvmTrainConfig()
    model = caedet.train_svm(task.samples, cfg)
    assert caedet.accuracy(model, task.samples) == 1.0
    assert caedet.max_kkt_violation(model, task.samples) <= 1e-3

    path = str(tmp_path / "svm.bin")
    caedet.save_svm(path, model)
    loaded = caedet.load_svm(path)
    for s in task.samples[:5]:
        assert caedet.predict(loaded, s.features) == caedet.predict(model, s.features)


def test_flip_attack_marks_poisons():
    task = caedet.synth_blobs(40, 4, 0.8, 0.08, 3)
    sizes = caedet.SplitSizes()
    sizes.train = 20
    sizes.validation = 20
    sizes.test = 20
    rounds = caedet.build_rounds(task, 1, sizes, 5, 1)
    round0 = rounds.rounds[0]

    acfg = caedet.AttackConfig()
    acfg.poison_rate = 0.1
    acfg.rng_seed = 11
    poisoned = caedet.poison_round(round0, caedet.AttackKind.Flip, acfg)
    assert len(poisoned.train) == 22
    assert sum(1 for s in poisoned.train if s.poison_flag) == 2
    assert caedet.poison_count(0.1, 20) == 2
    # Flips are label-negated copies of training points, so each poison keeps
    # its source's origin id.
    label_by_origin = {s.origin_id: s.label for s in round0.train}
    for p in poisoned.poisons:
        assert p.poison_flag
        assert p.label == -label_by_origin[p.origin_id]

    pset = caedet.run_attack(caedet.AttackKind.Flip, round0.train, round0.validation, 2, acfg)
    assert len(pset) == 2
    for p, prov in zip(pset.poisons, pset.provenance):
        assert prov.source_origin_id == p.origin_id


def test_attack_rate_validation():
    with pytest.raises(ValueError):
        caedet.poison_count(0.7, 20)  # beyond the supported range
    with pytest.raises(ValueError):
        caedet.poison_count(-0.1, 20)


def test_detector_scores_and_gmm_separation():
    task = caedet.synth_blobs(60, 8, 1.0, 0.08, 9)
    train = task.samples[:80]
    model = caedet.train_detector(caedet.DetectorKind.Centroid, train)
    assert model.trained
    scores = caedet.score_batch(model, task.samples[80:])
    assert len(scores) == 40
    for s in scores:
        assert 0.0 <= s.combined <= 1.0
        assert s.re == pytest.approx(s.loss)  # centroid distance fills both channels

    # synthetic well-separated score mixture
    values = [0.1 + 0.001 * i for i in range(45)] + [0.9 + 0.001 * i for i in range(5)]
    params = caedet.fit_gmm_1d(values)
    hi = 1 if params.mean[1] >= params.mean[0] else 0
    assert params.mean[hi] == pytest.approx(0.9, abs=0.05)
    assert caedet.gmm_assign_component(params, 0.95) == hi
    assert caedet.gmm_responsibility(params, 0.95, hi) > 0.5


def test_separator_top_k_and_metrics():
    scored = []
    for i, v in enumerate([0.1, 0.2, 0.95, 0.15, 0.9]):
        s = caedet.ScoredSample()
        s.combined = v
        s.index = i
        scored.append(s)
    verdicts = caedet.separate(scored, caedet.SeparatorKind.top_k(2))
    assert verdicts == [False, False, True, False, True]
    metrics = caedet.detection_metrics(verdicts, [False, False, True, False, True])
    assert metrics.f1 == 1.0


def test_periodic_update_report(tmp_path):
    cfg = caedet.ExperimentConfig()
    cfg.dataset.source = "synth-blobs"
    cfg.dataset.n_per_class = 200
    cfg.dataset.blob_dim = 16
    cfg.dataset.blob_distance = 1.2
    cfg.dataset.blob_spread = 0.1
    cfg.attack = caedet.AttackKind.Flip
    cfg.rate_grid = [0.1]
    cfg.detector_kinds = [caedet.DetectorKind.Centroid]
    cfg.n_rounds = 4
    cfg.n_eval_rounds = 2
    sizes = caedet.SplitSizes()
    sizes.train = 20
    sizes.validation = 10
    sizes.test = 20
    cfg.splits = sizes
    cfg.cae_epochs = 5
    cfg.rae_epochs = 5
    cfg.batch_size = 16
    cfg.attack_max_iters = 4
    cfg.seed = 5

    report = caedet.run_periodic_update(cfg)
    assert report.experiment == "periodic"
    rounds = [r for r in report.rows if r.scope == "round"]
    means = [r for r in report.rows if r.scope == "mean"]
    assert len(rounds) == 2 and len(means) == 1
    for r in report.rows:
        assert 0.0 <= r.f1 <= 1.0
        assert 0.0 <= r.acc_filtered <= 1.0

    csv = caedet.render_report(report, caedet.ReportFormat.Csv)
    assert csv.startswith("#")
    assert "acc_filtered" in csv

    out = str(tmp_path / "report.json")
    caedet.emit_report(report, caedet.format_from_name("json"), out)
    with open(out) as fh:
        assert '"rows"' in fh.read()


def test_name_round_trips():
    for kind in (caedet.AttackKind.Flip, caedet.AttackKind.Optimal,
                 caedet.AttackKind.SemiOptimal, caedet.AttackKind.Mixed):
        assert caedet.attack_from_name(caedet.attack_name(kind)) == kind
    for kind in (caedet.DetectorKind.RAE, caedet.DetectorKind.CAE,
                 caedet.DetectorKind.CAEPlus, caedet.DetectorKind.Centroid):
        assert caedet.detector_from_name(caedet.detector_name(kind)) == kind
    assert math.isclose(caedet.ExperimentConfig().alpha, 0.66)
