"""Spatial/temporal signature machinery and the sigma-zone partition."""

import numpy as np
import pytest
import scipy.linalg

from stdlens.detection import DetectorWeights
from stdlens.forensics import (GradientContribution, StdLensDefense, cluster_2d,
                               extract_class_gradient_block, flag_suspect_classes,
                               identify_suspicious_cluster, kmeans,
                               sigma_zone_partition, spatial_project,
                               temporal_signature)
from stdlens.seeding import make_rng


# -- gradient block extraction ----------------------------------------------

def test_block_dimension_matches_shape_arithmetic():
    A, C, d = 3, 4, 7
    delta = DetectorWeights.zeros(A, C, d)
    block = extract_class_gradient_block(delta, 0)
    # class row + 4 bbox rows + objn row per anchor
    assert block.shape == (6 * A * d,)


def test_zero_update_gives_zero_block():
    delta = DetectorWeights.zeros(2, 3, 5)
    assert not extract_class_gradient_block(delta, 1).any()


def test_block_locality_across_classes():
    A, C, d = 2, 3, 5
    rng = make_rng(0, "block")
    a = DetectorWeights(rng.standard_normal((A, C + 1, d)),
                        rng.standard_normal((A, C, 4, d)),
                        rng.standard_normal((A, C, d)))
    b = a.copy()
    b.w_class[:, 2, :] += 1.0
    b.w_bbox[:, 2, :, :] += 1.0
    b.w_objn[:, 2, :] += 1.0
    assert np.array_equal(extract_class_gradient_block(a, 0),
                          extract_class_gradient_block(b, 0))
    assert not np.array_equal(extract_class_gradient_block(a, 2),
                              extract_class_gradient_block(b, 2))


def test_block_rejects_bad_class():
    with pytest.raises(ValueError):
        extract_class_gradient_block(DetectorWeights.zeros(1, 2, 4), 2)


# -- spatial projection ------------------------------------------------------

def test_projection_matches_dense_eigensolver():
    rng = make_rng(1, "proj")
    blocks = rng.standard_normal((20, 8))
    proj = spatial_project(blocks)
    centered = blocks - blocks.mean(axis=0)
    cov = centered.T @ centered / 19
    vals = scipy.linalg.eigvalsh(cov)
    assert proj.eigenvalues[0] == pytest.approx(vals[-1], rel=1e-9)
    assert proj.eigenvalues[1] == pytest.approx(vals[-2], rel=1e-9)
    # sample variance of SSC1 equals the top eigenvalue
    assert proj.ssc[:, 0].var(ddof=1) == pytest.approx(proj.eigenvalues[0],
                                                       rel=1e-6)


def test_projection_preserves_planar_distances():
    rng = make_rng(2, "plane")
    plane = rng.standard_normal((2, 10))
    coords = rng.standard_normal((15, 2))
    blocks = coords @ plane + rng.standard_normal(10)  # embedded 2D cloud
    proj = spatial_project(blocks)
    d_orig = np.linalg.norm(blocks[:, None] - blocks[None, :], axis=2)
    d_proj = np.linalg.norm(proj.ssc[:, None] - proj.ssc[None, :], axis=2)
    assert np.allclose(d_orig, d_proj, atol=1e-9)


def test_projection_eigenvectors_orthonormal():
    rng = make_rng(3, "ortho")
    proj = spatial_project(rng.standard_normal((12, 6)))
    v1, v2 = proj.eigenvectors
    assert np.linalg.norm(v1) == pytest.approx(1.0)
    assert np.linalg.norm(v2) == pytest.approx(1.0)
    assert abs(np.dot(v1, v2)) < 1e-9


def test_projection_collinear_points_degenerate():
    t = np.linspace(0, 1, 8)[:, None]
    blocks = t * np.array([[1.0, 2.0, -1.0, 0.5]])
    proj = spatial_project(blocks)
    assert proj.degenerate
    assert proj.eigenvalues[1] == 0.0
    assert not proj.ssc[:, 1].any()


def test_projection_needs_three_rows():
    with pytest.raises(ValueError):
        spatial_project(np.zeros((2, 5)))


# -- clustering --------------------------------------------------------------

def _two_blobs(rng, gap=10.0, n=20):
    a = rng.standard_normal((n, 2))
    b = rng.standard_normal((n, 2)) + np.array([gap, 0.0])
    return np.vstack([a, b])


@pytest.mark.parametrize("algorithm", ["kmeans", "agglomerative", "spectral"])
def test_cluster_2d_separable_blobs(algorithm):
    pts = _two_blobs(make_rng(4, "blobs"))
    labels = cluster_2d(pts, algorithm, 2, seed=0)
    assert set(labels.tolist()) == {0, 1}
    assert len(set(labels[:20].tolist())) == 1
    assert len(set(labels[20:].tolist())) == 1
    assert labels[0] != labels[20]


@pytest.mark.parametrize("algorithm", ["kmeans", "agglomerative", "spectral"])
def test_cluster_2d_single_blob_still_partitions(algorithm):
    pts = make_rng(5, "blob").standard_normal((15, 2))
    labels = cluster_2d(pts, algorithm, 2, seed=1)
    assert len(labels) == 15
    assert set(labels.tolist()) == {0, 1}


def test_cluster_2d_duplicate_points_deterministic():
    pts = np.ones((6, 2))
    labels = cluster_2d(pts, "spectral", 2, seed=2)
    assert set(labels.tolist()) == {0, 1}


def test_cluster_2d_unknown_algorithm():
    with pytest.raises(ValueError):
        cluster_2d(make_rng(0, "alg").standard_normal((5, 2)), "dbscan", 2)


def test_kmeans_is_seed_deterministic():
    pts = make_rng(6, "km").standard_normal((30, 2))
    assert np.array_equal(kmeans(pts, 2, seed=3), kmeans(pts, 2, seed=3))


def test_kmeans_needs_enough_points():
    with pytest.raises(ValueError):
        kmeans(np.zeros((1, 2)), 2, seed=0)


# -- class flagging ----------------------------------------------------------

def test_flagging_separated_vs_single_gaussian():
    rng = make_rng(7, "flag")
    tight = rng.standard_normal((40, 6))
    split = np.vstack([rng.standard_normal((30, 6)),
                       rng.standard_normal((10, 6)) + 25.0])
    projections = {0: spatial_project(tight, class_id=0),
                   1: spatial_project(split, class_id=1)}
    assert flag_suspect_classes(projections, 2.0) == {1}


def test_flagging_false_positive_rate():
    rng = make_rng(8, "ffr")
    flagged = 0
    for t in range(200):
        proj = spatial_project(rng.standard_normal((30, 5)), class_id=0)
        flagged += bool(flag_suspect_classes({0: proj}, 2.0, seed=t))
    assert flagged / 200 < 0.05


# -- temporal signature ------------------------------------------------------

def test_temporal_signature_frozen_examples():
    # consecutive scalar steps of size 1
    assert temporal_signature(np.array([[0.0], [1.0], [2.0]]), 1) == 1.0
    assert temporal_signature(np.array([[0.0], [1.0], [2.0], [3.0]]), 2) == 1.5
    # constant trajectory has zero dissimilarity
    assert temporal_signature(np.ones((5, 2)), 1) == 0.0


def test_temporal_signature_undefined_for_short_trajectories():
    assert temporal_signature(np.zeros((2, 2)), 2) is None
    assert temporal_signature(np.zeros((1, 2)), 1) is None


def test_temporal_signature_l2_option():
    traj = np.array([[0.0, 0.0], [3.0, 4.0]])
    assert temporal_signature(traj, 1, dissim="l2") == pytest.approx(5.0)
    assert temporal_signature(traj, 1, dissim="l1") == pytest.approx(7.0)


def test_temporal_signature_rejects_bad_args():
    with pytest.raises(ValueError):
        temporal_signature(np.zeros((4, 2)), 0)
    with pytest.raises(ValueError):
        temporal_signature(np.zeros((4, 2)), 1, dissim="cosine")


def test_suspicious_cluster_lower_mean_wins():
    sigs = {0: {1: 0.1, 2: 0.2}, 1: {3: 1.0, 4: 2.0}}
    assert identify_suspicious_cluster(sigs, {0: 2, 1: 2}) == 0


def test_suspicious_cluster_tie_prefers_smaller():
    sigs = {0: {1: 0.5}, 1: {2: 0.5, 3: 0.5}}
    assert identify_suspicious_cluster(sigs, {0: 1, 1: 2}) == 0


def test_suspicious_cluster_defers_without_signatures():
    sigs = {0: {1: None}, 1: {2: 0.5}}
    assert identify_suspicious_cluster(sigs, {0: 1, 1: 1}) is None


# -- sigma zones -------------------------------------------------------------

def test_sigma_zone_gap_between_clusters():
    values = np.array([0.0, 0.1, -0.1, 10.0, 10.1, 9.9, 5.0])
    labels = np.array([0, 0, 0, 1, 1, 1, 0])
    zones, point_labels = sigma_zone_partition(values, labels, 0.68)
    assert zones.z == 1.0
    assert zones.uncertain is not None
    lo, hi = zones.uncertain
    assert lo < 5.0 < hi
    assert point_labels[:3] == ["confident-0"] * 3
    assert point_labels[3:6] == ["confident-1"] * 3
    assert point_labels[6] == "uncertain"


def test_sigma_zone_overlapping_intervals_have_no_gap():
    values = np.array([0.0, 1.0, 2.0, 1.5, 2.5, 3.5])
    labels = np.array([0, 0, 0, 1, 1, 1])
    zones, _ = sigma_zone_partition(values, labels, 0.99)
    assert zones.uncertain is None


def test_sigma_zone_confidence_maps_to_z():
    values = np.arange(6, dtype=float)
    labels = np.array([0, 0, 0, 1, 1, 1])
    for conf, z in ((0.68, 1.0), (0.95, 2.0), (0.99, 3.0)):
        zones, _ = sigma_zone_partition(values, labels, conf)
        assert zones.z == z


def test_sigma_zone_rejects_unknown_confidence():
    with pytest.raises(ValueError):
        sigma_zone_partition(np.zeros(4), np.zeros(4, dtype=int), 0.9)


# -- the full defense on synthetic streams -----------------------------------

def _stream_from_blocks(honest, malicious, rounds, rng, class_id=0):
    """honest: dict cid -> sampler(); malicious: dict cid -> fixed block."""
    stream = []
    for r in range(rounds):
        contribs = [GradientContribution(cid, r, class_id, fn())
                    for cid, fn in honest.items()]
        contribs += [GradientContribution(cid, r, class_id,
                                          blk + 0.01 * rng.standard_normal(len(blk)))
                     for cid, blk in malicious.items()]
        stream.append(contribs)
    return stream


def test_defense_purges_replayed_payloads_and_spares_honest():
    rng = make_rng(9, "defense")
    d = 6
    honest = {cid: (lambda: rng.standard_normal(d)) for cid in range(12)}
    payload = np.full(d, 8.0)
    malicious = {cid: payload.copy() for cid in (20, 21, 22)}
    defense = StdLensDefense(num_classes=1, window=10, omega=1, confidence=0.99,
                             normalize_blocks=False, seed=0)
    revoked = set()
    for contribs in _stream_from_blocks(honest, malicious, 30, rng):
        out, _ = defense.observe_contributions(contribs[0].round, contribs)
        revoked |= set(out)
    assert revoked == {20, 21, 22}


def test_defense_benign_stream_no_revocations():
    rng = make_rng(10, "benign")
    honest = {cid: (lambda: rng.standard_normal(6)) for cid in range(15)}
    defense = StdLensDefense(num_classes=1, window=10, omega=1, confidence=0.99,
                             normalize_blocks=False, seed=0)
    for contribs in _stream_from_blocks(honest, {}, 30, rng):
        out, _ = defense.observe_contributions(contribs[0].round, contribs)
        assert out == []


def test_defense_revocation_is_terminal():
    rng = make_rng(11, "terminal")
    honest = {cid: (lambda: rng.standard_normal(6)) for cid in range(12)}
    malicious = {30: np.full(6, 9.0)}
    defense = StdLensDefense(num_classes=1, window=10, omega=1, confidence=0.99,
                             normalize_blocks=False, seed=0)
    events = []
    for contribs in _stream_from_blocks(honest, malicious, 50, rng):
        out, _ = defense.observe_contributions(contribs[0].round, contribs)
        events += out
    assert events.count(30) <= 1
    assert defense.dossiers[30].verdict == "revoked"
