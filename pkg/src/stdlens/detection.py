"""Surrogate object-detection task.

A desk-scale stand-in for FL object detection: samples carry a feature
vector plus per-anchor object triplets (class, bbox, objectness), and the
model is a linear multi-head detector with analytic gradients. Box sizes
are regressed in log space so shrink-style label corruption leaves a
geometric footprint that survives averaging.

Conventions:
  - classes 0..C-1 are foreground, C is background
  - bboxes are (cx, cy, w, h) in [0,1]
  - regression targets are (cx, cy, log w, log h)
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .seeding import make_rng

__all__ = [
    "ClientDataset",
    "DetectorWeights",
    "TaskGeometry",
    "generate_client_dataset",
    "generate_federation_data",
    "detector_loss_and_grad",
    "predict",
    "iou",
    "average_precision",
    "evaluate_per_class_ap",
    "dataset_to_jsonl",
    "dataset_from_jsonl",
]


@dataclass
class ClientDataset:
    """Vectorized batch of detection samples.

    x: (n, d) features; classes: (n, A) int with C = background;
    bboxes: (n, A, 4) as (cx, cy, w, h); objn: (n, A) bool.
    """

    x: np.ndarray
    classes: np.ndarray
    bboxes: np.ndarray
    objn: np.ndarray

    def __len__(self):
        return self.x.shape[0]

    def copy(self) -> "ClientDataset":
        return ClientDataset(self.x.copy(), self.classes.copy(),
                             self.bboxes.copy(), self.objn.copy())

    def subset(self, idx) -> "ClientDataset":
        return ClientDataset(self.x[idx], self.classes[idx],
                             self.bboxes[idx], self.objn[idx])


@dataclass
class DetectorWeights:
    """Linear detector head.

    w_class: (A, C+1, d); w_bbox: (A, C, 4, d); w_objn: (A, C, d).
    The whole model is one output layer, so per-class gradient blocks are
    well defined for forensics.
    """

    w_class: np.ndarray
    w_bbox: np.ndarray
    w_objn: np.ndarray

    @staticmethod
    def zeros(A: int, C: int, d: int) -> "DetectorWeights":
        return DetectorWeights(
            np.zeros((A, C + 1, d)), np.zeros((A, C, 4, d)), np.zeros((A, C, d))
        )

    @property
    def shape_params(self):
        A, Cp1, d = self.w_class.shape
        return A, Cp1 - 1, d

    def copy(self) -> "DetectorWeights":
        return DetectorWeights(self.w_class.copy(), self.w_bbox.copy(), self.w_objn.copy())

    def scaled(self, a: float) -> "DetectorWeights":
        return DetectorWeights(a * self.w_class, a * self.w_bbox, a * self.w_objn)

    def add(self, other: "DetectorWeights") -> "DetectorWeights":
        return DetectorWeights(self.w_class + other.w_class,
                               self.w_bbox + other.w_bbox,
                               self.w_objn + other.w_objn)

    def sub(self, other: "DetectorWeights") -> "DetectorWeights":
        return DetectorWeights(self.w_class - other.w_class,
                               self.w_bbox - other.w_bbox,
                               self.w_objn - other.w_objn)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.w_class.ravel(), self.w_bbox.ravel(),
                               self.w_objn.ravel()])

    @staticmethod
    def from_vector(vec: np.ndarray, A: int, C: int, d: int) -> "DetectorWeights":
        n1 = A * (C + 1) * d
        n2 = A * C * 4 * d
        return DetectorWeights(
            vec[:n1].reshape(A, C + 1, d),
            vec[n1:n1 + n2].reshape(A, C, 4, d),
            vec[n1 + n2:].reshape(A, C, d),
        )


@dataclass(frozen=True)
class TaskGeometry:
    """Fixed class-conditional generators shared by all clients.

    Features are built per anchor from a class prototype placed in that
    anchor's feature slice; boxes come from class-dependent base sizes
    with small jitter, so both heads are linearly learnable.
    """

    prototypes: np.ndarray   # (A, C+1, slice)
    slice_size: int
    base_sizes: np.ndarray   # (C,)


def _make_geometry(seed: int, C: int, d: int, A: int, scale: float) -> TaskGeometry:
    rng = make_rng(seed, "task-geometry")
    slice_size = max(1, (d - 1) // A)
    protos = rng.standard_normal((A, C + 1, slice_size))
    protos *= scale / np.maximum(np.linalg.norm(protos, axis=-1, keepdims=True), 1e-12)
    base = 0.22 + 0.10 * np.arange(C)
    return TaskGeometry(protos, slice_size, base)


def generate_client_dataset(geom: TaskGeometry, rng: np.random.Generator, n: int,
                            C: int, d: int, A: int, *, background_prob: float,
                            feature_noise: float, center_jitter: float,
                            size_jitter: float, offset: np.ndarray | None = None
                            ) -> ClientDataset:
    """Draw n samples from the class-conditional generators."""
    fg = rng.random((n, A)) >= background_prob
    classes = np.where(fg, rng.integers(0, C, size=(n, A)), C)
    x = feature_noise * rng.standard_normal((n, d))
    s = geom.slice_size
    for a in range(A):
        x[:, a * s:(a + 1) * s] += geom.prototypes[a, classes[:, a]]
    x[:, -1] = 1.0  # bias feature
    if offset is not None:
        x[:, :-1] += offset[:-1]
    sizes = np.where(fg, geom.base_sizes[np.minimum(classes, C - 1)], 0.0)
    sizes = sizes * np.exp(size_jitter * rng.standard_normal((n, A)))
    centers = 0.5 + rng.uniform(-center_jitter, center_jitter, size=(n, A, 2))
    bboxes = np.zeros((n, A, 4))
    bboxes[..., 0] = centers[..., 0]
    bboxes[..., 1] = centers[..., 1]
    bboxes[..., 2] = np.clip(sizes, 1e-3, 1.0)
    bboxes[..., 3] = np.clip(sizes * np.exp(0.02 * rng.standard_normal((n, A))), 1e-3, 1.0)
    bboxes[~fg] = 0.0
    return ClientDataset(x, classes.astype(np.int64), bboxes, fg.copy())


def generate_federation_data(seed: int, N: int, samples_per_client: int, C: int,
                             d: int, A: int, *, test_samples: int = 400,
                             background_prob: float = 0.25, feature_noise: float = 0.6,
                             prototype_scale: float = 2.0, client_spread: float = 0.3,
                             center_jitter: float = 0.04, size_jitter: float = 0.08):
    """Per-client datasets plus a disjoint held-out test set.

    Returns (datasets, test_set, geometry, offsets); offsets are the fixed
    per-client feature displacements used for round-by-round refreshes.
    """
    if C < 2 or d < 4 or A < 1:
        raise ValueError("invalid task dimensions: need C >= 2, d >= 4, A >= 1")
    geom = _make_geometry(seed, C, d, A, prototype_scale)
    offsets = client_spread * make_rng(seed, "client-offsets").standard_normal((N, d))
    kwargs = dict(background_prob=background_prob, feature_noise=feature_noise,
                  center_jitter=center_jitter, size_jitter=size_jitter)
    datasets = [
        generate_client_dataset(geom, make_rng(seed, "data", i, 0), samples_per_client,
                                C, d, A, offset=offsets[i], **kwargs)
        for i in range(N)
    ]
    test = generate_client_dataset(geom, make_rng(seed, "test-data"), test_samples,
                                   C, d, A, offset=None, **kwargs)
    return datasets, test, geom, offsets


def _encode_boxes(bboxes: np.ndarray) -> np.ndarray:
    t = bboxes.copy()
    t[..., 2] = np.log(np.maximum(bboxes[..., 2], 1e-9))
    t[..., 3] = np.log(np.maximum(bboxes[..., 3], 1e-9))
    return t


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def detector_loss_and_grad(weights: DetectorWeights, batch: ClientDataset):
    """Mean loss and its exact analytic gradient.

    Per (sample, anchor): cross-entropy over C+1 classes; for foreground
    anchors, squared error on the encoded box of the true class plus
    binary cross-entropy on that class's objectness logit. Normalized by
    n*A so duplicating the batch changes nothing.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    A, C, d = weights.shape_params
    n = len(batch)
    x = batch.x                                   # (n, d)
    norm = 1.0 / (n * A)

    logits = np.einsum("acd,nd->nac", weights.w_class, x)   # (n, A, C+1)
    probs = _softmax(logits)
    onehot = np.eye(C + 1)[batch.classes]                   # (n, A, C+1)
    p_true = np.take_along_axis(probs, batch.classes[..., None], axis=-1)[..., 0]
    loss = -norm * np.sum(np.log(np.maximum(p_true, 1e-300)))
    g_class = norm * np.einsum("nac,nd->acd", probs - onehot, x)

    g_bbox = np.zeros_like(weights.w_bbox)
    g_objn = np.zeros_like(weights.w_objn)
    fg = batch.classes < C                                   # (n, A)
    if fg.any():
        targets = _encode_boxes(batch.bboxes)
        obj_t = batch.objn.astype(float)
        for a in range(A):
            mask = fg[:, a]
            if not mask.any():
                continue
            cls = batch.classes[mask, a]
            xa = x[mask]
            pred = np.einsum("njd,nd->nj", weights.w_bbox[a, cls], xa)  # (k, 4)
            resid = pred - targets[mask, a]
            loss += norm * 0.5 * np.sum(resid ** 2)
            np.add.at(g_bbox[a], cls, norm * resid[:, :, None] * xa[:, None, :])

            z = np.einsum("nd,nd->n", weights.w_objn[a, cls], xa)
            p = 1.0 / (1.0 + np.exp(-z))
            t = obj_t[mask, a]
            loss += norm * np.sum(
                np.log1p(np.exp(-np.abs(z))) + np.maximum(z, 0) - t * z
            )
            np.add.at(g_objn[a], cls, norm * (p - t)[:, None] * xa)

    return loss, DetectorWeights(g_class, g_bbox, g_objn)


def predict(weights: DetectorWeights, x: np.ndarray):
    """Per-anchor predictions for a feature matrix.

    Returns (probs (n,A,C+1), pred_class (n,A), bboxes (n,A,4), objn_prob
    (n,A)); background predictions carry zero boxes and objn 0.
    """
    A, C, d = weights.shape_params
    n = x.shape[0]
    logits = np.einsum("acd,nd->nac", weights.w_class, x)
    probs = _softmax(logits)
    pred_class = probs.argmax(axis=-1)
    bboxes = np.zeros((n, A, 4))
    objn_p = np.zeros((n, A))
    for a in range(A):
        fg = pred_class[:, a] < C
        if not fg.any():
            continue
        cls = pred_class[fg, a]
        xa = x[fg]
        t = np.einsum("njd,nd->nj", weights.w_bbox[a, cls], xa)
        box = t.copy()
        box[:, 2] = np.exp(np.clip(t[:, 2], -20, 3))
        box[:, 3] = np.exp(np.clip(t[:, 3], -20, 3))
        bboxes[fg, a] = box
        z = np.einsum("nd,nd->n", weights.w_objn[a, cls], xa)
        objn_p[fg, a] = 1.0 / (1.0 + np.exp(-z))
    return probs, pred_class, bboxes, objn_p


def iou(box_a, box_b) -> float:
    """Intersection-over-union of two (cx, cy, w, h) boxes."""
    ax, ay, aw, ah = box_a
    bx, by, bw, bh = box_b
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError("boxes must have positive width and height")
    ix = max(0.0, min(ax + aw / 2, bx + bw / 2) - max(ax - aw / 2, bx - bw / 2))
    iy = max(0.0, min(ay + ah / 2, by + bh / 2) - max(ay - ah / 2, by - bh / 2))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def average_precision(predictions, ground_truth, iou_threshold: float = 0.5):
    """Single-class AP with greedy IoU matching.

    predictions: list of (sample_id, confidence, bbox), ground_truth: list
    of (sample_id, bbox). Ranked by confidence (ties by insertion index),
    each prediction greedily matches the highest-IoU unmatched truth in
    its sample; AP is the step-integrated area under the PR curve.

    Returns None when there is no ground truth (AP undefined, never 0).
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ValueError("iou_threshold must be in (0,1)")
    n_gt = len(ground_truth)
    if n_gt == 0:
        return None
    if not predictions:
        return 0.0
    gt_by_sample: dict = {}
    for gi, (sid, box) in enumerate(ground_truth):
        gt_by_sample.setdefault(sid, []).append((gi, box))
    order = sorted(range(len(predictions)),
                   key=lambda i: (-predictions[i][1], i))
    matched = np.zeros(n_gt, dtype=bool)
    tp = np.zeros(len(order))
    for rank, pi in enumerate(order):
        sid, _, box = predictions[pi]
        best_iou, best_gi = 0.0, -1
        for gi, gbox in gt_by_sample.get(sid, ()):
            if matched[gi]:
                continue
            v = iou(box, gbox)
            if v > best_iou:
                best_iou, best_gi = v, gi
        if best_gi >= 0 and best_iou >= iou_threshold:
            matched[best_gi] = True
            tp[rank] = 1.0
    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(order) + 1)
    recall = cum_tp / n_gt
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def evaluate_per_class_ap(weights: DetectorWeights, test: ClientDataset,
                          iou_threshold: float = 0.5):
    """Per-class AP of the detector on a test set; None where undefined."""
    A, C, d = weights.shape_params
    probs, pred_class, pred_boxes, objn_p = predict(weights, test.x)
    preds: list[list] = [[] for _ in range(C)]
    gts: list[list] = [[] for _ in range(C)]
    n = len(test)
    for i in range(n):
        for a in range(A):
            c = pred_class[i, a]
            if c < C:
                conf = probs[i, a, c] * objn_p[i, a]
                preds[c].append((i, float(conf), pred_boxes[i, a]))
            tc = test.classes[i, a]
            if tc < C:
                gts[tc].append((i, test.bboxes[i, a]))
    return {c: average_precision(preds[c], gts[c], iou_threshold) for c in range(C)}


def dataset_to_jsonl(dataset: ClientDataset, path) -> None:
    """One sample per line: features plus the anchor triplet list."""
    with open(path, "w") as fh:
        for i in range(len(dataset)):
            anchors = []
            for a in range(dataset.classes.shape[1]):
                anchors.append({
                    "class": int(dataset.classes[i, a]),
                    "bbox": [float(v) for v in dataset.bboxes[i, a]],
                    "objn": bool(dataset.objn[i, a]),
                })
            fh.write(json.dumps({"x": [float(v) for v in dataset.x[i]],
                                 "anchors": anchors}) + "\n")


def dataset_from_jsonl(path) -> ClientDataset:
    xs, classes, boxes, objn = [], [], [], []
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            xs.append(rec["x"])
            classes.append([a["class"] for a in rec["anchors"]])
            boxes.append([a["bbox"] for a in rec["anchors"]])
            objn.append([a["objn"] for a in rec["anchors"]])
    return ClientDataset(np.asarray(xs, dtype=float),
                         np.asarray(classes, dtype=np.int64),
                         np.asarray(boxes, dtype=float),
                         np.asarray(objn, dtype=bool))
