"""Video-level descriptors, fused distance, ranking, CMC and mAP."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import split_clips


@dataclass
class EmbeddingRecord:
    f_app: np.ndarray  # may be zero-length when the branch is ablated
    f_att: np.ndarray
    identity: int
    camera: int
    sequence_id: int


@dataclass
class RankingResult:
    cmc: np.ndarray  # Rank-k accuracy, k = 1..K
    mean_ap: float
    per_query: list = field(default_factory=list)  # (sequence_id, ranked gallery ids, distances)
    skipped: int = 0


def video_descriptor(seq, model, T):
    """Split into clips, embed each, and average clip features per branch."""
    clips = split_clips(seq, T)
    frames = np.stack([c.frames for c in clips])  # (L, T, C, H, W)
    f_app, f_att = model.descriptors(frames)
    return EmbeddingRecord(
        f_app=f_app.mean(axis=0) if f_app is not None else np.zeros(0, dtype=np.float32),
        f_att=f_att.mean(axis=0) if f_att is not None else np.zeros(0, dtype=np.float32),
        identity=seq.identity,
        camera=seq.camera,
        sequence_id=seq.sequence_id,
    )


def fused_distance(a, b, lambda_sim):
    """Squared norm of the concatenated difference [d_app, lambda * d_att].

    Decomposes as |d_app|^2 + lambda^2 |d_att|^2; smaller means more similar,
    so ranking sorts ascending.
    """
    if a.f_app.shape != b.f_app.shape or a.f_att.shape != b.f_att.shape:
        raise ValueError(f"descriptor dim mismatch: {a.f_app.shape}/{a.f_att.shape} "
                         f"vs {b.f_app.shape}/{b.f_att.shape}")
    d_app = a.f_app - b.f_app
    d_att = lambda_sim * (a.f_att - b.f_att)
    return float(d_app @ d_app + d_att @ d_att)


def distance_matrix(queries, gallery, lambda_sim):
    out = np.empty((len(queries), len(gallery)))
    for i, q in enumerate(queries):
        for j, g in enumerate(gallery):
            out[i, j] = fused_distance(q, g, lambda_sim)
    return out


def evaluate(queries, gallery, lambda_sim=0.3, protocol="multi-shot", max_rank=20):
    """CMC / mAP over a ranked gallery.

    multi-shot: per query, gallery entries with the same identity AND the
    same camera are excluded (MARS-style). pairwise: gallery used as-is, one
    entry per identity expected (iLIDS-style). Distance ties break by gallery
    index. Queries whose identity is absent from the (filtered) gallery are
    skipped with a warning.
    """
    if protocol not in ("multi-shot", "pairwise"):
        raise ValueError(f"unknown protocol {protocol!r}")
    dist = distance_matrix(queries, gallery, lambda_sim)
    g_ids = np.array([g.identity for g in gallery])
    g_cams = np.array([g.camera for g in gallery])
    cmc_hits = np.zeros(max_rank)
    aps = []
    per_query = []
    skipped = 0
    for i, q in enumerate(queries):
        keep = np.ones(len(gallery), dtype=bool)
        if protocol == "multi-shot":
            keep &= ~((g_ids == q.identity) & (g_cams == q.camera))
        if not np.any((g_ids == q.identity) & keep):
            skipped += 1
            continue
        idx = np.nonzero(keep)[0]
        # stable sort on distance -> ties broken by gallery index
        order = idx[np.argsort(dist[i, idx], kind="stable")]
        matches = g_ids[order] == q.identity
        first = int(np.argmax(matches))
        if first < max_rank:
            cmc_hits[first:] += 1
        ranks = np.nonzero(matches)[0]
        precisions = (np.arange(len(ranks)) + 1) / (ranks + 1)
        aps.append(float(precisions.mean()))
        per_query.append((q.sequence_id, [gallery[j].sequence_id for j in order],
                          dist[i, order].tolist()))
    n_eval = len(aps)
    if skipped:
        warnings.warn(f"{skipped} queries had no valid gallery match and were skipped")
    if n_eval == 0:
        return RankingResult(cmc=np.zeros(max_rank), mean_ap=0.0, skipped=skipped)
    return RankingResult(cmc=cmc_hits / n_eval, mean_ap=float(np.mean(aps)),
                         per_query=per_query, skipped=skipped)


def raw_pixel_record(seq):
    """Frame-averaged raw pixels: the untrained retrieval baseline."""
    return EmbeddingRecord(
        f_app=seq.frames.mean(axis=0).ravel().astype(np.float64),
        f_att=np.zeros(0),
        identity=seq.identity, camera=seq.camera, sequence_id=seq.sequence_id)


def embed_sequences(sequences, model, T):
    return [video_descriptor(s, model, T) for s in sequences]


def query_gallery_split(sequences, query_camera=0):
    """Cross-camera protocol: camera `query_camera` probes the rest."""
    queries = [s for s in sequences if s.camera == query_camera]
    gallery = [s for s in sequences if s.camera != query_camera]
    return queries, gallery


def write_embeddings(path, records):
    """Text table: sequence_id, identity, camera, then f_app and f_att values."""
    with open(path, "w") as fh:
        fh.write("sequence_id\tidentity\tcamera\tf_app\tf_att\n")
        for r in records:
            app = ",".join(f"{v:.8g}" for v in r.f_app)
            att = ",".join(f"{v:.8g}" for v in r.f_att)
            fh.write(f"{r.sequence_id}\t{r.identity}\t{r.camera}\t{app}\t{att}\n")


def metrics_report(result, ranks=(1, 5, 10, 20)):
    lines = ["metric\tvalue"]
    for k in ranks:
        if k <= len(result.cmc):
            lines.append(f"rank-{k}\t{result.cmc[k - 1]:.4f}")
    lines.append(f"mAP\t{result.mean_ap:.4f}")
    if result.skipped:
        lines.append(f"skipped_queries\t{result.skipped}")
    return "\n".join(lines) + "\n"
