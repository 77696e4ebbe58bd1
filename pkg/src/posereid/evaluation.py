"""Retrieval evaluation: cosine distances, CMC curve, and mean average precision.

Protocol: for each query, gallery entries sharing both its identity and its
camera are excluded; remaining entries are ranked by ascending distance with
ties broken by gallery index (stable sort). Queries without any valid
positive are skipped; evaluation fails if every query is skipped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def cosine_distance_matrix(queries: np.ndarray, gallery: np.ndarray) -> np.ndarray:
    """1 - cosine similarity for every query/gallery pair."""
    queries = np.asarray(queries, dtype=np.float64)
    gallery = np.asarray(gallery, dtype=np.float64)
    if queries.ndim != 2 or gallery.ndim != 2 or queries.shape[1] != gallery.shape[1]:
        raise ValueError("queries and gallery must be 2-D with equal feature length")
    q_norm = np.linalg.norm(queries, axis=1)
    g_norm = np.linalg.norm(gallery, axis=1)
    if (q_norm == 0).any() or (g_norm == 0).any():
        raise ValueError("zero-norm descriptor encountered")
    sim = (queries / q_norm[:, None]) @ (gallery / g_norm[:, None]).T
    return 1.0 - sim


@dataclass
class EvalResult:
    cmc: np.ndarray  # (max_rank,) cumulative match characteristic
    mean_ap: float
    num_valid_queries: int
    num_skipped_queries: int

    def rank(self, k: int) -> float:
        return float(self.cmc[k - 1])

    def summary(self) -> str:
        parts = [f"Rank-{k} {self.cmc[k - 1]:.4f}" for k in (1, 5, 10) if k <= len(self.cmc)]
        parts.append(f"mAP {self.mean_ap:.4f}")
        parts.append(f"({self.num_valid_queries} queries, {self.num_skipped_queries} skipped)")
        return "  ".join(parts)


def cmc_map(
    dist: np.ndarray,
    query_ids: np.ndarray,
    gallery_ids: np.ndarray,
    query_cams: np.ndarray,
    gallery_cams: np.ndarray,
    max_rank: int = 10,
) -> EvalResult:
    """CMC and mAP under the cross-camera retrieval protocol."""
    dist = np.asarray(dist, dtype=np.float64)
    query_ids = np.asarray(query_ids)
    gallery_ids = np.asarray(gallery_ids)
    query_cams = np.asarray(query_cams)
    gallery_cams = np.asarray(gallery_cams)
    nq, ng = dist.shape
    if query_ids.shape != (nq,) or query_cams.shape != (nq,):
        raise ValueError("query id/cam arrays must match the distance matrix rows")
    if gallery_ids.shape != (ng,) or gallery_cams.shape != (ng,):
        raise ValueError("gallery id/cam arrays must match the distance matrix columns")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")

    cmc_sum = np.zeros(max_rank, dtype=np.float64)
    average_precisions: list[float] = []
    skipped = 0
    for i in range(nq):
        keep = ~((gallery_ids == query_ids[i]) & (gallery_cams == query_cams[i]))
        order = np.argsort(dist[i], kind="stable")
        order = order[keep[order]]
        matches = gallery_ids[order] == query_ids[i]
        if not matches.any():
            skipped += 1
            continue
        first = int(np.flatnonzero(matches)[0])
        if first < max_rank:
            cmc_sum[first:] += 1.0
        hits = np.flatnonzero(matches)
        precisions = np.cumsum(matches)[hits] / (hits + 1.0)
        average_precisions.append(float(precisions.mean()))

    valid = nq - skipped
    if valid == 0:
        raise ValueError("every query was skipped: no query has a valid cross-camera positive")
    return EvalResult(
        cmc=cmc_sum / valid,
        mean_ap=float(np.mean(average_precisions)),
        num_valid_queries=valid,
        num_skipped_queries=skipped,
    )
