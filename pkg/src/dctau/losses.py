"""Supervised and dual contrastive losses with analytic gradients.

All three losses share one core. Given a set of anchor embeddings with
integer labels, an optional set of cross embeddings, and a match label
per cross row, each anchor i with positive set P(i) (same-label anchors,
itself excluded) contributes

    (-1/|P(i)|) * sum_{p in P(i)} log[ exp(a_i.a_p/tau) / S_i ]

where S_i sums exp(a_i.a_k/tau) over every other anchor plus
exp(a_i.c_j/tau) over every cross row j whose match label equals the
anchor's label. Anchors with empty P(i) are skipped and counted.

The three public losses are instances of this core:

* supcon: no cross rows at all.
* dual-contrastive known term: known embeddings anchor; universum rows
  enter matched denominators only (each universum row repels exactly the
  class it targets).
* dual-contrastive universum term: roles swapped; universum rows anchor
  and same-pseudo-label rows are positives, with the targeted class's
  known rows joining the denominator.

Log-sum-exp uses max subtraction. Because every loss runs through the
same code path, the known term with zero universum rows is bitwise
identical to supcon on the same inputs.

The gradient decomposition splits each anchor's own partial gradient
into an attractive positive term and two repulsive softmax-weighted
sums (over known rows and over matched universum rows). It is computed
from plainly exponentiated weights, independent of the stabilized path,
so reassembly against the core's anchor partial is a real check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatchError, InvalidArgumentError, NumericError

_UNIT_NORM_ATOL = 1e-3


@dataclass(frozen=True)
class LossConfig:
    """Temperature, universum balance, and the w/o-dual-term switch."""

    temperature: float = 0.1
    gamma: float = 1.0
    include_universum_term: bool = True

    def __post_init__(self):
        if self.temperature <= 0:
            raise InvalidArgumentError("temperature must be > 0")
        if self.gamma < 0:
            raise InvalidArgumentError("gamma must be >= 0")


@dataclass(frozen=True)
class LossResult:
    """Loss value and analytic gradients.

    grad_z is d(loss)/d(known embedding); grad_u is d(loss)/d(universum
    embedding) and is None when no universum rows were involved.
    per_anchor holds each anchor's term (0 for skipped anchors) and is
    None for combined losses whose anchors span two sets.
    """

    value: float
    grad_z: np.ndarray
    grad_u: np.ndarray | None
    skipped_anchors: int
    per_anchor: np.ndarray | None


@dataclass(frozen=True)
class GradientDecomposition:
    """Per-anchor three-part split of the anchor-side partial gradient.

    pos_term[i] is the mean of anchor i's positive embeddings
    (attractive); g_nk[i] and g_tau[i] are the softmax-weighted sums
    over the other known embeddings and the matched universum
    embeddings, stored with the repulsive sign folded in. For every
    anchor, -(1/tau) * (pos_term + g_nk + g_tau) reconstructs
    anchor_partial, the derivative of the anchor's own term with
    respect to its embedding (the total gradient adds the contributions
    an embedding receives from other anchors' terms).

    known_exp[i, k] = exp(z_i.z_k/tau) for k != i (0 on the diagonal);
    tau_exp[i, j] = exp(z_i.u_j/tau) for matched universum rows (0
    elsewhere); normalizer[i] is exactly their row sum. These are
    computed without stabilization, on purpose: reassembly then checks
    the stabilized path against independent arithmetic.
    """

    pos_term: np.ndarray
    g_nk: np.ndarray
    g_tau: np.ndarray
    known_exp: np.ndarray
    tau_exp: np.ndarray
    normalizer: np.ndarray
    anchor_partial: np.ndarray
    positive_mask: np.ndarray
    valid: np.ndarray
    temperature: float


@dataclass(frozen=True)
class _CoreResult:
    value: float
    per_anchor: np.ndarray
    grad_anchor: np.ndarray
    grad_cross: np.ndarray
    anchor_partial: np.ndarray
    pos_mask: np.ndarray
    match_mask: np.ndarray
    valid: np.ndarray
    skipped: int


def _check_rows(name: str, rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise InvalidArgumentError(f"{name} must be a 2-d matrix")
    if rows.shape[0]:
        norms = np.linalg.norm(rows, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_NORM_ATOL):
            raise InvalidArgumentError(f"{name} rows must be (approximately) unit-norm")
    return rows


def _contrastive_core(
    anchors: np.ndarray,
    anchor_labels: np.ndarray,
    cross: np.ndarray,
    cross_match: np.ndarray,
    tau: float,
) -> _CoreResult:
    """Shared loss/gradient evaluation; see the module docstring."""
    n = anchors.shape[0]
    if n < 2:
        raise InvalidArgumentError("need at least 2 anchor rows")

    sims_aa = (anchors @ anchors.T) / tau
    sims_ac = (anchors @ cross.T) / tau

    eye = np.eye(n, dtype=bool)
    pos_mask = (anchor_labels[:, None] == anchor_labels[None, :]) & ~eye
    pos_count = pos_mask.sum(axis=1)
    valid = pos_count > 0
    if not valid.any():
        raise DegenerateBatchError("every anchor lacks positives")

    match_mask = anchor_labels[:, None] == cross_match[None, :]
    combined = np.concatenate(
        [np.where(eye, -np.inf, sims_aa), np.where(match_mask, sims_ac, -np.inf)],
        axis=1,
    )
    mx = combined.max(axis=1)
    expv = np.exp(combined - mx[:, None])
    denom = expv.sum(axis=1)
    log_s = mx + np.log(denom)

    weights = expv / denom[:, None]
    weights[~valid] = 0.0
    w_aa = weights[:, :n]
    w_ac = weights[:, n:]

    pos_sim = np.where(pos_mask, sims_aa, 0.0).sum(axis=1)
    per_anchor = np.where(valid, log_s - pos_sim / np.maximum(pos_count, 1), 0.0)
    value = float(per_anchor.sum())
    if not np.isfinite(value):
        raise NumericError("contrastive loss is non-finite")

    pn = np.where(valid[:, None], pos_mask / np.maximum(pos_count, 1)[:, None], 0.0)
    wmp = w_aa - pn
    anchor_partial = (wmp @ anchors + w_ac @ cross) / tau
    grad_anchor = anchor_partial + (wmp.T @ anchors) / tau
    grad_cross = (w_ac.T @ anchors) / tau

    return _CoreResult(
        value=value,
        per_anchor=per_anchor,
        grad_anchor=grad_anchor,
        grad_cross=grad_cross,
        anchor_partial=anchor_partial,
        pos_mask=pos_mask,
        match_mask=match_mask,
        valid=valid,
        skipped=int(n - valid.sum()),
    )


def _infer_num_known(
    labels: np.ndarray, u_labels: np.ndarray, num_known: int | None
) -> int:
    """Recover K and validate that pseudo labels target classes in 1..K.

    When the universum batch is row-aligned with the anchors (the usual
    case) K must be the constant offset u_labels - labels; anything else
    is a broken bijection. Unaligned row counts are allowed for
    experiments as long as K is given explicitly or max(labels) covers
    every targeted class.
    """
    if num_known is None:
        if u_labels.shape == labels.shape and u_labels.size:
            diffs = u_labels - labels
            if not np.all(diffs == diffs[0]) or diffs[0] < labels.max():
                raise InvalidArgumentError(
                    "universum labels do not map to anchors by a constant class-count offset"
                )
            return int(diffs[0])
        num_known = int(labels.max())
    if u_labels.size:
        targets = u_labels - num_known
        if targets.min() < 1 or targets.max() > num_known:
            raise InvalidArgumentError(
                "universum labels must equal a known label plus the class count"
            )
    return num_known


def supcon_loss_grad(z: np.ndarray, labels, cfg: LossConfig) -> LossResult:
    """Supervised contrastive loss summed over anchors, with gradient."""
    z = _check_rows("z", z)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise InvalidArgumentError("labels must align with embedding rows")
    core = _contrastive_core(
        z, labels, np.zeros((0, z.shape[1])), np.zeros(0, dtype=np.int64), cfg.temperature
    )
    return LossResult(core.value, core.grad_anchor, None, core.skipped, core.per_anchor)


def _check_pair(z, labels, u, u_labels):
    z = _check_rows("z", z)
    u = _check_rows("u", u)
    if z.shape[0] and u.shape[0] and z.shape[1] != u.shape[1]:
        raise InvalidArgumentError("z and u must share the embedding dimension")
    labels = np.asarray(labels, dtype=np.int64)
    u_labels = np.asarray(u_labels, dtype=np.int64)
    if labels.shape != (z.shape[0],) or u_labels.shape != (u.shape[0],):
        raise InvalidArgumentError("labels must align with embedding rows")
    return z, labels, u, u_labels


def dc_known_loss_grad(
    z: np.ndarray,
    labels,
    u: np.ndarray,
    u_labels,
    cfg: LossConfig,
    num_known: int | None = None,
) -> tuple[LossResult, GradientDecomposition]:
    """Known-anchor dual-contrastive term with its gradient decomposition.

    Anchors and positives are the known embeddings exactly as in supcon;
    each anchor's denominator additionally sums over the universum rows
    targeting the anchor's class. With zero universum rows the result is
    bitwise identical to supcon_loss_grad.
    """
    z, labels, u, u_labels = _check_pair(z, labels, u, u_labels)
    k = _infer_num_known(labels, u_labels, num_known)

    core = _contrastive_core(z, labels, u, u_labels - k, cfg.temperature)
    decomp = _decompose(z, u, core, cfg.temperature)
    result = LossResult(
        core.value, core.grad_anchor, core.grad_cross, core.skipped, core.per_anchor
    )
    return result, decomp


def dc_universum_loss_grad(
    u: np.ndarray,
    u_labels,
    z: np.ndarray,
    labels,
    cfg: LossConfig,
    num_known: int | None = None,
) -> LossResult:
    """Universum-anchor dual term: the known-anchor term with roles swapped.

    Universum rows anchor; positives are other rows with the same pseudo
    label; the denominator spans the other universum rows plus the known
    rows of the anchor's targeted class.
    """
    z, labels, u, u_labels = _check_pair(z, labels, u, u_labels)
    k = _infer_num_known(labels, u_labels, num_known)

    core = _contrastive_core(u, u_labels, z, labels + k, cfg.temperature)
    return LossResult(
        core.value, core.grad_cross, core.grad_anchor, core.skipped, core.per_anchor
    )


def dc_total_loss_grad(
    z: np.ndarray,
    labels,
    u: np.ndarray,
    u_labels,
    cfg: LossConfig,
    num_known: int | None = None,
) -> LossResult:
    """Combined loss: known term plus gamma times the universum term.

    With include_universum_term off only the known term is evaluated
    (universum rows still receive gradient through its denominators).
    """
    known, _ = dc_known_loss_grad(z, labels, u, u_labels, cfg, num_known)
    if not cfg.include_universum_term:
        return known
    dual = dc_universum_loss_grad(u, u_labels, z, labels, cfg, num_known)
    return LossResult(
        value=known.value + cfg.gamma * dual.value,
        grad_z=known.grad_z + cfg.gamma * dual.grad_z,
        grad_u=known.grad_u + cfg.gamma * dual.grad_u,
        skipped_anchors=known.skipped_anchors + dual.skipped_anchors,
        per_anchor=None,
    )


def _decompose(
    z: np.ndarray, u: np.ndarray, core: _CoreResult, tau: float
) -> GradientDecomposition:
    """Three-part split of each anchor's own partial gradient.

    Built from plain (unstabilized) exponentials so that reassembly
    against core.anchor_partial crosses two arithmetic paths.
    """
    known_exp = np.exp((z @ z.T) / tau)
    np.fill_diagonal(known_exp, 0.0)
    tau_exp = np.where(core.match_mask, np.exp((z @ u.T) / tau), 0.0)
    normalizer = known_exp.sum(axis=1) + tau_exp.sum(axis=1)

    pos_count = core.pos_mask.sum(axis=1)
    pn = np.where(
        core.valid[:, None], core.pos_mask / np.maximum(pos_count, 1)[:, None], 0.0
    )
    pos_term = pn @ z
    g_nk = -(known_exp / normalizer[:, None]) @ z
    g_tau = -(tau_exp / normalizer[:, None]) @ u
    g_nk[~core.valid] = 0.0
    g_tau[~core.valid] = 0.0

    return GradientDecomposition(
        pos_term=pos_term,
        g_nk=g_nk,
        g_tau=g_tau,
        known_exp=known_exp,
        tau_exp=tau_exp,
        normalizer=normalizer,
        anchor_partial=core.anchor_partial,
        positive_mask=core.pos_mask,
        valid=core.valid,
        temperature=tau,
    )


def reassemble_anchor_partial(decomp: GradientDecomposition) -> np.ndarray:
    """-(1/tau)(pos_term + g_nk + g_tau); should match anchor_partial."""
    return -(decomp.pos_term + decomp.g_nk + decomp.g_tau) / decomp.temperature


def hard_negative_weights(
    decomp: GradientDecomposition,
) -> tuple[np.ndarray, np.ndarray]:
    """Normalized repulsion weights per anchor.

    Returns (known_weights, tau_weights): known_weights[i, k] is the
    share exp(z_i.z_k/tau)/S_i each other known row receives of anchor
    i's repulsive gradient, tau_weights[i, j] the share of each matched
    universum row. Rows sum to 1 across both matrices together, and a
    row's weight grows strictly with its similarity to the anchor, so
    harder negatives dominate.
    """
    s = decomp.normalizer[:, None]
    return decomp.known_exp / s, decomp.tau_exp / s


def weight_table_csv(decomp: GradientDecomposition, path) -> None:
    """Dump per-anchor repulsion weights for offline inspection.

    Columns: anchor row, partner kind (known/universum), partner row,
    weight, and whether the partner shares the anchor's label.
    """
    known_w, tau_w = hard_negative_weights(decomp)
    n, m = tau_w.shape
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["anchor", "kind", "partner", "weight", "is_positive"])
        for i in range(n):
            for k in range(n):
                if k == i:
                    continue
                writer.writerow(
                    [i, "known", k, repr(float(known_w[i, k])), int(decomp.positive_mask[i, k])]
                )
            for j in range(m):
                if decomp.tau_exp[i, j] == 0.0:
                    continue
                writer.writerow([i, "universum", j, repr(float(tau_w[i, j])), 0])
