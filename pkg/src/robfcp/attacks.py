"""Forged client reports used to stress the calibration pipeline.

A malicious client can put anything in its characterization vector; only its
sample count ``n`` is trusted (taken by the server from enrollment metadata).
Four forgeries are implemented, named by the failure they induce:

* ``coverage``  — point mass in the lowest bin.  Pulls the pooled rank down,
  deflating the threshold and the achieved coverage.
* ``efficiency`` — point mass in the highest bin.  Pushes the threshold to its
  maximum so prediction sets contain every label.
* ``gaussian``  — the client's real scores plus clipped N(0, std^2) noise,
  re-histogrammed: a blunter distortion in either direction.
* ``mimic``     — an exact copy of a uniformly chosen benign report's vector,
  indistinguishable by any report-space screen.

``direction_override`` pins the point-mass bin explicitly (``mass_low`` /
``mass_high``) for ablations where the direction, not the named effect, is
what matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .sketch import ClientReport, histogram_characterize, validate_edges

ATTACK_KINDS = ("none", "coverage", "efficiency", "gaussian", "mimic")
DIRECTION_OVERRIDES = ("mass_low", "mass_high")


@dataclass(frozen=True)
class AttackSpec:
    """What a malicious client reports."""

    kind: str = "none"
    gaussian_std: float = 0.5
    direction_override: str | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise InputError(f"unknown attack kind {self.kind!r}, expected one of {ATTACK_KINDS}")
        if not self.gaussian_std > 0.0:
            raise InputError(f"gaussian_std must be positive, got {self.gaussian_std}")
        if self.direction_override is not None and self.direction_override not in DIRECTION_OVERRIDES:
            raise InputError(
                f"direction_override must be one of {DIRECTION_OVERRIDES}, got {self.direction_override!r}")


def _point_mass(num_bins: int, bin_index: int) -> np.ndarray:
    v = np.zeros(num_bins)
    v[bin_index] = 1.0
    return v


def apply_attack(spec: AttackSpec, client_id: int, n: int, edges, rng: np.random.Generator,
                 benign_scores=None, benign_reports=None) -> ClientReport:
    """Produce the report a malicious client submits.

    ``benign_scores`` is the attacker's own raw score set (required for
    ``gaussian`` and ``none``); ``benign_reports`` is the list of honest
    reports visible on the wire (required for ``mimic``).  ``n`` is the trusted
    sample count and is carried into the report unchanged.
    """
    e = validate_edges(edges)
    num_bins = e.size - 1

    if spec.kind == "none":
        if benign_scores is None or len(np.atleast_1d(benign_scores)) == 0:
            raise InputError("an honest report requires the client's own scores")
        return ClientReport(client_id=client_id, n=n,
                            v=histogram_characterize(benign_scores, e), edges=e)

    if spec.kind in ("coverage", "efficiency"):
        low = spec.direction_override == "mass_low" if spec.direction_override \
            else spec.kind == "coverage"
        v = _point_mass(num_bins, 0 if low else num_bins - 1)
        return ClientReport(client_id=client_id, n=n, v=v, edges=e)

    if spec.kind == "gaussian":
        base = np.asarray(benign_scores, dtype=float) if benign_scores is not None else None
        if base is None or base.size == 0:
            raise InputError("the gaussian attack requires a non-empty base score set")
        noisy = np.clip(base + rng.normal(0.0, spec.gaussian_std, size=base.size), 0.0, 1.0)
        return ClientReport(client_id=client_id, n=n,
                            v=histogram_characterize(noisy, e), edges=e)

    # mimic
    reports = list(benign_reports) if benign_reports is not None else []
    if not reports:
        raise InputError("the mimic attack requires at least one benign report to copy")
    source = reports[int(rng.integers(len(reports)))]
    if not np.array_equal(source.edges, e):
        raise InputError("mimic source report uses different bin edges")
    return ClientReport(client_id=client_id, n=n, v=source.v.copy(), edges=e)
