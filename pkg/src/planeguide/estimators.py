"""Estimator-style wrapper around plane localization and guidance.

Follows the familiar fit/predict/transform contract: construction records
hyperparameters verbatim, `fit` binds the atlas volume and standard-plane
definitions, and the other methods refuse to run before `fit`.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .alignment import ContrastiveConfig, OptimizerConfig, ScanSequence
from .geometry import GuidanceInstruction, StandardPlaneDef, transform_to_sp
from .registration import (
    RegistrationConfig,
    RegistrationResult,
    register_scan,
    register_slice,
)
from .volume import Volume


class PlaneLocalizer(BaseEstimator):
    """Localize 2D grayscale images as oriented planes in a fitted atlas.

    `predict` registers each image independently and returns one
    registration result per input; `predict_scan` tracks a whole sequence
    with frame-to-frame warm starts and contrastive refinement; `transform`
    maps registered poses to rigid moves toward the target standard plane;
    `score` averages the registration correlation over a batch.

    Hyperparameters mirror RegistrationConfig and are validated on `fit`,
    not at construction, so `get_params`/`set_params` round-trip freely.
    """

    def __init__(
        self,
        orientation_samples: int = 256,
        translation_grid: int = 5,
        translation_radius: float = 0.3,
        top_k: int = 8,
        max_refine_evals: int = 500,
        working_size: int = 28,
        final_size: int = 56,
        refine_orientations: int = 64,
        target_sp: str = "tvp",
    ):
        self.orientation_samples = orientation_samples
        self.translation_grid = translation_grid
        self.translation_radius = translation_radius
        self.top_k = top_k
        self.max_refine_evals = max_refine_evals
        self.working_size = working_size
        self.final_size = final_size
        self.refine_orientations = refine_orientations
        self.target_sp = target_sp

    def _config(self) -> RegistrationConfig:
        return RegistrationConfig(
            orientation_samples=self.orientation_samples,
            translation_grid=self.translation_grid,
            translation_radius=self.translation_radius,
            top_k=self.top_k,
            max_refine_evals=self.max_refine_evals,
            working_size=self.working_size,
            final_size=self.final_size,
            refine_orientations=self.refine_orientations,
        )

    def fit(self, volume: Volume, standard_planes=None) -> "PlaneLocalizer":
        """Bind the atlas volume and optional standard-plane definitions."""
        if not isinstance(volume, Volume):
            raise TypeError(f"volume must be a Volume, got {type(volume).__name__}")
        planes = tuple(standard_planes) if standard_planes is not None else ()
        for sp in planes:
            if not isinstance(sp, StandardPlaneDef):
                raise TypeError(
                    f"standard_planes entries must be StandardPlaneDef, got {type(sp).__name__}"
                )
        self._config()
        self.volume_ = volume
        self.standard_planes_ = planes
        return self

    def _require_fitted(self):
        if not hasattr(self, "volume_"):
            raise NotFittedError("this PlaneLocalizer is not fitted; call fit first")

    def _target_plane(self) -> StandardPlaneDef:
        for sp in self.standard_planes_:
            if sp.sp_id == self.target_sp:
                return sp
        known = sorted(sp.sp_id for sp in self.standard_planes_)
        raise ValueError(f"target_sp {self.target_sp!r} not among fitted planes {known}")

    def predict(self, images) -> list[RegistrationResult]:
        """Register each image independently against the fitted volume."""
        self._require_fitted()
        cfg = self._config()
        return [register_slice(self.volume_, img, cfg) for img in images]

    def predict_scan(
        self,
        scan: ScanSequence,
        align_cfg: ContrastiveConfig = ContrastiveConfig(),
        opt_cfg: OptimizerConfig = OptimizerConfig(),
    ) -> list[RegistrationResult]:
        """Track a scan sequence frame to frame, then refine poses jointly."""
        self._require_fitted()
        return register_scan(
            self.volume_, scan, self._target_plane(), self._config(), align_cfg, opt_cfg
        )

    def transform(self, images) -> list[GuidanceInstruction]:
        """Register images and express each pose as a move onto the target plane."""
        self._require_fitted()
        sp = self._target_plane()
        return [transform_to_sp(res.pose, sp) for res in self.predict(images)]

    def score(self, images) -> float:
        """Mean registration correlation over a batch of images."""
        results = self.predict(images)
        if not results:
            raise ValueError("score requires at least one image")
        return float(np.mean([r.score for r in results]))
