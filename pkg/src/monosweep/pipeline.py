"""End-to-end coarse-to-fine depth estimation and scene-level orchestration.

Per reference view the stages run: features (with optional mono fusion and
cross-view position encodings) -> hypothesis init/refine -> mono alignment
and edge-guided candidate replacement -> cost volume -> smoothing -> softmax
-> winner-take-all depth.  Every view takes a turn as reference; the per-view
depths are then fused into a point cloud and scored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import io as msio
from .alignment import (
    apply_alignment,
    fit_scale_shift,
    initial_scale,
    select_confident,
)
from .camera import bilinear_resize
from .config import PipelineConfig
from .cost import build_cost_volume, expected_depth, regularize, to_probability, wta_depth
from .errors import DegenerateFit, EmptyCloud, EmptyMask, MonosweepError
from .features import (
    FeatureConfig,
    SeededWeights,
    build_cvpe,
    enhance_features,
    extract_pyramid,
    fuse_mono_feature,
    mono_feature_from_depth,
    propagate_up,
)
from .fusion import fuse_point_cloud, write_ply
from .losses import cross_entropy_loss, overall_loss, relative_consistency_loss, sample_pairs
from .metrics import cloud_metrics, depth_metrics, write_report
from .sampling import dynamic_replace, edge_mask, init_hypotheses, refine_hypotheses
from .synth import MonoOracleParams, SyntheticScene, load_scene, make_mono_depth


class PipelineError(MonosweepError):
    """A module error with stage/view context attached."""


@dataclass(eq=False)
class StageOutput:
    stage: int
    depth: np.ndarray
    confidence: np.ndarray
    hypotheses: object
    prob_summary: dict
    ce_loss: float | None = None


@dataclass(eq=False)
class ViewResult:
    view_index: int
    stages: list[StageOutput]
    expected_final: np.ndarray
    rc_loss: float | None = None
    overall: float | None = None

    @property
    def depth(self) -> np.ndarray:
        return self.stages[-1].depth

    @property
    def confidence(self) -> np.ndarray:
        return self.stages[-1].confidence


def feature_config(config: PipelineConfig) -> FeatureConfig:
    return FeatureConfig(
        channels=tuple(config.channels),
        num_hypotheses=config.stage_counts[0],
        window=config.window,
    )


def _resize_mask(mask: np.ndarray, res) -> np.ndarray:
    # a resized pixel is valid only if its whole interpolation footprint was
    return bilinear_resize(mask.astype(float), res) > 0.999


def _aligned_mono(stage, mono_s, mask_s, prev_depth_up, prev_conf_up, depth_range, config):
    """Metric mono depth for candidate replacement, or None when degenerate."""
    try:
        if stage == 0:
            return initial_scale(mono_s, depth_range)
        coords = select_confident(prev_conf_up, config.keep_fraction, valid=mask_s)
        params = fit_scale_shift(prev_depth_up, mono_s, coords)
        return apply_alignment(mono_s, params, depth_range)
    except (DegenerateFit, EmptyMask):
        return None


def estimate_depth(
    scene: SyntheticScene,
    monos: list[np.ndarray],
    ref_idx: int,
    config: PipelineConfig,
    weights: SeededWeights | None = None,
) -> ViewResult:
    """Coarse-to-fine depth for one reference view against all others."""
    try:
        return _estimate_depth(scene, monos, ref_idx, config, weights)
    except MonosweepError as exc:
        raise PipelineError(f"view {ref_idx}: {exc}") from exc


def _estimate_depth(scene, monos, ref_idx, config, weights):
    ref_view = scene.views[ref_idx]
    src_indices = [i for i in range(scene.n_views) if i != ref_idx]
    src_views = [scene.views[i] for i in src_indices]
    h, w = scene.images[ref_idx].shape
    depth_range = (ref_view.depth_min, ref_view.depth_max)

    if weights is None:
        weights = SeededWeights.create(config.seed, feature_config(config))

    ref_maps = list(extract_pyramid(scene.images[ref_idx], weights.config, weights).maps)
    if config.enable_mono_fusion:
        mono_feat = mono_feature_from_depth(monos[ref_idx])
        ref_maps[0] = fuse_mono_feature(ref_maps[0], mono_feat, weights)
        ref_pyr = propagate_up(ref_maps, weights)
    else:
        from .features import FeaturePyramid

        ref_pyr = FeaturePyramid(ref_maps)

    src_pyrs = [extract_pyramid(scene.images[i], weights.config, weights) for i in src_indices]
    hyp0 = init_hypotheses(depth_range, config.stage_counts[0])
    cvpes = None
    if config.enable_cvpe:
        cvpes = [
            build_cvpe(ref_pyr.maps[0], pyr.maps[0], ref_view, view, hyp0, weights)
            for pyr, view in zip(src_pyrs, src_views)
        ]
    enhanced = enhance_features(ref_pyr, src_pyrs, cvpes, weights)

    mono_ref = monos[ref_idx]
    gt_ref = scene.gt_depths[ref_idx]
    mask_ref = scene.valid_masks[ref_idx]
    has_gt = bool(mask_ref.any()) and bool((gt_ref[mask_ref] > 0).all())

    stages: list[StageOutput] = []
    hyp = hyp0
    prev_depth = prev_conf = None
    prob = None
    for s in range(4):
        res = (h // 2 ** (3 - s), w // 2 ** (3 - s))
        mono_s = bilinear_resize(mono_ref, res)
        mask_s = _resize_mask(mask_ref, res)

        if s == 0:
            hyp = hyp0
            prev_depth_up = prev_conf_up = None
        else:
            prev_depth_up = bilinear_resize(prev_depth, res)
            prev_conf_up = bilinear_resize(prev_conf, res)
            hyp = refine_hypotheses(
                prev_depth_up, hyp, config.stage_counts[s], config.interval_multipliers[s]
            )

        if config.enable_dynamic_sampling:
            aligned = _aligned_mono(
                s, mono_s, mask_s, prev_depth_up, prev_conf_up, depth_range, config
            )
            if aligned is not None:
                edges = edge_mask(scene.images[ref_idx], config.lambda_edge, res)
                hyp = dynamic_replace(hyp, aligned, edges)

        vol = build_cost_volume(
            ref_pyr.maps[s],
            [pyr.maps[s] for pyr in enhanced],
            ref_view,
            src_views,
            hyp,
            config.group_counts[s],
        )
        scores = regularize(vol, tuple(config.smoothing_radii))
        prob = to_probability(scores, vol.valid_pixels)
        depth, conf = wta_depth(prob, hyp)

        ce = None
        if has_gt:
            gt_s = bilinear_resize(gt_ref, res)
            ce_mask = mask_s & (gt_s >= depth_range[0]) & (gt_s <= depth_range[1])
            if ce_mask.any():
                ce = cross_entropy_loss(prob, gt_s, hyp, ce_mask)
        stages.append(
            StageOutput(
                stage=s,
                depth=depth,
                confidence=conf,
                hypotheses=hyp,
                prob_summary={
                    "mean_confidence": float(conf.mean()),
                    "valid_fraction": float(vol.valid_pixels.mean()),
                },
                ce_loss=ce,
            )
        )
        prev_depth, prev_conf = depth, conf

    d_exp = expected_depth(prob, hyp)
    rc = None
    overall = None
    mask_final = _resize_mask(mask_ref, (h, w))
    if mask_final.sum() >= 2 and config.pair_count > 0:
        pairs = sample_pairs(
            mask_final, config.pair_count, seed=config.seed + ref_idx, mono=mono_ref
        )
        rc = relative_consistency_loss(d_exp, mono_ref, pairs)
    ce_terms = [st.ce_loss for st in stages]
    if rc is not None and all(c is not None for c in ce_terms):
        overall = overall_loss(ce_terms, rc, config.gamma)
    return ViewResult(
        view_index=ref_idx,
        stages=stages,
        expected_final=d_exp,
        rc_loss=rc,
        overall=overall,
    )


@dataclass(eq=False)
class RunResult:
    views: list[ViewResult]
    cloud: object | None
    report: dict = field(default_factory=dict)


def scene_monos(scene: SyntheticScene, config: PipelineConfig) -> list[np.ndarray]:
    """Synthetic mono-oracle depths for every view (requires gt)."""
    params = MonoOracleParams(
        a_true=config.mono_a,
        b_true=config.mono_b,
        noise_sigma=config.mono_noise,
        seed=config.seed,
    )
    return [
        make_mono_depth(gt, params, mask)
        for gt, mask in zip(scene.gt_depths, scene.valid_masks)
    ]


def gt_cloud(scene: SyntheticScene):
    """Back-projected ground-truth depths of every view (the true surface
    sampled along the pipeline's own rays)."""
    from .camera import pixel_grid
    from .fusion import PointCloud

    pts = []
    for view, depth, mask in zip(scene.views, scene.gt_depths, scene.valid_masks):
        u, v = pixel_grid(view.height, view.width)
        rays = np.linalg.inv(view.intrinsics) @ np.stack(
            [u[mask], v[mask], np.ones(int(mask.sum()))], axis=0
        )
        cam = rays * depth[mask][None]
        world = view.rotation.T @ (cam - view.translation[:, None])
        pts.append(world.T)
    return PointCloud(points=np.concatenate(pts))


def run_pipeline(config: PipelineConfig, scene=None, monos=None) -> RunResult:
    """Depth for every view, fusion, metrics, and artifact emission.

    The scene comes from config.scene (a manifest path) unless passed in;
    mono maps come from the manifest or the synthetic oracle.  Writes PFM
    depth/confidence maps, a PLY cloud and a key=value report under
    config.out_dir.
    """
    if scene is None:
        if not config.scene:
            raise PipelineError("no scene: set config.scene to a manifest path")
        scene, monos = load_scene(config.scene)
    if monos is None or any(m is None for m in monos):
        monos = scene_monos(scene, config)

    weights = SeededWeights.create(config.seed, feature_config(config))
    results = [
        estimate_depth(scene, monos, r, config, weights) for r in range(scene.n_views)
    ]

    os.makedirs(config.out_dir, exist_ok=True)
    report: dict = {"n_views": scene.n_views}
    for res in results:
        msio.write_pfm(os.path.join(config.out_dir, f"depth_{res.view_index}.pfm"), res.depth)
        msio.write_pfm(
            os.path.join(config.out_dir, f"conf_{res.view_index}.pfm"), res.confidence
        )

    cloud = None
    try:
        cloud = fuse_point_cloud(
            [r.depth for r in results],
            [r.confidence for r in results],
            scene.views,
            tiers=config.fusion_tiers,
            conf_min=config.conf_min,
            images=scene.images,
        )
        write_ply(cloud, os.path.join(config.out_dir, "cloud.ply"))
        report["cloud.points"] = len(cloud)
    except EmptyCloud:
        report["cloud.points"] = 0

    for res in results:
        i = res.view_index
        mask = scene.valid_masks[i]
        if mask.any() and (scene.gt_depths[i][mask] > 0).all():
            m = depth_metrics(res.depth, scene.gt_depths[i], mask)
            report[f"view_{i}.mae"] = m.mae
            report[f"view_{i}.e2"] = m.e2
            report[f"view_{i}.e4"] = m.e4
            report[f"view_{i}.e8"] = m.e8
        for st in res.stages:
            if st.ce_loss is not None:
                report[f"view_{i}.ce_{st.stage}"] = st.ce_loss
        if res.rc_loss is not None:
            report[f"view_{i}.rc"] = res.rc_loss
        if res.overall is not None:
            report[f"view_{i}.overall"] = res.overall

    if cloud is not None and any(m.any() for m in scene.valid_masks):
        truth = gt_cloud(scene)
        if len(truth):
            cm = cloud_metrics(cloud, truth)
            report["cloud.acc"] = cm.acc
            report["cloud.comp"] = cm.comp
            report["cloud.overall"] = cm.overall

    write_report(os.path.join(config.out_dir, "report.txt"), report)
    return RunResult(views=results, cloud=cloud, report=report)
