"""Deterministic 4-scale feature provider with cross-view position encoding.

Stands in for learned feature extractors: pyramids are box-downsampled
intensity plus gradient channels mixed by seeded linear layers, and the
attention/encoding blocks run with seeded pseudo-random weights.  Everything
is a pure function of (inputs, seed), so results are bit-reproducible.

Feature channel layout per scale: [intensity, grad_x, grad_y, mixed...].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraView, bilinear_resize, pixel_grid, relative_pose, warp_pixels
from .errors import InvalidConfig
from .sampling import DepthHypotheses

_NORM_EPS = 1e-6


@dataclass(frozen=True)
class FeatureConfig:
    """Dimension plan for the stand-in feature stack."""

    channels: tuple[int, int, int, int] = (16, 8, 8, 4)
    mono_channels: int = 3
    num_hypotheses: int = 8      # frustum depth planes at scale 0
    window: int = 8              # intra/inter attention window
    se_reduction: int = 4
    cam_hidden: int = 32
    add_pe_to_values: bool = False

    def __post_init__(self):
        if len(self.channels) != 4 or any(c < 4 for c in self.channels):
            raise InvalidConfig(f"need 4 channel counts >= 4, got {self.channels}")
        if self.channels[0] % self.se_reduction:
            raise InvalidConfig("scale-0 channels must divide by se_reduction")
        if self.num_hypotheses < 1 or self.window < 1:
            raise InvalidConfig("num_hypotheses and window must be positive")


@dataclass(eq=False)
class FeaturePyramid:
    """Four maps at H/8, H/4, H/2, H (scales 0..3), channel-first."""

    maps: list[np.ndarray]

    def __post_init__(self):
        if len(self.maps) != 4:
            raise InvalidConfig(f"expected 4 scales, got {len(self.maps)}")
        h0, w0 = self.maps[0].shape[1:]
        for s, fmap in enumerate(self.maps):
            if fmap.ndim != 3:
                raise InvalidConfig("feature maps must be (C, H, W)")
            if fmap.shape[1:] != (h0 * 2**s, w0 * 2**s):
                raise InvalidConfig("pyramid resolutions must form a dyadic chain")
            if not np.isfinite(fmap).all():
                raise InvalidConfig(f"non-finite features at scale {s}")

    @property
    def resolutions(self):
        return [m.shape[1:] for m in self.maps]


@dataclass(eq=False)
class SeededWeights:
    """All stand-in weights, regenerated bit-identically from (seed, config)."""

    seed: int
    config: FeatureConfig
    tensors: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    @classmethod
    def create(cls, seed: int, config: FeatureConfig) -> "SeededWeights":
        rng = np.random.default_rng(seed)
        t: dict[str, np.ndarray] = {}

        def draw(name, out_dim, in_dim):
            t[name] = rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)

        c0 = config.channels[0]
        for s, c in enumerate(config.channels):
            draw(f"mixer_{s}", c - 3, 3)
        draw("mono_proj", c0, config.mono_channels)
        draw("compress", c0, c0 * config.num_hypotheses)
        draw("cam_mlp1", config.cam_hidden, 16)
        draw("cam_mlp2", c0, config.cam_hidden)
        draw("se1", c0 // config.se_reduction, c0)
        draw("se2", c0, c0 // config.se_reduction)
        draw("cvpe_out", c0, c0)
        for blk in ("intra", "inter"):
            for mat in ("q", "k", "v"):
                draw(f"attn_{blk}_{mat}", c0, c0)
        for s in range(3):
            draw(f"prop_{s}", config.channels[s + 1], config.channels[s])
        return cls(seed=seed, config=config, tensors=t)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]


def _mix(matrix: np.ndarray, fmap: np.ndarray) -> np.ndarray:
    """Apply a (C_out, C_in) matrix channel-wise to a (C_in, H, W) map."""
    return np.einsum("oc,chw->ohw", matrix, fmap)


def _box_downsample(image: np.ndarray, factor: int) -> np.ndarray:
    h, w = image.shape
    return image.reshape(h // factor, factor, w // factor, factor).mean(axis=(1, 3))


def extract_pyramid(
    image: np.ndarray, config: FeatureConfig, weights: SeededWeights
) -> FeaturePyramid:
    """Four-scale features from one grayscale image.

    Each scale is the box-downsampled image, its x/y gradients, and seeded
    linear mixtures of those three base channels.  Image dimensions must be
    divisible by 8.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise InvalidConfig(f"expected a grayscale (H, W) image, got {img.shape}")
    h, w = img.shape
    if h % 8 or w % 8:
        raise InvalidConfig(f"image dimensions must divide by 8, got {(h, w)}")
    maps = []
    for s, factor in enumerate((8, 4, 2, 1)):
        down = _box_downsample(img, factor)
        gy, gx = np.gradient(down)
        base = np.stack([down, gx, gy])
        mixed = _mix(weights[f"mixer_{s}"], base)
        fmap = np.concatenate([base, mixed], axis=0)
        # standardise the intensity-derived channels so matching correlations
        # are contrast-invariant and not swamped by the DC term; gradient
        # channels keep their zero mean (constant image -> exactly zero)
        mean = fmap.mean(axis=(1, 2), keepdims=True)
        std = fmap.std(axis=(1, 2), keepdims=True)
        mean[1:3] = 0.0
        maps.append((fmap - mean) / (std + _NORM_EPS))
    return FeaturePyramid(maps)


def fuse_mono_feature(
    ref_enc: np.ndarray, mono: np.ndarray, weights: SeededWeights
) -> np.ndarray:
    """Add a projected, resized monocular feature onto the scale-0 reference map.

    The mono feature's channels are mapped by a seeded 1x1 projection and the
    result is bilinearly resized to ref_enc's resolution before the add; the
    whole operation is linear in both inputs.
    """
    if mono.shape[0] != weights.config.mono_channels:
        raise InvalidConfig(
            f"mono feature has {mono.shape[0]} channels, plan says {weights.config.mono_channels}"
        )
    projected = _mix(weights["mono_proj"], np.asarray(mono, dtype=float))
    resized = bilinear_resize(projected, ref_enc.shape[1:])
    return ref_enc + resized


def mono_feature_from_depth(mono_depth: np.ndarray) -> np.ndarray:
    """Stand-in monocular feature: normalised mono depth plus its gradients.

    Produced at quarter resolution so the channel/size adaptation in
    fuse_mono_feature is exercised.
    """
    h, w = mono_depth.shape
    small = bilinear_resize(np.asarray(mono_depth, dtype=float), (h // 4, w // 4))
    std = small.std()
    norm = (small - small.mean()) / (std + _NORM_EPS)
    gy, gx = np.gradient(norm)
    return np.stack([norm, gx, gy])


def _scatter_frustum(
    feat: np.ndarray,
    pose,
    k_from: np.ndarray,
    k_to: np.ndarray,
    depths: np.ndarray,
    out_hw: tuple[int, int],
) -> np.ndarray:
    """Forward-scatter `feat` onto hypothesis planes in the target frame.

    Nearest-pixel rounding, last-write-wins on collisions in row-major scan
    order of the input pixels.  Cells never written stay zero (including
    behind-camera warps).
    """
    c, h, w = feat.shape
    oh, ow = out_hw
    d = len(depths)
    u, v = pixel_grid(h, w)
    out = np.zeros((c, d, oh, ow))
    flat_feat = feat.reshape(c, -1)
    for i, depth in enumerate(depths):
        u2, v2, _, ok = warp_pixels(u, v, float(depth), pose, k_from, k_to)
        ui = np.rint(np.where(ok, u2, -1.0)).astype(int).ravel()
        vi = np.rint(np.where(ok, v2, -1.0)).astype(int).ravel()
        sel = (ui >= 0) & (ui < ow) & (vi >= 0) & (vi < oh) & ok.ravel()
        # fancy assignment applies in index order, so later (row-major) wins
        out[:, i, vi[sel], ui[sel]] = flat_feat[:, sel]
    return out


def _camera_embed(frustum: np.ndarray, cam_matrix: np.ndarray, weights: SeededWeights):
    """Compress a (C, D, H, W) frustum to (C, H, W) with camera conditioning.

    Linear depth-flatten -> per-channel normalisation -> ReLU, plus a
    per-channel embedding of the standardised flattened 4x4 matrix, gated by
    squeeze-excitation and finished with a seeded 1x1 projection.
    """
    c, d, h, w = frustum.shape
    x = (weights["compress"] @ frustum.reshape(c * d, h * w)).reshape(c, h, w)
    mean = x.mean(axis=(1, 2), keepdims=True)
    std = x.std(axis=(1, 2), keepdims=True)
    x = np.maximum((x - mean) / (std + _NORM_EPS), 0.0)

    vec = np.asarray(cam_matrix, dtype=float).ravel()
    vec = (vec - vec.mean()) / (vec.std() + _NORM_EPS)
    emb = weights["cam_mlp2"] @ np.maximum(weights["cam_mlp1"] @ vec, 0.0)
    x = x + emb[:, None, None]

    z = x.mean(axis=(1, 2))
    gate = 1.0 / (1.0 + np.exp(-(weights["se2"] @ np.maximum(weights["se1"] @ z, 0.0))))
    x = x * gate[:, None, None]
    return _mix(weights["cvpe_out"], x)


def build_cvpe(
    ref_feat: np.ndarray,
    src_feat: np.ndarray,
    ref_view: CameraView,
    src_view: CameraView,
    hypotheses: DepthHypotheses,
    weights: SeededWeights,
):
    """Cross-view position encodings for one (reference, source) pair.

    Source features are scattered into the reference frame over the shared
    scale-0 hypothesis planes (and symmetrically reference -> source); each
    frustum is compressed with the camera embedding of the view whose pixels
    were warped.  Returns (ref_side, src_side), both (C, H/8, W/8).
    """
    if not hypotheses.shared:
        raise InvalidConfig("CVPE expects the shared stage-0 hypothesis list")
    if len(hypotheses.values) != weights.config.num_hypotheses:
        raise InvalidConfig(
            f"{len(hypotheses.values)} hypotheses but weight plan expects "
            f"{weights.config.num_hypotheses}"
        )
    scale = ref_feat.shape[1] / ref_view.height
    k_ref = ref_view.scaled(scale).intrinsics
    k_src = src_view.scaled(scale).intrinsics
    pose_sr = relative_pose(src_view, ref_view)

    frustum_ref = _scatter_frustum(
        src_feat, pose_sr, k_src, k_ref, hypotheses.values, ref_feat.shape[1:]
    )
    frustum_src = _scatter_frustum(
        ref_feat, pose_sr.inverse(), k_ref, k_src, hypotheses.values, src_feat.shape[1:]
    )
    ref_side = _camera_embed(frustum_ref, src_view.image_to_world(), weights)
    src_side = _camera_embed(frustum_src, ref_view.image_to_world(), weights)
    return ref_side, src_side


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def window_attention(query: np.ndarray, key: np.ndarray, value: np.ndarray, window: int):
    """Single-head attention inside aligned windows of up to `window`x`window`.

    query/key/value are (C, H, W) with matching resolutions; queries in each
    window attend over the co-located key/value window.  Returns (out,
    attention matrices) with each attention row summing to 1.
    """
    c, h, w = query.shape
    out = np.zeros_like(query)
    mats = []
    for y0 in range(0, h, window):
        for x0 in range(0, w, window):
            ys, xs = slice(y0, min(y0 + window, h)), slice(x0, min(x0 + window, w))
            q = query[:, ys, xs].reshape(c, -1).T
            k = key[:, ys, xs].reshape(c, -1).T
            v = value[:, ys, xs].reshape(c, -1).T
            attn = _softmax_rows(q @ k.T / np.sqrt(c))
            blk = (attn @ v).T
            out[:, ys, xs] = blk.reshape(c, ys.stop - ys.start, xs.stop - xs.start)
            mats.append(attn)
    return out, mats


def _attention_block(x, context, pe_x, pe_ctx, weights, block, config):
    wq, wk, wv = (weights[f"attn_{block}_{m}"] for m in ("q", "k", "v"))
    val_in = context + pe_ctx if config.add_pe_to_values else context
    out, _ = window_attention(
        _mix(wq, x + pe_x), _mix(wk, context + pe_ctx), _mix(wv, val_in), config.window
    )
    return x + out


def enhance_features(
    ref_pyr: FeaturePyramid,
    src_pyrs: list[FeaturePyramid],
    cvpes: list[tuple[np.ndarray, np.ndarray]] | None,
    weights: SeededWeights,
) -> list[FeaturePyramid]:
    """Attention-enhanced source pyramids.

    At scale 0 each source runs windowed intra-view self-attention followed
    by inter-view cross-attention against the reference (position encodings
    added to queries/keys); the result then cascades up the pyramid via
    seeded projections and bilinear upsampling.  `cvpes` holds one
    (ref_side, src_side) pair per source, or None for zero encodings.
    """
    config = weights.config
    ref0 = ref_pyr.maps[0]
    zero = np.zeros_like(ref0)
    enhanced = []
    for n, pyr in enumerate(src_pyrs):
        pe_ref, pe_src = cvpes[n] if cvpes is not None else (zero, zero)
        x = pyr.maps[0]
        x = _attention_block(x, x, pe_src, pe_src, weights, "intra", config)
        x = _attention_block(x, ref0, pe_src, pe_ref, weights, "inter", config)
        enhanced.append(propagate_up([x] + list(pyr.maps[1:]), weights))
    return enhanced


def propagate_up(maps: list[np.ndarray], weights: SeededWeights) -> FeaturePyramid:
    """Cascade scale-0 content upward: project, upsample, add to next scale."""
    out = [maps[0]]
    for s in range(3):
        up = bilinear_resize(_mix(weights[f"prop_{s}"], out[s]), maps[s + 1].shape[1:])
        out.append(maps[s + 1] + up)
    return FeaturePyramid(out)
