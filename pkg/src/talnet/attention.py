"""Spatial attention: per-attribute affine region heads and differentiable
region feature extraction via bilinear sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .nn import Conv2d, Linear, Module

def _logit(p):
    return float(np.log(p / (1.0 - p)))


def strip_prior(index, count):
    """Pre-squash offset placing head `index` of `count` at its vertical strip.

    Person attributes follow a head-to-foot layout, so each head starts at an
    equal-height horizontal band (ordered top to bottom, spanning the full
    width). The prior is only a starting point: the head's raw output is added
    on top, so regions remain free to move and rescale during training. A
    full-frame start instead leaves every head looking at the same global
    mean, and the gradient through the region coordinates is too weak to break
    that symmetry.
    """
    if count <= 1:
        return np.array([3.0, 3.0, 0.0, 0.0])
    s = 1.0 / count
    frac = float(np.clip(index / (count - 1.0), 0.02, 0.98))
    return np.array([_logit(s), 3.0, _logit(frac), 0.0])


@dataclass
class AffineParams:
    s_x: float
    s_y: float
    t_x: float
    t_y: float


@dataclass
class AttentionRegion:
    vertices: list  # four (x_s, y_s) points, images of the frame corners
    normalized_bounds: tuple  # (top, left, bottom, right) in [0,1]


def squash_raw(raw, H, W):
    """Map an unconstrained 4-vector to in-bounds affine params.

    s = sigma(raw_s); t_x = sigma(raw_t) * H * (1 - s_x) (and analogously for
    t_y with W), which pins the region inside [0,H] x [0,W] for any raw value.
    """
    s_x = 1.0 / (1.0 + np.exp(-raw[0]))
    s_y = 1.0 / (1.0 + np.exp(-raw[1]))
    t_x = 1.0 / (1.0 + np.exp(-raw[2])) * H * (1.0 - s_x)
    t_y = 1.0 / (1.0 + np.exp(-raw[3])) * W * (1.0 - s_y)
    return AffineParams(s_x=float(s_x), s_y=float(s_y), t_x=float(t_x), t_y=float(t_y))


def region_vertices(p, H, W):
    """Affine images of the four frame corners (x down the height axis)."""
    corners = [(0, 0), (H, 0), (0, W), (H, W)]
    verts = [(p.s_x * x + p.t_x, p.s_y * y + p.t_y) for x, y in corners]
    top, left = p.t_x / H, p.t_y / W
    bottom = (p.s_x * H + p.t_x) / H
    right = (p.s_y * W + p.t_y) / W
    return AttentionRegion(vertices=verts, normalized_bounds=(top, left, bottom, right))


class AttributeRegionHead(Module):
    """conv 5x5x32 -> conv 5x5x16 -> mean-pool to 4x2 -> FC 32 -> FC 4."""

    POOL_GRID = (4, 2)

    def __init__(self, in_channels=64, fc_hidden=32):
        self.conv1 = Conv2d(in_channels, 32, 5, pad=2)
        self.conv2 = Conv2d(32, 16, 5, pad=2)
        gh, gw = self.POOL_GRID
        self.fc1 = Linear(16 * gh * gw, fc_hidden)
        self.fc2 = Linear(fc_hidden, 4)
        # zero the final layer so the region starts exactly at its prior
        # offset instead of a random perturbation of it
        self.fc2.weight.init_spec = "zeros"

    def __call__(self, t_p):
        x = ag.relu(self.conv1(t_p))
        x = ag.relu(self.conv2(x))
        x = adaptive_mean_pool(x, self.POOL_GRID)
        B = x.shape[0]
        x = x.reshape((B, -1))
        x = ag.relu(self.fc1(x))
        return self.fc2(x)  # raw (B, 4), squashing happens in the block


def adaptive_mean_pool(x, grid):
    """Average (B,C,H,W) down to a fixed (gh, gw) grid; H,W must divide."""
    B, C, H, W = x.shape
    gh, gw = grid
    if H % gh or W % gw:
        raise ag.ShapeError("adaptive_mean_pool", x.shape, (gh, gw))
    x = x.reshape((B, C, gh, H // gh, gw, W // gw))
    return ag.tmean(ag.tmean(x, axis=5), axis=3)


class SpatialAttentionBlock(Module):
    """1x1x64 primitive conv plus one affine-region head per attribute.

    Regions are predicted in frame coordinates (H, W) per Eq. of the affine
    corner map, then converted to normalized bounds and sampled on the
    primitive feature map, which reconciles frame-space vertices with
    feature-space cropping.
    """

    def __init__(self, in_channels, n_attributes, d_v, frame_hw, fm_hw):
        self.primitive = Conv2d(in_channels, 64, 1)
        self.heads = [AttributeRegionHead(64) for _ in range(n_attributes)]
        self.offsets = [strip_prior(n, n_attributes) for n in range(n_attributes)]
        self.project = Linear(64, d_v)
        self.frame_hw = frame_hw
        self.fm_hw = fm_hw
        self.n_attributes = n_attributes

    def primitive_map(self, fm):
        return ag.relu(self.primitive(fm))

    def raw_affine(self, t_p, attribute_index):
        raw = self.heads[attribute_index](t_p)
        return raw + ag.Tensor(self.offsets[attribute_index].astype(t_p.dtype))

    def affine_tensors(self, raw):
        """Squashed (s_x, s_y, t_x, t_y) tensors, each (B,)."""
        H, W = self.frame_hw
        s_x = ag.sigmoid(raw[:, 0])
        s_y = ag.sigmoid(raw[:, 1])
        t_x = ag.sigmoid(raw[:, 2]) * float(H) * (ag.tensor(1.0) - s_x)
        t_y = ag.sigmoid(raw[:, 3]) * float(W) * (ag.tensor(1.0) - s_y)
        return s_x, s_y, t_x, t_y

    def region_feature(self, t_p, s_x, s_y, t_x, t_y):
        """Mean of bilinear samples over the region, projected to d_v.

        The sampling grid has the primitive map's own resolution, so a
        full-frame region reproduces exact cell values (and hence the global
        mean pool). Region extent is floored at one feature-map cell.
        """
        H, W = self.frame_hw
        Hm, Wm = t_p.shape[2], t_p.shape[3]
        B = t_p.shape[0]
        one = ag.constant(1.0, like=t_p)
        top = t_x * ((Hm - 1) / H)
        left = t_y * ((Wm - 1) / W)
        ext_r = ag.hinge(s_x * float(Hm - 1) - one) + one
        ext_c = ag.hinge(s_y * float(Wm - 1) - one) + one
        fr = np.linspace(0.0, 1.0, Hm).astype(t_p.dtype)  # fractions along the region
        fc = np.linspace(0.0, 1.0, Wm).astype(t_p.dtype)
        # rows (B, Hm), cols (B, Wm) -> full grid (B, Hm*Wm)
        rows = top.reshape((B, 1)) + ext_r.reshape((B, 1)) * ag.Tensor(fr[None, :])
        cols = left.reshape((B, 1)) + ext_c.reshape((B, 1)) * ag.Tensor(fc[None, :])
        grid_r = ag.reshape(ag.stack([rows] * Wm, axis=2), (B, Hm * Wm))
        grid_c = ag.reshape(ag.stack([cols] * Hm, axis=1), (B, Hm * Wm))
        samples = ag.grid_sample(t_p, grid_r, grid_c)  # (B, 64, Hm*Wm)
        pooled = ag.tmean(samples, axis=2)
        return self.project(pooled)

    def __call__(self, fm, use_attention=True):
        """fm: (B, Cf, Hm, Wm) per-frame maps -> (B, N, d_v) initial features.

        With use_attention=False every attribute sees the full-frame global
        mean (spatial-attention ablation).
        """
        t_p = self.primitive_map(fm)
        feats = []
        raws = []
        for n in range(self.n_attributes):
            if use_attention:
                raw = self.raw_affine(t_p, n)
                s_x, s_y, t_x, t_y = self.affine_tensors(raw)
                feats.append(self.region_feature(t_p, s_x, s_y, t_x, t_y))
                raws.append(raw)
            else:
                pooled = ag.tmean(ag.tmean(t_p, axis=3), axis=2)
                feats.append(self.project(pooled))
        out = ag.stack(feats, axis=1)  # (B, N, d_v)
        return out, raws

    def describe_regions(self, fm):
        """Per-attribute squashed affine params and regions (numpy, no grad)."""
        t_p = self.primitive_map(fm)
        H, W = self.frame_hw
        out = []
        for n in range(self.n_attributes):
            raw = self.raw_affine(t_p, n).data
            regions = []
            for b in range(raw.shape[0]):
                p = squash_raw(raw[b], H, W)
                regions.append((p, region_vertices(p, H, W)))
            out.append(regions)
        return out
