"""Two-stage SGD training loop, checkpointing, and ablation runner."""

from __future__ import annotations

import copy
import csv
import os
from dataclasses import replace

import numpy as np

from . import autograd as ag
from . import losses
from .config import config_dict
from .data import all_clips, pk_sample, random_erase, train_test_split
from .model import TALNet
from .nn import config_hash, save_checkpoint
from .retrieval import embed_sequences, evaluate, query_gallery_split


class DivergenceError(RuntimeError):
    pass


class SGD:
    """SGD with Nesterov momentum and L2 weight decay (decay added to the
    gradient). Update: v = mu*v + g; w -= lr * (g + mu*v)."""

    def __init__(self, params, lr, momentum=0.9, weight_decay=0.0,
                 max_grad_norm=0.0):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.max_grad_norm = max_grad_norm
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def _clip_scale(self):
        """Global-norm clipping factor; 1.0 when disabled or under the cap."""
        if not self.max_grad_norm:
            return 1.0
        total = 0.0
        for p in self.params:
            if p.tensor.grad is not None:
                total += float((p.tensor.grad ** 2).sum())
        norm = np.sqrt(total)
        return 1.0 if norm <= self.max_grad_norm else self.max_grad_norm / norm

    def step(self):
        scale = self._clip_scale()
        for p, v in zip(self.params, self.velocity):
            g = p.tensor.grad
            if g is None:
                continue
            g = g * scale
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v *= self.momentum
            v += g
            p.tensor.data = p.data - self.lr * (g + self.momentum * v)

    def zero_grad(self):
        for p in self.params:
            p.tensor.zero_grad()


def build_model(model_cfg, dataset, seed):
    cfg = replace(model_cfg,
                  num_classes=len(dataset.identities),
                  category_counts=tuple(dataset.schema.category_counts))
    model = TALNet(cfg).initialize(seed)
    return model


def batch_arrays(batch):
    frames = np.stack([c.frames for c in batch])
    ids = np.array([c.identity for c in batch])
    attrs = np.stack([c.attribute_labels for c in batch])
    return frames, ids, attrs


def compute_loss(model, frames, id_targets, attr_targets, tc, stage, rng,
                 tri_weight=1.0):
    """Forward + loss for one PK batch; id_targets are class indices.

    tri_weight scales the triplet terms during the warmup schedule (0 during
    CE-only warmup, ramping to 1 afterwards): running the hard-mining loss at
    full strength on unseparated features contracts them toward a single
    point before the classifiers can pull identities apart. The logged L_tri
    is always the unweighted value.
    """
    cfg = model.cfg
    out = model.forward_clips(frames, rng=rng, att=stage != "appearance-only")
    I, V = tc.batch_identities, tc.clips_per_identity
    l_app = l_att = None
    parts = {}
    if cfg.use_app:
        ide = None
        for lg in out["app_logits"]:
            term = losses.ce_label_smooth(lg, id_targets, tc.epsilon)
            ide = term if ide is None else ide + term
        if tri_weight > 0.0:
            tri = losses.triplet_batch_hard(out["app_global"], I, V, tc.margin)
            for p in out["app_parts"]:
                tri = tri + losses.triplet_batch_hard(p, I, V, tc.margin)
            parts["L_tri"] = tri.item()
            if tri_weight != 1.0:
                tri = ag.constant(float(tri_weight), like=tri) * tri
            l_app = tri + ide
        else:
            l_app = ide
            parts["L_tri"] = 0.0
        parts["L_ide"] = ide.item()
        parts["L_app"] = l_app.item()
    if cfg.use_att and stage != "appearance-only":
        l_att = losses.attribute_loss(out["attr_logits"], attr_targets, tc.epsilon)
        parts["L_att"] = l_att.item()
    loss = losses.total_loss(l_app, l_att, tc.lambda_total)
    parts["L"] = loss.item()
    return loss, parts


def _stage_params(model, stage):
    if stage == "appearance-only":
        keep = ("backbone", "appearance")
        return [p for n, p in model.named_parameters() if n.split(".")[0] in keep]
    return model.parameters()


def train(model_cfg, train_cfg, dataset, out_dir, log_name="loss_log.csv",
          checkpoint_every=0, quiet=True):
    """Two-stage training: stage 1 fits backbone + appearance branch (skipped
    when the appearance branch is ablated), stage 2 optimizes everything
    jointly. Emits a per-step loss CSV and a final checkpoint; aborts on a
    non-finite loss, keeping the last good checkpoint."""
    os.makedirs(out_dir, exist_ok=True)
    tc = train_cfg
    model = build_model(model_cfg, dataset, tc.seed)
    clips = all_clips(dataset, model.cfg.clip_len)
    id_map = {ident: k for k, ident in enumerate(dataset.identities)}
    steps_per_epoch = max(1, len(clips) // (tc.batch_identities * tc.clips_per_identity))
    rng = np.random.default_rng([tc.seed, 1])
    erase_rng = np.random.default_rng([tc.seed, 2])
    pool_rng = np.random.default_rng([tc.seed, 3])
    ckpt_path = os.path.join(out_dir, "checkpoint.zip")
    cfg_hash = config_hash({"model": config_dict(model.cfg), "train": config_dict(tc)})

    stages = []
    if model.cfg.use_app and model.cfg.use_att:
        stages = [("appearance-only", tc.stage1_epochs), ("joint", tc.stage2_epochs)]
    else:
        stages = [("joint", tc.stage1_epochs + tc.stage2_epochs)]

    log_path = os.path.join(out_dir, log_name)
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "epoch", "step", "L_tri", "L_ide", "L_att", "L"])
        global_step = 0
        warming = tc.warmup_epochs > 0
        warm_done = 0
        ce_start = None
        exit_frac = tc.warmup_exit_frac
        snapshot = None
        tri_epochs = 0  # epochs since warmup exit, drives the triplet ramp
        pinned_streak = 0
        n_heads = (1 + model.cfg.n_stripes) if model.cfg.use_app else 0
        tri_floor = tc.margin * tc.batch_identities * tc.clips_per_identity * n_heads
        total_epochs = sum(e for _, e in stages)
        epochs_done = 0
        for stage, epochs in stages:
            opt = SGD(_stage_params(model, stage), lr=tc.lr,
                      momentum=tc.momentum, weight_decay=tc.weight_decay,
                      max_grad_norm=tc.max_grad_norm)
            recent = []
            for epoch in range(epochs):
                # one smooth exponential decay across the whole run; the
                # shrinking step size damps batch-to-batch oscillation, and a
                # longer warmup automatically hands the hard-mining loss a
                # smaller, more stable step size when it kicks in
                span = max(total_epochs - 1, 1)
                opt.lr = tc.lr * tc.decay_factor ** (min(epochs_done, span) / span)
                if warming:
                    tri_weight = 0.0
                else:
                    ramp = max(tc.triplet_ramp_epochs, 1)
                    tri_weight = min(1.0, (tri_epochs + 1) / ramp)
                epoch_losses = []
                epoch_ce = []
                epoch_tri = []
                for _ in range(steps_per_epoch):
                    batch = pk_sample(clips, tc.batch_identities, tc.clips_per_identity, rng)
                    batch = [random_erase(c, tc.erase_prob, erase_rng) for c in batch]
                    frames, ids, attrs = batch_arrays(batch)
                    id_targets = np.array([id_map[i] for i in ids])
                    opt.zero_grad()
                    loss, parts = compute_loss(model, frames, id_targets, attrs,
                                               tc, stage, pool_rng,
                                               tri_weight=tri_weight)
                    if not np.isfinite(parts["L"]):
                        save_checkpoint(ckpt_path, model, tc.seed, cfg_hash)
                        raise DivergenceError(
                            f"non-finite loss at stage {stage} epoch {epoch}; "
                            f"last checkpoint kept at {ckpt_path}")
                    loss.backward()
                    opt.step()
                    tri, ide = _split_app_loss(parts)
                    writer.writerow([stage, epoch, global_step,
                                     f"{tri:.6f}", f"{ide:.6f}",
                                     f"{parts.get('L_att', 0.0):.6f}",
                                     f"{parts['L']:.6f}"])
                    epoch_losses.append(parts["L"])
                    epoch_ce.append(parts.get("L_ide", 0.0))
                    epoch_tri.append(parts.get("L_tri", 0.0))
                    global_step += 1
                mean_loss = float(np.mean(epoch_losses))
                epochs_done += 1
                if warming:
                    warm_done += 1
                    mean_ce = float(np.mean(epoch_ce))
                    if ce_start is None:
                        ce_start = mean_ce
                    separated = (warm_done >= tc.warmup_epochs
                                 and mean_ce <= exit_frac * ce_start)
                    if separated or warm_done >= 3 * tc.warmup_epochs:
                        warming = False
                        tri_epochs = 0
                        pinned_streak = 0
                        # the loss surface changes when the triplet kicks in
                        opt.velocity = [np.zeros_like(v) for v in opt.velocity]
                        snapshot = {n: p.data.copy()
                                    for n, p in model.named_parameters()}
                        ce_switch = float(np.mean(epoch_ce))
                elif snapshot is not None and tri_floor > 0:
                    tri_epochs += 1
                    # hard mining can still contract every feature to one
                    # point, which pins the epoch triplet loss at
                    # margin * batch * heads and keeps it there; a healthy
                    # decline passes through that value, so only two
                    # consecutive pinned epochs (with CE no better than at
                    # the switch) count as collapse. Roll back to the
                    # pre-triplet parameters and keep training CE-only with
                    # a stricter exit bar.
                    mean_tri = float(np.mean(epoch_tri))
                    pinned = (abs(mean_tri - tri_floor) <= 0.05 * tri_floor
                              and float(np.mean(epoch_ce)) >= ce_switch)
                    pinned_streak = pinned_streak + 1 if pinned else 0
                    if pinned_streak >= 2:
                        for name, p in model.named_parameters():
                            p.tensor.data = snapshot[name].copy()
                            p.tensor.grad = None
                        opt.velocity = [np.zeros_like(v) for v in opt.velocity]
                        warming = True
                        pinned_streak = 0
                        exit_frac *= 0.85
                        recent = []
                if not quiet:
                    print(f"[{stage}] epoch {epoch}: loss {mean_loss:.4f}")
                if checkpoint_every and (epoch + 1) % checkpoint_every == 0:
                    save_checkpoint(ckpt_path, model, tc.seed, cfg_hash)
                # stage-1 plateau stop (not during warmup)
                if stage == "appearance-only" and not warming:
                    recent.append(mean_loss)
                    if len(recent) > tc.plateau_window:
                        prev = recent[-tc.plateau_window - 1]
                        if prev > 0 and (prev - recent[-1]) / abs(prev) < tc.plateau_tol:
                            break
    save_checkpoint(ckpt_path, model, tc.seed, cfg_hash)
    return model, ckpt_path, log_path


def _split_app_loss(parts):
    # the CSV separates triplet and CE portions when available
    return parts.get("L_tri", parts.get("L_app", 0.0)), parts.get("L_ide", 0.0)


def evaluate_split(model, test_sequences, lambda_sim, T, feature_mode="fused"):
    """Embed held-out sequences and run the cross-camera protocol.

    feature_mode selects which descriptor enters the distance: fused,
    appearance (lambda = 0), or attribute (appearance zeroed).
    """
    records = embed_sequences(test_sequences, model, T)
    if feature_mode == "appearance":
        lam = 0.0
    elif feature_mode == "attribute":
        records = [replace_app(r) for r in records]
        lam = 1.0
    else:
        lam = lambda_sim
    queries, gallery = query_gallery_split(records)
    return evaluate(queries, gallery, lambda_sim=lam)


def replace_app(record):
    out = copy.copy(record)
    out.f_app = np.zeros_like(record.f_app)
    return out


ABLATION_VARIANTS = {
    "TALNet": {},
    "TALNet_wo_App": {"use_app": False},
    "TALNet_wo_Att": {"use_att": False},
    "AppNet_wo_GRU": {"use_att": False, "use_gru": False},
    "AttNet_wo_ST": {"use_app": False, "use_spatial_attention": False,
                     "use_ts_context": False},
    "AttNet_wo_T": {"use_app": False, "use_ts_context": False},
    "AttNet_wo_C": {"use_app": False, "use_context_memory": False},
    "pool_mean": {"use_att": False, "pooling": "mean"},
    "pool_max": {"use_att": False, "pooling": "max"},
    "pool_random": {"use_att": False, "pooling": "random-sample"},
}


def ablate(model_cfg, train_cfg, dataset, out_dir, variants=None, seeds=(0,),
           quiet=True):
    """Train each variant on the shared split and tabulate Rank-1 / mAP.

    Returns rows of (variant, rank1, mAP) averaged over seeds.
    """
    variants = variants or list(ABLATION_VARIANTS)
    train_set, test_set = train_test_split(dataset)
    rows = []
    for name in variants:
        overrides = ABLATION_VARIANTS[name]
        r1s, maps = [], []
        for seed in seeds:
            cfg = replace(model_cfg, **overrides)
            tcfg = replace(train_cfg, seed=seed)
            run_dir = os.path.join(out_dir, f"{name}_seed{seed}")
            model, _, _ = train(cfg, tcfg, train_set, run_dir, quiet=quiet)
            result = evaluate_split(model, test_set.sequences,
                                    tcfg.lambda_sim, cfg.clip_len)
            r1s.append(result.cmc[0])
            maps.append(result.mean_ap)
        rows.append((name, float(np.mean(r1s)), float(np.mean(maps))))
        if not quiet:
            print(f"{name}: rank-1 {rows[-1][1]:.4f} mAP {rows[-1][2]:.4f}")
    return rows


def write_ablation_table(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "rank1", "mAP"])
        for name, r1, m in rows:
            writer.writerow([name, f"{r1:.4f}", f"{m:.4f}"])
