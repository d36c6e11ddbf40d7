"""Encoder (rate-distortion overfitting), bitstream format and decoder.

Bitstream layout, all integers little-endian::

    "NVFP" | version u8 | flags u8 | M u8 | N u8 | L u8 | J u8
    | width count u8 | widths u16...
    | frame count u16
    | per frame: cube count u32, octree bit length u32, octree bits (MSB first, byte padded)
    | mu_z sigma_z mu_y sigma_y f32 | threshold f32
    | y segment length u32 + bytes
    | per frame: z segment length u32 + bytes

flags bit 0 set means the weights are coded directly (no fixed offset p).
"""

from __future__ import annotations

import logging
import math
import struct
import time
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.spatial import cKDTree

from . import autodiff as ad
from .autodiff import Tensor
from .distortion import LossConfig, compute_distance_field, downsample_occupancy, empty_fraction
from .distortion import multiscale_distortion
from .errors import DataError, DecodeError, OctreeFormatError
from .metrics import nn_sq_dists, psnr
from .neural_field import (Architecture, NeuralFieldParams, cube_generator, generate_occupancy,
                           latent_code_generator, num_coded_params, param_names, weights_from_y)
from .octree import build, deserialize_bfs, points_from_cubes, serialize_bfs
from .pointcloud_io import PointCloud
from .prng import SplitMix64
from .range_coder import FrozenCdf, RangeDecoder, RangeEncoder, freeze
from .rate_model import (DELTA_Y, DELTA_Z, INDEX_MAX, INDEX_MIN, GaussianModelParams,
                         alphabet_range, dequantize, discrete_pmf_table, estimate_bits, quantize,
                         rate_loss)

log = logging.getLogger(__name__)

MAGIC = b"NVFP"
VERSION = 1
FLAG_NO_INIT_SEP = 1


@dataclass
class EncodeConfig:
    M: int = 5
    N: int = 5
    L: int = 1
    J: int = 4
    widths: tuple = (24, 24, 12)
    lam: float = 1e4
    iterations: int = 30000
    lr: float = 1e-3
    lr_latent: float = 1e-2
    lr_min_ratio: float = 0.01
    batch_size: int = 8
    seed: int = 0
    gamma_focal: float = 2.0
    rate_loss: bool = True
    init_separation: bool = True
    distance_weighted: bool = True
    raw_distance: bool = False
    threshold_override: float | None = None
    peak_convention: str = "3p2"
    probe_interval: int = 1000
    log_interval: int = 100

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.iterations < 0 or self.batch_size < 1:
            raise ValueError("iterations must be >= 0 and batch size >= 1")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.threshold_override is not None and not 0 < self.threshold_override <= 1:
            raise ValueError("threshold must be in (0, 1]")
        if self.peak_convention not in ("3p2", "p2"):
            raise ValueError("peak convention is '3p2' or 'p2'")

    @property
    def arch(self) -> Architecture:
        return Architecture(self.N, self.L, self.J, self.widths)

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines)


# ---------------------------------------------------------------- bitstream

@dataclass
class FrameHeader:
    cube_count: int
    octree_bits: np.ndarray


@dataclass
class Bitstream:
    M: int
    N: int
    L: int
    J: int
    widths: tuple
    frames: list
    q: GaussianModelParams
    threshold: float
    y_segment: bytes
    z_segments: list
    flags: int = 0
    version: int = VERSION

    @property
    def arch(self) -> Architecture:
        return Architecture(self.N, self.L, self.J, self.widths)

    def to_bytes(self) -> bytes:
        out = bytearray(MAGIC)
        out += struct.pack("<6B", self.version, self.flags, self.M, self.N, self.L, self.J)
        out += struct.pack("<B", len(self.widths))
        out += struct.pack(f"<{len(self.widths)}H", *self.widths)
        out += struct.pack("<H", len(self.frames))
        for fr in self.frames:
            bits = np.asarray(fr.octree_bits, dtype=np.uint8)
            out += struct.pack("<II", fr.cube_count, len(bits))
            out += np.packbits(bits).tobytes()
        out += self.q.pack()
        out += struct.pack("<f", self.threshold)
        out += struct.pack("<I", len(self.y_segment)) + self.y_segment
        for seg in self.z_segments:
            out += struct.pack("<I", len(seg)) + seg
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Bitstream":
        r = _Reader(data)
        if r.take(4) != MAGIC:
            raise DecodeError("bad magic")
        version, flags, M, N, L, J = r.unpack("<6B")
        if version != VERSION:
            raise DecodeError(f"unsupported version {version}")
        (nw,) = r.unpack("<B")
        widths = r.unpack(f"<{nw}H")
        (nf,) = r.unpack("<H")
        frames = []
        for _ in range(nf):
            count, nbits = r.unpack("<II")
            packed = np.frombuffer(r.take((nbits + 7) // 8), dtype=np.uint8)
            frames.append(FrameHeader(count, np.unpackbits(packed)[:nbits]))
        try:
            q = GaussianModelParams.unpack(r.take(16))
        except ValueError as e:
            raise DecodeError(f"invalid distribution parameters: {e}") from None
        (threshold,) = r.unpack("<f")
        y_seg = r.take(r.unpack("<I")[0])
        z_segs = [r.take(r.unpack("<I")[0]) for _ in range(nf)]
        if r.pos != len(data):
            raise DecodeError(f"{len(data) - r.pos} trailing bytes")
        return cls(M, N, L, J, tuple(widths), frames, q, threshold, y_seg, z_segs, flags, version)

    def __len__(self):
        return len(self.to_bytes())


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise DecodeError("bitstream truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return bytes(chunk)

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


# ---------------------------------------------------------------- entropy-coded segments

_RAW_CDF = None


def _raw_cdf() -> FrozenCdf:
    global _RAW_CDF
    if _RAW_CDF is None:
        _RAW_CDF = freeze(np.ones(INDEX_MAX - INDEX_MIN + 1), INDEX_MIN)
    return _RAW_CDF


def segment_cdf(mu: float, sigma: float, delta: float) -> FrozenCdf:
    lo, hi = alphabet_range(mu, sigma, delta)
    return freeze(discrete_pmf_table(mu, sigma, delta, lo, hi), lo)


def encode_segment(indices, mu: float, sigma: float, delta: float) -> bytes:
    """Range-code integer indices; the two end bins of the table escape to a raw 16-bit value."""
    cdf = segment_cdf(mu, sigma, delta)
    lo, hi = cdf.offset, cdf.offset + cdf.size - 1
    raw = _raw_cdf()
    enc = RangeEncoder()
    for s in np.asarray(indices, dtype=np.int64).tolist():
        if lo < s < hi:
            enc.encode(s, cdf)
        else:
            enc.encode(lo if s <= lo else hi, cdf)
            enc.encode(s, raw)
    return enc.finish()


def decode_segment(data: bytes, count: int, mu: float, sigma: float, delta: float) -> np.ndarray:
    cdf = segment_cdf(mu, sigma, delta)
    lo, hi = cdf.offset, cdf.offset + cdf.size - 1
    raw = _raw_cdf()
    dec = RangeDecoder(data)
    out = np.empty(count, dtype=np.int64)
    for k in range(count):
        s = dec.decode(cdf)
        if s == lo or s == hi:
            s = dec.decode(raw)
        out[k] = s
    return out


# ---------------------------------------------------------------- threshold

THRESHOLD_CANDIDATES = tuple(float(np.float32(k / 100)) for k in range(1, 100))


def _frame_voxels(P1, origins, t_min):
    """Global coordinates and probabilities of voxels with P1 >= t_min."""
    coords, probs = [], []
    for p, o in zip(P1, origins):
        idx = np.argwhere(p >= t_min)
        coords.append(idx + o)
        probs.append(p[idx[:, 0], idx[:, 1], idx[:, 2]])
    if not coords:
        return np.zeros((0, 3), np.int64), np.zeros(0)
    return np.concatenate(coords), np.concatenate(probs)


def select_threshold(prob_frames, origin_frames, references, candidates=THRESHOLD_CANDIDATES,
                     peak_convention="3p2") -> float:
    """Threshold whose reconstruction best balances the two D1 directions.

    ``prob_frames[f]`` holds the P1 cubes of frame f (K_f, s, s, s) and
    ``origin_frames[f]`` their origins. Squared errors are pooled over frames per
    direction. Minimises |PSNR(rec->ref) - PSNR(ref->rec)|; ties go to the higher
    of the two PSNRs' minimum, then to the smaller threshold.
    """
    cands = sorted(float(c) for c in candidates)
    per_frame = []
    for P1, origins, ref in zip(prob_frames, origin_frames, references):
        coords, probs = _frame_voxels(P1, origins, cands[0])
        ref_pts = np.asarray(ref.points, dtype=np.int64)
        ref_tree = cKDTree(ref_pts)
        d_rec = nn_sq_dists(coords, ref_pts, ref_tree)  # each candidate voxel -> reference
        per_frame.append((coords, probs, d_rec, ref_pts))
    peak = float((1 << references[0].bit_depth) - 1)

    best = None
    for t in cands:
        sum_ab = sum_ba = 0
        n_ab = n_ba = 0
        feasible = True
        for coords, probs, d_rec, ref_pts in per_frame:
            sel = probs >= t
            if not sel.any():
                feasible = False
                break
            sum_ab += int(d_rec[sel].sum())
            n_ab += int(sel.sum())
            sum_ba += int(nn_sq_dists(ref_pts, coords[sel]).sum())
            n_ba += len(ref_pts)
        if not feasible:
            continue
        p_ab = psnr(sum_ab / n_ab, peak, peak_convention)
        p_ba = psnr(sum_ba / n_ba, peak, peak_convention)
        if math.isinf(p_ab) and math.isinf(p_ba):
            diff = 0.0
        else:
            diff = abs(p_ab - p_ba)
        key = (diff, -min(p_ab, p_ba), t)
        if best is None or key < best[0]:
            best = (key, t)
    if best is None:
        raise DataError("every candidate threshold yields an empty reconstruction")
    return best[1]


def reconstruct_frames(P1, cube_counts, origin_frames, threshold, bit_depth):
    out = []
    pos = 0
    for count, origins in zip(cube_counts, origin_frames):
        occ = P1[pos:pos + count] >= threshold
        out.append(points_from_cubes(origins, occ, bit_depth))
        pos += count
    return out


# ---------------------------------------------------------------- training

@dataclass
class TrainingState:
    cfg: EncodeConfig
    arch: Architecture
    params: NeuralFieldParams
    v: Tensor
    mu_z: Tensor
    log_sigma_z: Tensor
    mu_y: Tensor
    log_sigma_y: Tensor
    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray
    D: np.ndarray
    loss_cfg: LossConfig
    opt_weights: ad.Adam
    opt_latent: ad.Adam
    noise_rng: SplitMix64
    batch_rng: SplitMix64
    step: int = 0
    _queue: list = field(default_factory=list)

    num_points: int = 1

    @property
    def num_cubes(self) -> int:
        return len(self.G1)

    @property
    def num_voxels(self) -> int:
        return self.G1.size

    def next_batch(self) -> np.ndarray:
        K, B = self.num_cubes, self.cfg.batch_size
        if B >= K:
            return np.arange(K)
        while len(self._queue) < B:
            self._queue.extend(self.batch_rng.permutation(K).tolist())
        batch, self._queue = self._queue[:B], self._queue[B:]
        return np.asarray(batch, dtype=np.int64)

    def q(self) -> GaussianModelParams:
        return GaussianModelParams(self.mu_z.item(), math.exp(self.log_sigma_z.item()),
                                   self.mu_y.item(), math.exp(self.log_sigma_y.item()))


def prepare_training(frames, cfg: EncodeConfig):
    """Octrees, cube targets, distance fields and freshly initialised parameters."""
    if not frames:
        raise DataError("no frames to encode")
    depth = cfg.M + cfg.N
    for i, f in enumerate(frames):
        if f.bit_depth != depth:
            raise DataError(f"frame {i}: bit depth {f.bit_depth} != M + N = {depth}")
        if len(f) == 0:
            raise DataError(f"frame {i} is empty")
    arch = cfg.arch
    trees, occ, dist = [], [], []
    for f in frames:
        tree, cubes = build(f, cfg.M, cfg.N)
        trees.append(tree)
        occ.extend(c.occupancy for c in cubes)
        dist.extend(compute_distance_field(f, tree))
    G1 = np.stack(occ)[:, None]
    D = np.stack(dist).astype(np.float32)[:, None]
    G2 = downsample_occupancy(G1)
    G3 = downsample_occupancy(G2)
    loss_cfg = LossConfig(lam=cfg.lam, alpha=empty_fraction([G1]), gamma_focal=cfg.gamma_focal,
                          distance_weighted=cfg.distance_weighted, raw_distance=cfg.raw_distance)

    root = SplitMix64(cfg.seed)
    params = NeuralFieldParams(arch, seed=int(root.next_u64(1)[0]),
                               init_separation=cfg.init_separation)
    K = len(G1)
    v = Tensor(np.zeros((K,) + arch.latent_shape), requires_grad=True, name="v")
    y0 = params.flat_y()
    sigma_y0 = max(float(y0.std()), DELTA_Y)
    state = TrainingState(
        cfg=cfg, arch=arch, params=params, v=v,
        mu_z=Tensor(np.zeros(1), requires_grad=True, name="mu_z"),
        log_sigma_z=Tensor(np.zeros(1), requires_grad=True, name="log_sigma_z"),
        mu_y=Tensor(np.zeros(1), requires_grad=True, name="mu_y"),
        log_sigma_y=Tensor(np.full(1, math.log(sigma_y0)), requires_grad=True,
                           name="log_sigma_y"),
        G1=G1, G2=G2, G3=G3, D=D, loss_cfg=loss_cfg,
        opt_weights=None, opt_latent=None,
        noise_rng=root.split(), batch_rng=root.split(),
        num_points=sum(len(f) for f in frames),
    )
    state.opt_weights = ad.Adam(params.coded_parameter_set()
                                + [state.mu_z, state.log_sigma_z, state.mu_y, state.log_sigma_y],
                                lr=cfg.lr)
    state.opt_latent = ad.Adam([v] + params.latent_gen_params, lr=cfg.lr_latent)
    return state, trees


def _all_params(state):
    return state.opt_weights.params + state.opt_latent.params


def training_step(state: TrainingState, batch=None) -> dict:
    """One optimizer step on L = R_z + R_y + lambda * D over a batch of cubes.

    Rates are in nats per input point and D is the multi-scale focal loss per
    cube voxel; R_z and D are summed over the batch and scaled by K / B so the
    step estimates the full-set objective. Returns the breakdown in those
    units; its ``loss`` entry is exactly rate_z + rate_y + lambda * distortion.
    """
    cfg, arch, params = state.cfg, state.arch, state.params
    if batch is None:
        batch = state.next_batch()
    batch = np.asarray(batch, dtype=np.int64)
    scale = state.num_cubes / len(batch)

    z = latent_code_generator(ad.gather(state.v, batch), params, "train", rng=state.noise_rng)
    noisy_y = {n: ad.add_uniform_noise(params.y[n], DELTA_Y, state.noise_rng)
               for n in param_names(arch)}
    w = {n: ad.add(noisy_y[n], params.p[n]) for n in noisy_y}
    P1, P2, P3 = cube_generator(z, w, arch)
    dist = multiscale_distortion(P1, P2, P3, state.G1[batch], state.G2[batch], state.G3[batch],
                                 state.D[batch].astype(np.float64), state.loss_cfg)
    if cfg.rate_loss:
        z_r, y_r = z, list(noisy_y.values())
    else:
        # rate terms then only fit the distribution parameters
        z_r, y_r = z.detach(), [t.detach() for t in noisy_y.values()]
    rz = rate_loss(z_r, state.mu_z, state.log_sigma_z, DELTA_Z)
    ry = rate_loss(y_r[0], state.mu_y, state.log_sigma_y, DELTA_Y)
    for t in y_r[1:]:
        ry = ry + rate_loss(t, state.mu_y, state.log_sigma_y, DELTA_Y)
    rz = rz * (scale / state.num_points)
    ry = ry * (1.0 / state.num_points)
    dist = dist * (scale / state.num_voxels)
    loss = ry + rz + dist * cfg.lam

    ad.backward(loss)
    frac = cosine_fraction(state.step, cfg.iterations, cfg.lr_min_ratio)
    state.opt_weights.step(cfg.lr * frac)
    state.opt_latent.step(cfg.lr_latent * frac)
    ad.zero_grad(_all_params(state))
    state.step += 1
    return dict(step=state.step, rate_z=rz.item(), rate_y=ry.item(),
                distortion=dist.item(), loss=loss.item())


def cosine_fraction(step, total, min_ratio):
    return ad.cosine_lr(step, max(total, 1), 1.0, min_ratio)


def export_indices(state: TrainingState):
    """Quantized y (step 1/16) and z (step 1) indices from the current state."""
    y_idx = quantize(state.params.flat_y(), DELTA_Y)
    z = latent_code_generator(state.v, state.params, "export")
    z_idx = quantize(z, DELTA_Z)
    return y_idx, z_idx


def probe_rate(state: TrainingState) -> dict:
    """Actual coded sizes of y and z at the current step (for logging)."""
    q = state.q().to_f32()
    y_idx, z_idx = export_indices(state)
    y_bits = 8 * len(encode_segment(y_idx, *q.side("y")))
    z_bits = 8 * len(encode_segment(z_idx.reshape(-1), *q.side("z")))
    return dict(step=state.step, y_bits=y_bits, z_bits=z_bits,
                y_est=estimate_bits(y_idx, *q.side("y")),
                z_est=estimate_bits(z_idx.reshape(-1), *q.side("z")))


@dataclass
class EncodeResult:
    bitstream: Bitstream
    data: bytes
    reconstruction: list
    threshold: float
    weights: dict
    y_indices: np.ndarray
    z_indices: np.ndarray
    history: list
    probes: list
    stats: dict


def encode(frames, cfg: EncodeConfig, state: TrainingState | None = None,
           trees=None) -> EncodeResult:
    """Fit the neural field to ``frames`` (one shared network) and build the bitstream."""
    if isinstance(frames, PointCloud):
        frames = [frames]
    if state is None:
        state, trees = prepare_training(frames, cfg)
    t0 = time.time()
    history, probes = [], []
    while state.step < cfg.iterations:
        rec = training_step(state)
        history.append(rec)
        if cfg.log_interval and state.step % cfg.log_interval == 0:
            log.info("step %d loss %.4g rate_z %.4g rate_y %.4g dist %.4g (%.1fs)", rec["step"],
                     rec["loss"], rec["rate_z"], rec["rate_y"], rec["distortion"],
                     time.time() - t0)
        if cfg.probe_interval and state.step % cfg.probe_interval == 0:
            pr = probe_rate(state)
            probes.append(pr)
            log.info("step %d coded y %d bits (est %.0f), z %d bits (est %.0f)", pr["step"],
                     pr["y_bits"], pr["y_est"], pr["z_bits"], pr["z_est"])
    return finalize(frames, cfg, state, trees, history, probes)


def finalize(frames, cfg, state, trees, history=(), probes=()) -> EncodeResult:
    arch = state.arch
    q = state.q().to_f32()
    y_idx, z_idx = export_indices(state)
    w = weights_from_y(arch, dequantize(y_idx, DELTA_Y), cfg.init_separation)
    P1 = generate_occupancy(w, z_idx.astype(np.float64), arch)

    counts = [t.num_leaves for t in trees]
    origin_frames = [t.leaf_origins for t in trees]
    prob_frames = np.split(P1, np.cumsum(counts)[:-1])
    if cfg.threshold_override is not None:
        threshold = float(np.float32(cfg.threshold_override))
    else:
        threshold = select_threshold(prob_frames, origin_frames, frames,
                                     peak_convention=cfg.peak_convention)
    recon = reconstruct_frames(P1, counts, origin_frames, threshold, cfg.M + cfg.N)

    lat = arch.latent_size
    z_flat = z_idx.reshape(len(z_idx), lat)
    y_seg = encode_segment(y_idx, *q.side("y"))
    z_segs = []
    pos = 0
    for c in counts:
        z_segs.append(encode_segment(z_flat[pos:pos + c].reshape(-1), *q.side("z")))
        pos += c
    bs = Bitstream(cfg.M, cfg.N, cfg.L, cfg.J, arch.widths,
                   [FrameHeader(t.num_leaves, serialize_bfs(t)) for t in trees],
                   q, threshold, y_seg, z_segs,
                   flags=0 if cfg.init_separation else FLAG_NO_INIT_SEP)
    data = bs.to_bytes()
    npts = sum(len(f) for f in frames)
    octree_bits = sum(len(fr.octree_bits) for fr in bs.frames)
    stats = dict(
        total_bits=8 * len(data), points=npts, bpp=8 * len(data) / npts,
        octree_bits=octree_bits, y_bits=8 * len(y_seg), z_bits=8 * sum(len(s) for s in z_segs),
        y_est_bits=estimate_bits(y_idx, *q.side("y")),
        z_est_bits=estimate_bits(z_idx.reshape(-1), *q.side("z")),
        threshold=threshold, cubes=int(sum(counts)), coded_params=len(y_idx),
    )
    log.info("encoded %d frame(s): %d bits, %.4f bpp (octree %d, y %d, z %d)", len(frames),
             stats["total_bits"], stats["bpp"], octree_bits, stats["y_bits"], stats["z_bits"])
    return EncodeResult(bs, data, recon, threshold, w, y_idx, z_idx, list(history),
                        list(probes), stats)


# ---------------------------------------------------------------- decoding

def decode(data) -> list[PointCloud]:
    """Reconstruct every frame from bitstream bytes alone."""
    bs = data if isinstance(data, Bitstream) else Bitstream.from_bytes(bytes(data))
    try:
        arch = bs.arch
    except ValueError as e:
        raise DecodeError(f"invalid architecture in header: {e}") from None
    if not 0.0 <= bs.threshold <= 1.0 or math.isnan(bs.threshold):
        raise DecodeError(f"invalid threshold {bs.threshold}")
    trees = []
    for i, fr in enumerate(bs.frames):
        try:
            tree = deserialize_bfs(fr.octree_bits, bs.M, bs.N)
        except OctreeFormatError as e:
            raise DecodeError(f"frame {i}: {e}") from None
        if tree.num_leaves != fr.cube_count:
            raise DecodeError(f"frame {i}: header says {fr.cube_count} cubes, "
                              f"octree has {tree.num_leaves}")
        trees.append(tree)
    init_sep = not (bs.flags & FLAG_NO_INIT_SEP)
    y_idx = decode_segment(bs.y_segment, num_coded_params(arch), *bs.q.side("y"))
    w = weights_from_y(arch, dequantize(y_idx, DELTA_Y), init_sep)
    lat = arch.latent_size
    z_parts = []
    for seg, fr in zip(bs.z_segments, bs.frames):
        z_parts.append(decode_segment(seg, fr.cube_count * lat, *bs.q.side("z")))
    z_idx = np.concatenate(z_parts).reshape((-1,) + arch.latent_shape) if z_parts else \
        np.zeros((0,) + arch.latent_shape)
    P1 = generate_occupancy(w, z_idx.astype(np.float64), arch)
    return reconstruct_frames(P1, [fr.cube_count for fr in bs.frames],
                              [t.leaf_origins for t in trees], bs.threshold, bs.M + bs.N)


def decoded_weights(data) -> dict:
    """Effective generator weights as the decoder rebuilds them."""
    bs = data if isinstance(data, Bitstream) else Bitstream.from_bytes(bytes(data))
    y_idx = decode_segment(bs.y_segment, num_coded_params(bs.arch), *bs.q.side("y"))
    return weights_from_y(bs.arch, dequantize(y_idx, DELTA_Y), not (bs.flags & FLAG_NO_INIT_SEP))


def config_from_dict(d: dict) -> EncodeConfig:
    known = {f.name: f for f in fields(EncodeConfig)}
    kwargs = {}
    for k, v in d.items():
        if k not in known:
            raise ValueError(f"unknown config key {k!r}")
        kwargs[k] = v
    return EncodeConfig(**kwargs)


__all__ = ["EncodeConfig", "Bitstream", "FrameHeader", "EncodeResult", "TrainingState", "encode",
           "decode", "select_threshold", "training_step", "prepare_training", "encode_segment",
           "decode_segment"]
