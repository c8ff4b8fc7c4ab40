"""Experiment orchestration: configs, encode/estimate/benchmark commands.

Configuration is a plain-text key=value file; CLI flags override file values.
Rate-distortion results are written as CSV with a frozen column order (no
wall time in the CSV, so identical configs produce identical bytes).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import imageio, sparse
from .dictionary import DictionarySpec, SearchWindow
from .energy import (DepthLabelSpec, EnergyConfig, consistency_cost,
                     data_cost, multiview_consistency, multiview_data_cost,
                     multiview_smoothness, smoothness_cost)
from .graphcut import CorrelationResult, solve_correlation
from .predict import (MotionField, disparity_error, predict_from_motion,
                      psnr, warp_view)
from .sensing import SensingSpec, decode_packet, encode_packet
from .synthesize import SceneSpec, synthesize


class ConfigError(ValueError):
    pass


def parse_config_text(text: str) -> dict[str, str]:
    cfg: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path: str, overrides: dict[str, str] | None = None) -> dict[str, str]:
    with open(path) as fh:
        cfg = parse_config_text(fh.read())
    if overrides:
        cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


@dataclass
class ExperimentConfig:
    reference: str
    targets: list[str]
    mode: str = "OPT2"
    gt: str | None = None
    gt_scale: float = 1.0
    k_atoms: int = 15
    rate: float = 0.05
    bits: int = 2
    seed: int = 7
    block_size: int = 8
    alpha1: float = 0.0
    alpha2: float = 0.0
    tau: float = 4.0
    robust: bool = False
    quantized_consistency: bool = True
    window: SearchWindow = field(default_factory=SearchWindow)
    rotation_count: int = 10
    scale_count: int = 5
    depth: DepthLabelSpec | None = None
    output_dir: str = "out"
    sidecar: str | None = None
    ref_bits_per_pixel: float = 0.0  # reference rate for overall-RD reporting
    rates: list[float] = field(default_factory=list)
    bits_list: list[int] = field(default_factory=list)
    max_sweeps: int = 5

    @classmethod
    def from_dict(cls, cfg: dict[str, str]) -> "ExperimentConfig":
        def get(key, default=None):
            return cfg.get(key, default)

        if "reference" not in cfg:
            raise ConfigError("config needs reference=")
        targets = [t for t in get("targets", get("target", "")).split(",") if t]
        if not targets:
            raise ConfigError("config needs target= (or targets=)")
        window = SearchWindow(
            dt_x=int(get("window.dt_x", "0")),
            dt_y=int(get("window.dt_y", "0")),
            d_theta=int(get("window.d_theta", "0")),
            d_sx=int(get("window.d_sx", "0")),
            d_sy=int(get("window.d_sy", "0")),
        )
        depth = None
        if "depth.levels" in cfg:
            depth = DepthLabelSpec(
                z_min=float(cfg["depth.z_min"]),
                z_max=float(cfg["depth.z_max"]),
                level_count=int(cfg["depth.levels"]),
                focal=float(cfg["depth.focal"]),
                baselines=tuple(float(b) for b in cfg["depth.baselines"].split(",")),
            )
        mode = get("mode", "OPT2").upper()
        if mode not in ("OPT1", "OPT2", "OPT3"):
            raise ConfigError(f"unknown mode {mode!r}")
        if mode == "OPT3" and depth is None:
            raise ConfigError("OPT3 needs depth.* settings")
        return cls(
            reference=cfg["reference"],
            targets=targets,
            mode=mode,
            gt=get("gt"),
            gt_scale=float(get("gt_scale", "1.0")),
            k_atoms=int(get("k_atoms", "15")),
            rate=float(get("rate", "0.05")),
            bits=int(get("bits", "2")),
            seed=int(get("seed", "7")),
            block_size=int(get("block_size", "8")),
            alpha1=float(get("alpha1", "0.0")),
            alpha2=float(get("alpha2", "0.0")),
            tau=float(get("tau", "4.0")),
            robust=get("robust", "0") in ("1", "true", "yes"),
            quantized_consistency=get("quantized_consistency", "1") in ("1", "true", "yes"),
            window=window,
            rotation_count=int(get("dict.rotation_count", "10")),
            scale_count=int(get("dict.scale_count", "5")),
            depth=depth,
            output_dir=get("output_dir", "out"),
            sidecar=get("sidecar"),
            ref_bits_per_pixel=float(get("ref_bits_per_pixel", "0.0")),
            rates=[float(r) for r in get("rates", "").split(",") if r],
            bits_list=[int(b) for b in get("bits_list", "").split(",") if b],
            max_sweeps=int(get("max_sweeps", "5")),
        )

    def energy_config(self) -> EnergyConfig:
        return EnergyConfig(alpha1=self.alpha1, alpha2=self.alpha2,
                            tau=self.tau, robust_data=self.robust,
                            window=self.window,
                            quantized_consistency=self.quantized_consistency)


def measurement_count(rate: float, dims: tuple[int, int]) -> int:
    if not (0 < rate <= 1):
        raise ConfigError("measurement rate must be in (0, 1]")
    m = int(rate * dims[0] * dims[1])
    if m < 1:
        raise ConfigError("measurement rate yields zero measurements")
    return m


@dataclass
class RDRecord:
    mode: str
    view: int
    rate: float
    quant_bits: int
    m_count: int
    bits_total: int
    bits_per_pixel: float
    psnr_db: float
    disparity_err: float
    e_data: float
    e_smooth: float
    e_cons: float
    truncations: int
    wall_time: float  # not serialized to CSV (determinism)

    CSV_COLUMNS = ("mode", "view", "rate", "quant_bits", "m_count",
                   "bits_total", "bits_per_pixel", "psnr_db",
                   "disparity_err", "e_data", "e_smooth", "e_cons",
                   "truncations")

    def csv_row(self) -> str:
        vals = [self.mode, str(self.view), f"{self.rate:.6f}",
                str(self.quant_bits), str(self.m_count),
                str(self.bits_total), f"{self.bits_per_pixel:.8f}",
                f"{self.psnr_db:.6f}", f"{self.disparity_err:.8f}",
                f"{self.e_data:.8e}", f"{self.e_smooth:.8e}",
                f"{self.e_cons:.8e}", str(self.truncations)]
        return ",".join(vals)


def write_rd_csv(path: str, records: list[RDRecord]) -> None:
    lines = [",".join(RDRecord.CSV_COLUMNS)]
    lines.extend(r.csv_row() for r in records)
    imageio.write_bytes(path, ("\n".join(lines) + "\n").encode())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_encode(image_path: str, out_path: str, rate: float, bits: int,
               seed: int = 7, block_size: int = 8) -> dict:
    image = imageio.read_pgm(image_path)
    m = measurement_count(rate, image.shape)
    spec = SensingSpec(dims=image.shape, m_count=m, block_size=block_size,
                       seed=seed)
    packet, blob = encode_packet(image, spec, bits)
    imageio.write_bytes(out_path, blob)
    return {"m_count": m, "bits": bits, "bitstream_bytes": len(blob),
            "bitstream_bits": packet.bitstream_len}


def _sparse_approx(cfg: ExperimentConfig, reference: np.ndarray,
                   dict_spec: DictionarySpec) -> sparse.SparseApprox:
    if cfg.sidecar and os.path.exists(cfg.sidecar):
        return sparse.load_sidecar(cfg.sidecar, dict_spec)
    approx = sparse.matching_pursuit(reference, dict_spec, cfg.k_atoms)
    if cfg.sidecar:
        sparse.save_sidecar(approx, dict_spec, cfg.sidecar)
    return approx


@dataclass
class EstimateOutput:
    result: CorrelationResult
    predicted: list[np.ndarray]
    records: list[RDRecord]


def run_estimate(cfg: ExperimentConfig, rate: float | None = None,
                 bits: int | None = None,
                 write_outputs: bool = True) -> EstimateOutput:
    """Encode target view(s), estimate the correlation and predict them."""
    rate = cfg.rate if rate is None else rate
    bits = cfg.bits if bits is None else bits
    t0 = time.monotonic()
    reference = imageio.read_pgm(cfg.reference)
    targets = [imageio.read_pgm(t) for t in cfg.targets]
    dims = reference.shape
    for t in targets:
        if t.shape != dims:
            raise ConfigError("target dims differ from the reference")
    dict_spec = DictionarySpec(image_dims=dims,
                               rotation_count=cfg.rotation_count,
                               scale_count=cfg.scale_count)
    m = measurement_count(rate, dims)
    sense_spec = SensingSpec(dims=dims, m_count=m, block_size=cfg.block_size,
                             seed=cfg.seed)
    packets, blobs = [], []
    for t in targets:
        packet, blob = encode_packet(t, sense_spec, bits)
        packets.append(packet)
        blobs.append(blob)

    approx = _sparse_approx(cfg, reference, dict_spec)
    econf = cfg.energy_config()
    result = solve_correlation(cfg.mode, approx, packets, econf, dict_spec,
                               reference=reference, depth_spec=cfg.depth,
                               max_sweeps=cfg.max_sweeps)

    gt_field = None
    if cfg.gt:
        gt_h = imageio.read_disparity(cfg.gt, cfg.gt_scale)
        gt_field = MotionField(gt_h, np.zeros_like(gt_h))

    predicted: list[np.ndarray] = []
    records: list[RDRecord] = []
    wall = time.monotonic() - t0
    if cfg.mode in ("OPT1", "OPT2"):
        fld: MotionField = result.field
        pred = predict_from_motion(reference, fld)
        predicted.append(pred)
        e_d = data_cost(result.labels, approx, packets[0], dict_spec)
        e_s = smoothness_cost(fld, cfg.tau)
        e_t = consistency_cost(result.labels, reference, packets[0], approx,
                               dict_spec, econf.quantized_consistency)
        de = disparity_error(fld, gt_field) if gt_field is not None else float("nan")
        records.append(RDRecord(
            cfg.mode, 1, rate, bits, m, packets[0].bitstream_len,
            packets[0].bitstream_len / (dims[0] * dims[1]),
            psnr(pred, targets[0]), de, e_d, e_s, e_t,
            result.truncations, wall))
    else:
        depth_field: np.ndarray = result.field
        h_d = multiview_data_cost(result.labels, approx, packets, cfg.depth)
        h_s = multiview_smoothness(depth_field, cfg.tau)
        h_t = multiview_consistency(depth_field, reference, packets, cfg.depth,
                                    econf.quantized_consistency)
        for j, (packet, target) in enumerate(zip(packets, targets)):
            pred = warp_view(reference, depth_field, cfg.depth.focal,
                             cfg.depth.baselines[j])
            predicted.append(pred)
            records.append(RDRecord(
                cfg.mode, j + 1, rate, bits, m, packet.bitstream_len,
                packet.bitstream_len / (dims[0] * dims[1]),
                psnr(pred, target), float("nan"), h_d, h_s, h_t,
                result.truncations, wall))

    if write_outputs:
        os.makedirs(cfg.output_dir, exist_ok=True)
        for j, (blob, pred) in enumerate(zip(blobs, predicted), start=1):
            imageio.write_bytes(os.path.join(cfg.output_dir, f"view{j}.gcmp"), blob)
            imageio.write_pgm(os.path.join(cfg.output_dir, f"predicted{j}.pgm"), pred)
        if cfg.mode in ("OPT1", "OPT2"):
            imageio.write_pfm(os.path.join(cfg.output_dir, "field_h.pfm"),
                              result.field.m_h)
            imageio.write_pfm(os.path.join(cfg.output_dir, "field_v.pfm"),
                              result.field.m_v)
        else:
            imageio.write_pfm(os.path.join(cfg.output_dir, "depth.pfm"),
                              result.field)
    return EstimateOutput(result, predicted, records)


def cmd_estimate(cfg: ExperimentConfig) -> list[RDRecord]:
    out = run_estimate(cfg)
    write_rd_csv(os.path.join(cfg.output_dir, "estimate.csv"), out.records)
    return out.records


def cmd_benchmark(cfg: ExperimentConfig) -> list[RDRecord]:
    """Sweep measurement rates and/or quantizer bits; one record per point."""
    rates = cfg.rates or [cfg.rate]
    bits_list = cfg.bits_list or [cfg.bits]
    if not rates:
        raise ConfigError("benchmark needs a non-empty rate list")
    records: list[RDRecord] = []
    failures: list[str] = []
    for rate in rates:
        for bits in bits_list:
            try:
                out = run_estimate(cfg, rate=rate, bits=bits,
                                   write_outputs=False)
                records.extend(out.records)
            except Exception as exc:  # record and continue the sweep
                failures.append(f"rate={rate} bits={bits}: {exc}")
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_rd_csv(os.path.join(cfg.output_dir, "benchmark.csv"), records)
    if failures:
        imageio.write_bytes(os.path.join(cfg.output_dir, "failures.txt"),
                            ("\n".join(failures) + "\n").encode())
    _write_summary(cfg, records)
    return records


def _convex_hull_points(points: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """Upper hull of (bpp, psnr) points: the achievable RD envelope."""
    undominated = []
    best = -np.inf
    for x, y in sorted(set(points)):
        if y > best:
            undominated.append((x, y))
            best = y
    hull: list[tuple[float, float]] = []
    for x, y in undominated:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # drop the middle point if it lies on or below the chord
            if (y2 - y1) * (x - x1) <= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    return hull


def _write_summary(cfg: ExperimentConfig, records: list[RDRecord]) -> None:
    finite = [r for r in records if np.isfinite(r.psnr_db)]
    pts = [(r.bits_per_pixel + cfg.ref_bits_per_pixel, r.psnr_db)
           for r in finite]
    hull = _convex_hull_points(pts) if pts else []
    lines = [f"points={len(records)}"]
    for x, y in hull:
        lines.append(f"hull,{x:.8f},{y:.6f}")
    imageio.write_bytes(os.path.join(cfg.output_dir, "summary.txt"),
                        ("\n".join(lines) + "\n").encode())


def cmd_synthesize(scene_path: str, output_dir: str) -> dict:
    with open(scene_path) as fh:
        scene = SceneSpec.from_json(fh.read())
    out = synthesize(scene)
    os.makedirs(output_dir, exist_ok=True)
    imageio.write_pgm(os.path.join(output_dir, "view1.pgm"), out.reference)
    for j, (view, fld) in enumerate(zip(out.views, out.gt_fields), start=2):
        imageio.write_pgm(os.path.join(output_dir, f"view{j}.pgm"), view)
        imageio.write_pfm(os.path.join(output_dir, f"gt_h_view{j}.pfm"), fld.m_h)
        imageio.write_pfm(os.path.join(output_dir, f"gt_v_view{j}.pfm"), fld.m_v)
    if out.gt_depth is not None:
        imageio.write_pfm(os.path.join(output_dir, "gt_depth.pfm"), out.gt_depth)
    return {"views": 1 + len(out.views), "dims": scene.dims}


def cmd_metrics(a_path: str, b_path: str, gt_path: str | None = None,
                est_path: str | None = None, gt_scale: float = 1.0) -> dict:
    a = imageio.read_pgm(a_path)
    b = imageio.read_pgm(b_path)
    out = {"psnr_db": psnr(a, b)}
    if gt_path and est_path:
        gt = imageio.read_disparity(gt_path, gt_scale)
        est = imageio.read_disparity(est_path)
        out["disparity_err"] = disparity_error(
            MotionField(est, np.zeros_like(est)),
            MotionField(gt, np.zeros_like(gt)))
    return out
