"""Experiment pipeline: phantoms, simulated scans, reconstructions, metrics.

Outputs are first written to a hidden staging directory inside ``out`` and
moved into place only when the whole run succeeds, so an aborted run leaves
no partial files behind.

Output layout::

    config.ini                      effective configuration (round-trips)
    run.json                        version, schedule, per-stage wall clock
    metrics.csv                     one row per (image, method, pattern, views)
    phantoms/<id>.pgm|.f64
    sinograms/<id>__<pattern>__<views>.sino|.json
    recon/<id>__<method>__<pattern>__<views>.pgm|.f64
    runlogs/<id>__dice__<pattern>__<views>.csv
"""

from __future__ import annotations

import contextlib
import csv
import dataclasses
import json
import os
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from dicect import __version__
from dicect.baselines import fbp_reconstruct, pnp_fista
from dicect.config import SWEEP_AXES, to_ini, validate
from dicect.diffusion import GaussianMMSEDenoiser, TVProxDenoiser, tv_prox
from dicect.errors import ConfigError
from dicect.geometry import SamplingPattern, ScanGeometry, Sinogram, add_noise, build_geometry, radon_operator
from dicect.io import (FileFormatError, load_image_dir, read_pgm, read_raw, read_sinogram, write_pgm,
                       write_raw, write_sinogram)
from dicect.metrics import CSV_FIELDS, evaluate, write_metrics_csv
from dicect.phantoms import random_ellipse_phantom, shepp_logan
from dicect.rng import stream
from dicect.sampler import dice_reconstruct
from dicect.toy import stationary_covariance

SEP = "__"


def version_string():
    """``git describe``-style version: the package version plus the commit, when known."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5, check=True)
        return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        return f"v{__version__}"


def load_images(cfg):
    """``[(image_id, image)]`` for the configured phantom family or input directory."""
    if cfg.input_dir is not None:
        images = load_image_dir(cfg.input_dir)
        side = images[0][1].shape[0]
        if side != cfg.image_side:
            raise ConfigError(f"images in {cfg.input_dir} are {side}x{side} but image_side is "
                              f"{cfg.image_side}")
        return images
    out = []
    for i in range(cfg.n_images):
        if cfg.phantom == "shepp_logan" or (cfg.phantom == "mixed" and i == 0):
            out.append(("shepp_logan" if i == 0 else f"shepp_logan{i:02d}", shepp_logan(cfg.image_side)))
        else:
            seed = int(stream(cfg.seed, "phantom", i).integers(2 ** 31))
            out.append((f"ellipses{i:02d}", random_ellipse_phantom(cfg.image_side, seed)))
    return out


def pattern_for(cfg, kind, views):
    seed = None
    if kind == "nonuniform":
        seed = cfg.pattern_seed
        if seed is None:
            seed = int(stream(cfg.seed, "geometry", views).integers(2 ** 31))
    return SamplingPattern(kind, views, seed)


def simulate_scan(cfg, image, image_index, kind, views):
    """Noisy (if configured) sinogram of ``image`` for one sampling pattern."""
    geom = build_geometry(cfg.image_side, pattern_for(cfg, kind, views))
    sino = Sinogram(radon_operator(geom).apply(image), geom)
    if cfg.noise_sigma > 0:
        noise_seed = int(stream(cfg.seed, "noise", image_index, views, kind == "nonuniform").integers(2 ** 31))
        sino = add_noise(sino, cfg.noise_sigma, noise_seed)
    return sino


def make_denoiser(cfg, sched):
    if cfg.denoiser == "tv":
        return TVProxDenoiser(cfg.lambda_tv, cfg.tv_iters, sched, cfg.prior_var, cfg.prior_mean)
    side = cfg.image_side
    mu = np.full((side, side), cfg.prior_mean)
    return GaussianMMSEDenoiser(mu, stationary_covariance(side, cfg.gauss_length), sched)


def reconstruct(method, cfg, sino, image_index):
    """Run one method on one sinogram; returns ``(image, runlog or None)``."""
    geom = sino.geometry
    if method == "fbp":
        return fbp_reconstruct(sino, geom, cfg.fbp_window), None
    A = radon_operator(geom)
    if method == "pnp_fista":
        iters = cfg.fista_tv_iters
        result = pnp_fista(sino, A, lambda x, gamma: tv_prox(x, gamma, iters), cfg.fista_config())
        return result.image, None
    sched = cfg.noise_schedule()
    return dice_reconstruct(sino, A, make_denoiser(cfg, sched), sched, cfg.sampler_config(),
                            stream_keys=(image_index,))


def _task(args):
    """Worker entry point: reconstruct, then score against the reference if present."""
    cfg, method, sino_data, angles, image_index, image_id, kind, views, ref = args
    sino = Sinogram(sino_data, ScanGeometry(cfg.image_side, angles))
    tick = time.perf_counter()
    image, log = reconstruct(method, cfg, sino, image_index)
    seconds = time.perf_counter() - tick
    row = {"image_id": image_id, "method": method, "views": views, "pattern": kind,
           "seconds": repr(seconds) if cfg.record_seconds else "0.0"}
    if ref is not None:
        rep = evaluate(ref, image, cfg.data_range)
        row["psnr"] = repr(float(rep.psnr))
        row["ssim"] = repr(float(rep.ssim))
    log_rows = list(log.rows()) if log is not None else None
    return row, image, log_rows


def _map(fn, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def stem(*parts):
    return SEP.join(str(p) for p in parts)


@contextlib.contextmanager
def staged_output(out):
    """Yield a staging directory whose contents move into ``out`` on success."""
    out = Path(out)
    created = not out.exists()
    try:
        out.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=".partial-", dir=out))
    except OSError as exc:
        raise FileFormatError(f"{out}: cannot create output directory ({exc.strerror or exc})") from exc
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        if created:
            shutil.rmtree(out, ignore_errors=True)
        raise
    for root, _, files in os.walk(staging):
        rel = Path(root).relative_to(staging)
        (out / rel).mkdir(parents=True, exist_ok=True)
        for name in files:
            os.replace(Path(root) / name, out / rel / name)
    shutil.rmtree(staging, ignore_errors=True)


def _write_image(base, image):
    write_pgm(base.with_suffix(".pgm"), image)
    write_raw(base.with_suffix(".f64"), image)


def _write_runlog(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "residual", "abs_residual"])
        for t, k, r, a in rows:
            w.writerow([t, k, repr(float(r)), repr(float(a))])


def _write_metadata(staging, cfg, timings, verb):
    (staging / "config.ini").write_text(to_ini(cfg))
    meta = {"version": version_string(), "verb": verb, "schedule": cfg.schedule,
            "data_range": cfg.data_range, "stage_seconds": timings}
    (staging / "run.json").write_text(json.dumps(meta, indent=2) + "\n")


def _sino_sidecar(image_id, image_index, kind, views, sino):
    return {"image_id": image_id, "image_index": image_index, "pattern": kind, "views": views,
            "image_side": sino.geometry.image_side, "angles": list(sino.geometry.angles)}


def _simulate_all(cfg, staging):
    """Write phantoms and sinograms; returns the scan list used downstream."""
    (staging / "phantoms").mkdir()
    (staging / "sinograms").mkdir()
    scans = []
    for index, (image_id, image) in enumerate(load_images(cfg)):
        _write_image(staging / "phantoms" / image_id, image)
        for kind, views in cfg.grid():
            sino = simulate_scan(cfg, image, index, kind, views)
            base = staging / "sinograms" / stem(image_id, kind, views)
            write_sinogram(base.with_suffix(".sino"), sino.data)
            meta = _sino_sidecar(image_id, index, kind, views, sino)
            base.with_suffix(".json").write_text(json.dumps(meta) + "\n")
            scans.append((meta, sino, image))
    return scans


def _reconstruct_all(cfg, scans, staging):
    """Reconstruct every scan with every method; returns metric rows in grid order."""
    tasks = []
    for meta, sino, ref in scans:
        for method in cfg.method:
            tasks.append((cfg, method, sino.data, sino.geometry.angles, meta["image_index"],
                          meta["image_id"], meta["pattern"], meta["views"], ref))
    results = _map(_task, tasks, cfg.workers)
    (staging / "recon").mkdir()
    rows = []
    for task, (row, image, log_rows) in zip(tasks, results):
        name = stem(row["image_id"], row["method"], row["pattern"], row["views"])
        _write_image(staging / "recon" / name, image)
        if log_rows is not None:
            (staging / "runlogs").mkdir(exist_ok=True)
            _write_runlog(staging / "runlogs" / f"{name}.csv", log_rows)
        rows.append(row)
    return rows


def run_experiment(cfg):
    """Full pipeline; returns the metric rows and writes all outputs under ``cfg.out``."""
    validate(cfg)
    timings = {}
    with staged_output(cfg.out) as staging:
        tick = time.perf_counter()
        scans = _simulate_all(cfg, staging)
        timings["simulate"] = time.perf_counter() - tick
        tick = time.perf_counter()
        rows = _reconstruct_all(cfg, scans, staging)
        timings["reconstruct_and_score"] = time.perf_counter() - tick
        write_metrics_csv(staging / "metrics.csv", rows)
        _write_metadata(staging, cfg, timings, "all")
    return rows


def simulate(cfg):
    validate(cfg)
    with staged_output(cfg.out) as staging:
        tick = time.perf_counter()
        scans = _simulate_all(cfg, staging)
        _write_metadata(staging, cfg, {"simulate": time.perf_counter() - tick}, "simulate")
    return [meta for meta, _, _ in scans]


def load_scans(sino_dir):
    """Read every ``.sino`` file with its ``.json`` geometry sidecar."""
    sino_dir = Path(sino_dir)
    files = sorted(sino_dir.glob("*.sino")) if sino_dir.is_dir() else []
    if not files:
        raise FileFormatError(f"{sino_dir}: no sinogram files found")
    scans = []
    for path in files:
        side = path.with_suffix(".json")
        try:
            meta = json.loads(side.read_text())
            geom = ScanGeometry(int(meta["image_side"]), tuple(meta["angles"]))
        except (OSError, ValueError, KeyError) as exc:
            raise FileFormatError(f"{side}: unreadable geometry sidecar ({exc})") from exc
        data = read_sinogram(path)
        if data.shape != geom.sino_shape:
            raise FileFormatError(f"{path}: shape {data.shape} does not match sidecar {geom.sino_shape}")
        scans.append((meta, Sinogram(data, geom), None))
    return scans


def reconstruct_dir(cfg, sino_dir):
    """Reconstruct sinogram files from ``sino_dir`` into ``cfg.out/recon``."""
    validate(cfg)
    scans = load_scans(sino_dir)
    for meta, _, _ in scans:
        if meta["image_side"] != cfg.image_side:
            cfg = dataclasses.replace(cfg, image_side=int(meta["image_side"]))
            validate(cfg)
    with staged_output(cfg.out) as staging:
        tick = time.perf_counter()
        rows = _reconstruct_all(cfg, scans, staging)
        _write_metadata(staging, cfg, {"reconstruct": time.perf_counter() - tick}, "reconstruct")
    return rows


def _read_image(path):
    return read_raw(path) if path.suffix == ".f64" else read_pgm(path)


def evaluate_dirs(ref_dir, test_dir, out_csv, data_range=1.0):
    """Score ``<id>__<method>__<pattern>__<views>`` images against ``<id>`` references."""
    ref_dir, test_dir = Path(ref_dir), Path(test_dir)
    refs = {}
    for suffix in (".pgm", ".f64"):  # raw sidecars take precedence
        refs.update({p.stem: p for p in sorted(ref_dir.glob(f"*{suffix}"))})
    tests = {}
    for suffix in (".pgm", ".f64"):
        tests.update({p.stem: p for p in sorted(test_dir.glob(f"*{suffix}"))})
    if not tests:
        raise FileFormatError(f"{test_dir}: no images to evaluate")
    rows = []
    for name in sorted(tests):
        parts = name.split(SEP)
        if len(parts) != 4 or parts[0] not in refs:
            raise FileFormatError(f"{tests[name]}: no matching reference in {ref_dir}")
        ref = _read_image(refs[parts[0]])
        test = _read_image(tests[name])
        if ref.shape != test.shape:
            raise FileFormatError(f"{tests[name]}: shape {test.shape} differs from reference {ref.shape}")
        rep = evaluate(ref, test, data_range)
        rows.append({"image_id": parts[0], "method": parts[1], "pattern": parts[2], "views": parts[3],
                     "psnr": repr(float(rep.psnr)), "ssim": repr(float(rep.ssim)), "seconds": "0.0"})
    out_csv = Path(out_csv)
    tmp = out_csv.with_name(out_csv.name + ".partial")
    try:
        write_metrics_csv(tmp, rows)
        os.replace(tmp, out_csv)
    finally:
        if tmp.exists():
            tmp.unlink()
    return rows


SWEEP_FIELDS = ("axis", "axis_value") + CSV_FIELDS


def ablation_sweep(cfg, axis, values):
    """One DICE run per value of ``axis`` with a shared seed; long-format rows."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {axis!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    runs = []
    for value in values:
        c = dataclasses.replace(cfg, **{axis: value}, method=("dice",))
        validate(c, f"sweep {axis}={value}")
        runs.append((value, c))
    rows = []
    timings = {}
    with staged_output(cfg.out) as staging:
        images = load_images(cfg)
        tasks, labels = [], []
        for value, c in runs:
            for index, (image_id, image) in enumerate(images):
                for kind, views in c.grid():
                    sino = simulate_scan(c, image, index, kind, views)
                    tasks.append((c, "dice", sino.data, sino.geometry.angles, index, image_id,
                                  kind, views, image))
                    labels.append(value)
        tick = time.perf_counter()
        results = _map(_task, tasks, cfg.workers)
        timings["sweep"] = time.perf_counter() - tick
        for value, (row, _, _) in zip(labels, results):
            rows.append({"axis": axis, "axis_value": value, **row})
        with open(staging / f"sweep_{axis}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
            w.writeheader()
            w.writerows(rows)
        _write_metadata(staging, cfg, timings, f"sweep {axis}")
    return rows
