"""Scenario runner, parameter sweeps and their CSV/manifest outputs.

CSV bodies depend only on the scenario and seeds; wall-clock data lives in
manifest.json.
"""

from __future__ import annotations

import contextlib
import csv
import datetime as _dt
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, comm, fusion, pipeline, radar
from .channel import LinkNoiseConfig
from .errors import ConfigError, JrcError, StageError
from .scenario import Scenario, load_scenario
from .signal import write_dump
from .waveform import transmit_pulse

COMM_BER_HEADER = ["snr_db", "h", "seed", "bits_total", "bits_error", "ber", "evm_rms"]


def fmt(x) -> str:
    """Exact, platform-stable text for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return "" if x is None else str(x)


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


@dataclass
class RunManifest:
    config_hash: str
    experiment: str
    seeds: list[int]
    tool_version: str = __version__
    outputs: dict[str, str] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    errors: list[str] = field(default_factory=list)
    started_utc: str = ""

    def add(self, name: str, path: Path, root: Path):
        self.outputs[name] = str(Path(path).relative_to(root))

    def write(self, root: Path) -> Path:
        path = root / "manifest.json"
        self.outputs.setdefault("manifest", "manifest.json")
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


@contextlib.contextmanager
def _stage(manifest: RunManifest, name: str):
    t0 = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except JrcError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise StageError(name, exc) from exc
    finally:
        manifest.stage_seconds[name] = manifest.stage_seconds.get(name, 0.0) \
            + round(time.perf_counter() - t0, 6)


def _pool_map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))  # map preserves input (axis) order


def trial_seeds(seed: int, trials: int) -> list[int]:
    return [pipeline.derive_seed(seed, 10, t) for t in range(trials)]


# -- comm ---------------------------------------------------------------------------------

def _comm_point(args):
    sc, h, snr, trial = args
    cfg = sc.waveform.with_pmi(h)
    data_seed = trial_seeds(sc.seed, trial + 1)[trial]
    noise = LinkNoiseConfig(snr, trial_seeds(sc.noise.seed, trial + 1)[trial])
    try:
        rep = pipeline.run_comm(cfg, data_seed, noise, pipeline.robust_comm_options(sc.pulses))
        return (snr, h, data_seed, rep.bits_total, rep.bits_error, rep.ber, rep.evm_rms), None
    except JrcError as exc:
        return (snr, h, data_seed, 0, 0, math.nan, math.nan), f"{type(exc).__name__}: {exc}"


def wilson_interval(errors: int, total: int, z: float = 1.96) -> tuple[float, float]:
    if total == 0:
        return (0.0, 1.0)
    p = errors / total
    den = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / den
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class SnrSweepResult:
    rows: list[tuple]  # snr_db, h, trials, bits_total, bits_error, mean_ber, ci_low, ci_high, error
    trial_rows: list[tuple]
    monotone: bool


def sweep_snr(sc: Scenario, snr_values=None, trials: int | None = None, jobs: int = 1) -> SnrSweepResult:
    """Mean BER per SNR over independent trials (common noise seeds across the grid)."""
    snr_values = tuple(sc.snr_values if snr_values is None else snr_values)
    trials = sc.trials if trials is None else trials
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    h = sc.waveform.pmi
    tasks = [(sc, h, s, t) for s in snr_values for t in range(trials)]
    out = _pool_map(_comm_point, tasks, jobs)
    trial_rows, rows = [], []
    for i, s in enumerate(snr_values):
        chunk = out[i * trials:(i + 1) * trials]
        errs = [e for _, e in chunk if e]
        good = [r for r, e in chunk if not e]
        trial_rows += [r for r, _ in chunk]
        tot = sum(r[3] for r in good)
        bad = sum(r[4] for r in good)
        lo, hi = wilson_interval(bad, tot)
        ber = bad / tot if tot else math.nan
        rows.append((s, h, len(good), tot, bad, ber, lo, hi, "; ".join(errs)))
    return SnrSweepResult(rows, trial_rows, is_monotone_within_ci(rows))


def is_monotone_within_ci(rows) -> bool:
    """Non-increasing BER with SNR, allowing overlaps of the binomial intervals."""
    ordered = sorted((r for r in rows if not math.isnan(r[5])), key=lambda r: r[0])
    return all(b[5] <= a[5] or b[6] <= a[7] for a, b in zip(ordered, ordered[1:]))


# -- PMI ----------------------------------------------------------------------------------

def _pmi_point(args):
    sc, h = args
    try:
        ber, snr = pipeline.pmi_point(sc.waveform, h, sc.scene, sc.seed, sc.noise,
                                      pipeline.robust_comm_options(sc.pulses))
        return (h, sc.noise.snr_db, sc.seed, ber.bits_total, ber.bits_error, ber.ber,
                ber.evm_rms, snr, "")
    except JrcError as exc:
        return (h, sc.noise.snr_db, sc.seed, 0, 0, math.nan, math.nan, math.nan,
                f"{type(exc).__name__}: {exc}")


@dataclass
class PmiSweepResult:
    rows: list[tuple]  # h, snr_db, seed, bits_total, bits_error, ber, evm_rms, radar_snr_db, error
    balance_h: float
    min_h_below_fec: float


def balance_point(h, ber, radar_snr, floor: float = 1e-6) -> float:
    """PMI where normalised comm quality (-log BER) meets normalised radar SNR.

    Both curves are scaled to [0, 1] over the sweep and their crossing is
    linearly interpolated; NaN when they do not cross.
    """
    h = np.asarray(h, float)
    if len(h) < 2:
        return math.nan
    q_c = -np.log10(np.maximum(np.asarray(ber, float), floor))
    q_r = np.asarray(radar_snr, float)

    def norm(q):
        span = q.max() - q.min()
        return (q - q.min()) / span if span > 0 else np.full_like(q, 0.5)

    d = norm(q_c) - norm(q_r)
    for i in range(len(h) - 1):
        if d[i] == 0:
            return float(h[i])
        if d[i] * d[i + 1] < 0:
            return float(h[i] + (h[i + 1] - h[i]) * d[i] / (d[i] - d[i + 1]))
    return float(h[-1]) if d[-1] == 0 else math.nan


def sweep_pmi(sc: Scenario, h_values=None, jobs: int = 1) -> PmiSweepResult:
    h_values = tuple(sc.pmi_values if h_values is None else h_values)
    if any(not 0 < h <= 2 for h in h_values):
        raise ConfigError("PMI values must lie in (0, 2]")
    rows = _pool_map(_pmi_point, [(sc, h) for h in sorted(h_values)], jobs)
    ok = [r for r in rows if not r[8]]
    bal = balance_point([r[0] for r in ok], [r[5] for r in ok], [r[7] for r in ok]) if ok else math.nan
    below = [r[0] for r in ok if r[5] < comm.FEC_THRESHOLD]
    return PmiSweepResult(rows, bal, min(below) if below else math.nan)


# -- radar / fusion ---------------------------------------------------------------------

def _profile_rows(p: radar.RangeProfile):
    return zip(p.ranges, p.magnitude_db)


def _peak_rows(p: radar.RangeProfile):
    return ((q.range, q.magnitude_db) for q in p.peaks)


def _radar_outputs(sc, cap, root, manifest, summary):
    profiles = []
    rows = []
    for d in cap.bands:
        i = d.descriptor.index
        p = radar.range_profile(d, sc.window, sc.zero_pad_factor,
                                c=sc.scene.propagation_speed)
        profiles.append(p)
        manifest.add(f"profile_band{i}", write_csv(root / f"profile_band{i}.csv",
                                                   ["range_m", "magnitude_db"], _profile_rows(p)), root)
        manifest.add(f"peaks_band{i}", write_csv(root / f"peaks_band{i}.csv",
                                                 ["range_m", "magnitude_db"], _peak_rows(p)), root)
        sp = radar.peak_spacing(p)
        rows.append((f"band{i}", p.resolution_nominal, len(p.peaks), sp))
        summary.append(f"band {i}: {len(p.peaks)} peak(s), resolution {p.resolution_nominal * 100:.3f} cm"
                       + (f", spacing {sp * 100:.2f} cm" if sp is not None else ""))
    return profiles, rows


# -- dispatcher ----------------------------------------------------------------------------------

def run_scenario(scenario, out=None, *, jobs: int = 1, seed: int | None = None) -> RunManifest:
    """Execute a scenario (path or Scenario) and write its artifacts under ``out``."""
    sc = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    if seed is not None:
        sc = replace(sc, seed=seed)
    root = Path(out or sc.output or "out")
    root.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(sc.config_hash(), sc.experiment, [sc.seed, sc.noise.seed],
                           started_utc=_dt.datetime.now(_dt.timezone.utc).isoformat())
    (root / "scenario.json").write_text(json.dumps(sc.canonical(), indent=2, sort_keys=True) + "\n")
    manifest.add("scenario", root / "scenario.json", root)
    summary: list[str] = [f"experiment: {sc.experiment} (preset {sc.preset})"]
    try:
        _RUNNERS[sc.experiment](sc, root, manifest, summary, jobs)
    except JrcError as exc:
        manifest.status = "failed"
        manifest.errors.append(str(exc))
        summary.append(f"FAILED: {exc}")
        raise
    finally:
        (root / "summary.txt").write_text("\n".join(summary) + "\n")
        manifest.add("summary", root / "summary.txt", root)
        manifest.write(root)
    return manifest


def _run_generate(sc, root, manifest, summary, jobs):
    with _stage(manifest, "waveform"):
        mmw, if_sig, m, record = transmit_pulse(sc.waveform, sc.seed)
    with _stage(manifest, "write"):
        for name, sig in (("m", m), ("if", if_sig), ("mmw", mmw)):
            p = root / f"{name}.bin"
            write_dump(p, sig)
            manifest.add(name, p, root)
        bits = record.tx_bits.reshape(record.frames, -1)
        manifest.add("tx_bits", write_csv(root / "tx_bits.csv", ["frame", "bits"],
                                          ((i, "".join(map(str, b))) for i, b in enumerate(bits))), root)
    summary.append(f"{len(mmw)} samples at {sc.waveform.sample_rate:.6g} Sa/s, "
                   f"{record.tx_bits.size} bits in {record.frames} OFDM frames")


def _run_comm_ber(sc, root, manifest, summary, jobs):
    with _stage(manifest, "comm"):
        res = _pool_map(_comm_point, [(sc, sc.waveform.pmi, sc.noise.snr_db, t)
                                      for t in range(sc.trials)], jobs)
    rows = [r for r, _ in res]
    manifest.errors += [e for _, e in res if e]
    manifest.seeds = sorted({r[2] for r in rows} | {sc.noise.seed})
    manifest.add("comm_ber", write_csv(root / "comm_ber.csv", COMM_BER_HEADER, rows), root)
    tot = sum(r[3] for r in rows)
    err = sum(r[4] for r in rows)
    summary.append(comm.BerReport(tot, err).summary() + f" at SNR {fmt(sc.noise.snr_db)} dB, h = {sc.waveform.pmi}")
    if manifest.errors:
        manifest.status = "partial"


def _run_snr_sweep(sc, root, manifest, summary, jobs):
    with _stage(manifest, "snr-sweep"):
        res = sweep_snr(sc, jobs=jobs)
    manifest.add("comm_ber", write_csv(root / "comm_ber.csv", COMM_BER_HEADER, res.trial_rows), root)
    manifest.add("snr_sweep", write_csv(
        root / "snr_sweep.csv",
        ["snr_db", "h", "trials", "bits_total", "bits_error", "mean_ber", "ci_low", "ci_high", "error"],
        res.rows), root)
    for r in res.rows:
        rep = comm.BerReport(r[3], r[4])
        summary.append(f"SNR {fmt(r[0])} dB: {rep.summary()}")
    summary.append(f"monotone within binomial CI: {'yes' if res.monotone else 'no'}")
    manifest.errors += [r[8] for r in res.rows if r[8]]
    if manifest.errors:
        manifest.status = "partial"


def _run_pmi_sweep(sc, root, manifest, summary, jobs):
    with _stage(manifest, "pmi-sweep"):
        res = sweep_pmi(sc, jobs=jobs)
    manifest.add("pmi_sweep", write_csv(
        root / "pmi_sweep.csv",
        ["h", "snr_db", "seed", "bits_total", "bits_error", "ber", "evm_rms", "radar_snr_db", "error"],
        res.rows), root)
    manifest.add("pmi_balance", write_csv(root / "pmi_balance.csv",
                                          ["balance_h", "min_h_below_fec"],
                                          [(res.balance_h, res.min_h_below_fec)]), root)
    for r in res.rows:
        summary.append(f"h = {r[0]}: BER {fmt(r[5])}, radar SNR {fmt(r[7])} dB" + (f" [{r[8]}]" if r[8] else ""))
    summary.append(f"balance point h = {res.balance_h:.3g}; smallest h under the FEC limit = "
                   f"{res.min_h_below_fec:.3g}")
    manifest.errors += [r[8] for r in res.rows if r[8]]
    if manifest.errors:
        manifest.status = "partial"


def _run_radar(sc, root, manifest, summary, jobs):
    with _stage(manifest, "radar"):
        cap = pipeline.run_radar(sc.waveform, sc.scene, sc.seed, sc.noise)
        _, rows = _radar_outputs(sc, cap, root, manifest, summary)
    manifest.add("radar_summary", write_csv(root / "radar_summary.csv",
                                            ["profile", "resolution_m", "n_peaks", "spacing_m"], rows), root)


def _run_fusion(sc, root, manifest, summary, jobs):
    with _stage(manifest, "radar"):
        cap = pipeline.run_radar(sc.waveform, sc.scene, sc.seed, sc.noise)
        _, rows = _radar_outputs(sc, cap, root, manifest, summary)
    with _stage(manifest, "fusion"):
        window = pipeline.scene_window(sc.scene, sc.scene_margin)
        fused = pipeline.run_fusion(cap, window, sc.fusion, c=sc.scene.propagation_speed)
        p = fusion.fused_range_profile(fused, sc.window, sc.zero_pad_factor,
                                       c=sc.scene.propagation_speed)
    path = root / "fused_spectrum.csv"
    fusion.write_fused_csv(path, fused)
    manifest.add("fused_spectrum", path, root)
    manifest.add("fused_profile", write_csv(root / "fused_profile.csv", ["range_m", "magnitude_db"],
                                            _profile_rows(p)), root)
    manifest.add("fused_peaks", write_csv(root / "fused_peaks.csv", ["range_m", "magnitude_db"],
                                          _peak_rows(p)), root)
    sp = radar.peak_spacing(p)
    rows.append(("fused", p.resolution_nominal, len(p.peaks), sp))
    manifest.add("fusion_summary", write_csv(root / "fusion_summary.csv",
                                             ["profile", "resolution_m", "n_peaks", "spacing_m"], rows), root)
    summary.append(f"fused: {len(p.peaks)} peak(s), resolution {p.resolution_nominal * 100:.3f} cm"
                   + (f", spacing {sp * 100:.2f} cm" if sp is not None else ""))


_RUNNERS = {
    "generate": _run_generate,
    "comm-ber": _run_comm_ber,
    "snr-sweep": _run_snr_sweep,
    "pmi-sweep": _run_pmi_sweep,
    "radar-profile": _run_radar,
    "fusion": _run_fusion,
}
