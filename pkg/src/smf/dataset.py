"""Segment datasets: synthetic low-SNR ECG-like generation, CSV ingestion,
and deterministic train/test splitting.

File format: `signals.csv` holds one segment per row as exactly L
comma-separated floats; `peaks.csv` holds `segment_row_index,peak_sample_index`
rows (0-based). UTF-8, LF line endings, no header. Segments are max-abs
normalized when loaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .signal_ops import normalize_maxabs

SEGMENT_LEN = 250
SAMPLE_RATE_HZ = 200.0
MIN_PEAK_GAP = 30  # matches the detection distance floor


@dataclass
class LabeledSegment:
    """One fixed-length signal with its ground-truth R-peak sample indices."""

    signal: np.ndarray
    peaks: list[int]
    id: str

    def validate(self) -> None:
        if self.signal.shape != (SEGMENT_LEN,):
            raise DataError(f"segment {self.id}: expected {SEGMENT_LEN} samples, got {self.signal.shape}")
        if not np.all(np.isfinite(self.signal)):
            raise DataError(f"segment {self.id}: non-finite samples")
        for idx in self.peaks:
            if not 0 <= idx < SEGMENT_LEN:
                raise DataError(f"segment {self.id}: peak index {idx} out of range")
        for a, b in zip(self.peaks, self.peaks[1:]):
            if b <= a:
                raise DataError(f"segment {self.id}: peak indices not strictly increasing")
            if b - a < MIN_PEAK_GAP:
                raise DataError(f"segment {self.id}: peak gap {b - a} below {MIN_PEAK_GAP}")


@dataclass
class DatasetSplit:
    train: list[LabeledSegment]
    test: list[LabeledSegment]
    split_seed: int


@dataclass
class SynthConfig:
    """Knobs of the synthetic generator.

    Artefact amplitudes may exceed the R amplitude range to produce prominent
    false peaks; `invert_probability` flips whole segments the way misplacement
    of recording leads does.
    """

    n_segments: int = 100
    rng_seed: int = 0
    heart_rate_range_bpm: tuple[float, float] = (50.0, 150.0)
    qrs_width_samples: float = 8.0
    r_amplitude_range: tuple[float, float] = (0.75, 1.0)
    artefact_rate_per_segment: float = 3.0
    artefact_amplitude_range: tuple[float, float] = (0.5, 1.3)
    baseline_drift_amplitude: float = 0.3
    noise_std: float = 0.05
    invert_probability: float = 0.0

    def validate(self) -> None:
        if self.n_segments < 1:
            raise ConfigError("n_segments must be >= 1")
        lo, hi = self.heart_rate_range_bpm
        if not (0 < lo <= hi):
            raise ConfigError(f"empty heart rate range {self.heart_rate_range_bpm}")
        if _gap_samples(hi) < MIN_PEAK_GAP:
            raise ConfigError(
                f"heart rate {hi} bpm implies peak gaps below {MIN_PEAK_GAP} samples"
            )
        if _gap_samples(lo) > 10 * SEGMENT_LEN:
            raise ConfigError(f"heart rate {lo} bpm admits no peak in a segment")
        if self.qrs_width_samples < 2:
            raise ConfigError("qrs_width_samples must be >= 2")
        for name in ("r_amplitude_range", "artefact_amplitude_range"):
            a, b = getattr(self, name)
            if not (0 < a <= b):
                raise ConfigError(f"empty or non-positive {name}")
        if self.artefact_rate_per_segment < 0:
            raise ConfigError("artefact_rate_per_segment must be >= 0")
        if self.baseline_drift_amplitude < 0 or self.noise_std < 0:
            raise ConfigError("drift amplitude and noise std must be >= 0")
        if not 0.0 <= self.invert_probability <= 1.0:
            raise ConfigError("invert_probability must be in [0, 1]")


# Presets mirror the two dataset characters: artefact-heavy low-SNR recordings
# versus inversion-prone segments with irregular beat spacing.
PRESETS: dict[str, SynthConfig] = {
    "ear": SynthConfig(
        heart_rate_range_bpm=(55.0, 140.0),
        qrs_width_samples=8.0,
        r_amplitude_range=(0.75, 1.0),
        artefact_rate_per_segment=2.5,
        artefact_amplitude_range=(0.4, 0.9),
        baseline_drift_amplitude=0.35,
        noise_std=0.05,
        invert_probability=0.0,
    ),
    "arrhythmia": SynthConfig(
        heart_rate_range_bpm=(45.0, 160.0),
        qrs_width_samples=7.0,
        r_amplitude_range=(0.7, 1.0),
        artefact_rate_per_segment=1.5,
        artefact_amplitude_range=(0.4, 1.0),
        baseline_drift_amplitude=0.3,
        noise_std=0.07,
        invert_probability=0.35,
    ),
}


def preset_config(name: str, n_segments: int, rng_seed: int) -> SynthConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(PRESETS[name], n_segments=n_segments, rng_seed=rng_seed)


def _gap_samples(bpm: float) -> float:
    return 60.0 / bpm * SAMPLE_RATE_HZ


def _gaussian_bump(center: float, sigma: float, amplitude: float, length: int) -> np.ndarray:
    idx = np.arange(length, dtype=np.float64)
    return amplitude * np.exp(-0.5 * ((idx - center) / sigma) ** 2)


def _synth_one(cfg: SynthConfig, rng: np.random.Generator, seg_id: str) -> LabeledSegment:
    length = SEGMENT_LEN
    lo_bpm, hi_bpm = cfg.heart_rate_range_bpm
    gap_lo = max(MIN_PEAK_GAP, int(round(_gap_samples(hi_bpm))))
    gap_hi = max(gap_lo, int(round(_gap_samples(lo_bpm))))
    sigma_qrs = cfg.qrs_width_samples / 2.355  # width given as FWHM

    margin = 4
    first = int(rng.integers(margin, min(gap_hi, length - margin)))
    centers = [first]
    while True:
        nxt = centers[-1] + int(rng.integers(gap_lo, gap_hi + 1))
        if nxt >= length - margin:
            break
        centers.append(nxt)

    x = np.zeros(length)
    for c in centers:
        amp = rng.uniform(*cfg.r_amplitude_range)
        x += _gaussian_bump(c, sigma_qrs, amp, length)

    n_artefacts = int(rng.poisson(cfg.artefact_rate_per_segment))
    for _ in range(n_artefacts):
        for _ in range(50):  # rejection: keep artefact centers off the R labels
            pos = int(rng.integers(2, length - 2))
            if all(abs(pos - c) >= 12 for c in centers):
                break
        else:
            continue
        amp = rng.uniform(*cfg.artefact_amplitude_range)
        sigma_a = sigma_qrs * rng.uniform(0.12, 0.3)  # spiky relative to QRS
        x += _gaussian_bump(pos, sigma_a, amp, length)

    if cfg.baseline_drift_amplitude > 0:
        freq = rng.uniform(0.15, 0.7)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        t = np.arange(length) / SAMPLE_RATE_HZ
        x += cfg.baseline_drift_amplitude * rng.uniform(0.5, 1.0) * np.sin(
            2.0 * np.pi * freq * t + phase
        )

    if cfg.noise_std > 0:
        x += rng.normal(0.0, cfg.noise_std, length)

    if rng.random() < cfg.invert_probability:
        x = -x

    seg = LabeledSegment(signal=normalize_maxabs(x), peaks=centers, id=seg_id)
    seg.validate()
    return seg


def synth_generate(cfg: SynthConfig) -> list[LabeledSegment]:
    """Generate `cfg.n_segments` labeled segments, deterministic in rng_seed.

    Each segment derives its own RNG stream, so generation order (or a
    parallel map) cannot change the output.
    """
    cfg.validate()
    streams = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_segments)
    return [
        _synth_one(cfg, np.random.Generator(np.random.PCG64(s)), f"synth-{cfg.rng_seed}-{i:05d}")
        for i, s in enumerate(streams)
    ]


def save_dataset(out_dir: str | Path, segments: list[LabeledSegment]) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    signals_path = out_dir / "signals.csv"
    peaks_path = out_dir / "peaks.csv"
    with open(signals_path, "w", encoding="utf-8", newline="\n") as f:
        for seg in segments:
            f.write(",".join(repr(float(v)) for v in seg.signal))
            f.write("\n")
    with open(peaks_path, "w", encoding="utf-8", newline="\n") as f:
        for row, seg in enumerate(segments):
            for p in seg.peaks:
                f.write(f"{row},{p}\n")
    return signals_path, peaks_path


def load_dataset(path: str | Path) -> list[LabeledSegment]:
    """Read a signals.csv/peaks.csv pair; raises DataError naming bad lines."""
    path = Path(path)
    signals_path = path / "signals.csv"
    peaks_path = path / "peaks.csv"
    for p in (signals_path, peaks_path):
        if not p.exists():
            raise DataError(f"missing dataset file {p}")

    signals: list[np.ndarray] = []
    with open(signals_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != SEGMENT_LEN:
                raise DataError(
                    f"{signals_path}:{lineno}: expected {SEGMENT_LEN} values, got {len(fields)}"
                )
            try:
                row = np.array([float(v) for v in fields])
            except ValueError as e:
                raise DataError(f"{signals_path}:{lineno}: {e}") from e
            if not np.all(np.isfinite(row)):
                raise DataError(f"{signals_path}:{lineno}: non-finite sample")
            signals.append(row)

    peaks_per_row: dict[int, list[int]] = {i: [] for i in range(len(signals))}
    with open(peaks_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{peaks_path}:{lineno}: expected 'row,peak_index'")
            try:
                row_idx, peak_idx = int(parts[0]), int(parts[1])
            except ValueError as e:
                raise DataError(f"{peaks_path}:{lineno}: {e}") from e
            if not 0 <= row_idx < len(signals):
                raise DataError(f"{peaks_path}:{lineno}: segment row {row_idx} out of range")
            if not 0 <= peak_idx < SEGMENT_LEN:
                raise DataError(f"{peaks_path}:{lineno}: peak index {peak_idx} out of range")
            peaks_per_row[row_idx].append(peak_idx)

    segments = []
    for i, sig in enumerate(signals):
        seg = LabeledSegment(
            signal=normalize_maxabs(sig), peaks=sorted(peaks_per_row[i]), id=f"row-{i:05d}"
        )
        try:
            seg.validate()
        except DataError as e:
            raise DataError(f"{peaks_path}: segment row {i}: {e}") from e
        segments.append(seg)
    return segments


def load_signals_csv(path: str | Path) -> np.ndarray:
    """Read a bare signals.csv (no labels); rows are max-abs normalized."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing signals file {path}")
    rows: list[np.ndarray] = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != SEGMENT_LEN:
                raise DataError(
                    f"{path}:{lineno}: expected {SEGMENT_LEN} values, got {len(fields)}"
                )
            try:
                row = np.array([float(v) for v in fields])
            except ValueError as e:
                raise DataError(f"{path}:{lineno}: {e}") from e
            if not np.all(np.isfinite(row)):
                raise DataError(f"{path}:{lineno}: non-finite sample")
            rows.append(normalize_maxabs(row))
    if not rows:
        raise DataError(f"{path}: no segments")
    return np.stack(rows)


def split(data: list[LabeledSegment], ratio: float = 0.7, seed: int = 0) -> DatasetSplit:
    """Deterministic shuffle by `seed`; first floor(ratio*n) segments train."""
    if len(data) < 2:
        raise DataError("need at least 2 segments to split")
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio {ratio} outside (0, 1)")
    order = np.random.Generator(np.random.PCG64(seed)).permutation(len(data))
    n_train = int(np.floor(ratio * len(data)))
    train = [data[i] for i in order[:n_train]]
    test = [data[i] for i in order[n_train:]]
    return DatasetSplit(train=train, test=test, split_seed=seed)
