"""5G NR PSS/SSB baseband synthesis and labeled capture generation.

Transmit side of the workbench: the length-127 PSS m-sequence, SSB grid
mapping, CP-OFDM modulation, a tapped-delay channel with circularly
symmetric Gaussian noise, jammer injection, and batch synthesis of
labeled pure/jammed captures with a plain-text manifest.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import rng as _rng
from .errors import DataError

K_PSS = 127          # m-sequence length
K_SSB = 240          # SSB grid width in subcarriers
PSS_BIN_LO = 56      # first occupied grid bin
PSS_BIN_HI = 182     # last occupied grid bin, inclusive

JAMMER_KINDS = ("cw_tone", "gaussian_wideband", "pss_replay")

# LFSR initial state s(0)..s(6); register shown MSB-first is [1 1 1 0 1 1 0].
_LFSR_INIT = (0, 1, 1, 0, 1, 1, 1)


def gen_pss_bits() -> np.ndarray:
    """Length-127 PSS m-sequence from the degree-7 LFSR.

    Recurrence s(i+7) = (s(i+4) + s(i)) mod 2, seeded with the standard
    NR initial state.  Returns a uint8 array of 0/1 values.
    """
    bits = np.empty(K_PSS, dtype=np.uint8)
    bits[:7] = _LFSR_INIT
    for i in range(K_PSS - 7):
        bits[i + 7] = (bits[i + 4] + bits[i]) & 1
    return bits


@dataclass(frozen=True)
class PssSequence:
    """BPSK PSS sequence for one sector identity (0, 1 or 2)."""

    symbols: np.ndarray  # float64, values in {-1.0, +1.0}, length 127
    sector_id: int


def gen_pss_symbols(sector_id: int) -> PssSequence:
    """PSS symbols for ``sector_id``: 1 - 2*s((k + 43*sector_id) mod 127)."""
    if sector_id not in (0, 1, 2):
        raise ValueError(f"sector_id must be 0, 1 or 2, got {sector_id}")
    bits = gen_pss_bits()
    k = np.arange(K_PSS)
    symbols = 1.0 - 2.0 * bits[(k + 43 * sector_id) % K_PSS].astype(np.float64)
    return PssSequence(symbols=symbols, sector_id=sector_id)


@dataclass(frozen=True)
class FrequencyGrid:
    """One OFDM symbol worth of SSB subcarrier values (width 240)."""

    bins: np.ndarray  # complex128, length K_SSB
    symbol_index: int = 0


def map_ssb_grid(pss: PssSequence) -> FrequencyGrid:
    """Map the 127 PSS symbols onto grid bins 56..182; the rest are zero."""
    bins = np.zeros(K_SSB, dtype=np.complex128)
    bins[PSS_BIN_LO:PSS_BIN_HI + 1] = pss.symbols
    return FrequencyGrid(bins=bins, symbol_index=0)


@dataclass
class IQBuffer:
    """Complex baseband sample stream with rate and carrier metadata."""

    samples: np.ndarray  # complex128, 1-D
    sample_rate: float
    center_freq: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("IQBuffer needs a nonempty 1-D sample array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return self.samples.size


def ofdm_modulate(grid: FrequencyGrid, fft_size: int = 1024, cp_len: int = 72,
                  sample_rate: float = 15.625e6) -> IQBuffer:
    """CP-OFDM modulate one SSB symbol.

    The 240 grid bins are centered in the ``fft_size``-wide spectrum
    (bin k sits at subcarrier offset k - 120 from DC) and the inverse
    DFT is scaled by 1/K_SSB, so a single unit bin yields a complex
    exponential of modulus 1/240.  The last ``cp_len`` output samples
    are prepended as the cyclic prefix.
    """
    if fft_size < K_SSB:
        raise ValueError(f"fft_size must be >= {K_SSB}, got {fft_size}")
    if cp_len < 0:
        raise ValueError("cp_len must be >= 0")
    spectrum = np.zeros(fft_size, dtype=np.complex128)
    offsets = (np.arange(K_SSB) - K_SSB // 2) % fft_size
    spectrum[offsets] = grid.bins
    body = np.fft.ifft(spectrum) * (fft_size / K_SSB)
    if cp_len:
        samples = np.concatenate([body[-cp_len:], body])
    else:
        samples = body
    return IQBuffer(samples=samples, sample_rate=sample_rate)


@dataclass
class ChannelProfile:
    """Tapped-delay channel plus white CSCG noise of ``noise_power``."""

    taps: Sequence[complex] = (1.0 + 0.0j,)
    noise_power: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.complex128)
        if self.taps.size == 0:
            raise ValueError("channel needs at least one tap")
        if self.noise_power < 0:
            raise ValueError("noise_power must be >= 0")


def apply_channel(iq: IQBuffer, ch: ChannelProfile) -> IQBuffer:
    """Linear convolution with the taps (truncated to the input length)
    plus seeded circularly symmetric complex Gaussian noise."""
    n = len(iq)
    out = np.convolve(iq.samples, ch.taps)[:n]
    if ch.noise_power > 0:
        g = _rng.generator(ch.seed, _rng.TAG_RECORD)
        scale = np.sqrt(ch.noise_power / 2.0)
        out = out + scale * (g.standard_normal(n) + 1j * g.standard_normal(n))
    return IQBuffer(samples=out, sample_rate=iq.sample_rate, center_freq=iq.center_freq)


@dataclass
class JammerSpec:
    """Interference waveform description.

    ``gain_db`` is relative to the RMS amplitude of the buffer the jammer
    is injected into.  The acquisition sweep uses -80..-40 dB in 2 dB
    steps; other values are accepted for experiments.
    """

    kind: str = "cw_tone"
    gain_db: float = -60.0
    tone_offset: float = 0.0  # Hz, cw_tone only
    seed: int = 0

    def __post_init__(self):
        if self.kind not in JAMMER_KINDS:
            raise ValueError(f"unknown jammer kind {self.kind!r}; expected one of {JAMMER_KINDS}")


def jammer_waveform(j: JammerSpec, n: int, sample_rate: float) -> np.ndarray:
    """Unit-RMS jammer waveform of length ``n`` for the given spec."""
    g = _rng.generator(j.seed, _rng.TAG_JAMMER)
    if j.kind == "cw_tone":
        phase0 = g.uniform(0.0, 2.0 * np.pi)
        t = np.arange(n)
        x = np.exp(1j * (2.0 * np.pi * j.tone_offset * t / sample_rate + phase0))
    elif j.kind == "gaussian_wideband":
        x = (g.standard_normal(n) + 1j * g.standard_normal(n)) / np.sqrt(2.0)
    elif j.kind == "pss_replay":
        burst = ofdm_modulate(map_ssb_grid(gen_pss_symbols(0)),
                              sample_rate=sample_rate).samples
        if n < burst.size:
            raise ValueError("buffer too short for a pss_replay jammer")
        delay = int(g.integers(0, max(1, n - burst.size)))
        x = np.zeros(n, dtype=np.complex128)
        x[delay:delay + burst.size] = burst
    else:  # pragma: no cover - guarded by JammerSpec
        raise ValueError(f"unknown jammer kind {j.kind!r}")
    rms = np.sqrt(np.mean(np.abs(x) ** 2))
    return x / rms


def inject_jammer(iq: IQBuffer, j: JammerSpec) -> IQBuffer:
    """Add the jammer at 10^(gain_db/20) times the input buffer's RMS."""
    x = jammer_waveform(j, len(iq), iq.sample_rate)
    rms = np.sqrt(np.mean(np.abs(iq.samples) ** 2))
    gain = 10.0 ** (j.gain_db / 20.0)
    out = iq.samples + gain * rms * x
    return IQBuffer(samples=out, sample_rate=iq.sample_rate, center_freq=iq.center_freq)


@dataclass
class CaptureRecord:
    """One labeled capture: IQ buffer plus everything needed to regenerate it."""

    iq: IQBuffer
    label: str  # "pure" or "jammed"
    jammer: Optional[JammerSpec] = None
    snr_db: float = 0.0
    cfo_hz: float = 0.0
    timing_offset: int = 0
    seed: int = 0
    record_id: str = ""

    def __post_init__(self):
        if self.label not in ("pure", "jammed"):
            raise ValueError(f"label must be 'pure' or 'jammed', got {self.label!r}")
        if (self.label == "jammed") != (self.jammer is not None):
            raise ValueError("label 'jammed' requires a jammer spec, 'pure' forbids one")


@dataclass
class SynthConfig:
    """Everything the dataset synthesizer needs, in one place.

    ``jammer_calib_db`` stands in for the unknown absolute power chain of
    a physical capture rig (jammer output power, combiner loss, receiver
    gain).  The nominal transmit-gain sweep is recorded per record; the
    calibration offset is applied on top of it at injection time and
    recorded once in the manifest.
    """

    n_pure: int
    n_jam: int
    master_seed: int = 1
    sample_rate: float = 15.625e6
    center_freq: float = 632e6
    fft_size: int = 1024
    cp_len: int = 72
    capture_len: int = 8192
    sector_id: int = 0
    snr_db: tuple[float, float] = (10.0, 30.0)
    gain_sweep_db: tuple[float, float, float] = (-80.0, -40.0, 2.0)
    jammer_kinds: tuple[str, ...] = JAMMER_KINDS
    jammer_calib_db: float = 52.0
    cfo_max_hz: float = 5000.0
    timing_offset: tuple[int, int] = (64, 2048)
    channel_taps: tuple[complex, ...] = (1.0 + 0.0j,)
    traffic: bool = True
    traffic_power_db: float = -3.0  # relative to the PSS symbol power
    # occupied sub-bands of the shared downlink spectrum:
    # (center offset in bins from DC, width in bins, power in dB relative
    # to traffic_power_db)
    traffic_bands: tuple[tuple[int, int, float], ...] = ((0, 440, 0.0), (-242, 25, -6.0))
    traffic_duty: float = 0.6       # per-slot, per-band scheduling probability
    traffic_block_syms: int = 4     # symbols per scheduling slot

    def gain_levels(self) -> np.ndarray:
        lo, hi, step = self.gain_sweep_db
        return np.arange(lo, hi + step / 2.0, step)


def _traffic_stream(cfg: SynthConfig, g: np.random.Generator,
                    ref_power: float) -> np.ndarray:
    """Bursty CP-OFDM downlink traffic over shaped sub-bands.

    Stands in for the live multi-carrier activity an over-the-air
    capture records alongside the SSB: each band carries QPSK symbols
    and is scheduled in ``traffic_block_syms``-symbol slots with
    probability ``traffic_duty``, so the spectrogram shows occupied
    carriers, guard gaps, and idle stretches the way a shared band
    does.  Without it every row away from the PSS is pure noise, which
    no real downlink looks like.
    """
    sym_len = cfg.fft_size + cfg.cp_len
    n_sym = cfg.capture_len // sym_len + 2
    n_blocks = (n_sym + cfg.traffic_block_syms - 1) // cfg.traffic_block_syms
    spectrum = np.zeros((n_sym, cfg.fft_size), dtype=np.complex128)
    # per-band amplitude that puts an active band's per-sample power at
    # ref_power * 10^((traffic_power_db + band_db)/10)
    for center, width, band_db in cfg.traffic_bands:
        power = ref_power * 10.0 ** ((cfg.traffic_power_db + band_db) / 10.0)
        # mean |ifft|^2 of a width-bin grid at amplitude a is a^2*width/N^2
        amp = np.sqrt(power / width) * cfg.fft_size
        offsets = (np.arange(width) - width // 2 + center) % cfg.fft_size
        qpsk = (g.integers(0, 2, (n_sym, width)) * 2 - 1
                + 1j * (g.integers(0, 2, (n_sym, width)) * 2 - 1)) / np.sqrt(2)
        active = np.repeat(g.random(n_blocks) < cfg.traffic_duty,
                           cfg.traffic_block_syms)[:n_sym]
        spectrum[:, offsets] += amp * qpsk * active[:, None]
    body = np.fft.ifft(spectrum, axis=1)
    stream = np.concatenate([body[:, -cfg.cp_len:], body], axis=1).ravel()
    return stream[:cfg.capture_len]


def _synth_capture(cfg: SynthConfig, index: int, label: str,
                   gain_db: float | None, kind: str | None) -> CaptureRecord:
    seed = _rng.derive_key(cfg.master_seed, _rng.TAG_RECORD, index)
    g = _rng.generator(cfg.master_seed, _rng.TAG_RECORD, index)

    burst = ofdm_modulate(map_ssb_grid(gen_pss_symbols(cfg.sector_id)),
                          cfg.fft_size, cfg.cp_len, cfg.sample_rate).samples
    lo, hi = cfg.timing_offset
    hi = min(hi, cfg.capture_len - burst.size)
    if hi < lo:
        raise ValueError("capture_len too short for the configured timing offsets")
    t0 = int(g.integers(lo, hi + 1))
    placed = np.zeros(cfg.capture_len, dtype=np.complex128)
    placed[t0:t0 + burst.size] = burst

    snr_db = float(g.uniform(*cfg.snr_db))
    faded = np.convolve(placed, np.asarray(cfg.channel_taps, np.complex128))[:cfg.capture_len]
    sym_power = np.mean(np.abs(faded[t0:t0 + burst.size]) ** 2)
    noise_power = sym_power * 10.0 ** (-snr_db / 10.0)

    x = faded
    if cfg.traffic:
        stream = _traffic_stream(cfg, g, sym_power)
        stream[t0:t0 + burst.size] = 0.0  # no downlink scheduling on the SSB symbol
        x = x + stream

    jammer = None
    if label == "jammed":
        jammer = JammerSpec(kind=kind, gain_db=float(gain_db), seed=seed,
                            tone_offset=float(g.uniform(-cfg.sample_rate / 6,
                                                        cfg.sample_rate / 6)))
        wave = jammer_waveform(jammer, cfg.capture_len, cfg.sample_rate)
        rms = np.sqrt(sym_power)
        eff_gain = 10.0 ** ((jammer.gain_db + cfg.jammer_calib_db) / 20.0)
        x = x + eff_gain * rms * wave

    cfo_hz = float(g.uniform(-cfg.cfo_max_hz, cfg.cfo_max_hz))
    t = np.arange(cfg.capture_len)
    x = x * np.exp(2j * np.pi * cfo_hz * t / cfg.sample_rate)

    scale = np.sqrt(noise_power / 2.0)
    x = x + scale * (g.standard_normal(cfg.capture_len)
                     + 1j * g.standard_normal(cfg.capture_len))

    iq = IQBuffer(samples=x, sample_rate=cfg.sample_rate, center_freq=cfg.center_freq)
    return CaptureRecord(iq=iq, label=label, jammer=jammer, snr_db=snr_db,
                         cfo_hz=cfo_hz, timing_offset=t0, seed=seed,
                         record_id=f"rec_{index:05d}")


def synth_dataset(cfg: SynthConfig) -> list[CaptureRecord]:
    """Synthesize a balanced labeled capture set.

    Jammed records walk the gain sweep round-robin (level i % n_levels)
    so every level is covered within one count of evenly; jammer kinds
    rotate in blocks of one full sweep.  Deterministic in
    ``cfg.master_seed``.
    """
    if cfg.n_pure <= 0 or cfg.n_jam <= 0:
        raise ValueError("n_pure and n_jam must both be positive")
    levels = cfg.gain_levels()
    records = []
    for i in range(cfg.n_pure):
        records.append(_synth_capture(cfg, i, "pure", None, None))
    for i in range(cfg.n_jam):
        gain = float(levels[i % levels.size])
        kind = cfg.jammer_kinds[(i // levels.size) % len(cfg.jammer_kinds)]
        records.append(_synth_capture(cfg, cfg.n_pure + i, "jammed", gain, kind))
    return records


# ---------------------------------------------------------------------------
# dataset store: per-record IQ CSV files plus a key=value manifest

def save_iq_csv(iq: IQBuffer, path: str | os.PathLike) -> None:
    """Write I,Q columns as decimal floats, one sample per row."""
    table = np.column_stack([iq.samples.real, iq.samples.imag])
    np.savetxt(path, table, delimiter=",", header="I,Q", comments="", fmt="%.17g")


def load_iq_csv(path: str | os.PathLike, sample_rate: float,
                center_freq: float = 0.0) -> IQBuffer:
    """Read a two-column I,Q CSV; a non-numeric header row is skipped.

    Raises DataError naming the offending line for malformed rows.
    """
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    start = 0
    if lines:
        first = lines[0].replace(",", " ").split()
        try:
            [float(tok) for tok in first]
        except ValueError:
            start = 1
    values = np.empty((max(len(lines) - start, 0), 2), dtype=np.float64)
    count = 0
    for lineno in range(start, len(lines)):
        line = lines[lineno].strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise DataError(f"{path}: line {lineno + 1}: expected 2 columns, got {len(parts)}")
        try:
            values[count, 0] = float(parts[0])
            values[count, 1] = float(parts[1])
        except ValueError:
            raise DataError(f"{path}: line {lineno + 1}: non-numeric value") from None
        count += 1
    if count == 0:
        raise DataError(f"{path}: no samples")
    samples = values[:count, 0] + 1j * values[:count, 1]
    return IQBuffer(samples=samples, sample_rate=sample_rate, center_freq=center_freq)


def _format_meta(cfg: SynthConfig) -> list[str]:
    keys = ("master_seed", "sample_rate", "center_freq", "fft_size", "cp_len",
            "capture_len", "sector_id", "jammer_calib_db", "cfo_max_hz",
            "n_pure", "n_jam", "traffic", "traffic_power_db", "traffic_duty")
    lines = [f"meta {k}={getattr(cfg, k)!r}" for k in keys]
    lines.append(f"meta snr_db={cfg.snr_db[0]!r},{cfg.snr_db[1]!r}")
    lines.append(f"meta gain_sweep_db={cfg.gain_sweep_db[0]!r},{cfg.gain_sweep_db[1]!r},{cfg.gain_sweep_db[2]!r}")
    lines.append(f"meta jammer_kinds={','.join(cfg.jammer_kinds)}")
    return lines


def write_dataset(records: Sequence[CaptureRecord], outdir: str | os.PathLike,
                  cfg: SynthConfig) -> None:
    """Write per-record IQ CSVs plus ``manifest.txt`` into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    lines = _format_meta(cfg)
    for rec in records:
        fname = f"{rec.record_id}.csv"
        save_iq_csv(rec.iq, os.path.join(outdir, fname))
        parts = [f"record id={rec.record_id}", f"file={fname}", f"label={rec.label}",
                 f"seed={rec.seed}", f"snr_db={rec.snr_db!r}",
                 f"cfo_hz={rec.cfo_hz!r}", f"timing_offset={rec.timing_offset}"]
        if rec.jammer is not None:
            parts += [f"kind={rec.jammer.kind}", f"gain_db={rec.jammer.gain_db!r}",
                      f"tone_offset={rec.jammer.tone_offset!r}"]
        lines.append(" ".join(parts))
    with open(os.path.join(outdir, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path: str | os.PathLike) -> tuple[dict, list[dict]]:
    """Parse a manifest into (meta dict, list of per-record dicts)."""
    meta: dict = {}
    records: list[dict] = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            kind, _, rest = line.partition(" ")
            pairs = {}
            for tok in rest.split():
                k, _, v = tok.partition("=")
                if not _:
                    raise DataError(f"{path}: line {lineno}: malformed token {tok!r}")
                pairs[k] = v
            if kind == "meta":
                meta.update(pairs)
            elif kind == "record":
                records.append(pairs)
            else:
                raise DataError(f"{path}: line {lineno}: unknown entry {kind!r}")
    return meta, records


def read_dataset(indir: str | os.PathLike) -> tuple[list[CaptureRecord], dict]:
    """Load a dataset directory written by :func:`write_dataset`."""
    manifest = os.path.join(indir, "manifest.txt")
    if not os.path.exists(manifest):
        raise DataError(f"no manifest.txt in {indir}")
    meta, rows = read_manifest(manifest)
    sample_rate = float(meta.get("sample_rate", 15.625e6))
    center_freq = float(meta.get("center_freq", 0.0))
    records = []
    for row in rows:
        iq = load_iq_csv(os.path.join(indir, row["file"]), sample_rate, center_freq)
        jammer = None
        if row.get("kind"):
            jammer = JammerSpec(kind=row["kind"], gain_db=float(row["gain_db"]),
                                tone_offset=float(row.get("tone_offset", 0.0)),
                                seed=int(row.get("seed", 0)))
        records.append(CaptureRecord(
            iq=iq, label=row["label"], jammer=jammer,
            snr_db=float(row.get("snr_db", 0.0)),
            cfo_hz=float(row.get("cfo_hz", 0.0)),
            timing_offset=int(row.get("timing_offset", 0)),
            seed=int(row.get("seed", 0)), record_id=row["id"]))
    return records, meta
