"""Framing, frame energies, energy VAD and MFCC(+deltas) extraction."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class FrameSpec:
    frame_len: float = 0.02
    frame_shift: float = 0.01

    def __post_init__(self):
        if not 0 < self.frame_shift <= self.frame_len:
            raise ConfigError(
                f"need 0 < frame_shift <= frame_len, got {self.frame_shift}, {self.frame_len}"
            )

    def samples(self, sample_rate: int) -> tuple[int, int]:
        return int(round(self.frame_len * sample_rate)), int(round(self.frame_shift * sample_rate))


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise DataError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64).ravel())

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureSequence:
    """Per-frame features with frame start times, energies and voiced mask.

    ``voiced_mask`` defaults to all-True; :func:`energy_vad` sets it.
    """

    features: np.ndarray
    frame_starts: np.ndarray
    energies: np.ndarray
    spec: FrameSpec = field(default_factory=FrameSpec)
    voiced_mask: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        self.frame_starts = np.asarray(self.frame_starts, dtype=np.float64)
        self.energies = np.asarray(self.energies, dtype=np.float64)
        n = self.features.shape[0]
        if len(self.frame_starts) != n or len(self.energies) != n:
            raise DataError(
                f"row count mismatch: features {n}, starts {len(self.frame_starts)}, "
                f"energies {len(self.energies)}"
            )
        if n > 1 and np.any(np.diff(self.frame_starts) <= 0):
            raise DataError("frame_starts must be strictly increasing")
        if self.voiced_mask is None:
            self.voiced_mask = np.ones(n, dtype=bool)
        else:
            self.voiced_mask = np.asarray(self.voiced_mask, dtype=bool)
            if len(self.voiced_mask) != n:
                raise DataError("voiced_mask length does not match frame count")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_voiced(self) -> int:
        return int(self.voiced_mask.sum())

    def voiced(self) -> "FeatureSequence":
        """Return only the voiced rows (F_v with locations P_v)."""
        m = self.voiced_mask
        return FeatureSequence(
            self.features[m], self.frame_starts[m], self.energies[m], self.spec, np.ones(int(m.sum()), bool)
        )

    def replace(self, **kw) -> "FeatureSequence":
        return dataclasses.replace(self, **kw)


def frame_signal(signal: AudioSignal, spec: FrameSpec) -> tuple[np.ndarray, np.ndarray]:
    """Cut ``signal`` into overlapping frames.

    Returns
    -------
    frames : ndarray, shape (n_frames, frame_len_samples)
    starts : ndarray of frame start times in seconds
    """
    flen, fshift = spec.samples(signal.sample_rate)
    n = len(signal.samples)
    if flen < 1 or fshift < 1:
        raise ConfigError("frame spec rounds to zero samples at this sample rate")
    if n < flen:
        raise DataError(f"signal too short: {n} samples < one frame of {flen}")
    count = (n - flen) // fshift + 1
    frames = np.lib.stride_tricks.sliding_window_view(signal.samples, flen)[::fshift][:count]
    starts = np.arange(count) * fshift / signal.sample_rate
    return np.array(frames), starts


def frame_energy(frames: np.ndarray) -> np.ndarray:
    """Mean squared amplitude of each frame."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    return np.mean(frames * frames, axis=1)


def vad_mask(energies: np.ndarray, factor: float = 0.06) -> np.ndarray:
    energies = np.asarray(energies, dtype=np.float64)
    return energies >= factor * energies.mean()


def energy_vad(seq: FeatureSequence, factor: float = 0.06) -> FeatureSequence:
    """Mark frames with energy at least ``factor`` times the mean frame energy as voiced.

    Raises :class:`DataError` when no frame survives.
    """
    mask = vad_mask(seq.energies, factor)
    if not mask.any():
        raise DataError("energy VAD found no voiced frames")
    return seq.replace(voiced_mask=mask)


@dataclass(frozen=True)
class MfccConfig:
    frame: FrameSpec = field(default_factory=FrameSpec)
    n_ceps: int = 13
    n_mels: int = 26
    n_fft: int = 512
    preemphasis: float = 0.97
    f_min: float = 0.0
    f_max: float | None = None
    log_floor: float = 1e-10


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, n_fft: int, sample_rate: int, f_min: float = 0.0,
                   f_max: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Triangular mel filters over the rfft bins.

    Returns the (n_mels, n_fft//2+1) weight matrix and the filter center frequencies in Hz.
    """
    nyquist = sample_rate / 2.0
    f_max = nyquist if f_max is None else f_max
    if f_max > nyquist or f_min < 0 or f_min >= f_max:
        raise ConfigError(f"invalid mel range [{f_min}, {f_max}] for Nyquist {nyquist}")
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), n_mels + 2))
    bin_hz = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    lower, center, upper = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rising = (bin_hz - lower) / (center - lower)
    falling = (upper - bin_hz) / (upper - center)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    return fb, edges_hz[1:-1]


def cepstra_from_log_energies(log_fb: np.ndarray, n_ceps: int) -> np.ndarray:
    return dct(log_fb, type=2, norm="ortho", axis=-1)[..., :n_ceps]


def mfcc(signal: AudioSignal, cfg: MfccConfig = MfccConfig()) -> FeatureSequence:
    """Static MFCCs, one row per frame. Energies come from the raw (un-emphasised) frames."""
    if cfg.n_mels < cfg.n_ceps:
        raise ConfigError(f"n_mels ({cfg.n_mels}) must be >= n_ceps ({cfg.n_ceps})")
    frames, starts = frame_signal(signal, cfg.frame)
    if frames.shape[1] > cfg.n_fft:
        raise ConfigError(f"frame of {frames.shape[1]} samples exceeds n_fft={cfg.n_fft}")
    energies = frame_energy(frames)

    x = signal.samples
    emph = np.append(x[0], x[1:] - cfg.preemphasis * x[:-1])
    emph_frames, _ = frame_signal(AudioSignal(emph, signal.sample_rate), cfg.frame)
    windowed = emph_frames * np.hamming(emph_frames.shape[1])
    power = np.abs(np.fft.rfft(windowed, n=cfg.n_fft, axis=1)) ** 2 / cfg.n_fft

    fb, _ = mel_filterbank(cfg.n_mels, cfg.n_fft, signal.sample_rate, cfg.f_min, cfg.f_max)
    log_fb = np.log(np.maximum(power @ fb.T, cfg.log_floor))
    ceps = cepstra_from_log_energies(log_fb, cfg.n_ceps)
    return FeatureSequence(ceps, starts, energies, cfg.frame)


def delta(feats: np.ndarray, win: int = 2) -> np.ndarray:
    """Regression deltas with replicated edge frames."""
    feats = np.asarray(feats, dtype=np.float64)
    n = feats.shape[0]
    padded = np.pad(feats, ((win, win), (0, 0)), mode="edge")
    denom = 2.0 * sum(k * k for k in range(1, win + 1))
    out = np.zeros_like(feats)
    for k in range(1, win + 1):
        out += k * (padded[win + k:win + k + n] - padded[win - k:win - k + n])
    return out / denom


def deltas(seq: FeatureSequence, win: int = 2) -> FeatureSequence:
    """Append velocity and acceleration coefficients (d -> 3d)."""
    if win < 1:
        raise ConfigError("delta window must be >= 1")
    if len(seq) <= 2 * win:
        raise DataError(f"sequence of {len(seq)} frames too short for delta window {win}")
    d1 = delta(seq.features, win)
    d2 = delta(d1, win)
    return seq.replace(features=np.hstack([seq.features, d1, d2]))


def read_wav(path) -> AudioSignal:
    """Read a mono PCM16 or float32 WAV file into [-1, 1] floats."""
    from scipy.io import wavfile

    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError) as exc:
        raise DataError(f"{path}: cannot read WAV ({exc})") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    if samples.size == 0:
        raise DataError(f"{path}: empty audio")
    return AudioSignal(samples, int(rate))


def extract_features(signal: AudioSignal, cfg: MfccConfig = MfccConfig(), delta_win: int = 2,
                     expected_rate: int | None = 16000) -> FeatureSequence:
    """MFCC + deltas (39-dim with the defaults)."""
    if expected_rate is not None and signal.sample_rate != expected_rate:
        raise DataError(f"sample rate {signal.sample_rate} != expected {expected_rate}; resample first")
    return deltas(mfcc(signal, cfg), delta_win)
