"""Log-Mel audio front-end.

Raw audio -> 16 kHz mono in [-1, 1] -> STFT (25 ms Hann window, 10 ms
hop, 512-point FFT, 257 retained bins) -> 80-channel Mel filterbank ->
natural-log energies floored at 1e-10. All DSP here runs in float64 on
plain numpy; training casts to float32 downstream.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

TARGET_RATE = 16000
WINDOW_LENGTH = 400  # 25 ms at 16 kHz
HOP_LENGTH = 160  # 10 ms
FFT_SIZE = 512
NUM_MELS = 80
POWER_FLOOR = 1e-10
FRAME_RATE = 100  # log-Mel frames per second

_SINC_TAPS = 16  # zero-crossings per side for band-limited resampling


@dataclass
class AudioSignal:
    samples: np.ndarray  # float64 amplitudes in [-1, 1]
    sample_rate: int


@dataclass
class StftConfig:
    window_length: int = WINDOW_LENGTH
    hop: int = HOP_LENGTH
    fft_size: int = FFT_SIZE
    window: np.ndarray = field(default_factory=lambda: np.hanning(WINDOW_LENGTH))

    def __post_init__(self):
        if self.hop > self.window_length:
            raise ValueError(f"hop {self.hop} exceeds window length {self.window_length}")
        if self.fft_size < self.window_length:
            raise ValueError(
                f"fft_size {self.fft_size} smaller than window length {self.window_length}"
            )
        if self.window.size != self.window_length:
            raise ValueError("window taper length disagrees with window_length")


@dataclass
class Spectrogram:
    values: np.ndarray  # (frames, bins) complex
    fft_size: int
    hop: int
    sample_rate: int

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_bins(self) -> int:
        return self.values.shape[1]


@dataclass
class MelFilterbank:
    weights: np.ndarray  # (num_mels, bins), nonnegative
    centers_hz: np.ndarray  # (num_mels,) strictly increasing


@dataclass
class LogMelSpectrogram:
    values: np.ndarray  # (frames, 80) natural-log energies
    frame_rate: int = FRAME_RATE

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]


# -- WAV ingestion ---------------------------------------------------------


def read_wav(path) -> AudioSignal:
    """Read a 16-bit PCM WAV file; stereo is downmixed by channel mean."""
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    if width != 2:
        raise ValueError(f"{path}: expected 16-bit PCM, got sample width {width}")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels).mean(axis=1)
    return AudioSignal(samples=samples, sample_rate=rate)


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(ints.tobytes())


# -- preprocessing ---------------------------------------------------------


def resample_to_16k(signal: AudioSignal) -> AudioSignal:
    """Band-limited resampling to 16 kHz via windowed-sinc interpolation."""
    if signal.sample_rate <= 0:
        raise ValueError(f"sample rate must be positive, got {signal.sample_rate}")
    if signal.samples.size == 0:
        raise ValueError("cannot resample an empty signal")
    if signal.sample_rate == TARGET_RATE:
        return signal
    x = np.asarray(signal.samples, dtype=np.float64)
    n_in = x.size
    ratio = TARGET_RATE / signal.sample_rate
    n_out = int(round(n_in * ratio))
    cutoff = min(1.0, ratio)  # relative to the input Nyquist
    half_width = int(np.ceil(_SINC_TAPS / cutoff))
    centers = np.arange(n_out) / ratio  # output positions in input samples
    base = np.floor(centers).astype(np.int64)
    offsets = np.arange(-half_width, half_width + 1)
    idx = base[:, None] + offsets[None, :]
    dist = centers[:, None] - idx  # tap distance in input samples
    kernel = cutoff * np.sinc(cutoff * dist)
    kernel *= 0.5 * (1.0 + np.cos(np.pi * np.clip(dist / half_width, -1.0, 1.0)))
    valid = (idx >= 0) & (idx < n_in)
    kernel *= valid
    gain = kernel.sum(axis=1)
    gain[gain == 0.0] = 1.0
    taps = x[np.clip(idx, 0, n_in - 1)]
    out = (taps * kernel).sum(axis=1) / gain
    return AudioSignal(samples=out, sample_rate=TARGET_RATE)


def normalize_amplitude(signal: AudioSignal) -> AudioSignal:
    """Scale so the peak magnitude is 1; all-zero input stays all-zero."""
    peak = np.max(np.abs(signal.samples)) if signal.samples.size else 0.0
    if peak == 0.0:
        return AudioSignal(samples=signal.samples.copy(), sample_rate=signal.sample_rate)
    return AudioSignal(samples=signal.samples / peak, sample_rate=signal.sample_rate)


# -- spectral analysis -------------------------------------------------------


def num_stft_frames(num_samples: int, cfg: StftConfig | None = None) -> int:
    cfg = cfg or StftConfig()
    return 1 + (num_samples - cfg.window_length) // cfg.hop


def stft(signal: AudioSignal, cfg: StftConfig | None = None) -> Spectrogram:
    """Hopped windowed DFT; frames zero-padded to fft_size, bins 0..N/2 kept."""
    cfg = cfg or StftConfig()
    if signal.sample_rate != TARGET_RATE:
        raise ValueError(f"stft expects {TARGET_RATE} Hz input, got {signal.sample_rate}")
    x = np.asarray(signal.samples, dtype=np.float64)
    if x.size < cfg.window_length:
        raise ValueError(
            f"signal of {x.size} samples is shorter than one {cfg.window_length}-sample window"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_length)[:: cfg.hop]
    windowed = frames * cfg.window
    spec = np.fft.rfft(windowed, n=cfg.fft_size, axis=1)
    return Spectrogram(values=spec, fft_size=cfg.fft_size, hop=cfg.hop, sample_rate=TARGET_RATE)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def build_mel_filterbank(
    fft_bins: int = FFT_SIZE // 2 + 1,
    num_mels: int = NUM_MELS,
    f_min: float = 0.0,
    f_max: float = 8000.0,
    sample_rate: int = TARGET_RATE,
    fft_size: int = FFT_SIZE,
) -> MelFilterbank:
    """Triangular filters, linear in mel, centers equally spaced on the mel scale."""
    if num_mels < 1:
        raise ValueError(f"need at least one mel filter, got {num_mels}")
    nyquist = sample_rate / 2.0
    if f_max > nyquist:
        raise ValueError(f"f_max {f_max} Hz exceeds Nyquist {nyquist} Hz")
    mel_points = np.linspace(hz_to_mel(f_min), hz_to_mel(f_max), num_mels + 2)
    bin_mels = hz_to_mel(np.arange(fft_bins) * sample_rate / fft_size)
    lower = mel_points[:-2][:, None]
    center = mel_points[1:-1][:, None]
    upper = mel_points[2:][:, None]
    rising = (bin_mels[None, :] - lower) / (center - lower)
    falling = (upper - bin_mels[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return MelFilterbank(weights=weights, centers_hz=mel_to_hz(mel_points[1:-1]))


def log_mel(spec: Spectrogram, fb: MelFilterbank) -> LogMelSpectrogram:
    """Natural log of Mel-projected power, floored at POWER_FLOOR."""
    if spec.num_bins != fb.weights.shape[1]:
        raise ValueError(
            f"spectrogram has {spec.num_bins} bins, filterbank expects {fb.weights.shape[1]}"
        )
    power = np.abs(spec.values) ** 2
    energies = power @ fb.weights.T
    return LogMelSpectrogram(values=np.log(np.maximum(energies, POWER_FLOOR)))


def wav_to_logmel(path) -> LogMelSpectrogram:
    """Full ingestion chain: WAV file to the T x 80 log-Mel matrix."""
    sig = normalize_amplitude(resample_to_16k(read_wav(path)))
    return log_mel(stft(sig), build_mel_filterbank())
