//! Audio ingestion and short-time spectral analysis shared by the feature
//! front-ends.

use std::f64::consts::PI;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::Format(format!("sample_rate={sample_rate}, expected {SAMPLE_RATE}")));
        }
        if samples.is_empty() {
            return Err(Error::TooShort("empty waveform".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// 16 kHz waveform; panics on empty or non-finite input. For synthesized signals.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        Self::new(samples, SAMPLE_RATE).expect("valid synthesized waveform")
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|x| x * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

pub(crate) fn check_wav_spec(spec: &hound::WavSpec) -> std::result::Result<(), String> {
    if spec.channels != 1 {
        return Err(format!("channels={}", spec.channels));
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(format!("sample_rate={}", spec.sample_rate));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(format!(
            "encoding={:?}/{} bits (expected PCM 16-bit)",
            spec.sample_format, spec.bits_per_sample
        ));
    }
    Ok(())
}

/// Reads a mono 16 kHz PCM16 RIFF/WAVE file, scaling samples by 1/32768.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(format!("{}: {other}", path.display())),
    })?;
    check_wav_spec(&reader.spec()).map_err(|m| Error::Format(format!("{}: {m}", path.display())))?;
    let declared = reader.len() as usize;
    let samples: Vec<f64> = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| match e {
            hound::Error::IoError(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::new(std::io::ErrorKind::UnexpectedEof, other.to_string())),
        })?;
    if samples.len() != declared {
        return Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!("truncated: header declares {declared} samples, read {}", samples.len()),
            ),
        ));
    }
    Waveform::new(samples, SAMPLE_RATE)
}

/// Writes a waveform as PCM16, rounding and saturating each sample.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format(other.to_string()),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &x in w.samples() {
        let v = (x * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    /// Periodic Hann, `0.5 - 0.5 cos(2πn/N)`.
    Hann,
    /// Symmetric Hamming, `0.54 - 0.46 cos(2πn/(N-1))`.
    Hamming,
}

pub fn window(kind: WindowKind, len: usize) -> Vec<f64> {
    match kind {
        WindowKind::Hann => (0..len)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
            .collect(),
        WindowKind::Hamming => {
            let denom = (len.max(2) - 1) as f64;
            (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub frame_len: usize,
    pub shift: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl StftConfig {
    /// 32 ms Hann frames, 10 ms shift, 512-point FFT at 16 kHz.
    pub const ANALYSIS: StftConfig = StftConfig {
        frame_len: 512,
        shift: 160,
        fft_size: 512,
        window: WindowKind::Hann,
    };

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.frame_len {
            0
        } else {
            1 + (len - self.frame_len) / self.shift
        }
    }
}

/// Power spectrogram, row-major `[n_frames × n_bins]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<f64>,
    n_frames: usize,
    n_bins: usize,
    pub bin_hz: f64,
    pub frame_shift_s: f64,
}

impl Spectrogram {
    pub fn from_frames(frames: Vec<Vec<f64>>, bin_hz: f64, frame_shift_s: f64) -> Result<Self> {
        let n_frames = frames.len();
        let n_bins = frames.first().map_or(0, Vec::len);
        if n_frames == 0 || n_bins == 0 {
            return Err(Error::TooShort("spectrogram needs at least one frame".into()));
        }
        let mut data = Vec::with_capacity(n_frames * n_bins);
        for f in &frames {
            if f.len() != n_bins {
                return Err(Error::Dimension { expected: n_bins, got: f.len() });
            }
            if f.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Data("spectrogram entries must be finite and non-negative".into()));
            }
            data.extend_from_slice(f);
        }
        Ok(Self { data, n_frames, n_bins, bin_hz, frame_shift_s })
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_bins..(t + 1) * self.n_bins]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_bins)
    }
}

/// Squared-magnitude STFT with no forward normalization.
pub fn stft_power(w: &Waveform, cfg: &StftConfig) -> Result<Spectrogram> {
    if cfg.frame_len > cfg.fft_size || cfg.shift == 0 || cfg.frame_len == 0 {
        return Err(Error::Config(format!("invalid STFT config {cfg:?}")));
    }
    let n_frames = cfg.n_frames(w.len());
    if n_frames == 0 {
        return Err(Error::TooShort(format!(
            "{} samples, need at least one frame of {}",
            w.len(),
            cfg.frame_len
        )));
    }
    let n_bins = cfg.n_bins();
    let win = window(cfg.window, cfg.frame_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut data = Vec::with_capacity(n_frames * n_bins);
    let x = w.samples();
    for t in 0..n_frames {
        let start = t * cfg.shift;
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < cfg.frame_len {
                Complex::new(x[start + i] * win[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        data.extend(buf[..n_bins].iter().map(|c| c.norm_sqr()));
    }
    Ok(Spectrogram {
        data,
        n_frames,
        n_bins,
        bin_hz: f64::from(w.sample_rate()) / cfg.fft_size as f64,
        frame_shift_s: cfg.shift as f64 / f64::from(w.sample_rate()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, n: usize) -> Waveform {
        Waveform::from_samples(
            (0..n)
                .map(|i| amp * (2.0 * PI * freq * i as f64 / 16000.0).sin())
                .collect(),
        )
    }

    #[test]
    fn one_second_gives_97_frames() {
        let s = stft_power(&sine(440.0, 0.5, 16000), &StftConfig::ANALYSIS).unwrap();
        assert_eq!((s.n_frames(), s.n_bins()), (97, 257));
        assert_eq!(s.bin_hz, 31.25);
    }

    #[test]
    fn dc_energy_stays_in_main_lobe() {
        // A periodic Hann window leaks DC into bin 1 at exactly (1/2)^2 of bin 0.
        let w = Waveform::from_samples(vec![0.3; 1024]);
        let s = stft_power(&w, &StftConfig::ANALYSIS).unwrap();
        for f in s.frames() {
            assert!((f[1] / f[0] - 0.25).abs() < 1e-12);
            for &p in &f[2..] {
                assert!(p <= 1e-10 * f[0]);
            }
        }
    }

    #[test]
    fn tone_peaks_at_bin_32() {
        let s = stft_power(&sine(1000.0, 1.0, 4000), &StftConfig::ANALYSIS).unwrap();
        for f in s.frames() {
            let arg = f
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(arg, 32);
        }
    }

    #[test]
    fn parseval() {
        let x: Vec<f64> = (0..512).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let w = Waveform::from_samples(x.clone());
        let s = stft_power(&w, &StftConfig::ANALYSIS).unwrap();
        let f = s.frame(0);
        let spectral = f[0] + f[256] + 2.0 * f[1..256].iter().sum::<f64>();
        let win = window(WindowKind::Hann, 512);
        let energy: f64 = x.iter().zip(&win).map(|(a, b)| (a * b).powi(2)).sum();
        assert!((spectral - 512.0 * energy).abs() <= 1e-6 * spectral);
    }

    #[test]
    fn too_short_is_error() {
        let w = Waveform::from_samples(vec![0.1; 100]);
        assert!(matches!(stft_power(&w, &StftConfig::ANALYSIS), Err(Error::TooShort(_))));
    }

    #[test]
    fn wav_scaling_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        for v in [-32768i16, 0, 32767] {
            wr.write_sample(v).unwrap();
        }
        wr.finalize().unwrap();
        let w = read_wav(&p).unwrap();
        assert_eq!(w.samples(), &[-1.0, 0.0, 32767.0 / 32768.0]);

        let half = Waveform::from_samples(vec![0.5; 160]);
        write_wav(&p, &half).unwrap();
        let back = read_wav(&p).unwrap();
        assert_eq!(back.len(), 160);
        assert!(back.samples().iter().all(|&x| x == 0.5));
    }

    #[test]
    fn stereo_and_rate_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        let mut spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        match read_wav(&p) {
            Err(Error::Format(m)) => assert!(m.contains("channels=2"), "{m}"),
            other => panic!("{other:?}"),
        }
        spec.channels = 1;
        spec.sample_rate = 8000;
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(0i16).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Format(m)) if m.contains("sample_rate=8000")));
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.wav");
        write_wav(&p, &Waveform::from_samples(vec![0.25; 1000])).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 501]).unwrap();
        assert!(matches!(read_wav(&p), Err(Error::Io { .. })), "{:?}", read_wav(&p));
    }
}
