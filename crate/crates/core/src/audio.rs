//! Audio loading and signal preparation.
//!
//! Every signal entering the measure goes through the same chain: all
//! channels summed to mono, DC removed, peak normalized to ±1, then cut to
//! the region where the signal is audibly active.

use std::path::Path;

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};

/// Activity threshold on the sum of four consecutive absolute samples,
/// expressed for a ±1 full scale.
pub const ACTIVITY_THRESHOLD: f64 = 0.0061;

/// Length of the sliding activity window in samples.
pub const ACTIVITY_WINDOW: usize = 4;

/// A mono signal with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|x| x * x).sum();
        (sum / self.samples.len() as f64).sqrt()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// Reads a PCM WAV file and sums its channels to mono.
///
/// Integer samples are mapped to ±1 by dividing by 2^(bits-1) before the
/// channels are summed, so a 16-bit value of -32768 becomes exactly -1.
pub fn load_audio(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|source| match source {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Wav {
            path: path.to_path_buf(),
            source: other,
        },
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedEncoding("zero channels".into()));
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>(),
        (format, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {format:?} samples"
            )))
        }
    }
    .map_err(|source| Error::Wav {
        path: path.to_path_buf(),
        source,
    })?;

    let samples = downmix(&interleaved, channels);
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    Ok(AudioSignal::new(samples, spec.sample_rate))
}

/// Sums interleaved channels into one. A trailing incomplete frame is dropped.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum())
        .collect()
}

/// Removes the DC offset and normalizes the peak to exactly 1.
pub fn prepare(signal: &AudioSignal) -> Result<AudioSignal> {
    if signal.is_empty() {
        return Err(Error::SilentSignal);
    }
    let input_peak = signal.peak();
    let mean = signal.samples.iter().sum::<f64>() / signal.len() as f64;
    let centred: Vec<f64> = signal.samples.iter().map(|x| x - mean).collect();
    let peak = centred.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    // A constant input leaves only rounding residue after mean removal.
    if peak == 0.0 || peak <= input_peak * 1e-12 || !peak.is_finite() {
        return Err(Error::SilentSignal);
    }
    let samples = centred.into_iter().map(|x| x / peak).collect();
    Ok(AudioSignal::new(samples, signal.sample_rate))
}

/// Returns the inclusive `[start, end]` bounds of the active region.
///
/// `start` is the first sample of the first window whose absolute sum exceeds
/// [`ACTIVITY_THRESHOLD`]; `end` is the last sample of the last such window.
pub fn active_bounds(samples: &[f64]) -> Option<(usize, usize)> {
    if samples.len() < ACTIVITY_WINDOW {
        return None;
    }
    let window_sum = |i: usize| -> f64 {
        samples[i..i + ACTIVITY_WINDOW]
            .iter()
            .map(|x| x.abs())
            .sum()
    };
    let last_window = samples.len() - ACTIVITY_WINDOW;
    let start = (0..=last_window).find(|&i| window_sum(i) > ACTIVITY_THRESHOLD)?;
    let end = (start..=last_window)
        .rev()
        .find(|&i| window_sum(i) > ACTIVITY_THRESHOLD)?;
    Some((start, end + ACTIVITY_WINDOW - 1))
}

/// Cuts one prepared signal to its active region.
pub fn truncate_signal(signal: &AudioSignal) -> Result<AudioSignal> {
    let (start, end) = active_bounds(&signal.samples).ok_or(Error::NoActiveRegion)?;
    Ok(AudioSignal::new(
        signal.samples[start..=end].to_vec(),
        signal.sample_rate,
    ))
}

/// Cuts the reference and test signals, each by its own activity bounds.
pub fn truncate_active(
    reference: &AudioSignal,
    test: &AudioSignal,
) -> Result<(AudioSignal, AudioSignal)> {
    Ok((truncate_signal(reference)?, truncate_signal(test)?))
}

/// Loads, prepares and truncates a reference/test pair.
pub fn load_pair(
    reference: impl AsRef<Path>,
    test: impl AsRef<Path>,
) -> Result<(AudioSignal, AudioSignal)> {
    let r = prepare(&load_audio(reference)?)?;
    let t = prepare(&load_audio(test)?)?;
    prepare_pair(&r, &t)
}

/// Checks sample rates and truncates an already prepared pair.
pub fn prepare_pair(
    reference: &AudioSignal,
    test: &AudioSignal,
) -> Result<(AudioSignal, AudioSignal)> {
    if reference.sample_rate != test.sample_rate {
        return Err(Error::SampleRateMismatch {
            reference: reference.sample_rate,
            test: test.sample_rate,
        });
    }
    truncate_active(reference, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use hound::{WavSpec, WavWriter};
    use proptest::prelude::*;

    fn sig(samples: Vec<f64>) -> AudioSignal {
        AudioSignal::new(samples, 44100)
    }

    fn write_i16(path: &Path, channels: u16, frames: &[Vec<i16>]) {
        let spec = WavSpec {
            channels,
            sample_rate: 44100,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(path, spec).unwrap();
        for frame in frames {
            for &s in frame {
                w.write_sample(s).unwrap();
            }
        }
        w.finalize().unwrap();
    }

    #[test]
    fn stereo_identical_channels_normalize_to_unit_peak() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("st.wav");
        let frames: Vec<Vec<i16>> = (0..1000)
            .map(|i| {
                let v = (0.5 * (i as f64 * 0.05).sin() * 32768.0) as i16;
                vec![v, v]
            })
            .collect();
        write_i16(&path, 2, &frames);
        let loaded = load_audio(&path).unwrap();
        assert_eq!(loaded.len(), 1000);
        let prepared = prepare(&loaded).unwrap();
        assert!((prepared.peak() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sixteen_bit_full_scale_maps_to_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.wav");
        write_i16(&path, 1, &[vec![-32768], vec![0], vec![16384]]);
        let loaded = load_audio(&path).unwrap();
        assert_eq!(loaded.samples, vec![-1.0, 0.0, 0.5]);
    }

    #[test]
    fn one_second_stereo_keeps_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let frames: Vec<Vec<i16>> = (0..44100).map(|i| vec![(i % 100) as i16, 3]).collect();
        write_i16(&path, 2, &frames);
        let loaded = load_audio(&path).unwrap();
        assert_eq!(loaded.len(), 44100);
        assert_eq!(loaded.sample_rate, 44100);
    }

    #[test]
    fn float_and_24_bit_files_load() {
        let dir = tempfile::tempdir().unwrap();
        let fpath = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&fpath, spec).unwrap();
        for s in [0.25f32, -0.5, 1.0] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(load_audio(&fpath).unwrap().samples, vec![0.25, -0.5, 1.0]);

        let ipath = dir.path().join("i24.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 48000,
            bits_per_sample: 24,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&ipath, spec).unwrap();
        w.write_sample(-(1i32 << 23)).unwrap();
        w.write_sample(1i32 << 22).unwrap();
        w.finalize().unwrap();
        assert_eq!(load_audio(&ipath).unwrap().samples, vec![-1.0, 0.5]);
    }

    #[test]
    fn missing_and_empty_files_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_audio(dir.path().join("nope.wav")),
            Err(Error::Io { .. })
        ));
        let empty = dir.path().join("empty.wav");
        write_i16(&empty, 1, &[]);
        assert!(matches!(load_audio(&empty), Err(Error::EmptyAudio(_))));
        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"not a wav file at all").unwrap();
        assert!(matches!(load_audio(&junk), Err(Error::Wav { .. })));
    }

    #[test]
    fn constant_signal_is_silent() {
        assert!(matches!(
            prepare(&sig(vec![0.3; 1000])),
            Err(Error::SilentSignal)
        ));
        assert!(matches!(prepare(&sig(vec![0.0; 10])), Err(Error::SilentSignal)));
    }

    #[test]
    fn alternating_unit_signal_is_unchanged() {
        let s = sig(vec![1.0, -1.0, 1.0, -1.0]);
        assert_eq!(prepare(&s).unwrap(), s);
    }

    #[test]
    fn two_point_signal() {
        let p = prepare(&sig(vec![0.5, 0.1])).unwrap();
        assert!((p.samples[0] - 1.0).abs() < 1e-15);
        assert!((p.samples[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn leading_zeros_are_removed() {
        let mut s = vec![0.0; 1000];
        s.extend((0..4410).map(|i| (i as f64 * 0.0627).sin()));
        let t = truncate_signal(&sig(s.clone())).unwrap();
        let start = (0..s.len() - 3)
            .find(|&i| s[i..i + 4].iter().map(|x| x.abs()).sum::<f64>() > ACTIVITY_THRESHOLD)
            .unwrap();
        assert!((997..=1000).contains(&start));
        assert_eq!(t.samples[0], s[start]);
    }

    #[test]
    fn all_ones_is_unchanged() {
        let s = sig(vec![1.0; 100]);
        assert_eq!(truncate_signal(&s).unwrap(), s);
    }

    #[test]
    fn ramp_start_matches_linear_scan() {
        let n = 44100;
        let ramp: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        // Independent scan: smallest i with x[i]+x[i+1]+x[i+2]+x[i+3] > 0.0061.
        let mut expected = None;
        for i in 0..n - 3 {
            let s = ramp[i] + ramp[i + 1] + ramp[i + 2] + ramp[i + 3];
            if s > 0.0061 {
                expected = Some(i);
                break;
            }
        }
        // 4i + 6 > 0.0061 * 44099  =>  i > 65.75
        assert_eq!(expected, Some(66));
        let (start, end) = active_bounds(&ramp).unwrap();
        assert_eq!(start, 66);
        assert_eq!(end, n - 1);
    }

    #[test]
    fn silence_has_no_active_region() {
        assert!(matches!(
            truncate_signal(&sig(vec![0.001; 100])),
            Err(Error::NoActiveRegion)
        ));
        assert!(matches!(
            truncate_signal(&sig(vec![1.0; 3])),
            Err(Error::NoActiveRegion)
        ));
    }

    #[test]
    fn sample_rate_mismatch_is_rejected() {
        let a = AudioSignal::new(vec![1.0; 10], 44100);
        let b = AudioSignal::new(vec![1.0; 10], 48000);
        assert!(matches!(
            prepare_pair(&a, &b),
            Err(Error::SampleRateMismatch { .. })
        ));
    }

    #[test]
    fn downmix_is_linear() {
        let a: Vec<f64> = (0..64).map(|i| (i as f64 * 0.3).sin()).collect();
        let b: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).cos()).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * x + 2.0 * y).collect();
        let da = downmix(&a, 2);
        let db = downmix(&b, 2);
        let ds = downmix(&sum, 2);
        for i in 0..ds.len() {
            assert!((ds[i] - (0.5 * da[i] + 2.0 * db[i])).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn prepare_is_idempotent(v in prop::collection::vec(-1.0f64..1.0, 2..200)) {
            prop_assume!(v.iter().any(|x| (x - v[0]).abs() > 1e-3));
            let once = prepare(&sig(v)).unwrap();
            let twice = prepare(&once).unwrap();
            for (a, b) in once.samples.iter().zip(&twice.samples) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn truncation_is_idempotent(
            lead in 0usize..50,
            body in prop::collection::vec(-1.0f64..1.0, 4..200),
            tail in 0usize..50,
        ) {
            let mut v = vec![0.0; lead];
            v.extend(body);
            v.extend(std::iter::repeat(0.0).take(tail));
            if let Ok(once) = truncate_signal(&sig(v)) {
                let twice = truncate_signal(&once).unwrap();
                prop_assert_eq!(once, twice);
            }
        }
    }
}
