use ndarray::Array2;
use omoq_core::audio::AudioSignal;
use omoq_core::peaq::{self, ear_model_fft, EarModel, MovSet, PEAQ_STFT, TOTAL_NMR_FLOOR_DB};
use omoq_core::spectral::{AlignmentMode, TimeScaleRatio};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

const FS: u32 = 44100;
const LEN: usize = 2048 + 80 * 1024;

fn music_like(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partials: Vec<(f64, f64)> = (0..12)
        .map(|_| (rng.gen_range(100.0..12000.0), rng.gen_range(0.05..0.3)))
        .collect();
    let mut x: Vec<f64> = (0..LEN)
        .map(|i| {
            let t = i as f64 / FS as f64;
            let env = 0.6 + 0.4 * (std::f64::consts::TAU * 3.0 * t).sin();
            env * partials
                .iter()
                .map(|(f, a)| a * (std::f64::consts::TAU * f * t).sin())
                .sum::<f64>()
                + 0.02 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    x.iter_mut().for_each(|v| *v /= peak);
    x
}

fn lowpass(x: &[f64], cutoff: f64) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = FS as f64 / n as f64;
    for (k, c) in buf.iter_mut().enumerate() {
        if k.min(n - k) as f64 * df > cutoff {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

fn movs(r: &[f64], t: &[f64]) -> MovSet {
    let r = AudioSignal::new(r.to_vec(), FS);
    let t = AudioSignal::new(t.to_vec(), FS);
    let beta = TimeScaleRatio::from_lengths(r.len(), t.len()).unwrap();
    peaq::peaq_movs(&r, &t, beta, AlignmentMode::InterpTest).unwrap()
}

fn with_noise(x: &[f64], level_db: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = 10f64.powf(level_db / 20.0);
    x.iter().map(|v| v + g * rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn identical_inputs_sit_at_no_distortion_values() {
    let x = music_like(1);
    let m = movs(&x, &x);
    assert_eq!(m.win_mod_diff1, 0.0);
    assert_eq!(m.avg_mod_diff1, 0.0);
    assert_eq!(m.avg_mod_diff2, 0.0);
    assert_eq!(m.rms_noise_loud, 0.0);
    assert_eq!(m.total_nmr, TOTAL_NMR_FLOOR_DB);
    assert_eq!(m.rel_dist_frames, 0.0);
    assert_eq!(m.mfpd, 0.0);
    assert_eq!(m.adb, 0.0);
    assert_eq!(m.ehs, 0.0);
    assert_eq!(m.bandwidth_ref, m.bandwidth_ref.clamp(0.0, FS as f64 / 2.0));
}

#[test]
fn added_noise_is_monotone() {
    let x = music_like(2);
    let clean = movs(&x, &x);
    let mut prev = clean;
    for level in [-40.0, -30.0, -20.0] {
        let m = movs(&x, &with_noise(&x, level, 7));
        assert!(m.total_nmr >= prev.total_nmr, "{level}: {} < {}", m.total_nmr, prev.total_nmr);
        assert!(m.rel_dist_frames >= prev.rel_dist_frames);
        prev = m;
    }
    assert!(prev.rel_dist_frames > 0.0);
    assert!(prev.total_nmr > clean.total_nmr);
    assert!(prev.rms_noise_loud > 0.0);
    for v in prev.values() {
        assert!(v.is_finite());
    }
}

#[test]
fn lowpassed_test_has_lower_bandwidth() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let full: Vec<f64> = (0..LEN).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let full = lowpass(&full, 20_000.0);
    let low = lowpass(&full, 10_000.0);
    let m = movs(&full, &low);
    assert!(m.bandwidth_test < m.bandwidth_ref, "{} vs {}", m.bandwidth_test, m.bandwidth_ref);
    assert!(m.bandwidth_ref <= FS as f64 / 2.0 && m.bandwidth_test >= 0.0);
}

#[test]
fn tone_excites_its_own_band() {
    let x: Vec<f64> = (0..LEN)
        .map(|i| (std::f64::consts::TAU * 1000.0 * i as f64 / FS as f64).sin())
        .collect();
    let pat = ear_model_fft(&AudioSignal::new(x, FS)).unwrap();
    let band = pat.bands.band_of(1000.0).unwrap();
    let argmax = |row: ndarray::ArrayView1<f64>| {
        (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap()
    };
    for u in 0..pat.frame_count() {
        assert_eq!(argmax(pat.band_energy.row(u)), band);
        // Upward spread of masking at 92 dB may lift the next band slightly higher.
        assert!((band..=band + 1).contains(&argmax(pat.excitation.row(u))));
    }
}

#[test]
fn silence_gives_the_internal_noise_pattern() {
    let model = EarModel::new(FS, PEAQ_STFT).unwrap();
    let pat = model.process(&Array2::zeros((6, PEAQ_STFT.bin_count()))).unwrap();
    let floor = model.silent_excitation();
    for row in pat.unsmeared.rows() {
        for (a, b) in row.iter().zip(&floor) {
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }
    assert!(pat.loudness.iter().all(|&l| l == 0.0 || l < 0.1));
}

#[test]
fn rel_dist_frames_matches_a_frame_scan() {
    let x = music_like(4);
    let y = with_noise(&x, -25.0, 9);
    let model = EarModel::new(FS, PEAQ_STFT).unwrap();
    let r = ear_model_fft(&AudioSignal::new(x, FS)).unwrap();
    let t = ear_model_fft(&AudioSignal::new(y, FS)).unwrap();
    let nmr = peaq::movs::noise_to_mask(&model, &r, &t);
    let mut qualifying = 0;
    for row in nmr.rows() {
        let max_db = row.iter().map(|v| 10.0 * v.log10()).fold(f64::NEG_INFINITY, f64::max);
        if max_db > 1.5 {
            qualifying += 1;
        }
    }
    let m = peaq::compute_movs(&model, &r, &t).unwrap();
    assert_eq!(m.rel_dist_frames, qualifying as f64 / nmr.nrows() as f64);
    assert!((0.0..=1.0).contains(&m.rel_dist_frames));
}

#[test]
fn frame_count_mismatch_is_an_error() {
    let model = EarModel::new(FS, PEAQ_STFT).unwrap();
    let a = model.process(&Array2::zeros((4, PEAQ_STFT.bin_count()))).unwrap();
    let b = model.process(&Array2::zeros((5, PEAQ_STFT.bin_count()))).unwrap();
    assert!(peaq::compute_movs(&model, &a, &b).is_err());
}

#[test]
fn short_signal_is_rejected() {
    assert!(ear_model_fft(&AudioSignal::new(vec![0.5; 100], FS)).is_err());
}
