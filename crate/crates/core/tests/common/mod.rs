//! Signal generators and a toy time-scaler for integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

pub const FS: u32 = 44100;

/// Partials with slow amplitude modulation, a few clicks and a little noise.
pub fn music_like(seed: u64, secs: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (secs * FS as f64) as usize;
    let partials: Vec<(f64, f64, f64)> = (0..10)
        .map(|_| {
            (
                rng.gen_range(80.0..9000.0),
                rng.gen_range(0.05..0.3),
                rng.gen_range(0.0..TAU),
            )
        })
        .collect();
    let rate = rng.gen_range(1.0..4.0);
    let clicks: Vec<usize> = (0..(secs * 3.0) as usize).map(|_| rng.gen_range(0..len)).collect();
    let mut x: Vec<f64> = (0..len)
        .map(|i| {
            let t = i as f64 / FS as f64;
            let env = 0.6 + 0.4 * (TAU * rate * t).sin();
            env * partials
                .iter()
                .map(|(f, a, p)| a * (TAU * f * t + p).sin())
                .sum::<f64>()
                + 0.01 * rng.gen_range(-1.0..1.0)
        })
        .collect();
    for c in clicks {
        for k in 0..64.min(len - c) {
            x[c + k] += 0.8 * (-(k as f64) / 8.0).exp() * if k % 2 == 0 { 1.0 } else { -1.0 };
        }
    }
    x
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Plain overlap-add time-scaling: output length is about `len / beta`.
pub fn ola_stretch(x: &[f64], beta: f64) -> Vec<f64> {
    let n = 1024;
    let hs = 256;
    let ha = beta * hs as f64;
    let w = hann(n);
    let frames = ((x.len().saturating_sub(n)) as f64 / ha).floor() as usize + 1;
    let out_len = (frames - 1) * hs + n;
    let mut y = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    for m in 0..frames {
        let a = (m as f64 * ha).round() as usize;
        for i in 0..n {
            let v = x.get(a + i).copied().unwrap_or(0.0);
            y[m * hs + i] += w[i] * v;
            norm[m * hs + i] += w[i];
        }
    }
    y.iter_mut()
        .zip(&norm)
        .for_each(|(v, n)| *v = if *n > 1e-3 { *v / n } else { 0.0 });
    y
}

/// Textbook phase vocoder with horizontal phase propagation only.
pub fn phase_vocoder(x: &[f64], beta: f64) -> Vec<f64> {
    let n = 2048;
    let hs = 512;
    let ha = beta * hs as f64;
    let w = hann(n);
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    let ifft = planner.plan_fft_inverse(n);
    let frames = ((x.len().saturating_sub(n)) as f64 / ha).floor() as usize + 1;
    let out_len = (frames - 1) * hs + n;
    let mut y = vec![0.0; out_len];
    let mut norm = vec![0.0; out_len];
    let mut prev_phase = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut prev_start = 0.0f64;
    for m in 0..frames {
        let start = m as f64 * ha;
        let a = start.round() as usize;
        let mut buf: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(w[i] * x.get(a + i).copied().unwrap_or(0.0), 0.0))
            .collect();
        fft.process(&mut buf);
        for k in 0..n {
            let phase = buf[k].arg();
            if m == 0 {
                acc[k] = phase;
            } else {
                let omega = TAU * k as f64 / n as f64;
                let step = start - prev_start;
                let dev = phase - prev_phase[k] - omega * step;
                let dev = dev - TAU * (dev / TAU).round();
                acc[k] += (omega + dev / step) * hs as f64;
            }
            prev_phase[k] = phase;
            buf[k] = Complex64::from_polar(buf[k].norm(), acc[k]);
        }
        prev_start = start;
        ifft.process(&mut buf);
        for i in 0..n {
            y[m * hs + i] += w[i] * buf[i].re / n as f64;
            norm[m * hs + i] += w[i] * w[i];
        }
    }
    y.iter_mut()
        .zip(&norm)
        .for_each(|(v, n)| *v = if *n > 1e-3 { *v / n } else { 0.0 });
    y
}

/// Writes a mono 16-bit WAV file.
pub fn write_wav(path: &std::path::Path, x: &[f64]) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: FS,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).unwrap();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for v in x {
        w.write_sample((v / peak * 0.9 * 32767.0).round() as i16).unwrap();
    }
    w.finalize().unwrap();
}
