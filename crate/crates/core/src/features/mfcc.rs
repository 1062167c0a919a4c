use std::f64::consts::PI;

use ndarray::{s, Array2};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{rasta, FeatureConfig, FeatureMatrix, Waveform};
use crate::error::{Error, Result};

const LOG_FLOOR: f64 = 1e-10;
const DELTA_WINDOW: usize = 2;

/// `floor((n - window) / hop) + 1`, or 0 if the signal is shorter than a window.
pub fn num_frames(num_samples: usize, window: usize, hop: usize) -> usize {
    if num_samples < window || hop == 0 {
        0
    } else {
        (num_samples - window) / hop + 1
    }
}

fn check_length(w: &Waveform, cfg: &FeatureConfig) -> Result<(usize, usize, usize)> {
    cfg.validate()?;
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::invalid(format!(
            "waveform at {} Hz, front end configured for {} Hz",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let win = cfg.window_samples();
    let hop = cfg.hop_samples();
    let n = num_frames(w.samples.len(), win, hop);
    if n == 0 {
        return Err(Error::InsufficientData(format!(
            "waveform of {} samples is shorter than one {win}-sample window",
            w.samples.len()
        )));
    }
    Ok((win, hop, n))
}

/// Frame energy in dB (`10 log10 sum x^2`) over the raw samples of each frame.
pub fn frame_log_energy(w: &Waveform, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let (win, hop, n) = check_length(w, cfg)?;
    Ok((0..n)
        .map(|i| {
            let e: f64 = w.samples[i * hop..i * hop + win].iter().map(|x| x * x).sum();
            10.0 * e.max(1e-30).log10()
        })
        .collect())
}

fn hz_to_mel(hz: f64) -> f64 {
    1127.0 * (1.0 + hz / 700.0).ln()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * ((mel / 1127.0).exp() - 1.0)
}

/// Triangular filters on the mel scale spanning 0..Nyquist, `[num_filters x bins]`.
fn mel_filterbank(num_filters: usize, fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let centers: Vec<f64> = (0..num_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (num_filters + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((num_filters, bins));
    for m in 0..num_filters {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let v = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = v;
        }
    }
    fb
}

/// Static cepstra c1..c_num_static for every frame.
fn static_cepstra(w: &Waveform, cfg: &FeatureConfig) -> Result<Array2<f64>> {
    let (win, hop, n) = check_length(w, cfg)?;
    let fft_size = cfg.fft_size.max(win.next_power_of_two());
    let bins = fft_size / 2 + 1;
    let fb = mel_filterbank(cfg.num_mel_filters, fft_size, cfg.sample_rate);
    let hamming: Vec<f64> = (0..win)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (win as f64 - 1.0).max(1.0)).cos())
        .collect();
    let nm = cfg.num_mel_filters;
    let dct: Array2<f64> = Array2::from_shape_fn((cfg.num_static, nm), |(k, m)| {
        (2.0 / nm as f64).sqrt() * (PI * (k + 1) as f64 * (m as f64 + 0.5) / nm as f64).cos()
    });

    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    let mut power = vec![0.0; bins];
    let mut log_mel = vec![0.0; nm];
    let mut out = Array2::zeros((n, cfg.num_static));
    for t in 0..n {
        let frame = &w.samples[t * hop..t * hop + win];
        // Per-frame pre-emphasis; the first sample is emphasised against itself.
        for (i, c) in buf.iter_mut().enumerate() {
            *c = if i < win {
                let prev = if i == 0 { frame[0] } else { frame[i - 1] };
                Complex::new((frame[i] - cfg.preemphasis * prev) * hamming[i], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..bins]) {
            *p = c.norm_sqr();
        }
        for (m, lm) in log_mel.iter_mut().enumerate() {
            let e: f64 = fb.row(m).iter().zip(&power).map(|(a, b)| a * b).sum();
            *lm = e.max(LOG_FLOOR).ln();
        }
        for k in 0..cfg.num_static {
            out[[t, k]] = dct.row(k).iter().zip(&log_mel).map(|(a, b)| a * b).sum();
        }
    }
    Ok(out)
}

/// Regression deltas over +-2 frames with edge replication.
pub(crate) fn deltas(x: &Array2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let denom: f64 = 2.0 * (1..=DELTA_WINDOW).map(|k| (k * k) as f64).sum::<f64>();
    let mut out = Array2::zeros((n, d));
    for t in 0..n {
        for k in 1..=DELTA_WINDOW {
            let fwd = (t + k).min(n - 1);
            let back = t.saturating_sub(k);
            for j in 0..d {
                out[[t, j]] += k as f64 * (x[[fwd, j]] - x[[back, j]]);
            }
        }
    }
    out.mapv_inplace(|v| v / denom);
    out
}

/// `[static | delta | delta-delta]` MFCC matrix. RASTA, when enabled, is
/// applied to the static cepstra before the derivatives are taken.
pub fn compute_mfcc(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    let mut stat = static_cepstra(w, cfg)?;
    if cfg.rasta_enabled {
        for mut col in stat.columns_mut() {
            let filtered = rasta::rasta_filter_trajectory(&col.to_vec());
            col.assign(&ndarray::Array1::from(filtered));
        }
    }
    let d1 = deltas(&stat);
    let d2 = deltas(&d1);
    let (n, k) = stat.dim();
    let mut frames = Array2::zeros((n, 3 * k));
    frames.slice_mut(s![.., 0..k]).assign(&stat);
    frames.slice_mut(s![.., k..2 * k]).assign(&d1);
    frames.slice_mut(s![.., 2 * k..3 * k]).assign(&d2);
    FeatureMatrix::new("", frames)
}
