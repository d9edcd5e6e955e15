//! Spectral views of audio signals. Used for plotting only; the encoders
//! consume time-domain audio.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// One-sided magnitude spectrum (`len / 2 + 1` bins).
pub fn magnitude_spectrum(signal: &[f32]) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|&x| Complex::new(x as f64, 0.0)).collect();
    if buf.is_empty() {
        return Vec::new();
    }
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf.truncate(signal.len() / 2 + 1);
    buf.into_iter().map(|c| c.norm()).collect()
}

/// Hann-windowed short-time magnitude spectrogram, one row per frame.
pub fn spectrogram(signal: &[f32], window: usize, hop: usize) -> Vec<Vec<f64>> {
    if window == 0 || hop == 0 || signal.len() < window {
        return Vec::new();
    }
    let hann: Vec<f64> = (0..window)
        .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / window as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(window);
    (0..=(signal.len() - window) / hop)
        .map(|frame| {
            let start = frame * hop;
            let mut buf: Vec<Complex<f64>> = signal[start..start + window]
                .iter()
                .zip(&hann)
                .map(|(&x, &w)| Complex::new(x as f64 * w, 0.0))
                .collect();
            fft.process(&mut buf);
            buf[..window / 2 + 1].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let n = 256;
        let sig: Vec<f32> = (0..n)
            .map(|i| (std::f64::consts::TAU * 10.0 * i as f64 / n as f64).sin() as f32)
            .collect();
        let spec = magnitude_spectrum(&sig);
        assert_eq!(spec.len(), 129);
        let peak = spec.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, 10);
        let sg = spectrogram(&sig, 64, 32);
        assert_eq!(sg.len(), 7);
        assert_eq!(sg[0].len(), 33);
    }
}
