//! Short-time spectral analysis shared by the feature extractor and the encoder front end.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Symmetric Hann window of `len` samples.
pub fn hann(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Frames of `span` samples every `hop` samples; 0 if the signal is shorter than one frame.
pub fn frame_count(len: usize, span: usize, hop: usize) -> usize {
    if len < span || hop == 0 {
        0
    } else {
        (len - span) / hop + 1
    }
}

/// Hann-windowed power spectra, `fft_size / 2 + 1` bins per frame.
///
/// `fft_size` must be at least `span`; the window is zero-padded.
pub fn power_frames(signal: &[f32], span: usize, hop: usize, fft_size: usize) -> Vec<Vec<f64>> {
    assert!(fft_size >= span, "fft size {fft_size} < frame span {span}");
    let frames = frame_count(signal.len(), span, hop);
    let win = hann(span);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); fft_size];
    (0..frames)
        .map(|f| {
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for (n, w) in win.iter().enumerate() {
                buf[n].re = signal[f * hop + n] as f64 * w;
            }
            fft.process(&mut buf);
            buf[..fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_shape() {
        let w = hann(5);
        assert_eq!(w.len(), 5);
        assert!(w[0].abs() < 1e-12 && w[4].abs() < 1e-12);
        assert!((w[2] - 1.0).abs() < 1e-12);
        assert_eq!(hann(1), vec![1.0]);
    }

    #[test]
    fn parseval_on_padded_frame() {
        let sig: Vec<f32> = (0..40).map(|i| ((i * 7 % 11) as f32 - 5.0) / 5.0).collect();
        let p = power_frames(&sig, 30, 10, 64);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0].len(), 33);
        let w = hann(30);
        let energy: f64 = (0..30).map(|n| (sig[n] as f64 * w[n]).powi(2)).sum();
        // one-sided spectrum: interior bins count twice
        let spec: f64 = p[0].iter().enumerate().map(|(k, v)| if k == 0 || k == 32 { *v } else { 2.0 * v }).sum::<f64>() / 64.0;
        assert!((energy - spec).abs() < 1e-9 * energy.max(1.0));
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let sig: Vec<f32> = (0..64).map(|n| (2.0 * std::f32::consts::PI * 0.25 * n as f32).sin()).collect();
        let p = power_frames(&sig, 30, 10, 64);
        let peak = p[0].iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
        assert_eq!(peak, 16);
    }
}
