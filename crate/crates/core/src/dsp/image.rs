use std::io::Write;

use super::LogMelSpectrogram;

/// Binary 8-bit grayscale PGM (P5), one pixel per mel band and frame.
/// Low frequencies are at the bottom; the image minimum maps to 0 and its
/// maximum to 255.
pub fn to_pgm(spec: &LogMelSpectrogram) -> Vec<u8> {
    let (rows, cols) = spec.values.dim();
    let lo = spec.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = spec.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut out = Vec::with_capacity(rows * cols + 32);
    write!(out, "P5\n{cols} {rows}\n255\n").expect("write to vec");
    for m in (0..rows).rev() {
        for t in 0..cols {
            let v = spec.values[[m, t]];
            let px = if span > 0.0 { ((v - lo) / span * 255.0).round() } else { 0.0 };
            out.push(px as u8);
        }
    }
    out
}
