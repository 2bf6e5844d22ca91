use serde::{Deserialize, Serialize};

use crate::geom::Vec3;
use crate::num::Real;

/// Sinusoidal positional encoding with exponentially spaced frequencies.
///
/// Output layout: `[x, y, z]` (when `include_input`), then for each
/// frequency `k`: `sin(2^k π x), sin(2^k π y), sin(2^k π z), cos(2^k π x), cos(2^k π y), cos(2^k π z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
}

impl Default for PosEncoding {
    fn default() -> Self {
        Self { num_frequencies: 6, include_input: true }
    }
}

impl PosEncoding {
    pub fn output_dim(&self) -> usize {
        let base = 3 * 2 * self.num_frequencies;
        if self.include_input {
            base + 3
        } else {
            base
        }
    }

    /// Writes the encoding into `out[..output_dim()]`.
    pub fn encode_into<T: Real>(&self, x: Vec3<T>, out: &mut [T]) {
        let mut o = 0;
        if self.include_input {
            out[..3].copy_from_slice(&x.to_array());
            o = 3;
        }
        let mut freq = T::PI();
        for _ in 0..self.num_frequencies {
            let (sx, cx) = (x.x * freq).sin_cos();
            let (sy, cy) = (x.y * freq).sin_cos();
            let (sz, cz) = (x.z * freq).sin_cos();
            out[o..o + 6].copy_from_slice(&[sx, sy, sz, cx, cy, cz]);
            o += 6;
            freq = freq * T::two();
        }
    }

    pub fn encode<T: Real>(&self, x: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.output_dim()];
        self.encode_into(x, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimension_is_39() {
        assert_eq!(PosEncoding::default().output_dim(), 39);
        let no_input = PosEncoding { num_frequencies: 6, include_input: false };
        assert_eq!(no_input.output_dim(), 36);
        assert_eq!(no_input.encode(Vec3::new(0.1f64, 0.2, 0.3)).len(), 36);
    }

    #[test]
    fn origin_encodes_to_zero_sines_unit_cosines() {
        let e = PosEncoding::default().encode(Vec3::<f64>::zero());
        for k in 0..6 {
            let base = 3 + 6 * k;
            assert_eq!(&e[base..base + 3], &[0.0, 0.0, 0.0]);
            assert_eq!(&e[base + 3..base + 6], &[1.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn half_unit_first_frequency() {
        let e = PosEncoding::default().encode(Vec3::new(0.5f64, 0.0, 0.0));
        assert!((e[3] - 1.0).abs() < 1e-15);
        assert!(e[6].abs() < 1e-15);
    }

    #[test]
    fn lowest_frequency_is_two_periodic_and_bounded() {
        let pe = PosEncoding::default();
        let a = pe.encode(Vec3::new(0.3f64, -0.7, 0.11));
        let b = pe.encode(Vec3::new(2.3f64, 1.3, 2.11));
        for i in 3..9 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
        assert!(a[3..].iter().all(|v| v.abs() <= 1.0));
    }
}
