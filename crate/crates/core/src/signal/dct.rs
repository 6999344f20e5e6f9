use crate::{Error, Result};

/// Orthonormal DCT-II of length `n` with a precomputed basis.
///
/// Row `k` of the basis holds `s_k * cos(pi * (2i + 1) * k / (2n))` with
/// `s_0 = sqrt(1/n)` and `s_k = sqrt(2/n)` otherwise. The inverse is the
/// transpose (DCT-III with the same scaling).
#[derive(Debug, Clone)]
pub struct Dct2 {
    n: usize,
    basis: Vec<f64>,
}

impl Dct2 {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("DCT length must be at least 1"));
        }
        let period = 4 * n;
        let mut basis = Vec::with_capacity(n * n);
        for k in 0..n {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for i in 0..n {
                // cos has period 4n in units of pi/(2n); reducing keeps the
                // argument small and the table accurate for large k.
                let m = ((2 * i + 1) * k) % period;
                let angle = std::f64::consts::PI * m as f64 / (2 * n) as f64;
                basis.push(scale * angle.cos());
            }
        }
        Ok(Self { n, basis })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::shape(format!(
                "DCT planned for length {}, got {}",
                self.n,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(self.forward_range(x, 0, self.n - 1))
    }

    /// Coefficients `k_lo..=k_hi` only.
    pub fn forward_range(&self, x: &[f64], k_lo: usize, k_hi: usize) -> Vec<f64> {
        (k_lo..=k_hi)
            .map(|k| {
                let row = &self.basis[k * self.n..(k + 1) * self.n];
                row.iter().zip(x).map(|(b, v)| b * v).sum()
            })
            .collect()
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check(coeffs)?;
        let mut out = vec![0.0; self.n];
        for (k, &c) in coeffs.iter().enumerate() {
            let row = &self.basis[k * self.n..(k + 1) * self.n];
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
        Ok(out)
    }
}

pub fn dct2_forward(x: &[f64]) -> Result<Vec<f64>> {
    Dct2::new(x.len())?.forward(x)
}

pub fn dct2_inverse(coeffs: &[f64]) -> Result<Vec<f64>> {
    Dct2::new(coeffs.len())?.inverse(coeffs)
}

/// Frequency band kept by the DCT model, as an inclusive coefficient range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandMask {
    pub low_hz: f64,
    pub high_hz: f64,
    pub keep_dc: bool,
    pub k_lo: usize,
    pub k_hi: usize,
}

impl BandMask {
    /// Band for a length-`n` window at `fs`, always dropping DC.
    pub fn new(n: usize, fs: f64, low_hz: f64, high_hz: f64) -> Result<Self> {
        let [k_lo, k_hi] = band_mask_indices(n, fs, low_hz, high_hz)?;
        Ok(Self {
            low_hz,
            high_hz,
            keep_dc: false,
            k_lo,
            k_hi,
        })
    }

    pub fn width(&self) -> usize {
        self.k_hi - self.k_lo + 1
    }
}

/// Index (possibly fractional) of the coefficient at `hz`. Values within
/// 1e-9 of an integer snap to it so that band edges landing exactly on a
/// coefficient frequency are not lost to rounding.
fn coefficient_position(n: usize, fs: f64, hz: f64) -> f64 {
    let pos = 2.0 * n as f64 * hz / fs;
    let nearest = pos.round();
    if (pos - nearest).abs() < 1e-9 {
        nearest
    } else {
        pos
    }
}

/// `[ceil(2 n low / fs), floor(2 n high / fs)]`, with DC excluded and the
/// upper index capped at `n - 1`. Coefficient `k` sits at `k fs / (2 n)` Hz.
pub fn band_mask_indices(n: usize, fs: f64, low_hz: f64, high_hz: f64) -> Result<[usize; 2]> {
    if n < 2 {
        return Err(Error::invalid("band mask needs a window of at least 2 samples"));
    }
    if !(fs > 0.0) || !(low_hz >= 0.0) || !(low_hz < high_hz) || high_hz > fs / 2.0 {
        return Err(Error::invalid(format!(
            "band {low_hz}-{high_hz} Hz is not within (0, {}] Hz",
            fs / 2.0
        )));
    }
    let k_lo = (coefficient_position(n, fs, low_hz).ceil() as usize).max(1);
    let k_hi = (coefficient_position(n, fs, high_hz).floor() as usize).min(n - 1);
    if k_lo > k_hi {
        return Err(Error::invalid(format!(
            "band {low_hz}-{high_hz} Hz contains no DCT coefficient for n={n}, fs={fs}"
        )));
    }
    Ok([k_lo, k_hi])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn dc_only_input() {
        let x = vec![2.5; 300];
        let c = dct2_forward(&x).unwrap();
        assert!((c[0] - 2.5 * 300f64.sqrt()).abs() < 1e-10);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn basis_vector_plugs_in() {
        let n = 300;
        let x: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::PI * (2 * i + 1) as f64 * 7.0 / (2 * n) as f64).cos())
            .collect();
        let c = dct2_forward(&x).unwrap();
        for (k, v) in c.iter().enumerate() {
            let expected = if k == 7 { (n as f64 / 2.0).sqrt() } else { 0.0 };
            assert!((v - expected).abs() < 1e-10, "k={k} v={v}");
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let mut rng = SplitMix64::new(1);
        let plan = Dct2::new(300).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..300).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let c = plan.forward(&x).unwrap();
            assert!((norm(&c) - norm(&x)).abs() < 1e-9);
            let back = plan.inverse(&c).unwrap();
            assert!(back.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
        }
    }

    #[test]
    fn inverse_simple_cases() {
        let mut c = vec![0.0; 16];
        assert_eq!(dct2_inverse(&c).unwrap(), vec![0.0; 16]);
        c[0] = 4.0;
        assert!(dct2_inverse(&c).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn length_one_and_zero() {
        assert!((dct2_forward(&[3.0]).unwrap()[0] - 3.0).abs() < 1e-15);
        assert!(dct2_forward(&[]).is_err());
    }

    #[test]
    fn heart_rate_band() {
        assert_eq!(band_mask_indices(300, 30.0, 0.7, 4.0).unwrap(), [14, 80]);
        assert_eq!(band_mask_indices(1000, 125.0, 0.7, 4.0).unwrap(), [12, 64]);
        let m = BandMask::new(300, 30.0, 0.7, 4.0).unwrap();
        assert_eq!(m.width(), 67);
        assert!(!m.keep_dc);
    }

    #[test]
    fn edge_frequencies_respect_band() {
        let [lo, hi] = band_mask_indices(300, 30.0, 0.7, 4.0).unwrap();
        assert!(lo as f64 * 30.0 / 600.0 >= 0.7);
        assert!(hi as f64 * 30.0 / 600.0 <= 4.0);
    }

    #[test]
    fn band_without_coefficients_rejected() {
        // Strictly between f_1 = 0.05 Hz and f_2 = 0.1 Hz.
        assert!(band_mask_indices(300, 30.0, 0.06, 0.09).is_err());
        // A band touching only f_1 keeps that single coefficient.
        assert_eq!(band_mask_indices(300, 30.0, 0.05, 0.05 + 1e-6).unwrap(), [1, 1]);
        // DC is never kept.
        assert_eq!(band_mask_indices(300, 30.0, 0.0, 0.1).unwrap(), [1, 2]);
    }

    #[test]
    fn band_outside_range_rejected() {
        assert!(band_mask_indices(300, 30.0, 0.7, 15.5).is_err());
        assert!(band_mask_indices(300, 30.0, 4.0, 0.7).is_err());
        assert!(band_mask_indices(300, 30.0, -1.0, 0.7).is_err());
        assert_eq!(band_mask_indices(300, 30.0, 14.0, 15.0).unwrap(), [280, 299]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear(
                x in prop::collection::vec(-1.0f64..1.0, 64),
                y in prop::collection::vec(-1.0f64..1.0, 64),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
            ) {
                let plan = Dct2::new(64).unwrap();
                let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
                let lhs = plan.forward(&mix).unwrap();
                let fx = plan.forward(&x).unwrap();
                let fy = plan.forward(&y).unwrap();
                for k in 0..64 {
                    prop_assert!((lhs[k] - (a * fx[k] + b * fy[k])).abs() < 1e-9);
                }
            }

            #[test]
            fn parseval(x in prop::collection::vec(-10.0f64..10.0, 1..120)) {
                let c = dct2_forward(&x).unwrap();
                prop_assert!((norm(&c) - norm(&x)).abs() < 1e-9);
            }

            #[test]
            fn band_edges_exact(n in 10usize..2000, lo in 0.1f64..2.0, width in 0.5f64..3.0) {
                let fs = 30.0;
                if let Ok([k_lo, k_hi]) = band_mask_indices(n, fs, lo, lo + width) {
                    prop_assert!(k_lo as f64 * fs / (2.0 * n as f64) >= lo - 1e-12);
                    prop_assert!(k_hi as f64 * fs / (2.0 * n as f64) <= lo + width + 1e-12);
                    prop_assert!(k_lo >= 1 && k_hi < n);
                }
            }
        }
    }
}
