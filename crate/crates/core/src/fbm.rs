//! Exact-law sampling of multi-component fractional Brownian motion.
//!
//! Each component is built from fractional Gaussian noise (the stationary
//! increment sequence) sampled by circulant embedding, then cumulated. The
//! embedding of fGn is nonnegative definite for every Hurst index, but the
//! FFT can produce tiny negative eigenvalues through roundoff; those are
//! clipped when they sit within `EIGEN_CLIP` of the spectrum's maximum, and
//! anything worse falls back to a dense Cholesky factor.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_hurst, Error, Result};
use crate::seed;

const EIGEN_CLIP: f64 = 1e-8;
/// Largest grid for which the dense square-root fallback is attempted.
pub const DENSE_FALLBACK_MAX: usize = 2048;

#[inline]
pub(crate) fn pow2h(x: f64, hurst: f64) -> f64 {
    x.abs().powf(2.0 * hurst)
}

/// Covariance `E[B_s B_t]` of a standard fBm coordinate.
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst, 0.0, 1.0, "(0, 1)")?;
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::Domain(format!("times must be nonnegative, got ({s}, {t})")));
    }
    Ok(0.5 * (pow2h(s, hurst) + pow2h(t, hurst) - pow2h(t - s, hurst)))
}

/// `E[δB_{uv} δB_{st}]` without argument validation.
#[inline]
pub(crate) fn rect_increment_unchecked(u: f64, v: f64, s: f64, t: f64, hurst: f64) -> f64 {
    0.5 * (pow2h(t - u, hurst) + pow2h(s - v, hurst) - pow2h(t - v, hurst) - pow2h(s - u, hurst))
}

/// Covariance of the increments over `[u, v]` and `[s, t]`.
pub fn rect_increment(u: f64, v: f64, s: f64, t: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst, 0.0, 1.0, "(0, 1)")?;
    if !(u <= v && s <= t) {
        return Err(Error::Domain(format!(
            "intervals must be ordered, got [{u}, {v}] and [{s}, {t}]"
        )));
    }
    Ok(rect_increment_unchecked(u, v, s, t, hurst))
}

/// Autocovariance of unit-spaced fractional Gaussian noise at integer lag.
pub fn fgn_autocovariance(lag: i64, hurst: f64) -> f64 {
    let k = lag as f64;
    0.5 * (pow2h(k + 1.0, hurst) + pow2h(k - 1.0, hurst) - 2.0 * pow2h(k, hurst))
}

/// A sampled path on the uniform grid `t_k = k T / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    /// `values[j][k]` is component `j` at node `k`; `values[j][0] == 0`.
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl FbmPath {
    pub fn components(&self) -> usize {
        self.values.len()
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.horizon / self.n as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.time(k)).collect()
    }

    /// Grid increments, row-major `[n × m]`.
    pub fn increments(&self) -> Vec<f64> {
        let m = self.components();
        let mut out = vec![0.0; self.n * m];
        for (j, comp) in self.values.iter().enumerate() {
            for k in 0..self.n {
                out[k * m + j] = comp[k + 1] - comp[k];
            }
        }
        out
    }

    /// Sub-sample every `factor`-th node.
    pub fn restrict(&self, factor: usize) -> Result<FbmPath> {
        if factor == 0 || self.n % factor != 0 {
            return Err(Error::Divisibility {
                what: "restrict",
                n: self.n,
                factor,
            });
        }
        let values = self
            .values
            .iter()
            .map(|c| c.iter().step_by(factor).copied().collect())
            .collect();
        Ok(FbmPath {
            hurst: self.hurst,
            horizon: self.horizon,
            n: self.n / factor,
            values,
            seed: self.seed,
        })
    }

    /// CSV with header `t,B1,...,Bm`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.components();
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((1..=m).map(|j| format!("B{j}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..=self.n {
            write!(w, "{}", fmt_f64(self.time(k)))?;
            for comp in &self.values {
                write!(w, ",{}", fmt_f64(comp[k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Decimal text with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sampling method, chosen once per generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Circulant,
    Dense,
}

enum Sampler {
    Circulant {
        sqrt_eigen: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Dense {
        lower: DMatrix<f64>,
    },
}

/// Reusable fGn sampler for a fixed `(H, n, T)`.
///
/// Construction does the spectral work once; `sample` can then be called
/// concurrently from many threads with independent RNGs.
pub struct FbmGenerator {
    hurst: f64,
    horizon: f64,
    n: usize,
    sampler: Sampler,
}

impl std::fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("horizon", &self.horizon)
            .field("n", &self.n)
            .field("method", &self.method())
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: f64, n: usize, horizon: f64) -> Result<Self> {
        Self::validate(hurst, n, horizon)?;
        match circulant_sampler(hurst, n) {
            Ok(sampler) => Ok(Self { hurst, horizon, n, sampler }),
            Err(err) if n <= DENSE_FALLBACK_MAX => {
                log::warn!("circulant embedding rejected ({err}); using dense factorization");
                Self::with_method(hurst, n, horizon, Method::Dense)
            }
            Err(err) => Err(err),
        }
    }

    pub fn with_method(hurst: f64, n: usize, horizon: f64, method: Method) -> Result<Self> {
        Self::validate(hurst, n, horizon)?;
        let sampler = match method {
            Method::Circulant => circulant_sampler(hurst, n)?,
            Method::Dense => dense_sampler(hurst, n)?,
        };
        Ok(Self { hurst, horizon, n, sampler })
    }

    fn validate(hurst: f64, n: usize, horizon: f64) -> Result<()> {
        check_hurst(hurst, 0.0, 1.0, "(0, 1)")?;
        if n < 2 {
            return Err(Error::Domain(format!("need at least 2 grid steps, got {n}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(())
    }

    pub fn method(&self) -> Method {
        match self.sampler {
            Sampler::Circulant { .. } => Method::Circulant,
            Sampler::Dense { .. } => Method::Dense,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One component's path values (length `n + 1`, starting at zero).
    pub fn sample_component<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let scale = (self.horizon / self.n as f64).powf(self.hurst);
        let mut path = Vec::with_capacity(self.n + 1);
        path.push(0.0);
        let mut acc = 0.0;
        match &self.sampler {
            Sampler::Circulant { sqrt_eigen, fft } => {
                let mut buf: Vec<Complex<f64>> = sqrt_eigen
                    .iter()
                    .map(|&s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                for z in &buf[..self.n] {
                    acc += scale * z.re;
                    path.push(acc);
                }
            }
            Sampler::Dense { lower } => {
                let z = DVector::from_fn(self.n, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = lower * z;
                for v in x.iter() {
                    acc += scale * v;
                    path.push(acc);
                }
            }
        }
        path
    }

    /// An `m`-component path; component `j` draws from stream `(seed, j)`.
    pub fn generate(&self, components: usize, seed: u64) -> FbmPath {
        let values = (0..components)
            .map(|j| {
                let mut rng = seed::stream(seed, &[j as u64]);
                self.sample_component(&mut rng)
            })
            .collect();
        FbmPath {
            hurst: self.hurst,
            horizon: self.horizon,
            n: self.n,
            values,
            seed,
        }
    }
}

fn circulant_sampler(hurst: f64, n: usize) -> Result<Sampler> {
    let size = 2 * n;
    let mut buf: Vec<Complex<f64>> = (0..size)
        .map(|k| {
            let lag = if k <= n { k } else { size - k };
            Complex::new(fgn_autocovariance(lag as i64, hurst), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(size);
    fft.process(&mut buf);
    let max = buf.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let mut sqrt_eigen = Vec::with_capacity(size);
    for z in &buf {
        let lambda = z.re;
        if lambda < -EIGEN_CLIP * max {
            return Err(Error::Embedding(format!(
                "negative eigenvalue {lambda:.3e} (max {max:.3e})"
            )));
        }
        sqrt_eigen.push((lambda.max(0.0) / size as f64).sqrt());
    }
    Ok(Sampler::Circulant { sqrt_eigen, fft })
}

fn dense_sampler(hurst: f64, n: usize) -> Result<Sampler> {
    if n > DENSE_FALLBACK_MAX {
        return Err(Error::Embedding(format!(
            "dense factorization limited to n <= {DENSE_FALLBACK_MAX}, got {n}"
        )));
    }
    let cov = DMatrix::from_fn(n, n, |i, j| fgn_autocovariance(i as i64 - j as i64, hurst));
    let chol = Cholesky::new(cov)
        .ok_or_else(|| Error::Embedding("dense covariance is not positive definite".into()))?;
    Ok(Sampler::Dense { lower: chol.l() })
}

/// Generate an `m`-component fBm path on `n_fine` uniform steps of `[0, T]`.
pub fn generate_fbm(
    hurst: f64,
    n_fine: usize,
    horizon: f64,
    components: usize,
    seed: u64,
) -> Result<FbmPath> {
    if components == 0 {
        return Err(Error::Domain("need at least one component".into()));
    }
    Ok(FbmGenerator::new(hurst, n_fine, horizon)?.generate(components, seed))
}
