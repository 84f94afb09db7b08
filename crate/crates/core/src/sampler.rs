//! Seeded noise generation, sample assembly and heavy-tail truncation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{signal_matrix, ExperimentConfig, NoiseDistribution, VarianceProfile};

/// Matrix identifiers inside a trial.
pub const STREAM_X1: u64 = 1;
pub const STREAM_X2: u64 = 2;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for matrix `matrix_id` of trial `trial` under `seed`.
///
/// The ChaCha key is derived from `(seed, trial)` and the matrix id selects
/// the stream, so every matrix of every trial has its own counter space and
/// the result does not depend on scheduling.
pub fn stream_rng(seed: u64, trial: u64, matrix_id: u64) -> ChaCha8Rng {
    let mut state = seed ^ trial.wrapping_mul(0xd1b5_4a32_d192_ed03);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(matrix_id);
    rng
}

/// Draws unit-variance, mean-zero values from a [`NoiseDistribution`].
pub struct UnitSampler {
    kind: Kind,
}

enum Kind {
    Gaussian,
    StudentT { dist: StudentT<f64>, scale: f64 },
    Rademacher,
}

impl UnitSampler {
    pub fn new(dist: &NoiseDistribution) -> Result<Self> {
        dist.validate()?;
        let kind = match *dist {
            NoiseDistribution::Gaussian => Kind::Gaussian,
            NoiseDistribution::StudentT(nu) => Kind::StudentT {
                dist: StudentT::new(nu).map_err(|e| Error::InvalidParameter(e.to_string()))?,
                // Var(t_nu) = nu / (nu - 2).
                scale: ((nu - 2.0) / nu).sqrt(),
            },
            NoiseDistribution::Rademacher => Kind::Rademacher,
        };
        Ok(Self { kind })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Gaussian => StandardNormal.sample(rng),
            Kind::StudentT { dist, scale } => dist.sample(rng) * scale,
            Kind::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// `p x n` noise with independent entries of mean 0 and variance `t_ij / n`.
pub fn sample_noise<R: Rng + ?Sized>(
    profile: &VarianceProfile,
    dist: &NoiseDistribution,
    rng: &mut R,
) -> Result<DenseMatrix> {
    let unit = UnitSampler::new(dist)?;
    let n = profile.cols() as f64;
    let t = profile.matrix();
    Ok(match profile.flat_value() {
        Some(v) => {
            let s = (v / n).sqrt();
            DenseMatrix::from_fn(profile.rows(), profile.cols(), |_, _| s * unit.sample(rng))
        }
        None => DenseMatrix::from_fn(profile.rows(), profile.cols(), |i, j| {
            (t[(i, j)] / n).sqrt() * unit.sample(rng)
        }),
    })
}

/// Two observations of one signal plus the components they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePair {
    pub h1: DenseMatrix,
    pub h2: DenseMatrix,
    pub components: Option<Components>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub x1: DenseMatrix,
    pub x2: DenseMatrix,
    pub signal: DenseMatrix,
    pub sigma: DenseMatrix,
}

/// Draw `H_a = S + Σ X_a` for `a = 1, 2` for one trial of `config`.
pub fn assemble_pair(config: &ExperimentConfig, trial: u64, retain: bool) -> Result<SamplePair> {
    let s = signal_matrix(&config.signal);
    assemble_with_signal(config, &s, trial, retain)
}

/// As [`assemble_pair`] with a precomputed signal matrix.
pub fn assemble_with_signal(
    config: &ExperimentConfig,
    signal: &DenseMatrix,
    trial: u64,
    retain: bool,
) -> Result<SamplePair> {
    let (x1, x2) = noise_pair(config, trial)?;
    let h1 = signal.add(&config.sigma.apply(&x1)?)?;
    let h2 = signal.add(&config.sigma.apply(&x2)?)?;
    let components = if retain {
        Some(Components {
            x1,
            x2,
            signal: signal.clone(),
            sigma: crate::model::sigma_matrix(&config.sigma, config.p)?,
        })
    } else {
        None
    };
    Ok(SamplePair { h1, h2, components })
}

/// The two independent noise matrices of a trial, truncated if configured.
pub fn noise_pair(config: &ExperimentConfig, trial: u64) -> Result<(DenseMatrix, DenseMatrix)> {
    let mut out = Vec::with_capacity(2);
    for id in [STREAM_X1, STREAM_X2] {
        let mut rng = stream_rng(config.seed, trial, id);
        let mut x = sample_noise(&config.profile, &config.distribution, &mut rng)?;
        if let Some(m) = config.truncation {
            x = truncate(&x, m, config.n, &config.distribution)?;
        }
        out.push(x);
    }
    let x2 = out.pop().expect("two matrices");
    let x1 = out.pop().expect("two matrices");
    Ok((x1, x2))
}

/// Zero entries with `|sqrt(n) x| > m`, then subtract the mean of the kept
/// part: zero for Gaussian noise, the realized sample mean otherwise.
pub fn truncate(x: &DenseMatrix, m: f64, n: usize, dist: &NoiseDistribution) -> Result<DenseMatrix> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("truncation level must be positive, got {m}")));
    }
    let cut = m / (n as f64).sqrt();
    let kept: Vec<f64> = x.as_slice().iter().map(|&v| if v.abs() <= cut { v } else { 0.0 }).collect();
    let center = match dist {
        NoiseDistribution::Gaussian => 0.0,
        _ => {
            if kept.is_empty() {
                0.0
            } else {
                kept.iter().sum::<f64>() / kept.len() as f64
            }
        }
    };
    DenseMatrix::from_vec(x.rows(), x.cols(), kept.into_iter().map(|v| v - center).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{standard_basis_signal, SigmaSpec};

    fn variance_times_n(x: &DenseMatrix, n: usize) -> f64 {
        let k = x.as_slice().len() as f64;
        let mean = x.as_slice().iter().sum::<f64>() / k;
        x.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) * n as f64
    }

    #[test]
    fn gaussian_unit_variance() {
        let prof = VarianceProfile::ones(1000, 1000);
        let x = sample_noise(&prof, &NoiseDistribution::Gaussian, &mut stream_rng(1, 0, 1)).unwrap();
        let v = variance_times_n(&x, 1000);
        assert!((v - 1.0).abs() < 0.01, "{v}");
    }

    #[test]
    fn student_t_standardized() {
        let prof = VarianceProfile::ones(1000, 1000);
        let x = sample_noise(&prof, &NoiseDistribution::StudentT(5.0), &mut stream_rng(5, 0, 1)).unwrap();
        let v = variance_times_n(&x, 1000);
        assert!((v - 1.0).abs() < 0.05, "{v}");
        let y = sample_noise(&prof, &NoiseDistribution::StudentT(8.0), &mut stream_rng(5, 0, 2)).unwrap();
        assert!((variance_times_n(&y, 1000) - 1.0).abs() < 0.02);
    }

    #[test]
    fn rademacher_entries() {
        let prof = VarianceProfile::constant(20, 25, 4.0).unwrap();
        let x = sample_noise(&prof, &NoiseDistribution::Rademacher, &mut stream_rng(2, 0, 1)).unwrap();
        let s = (4.0f64 / 25.0).sqrt();
        assert!(x.as_slice().iter().all(|&v| (v.abs() - s).abs() < 1e-15));
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(VarianceProfile::constant(3, 3, 0.0).is_err());
        let prof = VarianceProfile::ones(3, 3);
        assert!(sample_noise(&prof, &NoiseDistribution::StudentT(1.5), &mut stream_rng(0, 0, 0)).is_err());
    }

    #[test]
    fn profile_fidelity_per_cell_class() {
        let prof = VarianceProfile::row_blocks(500, &[(200, 1.0), (200, 1.5)]).unwrap();
        let x = sample_noise(&prof, &NoiseDistribution::Gaussian, &mut stream_rng(3, 0, 1)).unwrap();
        for (rows, t) in [(0..200, 1.0), (200..400, 1.5)] {
            let vals: Vec<f64> = rows.flat_map(|i| x.row(i).to_vec()).collect();
            let k = vals.len() as f64;
            let var_n = vals.iter().map(|v| v * v).sum::<f64>() / k * 500.0;
            // Standard error of the sample second moment of a Gaussian is sqrt(2/k) * t.
            let se = (2.0 / k).sqrt() * t;
            assert!((var_n - t).abs() < 3.0 * se, "class {t}: {var_n}");
        }
    }

    #[test]
    fn streams_are_independent_and_reproducible() {
        let a = stream_rng(9, 3, 1).random::<u64>();
        assert_eq!(a, stream_rng(9, 3, 1).random::<u64>());
        assert_ne!(a, stream_rng(9, 3, 2).random::<u64>());
        assert_ne!(a, stream_rng(9, 4, 1).random::<u64>());
        assert_ne!(a, stream_rng(10, 3, 1).random::<u64>());
    }

    #[test]
    fn null_config_gives_pure_noise() {
        let cfg = ExperimentConfig::null(8, 12, 1, 4);
        let pair = assemble_pair(&cfg, 0, true).unwrap();
        let c = pair.components.unwrap();
        assert_eq!(pair.h1, c.x1);
        assert_eq!(pair.h2, c.x2);
    }

    #[test]
    fn repeated_assembly_is_bitwise_identical() {
        let mut cfg = ExperimentConfig::null(12, 20, 1, 77);
        cfg.signal = standard_basis_signal(12, 20, &[1.5]).unwrap();
        assert_eq!(assemble_pair(&cfg, 3, false).unwrap(), assemble_pair(&cfg, 3, false).unwrap());
    }

    #[test]
    fn difference_is_independent_of_signal() {
        let mut cfg = ExperimentConfig::null(12, 20, 1, 5);
        cfg.signal = standard_basis_signal(12, 20, &[1.5, 1.0]).unwrap();
        cfg.sigma = SigmaSpec::standard_basis(12, vec![3.0, 2.0]).unwrap();
        let pair = assemble_pair(&cfg, 0, true).unwrap();
        let c = pair.components.unwrap();
        let lhs = pair.h1.sub(&pair.h2).unwrap();
        let rhs = c.sigma.matmul(&c.x1.sub(&c.x2).unwrap()).unwrap();
        assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-12);
        let h1 = c.signal.add(&c.sigma.matmul(&c.x1).unwrap()).unwrap();
        assert!(h1.sub(&pair.h1).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn truncation_keeps_small_entries() {
        let x = DenseMatrix::from_rows(&[vec![0.1, -0.1], vec![0.05, -0.05]]).unwrap();
        let y = truncate(&x, 3.0, 100, &NoiseDistribution::StudentT(3.0)).unwrap();
        assert!(y.sub(&x).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn truncation_zeroes_huge_entry() {
        let x = DenseMatrix::from_rows(&[vec![0.1, -0.1, 50.0, 0.0]]).unwrap();
        let y = truncate(&x, 3.0, 100, &NoiseDistribution::StudentT(3.0)).unwrap();
        assert_eq!(y.as_slice(), &[0.1, -0.1, 0.0, 0.0]);
        let x = DenseMatrix::from_rows(&[vec![0.2, 0.0, 50.0, 0.0]]).unwrap();
        let y = truncate(&x, 3.0, 100, &NoiseDistribution::StudentT(3.0)).unwrap();
        assert!((y[(0, 2)] + 0.05).abs() < 1e-15);
        assert!(y.as_slice().iter().all(|v| v.abs() <= 2.0 * 3.0 / 10.0));
    }

    /// `E[Z^2 1(|Z| <= 3)]` by composite Simpson's rule on the standard
    /// normal density.
    fn truncated_second_moment(m: f64) -> f64 {
        let steps = 20_000;
        let h = 2.0 * m / steps as f64;
        let f = |z: f64| z * z * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut acc = f(-m) + f(m);
        for k in 1..steps {
            let z = -m + k as f64 * h;
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(z);
        }
        acc * h / 3.0
    }

    #[test]
    fn truncated_gaussian_variance() {
        let oracle = truncated_second_moment(3.0);
        assert!((oracle - 0.970_70).abs() < 1e-4);
        let n = 1000;
        let prof = VarianceProfile::ones(1000, n);
        let x = sample_noise(&prof, &NoiseDistribution::Gaussian, &mut stream_rng(11, 0, 1)).unwrap();
        let y = truncate(&x, 3.0, n, &NoiseDistribution::Gaussian).unwrap();
        let v = variance_times_n(&y, n);
        assert!((v - oracle).abs() < 0.01, "{v} vs {oracle}");
    }

    #[test]
    fn truncation_idempotent() {
        let prof = VarianceProfile::ones(50, 80);
        let x = sample_noise(&prof, &NoiseDistribution::Gaussian, &mut stream_rng(12, 0, 1)).unwrap();
        let y = truncate(&x, 2.0, 80, &NoiseDistribution::Gaussian).unwrap();
        let z = truncate(&y, 2.0, 80, &NoiseDistribution::Gaussian).unwrap();
        assert!(z.sub(&y).unwrap().max_abs() < 1e-12);
        let x = sample_noise(&prof, &NoiseDistribution::StudentT(3.0), &mut stream_rng(12, 0, 2)).unwrap();
        let y = truncate(&x, 50.0, 80, &NoiseDistribution::StudentT(3.0)).unwrap();
        let z = truncate(&y, 50.0, 80, &NoiseDistribution::StudentT(3.0)).unwrap();
        assert!(z.sub(&y).unwrap().max_abs() < 1e-12);
    }
}
