//! JSON experiment configuration.
//!
//! ```json
//! {
//!   "p": 800, "n": 2000,
//!   "signal": {"d": [1.5, 1.2, 0.5], "basis": "standard"},
//!   "sigma": {"sigmas": [3.0, 2.0], "basis": "standard"},
//!   "profile": "ones",
//!   "dist": "gaussian",
//!   "trials": 20, "seed": 1
//! }
//! ```
//!
//! `signal.basis` may instead be `{"u": [[..p..], ...], "v": [[..n..], ...]}`
//! with one vector per strength; `sigma.basis` likewise takes
//! `{"xi": [...], "theta": [...]}`. `profile` is one of `"ones"`,
//! `"two_level"`, `{"constant": t}`, `{"blocks": [[rows, value], ...]}` or
//! `{"explicit": [[...], ...]}`. `dist` is `"gaussian"`, `"rademacher"` or
//! `{"student_t": nu}`. Optional `"truncate": M` enables truncation.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{standard_basis_signal, ExperimentConfig, NoiseDistribution, SigmaSpec, SignalSpec, VarianceProfile};

pub const DEFAULT_TRIALS: usize = 20;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    p: usize,
    n: usize,
    #[serde(default)]
    signal: Option<SignalFile>,
    #[serde(default)]
    sigma: Option<SigmaFile>,
    #[serde(default)]
    profile: Option<ProfileFile>,
    #[serde(default)]
    dist: Option<DistFile>,
    #[serde(default)]
    trials: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    truncate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalFile {
    d: Vec<f64>,
    #[serde(default)]
    basis: Option<SignalBasis>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SignalBasis {
    Named(String),
    Explicit { u: Vec<Vec<f64>>, v: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SigmaFile {
    sigmas: Vec<f64>,
    #[serde(default)]
    basis: Option<SigmaBasis>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SigmaBasis {
    Named(String),
    Explicit { xi: Vec<Vec<f64>>, theta: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProfileFile {
    Named(String),
    Constant { constant: f64 },
    Blocks { blocks: Vec<(usize, f64)> },
    Explicit { explicit: Vec<Vec<f64>> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DistFile {
    Named(String),
    StudentT { student_t: f64 },
}

fn columns(vectors: &[Vec<f64>], len: usize, what: &str) -> Result<DenseMatrix> {
    if let Some(bad) = vectors.iter().find(|v| v.len() != len) {
        return Err(Error::Dimension(format!("{what} vector has length {}, expected {len}", bad.len())));
    }
    DenseMatrix::from_columns(vectors, len)
}

/// Parse a configuration document; `seed_override` replaces its seed.
pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let file: ConfigFile = serde_json::from_str(text)?;
    let (p, n) = (file.p, file.n);
    let signal = match file.signal {
        None => SignalSpec::none(p, n),
        Some(s) => match s.basis {
            None => standard_basis_signal(p, n, &s.d)?,
            Some(SignalBasis::Named(name)) if name == "standard" => standard_basis_signal(p, n, &s.d)?,
            Some(SignalBasis::Named(name)) => {
                return Err(Error::InvalidParameter(format!("unknown signal basis {name:?}")))
            }
            Some(SignalBasis::Explicit { u, v }) => {
                SignalSpec::new(s.d, columns(&u, p, "signal u")?, columns(&v, n, "signal v")?)?
            }
        },
    };
    let sigma = match file.sigma {
        None => SigmaSpec::identity(p),
        Some(s) => match s.basis {
            None => SigmaSpec::standard_basis(p, s.sigmas)?,
            Some(SigmaBasis::Named(name)) if name == "standard" => SigmaSpec::standard_basis(p, s.sigmas)?,
            Some(SigmaBasis::Named(name)) => {
                return Err(Error::InvalidParameter(format!("unknown sigma basis {name:?}")))
            }
            Some(SigmaBasis::Explicit { xi, theta }) => {
                SigmaSpec::new(s.sigmas, columns(&xi, p, "sigma xi")?, columns(&theta, p, "sigma theta")?)?
            }
        },
    };
    let profile = match file.profile {
        None => VarianceProfile::ones(p, n),
        Some(ProfileFile::Named(name)) => match name.as_str() {
            "ones" => VarianceProfile::ones(p, n),
            "two_level" => VarianceProfile::two_level(p, n)?,
            _ => return Err(Error::InvalidParameter(format!("unknown profile {name:?}"))),
        },
        Some(ProfileFile::Constant { constant }) => VarianceProfile::constant(p, n, constant)?,
        Some(ProfileFile::Blocks { blocks }) => {
            let prof = VarianceProfile::row_blocks(n, &blocks)?;
            if prof.rows() != p {
                return Err(Error::Dimension(format!("blocks cover {} rows, expected {p}", prof.rows())));
            }
            prof
        }
        Some(ProfileFile::Explicit { explicit }) => VarianceProfile::new(DenseMatrix::from_rows(&explicit)?)?,
    };
    let distribution = match file.dist {
        None => NoiseDistribution::Gaussian,
        Some(DistFile::Named(name)) => match name.as_str() {
            "gaussian" => NoiseDistribution::Gaussian,
            "rademacher" => NoiseDistribution::Rademacher,
            _ => return Err(Error::InvalidParameter(format!("unknown distribution {name:?}"))),
        },
        Some(DistFile::StudentT { student_t }) => NoiseDistribution::StudentT(student_t),
    };
    let config = ExperimentConfig {
        p,
        n,
        signal,
        sigma,
        profile,
        distribution,
        trials: file.trials.unwrap_or(DEFAULT_TRIALS),
        seed: seed_override.or(file.seed).unwrap_or(0),
        truncation: file.truncate,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_document() {
        let text = r#"{"p": 40, "n": 100, "signal": {"d": [1.5, 1.2], "basis": "standard"},
            "sigma": {"sigmas": [3, 2]}, "profile": {"blocks": [[20, 1.0], [20, 1.5]]},
            "dist": {"student_t": 2.2}, "trials": 5, "seed": 7, "truncate": 50}"#;
        let c = parse_config(text, None).unwrap();
        assert_eq!((c.p, c.n, c.trials, c.seed), (40, 100, 5, 7));
        assert_eq!(c.signal.strengths(), &[1.5, 1.2]);
        assert_eq!(c.sigma.strengths(), &[3.0, 2.0]);
        assert_eq!(c.profile.matrix()[(25, 0)], 1.5);
        assert_eq!(c.distribution, NoiseDistribution::StudentT(2.2));
        assert_eq!(c.truncation, Some(50.0));
        assert_eq!(parse_config(text, Some(99)).unwrap().seed, 99);
    }

    #[test]
    fn defaults_are_null_model() {
        let c = parse_config(r#"{"p": 10, "n": 20}"#, None).unwrap();
        assert_eq!(c.signal.rank(), 0);
        assert_eq!(c.sigma.rank(), 0);
        assert_eq!(c.profile.flat_value(), Some(1.0));
        assert_eq!(c.trials, DEFAULT_TRIALS);
    }

    #[test]
    fn explicit_vectors() {
        let mut u = vec![0.0; 8];
        u[1] = 1.0;
        let mut v = vec![0.0; 10];
        v[4] = 1.0;
        let text = serde_json::json!({"p": 8, "n": 10, "signal": {"d": [2.0], "basis": {"u": [u], "v": [v]}},
            "profile": {"constant": 2.0}, "dist": "rademacher"})
        .to_string();
        let c = parse_config(&text, None).unwrap();
        assert_eq!(c.signal.u(0)[1], 1.0);
        assert_eq!(c.profile.flat_value(), Some(2.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config(r#"{"p": 10, "n": 20, "dist": "cauchy"}"#, None).is_err());
        assert!(parse_config(r#"{"p": 10, "n": 20, "profile": {"blocks": [[3, 1.0]]}}"#, None).is_err());
        assert!(parse_config(r#"{"p": 10, "n": 20, "bogus": 1}"#, None).is_err());
        assert!(parse_config(r#"{"p": 10}"#, None).is_err());
        assert!(parse_config(r#"{"p": 10, "n": 20, "dist": {"student_t": 1.5}}"#, None).is_err());
    }
}
