//! Problem and certificate files.
//!
//! Both are TOML by default; a document whose first non-blank character is
//! `{` is read as JSON. Polynomials are stored as strings in the polynomial
//! grammar, using the problem's variable names.

use std::fmt;

use serde::{Deserialize, Serialize};

use qcert::certify::QcCertificate;
use qcert::densify::PerturbationRecord;
use qcert::kkt::SemiAlgebraicSet;
use qcert::polyring::{default_names, MatrixPolynomial, PolyError, Polynomial};
use qcert::sos::SosDecomposition;

pub const CERTIFICATE_FORMAT: &str = "qcert-certificate";
pub const CERTIFICATE_VERSION: u32 = 1;

#[derive(Debug)]
pub enum DocError {
    Syntax(String),
    Field { field: String, message: String },
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DocError::Syntax(m) => write!(f, "malformed document: {m}"),
            DocError::Field { field, message } => write!(f, "{field}: {message}"),
        }
    }
}

impl std::error::Error for DocError {}

fn field_err(field: impl Into<String>, message: impl fmt::Display) -> DocError {
    DocError::Field {
        field: field.into(),
        message: message.to_string(),
    }
}

fn read_document<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, DocError> {
    if text.trim_start().starts_with('{') {
        serde_json::from_str(text).map_err(|e| DocError::Syntax(e.to_string()))
    } else {
        toml::from_str(text).map_err(|e| DocError::Syntax(e.to_string()))
    }
}

/// Optional solver settings carried by a problem file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemOptions {
    pub epsilon: Option<f64>,
    pub r_max: Option<u32>,
    pub prune: Option<bool>,
    pub seed: Option<u64>,
    pub tol_kkt: Option<f64>,
    pub tol_cert: Option<f64>,
}

/// `minimize objective subject to constraints[j] ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub nvars: usize,
    #[serde(default)]
    pub variables: Option<Vec<String>>,
    pub objective: String,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub slater_point: Option<Vec<f64>>,
    #[serde(default)]
    pub options: ProblemOptions,
}

/// A parsed problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub names: Vec<String>,
    pub objective: Polynomial,
    pub set: SemiAlgebraicSet,
    pub options: ProblemOptions,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, DocError> {
        read_document(text)
    }

    pub fn build(&self) -> Result<Problem, DocError> {
        let names = match &self.variables {
            Some(v) if v.len() != self.nvars => {
                return Err(field_err(
                    "variables",
                    format!("{} names for nvars = {}", v.len(), self.nvars),
                ))
            }
            Some(v) => v.clone(),
            None => default_names(self.nvars),
        };
        let objective = Polynomial::parse_with_names(&self.objective, &names)
            .map_err(|e| field_err("objective", e))?;
        let g = self
            .constraints
            .iter()
            .enumerate()
            .map(|(j, s)| {
                Polynomial::parse_with_names(s, &names)
                    .map_err(|e| field_err(format!("constraints[{j}]"), e))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut set = SemiAlgebraicSet::new(self.nvars, g).map_err(|e| field_err("constraints", e))?;
        if let Some(z) = &self.slater_point {
            set = set
                .with_slater_point(z.clone())
                .map_err(|e| field_err("slater_point", e))?;
        }
        Ok(Problem {
            names,
            objective,
            set,
            options: self.options.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaDoc {
    pub factors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualsDoc {
    pub identity: f64,
}

/// Serialized [`QcCertificate`]. Plain values precede tables so the TOML
/// form is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDocument {
    pub format: String,
    pub version: u32,
    pub nvars: usize,
    pub variables: Vec<String>,
    pub fstar: f64,
    pub lambda: Vec<f64>,
    pub claims_nonnegative: bool,
    #[serde(default)]
    pub xstar: Vec<f64>,
    /// Rows of `H` with `∇²L = HᵀH`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hessian_factor: Option<Vec<Vec<String>>>,
    pub sigma: SigmaDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationRecord>,
    pub residuals: ResidualsDoc,
}

impl CertificateDocument {
    pub fn from_certificate(cert: &QcCertificate, names: &[String]) -> Self {
        CertificateDocument {
            format: CERTIFICATE_FORMAT.to_string(),
            version: CERTIFICATE_VERSION,
            nvars: cert.nvars,
            variables: names.to_vec(),
            fstar: cert.fstar,
            lambda: cert.lambda.clone(),
            claims_nonnegative: cert.claims_nonnegative,
            xstar: cert.xstar.clone(),
            hessian_factor: cert.hessian_factor.as_ref().map(|h| {
                (0..h.rows())
                    .map(|i| h.row(i).iter().map(|p| p.format_with(names)).collect())
                    .collect()
            }),
            sigma: SigmaDoc {
                factors: cert.sigma.factors.iter().map(|q| q.format_with(names)).collect(),
            },
            perturbation: cert.perturbation,
            residuals: ResidualsDoc {
                identity: cert.identity_residual,
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self, DocError> {
        let doc: CertificateDocument = read_document(text)?;
        if doc.format != CERTIFICATE_FORMAT {
            return Err(field_err("format", format!("expected '{CERTIFICATE_FORMAT}'")));
        }
        if doc.version != CERTIFICATE_VERSION {
            return Err(field_err("version", format!("unsupported version {}", doc.version)));
        }
        if doc.variables.len() != doc.nvars {
            return Err(field_err("variables", "length differs from nvars"));
        }
        Ok(doc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("certificate documents serialize")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificate documents serialize") + "\n"
    }

    pub fn to_certificate(&self) -> Result<QcCertificate, DocError> {
        let parse = |field: String, s: &str| {
            Polynomial::parse_with_names(s, &self.variables).map_err(|e: PolyError| field_err(field, e))
        };
        let factors = self
            .sigma
            .factors
            .iter()
            .enumerate()
            .map(|(i, s)| parse(format!("sigma.factors[{i}]"), s))
            .collect::<Result<Vec<_>, _>>()?;
        let hessian_factor = match &self.hessian_factor {
            None => None,
            Some(rows) => {
                let rows = rows
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        row.iter()
                            .enumerate()
                            .map(|(j, s)| parse(format!("hessian_factor[{i}][{j}]"), s))
                            .collect::<Result<Vec<_>, _>>()
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Some(MatrixPolynomial::from_rows(rows).map_err(|e| field_err("hessian_factor", e))?)
            }
        };
        Ok(QcCertificate {
            nvars: self.nvars,
            sigma: SosDecomposition {
                factors,
                ..SosDecomposition::zero()
            },
            lambda: self.lambda.clone(),
            fstar: self.fstar,
            claims_nonnegative: self.claims_nonnegative,
            xstar: self.xstar.clone(),
            perturbation: self.perturbation,
            identity_residual: self.residuals.identity,
            hessian_factor,
        })
    }
}
