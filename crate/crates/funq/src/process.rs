//! Eigenvalue models of the Gaussian process families.
//!
//! Each model carries the data the rest of the pipeline consumes: the
//! coefficient weights `eigenvalue(j)` of the L²\[0,1\] expansion, tail sums
//! Σ_{j>k} λ_j with absolute error below 1e-10, the regular-variation pair
//! (b, scale) of the process spectrum, and — where one exists in closed form —
//! the expansion basis itself.
//!
//! Brownian motion is exact: λ_j = (π(j-1/2))⁻², u_j(t) = √2 sin(t/√λ_j).
//! The Riemann-Liouville and integrated families have no explicit eigenbasis;
//! their spectrum is represented by the asymptotic law λ_j ≈ scale · j⁻ᵇ,
//! which is a model of the true spectrum, not the spectrum itself.
//!
//! `RlThreeHalves` is the once-integrated expansion over the non-orthogonal
//! images R₁(u_j): `eigenvalue(j)` returns the L² energy weight
//! λ_j²(3 − 4(−1)^{j−1}√λ_j) of the j-th term (λ_j Brownian), while `b` and
//! `scale` describe the true process spectrum (b = 4, scale = π⁻⁴) so that
//! rate predictions refer to the process, not to the expansion.

use crate::error::FunqError;
use crate::Result;
use std::f64::consts::PI;

/// Process family selector.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// Standard Brownian motion with its exact Karhunen-Loève data.
    BrownianKl,
    /// Riemann-Liouville process of index rho > 0 (asymptotic spectrum model).
    RiemannLiouville { rho: f64 },
    /// beta-times fractionally integrated Brownian motion (asymptotic model).
    IntegratedBm { beta: f64 },
    /// Once-integrated Brownian motion expanded over R₁(u_j).
    RlThreeHalves,
    /// Explicitly listed weights, optionally continued by a power tail.
    Explicit {
        values: Vec<f64>,
        tail_index: Option<f64>,
    },
}

/// Eigenvalue model: weights, tail sums, regular-variation data, basis.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenModel {
    kind: ModelKind,
    /// Regular-variation index of the process spectrum (infinite for a
    /// finite explicit spectrum).
    b: f64,
    /// Leading constant of the spectrum law λ_j ~ scale · j⁻ᵇ.
    scale: f64,
}

/// The pair φ(x) = scale·x⁻ᵇ, ψ(x) = 1/(x φ(x)) used by rate formulas.
#[derive(Debug, Clone, Copy)]
pub struct RegVarFns {
    pub b: f64,
    pub scale: f64,
}

impl RegVarFns {
    pub fn phi(&self, x: f64) -> f64 {
        self.scale * x.powf(-self.b)
    }

    pub fn psi(&self, x: f64) -> f64 {
        1.0 / (x * self.phi(x))
    }
}

#[inline]
fn brownian_lambda(j: usize) -> f64 {
    let x = PI * (j as f64 - 0.5);
    1.0 / (x * x)
}

// Energy weight of the j-th term of the R₁(u_j) expansion:
// λ_j² (3 − 4 (−1)^{j−1} √λ_j) with λ_j the Brownian eigenvalue.
#[inline]
fn rl32_weight(j: usize) -> f64 {
    let lam = brownian_lambda(j);
    let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
    lam * lam * (3.0 - 4.0 * sign * lam.sqrt())
}

/// Allocation weight ν_j = λ_j²(3 + 4√λ_j) ~ 3π⁻⁴ j⁻⁴ for the once-integrated
/// scalar product quantizer.
pub fn rl32_allocation_weight(j: usize) -> f64 {
    let lam = brownian_lambda(j);
    lam * lam * (3.0 + 4.0 * lam.sqrt())
}

impl EigenModel {
    pub fn brownian() -> Self {
        EigenModel {
            kind: ModelKind::BrownianKl,
            b: 2.0,
            scale: 1.0 / (PI * PI),
        }
    }

    pub fn riemann_liouville(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(FunqError::OutOfRange {
                name: "rho",
                range: "(0, inf)",
                value: rho,
            });
        }
        let b = 2.0 * rho + 1.0;
        let g = crate::special::gamma(rho + 0.5);
        Ok(EigenModel {
            kind: ModelKind::RiemannLiouville { rho },
            b,
            scale: g * g * PI.powf(-b),
        })
    }

    pub fn integrated_bm(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(FunqError::OutOfRange {
                name: "beta",
                range: "(0, inf)",
                value: beta,
            });
        }
        // Y^beta is X^{beta+1/2}/Γ(1+beta): the Γ² factors cancel in the scale.
        let b = 2.0 * beta + 2.0;
        Ok(EigenModel {
            kind: ModelKind::IntegratedBm { beta },
            b,
            scale: PI.powf(-b),
        })
    }

    pub fn rl_three_halves() -> Self {
        EigenModel {
            kind: ModelKind::RlThreeHalves,
            b: 4.0,
            scale: PI.powf(-4.0),
        }
    }

    pub fn explicit(values: Vec<f64>, tail_index: Option<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FunqError::Parse {
                location: "explicit".into(),
                message: "needs at least one value".into(),
            });
        }
        for (i, pair) in values.windows(2).enumerate() {
            if pair[1] > pair[0] {
                return Err(FunqError::Parse {
                    location: format!("explicit value {}", i + 2),
                    message: "values must be non-increasing".into(),
                });
            }
        }
        if values.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(FunqError::Parse {
                location: "explicit".into(),
                message: "values must be positive and finite".into(),
            });
        }
        if let Some(b) = tail_index {
            if !(b > 1.0 && b.is_finite()) {
                return Err(FunqError::OutOfRange {
                    name: "tail index",
                    range: "(1, inf)",
                    value: b,
                });
            }
        }
        let (b, scale) = match tail_index {
            Some(b) => {
                let last = *values.last().unwrap();
                let len = values.len() as f64;
                (b, last * len.powf(b))
            }
            // A finite spectrum decays faster than any power law.
            None => (f64::INFINITY, 0.0),
        };
        Ok(EigenModel {
            kind: ModelKind::Explicit { values, tail_index },
            b,
            scale,
        })
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    /// Regular-variation index of the spectrum.
    pub fn b(&self) -> f64 {
        self.b
    }

    /// Leading constant of λ_j ~ scale·j⁻ᵇ.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn reg_var(&self) -> Result<RegVarFns> {
        if !self.b.is_finite() {
            return Err(FunqError::IndexTooSmall(f64::INFINITY));
        }
        Ok(RegVarFns {
            b: self.b,
            scale: self.scale,
        })
    }

    /// Does the model carry an explicit basis for synthesis?
    pub fn has_basis(&self) -> bool {
        matches!(self.kind, ModelKind::BrownianKl | ModelKind::RlThreeHalves)
    }

    /// j-th expansion weight, j >= 1.
    ///
    /// Exact for `BrownianKl`, `RlThreeHalves` and listed `Explicit` entries;
    /// the asymptotic law scale·j⁻ᵇ for the Riemann-Liouville and integrated
    /// families. An exhausted finite explicit spectrum returns 0.
    pub fn eigenvalue(&self, j: usize) -> Result<f64> {
        if j == 0 {
            return Err(FunqError::InvalidIndex(0));
        }
        Ok(match &self.kind {
            ModelKind::BrownianKl => brownian_lambda(j),
            ModelKind::RiemannLiouville { .. } | ModelKind::IntegratedBm { .. } => {
                self.scale * (j as f64).powf(-self.b)
            }
            ModelKind::RlThreeHalves => rl32_weight(j),
            ModelKind::Explicit { values, tail_index } => {
                if j <= values.len() {
                    values[j - 1]
                } else if tail_index.is_some() {
                    self.scale * (j as f64).powf(-self.b)
                } else {
                    0.0
                }
            }
        })
    }

    /// Multiplier of the j-th unit normal in the L² expansion: √λ_j of the
    /// underlying orthonormal expansion. Coincides with √eigenvalue(j) except
    /// for `RlThreeHalves`, whose basis functions carry the remaining norm.
    pub fn coeff_scale(&self, j: usize) -> Result<f64> {
        if j == 0 {
            return Err(FunqError::InvalidIndex(0));
        }
        Ok(match self.kind {
            ModelKind::RlThreeHalves => brownian_lambda(j).sqrt(),
            _ => self.eigenvalue(j)?.sqrt(),
        })
    }

    /// Basis function value at time t in \[0,1\] for models with an explicit
    /// basis; other models are rejected.
    pub fn basis_eval(&self, j: usize, t: f64) -> Result<f64> {
        if j == 0 {
            return Err(FunqError::InvalidIndex(0));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(FunqError::OutOfRange {
                name: "t",
                range: "[0, 1]",
                value: t,
            });
        }
        let omega = PI * (j as f64 - 0.5); // = 1/sqrt(lambda_j), Brownian
        match self.kind {
            ModelKind::BrownianKl => Ok(std::f64::consts::SQRT_2 * (omega * t).sin()),
            ModelKind::RlThreeHalves => {
                let lam = brownian_lambda(j);
                Ok((2.0 * lam).sqrt() * (1.0 - (omega * t).cos()))
            }
            _ => Err(FunqError::NoExplicitBasis { model: self.name() }),
        }
    }

    /// Σ_{j >= k+1} eigenvalue(j), absolute error <= 1e-10.
    pub fn tail_sum(&self, k: usize) -> f64 {
        match &self.kind {
            // sum (pi(j-1/2))^-2 over j > k is trigamma(k+1/2)/pi^2
            ModelKind::BrownianKl => crate::special::trigamma(k as f64 + 0.5) / (PI * PI),
            ModelKind::RiemannLiouville { .. } | ModelKind::IntegratedBm { .. } => {
                self.scale * power_tail(self.b, k)
            }
            ModelKind::RlThreeHalves => {
                // direct summation; remainder below 1e-14 handled analytically
                const TERMS: usize = 20_000;
                let mut acc = 0.0;
                for j in (k + 1)..=(k + TERMS) {
                    acc += rl32_weight(j);
                }
                // midpoint remainder of the 3 lambda_j^2 part
                let edge = (k + TERMS) as f64;
                acc + 3.0 * PI.powf(-4.0) / (3.0 * edge * edge * edge)
            }
            ModelKind::Explicit { values, tail_index } => {
                let mut acc = 0.0;
                for v in values.iter().skip(k) {
                    acc += v;
                }
                if tail_index.is_some() {
                    let from = k.max(values.len());
                    acc += self.scale * power_tail(self.b, from);
                }
                acc
            }
        }
    }

    /// Short human/machine name used in reports and files.
    pub fn name(&self) -> String {
        match &self.kind {
            ModelKind::BrownianKl => "brownian".into(),
            ModelKind::RiemannLiouville { rho } => format!("rl:{rho}"),
            ModelKind::IntegratedBm { beta } => format!("ibm:{beta}"),
            ModelKind::RlThreeHalves => "rl32".into(),
            ModelKind::Explicit { .. } => "explicit".into(),
        }
    }

    /// Key-value descriptor, reparsable by [`EigenModel::parse`].
    pub fn descriptor(&self) -> String {
        match &self.kind {
            ModelKind::Explicit { values, tail_index } => {
                let vals: Vec<String> = values.iter().map(|v| format!("{v:.16e}")).collect();
                match tail_index {
                    Some(b) => format!("explicit:{};tail={b}", vals.join(",")),
                    None => format!("explicit:{}", vals.join(",")),
                }
            }
            _ => self.name(),
        }
    }

    /// Parse a model spec string: `brownian`, `rl:RHO`, `ibm:BETA`, `rl32`,
    /// `explicit:V1,V2,...[;tail=B]`. Errors carry the offending location.
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec == "brownian" || spec == "bm" {
            return Ok(EigenModel::brownian());
        }
        if spec == "rl32" {
            return Ok(EigenModel::rl_three_halves());
        }
        if let Some(rest) = spec.strip_prefix("rl:") {
            let rho = parse_float(rest, spec, 3)?;
            return EigenModel::riemann_liouville(rho);
        }
        if let Some(rest) = spec.strip_prefix("ibm:") {
            let beta = parse_float(rest, spec, 4)?;
            return EigenModel::integrated_bm(beta);
        }
        if let Some(rest) = spec.strip_prefix("explicit:") {
            let (list, tail) = match rest.split_once(";tail=") {
                Some((l, t)) => (l, Some(t)),
                None => (rest, None),
            };
            let mut values = Vec::new();
            let mut offset = "explicit:".len();
            for item in list.split(',') {
                values.push(parse_float(item, spec, offset)?);
                offset += item.len() + 1;
            }
            let tail_index = match tail {
                Some(t) => Some(parse_float(t, spec, spec.len() - t.len())?),
                None => None,
            };
            return EigenModel::explicit(values, tail_index);
        }
        Err(FunqError::Parse {
            location: format!("'{spec}' at offset 0"),
            message:
                "expected one of: brownian, rl:RHO, ibm:BETA, rl32, explicit:V1,V2,...[;tail=B]"
                    .into(),
        })
    }
}

fn parse_float(tok: &str, whole: &str, offset: usize) -> Result<f64> {
    tok.trim().parse::<f64>().map_err(|_| FunqError::Parse {
        location: format!("'{whole}' at offset {offset}"),
        message: format!("invalid number '{tok}'"),
    })
}

// Sum of j^-b over j > k: exact partial sum to 1e5 terms, then the midpoint
// integral bracket. Absolute error below 1e-12 for b > 1.
fn power_tail(b: f64, k: usize) -> f64 {
    const EXACT_UP_TO: usize = 100_000;
    let mut acc = 0.0;
    let switch = if k < EXACT_UP_TO {
        for j in (k + 1)..=EXACT_UP_TO {
            acc += (j as f64).powf(-b);
        }
        EXACT_UP_TO
    } else {
        k
    };
    let edge = switch as f64 + 0.5;
    acc + edge.powf(1.0 - b) / (b - 1.0) + b / 24.0 * edge.powf(-b - 1.0)
}
