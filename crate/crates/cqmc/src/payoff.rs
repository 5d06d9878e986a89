//! The benchmark integrands: arithmetic Asian payoff, its pathwise
//! Greeks, and the binary payoff, all in the canonical discontinuous
//! form `f(x) = g(x) * 1{phi(x) >= 0}` with `phi = S_A - K`.
//!
//! Every `g` here is a linear combination of terms `S_i` and
//! `S_i log(S_k / S0)` plus constants. Fixing a coordinate `x_j` and the
//! remaining coordinates `y`, each such term factors as
//! `w(y) (b(y) + c x_j) exp(l x_j)` with `l = sigma * a_{ij}` -- this is
//! the decomposition that lets the conditional expectation over `x_j` be
//! written in closed form downstream.

use crate::path::{self, GeneratingMatrix, MarketParams};

/// Which benchmark integrand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Example {
    /// Discounted payoff `exp(-rate T) (S_A - K)`.
    Payoff,
    /// Pathwise delta `exp(-rate T) S_A / S0`.
    Delta,
    /// Mixed pathwise / likelihood-ratio gamma.
    Gamma,
    /// Pathwise rho (rate sensitivity).
    Rho,
    /// Pathwise theta (maturity sensitivity).
    Theta,
    /// Pathwise vega (volatility sensitivity).
    Vega,
    /// Binary payoff `exp(-rate T)`.
    Binary,
}

impl Example {
    pub const ALL: [Example; 7] = [
        Example::Payoff,
        Example::Delta,
        Example::Gamma,
        Example::Rho,
        Example::Theta,
        Example::Vega,
        Example::Binary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Example::Payoff => "payoff",
            Example::Delta => "delta",
            Example::Gamma => "gamma",
            Example::Rho => "rho",
            Example::Theta => "theta",
            Example::Vega => "vega",
            Example::Binary => "binary",
        }
    }
}

impl std::str::FromStr for Example {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "payoff" => Ok(Example::Payoff),
            "delta" => Ok(Example::Delta),
            "gamma" => Ok(Example::Gamma),
            "rho" => Ok(Example::Rho),
            "theta" => Ok(Example::Theta),
            "vega" => Ok(Example::Vega),
            "binary" => Ok(Example::Binary),
            other => Err(format!(
                "unknown example {other:?} (expected payoff|delta|gamma|rho|theta|vega|binary)"
            )),
        }
    }
}

/// One benchmark integrand bound to market parameters and a generating
/// matrix.
#[derive(Debug, Clone)]
pub struct IntegrandSpec {
    pub example: Example,
    pub params: MarketParams,
    pub matrix: GeneratingMatrix,
}

/// One factored term `weight * (offset + slope * x) * exp(rate * x)`.
#[derive(Debug, Clone, Copy)]
pub struct Term {
    pub weight: f64,
    pub offset: f64,
    pub slope: f64,
    pub rate: f64,
}

impl Term {
    fn constant(value: f64) -> Self {
        Term {
            weight: value,
            offset: 1.0,
            slope: 0.0,
            rate: 0.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.weight * (self.offset + self.slope * x) * (self.rate * x).exp()
    }
}

/// `g` and `phi` of one integrand, restricted to coordinate `j` with the
/// remaining coordinates frozen at `y`.
///
/// `phi(x_j) = sum_i phi_coeffs[i].0 * exp(phi_coeffs[i].1 * x_j) - K`
/// where the coefficient is `G_i(y) / d` and the exponent rate is
/// `sigma * a_{ij}`.
#[derive(Debug, Clone)]
pub struct TermDecomposition {
    /// Terms reconstructing `g(x_j, y)`.
    pub terms: Vec<Term>,
    /// `(G_i(y) / d, sigma * a_{ij})` pairs for the running average.
    pub phi_coeffs: Vec<(f64, f64)>,
    /// The additive constant in `phi` (minus the strike).
    pub phi_constant: f64,
}

impl TermDecomposition {
    /// Reconstruction of `g(x_j, y)` from the factored terms.
    pub fn g_at(&self, xj: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(xj)).sum()
    }

    /// `phi(x_j, y)`.
    pub fn phi_at(&self, xj: f64) -> f64 {
        let s: f64 = self.phi_coeffs.iter().map(|&(w, l)| w * (l * xj).exp()).sum();
        s + self.phi_constant
    }

    /// `d phi / d x_j`.
    pub fn phi_slope_at(&self, xj: f64) -> f64 {
        self.phi_coeffs.iter().map(|&(w, l)| w * l * (l * xj).exp()).sum()
    }

    /// Negates the conditioned coordinate: the decomposition of
    /// `t -> g(-t, y)`. Used when column j is nonpositive so that the
    /// working variable always enters `phi` with nonnegative rates.
    pub fn flipped(&self) -> Self {
        TermDecomposition {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    weight: t.weight,
                    offset: t.offset,
                    slope: -t.slope,
                    rate: -t.rate,
                })
                .collect(),
            phi_coeffs: self.phi_coeffs.iter().map(|&(w, l)| (w, -l)).collect(),
            phi_constant: self.phi_constant,
        }
    }
}

/// Inserts `xj` at position `j` of `y`, producing the full coordinate
/// vector.
pub fn insert_coordinate(xj: f64, y: &[f64], j: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(y.len() + 1);
    x.extend_from_slice(&y[..j]);
    x.push(xj);
    x.extend_from_slice(&y[j..]);
    x
}

impl IntegrandSpec {
    pub fn new(example: Example, params: MarketParams, matrix: GeneratingMatrix) -> Self {
        assert_eq!(matrix.dim(), params.dates, "matrix/params dimension mismatch");
        Self {
            example,
            params,
            matrix,
        }
    }

    /// Input dimension d.
    pub fn dim(&self) -> usize {
        self.params.dates
    }

    fn discount(&self) -> f64 {
        (-self.params.rate * self.params.maturity).exp()
    }

    /// `phi(x) = S_A - K`.
    pub fn phi(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut s = vec![0.0; d];
        path::assets(x, &self.matrix, &self.params, &mut s);
        s.iter().sum::<f64>() / d as f64 - self.params.strike
    }

    /// The smooth factor `g(x)` of the integrand.
    pub fn g(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let p = &self.params;
        let disc = self.discount();
        if self.example == Example::Binary {
            return disc;
        }
        let mut log_ratio = vec![0.0; d];
        path::log_ratios(x, &self.matrix, p, &mut log_ratio);
        let s: Vec<f64> = log_ratio.iter().map(|lr| p.s0 * lr.exp()).collect();
        let s_avg = s.iter().sum::<f64>() / d as f64;
        match self.example {
            Example::Payoff => disc * (s_avg - p.strike),
            Example::Delta => disc * s_avg / p.s0,
            Example::Gamma => {
                let dt = p.dt();
                disc * s_avg * (log_ratio[0] - (p.rate + 0.5 * p.sigma * p.sigma) * dt)
                    / (p.s0 * p.s0 * p.sigma * p.sigma * dt)
            }
            Example::Rho => {
                let ds_dr: f64 = (0..d).map(|i| (i + 1) as f64 * s[i]).sum::<f64>()
                    * p.maturity
                    / (d * d) as f64;
                disc * (ds_dr - p.maturity * (s_avg - p.strike))
            }
            Example::Theta => {
                // dS_A/dT at fixed driving noise; the per-date weight
                // drift * i / (2 d) comes from differentiating the exact
                // solution, with drift = rate - sigma^2 / 2.
                let w = p.drift();
                let ds_dt: f64 = (0..d)
                    .map(|i| {
                        s[i] * (w * (i + 1) as f64 / (2.0 * d as f64)
                            + log_ratio[i] / (2.0 * p.maturity))
                    })
                    .sum::<f64>()
                    / d as f64;
                disc * (ds_dt - p.rate * (s_avg - p.strike))
            }
            Example::Vega => {
                let dt = p.dt();
                let ds_dsig: f64 = (0..d)
                    .map(|i| {
                        s[i] / p.sigma
                            * (log_ratio[i]
                                - (p.rate + 0.5 * p.sigma * p.sigma) * (i + 1) as f64 * dt)
                    })
                    .sum::<f64>()
                    / d as f64;
                disc * ds_dsig
            }
            Example::Binary => unreachable!(),
        }
    }

    /// The full integrand `g(x) * 1{phi(x) >= 0}`.
    pub fn f(&self, x: &[f64]) -> f64 {
        if self.phi(x) >= 0.0 {
            self.g(x)
        } else {
            0.0
        }
    }

    /// Factored decomposition of `g` and `phi` in coordinate `j` at fixed
    /// remaining coordinates `y` (length d - 1).
    ///
    /// Sign-agnostic: works for any column; downstream analytic
    /// preintegration separately requires the column sign condition.
    pub fn decompose(&self, j: usize, y: &[f64]) -> TermDecomposition {
        let d = self.dim();
        let p = &self.params;
        assert!(j < d, "column index out of range");
        assert_eq!(y.len(), d - 1, "conditioning leaves d - 1 coordinates");
        let disc = self.discount();
        let dt = p.dt();
        let sig = p.sigma;

        // h_i = log(G_i / S0): the log price ratio with x_j = 0;
        // G_i = S0 exp(h_i); rate l_i = sigma a_{ij}.
        let x0 = insert_coordinate(0.0, y, j);
        let mut h = vec![0.0; d];
        path::log_ratios(&x0, &self.matrix, p, &mut h);
        let g_i: Vec<f64> = h.iter().map(|hi| p.s0 * hi.exp()).collect();
        let l: Vec<f64> = (0..d).map(|i| sig * self.matrix.entry(i, j)).collect();

        let phi_coeffs: Vec<(f64, f64)> = (0..d).map(|i| (g_i[i] / d as f64, l[i])).collect();
        let phi_constant = -p.strike;

        let mut terms = Vec::new();
        match self.example {
            Example::Payoff => {
                for i in 0..d {
                    terms.push(Term {
                        weight: disc * g_i[i] / d as f64,
                        offset: 1.0,
                        slope: 0.0,
                        rate: l[i],
                    });
                }
                terms.push(Term::constant(-disc * p.strike));
            }
            Example::Delta => {
                for i in 0..d {
                    terms.push(Term {
                        weight: disc * g_i[i] / (d as f64 * p.s0),
                        offset: 1.0,
                        slope: 0.0,
                        rate: l[i],
                    });
                }
            }
            Example::Gamma => {
                let scale = disc / (d as f64 * p.s0 * p.s0 * sig * sig * dt);
                for i in 0..d {
                    terms.push(Term {
                        weight: scale * g_i[i],
                        offset: h[0] - (p.rate + 0.5 * sig * sig) * dt,
                        slope: l[0],
                        rate: l[i],
                    });
                }
            }
            Example::Rho => {
                for i in 0..d {
                    let coeff = p.maturity * ((i + 1) as f64 / (d * d) as f64 - 1.0 / d as f64);
                    terms.push(Term {
                        weight: disc * coeff * g_i[i],
                        offset: 1.0,
                        slope: 0.0,
                        rate: l[i],
                    });
                }
                terms.push(Term::constant(disc * p.maturity * p.strike));
            }
            Example::Theta => {
                let w = p.drift();
                for i in 0..d {
                    terms.push(Term {
                        weight: disc * g_i[i] / d as f64,
                        offset: w * (i + 1) as f64 / (2.0 * d as f64) - p.rate
                            + h[i] / (2.0 * p.maturity),
                        slope: l[i] / (2.0 * p.maturity),
                        rate: l[i],
                    });
                }
                terms.push(Term::constant(disc * p.rate * p.strike));
            }
            Example::Vega => {
                for i in 0..d {
                    terms.push(Term {
                        weight: disc * g_i[i] / (d as f64 * sig),
                        offset: h[i] - (p.rate + 0.5 * sig * sig) * (i + 1) as f64 * dt,
                        slope: l[i],
                        rate: l[i],
                    });
                }
            }
            Example::Binary => {
                terms.push(Term::constant(disc));
            }
        }

        TermDecomposition {
            terms,
            phi_coeffs,
            phi_constant,
        }
    }
}
