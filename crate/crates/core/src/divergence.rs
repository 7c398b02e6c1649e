//! Closed-form f-divergence machinery.
//!
//! Each [`DivergenceKind`] carries an optimal variational function `g*`, a
//! convex conjugate `f*` on its domain, and the primal generator `f` with
//! `f(1) = 0`:
//!
//! | kind | `g*(v)` | `dom f*` | `f*(u)` | `f(t)` |
//! |------|---------|----------|---------|--------|
//! | TV   | `tanh(v)/2` | `[-1/2, 1/2]` | `u` | `abs(t-1)/2` |
//! | JS   | `log(2/(1+e^-v))` | `u < log 2` | `-log(2-e^u)` | `-(t+1)log((1+t)/2) + t log t` |
//! | Pearson | `v` | all reals | `u²/4 + u` | `(t-1)²` |
//! | KL   | `v` | all reals | `e^(u-1)` | `t log t` |
//!
//! The per-sample unlearning loss built from these is
//! `λ_f·f*(g*(p_f)) − λ_e·g*(p_e)`, where `p_e` and `p_f` are the average
//! correct-token probabilities of the template and forget responses.
//! All math here is `f64`, whatever precision the model runs at.

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceKind {
    TotalVariation,
    JensenShannon,
    Pearson,
    KullbackLeibler,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 4] = [
        DivergenceKind::TotalVariation,
        DivergenceKind::JensenShannon,
        DivergenceKind::Pearson,
        DivergenceKind::KullbackLeibler,
    ];

    /// Short label used in reports and on the command line.
    pub fn label(self) -> &'static str {
        match self {
            DivergenceKind::TotalVariation => "tv",
            DivergenceKind::JensenShannon => "js",
            DivergenceKind::Pearson => "pearson",
            DivergenceKind::KullbackLeibler => "kl",
        }
    }

    /// Closed interval bounds of `dom f*`; `upper_open` marks a strict bound.
    pub fn conjugate_domain(self) -> ConjugateDomain {
        match self {
            DivergenceKind::TotalVariation => ConjugateDomain {
                lower: -0.5,
                upper: 0.5,
                upper_open: false,
            },
            DivergenceKind::JensenShannon => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: LN_2,
                upper_open: true,
            },
            DivergenceKind::Pearson | DivergenceKind::KullbackLeibler => ConjugateDomain {
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                upper_open: true,
            },
        }
    }
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" | "total_variation" | "totalvariation" => Ok(DivergenceKind::TotalVariation),
            "js" | "jensen_shannon" | "jensenshannon" => Ok(DivergenceKind::JensenShannon),
            "pearson" => Ok(DivergenceKind::Pearson),
            "kl" | "kullback_leibler" | "kullbackleibler" => Ok(DivergenceKind::KullbackLeibler),
            other => Err(Error::Config(format!("unknown divergence kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugateDomain {
    pub lower: f64,
    pub upper: f64,
    pub upper_open: bool,
}

impl ConjugateDomain {
    pub fn contains(&self, u: f64) -> bool {
        let below = if self.upper_open {
            u < self.upper
        } else {
            u <= self.upper
        };
        u >= self.lower && below
    }
}

/// Loss value of the per-sample adjustment plus its partials in `p_e` and `p_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdjustmentValue {
    pub loss: f64,
    pub d_loss_d_pe: f64,
    pub d_loss_d_pf: f64,
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic sigmoid, stable for large `|x|`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn finite(op: &'static str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(op, format!("non-finite input {x}")))
    }
}

/// Optimal variational function `g*(v)`.
pub fn g_star(kind: DivergenceKind, v: f64) -> Result<f64> {
    finite("g_star", v)?;
    Ok(match kind {
        DivergenceKind::TotalVariation => 0.5 * v.tanh(),
        // log(2 / (1 + e^-v)) = log 2 - softplus(-v)
        DivergenceKind::JensenShannon => LN_2 - softplus(-v),
        DivergenceKind::Pearson | DivergenceKind::KullbackLeibler => v,
    })
}

/// `d g*(v) / dv`.
pub fn g_star_derivative(kind: DivergenceKind, v: f64) -> Result<f64> {
    finite("g_star_derivative", v)?;
    Ok(match kind {
        DivergenceKind::TotalVariation => {
            let t = v.tanh();
            0.5 * (1.0 - t * t)
        }
        DivergenceKind::JensenShannon => sigmoid(-v),
        DivergenceKind::Pearson | DivergenceKind::KullbackLeibler => 1.0,
    })
}

fn check_conjugate_domain(op: &'static str, kind: DivergenceKind, u: f64) -> Result<()> {
    finite(op, u)?;
    let dom = kind.conjugate_domain();
    if dom.contains(u) {
        return Ok(());
    }
    let bound = if u < dom.lower {
        format!("u >= {}", dom.lower)
    } else if dom.upper_open {
        format!("u < {}", dom.upper)
    } else {
        format!("u <= {}", dom.upper)
    };
    Err(Error::domain(
        op,
        format!("{kind}: u = {u} violates {bound}"),
    ))
}

/// Convex conjugate `f*(u)` on `dom f*`.
pub fn f_star(kind: DivergenceKind, u: f64) -> Result<f64> {
    check_conjugate_domain("f_star", kind, u)?;
    Ok(match kind {
        DivergenceKind::TotalVariation => u,
        DivergenceKind::JensenShannon => -(2.0 - u.exp()).ln(),
        DivergenceKind::Pearson => 0.25 * u * u + u,
        DivergenceKind::KullbackLeibler => (u - 1.0).exp(),
    })
}

/// `d f*(u) / du`.
pub fn f_star_derivative(kind: DivergenceKind, u: f64) -> Result<f64> {
    check_conjugate_domain("f_star_derivative", kind, u)?;
    Ok(match kind {
        DivergenceKind::TotalVariation => 1.0,
        DivergenceKind::JensenShannon => {
            let e = u.exp();
            e / (2.0 - e)
        }
        DivergenceKind::Pearson => 0.5 * u + 1.0,
        DivergenceKind::KullbackLeibler => (u - 1.0).exp(),
    })
}

/// `f*(g*(p))` and its derivative in `p`, evaluated without the round trip
/// through `g*` where that would lose precision.
fn composed_forget_term(kind: DivergenceKind, p: f64) -> Result<(f64, f64)> {
    Ok(match kind {
        // f*(g*(p)) = -log(2 - 2σ(p)) = softplus(p) - log 2
        DivergenceKind::JensenShannon => (softplus(p) - LN_2, sigmoid(p)),
        _ => {
            let g = g_star(kind, p)?;
            let value = f_star(kind, g)?;
            let slope = f_star_derivative(kind, g)? * g_star_derivative(kind, p)?;
            (value, slope)
        }
    })
}

fn check_probability(op: &'static str, name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(op, format!("{name} = {p} is outside [0, 1]")))
    }
}

/// Per-sample adjustment `f*(g*(p_f)) − g*(p_e)` with unit weights.
pub fn flat_adjustment(kind: DivergenceKind, p_e: f64, p_f: f64) -> Result<AdjustmentValue> {
    flat_adjustment_weighted(kind, p_e, p_f, 1.0, 1.0)
}

/// `λ_f·f*(g*(p_f)) − λ_e·g*(p_e)` with analytic partials.
pub fn flat_adjustment_weighted(
    kind: DivergenceKind,
    p_e: f64,
    p_f: f64,
    lambda_e: f64,
    lambda_f: f64,
) -> Result<AdjustmentValue> {
    check_probability("flat_adjustment", "p_e", p_e)?;
    check_probability("flat_adjustment", "p_f", p_f)?;
    let (forget_value, forget_slope) = composed_forget_term(kind, p_f)?;
    let template_value = g_star(kind, p_e)?;
    let template_slope = g_star_derivative(kind, p_e)?;
    Ok(AdjustmentValue {
        loss: lambda_f * forget_value - lambda_e * template_value,
        d_loss_d_pe: -lambda_e * template_slope,
        d_loss_d_pf: lambda_f * forget_slope,
    })
}

/// Primal generator `f(t)` for `t > 0`. Used as an oracle for conjugacy and
/// for closed-form divergences between simple distributions.
pub fn primal_f(kind: DivergenceKind, t: f64) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(
            "primal_f",
            format!("t = {t} must be positive and finite"),
        ));
    }
    Ok(match kind {
        DivergenceKind::TotalVariation => 0.5 * (t - 1.0).abs(),
        DivergenceKind::JensenShannon => -(t + 1.0) * ((1.0 + t) / 2.0).ln() + t * t.ln(),
        DivergenceKind::Pearson => (t - 1.0) * (t - 1.0),
        DivergenceKind::KullbackLeibler => t * t.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn g_star_examples() {
        assert_eq!(g_star(DivergenceKind::Pearson, 0.7).unwrap(), 0.7);
        assert_abs_diff_eq!(g_star(DivergenceKind::JensenShannon, 0.0).unwrap(), 0.0);
        assert_eq!(g_star(DivergenceKind::TotalVariation, 0.0).unwrap(), 0.0);
        assert!(g_star(DivergenceKind::KullbackLeibler, f64::NAN).is_err());
        assert!(g_star(DivergenceKind::JensenShannon, f64::INFINITY).is_err());
    }

    #[test]
    fn g_star_js_is_stable_for_large_arguments() {
        let lo = g_star(DivergenceKind::JensenShannon, -1000.0).unwrap();
        let hi = g_star(DivergenceKind::JensenShannon, 1000.0).unwrap();
        assert_abs_diff_eq!(lo, LN_2 - 1000.0, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, LN_2, epsilon = 1e-12);
    }

    #[test]
    fn f_star_examples() {
        assert_eq!(f_star(DivergenceKind::KullbackLeibler, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(f_star(DivergenceKind::JensenShannon, 0.0).unwrap(), 0.0);
        assert_eq!(f_star(DivergenceKind::TotalVariation, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn f_star_rejects_points_outside_domain() {
        let err = f_star(DivergenceKind::TotalVariation, 0.6).unwrap_err();
        assert!(err.to_string().contains("u <= 0.5"), "{err}");
        let err = f_star(DivergenceKind::TotalVariation, -0.6).unwrap_err();
        assert!(err.to_string().contains("u >= -0.5"), "{err}");
        let err = f_star(DivergenceKind::JensenShannon, LN_2).unwrap_err();
        assert!(err.to_string().contains("u < "), "{err}");
        assert!(f_star(DivergenceKind::Pearson, -1e6).is_ok());
    }

    #[test]
    fn flat_adjustment_examples() {
        let tv = flat_adjustment(DivergenceKind::TotalVariation, 0.9, 0.9).unwrap();
        assert_eq!(tv.loss, 0.0);
        let pearson = flat_adjustment(DivergenceKind::Pearson, 0.0, 0.0).unwrap();
        assert_eq!(pearson.loss, 0.0);
        let kl = flat_adjustment(DivergenceKind::KullbackLeibler, 1.0, 0.0).unwrap();
        // e^-1 - 1, evaluated independently
        assert_abs_diff_eq!(kl.loss, -0.632_120_558_828_557_7, epsilon = 1e-15);
        let js = flat_adjustment(DivergenceKind::JensenShannon, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(js.loss, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn flat_adjustment_rejects_non_probabilities() {
        assert!(flat_adjustment(DivergenceKind::KullbackLeibler, 1.2, 0.1).is_err());
        assert!(flat_adjustment(DivergenceKind::KullbackLeibler, 0.2, -0.1).is_err());
        assert!(flat_adjustment(DivergenceKind::KullbackLeibler, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn primal_f_vanishes_at_one() {
        for kind in DivergenceKind::ALL {
            assert_abs_diff_eq!(primal_f(kind, 1.0).unwrap(), 0.0, epsilon = 1e-15);
        }
        assert!(primal_f(DivergenceKind::KullbackLeibler, 0.0).is_err());
        assert!(primal_f(DivergenceKind::Pearson, -1.0).is_err());
    }

    #[test]
    fn weights_scale_each_side() {
        let base = flat_adjustment(DivergenceKind::Pearson, 0.3, 0.6).unwrap();
        let w = flat_adjustment_weighted(DivergenceKind::Pearson, 0.3, 0.6, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(w.loss, 0.5 * (0.09 + 0.6) - 2.0 * 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(w.d_loss_d_pe, 2.0 * base.d_loss_d_pe, epsilon = 1e-15);
        assert_abs_diff_eq!(w.d_loss_d_pf, 0.5 * base.d_loss_d_pf, epsilon = 1e-15);
    }

    #[test]
    fn kind_parses_from_labels() {
        for kind in DivergenceKind::ALL {
            assert_eq!(kind.label().parse::<DivergenceKind>().unwrap(), kind);
        }
        assert!("hellinger".parse::<DivergenceKind>().is_err());
    }

    proptest! {
        #[test]
        fn g_star_lands_in_conjugate_domain(v in -1e3f64..1e3) {
            for kind in DivergenceKind::ALL {
                // log 2 − softplus(−v) rounds onto the open bound past v ≈ 36
                if kind == DivergenceKind::JensenShannon && v > 30.0 {
                    continue;
                }
                let g = g_star(kind, v).unwrap();
                prop_assert!(kind.conjugate_domain().contains(g), "{kind} g*({v}) = {g}");
                let value = f_star(kind, g).unwrap();
                // e^(u-1) overflows f64 past u ≈ 710
                if kind != DivergenceKind::KullbackLeibler || v < 700.0 {
                    prop_assert!(value.is_finite());
                }
            }
        }

        #[test]
        fn loss_is_monotone_in_each_probability(
            pe in 0.01f64..0.98, pf in 0.01f64..0.98, step in 1e-4f64..0.01
        ) {
            for kind in DivergenceKind::ALL {
                let base = flat_adjustment(kind, pe, pf).unwrap().loss;
                let up_e = flat_adjustment(kind, pe + step, pf).unwrap().loss;
                let up_f = flat_adjustment(kind, pe, pf + step).unwrap().loss;
                prop_assert!(up_e < base, "{kind}: not decreasing in p_e");
                prop_assert!(up_f > base, "{kind}: not increasing in p_f");
            }
        }
    }
}
