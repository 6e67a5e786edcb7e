//! Weighted norms on the half-line and the explicit constants of the
//! embedding, interpolation and exponential-tail inequalities.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::grid::{self, GridFunction};

/// Selector for the weighted norms used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormKind {
    /// `int |f| (1 + x)^k`.
    L1k { k: f64 },
    /// `(int f^2 e^{mu x})^{1/2}`, `mu` in `[0, 1)`.
    L2Exp { mu: f64 },
    /// `(int H^2 e^{mu x})^{1/2}` with `H` the tail primitive, `mu` in `(0, 1)`.
    Hm1Exp { mu: f64 },
    /// `sup |H|` with `H` the tail primitive.
    Wm1Inf,
}

impl NormKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NormKind::L1k { k } if !(k >= 0.0 && k.is_finite()) => {
                Err(Error::Config(format!("L1k weight exponent must be >= 0, got {k}")))
            }
            NormKind::L2Exp { mu } if !(0.0..1.0).contains(&mu) => {
                Err(Error::Config(format!("L2Exp needs mu in [0, 1), got {mu}")))
            }
            NormKind::Hm1Exp { mu } if !(mu > 0.0 && mu < 1.0) => {
                Err(Error::Config(format!("Hm1Exp needs mu in (0, 1), got {mu}")))
            }
            _ => Ok(()),
        }
    }

    /// Column label used in CSV headers.
    pub fn label(&self) -> String {
        match self {
            NormKind::L1k { k } => format!("L1k_{k}"),
            NormKind::L2Exp { mu } => format!("L2exp_{mu}"),
            NormKind::Hm1Exp { mu } => format!("Hm1exp_{mu}"),
            NormKind::Wm1Inf => "Wm1inf".to_string(),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Norm of raw node values on `grid`; `kind` must already be validated.
pub(crate) fn norm_values(g: &grid::Grid, v: &[f64], kind: NormKind) -> f64 {
    let x = g.nodes();
    let w = g.weights();
    match kind {
        NormKind::L1k { k } => {
            (0..v.len()).map(|i| w[i] * v[i].abs() * (1.0 + x[i]).powf(k)).sum()
        }
        NormKind::L2Exp { mu } => {
            (0..v.len()).map(|i| w[i] * v[i] * v[i] * (mu * x[i]).exp()).sum::<f64>().sqrt()
        }
        NormKind::Hm1Exp { mu } => {
            let h = grid::tail_values(g, v);
            (0..v.len()).map(|i| w[i] * h[i] * h[i] * (mu * x[i]).exp()).sum::<f64>().sqrt()
        }
        NormKind::Wm1Inf => grid::tail_values(g, v).iter().fold(0.0, |m, h| m.max(h.abs())),
    }
}

/// Quadrature value of the selected norm.
pub fn norm(f: &GridFunction, kind: NormKind) -> Result<f64> {
    kind.validate()?;
    Ok(norm_values(f.grid(), f.values(), kind))
}

/// `int (D^{-1} g)(D^{-1} h) e^{mu x}`.
pub fn inner_hm1(g: &GridFunction, h: &GridFunction, mu: f64) -> Result<f64> {
    NormKind::Hm1Exp { mu }.validate()?;
    grid::check_same(g, h)?;
    let gr = g.grid();
    let (hg, hh) = (grid::tail_values(gr, g.values()), grid::tail_values(gr, h.values()));
    Ok(gr
        .nodes()
        .iter()
        .zip(gr.weights())
        .enumerate()
        .map(|(i, (&x, &w))| w * hg[i] * hh[i] * (mu * x).exp())
        .sum())
}

/// `int_a^inf t^{s-1} e^{-t} dt` for `s > 0`, `a >= 0`.
pub fn upper_incomplete_gamma(s: f64, a: f64) -> f64 {
    if a <= 0.0 {
        gamma(s)
    } else {
        gamma(s) * gamma_ur(s, a)
    }
}

/// `int_0^inf e^{-mu x} (1 + x)^n dx = e^mu mu^{-(n+1)} Gamma(n + 1, mu)`.
fn laplace_shifted_power(mu: f64, n: f64) -> f64 {
    mu.exp() * mu.powf(-(n + 1.0)) * upper_incomplete_gamma(n + 1.0, mu)
}

/// Constant `C(mu, k) = (int e^{-mu x} (1 + x)^{2k})^{1/2}` of the embedding
/// `||f||_{L1k} <= C ||f||_{L2(e^{mu x})}` (Cauchy-Schwarz).
pub fn embedding_constant_l2_to_l1k(mu: f64, k: f64) -> Result<f64> {
    if !(mu > 0.0) || !(k >= 0.0) {
        return Err(Error::Domain(format!("need mu > 0 and k >= 0, got mu={mu}, k={k}")));
    }
    Ok(laplace_shifted_power(mu, 2.0 * k).sqrt())
}

/// Both sides of `||f||_{L1k} <= C ||f||_{L2}^alpha ||f||_{L1_{k*}}^{1-alpha}`
/// with `C = (alpha / (2((1-alpha)k* - k) - alpha))^{alpha/2}`.
pub fn interpolation_bound(f: &GridFunction, k: f64, kstar: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(kstar > k) || !(k >= 0.0) {
        return Err(Error::Domain(format!("need k* > k >= 0, got k={k}, k*={kstar}")));
    }
    let upper = (2.0 * (kstar - k) / (1.0 + 2.0 * kstar)).min(1.0);
    if !(alpha > 0.0 && alpha < upper) {
        return Err(Error::Domain(format!("alpha must lie in (0, {upper}), got {alpha}")));
    }
    let c = (alpha / (2.0 * ((1.0 - alpha) * kstar - k) - alpha)).powf(0.5 * alpha);
    let g = f.grid();
    let lhs = norm_values(g, f.values(), NormKind::L1k { k });
    let l2 = norm_values(g, f.values(), NormKind::L2Exp { mu: 0.0 });
    let l1s = norm_values(g, f.values(), NormKind::L1k { k: kstar });
    let rhs = if lhs == 0.0 { 0.0 } else { c * l2.powf(alpha) * l1s.powf(1.0 - alpha) };
    Ok((lhs, rhs))
}

/// `int_y^inf e^{-x} (1 + x)^k dx = e Gamma(k + 1, 1 + y)`.
pub fn exp_weight_tail(y: f64, k: f64) -> f64 {
    std::f64::consts::E * upper_incomplete_gamma(k + 1.0, 1.0 + y)
}

/// `tail(y) / (e^{-y} (1 + y)^k)`; decreases to 1 as `y` grows.
pub fn exp_tail_ratio(y: f64, k: f64) -> f64 {
    let s = 1.0 + y;
    // e^{1+y} Gamma(k+1, 1+y) / (1+y)^k, assembled in log space.
    let log_reg = gamma_ur(k + 1.0, s).ln();
    (s + statrs::function::gamma::ln_gamma(k + 1.0) + log_reg - k * s.ln()).exp()
}

/// Upper end of every threshold scan in this module.
pub const TAIL_SCAN_LIMIT: f64 = 200.0;

/// Smallest `y >= 0` such that `tail(y') <= beta e^{-y'} (1 + y')^k` for all
/// `y' >= y`, found by bisection on the monotone ratio. `None` if the scan
/// limit is reached first.
pub fn tail_ratio_threshold(beta: f64, k: f64) -> Option<f64> {
    if exp_tail_ratio(0.0, k) <= beta {
        return Some(0.0);
    }
    if exp_tail_ratio(TAIL_SCAN_LIMIT, k) > beta {
        return None;
    }
    let (mut lo, mut hi) = (0.0, TAIL_SCAN_LIMIT);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if exp_tail_ratio(mid, k) <= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Result of [`exp_tail_bound`].
#[derive(Debug, Clone, Copy)]
pub struct TailBound {
    pub tail: f64,
    pub bound: f64,
    /// `C_k = max{2, J_k e^{R_2}}` with `J_k = int_0^inf (1 + x)^k e^{-x} dx`.
    pub c_k: f64,
    pub r2: f64,
}

/// `int_y^inf e^{-x}(1+x)^k dx` together with the bound `C_k e^{-y}(1+y)^k`.
///
/// For `y <= R_2` the tail is bounded by its value at zero,
/// `J_k = e Gamma(k + 1, 1)`, which is at most `e Gamma(k + 1)`.
pub fn exp_tail_bound(y: f64, k: f64) -> Result<TailBound> {
    if !(y >= 0.0) || !(k >= 0.0) {
        return Err(Error::Domain(format!("need y >= 0 and k >= 0, got y={y}, k={k}")));
    }
    let r2 = tail_ratio_threshold(2.0, k).ok_or_else(|| {
        Error::Domain(format!("tail ratio above 2 up to the scan limit {TAIL_SCAN_LIMIT}"))
    })?;
    let c_k = (shifted_gamma_moment(k) * r2.exp()).max(2.0);
    let tail = exp_weight_tail(y, k);
    let bound = c_k * (-y).exp() * (1.0 + y).powf(k);
    Ok(TailBound { tail, bound, c_k, r2 })
}

/// `int_0^inf (1 + x)^k e^{-x} dx = e Gamma(k + 1, 1)`.
pub fn shifted_gamma_moment(k: f64) -> f64 {
    exp_weight_tail(0.0, k)
}
