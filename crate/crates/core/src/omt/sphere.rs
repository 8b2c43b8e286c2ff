//! Maps from the unit cube onto the positive-orthant unit sphere `S⁺`.
//!
//! A uniform point in `[0, 1]^{d−1}` is sent to a uniform point on `S⁺` by
//! hyperspherical coordinates whose angles are drawn by inverse CDF: angle
//! `θ_k` (for `k < d − 1`) has density proportional to `sin^{d−1−k} θ` on
//! `[0, π/2]`, and the last angle is uniform.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// `(cos θ, sin θ)` with exact values at the endpoints `θ = 0` and `θ = π/2`.
#[derive(Debug, Clone, Copy)]
struct Angle {
    cos: f64,
    sin: f64,
}

impl Angle {
    const ZERO: Angle = Angle { cos: 1.0, sin: 0.0 };
    const RIGHT: Angle = Angle { cos: 0.0, sin: 1.0 };

    fn new(theta: f64) -> Self {
        if theta <= 0.0 {
            Angle::ZERO
        } else if theta >= FRAC_PI_2 {
            Angle::RIGHT
        } else {
            Angle {
                cos: theta.cos(),
                sin: theta.sin(),
            }
        }
    }

    /// `θ = πx/2`.
    fn quarter_turn(x: f64) -> Self {
        match x {
            x if x <= 0.0 => Angle::ZERO,
            x if x >= 1.0 => Angle::RIGHT,
            x => Angle::new(FRAC_PI_2 * x),
        }
    }
}

/// `∫_0^θ sin^m(u) du`.
fn sin_power_integral(m: u32, theta: f64) -> f64 {
    match m {
        0 => theta,
        1 => 1.0 - theta.cos(),
        m => {
            let mf = f64::from(m);
            -theta.sin().powi(m as i32 - 1) * theta.cos() / mf
                + (mf - 1.0) / mf * sin_power_integral(m - 2, theta)
        }
    }
}

/// Angle with `P(Θ ≤ θ) = x` for density `∝ sin^m` on `[0, π/2]`, by bisection.
fn inverse_sin_power_cdf(m: u32, x: f64) -> Angle {
    if x <= 0.0 {
        return Angle::ZERO;
    }
    if x >= 1.0 {
        return Angle::RIGHT;
    }
    let total = sin_power_integral(m, FRAC_PI_2);
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if sin_power_integral(m, mid) / total < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Angle::new(0.5 * (lo + hi))
}

fn check_input(x: &[f64], d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::config(format!(
            "direction dimension must be ≥ 2, got {d}"
        )));
    }
    if x.len() != d - 1 {
        return Err(Error::validation(format!(
            "sphere map in dimension {d} needs {} coordinates, got {}",
            d - 1,
            x.len()
        )));
    }
    if let Some(k) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Domain {
            index: k,
            message: format!("coordinate {} outside [0, 1]", x[k]),
        });
    }
    Ok(())
}

/// Hyperspherical coordinates from angles: `cos θ_1, sin θ_1 cos θ_2, …`.
fn from_angles(angles: &[Angle]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len() + 1);
    let mut carry = 1.0;
    for a in angles {
        out.push(carry * a.cos);
        carry *= a.sin;
    }
    out.push(carry);
    out
}

/// Sphere map through the general inverse-CDF construction, any `d ≥ 2`.
pub fn tau_map_general(x: &[f64], d: usize) -> Result<Vec<f64>> {
    check_input(x, d)?;
    let mut angles: Vec<Angle> = x[..d - 2]
        .iter()
        .enumerate()
        .map(|(i, &xi)| inverse_sin_power_cdf((d - 2 - i) as u32, xi))
        .collect();
    angles.push(Angle::quarter_turn(x[d - 2]));
    Ok(from_angles(&angles))
}

/// Maps `x ∈ [0, 1]^{d−1}` to a unit vector with nonnegative coordinates.
///
/// For `d = 3` this is `(1 − x₁, √(2x₁ − x₁²) cos(πx₂/2), √(2x₁ − x₁²) sin(πx₂/2))`;
/// `d = 2` gives `(cos(πx/2), sin(πx/2))`; larger `d` use [`tau_map_general`].
pub fn tau_map(x: &[f64], d: usize) -> Result<Vec<f64>> {
    check_input(x, d)?;
    match d {
        2 => {
            let a = Angle::quarter_turn(x[0]);
            Ok(vec![a.cos, a.sin])
        }
        3 => {
            let (x1, x2) = (x[0], x[1]);
            let r = (2.0 * x1 - x1 * x1).sqrt();
            let a = Angle::quarter_turn(x2);
            Ok(vec![1.0 - x1, r * a.cos, r * a.sin])
        }
        _ => tau_map_general(x, d),
    }
}
