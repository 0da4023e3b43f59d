//! Maps between the parameter domain and the torus `[0, 1)`.
//!
//! `forward` takes a torus point to the parameter domain (used when sampling),
//! `inverse` takes a parameter back to the torus (used when evaluating an
//! approximant).

use std::f64::consts::SQRT_2;

use crate::error::{invalid, Error, Result};
use crate::special::{erf, erfc, erfinv, normal_quantile, normal_quantile_upper};

/// Magnitude at which lognormal parameters are clamped when sampling.
pub const LOGNORMAL_CLAMP: f64 = 8.3;

/// Default size `M₀` fixing the global lognormal shift `Δ = 1/(4M₀)`.
pub const DEFAULT_SHIFT_LATTICE_SIZE: u64 = 4099;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Periodization {
    /// Periodic in the parameter already; `D_y = [-1/2, 1/2)^d` seen through `y = ỹ`
    /// (only differences mod 1 matter).
    None,
    Tent { alpha: f64, beta: f64 },
    Lognormal { delta: f64 },
}

impl Periodization {
    pub fn tent(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha < beta) || !alpha.is_finite() || !beta.is_finite() {
            return invalid(format!("tent interval needs alpha < beta, got [{alpha}, {beta}]"));
        }
        Ok(Periodization::Tent { alpha, beta })
    }

    pub fn lognormal(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.5) {
            return invalid(format!("lognormal shift must lie in (0, 1/2), got {delta}"));
        }
        Ok(Periodization::Lognormal { delta })
    }

    /// Torus coordinate to parameter value.
    pub fn forward(&self, yt: f64) -> Result<f64> {
        match *self {
            Periodization::None => Ok(yt),
            Periodization::Tent { alpha, beta } => Ok(tent_forward(yt, alpha, beta)),
            Periodization::Lognormal { delta } => lognormal_forward(yt, delta),
        }
    }

    /// Parameter value to torus coordinate.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        match *self {
            Periodization::None => Ok(y),
            Periodization::Tent { alpha, beta } => tent_inverse(y, alpha, beta),
            Periodization::Lognormal { delta } => Ok(lognormal_inverse(y, delta)),
        }
    }

    pub fn forward_point(&self, yt: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, &v) in out.iter_mut().zip(yt) {
            *o = self.forward(v)?;
        }
        Ok(())
    }

    pub fn inverse_point(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        for (o, &v) in out.iter_mut().zip(y) {
            *o = self.inverse(v)?;
        }
        Ok(())
    }

    /// Model name used in archives: `periodic`, `affine` or `lognormal`.
    pub fn model_name(&self) -> &'static str {
        match self {
            Periodization::None => "periodic",
            Periodization::Tent { .. } => "affine",
            Periodization::Lognormal { .. } => "lognormal",
        }
    }
}

/// `y = β − |(β − α)(1 − 2ỹ)|` with `ỹ` taken mod 1.
pub fn tent_forward(yt: f64, alpha: f64, beta: f64) -> f64 {
    let yt = yt.rem_euclid(1.0);
    beta - ((beta - alpha) * (1.0 - 2.0 * yt)).abs()
}

/// Branch onto `[0, 1/2]`: `ỹ = (y − α) / (2(β − α))`.
pub fn tent_inverse(y: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha..=beta).contains(&y) {
        return Err(Error::InvalidArgument(format!(
            "parameter {y} outside the tent interval [{alpha}, {beta}]"
        )));
    }
    Ok((y - alpha) / (2.0 * (beta - alpha)))
}

/// `τ₁(b) = √2 erf⁻¹(2b)` on `(−1/2, 1/2)`.
pub fn tau1(b: f64) -> Result<f64> {
    if !(b.abs() < 0.5) {
        return Err(Error::Domain(format!("tau1 argument {b} outside (-1/2, 1/2)")));
    }
    Ok(SQRT_2 * erfinv(2.0 * b))
}

/// `τ₁⁻¹(y) = erf(y/√2) / 2`.
pub fn tau1_inverse(y: f64) -> f64 {
    0.5 * erf(y / SQRT_2)
}

/// Three-branch shifted tent onto `[−1/2, 1/2]`, kinks at `Δ` and `Δ + 1/2`.
pub fn shifted_tent(yt: f64, delta: f64) -> f64 {
    let yt = yt.rem_euclid(1.0);
    let s = yt - delta;
    if yt < delta {
        -0.5 - 2.0 * s
    } else if yt < 0.5 + delta {
        -0.5 + 2.0 * s
    } else {
        1.5 - 2.0 * s
    }
}

/// Branch onto `[Δ, Δ + 1/2]`: `b/2 + Δ + 1/4`.
pub fn shifted_tent_inverse(b: f64, delta: f64) -> f64 {
    0.5 * b + delta + 0.25
}

/// `φ_Δ = τ₁ ∘ τ₂,Δ`. The lower and upper tail masses are formed directly from
/// the distance to the respective pole so that no precision is lost near them.
pub fn lognormal_forward(yt: f64, delta: f64) -> Result<f64> {
    let yt = yt.rem_euclid(1.0);
    let pole = |at: f64| {
        Err(Error::Domain(format!(
            "torus point {yt} is a pole of the lognormal periodization (pole at {at})"
        )))
    };
    // (lower mass τ₂ + 1/2, upper mass 1/2 − τ₂)
    let (lower, upper) = if yt < delta {
        (2.0 * (delta - yt), 1.0 - 2.0 * (delta - yt))
    } else if yt < 0.5 + delta {
        (2.0 * (yt - delta), 2.0 * (0.5 + delta - yt))
    } else {
        (2.0 * (1.0 + delta - yt), 2.0 * (yt - delta - 0.5))
    };
    if lower <= 0.0 {
        return pole(delta);
    }
    if upper <= 0.0 {
        return pole(delta + 0.5);
    }
    Ok(if lower < upper {
        normal_quantile(lower)
    } else {
        normal_quantile_upper(upper)
    })
}

/// `φ_Δ⁻¹(y) = τ₂,Δ⁻¹(τ₁⁻¹(y)) ∈ (Δ, Δ + 1/2)`, written with `erfc` so the
/// offset from the nearer pole keeps full relative precision.
pub fn lognormal_inverse(y: f64, delta: f64) -> f64 {
    if y < 0.0 {
        delta + 0.25 * erfc(-y / SQRT_2)
    } else {
        delta + 0.5 - 0.25 * erfc(y / SQRT_2)
    }
}
