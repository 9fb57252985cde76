//! Closed-form pathloss models. All outputs are in dB.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Speed of light in vacuum, m/s (exact SI value).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Alpha-beta-gamma model inputs. Frequency in GHz, distance in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbgParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub f_ghz: f64,
    pub d_m: f64,
    pub chi: f64,
}

/// Close-in model inputs. Frequency in Hz, distance in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiParams {
    pub f_hz: f64,
    pub n: f64,
    pub d_m: f64,
    pub chi: f64,
}

/// Indoor inputs shared by the empirical indoor model and the multiwall-and-floor baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndoorParams {
    pub d_m: f64,
    pub n_walls: f64,
    pub n_floors: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutdoorParams {
    pub d_m: f64,
    pub h_ed_m: f64,
    pub x_sigma: f64,
}

/// Fitted constants of the LoRaWAN measurement models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalConstants {
    /// Pathloss exponent.
    pub n: f64,
    /// Reference pathloss, dB.
    pub pl0: f64,
    /// Floor fitting parameter.
    pub b: f64,
    /// Per-floor attenuation, dB.
    pub l_f: f64,
    /// Per-wall attenuation, dB.
    pub l_w: f64,
    /// Antenna-height loss factor.
    pub l_h: f64,
    /// Shadow-fading standard deviation, dB.
    pub sigma: f64,
}

impl EmpiricalConstants {
    pub const fn indoor() -> Self {
        EmpiricalConstants { n: 2.85, pl0: 120.4, b: 0.47, l_f: 10.0, l_w: 1.41, l_h: 0.0, sigma: 0.0 }
    }

    pub const fn outdoor() -> Self {
        EmpiricalConstants { n: 3.119, pl0: 140.7, b: 0.0, l_f: 0.0, l_w: 0.0, l_h: -4.7, sigma: 9.7 }
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn require_at_least(name: &str, v: f64, lo: f64) -> Result<()> {
    if v.is_finite() && v >= lo {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be >= {lo}, got {v}")))
    }
}

/// Free-space pathloss at the 1 m reference distance.
pub fn fspl_1m(f_hz: f64) -> Result<f64> {
    require_positive("frequency", f_hz)?;
    Ok(20.0 * (4.0 * std::f64::consts::PI * f_hz / SPEED_OF_LIGHT).log10())
}

pub fn eval_abg(p: &AbgParams) -> Result<f64> {
    require_positive("distance", p.d_m)?;
    require_positive("frequency", p.f_ghz)?;
    Ok(10.0 * p.alpha * p.d_m.log10() + p.beta + 10.0 * p.gamma * p.f_ghz.log10() + p.chi)
}

pub fn eval_ci(p: &CiParams) -> Result<f64> {
    require_positive("distance", p.d_m)?;
    Ok(fspl_1m(p.f_hz)? + 10.0 * p.n * p.d_m.log10() + p.chi)
}

pub fn eval_indoor_empirical(p: &IndoorParams) -> Result<f64> {
    eval_indoor_empirical_with(p, &EmpiricalConstants::indoor())
}

pub fn eval_indoor_empirical_with(p: &IndoorParams, k: &EmpiricalConstants) -> Result<f64> {
    require_positive("distance", p.d_m)?;
    require_at_least("walls", p.n_walls, 0.0)?;
    // the floor exponent divides by n_f + 1; measured floors start at 1
    require_at_least("floors", p.n_floors, 1.0)?;
    let nf = p.n_floors;
    let floor_exp = (nf + 2.0) / (nf + 1.0) - k.b;
    Ok(10.0 * k.n * p.d_m.log10() + k.pl0 + p.n_walls * k.l_w + nf.powf(floor_exp) * k.l_f)
}

pub fn eval_outdoor_empirical(p: &OutdoorParams) -> Result<f64> {
    eval_outdoor_empirical_with(p, &EmpiricalConstants::outdoor())
}

pub fn eval_outdoor_empirical_with(p: &OutdoorParams, k: &EmpiricalConstants) -> Result<f64> {
    require_positive("distance", p.d_m)?;
    require_positive("antenna height", p.h_ed_m)?;
    Ok(10.0 * k.n * p.d_m.log10() + k.pl0 + k.l_h * p.h_ed_m.log10() + p.x_sigma)
}

/// Multiwall-and-floor baseline. Linear in the floor count, so zero floors is allowed.
pub fn eval_mwf(p: &IndoorParams) -> Result<f64> {
    eval_mwf_with(p, &EmpiricalConstants::indoor())
}

pub fn eval_mwf_with(p: &IndoorParams, k: &EmpiricalConstants) -> Result<f64> {
    require_positive("distance", p.d_m)?;
    require_at_least("walls", p.n_walls, 0.0)?;
    require_at_least("floors", p.n_floors, 0.0)?;
    let waf = p.n_walls * k.l_w;
    let faf = p.n_floors * k.l_f;
    Ok(10.0 * k.n * p.d_m.log10() + k.pl0 + waf + faf)
}

/// Free-space baseline with frequency in MHz and distance in km.
pub fn eval_fs(f_mhz: f64, d_km: f64) -> Result<f64> {
    require_positive("frequency", f_mhz)?;
    require_positive("distance", d_km)?;
    Ok(20.0 * f_mhz.log10() + 20.0 * d_km.log10() + 32.44)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn fspl_reference_points() {
        assert_eq!(fspl_1m(SPEED_OF_LIGHT / (4.0 * PI)).unwrap(), 0.0);
        assert_relative_eq!(fspl_1m(10.0 * SPEED_OF_LIGHT / (4.0 * PI)).unwrap(), 20.0, epsilon = 1e-12);
        // 20*log10(4*pi*2.45e9/c), evaluated with mpmath at 30 digits
        assert_relative_eq!(fspl_1m(2.45e9).unwrap(), 40.231_104_909_174_02, epsilon = 1e-9);
        assert!(matches!(fspl_1m(0.0), Err(Error::Domain(_))));
        assert!(fspl_1m(-1.0).is_err());
    }

    #[test]
    fn abg_examples() {
        let mut p = AbgParams { alpha: 2.0, beta: 10.0, gamma: 2.0, f_ghz: 1.0, d_m: 1.0, chi: 0.0 };
        assert_eq!(eval_abg(&p).unwrap(), 10.0);
        p.f_ghz = 10.0;
        p.d_m = 100.0;
        assert_relative_eq!(eval_abg(&p).unwrap(), 70.0, epsilon = 1e-12);
        p.chi = 5.0;
        assert_relative_eq!(eval_abg(&p).unwrap(), 75.0, epsilon = 1e-12);
        p.d_m = 0.0;
        assert!(eval_abg(&p).is_err());
    }

    #[test]
    fn ci_examples() {
        let p = CiParams { f_hz: 2.45e9, n: 2.0, d_m: 1.0, chi: 0.0 };
        assert_eq!(eval_ci(&p).unwrap(), fspl_1m(2.45e9).unwrap());
        let p10 = CiParams { d_m: 10.0, ..p };
        assert_relative_eq!(eval_ci(&p10).unwrap(), 60.231_104_909_174_02, epsilon = 1e-9);
        assert!(eval_ci(&CiParams { f_hz: 0.0, ..p }).is_err());
        assert!(eval_ci(&CiParams { d_m: -3.0, ..p }).is_err());
    }

    #[test]
    fn indoor_examples() {
        let p = IndoorParams { d_m: 1.0, n_walls: 0.0, n_floors: 1.0 };
        assert_relative_eq!(eval_indoor_empirical(&p).unwrap(), 130.4, epsilon = 1e-12);
        let p = IndoorParams { d_m: 10.0, n_walls: 2.0, n_floors: 2.0 };
        // 28.5 + 120.4 + 2.82 + 10 * 2^(4/3 - 0.47)
        assert_relative_eq!(eval_indoor_empirical(&p).unwrap(), 169.912_367_879_965_63, epsilon = 1e-9);
        assert!(eval_indoor_empirical(&IndoorParams { n_floors: 0.0, ..p }).is_err());
    }

    #[test]
    fn outdoor_examples() {
        let p = OutdoorParams { d_m: 1.0, h_ed_m: 1.0, x_sigma: 0.0 };
        assert_eq!(eval_outdoor_empirical(&p).unwrap(), 140.7);
        let p = OutdoorParams { d_m: 100.0, h_ed_m: 2.0, x_sigma: 0.0 };
        assert_relative_eq!(eval_outdoor_empirical(&p).unwrap(), 201.665_159_020_379_3, epsilon = 1e-9);
        let shifted = OutdoorParams { x_sigma: 9.7, ..p };
        assert_relative_eq!(
            eval_outdoor_empirical(&shifted).unwrap() - eval_outdoor_empirical(&p).unwrap(),
            9.7,
            epsilon = 1e-12
        );
        assert!(eval_outdoor_empirical(&OutdoorParams { h_ed_m: 0.0, ..p }).is_err());
    }

    #[test]
    fn mwf_examples() {
        let p = IndoorParams { d_m: 1.0, n_walls: 0.0, n_floors: 0.0 };
        assert_relative_eq!(eval_mwf(&p).unwrap(), 120.4, epsilon = 1e-12);
        let p = IndoorParams { d_m: 10.0, n_walls: 2.0, n_floors: 2.0 };
        assert_relative_eq!(eval_mwf(&p).unwrap(), 171.72, epsilon = 1e-9);
        let k = EmpiricalConstants::indoor();
        let nf = p.n_floors;
        let expected = k.l_f * (nf - nf.powf((nf + 2.0) / (nf + 1.0) - k.b));
        let diff = eval_mwf(&p).unwrap() - eval_indoor_empirical(&p).unwrap();
        assert_relative_eq!(diff, expected, epsilon = 1e-10);
    }

    #[test]
    fn fs_examples() {
        assert_eq!(eval_fs(1.0, 1.0).unwrap(), 32.44);
        assert_relative_eq!(eval_fs(900.0, 1.0).unwrap(), 91.524_850_188_786_5, epsilon = 1e-9);
        let slope = eval_fs(868.3, 0.2).unwrap() - eval_fs(868.3, 0.1).unwrap();
        assert_relative_eq!(slope, 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert!(eval_fs(0.0, 1.0).is_err());
    }
}
