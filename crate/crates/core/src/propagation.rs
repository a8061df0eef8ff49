//! Deterministic path loss, link budgets and Rician block fading.
//!
//! Path loss follows the usual two-regime convention: free space (with an
//! optional generalized exponent) up to the cross distance
//! `4π·h_t·h_r/λ`, and the far-field two-ray ground model beyond it.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::db_to_linear;

pub const SPEED_OF_LIGHT_M_S: f64 = 299_792_458.0;

/// FSPL constant for distances in km and frequencies in MHz.
pub const FSPL_KM_MHZ_DB: f64 = 32.44;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioEnvironment {
    pub frequency_mhz: f64,
    pub pathloss_exponent: f64,
    pub tx_antenna_height_m: f64,
    pub rx_antenna_height_m: f64,
    /// Linear LOS-to-scatter power ratio.
    pub rician_k: f64,
    pub fading_enabled: bool,
}

impl Default for RadioEnvironment {
    fn default() -> Self {
        Self {
            frequency_mhz: 5900.0,
            pathloss_exponent: 2.0,
            tx_antenna_height_m: 1.5,
            rx_antenna_height_m: 1.5,
            rician_k: 3.0,
            fading_enabled: true,
        }
    }
}

impl RadioEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_mhz > 0.0) {
            return Err(Error::config("frequency_mhz must be positive"));
        }
        if !(self.tx_antenna_height_m > 0.0 && self.rx_antenna_height_m > 0.0) {
            return Err(Error::config("antenna heights must be positive"));
        }
        if !(self.rician_k >= 0.0) {
            return Err(Error::config("rician_k must be non-negative"));
        }
        if !(self.pathloss_exponent > 0.0) {
            return Err(Error::config("pathloss_exponent must be positive"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT_M_S / (self.frequency_mhz * 1e6)
    }

    pub fn without_fading(mut self) -> Self {
        self.fading_enabled = false;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub distance_m: f64,
}

/// Free-space path loss, `20·log10(d_km) + 20·log10(f_MHz) + 32.44`.
pub fn fspl_db(distance_m: f64, frequency_mhz: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {distance_m}")));
    }
    if !(frequency_mhz > 0.0) {
        return Err(Error::domain(format!("frequency must be positive, got {frequency_mhz}")));
    }
    Ok(20.0 * (distance_m / 1000.0).log10() + 20.0 * frequency_mhz.log10() + FSPL_KM_MHZ_DB)
}

/// Free-space loss with the configured exponent; identical to [`fspl_db`]
/// when the exponent is 2.
fn free_space_regime_db(distance_m: f64, env: &RadioEnvironment) -> Result<f64> {
    if env.pathloss_exponent == 2.0 {
        return fspl_db(distance_m, env.frequency_mhz);
    }
    let base = fspl_db(distance_m, env.frequency_mhz)?;
    Ok(base + 10.0 * (env.pathloss_exponent - 2.0) * (distance_m / 1000.0).log10())
}

/// Distance beyond which the two-ray ground model applies.
pub fn cross_distance_m(env: &RadioEnvironment) -> Result<f64> {
    if !(env.tx_antenna_height_m > 0.0 && env.rx_antenna_height_m > 0.0) {
        return Err(Error::domain("antenna heights must be positive"));
    }
    if !(env.frequency_mhz > 0.0) {
        return Err(Error::domain("frequency must be positive"));
    }
    Ok(4.0 * std::f64::consts::PI * env.tx_antenna_height_m * env.rx_antenna_height_m
        / env.wavelength_m())
}

/// Far-field two-ray ground loss, `40·log10(d) − 20·log10(h_t·h_r)`.
///
/// Only valid at or beyond the cross distance.
pub fn two_ray_pathloss_db(distance_m: f64, env: &RadioEnvironment) -> Result<f64> {
    let dc = cross_distance_m(env)?;
    if distance_m < dc {
        return Err(Error::contract(format!(
            "two-ray model used at {distance_m} m, inside the cross distance {dc} m"
        )));
    }
    Ok(two_ray_unchecked(distance_m, env))
}

fn two_ray_unchecked(distance_m: f64, env: &RadioEnvironment) -> f64 {
    40.0 * distance_m.log10()
        - 20.0 * (env.tx_antenna_height_m * env.rx_antenna_height_m).log10()
}

/// Path loss with cross-distance switching between the two regimes.
pub fn pathloss_db(distance_m: f64, env: &RadioEnvironment) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::domain(format!("distance must be positive, got {distance_m}")));
    }
    if distance_m < cross_distance_m(env)? {
        free_space_regime_db(distance_m, env)
    } else {
        Ok(two_ray_unchecked(distance_m, env))
    }
}

/// Mean (non-faded) received power, `P_t + G_t + G_r − PL(d)`.
pub fn rx_power_dbm(budget: &LinkBudget, env: &RadioEnvironment) -> Result<f64> {
    let loss = pathloss_db(budget.distance_m, env)?;
    Ok(budget.tx_power_dbm + budget.tx_gain_dbi + budget.rx_gain_dbi - loss)
}

/// One Rician power-gain sample with unit mean.
///
/// Returns exactly 1.0 when fading is disabled. `K = 0` degenerates to
/// Rayleigh (exponentially distributed power).
pub fn sample_fading_gain<R: Rng + ?Sized>(env: &RadioEnvironment, rng: &mut R) -> f64 {
    if !env.fading_enabled {
        return 1.0;
    }
    rician_power_gain(env.rician_k, rng)
}

pub(crate) fn rician_power_gain<R: Rng + ?Sized>(k: f64, rng: &mut R) -> f64 {
    let los = (k / (k + 1.0)).sqrt();
    let sigma = (0.5 / (k + 1.0)).sqrt();
    let i: f64 = rng.sample(StandardNormal);
    let q: f64 = rng.sample(StandardNormal);
    let re = los + sigma * i;
    let im = sigma * q;
    re * re + im * im
}

/// Distance at which the mean received power falls to `rx_sensitivity_dbm`.
///
/// `total_gain_dbi` is `G_t + G_r`. Inverts whichever path-loss regime is
/// active at the solution; returns `f64::INFINITY` when the budget has no
/// finite crossover.
pub fn crossover_distance_m(
    tx_power_dbm: f64,
    total_gain_dbi: f64,
    rx_sensitivity_dbm: f64,
    env: &RadioEnvironment,
) -> Result<f64> {
    env.validate()?;
    let margin = tx_power_dbm + total_gain_dbi - rx_sensitivity_dbm;
    if margin.is_nan() {
        return Err(Error::domain("link budget is not a number"));
    }
    if margin == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let dc = cross_distance_m(env)?;
    // Invert 10·n·log10(d_km) + 20·log10(f) + 32.44 = margin.
    let free_km = 10f64.powf(
        (margin - 20.0 * env.frequency_mhz.log10() - FSPL_KM_MHZ_DB)
            / (10.0 * env.pathloss_exponent),
    );
    let free_m = free_km * 1000.0;
    if free_m < dc {
        return Ok(free_m);
    }
    let hh = 20.0 * (env.tx_antenna_height_m * env.rx_antenna_height_m).log10();
    let two_ray_m = 10f64.powf((margin + hh) / 40.0);
    // A step at the switch point can already exceed the margin at d_c.
    Ok(two_ray_m.max(dc))
}

/// Precomputed path-loss evaluator for hot loops.
#[derive(Debug, Clone, Copy)]
pub struct PathLoss {
    cross_m: f64,
    free_offset_db: f64,
    free_slope_db: f64,
    two_ray_offset_db: f64,
    cross_sq_m2: f64,
    free_offset_linear: f64,
    two_ray_offset_linear: f64,
}

impl PathLoss {
    pub fn new(env: &RadioEnvironment) -> Result<Self> {
        env.validate()?;
        let cross_m = cross_distance_m(env)?;
        // 10·n·log10(d_m / 1000) + 20·log10(f) + 32.44
        let free_offset_db =
            20.0 * env.frequency_mhz.log10() + FSPL_KM_MHZ_DB - 30.0 * env.pathloss_exponent;
        let two_ray_offset_db = -20.0 * (env.tx_antenna_height_m * env.rx_antenna_height_m).log10();
        Ok(Self {
            cross_m,
            free_offset_db,
            free_slope_db: 10.0 * env.pathloss_exponent,
            two_ray_offset_db,
            cross_sq_m2: cross_m * cross_m,
            free_offset_linear: db_to_linear(free_offset_db),
            two_ray_offset_linear: db_to_linear(two_ray_offset_db),
        })
    }

    /// Loss in dB at a positive distance; agrees with [`pathloss_db`].
    #[inline]
    pub fn db(&self, distance_m: f64) -> f64 {
        let l = distance_m.log10();
        if distance_m < self.cross_m {
            self.free_slope_db * l + self.free_offset_db
        } else {
            40.0 * l + self.two_ray_offset_db
        }
    }

    /// Linear loss factor from a squared distance, avoiding logarithms for
    /// the default free-space exponent.
    #[inline]
    pub fn linear_from_squared(&self, distance_sq_m2: f64) -> f64 {
        if distance_sq_m2 < self.cross_sq_m2 {
            if self.free_slope_db == 20.0 {
                self.free_offset_linear * distance_sq_m2
            } else {
                self.free_offset_linear * distance_sq_m2.powf(self.free_slope_db / 20.0)
            }
        } else {
            self.two_ray_offset_linear * distance_sq_m2 * distance_sq_m2
        }
    }

    pub fn cross_distance_m(&self) -> f64 {
        self.cross_m
    }
}
