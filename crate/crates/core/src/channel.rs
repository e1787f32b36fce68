//! Wireless link model: Rician fading gains per task edge, a random edge
//! server frequency, and the resulting rates and transfer costs.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::TaskGraph;
use crate::rng::stream;

const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("transmission rate must be positive, got {0}")]
    ZeroRate(f64),
    #[error("invalid environment parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

/// Physical and cost parameters of the device, access point and edge server.
/// Defaults reproduce the reference simulation setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvParams {
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    /// Device transmit power.
    pub p_md_w: f64,
    /// Access point transmit power.
    pub p_ap_w: f64,
    pub antenna_gain: f64,
    pub carrier_hz: f64,
    pub distance_m: f64,
    pub pathloss_exp: f64,
    /// Share of the mean gain carried by the deterministic line-of-sight term.
    pub rician_los_fraction: f64,
    /// Correlation between uplink and downlink scattered components.
    pub ud_correlation: f64,
    pub f_edge_min_hz: f64,
    pub f_edge_max_hz: f64,
    /// Device CPU frequency cap.
    pub f_peak_hz: f64,
    /// Effective switched capacitance of the device CPU.
    pub kappa: f64,
    pub beta_e: f64,
    pub beta_t: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        Self {
            bandwidth_hz: 2.0e6,
            noise_power_w: 1.0e-10,
            p_md_w: 0.1,
            p_ap_w: 1.0,
            antenna_gain: 4.11,
            carrier_hz: 915.0e6,
            distance_m: 20.0,
            pathloss_exp: 3.0,
            rician_los_fraction: 0.6,
            ud_correlation: 0.7,
            f_edge_min_hz: 2.0e9,
            f_edge_max_hz: 50.0e9,
            f_peak_hz: 0.01e9,
            kappa: 1.0e-26,
            beta_e: 0.5,
            beta_t: 0.5,
        }
    }
}

impl EnvParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        let positive = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("p_md_w", self.p_md_w),
            ("p_ap_w", self.p_ap_w),
            ("antenna_gain", self.antenna_gain),
            ("carrier_hz", self.carrier_hz),
            ("distance_m", self.distance_m),
            ("f_edge_min_hz", self.f_edge_min_hz),
            ("f_edge_max_hz", self.f_edge_max_hz),
            ("f_peak_hz", self.f_peak_hz),
            ("kappa", self.kappa),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.pathloss_exp.is_finite() && self.pathloss_exp >= 0.0) {
            return Err(invalid("pathloss_exp", format!("must be non-negative, got {}", self.pathloss_exp)));
        }
        if !(0.0 < self.beta_e && self.beta_e < 1.0) {
            return Err(invalid("beta_e", format!("must lie in (0, 1), got {}", self.beta_e)));
        }
        if (self.beta_t - (1.0 - self.beta_e)).abs() > 1e-12 {
            return Err(invalid("beta_t", format!("must equal 1 - beta_e, got {}", self.beta_t)));
        }
        if !(0.0..=1.0).contains(&self.rician_los_fraction) {
            return Err(invalid(
                "rician_los_fraction",
                format!("must lie in [0, 1], got {}", self.rician_los_fraction),
            ));
        }
        if self.ud_correlation.is_nan() || self.ud_correlation.abs() > 1.0 {
            return Err(invalid("ud_correlation", format!("must lie in [-1, 1], got {}", self.ud_correlation)));
        }
        if self.f_edge_min_hz > self.f_edge_max_hz {
            return Err(invalid("f_edge_min_hz", "exceeds f_edge_max_hz".into()));
        }
        if self.f_edge_min_hz <= self.f_peak_hz {
            return Err(invalid("f_edge_min_hz", "edge server must be faster than the device peak frequency".into()));
        }
        Ok(())
    }

    /// Sets the energy weight and keeps `beta_t = 1 - beta_e`.
    pub fn with_energy_weight(mut self, beta_e: f64) -> Self {
        self.beta_e = beta_e;
        self.beta_t = 1.0 - beta_e;
        self
    }
}

fn invalid(name: &'static str, reason: String) -> ChannelError {
    ChannelError::InvalidParam { name, reason }
}

/// One realization of the random environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Uplink power gain per graph edge (indexed like `TaskGraph::edges`).
    pub h_up: Vec<f64>,
    /// Downlink power gain per graph edge.
    pub h_down: Vec<f64>,
    pub f_edge_hz: f64,
}

impl EnvState {
    /// A state with every gain equal to `gain`.
    pub fn uniform(edge_count: usize, gain: f64, f_edge_hz: f64) -> Self {
        Self { h_up: vec![gain; edge_count], h_down: vec![gain; edge_count], f_edge_hz }
    }
}

/// Free-space mean power gain `A_d (c / (4 pi f_c d))^PL`.
pub fn mean_gain(params: &EnvParams) -> f64 {
    let ratio = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * params.carrier_hz * params.distance_m);
    params.antenna_gain * ratio.powf(params.pathloss_exp)
}

/// Complex baseband coefficients behind one edge's uplink and downlink gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingPair {
    pub los: Complex64,
    pub scatter_up: Complex64,
    pub scatter_down: Complex64,
}

impl FadingPair {
    pub fn up_gain(&self) -> f64 {
        (self.los + self.scatter_up).norm_sqr()
    }

    pub fn down_gain(&self) -> f64 {
        (self.los + self.scatter_down).norm_sqr()
    }
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let sd = (power / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(sd * re, sd * im)
}

/// Draws the line-of-sight term and the correlated scattered terms for one
/// edge. The downlink scatter is `rho * s_up + sqrt(1 - rho^2) * w` with `w`
/// independent, so both scatters have power `(1 - los_fraction) * mean`.
pub fn sample_fading_pair<R: Rng + ?Sized>(rng: &mut R, mean: f64, los_fraction: f64, rho: f64) -> FadingPair {
    let los = Complex64::new((los_fraction * mean).sqrt(), 0.0);
    let scatter_power = (1.0 - los_fraction) * mean;
    let scatter_up = complex_normal(rng, scatter_power);
    let innovation = complex_normal(rng, scatter_power);
    let scatter_down = scatter_up * rho + innovation * (1.0 - rho * rho).max(0.0).sqrt();
    FadingPair { los, scatter_up, scatter_down }
}

/// Samples gains for every edge of `graph` plus an edge server frequency.
/// Deterministic in `seed`.
pub fn sample_state(params: &EnvParams, graph: &TaskGraph, seed: u64) -> EnvState {
    let mut rng = stream(seed, 0);
    sample_state_with(params, graph.edges().len(), &mut rng)
}

pub fn sample_state_with<R: Rng + ?Sized>(params: &EnvParams, edge_count: usize, rng: &mut R) -> EnvState {
    let mean = mean_gain(params);
    let mut h_up = Vec::with_capacity(edge_count);
    let mut h_down = Vec::with_capacity(edge_count);
    for _ in 0..edge_count {
        let pair = sample_fading_pair(rng, mean, params.rician_los_fraction, params.ud_correlation);
        h_up.push(pair.up_gain().max(f64::MIN_POSITIVE));
        h_down.push(pair.down_gain().max(f64::MIN_POSITIVE));
    }
    let f_edge_hz = if params.f_edge_max_hz > params.f_edge_min_hz {
        rng.random_range(params.f_edge_min_hz..=params.f_edge_max_hz)
    } else {
        params.f_edge_min_hz
    };
    EnvState { h_up, h_down, f_edge_hz }
}

/// Shannon rate `W log2(1 + P g / sigma^2)` in bit/s.
fn shannon_rate(params: &EnvParams, power: f64, gain: f64) -> f64 {
    params.bandwidth_hz * (power * gain / params.noise_power_w).ln_1p() / std::f64::consts::LN_2
}

pub fn uplink_rate(params: &EnvParams, gain: f64) -> f64 {
    shannon_rate(params, params.p_md_w, gain)
}

pub fn downlink_rate(params: &EnvParams, gain: f64) -> f64 {
    shannon_rate(params, params.p_ap_w, gain)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

/// Transfer time and device energy for `bits` at `rate`. Downlink transfers
/// are paid for by the access point, so the device energy is zero.
pub fn tx_time_energy(
    params: &EnvParams,
    bits: f64,
    rate: f64,
    direction: Direction,
) -> Result<(f64, f64), ChannelError> {
    if bits == 0.0 {
        return Ok((0.0, 0.0));
    }
    if rate.is_nan() || rate <= 0.0 {
        return Err(ChannelError::ZeroRate(rate));
    }
    let time = bits / rate;
    let energy = match direction {
        Direction::Up => time * params.p_md_w,
        Direction::Down => 0.0,
    };
    Ok((time, energy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Edge;

    fn rel(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    fn chain() -> TaskGraph {
        let e = |from, to| Edge { from, to, data_bits: 8.0 };
        TaskGraph::with_real_tasks(&[1.0, 1.0], vec![e(0, 1), e(1, 2), e(2, 3)]).unwrap()
    }

    #[test]
    fn mean_gain_reference_value() {
        // 4.11 * (3e8 / (4 pi 915e6 20))^3, evaluated independently.
        let expected = 4.11 * (3.0e8 / (4.0 * std::f64::consts::PI * 915.0e6 * 20.0_f64)).powi(3);
        let got = mean_gain(&EnvParams::default());
        assert!(rel(got, expected, 1e-12));
        assert!(rel(got, 9.1248e-9, 1e-4), "{got}");
    }

    #[test]
    fn mean_gain_scaling() {
        let p = EnvParams { pathloss_exp: 0.0, ..Default::default() };
        assert_eq!(mean_gain(&p), 4.11);
        let near = mean_gain(&EnvParams::default());
        let far = mean_gain(&EnvParams { distance_m: 40.0, ..Default::default() });
        assert!(rel(near / far, 8.0, 1e-12));
    }

    #[test]
    fn pure_los_is_deterministic() {
        let p = EnvParams { rician_los_fraction: 1.0, ud_correlation: 1.0, ..Default::default() };
        let h = mean_gain(&p);
        let s = sample_state(&p, &chain(), 11);
        for (&u, &d) in s.h_up.iter().zip(&s.h_down) {
            assert!(rel(u, h, 1e-12));
            assert_eq!(u, d);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = EnvParams::default();
        let g = chain();
        assert_eq!(sample_state(&p, &g, 5), sample_state(&p, &g, 5));
        assert_ne!(sample_state(&p, &g, 5), sample_state(&p, &g, 6));
        let s = sample_state(&p, &g, 5);
        assert!(s.f_edge_hz >= p.f_edge_min_hz && s.f_edge_hz <= p.f_edge_max_hz);
        assert!(s.h_up.iter().chain(&s.h_down).all(|&g| g > 0.0));
    }

    #[test]
    fn monte_carlo_mean_and_correlation() {
        let p = EnvParams::default();
        let h = mean_gain(&p);
        let mut rng = stream(42, 9);
        let n = 100_000;
        let (mut sum_up, mut sum_down) = (0.0, 0.0);
        let (mut sxy, mut sxx, mut syy, mut sx, mut sy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let pair = sample_fading_pair(&mut rng, h, 0.6, 0.7);
            sum_up += pair.up_gain();
            sum_down += pair.down_gain();
            let (x, y) = (pair.scatter_up.re, pair.scatter_down.re);
            sx += x;
            sy += y;
            sxy += x * y;
            sxx += x * x;
            syy += y * y;
        }
        let nf = n as f64;
        assert!(rel(sum_up / nf, h, 0.02));
        assert!(rel(sum_down / nf, h, 0.02));
        let cov = sxy / nf - sx / nf * sy / nf;
        let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
        assert!((corr - 0.7).abs() < 0.02, "corr {corr}");
    }

    #[test]
    fn rates() {
        let p = EnvParams::default();
        // P_MD g / sigma^2 = 1 gives log2(2) = 1.
        let g1 = p.noise_power_w / p.p_md_w;
        assert!(rel(uplink_rate(&p, g1), 2.0e6, 1e-12));
        let g3 = 3.0 * p.noise_power_w / p.p_ap_w;
        assert!(rel(downlink_rate(&p, g3), 4.0e6, 1e-12));
        assert!(uplink_rate(&p, 1e-30) < 1e-9);
        assert_eq!(downlink_rate(&p, 0.0), 0.0);
        assert!(rel(uplink_rate(&p, 1e-6), 2.0e6 * 1001.0_f64.log2(), 1e-12));
        // Four-digit reference value; the exact figure is 1.99344e7.
        assert!(rel(uplink_rate(&p, 1e-6), 1.9932e7, 2e-4));
        assert!(rel(downlink_rate(&p, 1e-6), 2.657e7, 1e-3));
        let mut last = 0.0;
        for k in 0..50 {
            let r = uplink_rate(&p, 1e-12 * 1.5_f64.powi(k));
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn transfer_costs() {
        let p = EnvParams::default();
        assert_eq!(tx_time_energy(&p, 0.0, 5.0, Direction::Up).unwrap(), (0.0, 0.0));
        let (t, e) = tx_time_energy(&p, 1e6, 1e6, Direction::Up).unwrap();
        assert_eq!(t, 1.0);
        assert!(rel(e, 0.1, 1e-15));
        let (t, e) = tx_time_energy(&p, 3e6, 1e6, Direction::Down).unwrap();
        assert_eq!((t, e), (3.0, 0.0));
        assert_eq!(tx_time_energy(&p, 1.0, 0.0, Direction::Up), Err(ChannelError::ZeroRate(0.0)));
    }

    #[test]
    fn default_params_are_valid() {
        assert!(EnvParams::default().validate().is_ok());
        assert!(EnvParams::default().with_energy_weight(1.0).validate().is_err());
        let p = EnvParams { f_edge_min_hz: 1e6, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
