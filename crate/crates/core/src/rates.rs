//! Analytic error-rate recurrences for the Toffoli gate of the concatenated
//! Steane code, the storage threshold, and the normalized rate table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The threshold value as printed (two significant figures). The rate table
/// is evaluated at this base rate.
pub const TABLE_REFERENCE_RATE: f64 = 1.3e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("parameter `{0}` out of range")]
    OutOfRange(&'static str),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p_s: f64,
    pub p_g: f64,
    pub p_m: f64,
    /// Toffoli duration in timesteps.
    pub t_t: u32,
    /// Measurement duration in timesteps.
    pub t_m: u32,
    /// `p_g / p_th` at level 0.
    pub epsilon: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams::uniform(TABLE_REFERENCE_RATE)
    }
}

impl NoiseParams {
    /// `p_s = p_g = p_m = p`, `t_T = 6`, `t_m = 1`.
    pub fn uniform(p: f64) -> Self {
        NoiseParams { p_s: p, p_g: p, p_m: p, t_t: 6, t_m: 1, epsilon: p / TABLE_REFERENCE_RATE }
    }

    pub fn validate(&self) -> Result<(), RateError> {
        for (name, v) in [("p_s", self.p_s), ("p_g", self.p_g), ("p_m", self.p_m)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(RateError::OutOfRange(name));
            }
        }
        if self.t_t == 0 {
            return Err(RateError::OutOfRange("t_T"));
        }
        if self.t_m == 0 {
            return Err(RateError::OutOfRange("t_m"));
        }
        Ok(())
    }

    /// `key = value` lines overriding the defaults; keys `p_s`, `p_g`, `p_m`,
    /// `t_T`, `t_m`. `p_m` follows `p_g` unless given. Unknown keys are
    /// rejected.
    pub fn parse(text: &str) -> Result<Self, RateError> {
        let mut p = NoiseParams::default();
        let mut p_m_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| RateError::Parse { line: i + 1, reason };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            let f = || v.parse::<f64>().map_err(|_| err(format!("bad number `{v}`")));
            let u = || v.parse::<u32>().map_err(|_| err(format!("bad integer `{v}`")));
            match k {
                "p_s" => p.p_s = f()?,
                "p_g" => p.p_g = f()?,
                "p_m" => {
                    p.p_m = f()?;
                    p_m_set = true;
                }
                "t_T" => p.t_t = u()?,
                "t_m" => p.t_m = u()?,
                _ => return Err(err(format!("unknown key `{k}`"))),
            }
        }
        if !p_m_set {
            p.p_m = p.p_g;
        }
        p.epsilon = p.p_g / TABLE_REFERENCE_RATE;
        p.validate()?;
        Ok(p)
    }

    fn scaled(&self, f: impl Fn(f64) -> f64) -> Self {
        NoiseParams { p_s: f(self.p_s), p_g: f(self.p_g), p_m: f(self.p_m), ..*self }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToffoliRates {
    pub bit: [f64; 3],
    pub ph: [f64; 3],
    pub level: u32,
}

impl ToffoliRates {
    /// Columns in table order: bit 1..3, then phase 1..3.
    pub fn columns(&self) -> [f64; 6] {
        [self.bit[0], self.bit[1], self.bit[2], self.ph[0], self.ph[1], self.ph[2]]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CatRates {
    pub per_qubit_bit: f64,
    pub total_ph: f64,
}

pub fn cat_rates(params: &NoiseParams) -> CatRates {
    CatRates {
        per_qubit_bit: 5.0 * params.p_s + params.p_g,
        total_ph: 26.0 * params.p_s + 20.0 * params.p_g,
    }
}

/// Fixed point of the storage recurrence with `p = p_s = p_g` and
/// `p_EC = 21p`: `1 / (21 · (1 + 84 + 8·441))`.
pub fn threshold() -> f64 {
    1.0 / 75873.0
}

pub fn ec_rate(params: &NoiseParams) -> f64 {
    9.0 * params.p_s + 12.0 * params.p_g
}

/// Level-(j+1) storage rate from the level-j rate and EC rate.
pub fn storage_recurrence(p: f64, p_ec: f64) -> f64 {
    21.0 * (p * p + 4.0 * p * p_ec + 8.0 * p_ec * p_ec)
}

pub fn base_toffoli_rates(params: &NoiseParams) -> ToffoliRates {
    let (s, g) = (params.p_s, params.p_g);
    ToffoliRates {
        bit: [2.0 * s + 3.0 * g, 2.0 * s + 5.0 * g, 6.0 * s + 9.0 * g],
        ph: [4.0 * s + 10.0 * g, 3.0 * s + 7.0 * g, 3.0 * s + 5.0 * g],
        level: 0,
    }
}

/// Per-qubit error rates accumulated over the four periods of the logical
/// Toffoli. Index `[i]` is operand `i + 1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodRates {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
    pub d: [f64; 3],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccumulatedRates {
    pub bit: PeriodRates,
    pub ph: PeriodRates,
}

pub fn accumulated_rates(params: &NoiseParams, tof: &ToffoliRates, cat: &CatRates) -> AccumulatedRates {
    let (s, g) = (params.p_s, params.p_g);
    let tt = params.t_t as f64;
    let tm = params.t_m as f64;
    let cb = cat.per_qubit_bit;
    let (b, h) = (tof.bit, tof.ph);

    let a_bit = [s + g + b[0], s + g + b[1], tt * s + 2.0 * g];
    let b_bit = [2.0 * s + b[0], 2.0 * s + b[1], (tt + 1.0) * s + g];
    let d_bit = [
        (tm + 2.0) * s + 2.5 * g,
        (tm + 2.0) * s + 2.5 * g,
        (2.0 * tm + 3.5) * s + 4.75 * g,
    ];
    let a_ph = [2.0 * s + 4.0 * g + h[0] + cb, 2.0 * s + 4.0 * g + h[1] + cb, tt * s + 3.0 * g + cb];
    let b_ph = [4.0 * s + 2.0 * g + h[0] + cb, 4.0 * s + 2.0 * g + h[1] + cb, (tt + 1.0) * s + 2.0 * g + cb];
    let d_ph = [
        (2.0 * tm + 3.75) * s + 4.0 * g,
        (2.0 * tm + 3.75) * s + 4.25 * g,
        (tm + 1.5) * s + 3.0 * g,
    ];
    AccumulatedRates {
        bit: PeriodRates { a: a_bit, b: b_bit, c: b_bit, d: d_bit },
        ph: PeriodRates { a: a_ph, b: b_ph, c: b_ph, d: d_ph },
    }
}

/// Error rate of the majority vote over the cat parities; it only feeds the
/// bit-flip rate of the third operand.
pub fn parity_vote_error(params: &NoiseParams, tof: &ToffoliRates, cat: &CatRates) -> f64 {
    let p_t3 = tof.bit[2];
    let a = cat.total_ph + 7.0 * (2.0 * params.p_s + 5.0 * params.p_g + p_t3 + params.p_m);
    let b = cat.total_ph + 7.0 * (5.0 * params.p_s + 2.0 * params.p_g + p_t3 + params.p_m);
    2.0 * a * b + b * b
}

/// Logical error kinds that a data-measurement error turns into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Destination {
    Bit(usize),
    Ph(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataMeasurementError {
    pub rate: f64,
    /// Operands are 1-based.
    pub destinations: Vec<Destination>,
}

pub fn data_measurement_errors(params: &NoiseParams) -> [DataMeasurementError; 3] {
    let (s, g, m) = (params.p_s, params.p_g, params.p_m);
    let r12 = 21.0 * (s + g + m).powi(2);
    let r3 = 21.0 * (0.5 * s + 2.5 * g + m).powi(2);
    use Destination::*;
    [
        DataMeasurementError { rate: r12, destinations: vec![Bit(1), Bit(3), Ph(2)] },
        DataMeasurementError { rate: r12, destinations: vec![Bit(2), Bit(3), Ph(1)] },
        DataMeasurementError { rate: r3, destinations: vec![Ph(1), Ph(2), Ph(3)] },
    ]
}

pub fn next_level_rates(params: &NoiseParams, tof: &ToffoliRates, cat: &CatRates) -> ToffoliRates {
    let acc = accumulated_rates(params, tof, cat);
    let p_ec = ec_rate(params);
    let f = |p: f64| storage_recurrence(p, p_ec);
    let sum = |r: &PeriodRates, i: usize| f(r.a[i]) + f(r.b[i]) + f(r.c[i]) + f(r.d[i]);
    let mut out = ToffoliRates {
        bit: [0, 1, 2].map(|i| sum(&acc.bit, i)),
        ph: [0, 1, 2].map(|i| sum(&acc.ph, i)),
        level: tof.level + 1,
    };
    out.bit[2] += parity_vote_error(params, tof, cat);
    for e in data_measurement_errors(params) {
        for d in e.destinations {
            match d {
                Destination::Bit(i) => out.bit[i - 1] += e.rate,
                Destination::Ph(i) => out.ph[i - 1] += e.rate,
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    /// Row `j` = level-j rates divided by `1e-5 · ε^(2^j)`.
    pub rows: Vec<[f64; 6]>,
    pub params: NoiseParams,
}

pub const COLUMN_NAMES: [&str; 6] = ["T1,bit", "T2,bit", "T3,bit", "T1,ph", "T2,ph", "T3,ph"];

impl RateTable {
    pub fn rounded(&self) -> Vec<[f64; 6]> {
        self.rows.iter().map(|r| r.map(|v| round_sig(v, 2))).collect()
    }
}

/// Table for levels `0..=levels` at the reference base rate.
pub fn rate_table(levels: u32) -> RateTable {
    rate_table_with(&NoiseParams::default(), levels)
}

/// Level-j noise follows `p^(j) = p_ref · (p^(0) / p_ref)^(2^j)` for each of
/// `p_s`, `p_g`, `p_m`, with `p_ref` the reference threshold.
pub fn rate_table_with(base: &NoiseParams, levels: u32) -> RateTable {
    let eps = base.p_g / TABLE_REFERENCE_RATE;
    let level_params = |j: u32| {
        let e = 2f64.powi(j as i32);
        base.scaled(|x| TABLE_REFERENCE_RATE * (x / TABLE_REFERENCE_RATE).powf(e))
    };
    let norm = |j: u32| 1e-5 * eps.powf(2f64.powi(j as i32));
    let mut tof = base_toffoli_rates(base);
    let mut rows = Vec::with_capacity(levels as usize + 1);
    for j in 0..=levels {
        let n = norm(j);
        rows.push(tof.columns().map(|v| v / n));
        if j < levels {
            let p = level_params(j);
            tof = next_level_rates(&p, &tof, &cat_rates(&p));
        }
    }
    RateTable { rows, params: *base }
}

/// Rounds half away from zero to `digits` significant figures, after
/// snapping away floating-point noise below 1e-9 relative.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let e = x.abs().log10().floor() as i32;
    let scale = 10f64.powi(digits - 1 - e);
    let v = x * scale;
    let snapped = (v * 1e9).round() / 1e9;
    snapped.round() / scale
}

/// Formats a rounded coefficient without trailing noise: `20`, `6.5`.
pub fn format_sig(x: f64, digits: i32) -> String {
    let r = round_sig(x, digits);
    if r == 0.0 {
        return "0".into();
    }
    let e = r.abs().log10().floor() as i32;
    let decimals = (digits - 1 - e).max(0) as usize;
    format!("{r:.decimals$}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn threshold_is_fixed_point() {
        let p = threshold();
        assert_relative_eq!(p * 75873.0, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p, 1.3180e-5, max_relative = 1e-4);
        assert_relative_eq!(storage_recurrence(p, 21.0 * p), p, max_relative = 1e-12);
        assert!(storage_recurrence(p / 2.0, 21.0 * p / 2.0) < p / 2.0);
    }

    #[test]
    fn ec_and_storage_arithmetic() {
        let u = NoiseParams::uniform(1.0);
        assert_eq!(ec_rate(&u), 21.0);
        assert_eq!(ec_rate(&NoiseParams { p_s: 0.0, ..u }), 12.0);
        assert_eq!(ec_rate(&NoiseParams { p_g: 0.0, ..u }), 9.0);
        assert_eq!(storage_recurrence(0.0, 0.0), 0.0);
        assert_relative_eq!(storage_recurrence(1e-5, 21e-5), 7.5873e-6, max_relative = 1e-12);
    }

    #[test]
    fn accumulated_examples() {
        let p = 1.0;
        let params = NoiseParams::uniform(p);
        let acc = accumulated_rates(&params, &base_toffoli_rates(&params), &cat_rates(&params));
        assert_eq!(acc.bit.a[0], 7.0);
        assert_eq!(acc.bit.d[2], 10.25);
        assert_eq!(acc.ph.a[0], 26.0);
        assert_eq!(acc.ph.d[2], 5.5);
        assert_eq!(acc.bit.b, acc.bit.c);
        assert_eq!(acc.ph.b, acc.ph.c);
    }

    #[test]
    fn vote_and_measurement_arithmetic() {
        let params = NoiseParams::uniform(1.0);
        let tof = ToffoliRates { bit: [0.0, 0.0, 15.0], ..Default::default() };
        let cat = CatRates { per_qubit_bit: 6.0, total_ph: 46.0 };
        assert_eq!(parity_vote_error(&params, &tof, &cat), 128547.0);
        let m = data_measurement_errors(&params);
        assert_eq!(m[0].rate, 189.0);
        assert_eq!(m[2].rate, 336.0);
        assert_eq!(m[2].destinations, vec![Destination::Ph(1), Destination::Ph(2), Destination::Ph(3)]);
    }

    #[test]
    fn zero_noise_gives_zero() {
        let z = NoiseParams { p_s: 0.0, p_g: 0.0, p_m: 0.0, ..Default::default() };
        let tof = base_toffoli_rates(&z);
        assert_eq!(tof.columns(), [0.0; 6]);
        assert_eq!(next_level_rates(&z, &tof, &cat_rates(&z)).columns(), [0.0; 6]);
        assert_eq!(parity_vote_error(&z, &tof, &cat_rates(&z)), 0.0);
    }

    #[test]
    fn rounding() {
        assert_eq!(round_sig(19.5, 2), 20.0);
        assert_eq!(round_sig(6.45, 2), 6.5);
        assert_eq!(round_sig(5.864, 2), 5.9);
        assert_eq!(format_sig(19.5, 2), "20");
        assert_eq!(format_sig(5.81, 2), "5.8");
        assert_eq!(format_sig(13.0, 2), "13");
    }

    #[test]
    fn params_file() {
        let p = NoiseParams::parse("p_s = 1e-6\np_g=2e-6 # gate\nt_T = 4\n").unwrap();
        assert_eq!(p.p_m, 2e-6);
        assert_eq!(p.t_t, 4);
        assert!(NoiseParams::parse("q = 1").is_err());
        assert!(NoiseParams::parse("p_s = 2").is_err());
    }
}
