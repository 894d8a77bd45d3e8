//! Edgewise inter-recruitment time distributions.
//!
//! Every family exposes the unconditional curves (cdf, density, survival)
//! plus the conditional survival and hazard given that the edge clock has
//! already run for `s` time units without firing:
//!
//! ```text
//! S_s(t) = (1 - F(t)) / (1 - F(s))      t >= s
//! H_s(t) = f(t) / (1 - F(t))
//! ```
//!
//! The likelihood consumes only the log-domain variants.
//!
//! Parameterizations:
//! * `gamma` is shape/scale. The "Gamma(a, a)" experiments use shape `a`
//!   with scale `1 / a`, so the mean waiting time is 1
//!   ([`WaitingTimeModel::gamma_unit_mean`]).
//! * `power_law` is the Pareto density `f(t) = (a - 1) x_min^(a - 1) t^(-a)`
//!   on `[x_min, inf)`; hazard and density are zero below `x_min`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::special::ln_gamma_pq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Exponential,
    Gamma,
    PowerLaw,
}

impl Family {
    pub fn dimension(self) -> usize {
        self.param_names().len()
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Exponential => &["rate"],
            Family::Gamma => &["shape", "scale"],
            Family::PowerLaw => &["alpha", "x_min"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Exponential => "exponential",
            Family::Gamma => "gamma",
            Family::PowerLaw => "power_law",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exponential" | "exp" => Ok(Family::Exponential),
            "gamma" => Ok(Family::Gamma),
            "power_law" | "powerlaw" | "pareto" => Ok(Family::PowerLaw),
            other => Err(Error::InvalidParameter(format!(
                "unknown distribution family '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WaitingTimeModel {
    Exponential { rate: f64 },
    Gamma { shape: f64, scale: f64 },
    PowerLaw { alpha: f64, x_min: f64 },
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

impl WaitingTimeModel {
    pub fn exponential(rate: f64) -> Result<Self> {
        Ok(Self::Exponential {
            rate: positive("rate", rate)?,
        })
    }

    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        Ok(Self::Gamma {
            shape: positive("shape", shape)?,
            scale: positive("scale", scale)?,
        })
    }

    /// Gamma with shape `shape` and scale `1 / shape` (mean 1).
    pub fn gamma_unit_mean(shape: f64) -> Result<Self> {
        Self::gamma(shape, 1.0 / positive("shape", shape)?)
    }

    pub fn power_law(alpha: f64, x_min: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 1.0) {
            return Err(Error::InvalidParameter(format!(
                "power-law alpha must exceed 1, got {alpha}"
            )));
        }
        Ok(Self::PowerLaw {
            alpha,
            x_min: positive("x_min", x_min)?,
        })
    }

    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        if params.len() != family.dimension() {
            return Err(Error::InvalidParameter(format!(
                "{family} takes {} parameters, got {}",
                family.dimension(),
                params.len()
            )));
        }
        match family {
            Family::Exponential => Self::exponential(params[0]),
            Family::Gamma => Self::gamma(params[0], params[1]),
            Family::PowerLaw => Self::power_law(params[0], params[1]),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Exponential { .. } => Family::Exponential,
            Self::Gamma { .. } => Family::Gamma,
            Self::PowerLaw { .. } => Family::PowerLaw,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Exponential { rate } => vec![rate],
            Self::Gamma { shape, scale } => vec![shape, scale],
            Self::PowerLaw { alpha, x_min } => vec![alpha, x_min],
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Gamma { shape, scale } => shape * scale,
            Self::PowerLaw { alpha, x_min } => {
                if alpha > 2.0 {
                    x_min * (alpha - 1.0) / (alpha - 2.0)
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `ln(1 - F(t))`.
    pub fn ln_survival(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => -rate * t,
            Self::Gamma { shape, scale } => ln_gamma_pq(shape, t / scale).1,
            Self::PowerLaw { alpha, x_min } => {
                if t < x_min {
                    0.0
                } else {
                    (alpha - 1.0) * (x_min / t).ln()
                }
            }
        }
    }

    /// `ln F(t)`.
    pub fn ln_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Gamma { shape, scale } => ln_gamma_pq(shape, t / scale).0,
            _ => crate::special::ln_1m_exp(self.ln_survival(t)),
        }
    }

    pub fn ln_pdf(&self, t: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => {
                if t < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    rate.ln() - rate * t
                }
            }
            Self::Gamma { shape, scale } => {
                if t < 0.0 {
                    return f64::NEG_INFINITY;
                }
                if t == 0.0 {
                    return match shape.partial_cmp(&1.0) {
                        Some(std::cmp::Ordering::Less) => f64::INFINITY,
                        Some(std::cmp::Ordering::Equal) => -scale.ln(),
                        _ => f64::NEG_INFINITY,
                    };
                }
                (shape - 1.0) * t.ln() - t / scale - ln_gamma(shape) - shape * scale.ln()
            }
            Self::PowerLaw { alpha, x_min } => {
                if t < x_min {
                    f64::NEG_INFINITY
                } else {
                    (alpha - 1.0).ln() + (alpha - 1.0) * x_min.ln() - alpha * t.ln()
                }
            }
        }
    }

    /// `ln(f(t) / (1 - F(t)))`; `-inf` where the density vanishes.
    pub fn ln_hazard(&self, t: f64) -> f64 {
        match *self {
            Self::Exponential { rate } => rate.ln(),
            Self::PowerLaw { alpha, x_min } => {
                if t < x_min {
                    f64::NEG_INFINITY
                } else {
                    (alpha - 1.0).ln() - t.ln()
                }
            }
            Self::Gamma { .. } => self.ln_hazard_given_survival(t, self.ln_survival(t)),
        }
    }

    /// Log hazard at `t` reusing an already computed `ln(1 - F(t))`.
    pub fn ln_hazard_given_survival(&self, t: f64, ln_surv: f64) -> f64 {
        match self {
            Self::Gamma { .. } => {
                let lp = self.ln_pdf(t);
                if lp == f64::NEG_INFINITY {
                    lp
                } else {
                    lp - ln_surv
                }
            }
            _ => self.ln_hazard(t),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        self.ln_cdf(t).exp()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.ln_pdf(t).exp()
    }

    pub fn survival(&self, t: f64) -> f64 {
        self.ln_survival(t).exp()
    }

    fn check_window(&self, s: f64, t: f64) -> Result<f64> {
        if !(s >= 0.0 && t >= s) {
            return Err(Error::Curve(format!(
                "conditional curve needs 0 <= s <= t, got s = {s}, t = {t}"
            )));
        }
        let ln_s = self.ln_survival(s);
        if ln_s == f64::NEG_INFINITY {
            return Err(Error::Curve(format!("F(s) = 1 at s = {s}")));
        }
        Ok(ln_s)
    }

    /// `ln S_s(t)`.
    pub fn log_cond_survival(&self, s: f64, t: f64) -> Result<f64> {
        let ln_s = self.check_window(s, t)?;
        if t == s {
            return Ok(0.0);
        }
        Ok((self.ln_survival(t) - ln_s).min(0.0))
    }

    /// `ln H_s(t)`. The conditioning cancels, so this equals the
    /// unconditional log hazard once `(s, t)` is validated.
    pub fn log_cond_hazard(&self, s: f64, t: f64) -> Result<f64> {
        self.check_window(s, t)?;
        Ok(self.ln_hazard(t))
    }

    pub fn cond_survival(&self, s: f64, t: f64) -> Result<f64> {
        self.log_cond_survival(s, t).map(f64::exp)
    }

    /// `f_s(t) = f(t) / (1 - F(s))`.
    pub fn cond_density(&self, s: f64, t: f64) -> Result<f64> {
        let ln_s = self.check_window(s, t)?;
        Ok((self.ln_pdf(t) - ln_s).exp())
    }

    pub fn cond_hazard(&self, s: f64, t: f64) -> Result<f64> {
        self.log_cond_hazard(s, t).map(f64::exp)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Exponential { rate } => Exp::new(rate).expect("validated rate").sample(rng),
            Self::Gamma { shape, scale } => Gamma::new(shape, scale)
                .expect("validated gamma parameters")
                .sample(rng),
            Self::PowerLaw { alpha, x_min } => {
                // inverse cdf with U in (0, 1]
                let u: f64 = 1.0 - rng.random::<f64>();
                x_min * u.powf(-1.0 / (alpha - 1.0))
            }
        }
    }
}

impl fmt::Display for WaitingTimeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Exponential { rate } => write!(f, "exponential(rate={rate})"),
            Self::Gamma { shape, scale } => write!(f, "gamma(shape={shape}, scale={scale})"),
            Self::PowerLaw { alpha, x_min } => write!(f, "power_law(alpha={alpha}, x_min={x_min})"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::gamma;

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn exponential_survival_closed_form() {
        let m = WaitingTimeModel::exponential(1.0).unwrap();
        assert!((m.cond_survival(0.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(m.log_cond_survival(0.0, 700.0).unwrap(), -700.0);
    }

    #[test]
    fn survival_at_conditioning_time_is_one() {
        for m in [
            WaitingTimeModel::exponential(3.0).unwrap(),
            WaitingTimeModel::gamma(0.3, 2.0).unwrap(),
            WaitingTimeModel::power_law(2.5, 0.5).unwrap(),
        ] {
            for s in [0.0, 0.2, 1.7] {
                assert_eq!(m.cond_survival(s, s).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn gamma_shape_one_is_memoryless() {
        let m = WaitingTimeModel::gamma(1.0, 1.0).unwrap();
        assert!((m.cond_survival(0.5, 1.5).unwrap() - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn exponential_hazard_is_constant() {
        let m = WaitingTimeModel::exponential(2.0).unwrap();
        for (s, t) in [(0.0, 0.1), (0.3, 5.0), (2.0, 40.0)] {
            assert!((m.cond_hazard(s, t).unwrap() - 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn power_law_hazard() {
        let m = WaitingTimeModel::power_law(2.0, 0.5).unwrap();
        let h = m.cond_hazard(0.2, 1.0).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
        let quotient = m.pdf(1.0) / (1.0 - m.cdf(1.0));
        assert!(rel(h, quotient) < 1e-12);
        assert_eq!(m.cond_hazard(0.0, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn gamma_hazard_matches_quadrature() {
        let (shape, scale) = (0.5, 2.0);
        let m = WaitingTimeModel::gamma(shape, scale).unwrap();
        let density =
            |x: f64| x.powf(shape - 1.0) * (-x / scale).exp() / (gamma(shape) * scale.powf(shape));
        let tail = simpson(&density, 1.0, 200.0, 1e-15);
        let oracle = density(1.0) / tail;
        assert!(rel(m.cond_hazard(0.0, 1.0).unwrap(), oracle) < 1e-10);
    }

    #[test]
    fn gamma_cdf_matches_quadrature() {
        let m = WaitingTimeModel::gamma(2.5, 0.7).unwrap();
        let density = |x: f64| m.pdf(x);
        for t in [0.3, 1.0, 2.2, 5.0] {
            let oracle = simpson(&density, 0.0, t, 1e-15);
            assert!(rel(m.cdf(t), oracle) < 1e-10, "t={t}");
        }
    }

    #[test]
    fn gamma_deep_tail_matches_asymptotic_series() {
        // Q(a, x) ~ x^(a-1) e^-x / Gamma(a) * sum_k (a-1)(a-2)...(a-k) / x^k
        let m = WaitingTimeModel::gamma(0.5, 0.5).unwrap();
        for t in [50.0, 200.0, 1000.0] {
            let x: f64 = t / 0.5;
            let a = 0.5f64;
            let (mut term, mut sum) = (1.0f64, 1.0f64);
            for k in 1..12 {
                term *= (a - k as f64) / x;
                sum += term;
            }
            let oracle = (a - 1.0) * x.ln() - x - ln_gamma(a) + sum.ln();
            let got = m.log_cond_survival(0.0, t).unwrap();
            assert!(got.is_finite());
            assert!(rel(got, oracle) < 1e-12, "t={t} got={got} oracle={oracle}");
            assert!(m.log_cond_hazard(0.0, t).unwrap().is_finite());
        }
    }

    #[test]
    fn log_and_raw_survival_agree() {
        let models = [
            WaitingTimeModel::exponential(0.7).unwrap(),
            WaitingTimeModel::gamma(1.7, 0.4).unwrap(),
            WaitingTimeModel::power_law(2.0, 0.5).unwrap(),
        ];
        for m in models {
            for (s, t) in [(0.0, 0.5), (0.3, 2.0), (1.0, 4.0)] {
                let raw = m.survival(t) / m.survival(s);
                let via_log = m.log_cond_survival(s, t).unwrap().exp();
                assert!(rel(via_log, raw) < 1e-12);
            }
        }
    }

    #[test]
    fn domain_errors() {
        let m = WaitingTimeModel::exponential(1.0).unwrap();
        assert!(m.cond_survival(1.0, 0.5).is_err());
        assert!(m.cond_survival(-1.0, 0.5).is_err());
        assert!(m.cond_survival(f64::INFINITY, f64::INFINITY).is_err());
        assert!(WaitingTimeModel::power_law(1.0, 0.5).is_err());
        assert!(WaitingTimeModel::gamma(0.0, 1.0).is_err());
        assert!(WaitingTimeModel::exponential(f64::NAN).is_err());
    }

    fn sample_mean(m: &WaitingTimeModel, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }

    #[test]
    fn exponential_sample_mean() {
        let m = WaitingTimeModel::exponential(1.0).unwrap();
        let (mean, se) = sample_mean(&m, 100_000, 1);
        assert!((mean - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn unit_mean_gamma_sample_mean() {
        for (i, shape) in [0.5, 1.0, 2.0].into_iter().enumerate() {
            let m = WaitingTimeModel::gamma_unit_mean(shape).unwrap();
            assert!((m.mean() - 1.0).abs() < 1e-15);
            let (mean, se) = sample_mean(&m, 100_000, 10 + i as u64);
            assert!((mean - 1.0).abs() < 3.0 * se, "shape={shape} mean={mean}");
        }
    }

    #[test]
    fn power_law_support() {
        let m = WaitingTimeModel::power_law(2.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((0..10_000).all(|_| m.sample(&mut rng) >= 0.5));
    }

    fn ks_statistic(m: &WaitingTimeModel, n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = m.cdf(x);
                (f - i as f64 / n as f64).max((i + 1) as f64 / n as f64 - f)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samplers_pass_kolmogorov_smirnov() {
        let n = 10_000;
        let critical = 1.628 / (n as f64).sqrt(); // 1% level
        let models = [
            WaitingTimeModel::exponential(1.3).unwrap(),
            WaitingTimeModel::gamma(0.5, 2.0).unwrap(),
            WaitingTimeModel::gamma(3.0, 0.25).unwrap(),
            WaitingTimeModel::power_law(2.0, 0.5).unwrap(),
        ];
        for (k, m) in models.iter().enumerate() {
            let d = ks_statistic(m, n, 100 + k as u64);
            assert!(d < critical, "{m}: D = {d}");
        }
    }

    #[test]
    fn gamma_shape_one_equals_exponential() {
        let lambda = 1.7;
        let e = WaitingTimeModel::exponential(lambda).unwrap();
        let g = WaitingTimeModel::gamma(1.0, 1.0 / lambda).unwrap();
        for t in [0.01, 0.3, 1.0, 4.0, 30.0] {
            assert!((e.survival(t) - g.survival(t)).abs() < 1e-12);
            assert!((e.pdf(t) - g.pdf(t)).abs() < 1e-12);
            assert!((e.cond_hazard(0.0, t).unwrap() - g.cond_hazard(0.0, t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn serde_shape() {
        let m = WaitingTimeModel::gamma(0.5, 2.0).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(s, r#"{"family":"gamma","shape":0.5,"scale":2.0}"#);
        let back: WaitingTimeModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }

    fn any_model() -> impl Strategy<Value = WaitingTimeModel> {
        prop_oneof![
            (0.1f64..5.0).prop_map(|r| WaitingTimeModel::exponential(r).unwrap()),
            (0.2f64..4.0, 0.2f64..3.0).prop_map(|(a, b)| WaitingTimeModel::gamma(a, b).unwrap()),
            (1.2f64..4.0, 0.1f64..1.0).prop_map(|(a, x)| WaitingTimeModel::power_law(a, x).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn hazard_equals_conditional_density_over_survival(
            m in any_model(), s in 0.0f64..3.0, dt in 0.01f64..5.0
        ) {
            let t = s + dt;
            let via_conditioning = m.cond_density(s, t).unwrap() / m.cond_survival(s, t).unwrap();
            let direct = m.pdf(t) / m.survival(t);
            prop_assert!(rel(via_conditioning, direct) < 1e-10 || direct == 0.0);
            prop_assert!(rel(m.cond_hazard(s, t).unwrap(), direct) < 1e-10 || direct == 0.0);
        }

        #[test]
        fn hazard_is_derivative_of_cumulative_hazard(
            m in any_model(), s in 0.0f64..2.0, dt in 0.05f64..4.0
        ) {
            let t = s + dt;
            if let WaitingTimeModel::PowerLaw { x_min, .. } = m {
                prop_assume!((t - x_min).abs() > 1e-3);
            }
            let h = 1e-5 * t;
            let d = -(m.log_cond_survival(s, t + h).unwrap()
                - m.log_cond_survival(s, t - h).unwrap().min(0.0)) / (2.0 * h);
            let hz = m.cond_hazard(s, t).unwrap();
            if t - h > s {
                prop_assert!((d - hz).abs() <= 1e-6 * hz.max(1e-3), "d={} h={}", d, hz);
            }
        }

        #[test]
        fn survival_nonincreasing(m in any_model(), s in 0.0f64..2.0, a in 0.0f64..3.0, b in 0.0f64..3.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(m.cond_survival(s, s + hi).unwrap() <= m.cond_survival(s, s + lo).unwrap());
        }
    }
}
