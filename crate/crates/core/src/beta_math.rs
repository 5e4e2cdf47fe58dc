//! Log-space beta-function ratios.
//!
//! Almost every quantity of the process is a ratio
//!
//! ```text
//! B̄_{a1,b1}^{a2,b2} = B(a1 + a2, b1 + b2) / B(a1, b1)
//! ```
//!
//! evaluated at `(a1, b1) = (alpha, kappa + 1)`. For large rows counts the
//! individual log-gamma values reach ~1e7 while the ratio itself is O(1), so
//! differences of `lnΓ` are never formed directly at large arguments. Instead
//! [`ln_gamma_ratio`] computes `lnΓ(x + h) − lnΓ(x)` from the Stirling series
//! with `ln_1p`, which keeps absolute error near machine epsilon.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters `(gamma, alpha, kappa)` of the convergent IBP.
///
/// `gamma` is the limiting expected number of features, `alpha` the Beta
/// shape on feature weights and `kappa` the decay parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CibpParams {
    pub gamma: f64,
    pub alpha: f64,
    pub kappa: f64,
}

impl CibpParams {
    pub fn new(gamma: f64, alpha: f64, kappa: f64) -> Result<Self> {
        let params = Self { gamma, alpha, kappa };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        Ok(())
    }

    /// `log B̄_{alpha, kappa+1}^{a2, b2}`. Offsets must keep both arguments positive.
    pub fn log_bbar(&self, a2: f64, b2: f64) -> f64 {
        log_beta_ratio_unchecked(self.alpha, self.kappa + 1.0, a2, b2)
    }

    /// Probability that row `row` (1-based) joins a feature already held by
    /// `m` earlier rows in sequential generation: `(m + alpha)/(row + kappa + alpha)`.
    pub fn inclusion_probability(&self, m: usize, row: usize) -> f64 {
        (m as f64 + self.alpha) / (row as f64 + self.kappa + self.alpha)
    }
}

/// Arguments of `B̄_{a1,b1}^{a2,b2}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaRatioArgs {
    pub a1: f64,
    pub b1: f64,
    pub a2: f64,
    pub b2: f64,
}

impl BetaRatioArgs {
    pub fn new(a1: f64, b1: f64, a2: f64, b2: f64) -> Result<Self> {
        if !(a1 > 0.0 && b1 > 0.0) {
            return Err(Error::Domain(format!("base arguments must be positive: a1={a1}, b1={b1}")));
        }
        if !(a1 + a2 > 0.0 && b1 + b2 > 0.0) {
            return Err(Error::Domain(format!(
                "shifted arguments must be positive: a1+a2={}, b1+b2={}",
                a1 + a2,
                b1 + b2
            )));
        }
        Ok(Self { a1, b1, a2, b2 })
    }
}

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

const STIRLING_MIN: f64 = 10.0;

/// `lnΓ(x) − [(x − ½) ln x − x + ½ ln 2π]` for `x ≥ 10`.
fn stirling_correction(x: f64) -> f64 {
    let r = 1.0 / x;
    let r2 = r * r;
    r * (1.0 / 12.0
        + r2 * (-1.0 / 360.0
            + r2 * (1.0 / 1260.0
                + r2 * (-1.0 / 1680.0 + r2 * (1.0 / 1188.0 + r2 * (-691.0 / 360_360.0 + r2 / 156.0))))))
}

/// `lnΓ(x + h) − lnΓ(x)` for `x > 0`, `x + h > 0`.
///
/// Accurate to a few ulps in absolute terms even when `x` is large and `h`
/// is small, where the naive difference loses all significant digits.
pub fn ln_gamma_ratio(x: f64, h: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    let y = x + h;
    match (x >= STIRLING_MIN, y >= STIRLING_MIN) {
        (true, true) => {
            (x - 0.5) * (h / x).ln_1p() + h * y.ln() - h + stirling_correction(y) - stirling_correction(x)
        }
        (false, false) => ln_gamma(y) - ln_gamma(x),
        (false, true) => {
            // lnΓ(x) = lnΓ(x + n) − Σ_{i<n} ln(x + i)
            let n = (STIRLING_MIN - x).ceil();
            let mut shift = 0.0;
            let mut i = 0.0;
            while i < n {
                shift += (x + i).ln();
                i += 1.0;
            }
            shift + ln_gamma_ratio(x + n, h - n)
        }
        (true, false) => -ln_gamma_ratio(y, -h),
    }
}

/// `log B(a, b)`.
pub fn log_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("log_beta requires positive arguments, got ({a}, {b})")));
    }
    let (small, large) = if a <= b { (a, b) } else { (b, a) };
    Ok(ln_gamma(small) - ln_gamma_ratio(large, small))
}

/// `log B̄_{a1,b1}^{a2,b2} = log B(a1 + a2, b1 + b2) − log B(a1, b1)`.
pub fn log_beta_ratio(args: BetaRatioArgs) -> f64 {
    log_beta_ratio_unchecked(args.a1, args.b1, args.a2, args.b2)
}

fn log_beta_ratio_unchecked(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    // Grouped so each term is a shift of one argument: nothing large cancels.
    ln_gamma_ratio(a1, a2) + ln_gamma_ratio(b1, a1) - ln_gamma_ratio(b1 + b2, a1 + a2)
}

/// `log B̄_{alpha,kappa+1}^{0,p}` via the product form
/// `Σ_{j=1..p} [ln(kappa + j) − ln(alpha + kappa + j)]`.
///
/// This is the log probability that a single Beta(alpha, kappa+1)-weighted
/// feature is held by none of `p` rows. Summed with compensation so the
/// O(p) loop stays within 1e-12 of the log-gamma form out to p = 1e6.
pub fn zero_column_log_ratio(params: &CibpParams, p: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for j in 1..=p {
        let term = -(params.alpha / (params.kappa + j as f64)).ln_1p();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Log of the Poisson rate of new dishes opened by customer `j` (1-based):
/// `log gamma + log B̄_{alpha,kappa+1}^{1, j-1}`.
pub fn log_new_dish_rate(params: &CibpParams, j: usize) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidParameter("customer index is 1-based".into()));
    }
    Ok(params.gamma.ln() + params.log_bbar(1.0, (j - 1) as f64))
}

/// Poisson rate `gamma · B(alpha + 1, kappa + j)/B(alpha, kappa + 1)` of new
/// dishes tried by customer `j`.
///
/// The offsets are `(1, j − 1)`; these are the rates whose sum telescopes to
/// `1 − B̄^{0,p}`.
pub fn new_dish_rate(params: &CibpParams, j: usize) -> Result<f64> {
    log_new_dish_rate(params, j).map(f64::exp)
}

/// Mean `gamma (1 − B̄^{0,p})` of the Poisson law of the number of nonzero
/// columns among `p` rows.
pub fn kplus_mean(params: &CibpParams, p: usize) -> f64 {
    -params.gamma * zero_column_log_ratio(params, p).exp_m1()
}

/// Closed-form `Σ_{j=1..p} new_dish_rate(j)`; identical to [`kplus_mean`]
/// but uses the log-gamma route for `B̄^{0,p}`, so it is O(1) in `p`.
pub fn total_new_dish_rate(params: &CibpParams, p: usize) -> f64 {
    -params.gamma * params.log_bbar(0.0, p as f64).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(gamma: f64, alpha: f64, kappa: f64) -> CibpParams {
        CibpParams::new(gamma, alpha, kappa).unwrap()
    }

    fn ln_factorial(n: u64) -> f64 {
        (1..=n).map(|i| (i as f64).ln()).sum()
    }

    #[test]
    fn log_beta_trivial_values() {
        assert_eq!(log_beta(1.0, 1.0).unwrap(), 0.0);
        assert!((log_beta(2.0, 1.0).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_beta(0.0, 1.0).is_err());
        assert!(log_beta(1.0, -2.0).is_err());
    }

    #[test]
    fn log_beta_matches_exact_rational() {
        // B(10, 11) = 9! 10! / 20! = 1 / (10 · C(20, 10)) = 1 / 1847560
        let exact = -(1_847_560f64).ln();
        let got = log_beta(10.0, 11.0).unwrap();
        assert!(((got - exact) / exact).abs() < 1e-12, "{got} vs {exact}");
    }

    #[test]
    fn log_beta_extreme_arguments() {
        // B(1, b) = 1/b exactly
        for &b in &[1e-3, 0.5, 7.0, 1e3, 1e6, 1e9] {
            let got = log_beta(1.0, b).unwrap();
            let exact = -f64::ln(b);
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "b={b}: {got} vs {exact}");
        }
        // B(2, b) = 1/(b(b+1))
        for &b in &[1e-3, 12.5, 1e6] {
            let got = log_beta(2.0, b).unwrap();
            let exact = -(b.ln() + (b + 1.0).ln());
            assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0));
        }
    }

    #[test]
    fn ln_gamma_ratio_integer_shifts() {
        // Γ(x + n)/Γ(x) = x (x+1) ... (x+n-1)
        for &x in &[1e-6, 0.3, 3.5, 9.99, 10.0, 47.25, 1e6] {
            for n in [1u32, 2, 7, 15] {
                let exact: f64 = (0..n).map(|i| (x + i as f64).ln()).sum();
                let got = ln_gamma_ratio(x, n as f64);
                assert!((got - exact).abs() < 1e-12 * exact.abs().max(1.0), "x={x}, n={n}: {got} vs {exact}");
                // x + n − n is not x in floating point; compare against the rounded base
                let top = x + n as f64;
                let base = top - n as f64;
                let exact_back: f64 = -(0..n).map(|i| (base + i as f64).ln()).sum::<f64>();
                let back = ln_gamma_ratio(top, -(n as f64));
                assert!((back - exact_back).abs() < 1e-12 * exact_back.abs().max(1.0), "x={x}, n={n}: {back}");
            }
        }
    }

    #[test]
    fn ln_gamma_ratio_factorials() {
        let got = ln_gamma_ratio(1.0, 20.0);
        assert!((got - ln_factorial(20)).abs() < 1e-12);
        let got = ln_gamma_ratio(5.0, 100.0);
        assert!((got - (ln_factorial(104) - ln_factorial(4))).abs() < 1e-10);
    }

    #[test]
    fn beta_ratio_examples() {
        let args = BetaRatioArgs::new(3.0, 4.5, 0.0, 0.0).unwrap();
        assert_eq!(log_beta_ratio(args), 0.0);
        let args = BetaRatioArgs::new(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!((log_beta_ratio(args) - 0.5f64.ln()).abs() < 1e-15);
        let args = BetaRatioArgs::new(1.0, 1.0, 1.0, 0.0).unwrap();
        assert!((log_beta_ratio(args) - 0.5f64.ln()).abs() < 1e-15);
        assert!(BetaRatioArgs::new(1.0, 1.0, -1.5, 0.0).is_err());
        assert!(BetaRatioArgs::new(-1.0, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn beta_ratio_against_direct_log_gamma() {
        for &(a1, b1, a2, b2) in &[(2.0, 3.0, 1.0, 4.0), (0.7, 1.3, 3.0, -0.2), (10.0, 11.0, 5.0, 5.0)] {
            let args = BetaRatioArgs::new(a1, b1, a2, b2).unwrap();
            let direct = ln_gamma(a1 + a2) + ln_gamma(b1 + b2) - ln_gamma(a1 + a2 + b1 + b2)
                - (ln_gamma(a1) + ln_gamma(b1) - ln_gamma(a1 + b1));
            assert!((log_beta_ratio(args) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_column_examples() {
        let prm = params(2.0, 1.0, 0.0);
        assert_eq!(zero_column_log_ratio(&prm, 0), 0.0);
        assert!((zero_column_log_ratio(&prm, 2) - (1.0f64 / 3.0).ln()).abs() < 1e-15);

        let prm = params(1.0, 10.0, 10.0);
        let product = zero_column_log_ratio(&prm, 300);
        let gamma_form = prm.log_bbar(0.0, 300.0);
        assert!((product - gamma_form).abs() < 1e-10);
    }

    #[test]
    fn zero_column_strictly_decreasing() {
        let prm = params(1.0, 0.5, 2.0);
        let mut prev = zero_column_log_ratio(&prm, 0);
        for p in 1..200 {
            let cur = zero_column_log_ratio(&prm, p);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn new_dish_rate_examples() {
        let prm = params(1.0, 1.0, 0.0);
        assert!((new_dish_rate(&prm, 1).unwrap() - 0.5).abs() < 1e-15);
        assert!(new_dish_rate(&prm, 0).is_err());
        // p=4 rate for (1,1,0): B(2,4)/B(1,1) = 1/20
        assert!((new_dish_rate(&prm, 4).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn new_dish_rate_matches_product_form() {
        for &(gamma, alpha, kappa) in &[(1.0, 1.0, 0.0), (5.0, 0.5, 4.0), (2.0, 10.0, 10.0), (3.0, 1e-3, 0.2)] {
            let prm = params(gamma, alpha, kappa);
            for j in [1usize, 2, 5, 40, 500] {
                let mut prod = gamma * alpha / (alpha + kappa + j as f64);
                for h in 1..j {
                    prod *= (kappa + h as f64) / (alpha + kappa + h as f64);
                }
                let rate = new_dish_rate(&prm, j).unwrap();
                assert!(((rate - prod) / prod).abs() < 1e-10, "j={j}: {rate} vs {prod}");
            }
        }
    }

    #[test]
    fn new_dish_rates_decrease_and_telescope() {
        let prm = params(5.0, 1.5, 3.0);
        let rates: Vec<f64> = (1..=100).map(|j| new_dish_rate(&prm, j).unwrap()).collect();
        assert!(rates.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
        let sum: f64 = rates.iter().sum();
        let closed = prm.gamma * (1.0 - prm.log_bbar(0.0, 100.0).exp());
        assert!((sum - closed).abs() < 1e-10);
    }

    #[test]
    fn kplus_mean_examples() {
        assert_eq!(kplus_mean(&params(3.0, 1.0, 0.0), 0), 0.0);
        assert!((kplus_mean(&params(3.0, 1.0, 0.0), 2) - 2.0).abs() < 1e-14);

        let prm = params(1.0, 10.0, 10.0);
        let mean = kplus_mean(&prm, 300);
        let sum: f64 = (1..=300).map(|j| new_dish_rate(&prm, j).unwrap()).sum();
        assert!(mean < 1.0);
        assert!((mean - sum).abs() < 1e-6);
        assert!((mean - total_new_dish_rate(&prm, 300)).abs() < 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(CibpParams::new(0.0, 1.0, 0.0).is_err());
        assert!(CibpParams::new(1.0, 0.0, 0.0).is_err());
        assert!(CibpParams::new(1.0, 1.0, -0.1).is_err());
        assert!(CibpParams::new(1.0, 1.0, f64::NAN).is_err());
        assert!(CibpParams::new(1.0, 1.0, 0.0).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn kplus_mean_monotone_and_bounded(gamma in 0.1f64..10.0, alpha in 1e-3f64..20.0, kappa in 0.0f64..20.0, p in 0usize..400) {
                let prm = CibpParams::new(gamma, alpha, kappa).unwrap();
                let a = kplus_mean(&prm, p);
                let b = kplus_mean(&prm, p + 1);
                prop_assert!(b >= a);
                prop_assert!(b <= gamma);
            }

            #[test]
            fn telescoping_identity(alpha in 1e-4f64..30.0, kappa in 0.0f64..30.0, p in 1usize..300) {
                let prm = CibpParams::new(1.0, alpha, kappa).unwrap();
                let sum: f64 = (1..=p).map(|j| prm.log_bbar(1.0, (j - 1) as f64).exp()).sum();
                let closed = -prm.log_bbar(0.0, p as f64).exp_m1();
                prop_assert!((sum - closed).abs() < 1e-10);
            }
        }
    }
}
