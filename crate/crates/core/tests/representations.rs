//! Cross-checks between the three constructions and against quadrature
//! oracles that do not go through the crate's beta-function code.

use cibp::crm::{levy_intensity, posterior_predictive_row, sample_crm_rows};
use cibp::diagnostics::{chisq_gof, poisson_cells, CountTable, MIN_EXPECTED, SIGNIFICANCE};
use cibp::lof::left_order;
use cibp::samplers::{predictive_row, sample_hierarchical, sample_restaurant};
use cibp::{kplus_mean, new_dish_rate, CibpParams, FeatureMatrix, RngStream};

fn params(gamma: f64, alpha: f64, kappa: f64) -> CibpParams {
    CibpParams::new(gamma, alpha, kappa).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Beta-binomial pmf by quadrature, normalized numerically afterwards.
/// For alpha < 1 the substitution theta = u^{1/alpha} removes the endpoint
/// singularity; otherwise the integrand is bounded and used as is.
fn column_sum_pmf(alpha: f64, kappa: f64, p: usize) -> Vec<f64> {
    let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
    let kernel = |t: f64, m: usize| binom(p, m) * t.powi(m as i32) * (1.0 - t).powi((p - m) as i32) * (1.0 - t).powf(kappa);
    let dens = |x: f64, m: usize| {
        if alpha < 1.0 {
            kernel(x.powf(1.0 / alpha), m)
        } else {
            kernel(x, m) * x.powf(alpha - 1.0)
        }
    };
    let raw: Vec<f64> = (0..=p).map(|m| simpson(|x| dens(x, m), 0.0, 1.0, 20_000)).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

#[test]
fn levy_intensity_integrates_to_gamma() {
    for &(gamma, alpha, kappa) in &[(1.0, 1.0, 0.0), (2.5, 0.5, 2.0), (0.7, 2.0, 3.5), (4.0, 10.0, 10.0)] {
        let prm = params(gamma, alpha, kappa);
        let integrand = |x: f64| {
            if alpha >= 1.0 {
                return levy_intensity(&prm, x);
            }
            // q = u^{1/alpha}, dq = u^{1/alpha - 1}/alpha du
            if x <= 0.0 {
                return gamma / (alpha * cibp::log_beta(alpha, kappa + 1.0).unwrap().exp());
            }
            let q = x.powf(1.0 / alpha);
            levy_intensity(&prm, q) * x.powf(1.0 / alpha - 1.0) / alpha
        };
        let total = simpson(integrand, 0.0, 1.0, 200_000);
        assert!((total - gamma).abs() < 1e-8, "({gamma},{alpha},{kappa}): {total}");
    }
}

#[test]
fn hierarchical_column_sums_match_quadrature() {
    let (alpha, kappa, p) = (1.5, 2.0, 4);
    let prm = params(3.0, alpha, kappa);
    let pmf = column_sum_pmf(alpha, kappa, p);
    let mut rng = RngStream::new(11, 0).rng();
    let mut table = CountTable::new();
    while table.total() < 60_000 {
        let d = sample_hierarchical(&prm, p, &mut rng).unwrap();
        for k in 0..d.matrix.ncols() {
            table.add(d.matrix.column_sum(k) as u64);
        }
    }
    let cells: Vec<(u64, f64)> = pmf.iter().enumerate().map(|(m, &q)| (m as u64, q)).collect();
    let r = chisq_gof(&table, &cells, MIN_EXPECTED).unwrap();
    assert!(r.p_value > SIGNIFICANCE, "{r:?}");
}

#[test]
fn zero_column_probability_matches_quadrature() {
    // P(column sum = 0) = B̄^{0,p}
    for &(alpha, kappa, p) in &[(1.0, 0.0, 2usize), (0.5, 3.0, 6), (4.0, 1.0, 5)] {
        let prm = params(1.0, alpha, kappa);
        let quad = column_sum_pmf(alpha, kappa, p)[0];
        let closed = prm.log_bbar(0.0, p as f64).exp();
        assert!((quad - closed).abs() < 1e-7, "{alpha},{kappa},{p}: {quad} vs {closed}");
    }
}

#[test]
fn crm_rows_have_poisson_kplus() {
    let prm = params(2.0, 1.5, 3.0);
    let p = 6;
    let mut rng = RngStream::new(12, 0).rng();
    let table: CountTable<u64> = (0..40_000)
        .map(|_| {
            let draw = sample_crm_rows(&prm, p, &mut rng).unwrap();
            let mut locs: Vec<f64> = draw.rows.iter().flat_map(|r| r.included.iter().copied()).collect();
            locs.sort_by(f64::total_cmp);
            locs.dedup();
            locs.len() as u64
        })
        .collect();
    let r = chisq_gof(&table, &poisson_cells(kplus_mean(&prm, p)), MIN_EXPECTED).unwrap();
    assert!(r.p_value > SIGNIFICANCE, "{r:?}");
}

#[test]
fn predictive_rows_agree_across_representations() {
    // history fixed; compare how many existing columns and how many new ones
    // the next row takes under the matrix and the CRM predictive
    let prm = params(2.0, 1.0, 1.5);
    let mut rng = RngStream::new(13, 0).rng();
    let history = sample_restaurant(&prm, 5, &mut rng).unwrap();
    let rows: Vec<cibp::crm::BernoulliRow> = (0..history.rows())
        .map(|j| cibp::crm::BernoulliRow {
            included: (0..history.ncols()).filter(|&k| history.get(j, k)).map(|k| (k as f64 + 1.0) / 1000.0).collect(),
        })
        .collect();
    let draws = 40_000;
    let mut a = CountTable::new();
    let mut b = CountTable::new();
    for _ in 0..draws {
        let r = predictive_row(&history, &prm, &mut rng).unwrap();
        a.add((r.existing.iter().filter(|&&x| x).count(), r.new_columns));
        let row = posterior_predictive_row(&rows, &prm, &mut rng).unwrap();
        let old = row.included.iter().filter(|w| rows.iter().any(|h| h.contains(**w))).count();
        b.add((old, row.included.len() - old));
    }
    let tv = cibp::diagnostics::tv_distance(&a, &b).unwrap();
    assert!(tv < 0.02, "{tv}");
    let new_mean = a.iter().map(|(k, c)| k.1 as f64 * c as f64).sum::<f64>() / draws as f64;
    let rate = new_dish_rate(&prm, 6).unwrap();
    assert!((new_mean - rate).abs() < 4.0 * (rate / draws as f64).sqrt());
}

#[test]
fn lof_classes_agree_between_restaurant_and_hierarchy() {
    let prm = params(1.5, 0.8, 2.0);
    let p = 4;
    let mut rng = RngStream::new(14, 0).rng();
    let mut a = CountTable::new();
    let mut b = CountTable::new();
    for _ in 0..60_000 {
        a.add(left_order(&sample_restaurant(&prm, p, &mut rng).unwrap()).fingerprint());
        b.add(left_order(&sample_hierarchical(&prm, p, &mut rng).unwrap().matrix).fingerprint());
    }
    let tv = cibp::diagnostics::tv_distance(&a, &b).unwrap();
    assert!(tv < 0.03, "{tv}");
}

#[test]
fn empty_history_matrix_is_first_customer() {
    let prm = params(3.0, 2.0, 1.0);
    let mut rng = RngStream::new(15, 0).rng();
    let table: CountTable<u64> =
        (0..30_000).map(|_| predictive_row(&FeatureMatrix::new(0), &prm, &mut rng).unwrap().new_columns as u64).collect();
    let r = chisq_gof(&table, &poisson_cells(new_dish_rate(&prm, 1).unwrap()), MIN_EXPECTED).unwrap();
    assert!(r.p_value > SIGNIFICANCE, "{r:?}");
}
