//! Completely-random-measure representation.
//!
//! The process is the Bernoulli-process thinning of a CRM with Lévy intensity
//!
//! ```text
//! Λ(dq, dω) = γ / B(α, κ+1) · q^{α−1} (1−q)^κ dq Λ₀(dω)
//! ```
//!
//! on `(0,1] × [0,1]`, with base measure `Λ₀ = Uniform[0,1]` (density 1).
//! The q-marginal integrates to `γ`, so the measure has Poisson(γ) many
//! atoms and is sampled exactly: no truncation is involved.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::beta_math::{log_beta, CibpParams};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::sample_poisson;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub location: f64,
}

/// A finite purely-atomic measure with weights in (0,1] and distinct
/// locations in [0,1].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AtomicMeasure {
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            check_weight(a.weight)?;
            check_location(a.location)?;
        }
        let mut locs: Vec<f64> = atoms.iter().map(|a| a.location).collect();
        locs.sort_by(f64::total_cmp);
        if locs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Domain("duplicate atom location".into()));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

fn check_weight(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("atom weight {q} outside (0, 1]")))
    }
}

fn check_location(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::Domain(format!("atom location {w} outside [0, 1]")))
    }
}

/// One draw from the Bernoulli process: the locations it includes, sorted.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BernoulliRow {
    pub included: Vec<f64>,
}

impl BernoulliRow {
    fn from_unsorted(mut included: Vec<f64>) -> Self {
        included.sort_by(f64::total_cmp);
        Self { included }
    }

    pub fn contains(&self, location: f64) -> bool {
        self.included.binary_search_by(|x| x.total_cmp(&location)).is_ok()
    }
}

/// Density of the Lévy intensity's weight marginal at `q ∈ (0,1]`.
pub fn levy_intensity(params: &CibpParams, q: f64) -> f64 {
    let log_norm = log_beta(params.alpha, params.kappa + 1.0).expect("validated params");
    // 0 * ln 0 is taken as 0 so the boundary values are finite when an exponent vanishes
    let xlog = |a: f64, l: f64| if a == 0.0 { 0.0 } else { a * l };
    params.gamma * (xlog(params.alpha - 1.0, q.ln()) + xlog(params.kappa, (-q).ln_1p()) - log_norm).exp()
}

/// Draws the CRM: Poisson(gamma) atoms with Beta(alpha, kappa + 1) weights
/// and uniform locations. A weight that underflows to zero is stored as the
/// smallest positive normal value.
pub fn sample_crm<R: Rng + ?Sized>(params: &CibpParams, rng: &mut R) -> Result<AtomicMeasure> {
    params.validate()?;
    let k = sample_poisson(rng, params.gamma) as usize;
    let beta = Beta::new(params.alpha, params.kappa + 1.0).expect("validated shape parameters");
    let mut atoms: Vec<Atom> = Vec::with_capacity(k);
    for _ in 0..k {
        let weight = beta.sample(rng).max(f64::MIN_POSITIVE);
        let location = fresh_location(rng, atoms.iter().map(|a| a.location));
        atoms.push(Atom { weight, location });
    }
    Ok(AtomicMeasure { atoms })
}

fn fresh_location<R: Rng + ?Sized, I: Iterator<Item = f64> + Clone>(rng: &mut R, taken: I) -> f64 {
    loop {
        let w: f64 = rng.random();
        if !taken.clone().any(|t| t == w) {
            return w;
        }
    }
}

/// Includes each atom independently with probability equal to its weight.
pub fn sample_bernoulli_row<R: Rng + ?Sized>(mu: &AtomicMeasure, rng: &mut R) -> Result<BernoulliRow> {
    let mut included = Vec::new();
    for a in &mu.atoms {
        check_weight(a.weight)?;
        if rng.random::<f64>() < a.weight {
            included.push(a.location);
        }
    }
    Ok(BernoulliRow::from_unsorted(included))
}

/// A measure together with `p` Bernoulli-process rows drawn from it.
#[derive(Clone, Debug)]
pub struct CrmDraw {
    pub measure: AtomicMeasure,
    pub rows: Vec<BernoulliRow>,
}

/// A matrix whose columns carry atom locations.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledMatrix {
    pub matrix: FeatureMatrix,
    pub locations: Vec<f64>,
}

pub fn sample_crm_rows<R: Rng + ?Sized>(params: &CibpParams, p: usize, rng: &mut R) -> Result<CrmDraw> {
    let measure = sample_crm(params, rng)?;
    let rows = (0..p).map(|_| sample_bernoulli_row(&measure, rng)).collect::<Result<_>>()?;
    Ok(CrmDraw { measure, rows })
}

/// Matrix of the atoms hit by at least one row of a CRM draw.
pub fn rows_from_crm<R: Rng + ?Sized>(params: &CibpParams, p: usize, rng: &mut R) -> Result<FeatureMatrix> {
    Ok(rows_to_matrix(&sample_crm_rows(params, p, rng)?.rows).matrix)
}

/// Converts Bernoulli-process rows to a matrix with one column per distinct
/// included location, in order of first appearance.
pub fn rows_to_matrix(rows: &[BernoulliRow]) -> LabeledMatrix {
    let mut locations: Vec<f64> = Vec::new();
    for row in rows {
        for &w in &row.included {
            if !locations.contains(&w) {
                locations.push(w);
            }
        }
    }
    let mut matrix = FeatureMatrix::zeros(rows.len(), locations.len());
    for (j, row) in rows.iter().enumerate() {
        for (k, &w) in locations.iter().enumerate() {
            if row.contains(w) {
                matrix.set(j, k, true);
            }
        }
    }
    LabeledMatrix { matrix, locations }
}

/// Joint log-density of `p` rows under the random-measure representation,
///
/// ```text
/// −γ Σ_{j=1..p} B̄^{1,j−1} + Σ_k [log B̄^{m_k, p−m_k} + log λ₀(ω_k)]
/// ```
///
/// with `λ₀ ≡ 1` on [0,1]. The exponent is summed term by term. Every
/// column must be nonzero. Differs from the lof pmf by exactly
/// `K⁺ log γ − Σ_u log K_u!`.
pub fn joint_log_density(rows: &LabeledMatrix, params: &CibpParams) -> Result<f64> {
    params.validate()?;
    let m = &rows.matrix;
    if rows.locations.len() != m.ncols() {
        return Err(Error::Structure(format!(
            "{} locations for {} columns",
            rows.locations.len(),
            m.ncols()
        )));
    }
    for &w in &rows.locations {
        check_location(w)?;
    }
    let p = m.rows();
    let exponent: f64 = (1..=p).map(|j| params.log_bbar(1.0, (j - 1) as f64).exp()).sum();
    let mut log_density = -params.gamma * exponent;
    for (k, mk) in m.column_sums().into_iter().enumerate() {
        if mk == 0 {
            return Err(Error::Structure(format!("column {k} has no included rows")));
        }
        // log λ₀(ω) = 0 on the unit interval
        log_density += params.log_bbar(mk as f64, (p - mk) as f64);
    }
    Ok(log_density)
}

/// Draws row `p` given `p − 1` history rows using the conjugate posterior
/// of the measure: an existing atom held by `m` rows is included with
/// probability `(m + alpha)/(p + kappa + alpha)`, and Poisson(`gamma B̄^{1,p−1}`)
/// new atoms appear at fresh uniform locations.
pub fn posterior_predictive_row<R: Rng + ?Sized>(
    history: &[BernoulliRow],
    params: &CibpParams,
    rng: &mut R,
) -> Result<BernoulliRow> {
    params.validate()?;
    let p = history.len() + 1;
    let labeled = rows_to_matrix(history);
    let mut included = Vec::new();
    for (k, &w) in labeled.locations.iter().enumerate() {
        let m = labeled.matrix.column_sum(k);
        if rng.random::<f64>() < params.inclusion_probability(m, p) {
            included.push(w);
        }
    }
    let rate = params.gamma * params.log_bbar(1.0, (p - 1) as f64).exp();
    let fresh = sample_poisson(rng, rate);
    for _ in 0..fresh {
        let w = fresh_location(rng, labeled.locations.iter().copied().chain(included.iter().copied()));
        included.push(w);
    }
    Ok(BernoulliRow::from_unsorted(included))
}
