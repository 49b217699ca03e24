//! Problem data: channels, linear covariance constraints, rate weights, and
//! broadcast-channel solutions, plus rate and constraint evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, identity, is_hermitian, min_eigenvalue, outer, real_part_checked, trace_product, CMat,
    CVec, C64, ZERO,
};

/// Relative singular-value threshold for the channel rank check.
pub const RANK_TOL: f64 = 1e-10;
/// Absolute slack allowed when checking `tr(Sigma_x Phi) <= gamma`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// The `M x K` channel matrix whose `k`-th column is user `k`'s channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    h: CMat,
}

impl ChannelSet {
    pub fn new(h: CMat) -> Result<Self> {
        let (m, k) = h.shape();
        if m == 0 || k == 0 {
            return Err(Error::Dimension(format!("channel matrix is {m}x{k}")));
        }
        if k > m {
            return Err(Error::TooManyUsers { users: k, antennas: m });
        }
        let sv = h.clone().svd(false, false).singular_values;
        let largest = sv.max();
        let smallest = sv.min();
        if largest == 0.0 || smallest <= RANK_TOL * largest {
            let ratio = if largest == 0.0 { 0.0 } else { smallest / largest };
            return Err(Error::RankDeficient { ratio });
        }
        Ok(Self { h })
    }

    pub fn from_columns(columns: &[CVec]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Dimension("no users".into()));
        }
        Self::new(CMat::from_columns(columns))
    }

    pub fn antennas(&self) -> usize {
        self.h.nrows()
    }

    pub fn users(&self) -> usize {
        self.h.ncols()
    }

    pub fn matrix(&self) -> &CMat {
        &self.h
    }

    pub fn column(&self, k: usize) -> CVec {
        self.h.column(k).into_owned()
    }

    pub fn columns(&self) -> Vec<CVec> {
        (0..self.users()).map(|k| self.column(k)).collect()
    }

    /// Channel with columns reordered so that column `i` is user `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let cols: Vec<CVec> = order.iter().map(|&k| self.column(k)).collect();
        Self { h: CMat::from_columns(&cols) }
    }
}

/// One linear constraint `tr(Sigma_x Phi) <= gamma`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub phi: CMat,
    pub budget: f64,
}

impl LinearConstraint {
    pub fn sum_power(m: usize, budget: f64) -> Self {
        Self { phi: identity(m), budget }
    }

    pub fn per_antenna(m: usize, antenna: usize, budget: f64) -> Self {
        Self::per_group(m, &[antenna], budget)
    }

    /// Diagonal selector on a group of antennas.
    pub fn per_group(m: usize, antennas: &[usize], budget: f64) -> Self {
        let mut phi = CMat::zeros(m, m);
        for &a in antennas {
            phi[(a, a)] = C64::new(1.0, 0.0);
        }
        Self { phi, budget }
    }

    /// Forbidden direction `c`; `c` is normalized to unit norm.
    pub fn direction(c: &CVec, budget: f64) -> Self {
        let c = c.unscale(c.norm());
        Self { phi: outer(&c), budget }
    }

    pub fn is_identity(&self) -> bool {
        let m = self.phi.nrows();
        (&self.phi - identity(m)).iter().all(|z| z.norm() <= HERMITIAN_TOL)
    }
}

/// Ordered list of linear constraints on the transmit covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<LinearConstraint>,
    sum_power_index: Option<usize>,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<LinearConstraint>) -> Result<Self> {
        let m = constraints.first().map(|c| c.phi.nrows()).unwrap_or(0);
        for (index, c) in constraints.iter().enumerate() {
            if c.phi.nrows() != m || !c.phi.is_square() {
                return Err(Error::Dimension(format!("constraint {index} matrix is {:?}", c.phi.shape())));
            }
            if !is_hermitian(&c.phi, HERMITIAN_TOL) {
                return Err(Error::InvalidConstraint { index, reason: "matrix is not Hermitian".into() });
            }
            if min_eigenvalue(&c.phi) < -PSD_TOL {
                return Err(Error::InvalidConstraint { index, reason: "matrix is not positive semidefinite".into() });
            }
            if !(c.budget >= 0.0) || !c.budget.is_finite() {
                return Err(Error::InvalidConstraint { index, reason: format!("budget {} is negative", c.budget) });
            }
        }
        let sum_power_index = constraints.iter().position(LinearConstraint::is_identity);
        Ok(Self { constraints, sum_power_index })
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn get(&self, index: usize) -> &LinearConstraint {
        &self.constraints[index]
    }

    pub fn budgets(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.budget).collect()
    }

    pub fn sum_power_index(&self) -> Option<usize> {
        self.sum_power_index
    }

    /// Budget of the identity constraint, if present.
    pub fn sum_power(&self) -> Option<f64> {
        self.sum_power_index.map(|i| self.constraints[i].budget)
    }

    /// The constraints other than the identity one, as used by the min-max
    /// dual where the identity constraint is carried by `P` separately.
    pub fn without_sum_power(&self) -> Vec<LinearConstraint> {
        self.constraints
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != self.sum_power_index)
            .map(|(_, c)| c.clone())
            .collect()
    }

    /// `sum_l lambda_l Phi_l`.
    pub fn weighted_matrix(&self, lambda: &[f64]) -> CMat {
        weighted_sum(self.antennas().unwrap_or(0), &self.constraints, lambda)
    }

    pub fn antennas(&self) -> Option<usize> {
        self.constraints.first().map(|c| c.phi.nrows())
    }

    /// A cap that is implied by the constraints whenever `sum_l Phi_l` is
    /// positive definite: `tr(Sigma_x) <= sum gamma / lambda_min(sum Phi)`.
    pub fn implied_power_cap(&self) -> Option<f64> {
        let m = self.antennas()?;
        let total = self.constraints.iter().fold(CMat::zeros(m, m), |acc, c| acc + &c.phi);
        let lmin = hermitian_eigenvalues(&total)[0];
        (lmin > 1e-9).then(|| self.budgets().iter().sum::<f64>() / lmin)
    }
}

/// `sum_l lambda_l Phi_l` as an `m x m` matrix (zero for no constraints).
pub(crate) fn weighted_sum(m: usize, constraints: &[LinearConstraint], lambda: &[f64]) -> CMat {
    constraints
        .iter()
        .zip(lambda)
        .fold(CMat::zeros(m, m), |acc, (c, &l)| acc + c.phi.scale(l))
}

/// Rate weights together with the permutation sorting them in descending
/// order. `order()[0]` is the user with the largest weight.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    w: Vec<f64>,
    order: Vec<usize>,
}

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(bad) = w.iter().find(|x| !(**x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidWeights(format!("weight {bad} is not a positive finite number")));
        }
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| w[b].total_cmp(&w[a]));
        Ok(Self { w, order })
    }

    pub fn uniform(k: usize) -> Self {
        Self::new(vec![1.0; k]).expect("unit weights are valid")
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Weights in descending order.
    pub fn sorted(&self) -> Vec<f64> {
        self.order.iter().map(|&k| self.w[k]).collect()
    }

    /// `Delta_k = w_k - w_{k+1}` over the sorted weights, with `w_{K+1} = 0`.
    pub fn deltas(&self) -> Vec<f64> {
        let s = self.sorted();
        (0..s.len()).map(|k| s[k] - s.get(k + 1).copied().unwrap_or(0.0)).collect()
    }

    pub fn weighted_sum(&self, rates: &[f64]) -> f64 {
        self.w.iter().zip(rates).map(|(w, r)| w * r).sum()
    }
}

/// Transmit parameters of the broadcast channel and what they achieve.
#[derive(Debug, Clone, PartialEq)]
pub struct BcSolution {
    /// Unit-norm steering vectors, one column per user.
    pub v: CMat,
    /// Linear-scale powers.
    pub q: Vec<f64>,
    /// Encoding permutation: `order[0]` is encoded first.
    pub order: Vec<usize>,
    /// Per-user rates in nats per channel use.
    pub rates: Vec<f64>,
    pub sigma_x: CMat,
}

impl BcSolution {
    /// Builds a DPC solution, evaluating rates in the given encoding order.
    pub fn dirty_paper(ch: &ChannelSet, v: CMat, q: Vec<f64>, order: Vec<usize>) -> Result<Self> {
        let rates = bc_rates(ch, &v, &q, &order)?;
        let sigma_x = transmit_covariance(&v, &q);
        Ok(Self { v, q, order, rates, sigma_x })
    }

    /// Builds a linear-beamforming solution (full interference, no order).
    pub fn linear(ch: &ChannelSet, v: CMat, q: Vec<f64>) -> Result<Self> {
        let rates = bc_rates_linear(ch, &v, &q)?;
        let sigma_x = transmit_covariance(&v, &q);
        let order = (0..q.len()).collect();
        Ok(Self { v, q, order, rates, sigma_x })
    }

    pub fn objective(&self, w: &WeightVector) -> f64 {
        w.weighted_sum(&self.rates)
    }

    pub fn usage(&self, cs: &ConstraintSet) -> Vec<f64> {
        constraint_usage(cs, &self.sigma_x)
    }

    pub fn is_feasible(&self, cs: &ConstraintSet, tol: f64) -> bool {
        self.usage(cs).iter().zip(cs.budgets()).all(|(u, g)| *u <= g + tol)
    }
}

/// `sum_k q_k v_k v_k^H`.
pub fn transmit_covariance(v: &CMat, q: &[f64]) -> CMat {
    let m = v.nrows();
    q.iter().enumerate().fold(CMat::zeros(m, m), |acc, (k, &qk)| {
        let col = v.column(k).into_owned();
        acc + outer(&col).scale(qk)
    })
}

fn check_dims(ch: &ChannelSet, v: &CMat, q: &[f64]) -> Result<()> {
    if v.shape() != (ch.antennas(), ch.users()) || q.len() != ch.users() {
        return Err(Error::Dimension(format!(
            "steering {:?} and {} powers for a {}x{} channel",
            v.shape(),
            q.len(),
            ch.antennas(),
            ch.users()
        )));
    }
    if q.iter().any(|x| *x < 0.0) {
        return Err(Error::Dimension("negative power".into()));
    }
    Ok(())
}

/// `|h_k^H v_j|^2` for all pairs.
fn cross_gains(ch: &ChannelSet, v: &CMat) -> Vec<Vec<f64>> {
    let g = ch.matrix().adjoint() * v;
    (0..ch.users()).map(|k| (0..ch.users()).map(|j| g[(k, j)].norm_sqr()).collect()).collect()
}

/// DPC rates: user `order[i]` sees interference only from `order[j]`, `j > i`.
pub fn bc_rates(ch: &ChannelSet, v: &CMat, q: &[f64], order: &[usize]) -> Result<Vec<f64>> {
    check_dims(ch, v, q)?;
    let k = ch.users();
    let mut seen = vec![false; k];
    if order.len() != k || order.iter().any(|&i| i >= k || std::mem::replace(&mut seen[i], true)) {
        return Err(Error::Dimension(format!("{order:?} is not a permutation of {k} users")));
    }
    let g = cross_gains(ch, v);
    let mut rates = vec![0.0; k];
    for (pos, &user) in order.iter().enumerate() {
        let interference: f64 = order[pos + 1..].iter().map(|&j| g[user][j] * q[j]).sum();
        rates[user] = (g[user][user] * q[user] / (1.0 + interference)).ln_1p();
    }
    Ok(rates)
}

/// Linear-beamforming rates: every other user interferes.
pub fn bc_rates_linear(ch: &ChannelSet, v: &CMat, q: &[f64]) -> Result<Vec<f64>> {
    check_dims(ch, v, q)?;
    let g = cross_gains(ch, v);
    Ok((0..ch.users())
        .map(|user| {
            let interference: f64 = (0..ch.users()).filter(|&j| j != user).map(|j| g[user][j] * q[j]).sum();
            (g[user][user] * q[user] / (1.0 + interference)).ln_1p()
        })
        .collect())
}

/// `u_l = tr(Sigma_x Phi_l)` for every constraint.
pub fn constraint_usage(cs: &ConstraintSet, sigma_x: &CMat) -> Vec<f64> {
    cs.constraints().iter().map(|c| real_part_checked(trace_product(sigma_x, &c.phi))).collect()
}

/// Largest factor `<= 1` by which a covariance with the given usages can be
/// scaled to meet every budget.
pub fn feasibility_scale(cs: &ConstraintSet, usage: &[f64]) -> f64 {
    usage
        .iter()
        .zip(cs.budgets())
        .filter(|(u, _)| **u > 0.0)
        .map(|(u, g)| g / u)
        .fold(1.0, f64::min)
}

/// Appends `(I, p_cap)` unless an identity constraint is already present.
pub fn normalize_constraints(cs: &ConstraintSet, m: usize, p_cap: f64) -> Result<ConstraintSet> {
    if !(p_cap > 0.0) {
        return Err(Error::InvalidConfig(format!("power cap {p_cap} must be positive")));
    }
    if cs.sum_power_index().is_some() {
        return Ok(cs.clone());
    }
    if let Some(existing) = cs.antennas() {
        if existing != m {
            return Err(Error::Dimension(format!("constraints are {existing}x{existing}, expected {m}")));
        }
    }
    let mut constraints = cs.constraints().to_vec();
    constraints.push(LinearConstraint::sum_power(m, p_cap));
    ConstraintSet::new(constraints)
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * scale, im * scale)
}

/// i.i.d. `CN(0, 1)` vector.
pub fn random_complex_vector(rng: &mut ChaCha8Rng, m: usize) -> CVec {
    CVec::from_fn(m, |_, _| complex_gaussian(rng))
}

/// Seeded Rayleigh instance: `K` channels with i.i.d. `CN(0,1)` entries and
/// `n_dirs` forbidden directions uniform on the complex unit sphere, each
/// with budget `dir_budget`. Rank-deficient draws are rejected.
pub fn random_instance(
    seed: u64,
    m: usize,
    k: usize,
    n_dirs: usize,
    dir_budget: f64,
) -> Result<(ChannelSet, ConstraintSet)> {
    if k > m {
        return Err(Error::TooManyUsers { users: k, antennas: m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ch = loop {
        let cols: Vec<CVec> = (0..k).map(|_| random_complex_vector(&mut rng, m)).collect();
        match ChannelSet::from_columns(&cols) {
            Ok(ch) => break ch,
            Err(Error::RankDeficient { .. }) => continue,
            Err(e) => return Err(e),
        }
    };
    let constraints = (0..n_dirs)
        .map(|_| {
            let c = loop {
                let c = random_complex_vector(&mut rng, m);
                if c.norm() > 1e-12 {
                    break c;
                }
            };
            LinearConstraint::direction(&c, dir_budget)
        })
        .collect();
    Ok((ch, ConstraintSet::new(constraints)?))
}

/// The reference scenario shape: `M = 4`, `K = 3`, sum power `P = 10` and two
/// forbidden directions with budget `2.5`, normalized (`L = 3`).
pub fn reference_instance(seed: u64) -> Result<(ChannelSet, ConstraintSet, WeightVector)> {
    let (ch, dirs) = random_instance(seed, 4, 3, 2, 2.5)?;
    let cs = normalize_constraints(&dirs, 4, 10.0)?;
    Ok((ch, cs, WeightVector::uniform(3)))
}

/// Unit-norm steering vectors `v_k = t_k / ||t_k||` and powers `||t_k||^2`.
pub fn split_precoder(t: &CMat) -> (CMat, Vec<f64>) {
    let mut v = t.clone();
    let mut q = vec![0.0; t.ncols()];
    for k in 0..t.ncols() {
        let n = t.column(k).norm();
        q[k] = n * n;
        if n > 0.0 {
            v.column_mut(k).unscale_mut(n);
        } else {
            v.column_mut(k).fill(ZERO);
        }
    }
    (v, q)
}
