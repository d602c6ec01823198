//! Market data model: instances, outcomes, solver configuration, the
//! complete-graph instance generator and the JSON instance format.

use std::fs;
use std::ops::{Index, IndexMut};
use std::path::Path;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FppeError, Result, Violation};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
            return Err(FppeError::Dimension(format!(
                "values row {i} has {} entries, expected {cols}",
                r.len()
            )));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.rows).map(move |i| self.data[i * self.cols + j])
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// `n` bidders competing for `m` divisible goods in per-good first-price
/// auctions, each bidder holding a budget shared across all goods.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    values: Matrix,
    budgets: Vec<f64>,
}

impl MarketInstance {
    /// Builds an instance after checking every invariant.
    pub fn new(values: Matrix, budgets: Vec<f64>) -> Result<Self> {
        let inst = Self::new_unchecked(values, budgets)?;
        let violations = validate_instance(&inst);
        if violations.is_empty() {
            Ok(inst)
        } else {
            Err(FppeError::InvalidInstance(violations))
        }
    }

    pub fn from_rows(values: &[Vec<f64>], budgets: &[f64]) -> Result<Self> {
        Self::new(Matrix::from_rows(values)?, budgets.to_vec())
    }

    /// Only checks that the dimensions agree; sign and finiteness are left to
    /// [`validate_instance`].
    pub fn new_unchecked(values: Matrix, budgets: Vec<f64>) -> Result<Self> {
        if values.rows() != budgets.len() {
            return Err(FppeError::Dimension(format!(
                "{} value rows but {} budget entries",
                values.rows(),
                budgets.len()
            )));
        }
        Ok(Self { values, budgets })
    }

    pub fn num_bidders(&self) -> usize {
        self.values.rows()
    }

    pub fn num_goods(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn budget(&self, i: usize) -> f64 {
        self.budgets[i]
    }

    pub fn total_budget(&self) -> f64 {
        self.budgets.iter().sum()
    }

    /// Highest value any bidder places on good `j`.
    pub fn max_value(&self, j: usize) -> f64 {
        self.values.column(j).fold(0.0, f64::max)
    }

    /// Goods that at least one bidder values.
    pub fn valued_goods(&self) -> Vec<usize> {
        (0..self.num_goods()).filter(|&j| self.max_value(j) > 0.0).collect()
    }

    pub(crate) fn into_parts(self) -> (Matrix, Vec<f64>) {
        (self.values, self.budgets)
    }
}

/// Report-style validation: an empty list means every invariant holds.
pub fn validate_instance(inst: &MarketInstance) -> Vec<Violation> {
    let mut out = Vec::new();
    if inst.num_bidders() == 0 {
        out.push(Violation {
            field: "values",
            index: None,
            message: "at least one bidder is required".into(),
        });
    }
    if inst.num_goods() == 0 {
        out.push(Violation {
            field: "values",
            index: None,
            message: "at least one good is required".into(),
        });
    }
    for i in 0..inst.num_bidders() {
        for (j, &v) in inst.values.row(i).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation {
                    field: "values",
                    index: Some((i, Some(j))),
                    message: format!("values must be finite (got {v})"),
                });
            } else if v < 0.0 {
                out.push(Violation {
                    field: "values",
                    index: Some((i, Some(j))),
                    message: format!("values must be nonnegative (got {v})"),
                });
            }
        }
    }
    for (i, &b) in inst.budgets.iter().enumerate() {
        if !(b.is_finite() && b > 0.0) {
            out.push(Violation {
                field: "budgets",
                index: Some((i, None)),
                message: format!("budgets must be strictly positive and finite (got {b})"),
            });
        }
    }
    out
}

/// Complete-graph instance: every bidder values every good, values are
/// i.i.d. uniform on (0, 1) and budgets are uniform on (0, 1) scaled by
/// `budget_scale * m / n`.
pub fn generate_complete_graph(n: usize, m: usize, seed: u64, budget_scale: f64) -> Result<MarketInstance> {
    if n == 0 || m == 0 {
        return Err(FppeError::InvalidArgument(format!(
            "complete-graph instances need n >= 1 and m >= 1 (got n={n}, m={m})"
        )));
    }
    if !(budget_scale.is_finite() && budget_scale > 0.0) {
        return Err(FppeError::InvalidArgument(format!(
            "budget_scale must be positive (got {budget_scale})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Matrix::zeros(n, m);
    for i in 0..n {
        for v in values.row_mut(i) {
            *v = rng.sample(Open01);
        }
    }
    let factor = budget_scale * m as f64 / n as f64;
    let budgets = (0..n).map(|_| rng.sample::<f64, _>(Open01) * factor).collect();
    MarketInstance::new(values, budgets)
}

/// On-disk instance document: `{"values": [[...], ...], "budgets": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub values: Vec<Vec<f64>>,
    pub budgets: Vec<f64>,
}

impl From<&MarketInstance> for InstanceDoc {
    fn from(inst: &MarketInstance) -> Self {
        Self { values: inst.values.to_rows(), budgets: inst.budgets.clone() }
    }
}

impl TryFrom<InstanceDoc> for MarketInstance {
    type Error = FppeError;

    fn try_from(doc: InstanceDoc) -> Result<Self> {
        let values = Matrix::from_rows(&doc.values)?;
        if doc.values.is_empty() {
            // keeps the goods count of an empty document well defined
            return Err(FppeError::Dimension("values has no rows".into()));
        }
        MarketInstance::new(values, doc.budgets)
    }
}

pub fn instance_from_json(text: &str) -> Result<MarketInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    doc.try_into()
}

pub fn instance_to_json(inst: &MarketInstance) -> String {
    serde_json::to_string_pretty(&InstanceDoc::from(inst)).expect("instance serializes")
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<MarketInstance> {
    instance_from_json(&fs::read_to_string(path)?)
}

pub fn save_instance(inst: &MarketInstance, path: impl AsRef<Path>) -> Result<()> {
    let mut text = instance_to_json(inst);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Pacing multipliers with the allocation and prices they induce.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PacingOutcome {
    pub alpha: Vec<f64>,
    #[serde(serialize_with = "serialize_matrix")]
    pub allocation: Matrix,
    pub prices: Vec<f64>,
    pub spend: Vec<f64>,
    pub utility: Vec<f64>,
}

fn serialize_matrix<S: serde::Serializer>(m: &Matrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    m.to_rows().serialize(s)
}

impl PacingOutcome {
    /// Assembles an outcome, deriving spend and utility from `(x, p, v)`.
    pub fn new(inst: &MarketInstance, alpha: Vec<f64>, allocation: Matrix, prices: Vec<f64>) -> Self {
        let (spend, utility) = (0..inst.num_bidders())
            .map(|i| {
                let x = allocation.row(i);
                let spend: f64 = x.iter().zip(&prices).map(|(x, p)| x * p).sum();
                let value: f64 = x.iter().zip(inst.values.row(i)).map(|(x, v)| x * v).sum();
                (spend, value - spend)
            })
            .unzip();
        Self { alpha, allocation, prices, spend, utility }
    }

    pub fn num_bidders(&self) -> usize {
        self.alpha.len()
    }

    pub fn num_goods(&self) -> usize {
        self.prices.len()
    }
}

/// Step-size schedule of the projected subgradient method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed,
    Diminishing,
    /// Halve the step whenever the best objective stalls.
    Adaptive,
}

impl std::str::FromStr for StepRule {
    type Err = FppeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "diminishing" => Ok(Self::Diminishing),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(FppeError::InvalidArgument(format!("unknown step rule `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Absolute bound on the largest equilibrium residual of a certified point.
    pub tol_kkt: f64,
    /// Relative tolerance for treating two paced bids as tied.
    pub tie_epsilon: f64,
    pub seed: u64,
    /// Iterations between attempts to certify the current best price vector.
    pub check_interval: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            step_rule: StepRule::Adaptive,
            tol_kkt: 1e-6,
            tie_epsilon: 1e-6,
            seed: 0,
            check_interval: 50,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol_kkt.is_nan() || self.tol_kkt <= 0.0 {
            return Err(FppeError::InvalidArgument("tol_kkt must be positive".into()));
        }
        if self.tie_epsilon.is_nan() || self.tie_epsilon <= 0.0 {
            return Err(FppeError::InvalidArgument("tie_epsilon must be positive".into()));
        }
        if self.check_interval == 0 {
            return Err(FppeError::InvalidArgument("check_interval must be positive".into()));
        }
        Ok(())
    }
}
