//! Model types, the cumulative-logit link and the conditional density of an
//! observation given the two latent factors.
//!
//! Each manifest variable `l` belongs to one block and loads on that block's
//! factor only. For category `s` the cumulative probability is
//! `P(Z_l <= s | F) = logistic(alpha_s + beta_l * F_block)`, with the top
//! cumulative probability fixed at one.
//!
//! Category codes are 1-based at the public boundary ([`OrdinalDataset::from_codes`],
//! [`cumulative_prob`], [`category_prob`]) and 0-based inside observation
//! records returned by [`OrdinalDataset::row`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub p_x: usize,
    pub p_y: usize,
    pub q: usize,
    pub shared_thresholds: bool,
}

impl ModelConfig {
    pub fn new(p_x: usize, p_y: usize, q: usize, shared_thresholds: bool) -> Result<Self> {
        let cfg = Self {
            p_x,
            p_y,
            q,
            shared_thresholds,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_x == 0 || self.p_y == 0 {
            return Err(Error::InvalidConfig(format!(
                "both blocks need at least one variable (p_x={}, p_y={})",
                self.p_x, self.p_y
            )));
        }
        if self.q < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least two categories, got q={}",
                self.q
            )));
        }
        if self.q > u8::MAX as usize {
            return Err(Error::InvalidConfig(format!("q={} is too large", self.q)));
        }
        Ok(())
    }

    /// Total number of manifest variables.
    pub fn n_vars(&self) -> usize {
        self.p_x + self.p_y
    }

    pub fn block_of(&self, var: usize) -> Block {
        if var < self.p_x {
            Block::X
        } else {
            Block::Y
        }
    }

    /// Number of threshold parameters (`q - 1` per distinct threshold set).
    pub fn n_thresholds(&self) -> usize {
        let sets = if self.shared_thresholds {
            1
        } else {
            self.n_vars()
        };
        sets * (self.q - 1)
    }

    /// Dimension of the free parameter vector: thresholds, loadings, rho.
    pub fn n_params(&self) -> usize {
        self.n_thresholds() + self.n_vars() + 1
    }

    /// Human-readable parameter names in the natural/unconstrained layout.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.n_params());
        if self.shared_thresholds {
            for s in 1..self.q {
                names.push(format!("alpha{s}"));
            }
        } else {
            for l in 0..self.n_vars() {
                for s in 1..self.q {
                    names.push(format!("alpha{s}[{}]", self.var_name(l)));
                }
            }
        }
        for l in 0..self.n_vars() {
            names.push(format!("beta[{}]", self.var_name(l)));
        }
        names.push("rho".to_string());
        names
    }

    fn var_name(&self, l: usize) -> String {
        if l < self.p_x {
            format!("X{}", l + 1)
        } else {
            format!("Y{}", l - self.p_x + 1)
        }
    }
}

/// Threshold parameters, either one sequence shared by every variable or one
/// sequence per variable. Each sequence holds the `q - 1` finite cut points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thresholds {
    Shared(Vec<f64>),
    PerVariable(Vec<Vec<f64>>),
}

impl Thresholds {
    pub fn for_variable(&self, var: usize) -> &[f64] {
        match self {
            Thresholds::Shared(a) => a,
            Thresholds::PerVariable(v) => &v[var],
        }
    }

    /// Offset of variable `var`'s threshold block in the flat layout.
    pub(crate) fn offset(&self, var: usize) -> usize {
        match self {
            Thresholds::Shared(_) => 0,
            Thresholds::PerVariable(v) => var * v[0].len(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        match self {
            Thresholds::Shared(a) => a.clone(),
            Thresholds::PerVariable(v) => v.iter().flatten().copied().collect(),
        }
    }

    fn sets(&self) -> Vec<&[f64]> {
        match self {
            Thresholds::Shared(a) => vec![a.as_slice()],
            Thresholds::PerVariable(v) => v.iter().map(Vec::as_slice).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub thresholds: Thresholds,
    pub loadings_x: Vec<f64>,
    pub loadings_y: Vec<f64>,
    pub rho: f64,
}

impl ParameterSet {
    pub fn p_x(&self) -> usize {
        self.loadings_x.len()
    }

    pub fn p_y(&self) -> usize {
        self.loadings_y.len()
    }

    pub fn n_vars(&self) -> usize {
        self.p_x() + self.p_y()
    }

    pub fn q(&self) -> usize {
        self.thresholds.for_variable(0).len() + 1
    }

    pub fn loading(&self, var: usize) -> f64 {
        if var < self.p_x() {
            self.loadings_x[var]
        } else {
            self.loadings_y[var - self.p_x()]
        }
    }

    pub fn block_of(&self, var: usize) -> Block {
        if var < self.p_x() {
            Block::X
        } else {
            Block::Y
        }
    }

    /// The configuration these parameters are shaped for.
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            p_x: self.p_x(),
            p_y: self.p_y(),
            q: self.q(),
            shared_thresholds: matches!(self.thresholds, Thresholds::Shared(_)),
        }
    }

    /// Checks shape against `config` and the value invariants. The loading sign
    /// convention is not checked here; see [`ParameterSet::canonicalize`].
    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        config.validate()?;
        if self.loadings_x.len() != config.p_x || self.loadings_y.len() != config.p_y {
            return Err(Error::InvalidParams(format!(
                "loadings have shape ({}, {}), expected ({}, {})",
                self.loadings_x.len(),
                self.loadings_y.len(),
                config.p_x,
                config.p_y
            )));
        }
        match (&self.thresholds, config.shared_thresholds) {
            (Thresholds::Shared(_), true) => {}
            (Thresholds::PerVariable(v), false) if v.len() == config.n_vars() => {}
            _ => {
                return Err(Error::InvalidParams(
                    "threshold layout does not match configuration".into(),
                ))
            }
        }
        for set in self.thresholds.sets() {
            if set.len() != config.q - 1 {
                return Err(Error::InvalidParams(format!(
                    "threshold sequence has {} entries, expected {}",
                    set.len(),
                    config.q - 1
                )));
            }
            if set.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidParams("non-finite threshold".into()));
            }
            if set.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParams(format!(
                    "thresholds must be strictly increasing: {set:?}"
                )));
            }
        }
        if self
            .loadings_x
            .iter()
            .chain(&self.loadings_y)
            .any(|b| !b.is_finite())
        {
            return Err(Error::InvalidParams("non-finite loading".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParams(format!(
                "rho must lie in (-1, 1), got {}",
                self.rho
            )));
        }
        Ok(())
    }

    /// Applies the sign convention: each block's mean loading is made
    /// non-negative. Flipping one block also flips `rho`, which leaves the
    /// model's distribution unchanged. Returns whether anything changed.
    pub fn canonicalize(&mut self) -> bool {
        let mut changed = false;
        for block in [Block::X, Block::Y] {
            let loadings = match block {
                Block::X => &mut self.loadings_x,
                Block::Y => &mut self.loadings_y,
            };
            let sum: f64 = loadings.iter().sum();
            if sum < 0.0 {
                loadings.iter_mut().for_each(|b| *b = -*b);
                self.rho = -self.rho;
                changed = true;
            }
        }
        changed
    }

    /// Flat vector in the natural layout: thresholds, X loadings, Y loadings, rho.
    pub fn to_natural(&self) -> Vec<f64> {
        let mut v = self.thresholds.flat();
        v.extend_from_slice(&self.loadings_x);
        v.extend_from_slice(&self.loadings_y);
        v.push(self.rho);
        v
    }

    pub fn from_natural(config: &ModelConfig, v: &[f64]) -> Result<Self> {
        if v.len() != config.n_params() {
            return Err(Error::InvalidParams(format!(
                "parameter vector has length {}, expected {}",
                v.len(),
                config.n_params()
            )));
        }
        let nt = config.n_thresholds();
        let k = config.q - 1;
        let thresholds = if config.shared_thresholds {
            Thresholds::Shared(v[..nt].to_vec())
        } else {
            Thresholds::PerVariable(v[..nt].chunks(k).map(<[f64]>::to_vec).collect())
        };
        let loadings_x = v[nt..nt + config.p_x].to_vec();
        let loadings_y = v[nt + config.p_x..nt + config.n_vars()].to_vec();
        Ok(Self {
            thresholds,
            loadings_x,
            loadings_y,
            rho: v[nt + config.n_vars()],
        })
    }

    /// Inverse of the latent correlation matrix `R`, as `[[a, b], [b, a]]`.
    pub fn r_inverse(&self) -> [[f64; 2]; 2] {
        let d = 1.0 - self.rho * self.rho;
        [[1.0 / d, -self.rho / d], [-self.rho / d, 1.0 / d]]
    }

    pub fn log_det_r(&self) -> f64 {
        (1.0 - self.rho * self.rho).ln()
    }
}

/// Realized values of the two latent factors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentPoint {
    pub f_x: f64,
    pub f_y: f64,
}

impl LatentPoint {
    pub const ORIGIN: LatentPoint = LatentPoint { f_x: 0.0, f_y: 0.0 };

    pub fn new(f_x: f64, f_y: f64) -> Self {
        Self { f_x, f_y }
    }

    pub fn get(&self, block: Block) -> f64 {
        match block {
            Block::X => self.f_x,
            Block::Y => self.f_y,
        }
    }

    pub(crate) fn as_array(&self) -> [f64; 2] {
        [self.f_x, self.f_y]
    }

    pub fn is_finite(&self) -> bool {
        self.f_x.is_finite() && self.f_y.is_finite()
    }
}

/// `n` observation records of `p_x + p_y` ordinal codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrdinalDataset {
    config: ModelConfig,
    // 0-based categories, row-major
    cells: Vec<u8>,
}

impl OrdinalDataset {
    /// Builds a dataset from 1-based category codes.
    pub fn from_codes(config: ModelConfig, rows: &[Vec<usize>]) -> Result<Self> {
        config.validate()?;
        if rows.is_empty() {
            return Err(Error::InvalidData("dataset has no observations".into()));
        }
        let width = config.n_vars();
        let mut cells = Vec::with_capacity(rows.len() * width);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidData(format!(
                    "row {} has {} entries, expected {}",
                    i + 1,
                    row.len(),
                    width
                )));
            }
            for &code in row {
                if code < 1 || code > config.q {
                    return Err(Error::InvalidCategory {
                        category: code,
                        q: config.q,
                    });
                }
                cells.push((code - 1) as u8);
            }
        }
        Ok(Self { config, cells })
    }

    /// Builds a dataset from 0-based records already validated by the caller.
    pub(crate) fn from_zero_based(config: ModelConfig, cells: Vec<u8>) -> Self {
        debug_assert_eq!(cells.len() % config.n_vars(), 0);
        debug_assert!(cells.iter().all(|&c| (c as usize) < config.q));
        Self { config, cells }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Same records under a different configuration of equal shape
    /// (for example switching between shared and per-variable thresholds).
    pub fn with_config(&self, config: ModelConfig) -> Result<Self> {
        if config.n_vars() != self.config.n_vars() || config.q != self.config.q {
            return Err(Error::InvalidConfig(
                "new configuration has a different shape".into(),
            ));
        }
        Ok(Self {
            config,
            cells: self.cells.clone(),
        })
    }

    pub fn n(&self) -> usize {
        self.cells.len() / self.config.n_vars()
    }

    /// 0-based observation record.
    pub fn row(&self, i: usize) -> &[u8] {
        let w = self.config.n_vars();
        &self.cells[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> {
        self.cells.chunks(self.config.n_vars())
    }

    /// Records as 1-based codes.
    pub fn codes(&self) -> Vec<Vec<usize>> {
        self.rows()
            .map(|r| r.iter().map(|&c| c as usize + 1).collect())
            .collect()
    }

    /// Column of 0-based categories for variable `var`.
    pub fn column(&self, var: usize) -> Vec<u8> {
        self.rows().map(|r| r[var]).collect()
    }

    /// Dataset with every code mapped to `q + 1 - z`.
    pub fn reversed(&self) -> Self {
        let top = (self.config.q - 1) as u8;
        Self {
            config: self.config,
            cells: self.cells.iter().map(|&c| top - c).collect(),
        }
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut cells = Vec::with_capacity(indices.len() * self.config.n_vars());
        for &i in indices {
            cells.extend_from_slice(self.row(i));
        }
        Self {
            config: self.config,
            cells,
        }
    }

    /// Same dataset with observation `skip` removed.
    pub fn without(&self, skip: usize) -> Self {
        let idx: Vec<usize> = (0..self.n()).filter(|&i| i != skip).collect();
        self.select(&idx)
    }
}

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(logistic(x))` without overflow or cancellation.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Log of the probability mass between two cuts, `logistic(hi) - logistic(lo)`.
fn log_interval(lo: Option<f64>, hi: Option<f64>) -> f64 {
    match (lo, hi) {
        (None, None) => 0.0,
        (None, Some(h)) => log_logistic(h),
        (Some(l), None) => log_logistic(-l),
        // logistic(h) - logistic(l) = logistic(h) * logistic(-l) * (1 - e^(l - h))
        (Some(l), Some(h)) => log_logistic(h) + log_logistic(-l) + (-(l - h).exp_m1()).ln(),
    }
}

/// Derivatives of `log P(Z_l = k | eta)` with respect to the linear predictor
/// `eta` and the two cut points bounding category `k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LinkTerms {
    pub log_p: f64,
    /// d/d eta
    pub d1: f64,
    /// d2/d eta2 (always negative)
    pub d2: f64,
    /// d3/d eta3
    pub d3: f64,
    /// Index (within the variable's threshold sequence) of the upper / lower cut.
    pub hi: Option<usize>,
    pub lo: Option<usize>,
    pub dlogp_dhi: f64,
    pub dlogp_dlo: f64,
    pub dd1_dhi: f64,
    pub dd1_dlo: f64,
    pub dd2_dhi: f64,
    pub dd2_dlo: f64,
}

impl LinkTerms {
    /// `cuts` are the `q - 1` thresholds, `k` the 0-based category.
    pub fn new(cuts: &[f64], k: usize, eta: f64) -> Self {
        let q = cuts.len() + 1;
        let hi = (k + 1 < q).then_some(k);
        let lo = (k > 0).then(|| k - 1);
        let a_hi = hi.map(|j| cuts[j] + eta);
        let a_lo = lo.map(|j| cuts[j] + eta);

        // u = P(Z <= k), v = P(Z <= k - 1)
        let (u, u_tail) = a_hi.map_or((1.0, 0.0), |a| (logistic(a), logistic(-a)));
        let (v, v_tail) = a_lo.map_or((0.0, 1.0), |a| (logistic(a), logistic(-a)));
        let wu = u * u_tail;
        let wv = v * v_tail;
        // (1 - 2u) written as a difference of tails keeps precision near u = 1
        let su = u_tail - u;
        let sv = v_tail - v;

        let (dlogp_dhi, dlogp_dlo) = match (a_lo, a_hi) {
            (None, None) => (0.0, 0.0),
            (None, Some(_)) => (u_tail, 0.0),
            (Some(_), None) => (0.0, -v),
            (Some(l), Some(h)) => {
                let gap = -(l - h).exp_m1();
                (u_tail / (v_tail * gap), -v / (u * gap))
            }
        };

        Self {
            log_p: log_interval(a_lo, a_hi),
            d1: 1.0 - u - v,
            d2: -(wu + wv),
            d3: -(wu * su + wv * sv),
            hi,
            lo,
            dlogp_dhi,
            dlogp_dlo,
            dd1_dhi: -wu,
            dd1_dlo: -wv,
            dd2_dhi: -wu * su,
            dd2_dlo: -wv * sv,
        }
    }
}

fn check_var(params: &ParameterSet, var: usize) -> Result<()> {
    if var >= params.n_vars() {
        return Err(Error::InvalidVariable {
            index: var,
            count: params.n_vars(),
        });
    }
    Ok(())
}

fn check_category(params: &ParameterSet, s: usize) -> Result<()> {
    if s < 1 || s > params.q() {
        return Err(Error::InvalidCategory {
            category: s,
            q: params.q(),
        });
    }
    Ok(())
}

/// Linear predictor `beta_l * F_block(l)` of variable `var`.
pub(crate) fn linear_predictor(params: &ParameterSet, var: usize, f: &LatentPoint) -> f64 {
    params.loading(var) * f.get(params.block_of(var))
}

/// `P(Z_var <= s | f)` for the 1-based category `s`; exactly 1 for `s = q`.
pub fn cumulative_prob(var: usize, s: usize, f: &LatentPoint, params: &ParameterSet) -> Result<f64> {
    check_var(params, var)?;
    check_category(params, s)?;
    if s == params.q() {
        return Ok(1.0);
    }
    let cuts = params.thresholds.for_variable(var);
    Ok(logistic(cuts[s - 1] + linear_predictor(params, var, f)))
}

/// `P(Z_var = s | f)` for the 1-based category `s`.
pub fn category_prob(var: usize, s: usize, f: &LatentPoint, params: &ParameterSet) -> Result<f64> {
    check_var(params, var)?;
    check_category(params, s)?;
    let cuts = params.thresholds.for_variable(var);
    let eta = linear_predictor(params, var, f);
    let lo = (s > 1).then(|| cuts[s - 2] + eta);
    let hi = (s < params.q()).then(|| cuts[s - 1] + eta);
    Ok(log_interval(lo, hi).exp())
}

/// `sum_l log P(Z_l = z_l | f)` for a 0-based observation record.
pub fn conditional_log_density(record: &[u8], f: &LatentPoint, params: &ParameterSet) -> Result<f64> {
    validate_record(record, params)?;
    Ok(conditional_log_density_unchecked(record, f, params))
}

pub(crate) fn validate_record(record: &[u8], params: &ParameterSet) -> Result<()> {
    if record.len() != params.n_vars() {
        return Err(Error::InvalidData(format!(
            "record has {} entries, expected {}",
            record.len(),
            params.n_vars()
        )));
    }
    if let Some(&bad) = record.iter().find(|&&c| c as usize >= params.q()) {
        return Err(Error::InvalidCategory {
            category: bad as usize + 1,
            q: params.q(),
        });
    }
    Ok(())
}

pub(crate) fn conditional_log_density_unchecked(
    record: &[u8],
    f: &LatentPoint,
    params: &ParameterSet,
) -> f64 {
    record
        .iter()
        .enumerate()
        .map(|(l, &k)| {
            let cuts = params.thresholds.for_variable(l);
            let eta = linear_predictor(params, l, f);
            let k = k as usize;
            let lo = (k > 0).then(|| cuts[k - 1] + eta);
            let hi = (k + 1 < params.q()).then(|| cuts[k] + eta);
            log_interval(lo, hi)
        })
        .sum()
}
