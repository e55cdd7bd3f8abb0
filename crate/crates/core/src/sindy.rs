//! Sparse regression of the KM moment tracks on a library of candidate terms in
//! the state `X` and the goal signal `g`, fitted by stepwise backward elimination.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km::{self, KMSeries};
use crate::mixture::{map_predict, JumpDiffusionParams, StateGrid, SCALE_FLOOR};

/// Default sparsity tolerance for model selection.
pub const EPS_SSR: f64 = 0.1;
/// Relative Gram-Schmidt residual under which a column counts as dependent.
const DEPENDENCE_TOL: f64 = 1e-9;
/// Residuals below this fraction of the target energy are treated as exact.
const RESIDUAL_FLOOR: f64 = 1e-20;

/// One candidate basis function of `(X, g)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    /// `X^x g^g`.
    Monomial { x: u8, g: u8 },
    /// `X - g`.
    Offset,
    /// `|X - g|`.
    AbsOffset,
}

impl Term {
    pub fn eval(&self, x: f64, g: f64) -> f64 {
        match *self {
            Term::Monomial { x: px, g: pg } => x.powi(px as i32) * g.powi(pg as i32),
            Term::Offset => x - g,
            Term::AbsOffset => (x - g).abs(),
        }
    }

    pub fn name(&self) -> String {
        fn factor(sym: &str, p: u8) -> Option<String> {
            match p {
                0 => None,
                1 => Some(sym.to_string()),
                _ => Some(format!("{sym}^{p}")),
            }
        }
        match *self {
            Term::Monomial { x, g } => {
                let parts: Vec<String> = [factor("X", x), factor("g", g)].into_iter().flatten().collect();
                if parts.is_empty() {
                    "1".into()
                } else {
                    parts.join("*")
                }
            }
            Term::Offset => "X-g".into(),
            Term::AbsOffset => "|X-g|".into(),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let t = match name.trim() {
            "1" => Term::Monomial { x: 0, g: 0 },
            "X" => Term::Monomial { x: 1, g: 0 },
            "g" => Term::Monomial { x: 0, g: 1 },
            "X^2" => Term::Monomial { x: 2, g: 0 },
            "X*g" => Term::Monomial { x: 1, g: 1 },
            "g^2" => Term::Monomial { x: 0, g: 2 },
            "X-g" => Term::Offset,
            "|X-g|" => Term::AbsOffset,
            other => return Err(Error::invalid(format!("unknown library term {other:?}"))),
        };
        Ok(t)
    }
}

/// Ordered set of named basis terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionLibrary {
    pub terms: Vec<Term>,
}

impl FunctionLibrary {
    /// All monomials in `X` and `g` up to total `degree`, ordered by degree then
    /// by descending power of `X`; `cross` keeps the mixed terms.
    pub fn polynomial(degree: u8, cross: bool) -> Self {
        let mut terms = Vec::new();
        for d in 0..=degree {
            for px in (0..=d).rev() {
                let pg = d - px;
                if !cross && px > 0 && pg > 0 {
                    continue;
                }
                terms.push(Term::Monomial { x: px, g: pg });
            }
        }
        Self { terms }
    }

    /// `{1, X, g, X^2, X*g, g^2}`.
    pub fn default2() -> Self {
        Self::polynomial(2, true)
    }

    /// `{1, X, g}`.
    pub fn linear() -> Self {
        Self::polynomial(1, true)
    }

    /// Appends a custom term (rejected if a term of the same name exists).
    pub fn with_term(mut self, t: Term) -> Result<Self> {
        if self.terms.iter().any(|e| e.name() == t.name()) {
            return Err(Error::invalid(format!("duplicate library term {}", t.name())));
        }
        self.terms.push(t);
        Ok(self)
    }

    /// `default2`, `linear`, or a comma-separated term list such as `1,X,X-g`.
    pub fn from_name(spec: &str) -> Result<Self> {
        match spec {
            "default2" | "default" => Ok(Self::default2()),
            "linear" | "default1" => Ok(Self::linear()),
            list => {
                let mut lib = Self { terms: vec![] };
                for name in list.split(',') {
                    lib = lib.with_term(Term::parse(name)?)?;
                }
                if lib.terms.is_empty() {
                    return Err(Error::invalid("empty library"));
                }
                Ok(lib)
            }
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(Term::name).collect()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn row(&self, x: f64, g: f64) -> Vec<f64> {
        self.terms.iter().map(|t| t.eval(x, g)).collect()
    }
}

/// Design matrix with named columns.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl Design {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Keeps only the listed columns.
    pub fn select(&self, cols: &[usize]) -> Design {
        Design {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            matrix: self.matrix.select_columns(cols),
        }
    }

    /// Splits the columns into a linearly independent prefix-greedy set and the
    /// rest (each dependent on earlier kept columns).
    pub fn independent_columns(&self) -> (Vec<usize>, Vec<usize>) {
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let (mut keep, mut drop) = (Vec::new(), Vec::new());
        for j in 0..self.matrix.ncols() {
            let col = self.matrix.column(j).into_owned();
            let norm = col.norm();
            if !(norm > 0.0) {
                drop.push(j);
                continue;
            }
            let mut v = col / norm;
            // two passes of modified Gram-Schmidt for stability
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&v);
                    v -= b * c;
                }
            }
            let r = v.norm();
            if r < DEPENDENCE_TOL {
                drop.push(j);
            } else {
                basis.push(v / r);
                keep.push(j);
            }
        }
        (keep, drop)
    }
}

/// Evaluates the library at each `(x[i], g[i])`.
pub fn build_library(x: &[f64], g: &[f64], lib: &FunctionLibrary) -> Result<Design> {
    if x.len() != g.len() {
        return Err(Error::invalid(format!(
            "state and goal series differ in length ({} vs {})",
            x.len(),
            g.len()
        )));
    }
    let mut m = DMatrix::zeros(x.len(), lib.len());
    for (i, (&xi, &gi)) in x.iter().zip(g).enumerate() {
        for (j, t) in lib.terms.iter().enumerate() {
            let v = t.eval(xi, gi);
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "library term {} is not finite at row {i}",
                    t.name()
                )));
            }
            m[(i, j)] = v;
        }
    }
    Ok(Design {
        names: lib.names(),
        matrix: m,
    })
}

/// One backward-elimination step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliminationStep {
    pub removed: String,
    /// Residual sum of squares after the removal.
    pub residual: f64,
}

/// A sparse linear model of one target over a library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SindyModel {
    pub target: String,
    /// Column names of the design the model was fitted on.
    pub terms: Vec<String>,
    /// One coefficient per term; inactive terms are exactly zero.
    pub coefficients: Vec<f64>,
    pub active: Vec<bool>,
    /// Training residual sum of squares of the selected model.
    pub residual: f64,
    /// Removals from the full model down to the selected one.
    pub path: Vec<EliminationStep>,
    /// Residual of every model along the full elimination, largest first.
    pub path_residuals: Vec<f64>,
    /// Terms dropped before fitting as linearly dependent on earlier terms.
    #[serde(default)]
    pub dependent: Vec<String>,
}

impl SindyModel {
    /// Prediction for one row of term values.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        row.iter()
            .zip(&self.coefficients)
            .filter(|(_, c)| **c != 0.0)
            .map(|(v, c)| c * v)
            .sum()
    }

    pub fn active_terms(&self) -> Vec<(String, f64)> {
        self.terms
            .iter()
            .zip(&self.coefficients)
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|((t, c), _)| (t.clone(), *c))
            .collect()
    }

    pub fn coefficient(&self, name: &str) -> f64 {
        self.terms
            .iter()
            .position(|n| n == name)
            .map_or(0.0, |j| self.coefficients[j])
    }
}

fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, f64) {
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rhs = q.transpose() * y;
    let xi = r.solve_upper_triangular(&rhs).unwrap_or_else(|| DVector::zeros(a.ncols()));
    let res = (y - a * &xi).norm_squared();
    (xi, res)
}

/// Stepwise sparse regression with tolerance `eps` (see [`EPS_SSR`]).
///
/// Columns are scaled to unit norm, the full least-squares model is fitted, and
/// the active term with the smallest scaled coefficient is removed and the rest
/// refitted until one term remains. The sparsest model with residual within
/// `(1 + eps)` of the path minimum is returned.
pub fn ssr_fit(design: &Design, target: &[f64], name: &str, eps: f64) -> Result<SindyModel> {
    let (n, p) = design.matrix.shape();
    if target.len() != n {
        return Err(Error::invalid("target length differs from design rows"));
    }
    if p == 0 {
        return Err(Error::invalid("empty design"));
    }
    if n < 2 * p {
        return Err(Error::TooFewSamples { need: 2 * p, got: n });
    }
    if let Some(i) = target.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("target not finite at row {i}")));
    }
    let (_, dependent) = design.independent_columns();
    if !dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: dependent.iter().map(|&j| design.names[j].clone()).collect(),
        });
    }
    let norms: Vec<f64> = (0..p).map(|j| design.matrix.column(j).norm()).collect();
    let mut scaled = design.matrix.clone();
    for (j, nj) in norms.iter().enumerate() {
        scaled.column_mut(j).scale_mut(1.0 / nj);
    }
    let y = DVector::from_column_slice(target);

    let mut active: Vec<usize> = (0..p).collect();
    let mut models: Vec<(Vec<usize>, DVector<f64>, f64)> = Vec::with_capacity(p);
    let mut removed: Vec<usize> = Vec::new();
    loop {
        let a = scaled.select_columns(&active);
        let (xi, res) = least_squares(&a, &y);
        models.push((active.clone(), xi.clone(), res));
        if active.len() == 1 {
            break;
        }
        let drop = xi
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(k, _)| k)
            .expect("non-empty");
        removed.push(active.remove(drop));
    }

    let min_res = models.iter().map(|m| m.2).fold(f64::INFINITY, f64::min);
    let threshold = (1.0 + eps) * min_res + RESIDUAL_FLOOR * y.norm_squared();
    let chosen = models
        .iter()
        .rposition(|m| m.2 <= threshold)
        .expect("the minimum satisfies the threshold");
    let (ref act, ref xi, res) = models[chosen];

    let mut coefficients = vec![0.0; p];
    let mut mask = vec![false; p];
    for (k, &j) in act.iter().enumerate() {
        coefficients[j] = xi[k] / norms[j];
        mask[j] = true;
    }
    let path = removed[..chosen]
        .iter()
        .zip(&models[1..=chosen])
        .map(|(&j, m)| EliminationStep {
            removed: design.names[j].clone(),
            residual: m.2,
        })
        .collect();
    Ok(SindyModel {
        target: name.to_string(),
        terms: design.names.clone(),
        coefficients,
        active: mask,
        residual: res,
        path,
        path_residuals: models.iter().map(|m| m.2).collect(),
        dependent: vec![],
    })
}

/// Fits after discarding columns that are linearly dependent on earlier ones
/// (for example `g` when the goal signal is constant). The discarded terms keep
/// zero coefficients and are listed in [`SindyModel::dependent`].
pub fn ssr_fit_pruned(design: &Design, target: &[f64], name: &str, eps: f64) -> Result<SindyModel> {
    let (keep, drop) = design.independent_columns();
    if keep.is_empty() {
        return Err(Error::RankDeficient {
            columns: design.names.clone(),
        });
    }
    let sub = ssr_fit(&design.select(&keep), target, name, eps)?;
    let p = design.names.len();
    let mut coefficients = vec![0.0; p];
    let mut active = vec![false; p];
    for (k, &j) in keep.iter().enumerate() {
        coefficients[j] = sub.coefficients[k];
        active[j] = sub.active[k];
    }
    Ok(SindyModel {
        terms: design.names.clone(),
        coefficients,
        active,
        dependent: drop.iter().map(|&j| design.names[j].clone()).collect(),
        ..sub
    })
}

/// SINDy models of the four moment tracks for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmModels {
    pub dim: usize,
    pub dt: f64,
    pub library: FunctionLibrary,
    pub m1: SindyModel,
    pub m2: SindyModel,
    pub m4: SindyModel,
    pub m6: SindyModel,
    /// Jump mean used in prediction; zero unless the relaxed variant is enabled.
    #[serde(default)]
    pub mu_beta: f64,
}

/// Parameters derived from the moment models at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub params: JumpDiffusionParams,
    /// The diffusion variance was non-positive and replaced by the floor.
    pub variance_floored: bool,
}

impl KmModels {
    /// Evaluates the moment models at `(x, g)` and converts them to
    /// jump-diffusion parameters with the same clamps as the KM estimator.
    pub fn params_at(&self, x: f64, g: f64) -> DerivedParams {
        let dt = self.dt;
        let row = self.library.row(x, g);
        let m1 = self.m1.predict_row(&row);
        let m2 = self.m2.predict_row(&row).max(0.0);
        let m4 = self.m4.predict_row(&row).max(0.0);
        let m6 = self.m6.predict_row(&row).max(0.0);
        // M2 carries the squared drift as m1^2 dt; remove it to get the spread
        let v2 = (m2 - m1 * m1 * dt).max(0.0);
        let (sb2, mut lambda) = km::invert_jump_moments(v2, m4, m6, dt);
        let mut sg2 = v2 - lambda * sb2;
        if sg2 < 0.0 {
            lambda = v2 / sb2;
            sg2 = 0.0;
        }
        let floor = SCALE_FLOOR * SCALE_FLOOR;
        let variance_floored = !(sg2 > floor);
        let sg2 = sg2.max(floor);
        DerivedParams {
            params: JumpDiffusionParams {
                mu_g: m1 - lambda * self.mu_beta,
                sigma_g: sg2.sqrt(),
                lambda,
                mu_beta: self.mu_beta,
                sigma_beta: sb2.sqrt(),
            },
            variance_floored,
        }
    }
}

/// Fits one SSR model per moment track.
///
/// `x[i]` and `g[i]` are the state and goal at the start of increment `i`, so
/// both must have `kms.len()` entries. Raw (unsmoothed) tracks give unbiased
/// conditional means; smoothed tracks lag the state.
pub fn fit_km_models(
    kms: &KMSeries,
    x: &[f64],
    g: &[f64],
    lib: &FunctionLibrary,
    eps: f64,
) -> Result<KmModels> {
    if x.len() != kms.len() || g.len() != kms.len() {
        return Err(Error::invalid(format!(
            "{} moments but {} states and {} goals",
            kms.len(),
            x.len(),
            g.len()
        )));
    }
    let design = build_library(x, g, lib)?;
    let fit = |track: &[f64], name: &str| ssr_fit_pruned(&design, track, name, eps);
    Ok(KmModels {
        dim: kms.dim,
        dt: kms.dt,
        library: lib.clone(),
        m1: fit(&kms.m1, "M1")?,
        m2: fit(&kms.m2, "M2")?,
        m4: fit(&kms.m4, "M4")?,
        m6: fit(&kms.m6, "M6")?,
        mu_beta: 0.0,
    })
}

/// MAP next state from SINDy-derived parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SindyPrediction {
    pub x_t: f64,
    pub params: JumpDiffusionParams,
    pub variance_floored: bool,
}

pub fn sindy_step(models: &KmModels, x_s: f64, g: f64, tau: f64, cells: usize) -> Result<SindyPrediction> {
    let d = models.params_at(x_s, g);
    let grid = StateGrid::around(&d.params, x_s, tau, cells);
    Ok(SindyPrediction {
        x_t: map_predict(&d.params, x_s, tau, &grid)?,
        params: d.params,
        variance_floored: d.variance_floored,
    })
}
