//! Periodic coefficient fields on the unit torus, the finite-atom jump
//! measure, and the scale regime (epsilon, delta_epsilon).
//!
//! All fields are 1-periodic in every coordinate; evaluation reduces the
//! argument to [0,1)^d first, so integer shifts of the argument cannot
//! change the result.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default torus sampling resolution per coordinate for assumption checks.
pub const DEFAULT_GRID_PER_AXIS: usize = 32;
/// Smallest admissible diffusion eigenvalue: below this the field counts as degenerate.
pub const DEFAULT_ELLIPTICITY_FLOOR: f64 = 1e-8;
/// Lipschitz/growth ratios above this cap fail the regularity check.
pub const DEFAULT_RATIO_CAP: f64 = 1e6;

/// Reduce every coordinate to [0,1). Exact for arguments where x + n is
/// representable, which is what makes shift invariance bitwise testable.
pub fn reduce_torus(x: &DVector<f64>) -> DVector<f64> {
    x.map(|v| {
        let r = v - v.floor();
        if r >= 1.0 {
            0.0
        } else {
            r
        }
    })
}

/// Scalar component of a coefficient field, 1-periodic by construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Constant { value: f64 },
    /// offset + amplitude * sin(2 pi <frequency, x> + phase). Integer
    /// frequencies keep the field 1-periodic.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        frequency: Vec<i32>,
        phase: f64,
    },
    /// frac(<frequency, x>): 1-periodic but discontinuous across the torus
    /// seam. Exists so the regularity check has something to reject.
    Sawtooth { frequency: Vec<i32> },
    /// Uniform-grid table on [0,1)^d, periodic multilinear interpolation.
    Table(TabulatedField),
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField::Constant { value: 0.0 }
    }

    /// Evaluate at a point already reduced to [0,1)^d.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Sinusoid {
                offset,
                amplitude,
                frequency,
                phase,
            } => {
                let mut s = 0.0;
                for (i, f) in frequency.iter().enumerate() {
                    s += f64::from(*f) * x[i];
                }
                offset + amplitude * (2.0 * std::f64::consts::PI * s + phase).sin()
            }
            ScalarField::Sawtooth { frequency } => {
                let mut s = 0.0;
                for (i, f) in frequency.iter().enumerate() {
                    s += f64::from(*f) * x[i];
                }
                s - s.floor()
            }
            ScalarField::Table(t) => t.eval(x),
        }
    }
}

/// Scalar values tabulated on the uniform grid { j/n : 0 <= j < n } per axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedField {
    /// Nodes per axis; node j of axis i sits at j / shape[i].
    pub shape: Vec<usize>,
    /// Row-major, last axis fastest.
    pub values: Vec<f64>,
}

impl TabulatedField {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&n| n == 0) {
            return Err(Error::Input("tabulated field needs a nonempty shape".into()));
        }
        let len: usize = shape.iter().product();
        if values.len() != len {
            return Err(Error::Input(format!(
                "tabulated field expects {} values for shape {:?}, got {}",
                len,
                shape,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("tabulated field has non-finite values".into()));
        }
        Ok(TabulatedField { shape, values })
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut f = 0;
        for (i, &j) in idx.iter().enumerate() {
            f = f * self.shape[i] + j;
        }
        f
    }

    /// Periodic multilinear interpolation; x must lie in [0,1)^d.
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        let d = self.shape.len();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for i in 0..d {
            let n = self.shape[i];
            let u = x[i] * n as f64;
            let j = (u.floor() as usize).min(n - 1);
            base[i] = j;
            frac[i] = u - j as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for i in 0..d {
                if corner >> i & 1 == 1 {
                    idx[i] = (base[i] + 1) % self.shape[i];
                    w *= frac[i];
                } else {
                    idx[i] = base[i];
                    w *= 1.0 - frac[i];
                }
            }
            if w != 0.0 {
                acc += w * self.values[self.flat_index(&idx)];
            }
        }
        acc
    }
}

/// d-vector of scalar components.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorField(pub Vec<ScalarField>);

impl VectorField {
    pub fn zero(d: usize) -> Self {
        VectorField(vec![ScalarField::zero(); d])
    }

    pub fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.0.len(), self.0.iter().map(|f| f.eval(x)))
    }
}

/// Row-major d x d matrix of scalar components.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixField {
    pub rows: Vec<Vec<ScalarField>>,
}

impl MatrixField {
    pub fn identity(d: usize) -> Self {
        let rows = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| ScalarField::Constant {
                        value: if i == j { 1.0 } else { 0.0 },
                    })
                    .collect()
            })
            .collect();
        MatrixField { rows }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let d = diag.len();
        let rows = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| ScalarField::Constant {
                        value: if i == j { diag[i] } else { 0.0 },
                    })
                    .collect()
            })
            .collect();
        MatrixField { rows }
    }

    /// Isotropic scalar profile: s(x) * I.
    pub fn isotropic(d: usize, profile: ScalarField) -> Self {
        let rows = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        if i == j {
                            profile.clone()
                        } else {
                            ScalarField::zero()
                        }
                    })
                    .collect()
            })
            .collect();
        MatrixField { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.rows.len();
        DMatrix::from_fn(d, d, |i, j| self.rows[i][j].eval(x))
    }

    /// Column i as a vector field value; used by the regularity check, which
    /// treats each sigma column as one Lipschitz test function.
    pub fn column_at(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let d = self.rows.len();
        DVector::from_iterator(d, (0..d).map(|r| self.rows[r][i].eval(x)))
    }
}

/// Jump amplitude k(x, y); x lives on the torus, y is a mark of nu.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpKernel {
    Zero,
    /// k(x, y) = y.
    Mark,
    /// k(x, y) = s(x) * y.
    ScaledMark { scale: ScalarField },
    /// x-independent table keyed by mark; marks must match the nu atoms exactly.
    MarkTable {
        marks: Vec<Vec<f64>>,
        values: Vec<Vec<f64>>,
    },
}

impl JumpKernel {
    /// Evaluate at a reduced x and a mark y.
    pub fn eval(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            JumpKernel::Zero => Ok(DVector::zeros(y.len())),
            JumpKernel::Mark => Ok(y.clone()),
            JumpKernel::ScaledMark { scale } => Ok(y * scale.eval(x)),
            JumpKernel::MarkTable { marks, values } => {
                for (m, v) in marks.iter().zip(values.iter()) {
                    if m.len() == y.len() && m.iter().zip(y.iter()).all(|(a, b)| a == b) {
                        return Ok(DVector::from_column_slice(v));
                    }
                }
                Err(Error::Input(format!(
                    "jump kernel table has no entry for mark {:?}",
                    y.as_slice()
                )))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, JumpKernel::Zero)
    }
}

/// One atom of the jump measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuAtom {
    pub mark: Vec<f64>,
    pub mass: f64,
}

/// Finite-atom jump measure nu = sum_j mass_j * delta_{mark_j}. The finite
/// atom count makes every nu-integral an exact sum, including the
/// square-integrability condition near the origin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevyMeasure {
    atoms: Vec<NuAtom>,
}

impl LevyMeasure {
    pub fn new(atoms: Vec<NuAtom>) -> Result<Self> {
        for a in &atoms {
            if !a.mass.is_finite() || a.mass <= 0.0 {
                return Err(Error::Input(format!("atom mass must be finite and > 0, got {}", a.mass)));
            }
            if a.mark.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input("atom mark has non-finite coordinates".into()));
            }
        }
        Ok(LevyMeasure { atoms })
    }

    pub fn empty() -> Self {
        LevyMeasure { atoms: Vec::new() }
    }

    pub fn atoms(&self) -> &[NuAtom] {
        &self.atoms
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn mark(&self, j: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.atoms[j].mark)
    }
}

/// Field selector for the generic evaluation entry point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSelector {
    /// Diffusion matrix sigma.
    Sigma,
    /// Fast drift b (enters the dynamics with prefactor epsilon/delta).
    FastDrift,
    /// Order-one drift c.
    Drift,
    /// Jump amplitude k; requires a mark.
    Jump,
}

#[derive(Debug, Clone)]
pub enum FieldValue {
    Vector(DVector<f64>),
    Matrix(DMatrix<f64>),
}

/// The coefficient bundle (sigma, b, c, k) of the dynamics, all 1-periodic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientField {
    pub dimension: usize,
    pub sigma: MatrixField,
    pub b: VectorField,
    pub c: VectorField,
    pub k: JumpKernel,
    /// Degeneracy threshold used by the ellipticity check.
    pub ellipticity_floor: f64,
}

impl CoefficientField {
    pub fn new(sigma: MatrixField, b: VectorField, c: VectorField, k: JumpKernel) -> Result<Self> {
        let d = sigma.dim();
        if d == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        if sigma.rows.iter().any(|r| r.len() != d) {
            return Err(Error::Input("sigma must be square".into()));
        }
        if b.0.len() != d || c.0.len() != d {
            return Err(Error::Input("drift fields must have the state dimension".into()));
        }
        Ok(CoefficientField {
            dimension: d,
            sigma,
            b,
            c,
            k,
            ellipticity_floor: DEFAULT_ELLIPTICITY_FLOOR,
        })
    }

    /// sigma = I, b = c = 0, no jump amplitude. The constant-coefficient
    /// reference model with Gaussian noise only.
    pub fn gaussian(d: usize) -> Self {
        CoefficientField::new(
            MatrixField::identity(d),
            VectorField::zero(d),
            VectorField::zero(d),
            JumpKernel::Zero,
        )
        .expect("static construction")
    }

    /// Constant diagonal sigma.
    pub fn anisotropic(diag: &[f64]) -> Self {
        let d = diag.len();
        CoefficientField::new(
            MatrixField::diagonal(diag),
            VectorField::zero(d),
            VectorField::zero(d),
            JumpKernel::Zero,
        )
        .expect("static construction")
    }

    /// sigma = I with c_1(x) = amplitude * sin(2 pi x_1).
    pub fn periodic_drift(d: usize, amplitude: f64) -> Self {
        let mut c = vec![ScalarField::zero(); d];
        let mut freq = vec![0i32; d];
        freq[0] = 1;
        c[0] = ScalarField::Sinusoid {
            offset: 0.0,
            amplitude,
            frequency: freq,
            phase: 0.0,
        };
        CoefficientField::new(
            MatrixField::identity(d),
            VectorField::zero(d),
            VectorField(c),
            JumpKernel::Zero,
        )
        .expect("static construction")
    }

    /// sigma = (base + amplitude * sin(2 pi x_1)) I; requires base > |amplitude|
    /// to stay elliptic.
    pub fn oscillating_sigma(d: usize, base: f64, amplitude: f64) -> Self {
        let mut freq = vec![0i32; d];
        freq[0] = 1;
        let profile = ScalarField::Sinusoid {
            offset: base,
            amplitude,
            frequency: freq,
            phase: 0.0,
        };
        CoefficientField::new(
            MatrixField::isotropic(d, profile),
            VectorField::zero(d),
            VectorField::zero(d),
            JumpKernel::Zero,
        )
        .expect("static construction")
    }

    pub fn with_jump(mut self, k: JumpKernel) -> Self {
        self.k = k;
        self
    }

    pub fn with_fast_drift(mut self, b: VectorField) -> Self {
        self.b = b;
        self
    }

    pub fn with_drift(mut self, c: VectorField) -> Self {
        self.c = c;
        self
    }

    pub fn with_ellipticity_floor(mut self, floor: f64) -> Self {
        self.ellipticity_floor = floor;
        self
    }

    fn check_finite(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Input(format!(
                "point has dimension {}, field has {}",
                x.len(),
                self.dimension
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite evaluation point".into()));
        }
        Ok(())
    }

    pub fn sigma_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_finite(x)?;
        Ok(self.sigma.eval(&reduce_torus(x)))
    }

    /// a = sigma sigma^T.
    pub fn a_at(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let s = self.sigma_at(x)?;
        Ok(&s * s.transpose())
    }

    pub fn b_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_finite(x)?;
        Ok(self.b.eval(&reduce_torus(x)))
    }

    pub fn c_at(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_finite(x)?;
        Ok(self.c.eval(&reduce_torus(x)))
    }

    pub fn k_at(&self, x: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_finite(x)?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite jump mark".into()));
        }
        self.k.eval(&reduce_torus(x), y)
    }

    /// Mean jump amplitude kbar(x) = sum_j mass_j k(x, mark_j).
    pub fn kbar_at(&self, x: &DVector<f64>, nu: &LevyMeasure) -> Result<DVector<f64>> {
        let mut acc = DVector::zeros(self.dimension);
        if self.k.is_zero() {
            return Ok(acc);
        }
        for atom in nu.atoms() {
            let y = DVector::from_column_slice(&atom.mark);
            acc += self.k_at(x, &y)? * atom.mass;
        }
        Ok(acc)
    }
}

/// Generic evaluation entry point used by the CLI; the mark is required for
/// the jump kernel and ignored otherwise.
pub fn eval_field(
    field: &CoefficientField,
    which: FieldSelector,
    x: &DVector<f64>,
    y: Option<&DVector<f64>>,
) -> Result<FieldValue> {
    match which {
        FieldSelector::Sigma => Ok(FieldValue::Matrix(field.sigma_at(x)?)),
        FieldSelector::FastDrift => Ok(FieldValue::Vector(field.b_at(x)?)),
        FieldSelector::Drift => Ok(FieldValue::Vector(field.c_at(x)?)),
        FieldSelector::Jump => {
            let y = y.ok_or_else(|| Error::Input("jump kernel needs a mark argument".into()))?;
            Ok(FieldValue::Vector(field.k_at(x, y)?))
        }
    }
}

/// (total mass of nu, kbar(x)); both are exact finite sums.
pub fn nu_total_and_mean_jump(
    nu: &LevyMeasure,
    field: &CoefficientField,
    x: &DVector<f64>,
) -> Result<(f64, DVector<f64>)> {
    Ok((nu.total_mass(), field.kbar_at(x, nu)?))
}

/// Uniform sampling grid { j/n }^d over the torus.
#[derive(Debug, Clone, Copy)]
pub struct TorusGrid {
    pub dimension: usize,
    pub per_axis: usize,
}

impl TorusGrid {
    pub fn new(dimension: usize, per_axis: usize) -> Self {
        TorusGrid { dimension, per_axis }
    }

    pub fn len(&self) -> usize {
        self.per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> impl Iterator<Item = DVector<f64>> + '_ {
        let d = self.dimension;
        let n = self.per_axis;
        (0..self.len()).map(move |mut flat| {
            let mut x = DVector::zeros(d);
            for i in (0..d).rev() {
                x[i] = (flat % n) as f64 / n as f64;
                flat /= n;
            }
            x
        })
    }
}

/// Sampled ellipticity constant: min over the grid of lambda_min(a(x)).
/// Errors with the offending point when the minimum dips to the floor.
pub fn ellipticity_kappa(field: &CoefficientField, grid: &TorusGrid) -> Result<f64> {
    if grid.dimension != field.dimension || grid.per_axis == 0 {
        return Err(Error::Input("grid does not match the field dimension".into()));
    }
    let mut kappa = f64::INFINITY;
    let mut arg = DVector::zeros(field.dimension);
    for x in grid.points() {
        let a = field.a_at(&x)?;
        let eig = a.symmetric_eigen();
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if lmin < kappa {
            kappa = lmin;
            arg.copy_from(&x);
        }
    }
    if !kappa.is_finite() || kappa <= field.ellipticity_floor {
        return Err(Error::Assumption {
            name: "uniform_ellipticity",
            detail: format!(
                "lambda_min(sigma sigma^T) = {:.3e} at x = {:?} is at or below the floor {:.1e}",
                kappa,
                arg.as_slice(),
                field.ellipticity_floor
            ),
        });
    }
    Ok(kappa)
}

/// Result of the Lipschitz/growth regularity check.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    /// Largest sampled ratio (||zeta(x') - zeta(x)|| + sum_j w_j ||k(x',y_j) - k(x,y_j)||) / ||x' - x||.
    pub lipschitz_ratio_max: f64,
    /// Largest sampled ratio (||zeta(x)||^2 + sum_j w_j ||k(x,y_j)||^2) / (1 + ||x||^2).
    pub growth_ratio_max: f64,
    /// Cap the ratios were compared against.
    pub ratio_cap: f64,
    pub pass: bool,
}

/// Sampled Lipschitz and growth constants over the pair set, with the jump
/// term folded in as its exact nu-sum. A seam discontinuity shows up as a
/// ratio that blows past the cap once the pair set contains tight
/// cross-seam pairs.
pub fn verify_h2(
    field: &CoefficientField,
    nu: &LevyMeasure,
    pairs: &[(DVector<f64>, DVector<f64>)],
    ratio_cap: f64,
) -> Result<RegularityReport> {
    let mut lip: f64 = 0.0;
    let mut growth: f64 = 0.0;
    for (x, xp) in pairs {
        let dist = (xp - x).norm();
        if dist == 0.0 {
            return Err(Error::Input("regularity pair with coincident points".into()));
        }
        let mut jump_diff = 0.0;
        let mut jump_sq = 0.0;
        if !field.k.is_zero() {
            for atom in nu.atoms() {
                let y = DVector::from_column_slice(&atom.mark);
                let kx = field.k_at(x, &y)?;
                let kxp = field.k_at(xp, &y)?;
                jump_diff += atom.mass * (&kxp - &kx).norm();
                jump_sq += atom.mass * kx.norm_squared();
            }
        }
        let d = field.dimension;
        let xr = reduce_torus(x);
        let xpr = reduce_torus(xp);
        let mut zeta_pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(d + 2);
        for i in 0..d {
            zeta_pairs.push((field.sigma.column_at(i, &xr), field.sigma.column_at(i, &xpr)));
        }
        zeta_pairs.push((field.b.eval(&xr), field.b.eval(&xpr)));
        zeta_pairs.push((field.c.eval(&xr), field.c.eval(&xpr)));
        for (zx, zxp) in &zeta_pairs {
            let ratio = ((zxp - zx).norm() + jump_diff) / dist;
            lip = lip.max(ratio);
            let g = (zx.norm_squared() + jump_sq) / (1.0 + x.norm_squared());
            growth = growth.max(g);
        }
    }
    let pass = lip.is_finite() && growth.is_finite() && lip <= ratio_cap && growth <= ratio_cap;
    Ok(RegularityReport {
        lipschitz_ratio_max: lip,
        growth_ratio_max: growth,
        ratio_cap,
        pass,
    })
}

/// Deterministic pair set for the regularity check: seeded bulk pairs at
/// moderate separations plus cross-seam pairs at separations down to 1e-7,
/// which is what exposes seam discontinuities.
pub fn regularity_pairs(dimension: usize, bulk: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(bulk + 4 * dimension);
    for _ in 0..bulk {
        let x = DVector::from_fn(dimension, |_, _| rng.random::<f64>());
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let mut dir = DVector::from_fn(dimension, |_, _| rng.random::<f64>() - 0.5);
        if dir.norm() == 0.0 {
            dir[0] = 1.0;
        }
        dir /= dir.norm();
        pairs.push((x.clone(), &x + dir * scale));
    }
    for axis in 0..dimension {
        for &h in &[1e-2, 1e-4, 1e-6, 1e-7] {
            let mut x = DVector::from_element(dimension, 0.25);
            let mut xp = x.clone();
            x[axis] = 1.0 - h / 2.0;
            xp[axis] = 1.0 + h / 2.0;
            pairs.push((x, xp));
        }
    }
    pairs
}

/// The running scales: epsilon and the slow spatial scale delta = delta_eps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScaleRegime {
    pub epsilon: f64,
    pub delta: f64,
}

impl ScaleRegime {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(delta > 0.0) || !epsilon.is_finite() || !delta.is_finite() {
            return Err(Error::Input(format!(
                "scales must be positive and finite, got epsilon = {epsilon}, delta = {delta}"
            )));
        }
        Ok(ScaleRegime { epsilon, delta })
    }

    /// epsilon / delta, the prefactor of the fast drift in the dynamics.
    pub fn eps_over_delta(&self) -> f64 {
        self.epsilon / self.delta
    }
}

/// Declared functional form of delta_eps.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegimeLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl Default for RegimeLaw {
    /// delta = sqrt(epsilon), the reference scale-separated regime.
    fn default() -> Self {
        RegimeLaw { coeff: 1.0, exponent: 0.5 }
    }
}

impl RegimeLaw {
    pub fn delta(&self, epsilon: f64) -> f64 {
        self.coeff * epsilon.powf(self.exponent)
    }

    pub fn regime(&self, epsilon: f64) -> Result<ScaleRegime> {
        ScaleRegime::new(epsilon, self.delta(epsilon))
    }

    /// Scale separation requires delta_eps / eps -> infinity, i.e. the ratio
    /// must increase strictly as epsilon decreases along the sampled sweep.
    pub fn check_scale_separation(&self, eps_sweep: &[f64]) -> Result<()> {
        if eps_sweep.len() < 2 {
            return Err(Error::Input(
                "scale separation check needs at least two epsilon values".into(),
            ));
        }
        let mut sorted = eps_sweep.to_vec();
        sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite epsilons"));
        for w in sorted.windows(2) {
            let (e_big, e_small) = (w[0], w[1]);
            if !(e_big > e_small) || e_small <= 0.0 {
                return Err(Error::Input("epsilon sweep must be positive and distinct".into()));
            }
            let r_big = self.delta(e_big) / e_big;
            let r_small = self.delta(e_small) / e_small;
            if !(r_small > r_big) {
                return Err(Error::Assumption {
                    name: "scale_separation",
                    detail: format!(
                        "delta_eps/eps does not increase as eps decreases: \
                         {:.4e} at eps = {:.4e} vs {:.4e} at eps = {:.4e} \
                         (law delta = {} * eps^{})",
                        r_big, e_big, r_small, e_small, self.coeff, self.exponent
                    ),
                });
            }
        }
        Ok(())
    }
}
