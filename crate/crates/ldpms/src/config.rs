//! Run configuration: a closed TOML schema, CSV-tabulated coefficient
//! loading, and the JSON manifest that makes a run reproducible bit for
//! bit. Loading a manifest back recovers the exact effective config of the
//! run that wrote it.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::action::DriftSign;
use crate::coeffs::{
    CoefficientField, JumpKernel, LevyMeasure, MatrixField, NuAtom, RegimeLaw, ScalarField,
    TabulatedField, VectorField, DEFAULT_ELLIPTICITY_FLOOR, DEFAULT_RATIO_CAP,
};
use crate::error::{Error, Result};
use crate::mc::{EventSet, DEFAULT_EVENT_RESOLUTION, DEFAULT_GAP_TOL, DEFAULT_MC_L_SCHEDULE};
use crate::rate::DEFAULT_L_SCHEDULE;
use crate::sim::DEFAULT_DT_FRACTION;
use crate::symbol::DEFAULT_MARGIN_RADII;

/// A scalar coefficient in config: either an inline field or a CSV table
/// on disk ({ path = "..." }), one row per grid node, coordinates first,
/// value last. CSV tables are inlined into the effective config so the
/// manifest stays self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarSpec {
    Field(ScalarField),
    Csv { path: PathBuf },
}

impl ScalarSpec {
    fn inline(&self, base: &Path) -> Result<ScalarField> {
        match self {
            ScalarSpec::Field(f) => Ok(f.clone()),
            ScalarSpec::Csv { path } => {
                let full = if path.is_absolute() { path.clone() } else { base.join(path) };
                Ok(ScalarField::Table(load_table_csv(&full)?))
            }
        }
    }
}

/// Load a tabulated field from CSV: header row, then one row per grid
/// node, the first columns the node coordinates (which must form the
/// uniform grid { j/n } per axis), the last column the value.
pub fn load_table_csv(path: &Path) -> Result<TabulatedField> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Config(format!("table {}: {e}", path.display())))?;
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Config(format!("table {}: {e}", path.display())))?;
        let mut nums = Vec::with_capacity(record.len());
        for cell in record.iter() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("table {} row {}: bad float {cell:?}", path.display(), i + 2)))?;
            nums.push(v);
        }
        if nums.len() < 2 {
            return Err(Error::Config(format!(
                "table {} row {}: need at least one coordinate and a value",
                path.display(),
                i + 2
            )));
        }
        let value = nums.pop().expect("row has entries");
        rows.push((nums, value));
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("table {} has no data rows", path.display())));
    }
    let d = rows[0].0.len();
    if rows.iter().any(|(c, _)| c.len() != d) {
        return Err(Error::Config(format!("table {}: rows disagree on dimension", path.display())));
    }
    // Distinct coordinates per axis give the shape; every coordinate must
    // land on j / shape exactly (to fp tolerance).
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (coords, _) in &rows {
        for (i, &c) in coords.iter().enumerate() {
            if !axes[i].iter().any(|&a| (a - c).abs() <= 1e-12) {
                axes[i].push(c);
            }
        }
    }
    for axis in &mut axes {
        axis.sort_by(|a, b| a.partial_cmp(b).expect("finite coordinates"));
    }
    let shape: Vec<usize> = axes.iter().map(|a| a.len()).collect();
    let total: usize = shape.iter().product();
    if total != rows.len() {
        return Err(Error::Config(format!(
            "table {}: {} rows do not fill a {:?} grid",
            path.display(),
            rows.len(),
            shape
        )));
    }
    for (i, axis) in axes.iter().enumerate() {
        for (j, &c) in axis.iter().enumerate() {
            let expect = j as f64 / shape[i] as f64;
            if (c - expect).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "table {}: axis {} node {c} is not on the uniform grid j/{}",
                    path.display(),
                    i + 1,
                    shape[i]
                )));
            }
        }
    }
    let mut values = vec![f64::NAN; total];
    let mut filled = vec![false; total];
    for (coords, value) in &rows {
        let mut flat = 0usize;
        for (i, &c) in coords.iter().enumerate() {
            let j = (c * shape[i] as f64).round() as usize;
            flat = flat * shape[i] + j;
        }
        if filled[flat] {
            return Err(Error::Config(format!(
                "table {}: node {coords:?} appears twice",
                path.display()
            )));
        }
        filled[flat] = true;
        values[flat] = *value;
    }
    TabulatedField::new(shape, values).map_err(|e| Error::Config(format!("table {}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteName {
    Gaussian,
    Anisotropic,
    OscillatingSigma,
    PeriodicDrift,
    Custom,
}

/// Full coefficient bundle for suite = "custom".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    pub sigma: Vec<Vec<ScalarSpec>>,
    #[serde(default)]
    pub b: Option<Vec<ScalarSpec>>,
    #[serde(default)]
    pub c: Option<Vec<ScalarSpec>>,
    #[serde(default)]
    pub k: Option<JumpKernel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub dimension: usize,
    pub suite: SuiteName,
    /// Diffusion diagonal for suite = "anisotropic".
    #[serde(default)]
    pub diag: Option<Vec<f64>>,
    /// Base level for "oscillating_sigma" (default 1.0).
    #[serde(default)]
    pub base: Option<f64>,
    /// Oscillation / drift amplitude for the periodic suites.
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// Jump kernel attached to a named suite.
    #[serde(default)]
    pub jump: Option<JumpKernel>,
    #[serde(default)]
    pub nu_atoms: Vec<NuAtom>,
    /// Only with suite = "custom".
    #[serde(default)]
    pub fields: Option<FieldsSpec>,
    /// Ellipticity floor for the degeneracy gate. Lowering it below zero
    /// deliberately admits a degenerate diffusion (a zero-dynamics model,
    /// say); leave it alone otherwise.
    #[serde(default)]
    pub ellipticity_floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub t_horizon: f64,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Trajectories written by `simulate`.
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub jump_budget: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RegimeSection {
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub law: Option<RegimeLaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    #[serde(default)]
    pub velocities: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub l_schedule: Option<Vec<f64>>,
    #[serde(default)]
    pub grad_tol: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub drift_sign: Option<DriftSign>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub gap_tol: Option<f64>,
    #[serde(default)]
    pub resolution: Option<usize>,
    #[serde(default)]
    pub l_schedule: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BoundSection {
    #[serde(default)]
    pub t: Option<f64>,
    #[serde(default)]
    pub margin_radii: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct CheckSection {
    #[serde(default)]
    pub bulk_pairs: Option<usize>,
    #[serde(default)]
    pub pairs_seed: Option<u64>,
    #[serde(default)]
    pub ratio_cap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    /// Subset of {"csv", "json"}; the manifest is always written.
    #[serde(default)]
    pub formats: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub scheme: SchemeSection,
    #[serde(default)]
    pub regime: RegimeSection,
    #[serde(default)]
    pub rate: RateSection,
    #[serde(default)]
    pub event: Option<EventSet>,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub bound: BoundSection,
    #[serde(default)]
    pub check: CheckSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Fill every defaulted value in and inline CSV tables, so the result
    /// echoes the exact parameters of the run. Idempotent.
    pub fn effective(mut self, base: &Path) -> Result<RunConfig> {
        let d = self.model.dimension;
        if d == 0 {
            return Err(Error::Config("model.dimension must be at least 1".into()));
        }
        if !(self.scheme.t_horizon > 0.0) || !self.scheme.t_horizon.is_finite() {
            return Err(Error::Config(format!(
                "scheme.t_horizon must be positive, got {}",
                self.scheme.t_horizon
            )));
        }
        if self.scheme.x0.len() != d {
            return Err(Error::Config(format!(
                "scheme.x0 has dimension {}, model.dimension is {d}",
                self.scheme.x0.len()
            )));
        }
        self.model.ellipticity_floor =
            Some(self.model.ellipticity_floor.unwrap_or(DEFAULT_ELLIPTICITY_FLOOR));
        if let Some(fields) = &mut self.model.fields {
            for row in &mut fields.sigma {
                for spec in row.iter_mut() {
                    *spec = ScalarSpec::Field(spec.inline(base)?);
                }
            }
            for vec in [&mut fields.b, &mut fields.c].into_iter().flatten() {
                for spec in vec.iter_mut() {
                    *spec = ScalarSpec::Field(spec.inline(base)?);
                }
            }
        }
        let dt = self.scheme.dt.unwrap_or(DEFAULT_DT_FRACTION * self.scheme.t_horizon);
        if !(dt > 0.0) || dt > self.scheme.t_horizon {
            return Err(Error::Config(format!("scheme.dt must lie in (0, t_horizon], got {dt}")));
        }
        self.scheme.dt = Some(dt);
        self.scheme.seed = Some(self.scheme.seed.unwrap_or(0));
        self.scheme.n_paths = Some(self.scheme.n_paths.unwrap_or(1));

        let epsilons = self.regime.epsilons.unwrap_or_else(|| vec![0.1]);
        if epsilons.is_empty() || epsilons.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(Error::Config("regime.epsilons must be a nonempty list of positive values".into()));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("regime.epsilons must decrease strictly".into()));
        }
        self.regime.epsilons = Some(epsilons);
        self.regime.law = Some(self.regime.law.unwrap_or_default());

        self.rate.velocities = Some(self.rate.velocities.unwrap_or_default());
        self.rate.l_schedule = Some(self.rate.l_schedule.unwrap_or_else(|| DEFAULT_L_SCHEDULE.to_vec()));
        self.rate.grad_tol = Some(self.rate.grad_tol.unwrap_or(1e-6));
        self.rate.max_iters = Some(self.rate.max_iters.unwrap_or(2000));
        self.rate.drift_sign = Some(self.rate.drift_sign.unwrap_or_default());

        self.mc.n_paths = Some(self.mc.n_paths.unwrap_or(10_000));
        self.mc.gap_tol = Some(self.mc.gap_tol.unwrap_or(DEFAULT_GAP_TOL));
        self.mc.resolution = Some(self.mc.resolution.unwrap_or(DEFAULT_EVENT_RESOLUTION));
        self.mc.l_schedule = Some(self.mc.l_schedule.unwrap_or_else(|| DEFAULT_MC_L_SCHEDULE.to_vec()));

        self.bound.t = Some(self.bound.t.unwrap_or(1.0));
        self.bound.margin_radii = Some(
            self.bound
                .margin_radii
                .unwrap_or_else(|| DEFAULT_MARGIN_RADII.to_vec()),
        );

        self.check.bulk_pairs = Some(self.check.bulk_pairs.unwrap_or(64));
        self.check.pairs_seed = Some(self.check.pairs_seed.unwrap_or(0));
        self.check.ratio_cap = Some(self.check.ratio_cap.unwrap_or(DEFAULT_RATIO_CAP));

        self.output.directory = Some(self.output.directory.unwrap_or_else(|| PathBuf::from("out")));
        let formats = self
            .output
            .formats
            .unwrap_or_else(|| vec!["csv".into(), "json".into()]);
        if formats.iter().any(|f| f != "csv" && f != "json") {
            return Err(Error::Config(format!("output.formats entries must be csv or json, got {formats:?}")));
        }
        self.output.formats = Some(formats);

        if let Some(event) = &self.event {
            event.validate(d).map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(self)
    }

    /// Build (field, nu) from the model section. Call on an effective
    /// config; CSV specs are rejected here because `effective` inlines them.
    pub fn build_model(&self) -> Result<(CoefficientField, LevyMeasure)> {
        let m = &self.model;
        let d = m.dimension;
        let inline_only = |specs: &[ScalarSpec]| -> Result<Vec<ScalarField>> {
            specs
                .iter()
                .map(|s| match s {
                    ScalarSpec::Field(f) => Ok(f.clone()),
                    ScalarSpec::Csv { .. } => {
                        Err(Error::Config("internal: CSV table survived config resolution".into()))
                    }
                })
                .collect()
        };
        let field = match m.suite {
            SuiteName::Custom => {
                let Some(fields) = &m.fields else {
                    return Err(Error::Config("suite = \"custom\" needs a [model.fields] section".into()));
                };
                if m.jump.is_some() {
                    return Err(Error::Config("with suite = \"custom\" put the jump kernel in model.fields.k".into()));
                }
                if fields.sigma.len() != d || fields.sigma.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(format!("model.fields.sigma must be a {d} x {d} grid of fields")));
                }
                let sigma = MatrixField {
                    rows: fields
                        .sigma
                        .iter()
                        .map(|r| inline_only(r))
                        .collect::<Result<_>>()?,
                };
                let to_vec = |spec: &Option<Vec<ScalarSpec>>, name: &str| -> Result<VectorField> {
                    match spec {
                        None => Ok(VectorField::zero(d)),
                        Some(list) => {
                            if list.len() != d {
                                return Err(Error::Config(format!(
                                    "model.fields.{name} must have {d} components"
                                )));
                            }
                            Ok(VectorField(inline_only(list)?))
                        }
                    }
                };
                let b = to_vec(&fields.b, "b")?;
                let c = to_vec(&fields.c, "c")?;
                let k = fields.k.clone().unwrap_or(JumpKernel::Zero);
                CoefficientField::new(sigma, b, c, k).map_err(|e| Error::Config(e.to_string()))?
            }
            SuiteName::Gaussian => CoefficientField::gaussian(d),
            SuiteName::Anisotropic => {
                let Some(diag) = &m.diag else {
                    return Err(Error::Config("suite = \"anisotropic\" needs model.diag".into()));
                };
                if diag.len() != d {
                    return Err(Error::Config(format!("model.diag must have {d} entries")));
                }
                CoefficientField::anisotropic(diag)
            }
            SuiteName::OscillatingSigma => {
                CoefficientField::oscillating_sigma(d, m.base.unwrap_or(1.0), m.amplitude.unwrap_or(0.3))
            }
            SuiteName::PeriodicDrift => CoefficientField::periodic_drift(d, m.amplitude.unwrap_or(1.0)),
        };
        let field = match (&m.suite, &m.jump) {
            (SuiteName::Custom, _) | (_, None) => field,
            (_, Some(k)) => field.with_jump(k.clone()),
        };
        let field =
            field.with_ellipticity_floor(m.ellipticity_floor.unwrap_or(DEFAULT_ELLIPTICITY_FLOOR));
        let nu = if m.nu_atoms.is_empty() {
            LevyMeasure::empty()
        } else {
            LevyMeasure::new(m.nu_atoms.clone()).map_err(|e| Error::Config(e.to_string()))?
        };
        if !field.k.is_zero() && nu.n_atoms() == 0 {
            return Err(Error::Config("a jump kernel without nu atoms never jumps; drop one or add atoms".into()));
        }
        Ok((field, nu))
    }

    pub fn epsilons(&self) -> &[f64] {
        self.regime.epsilons.as_deref().expect("effective config")
    }

    pub fn law(&self) -> RegimeLaw {
        self.regime.law.expect("effective config")
    }

    pub fn out_dir(&self) -> &Path {
        self.output.directory.as_deref().expect("effective config")
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output
            .formats
            .as_ref()
            .expect("effective config")
            .iter()
            .any(|f| f == format)
    }
}

/// The reproducibility record written next to every run's outputs. Feeding
/// it back through `load_config` re-runs the same parameters bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: String,
    /// git describe of the build, or "unknown" outside a checkout.
    pub build: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    /// FNV-1a hash of the effective config JSON.
    pub config_hash: String,
    pub config: RunConfig,
}

pub fn config_hash(config: &RunConfig) -> Result<String> {
    let json = serde_json::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in json.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(format!("{h:016x}"))
}

impl Manifest {
    pub fn new(command: &str, threads: Option<usize>, config: RunConfig) -> Result<Self> {
        Ok(Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            build: option_env!("GIT_DESCRIBE").unwrap_or("unknown").to_string(),
            command: command.to_string(),
            seed: config.scheme.seed.expect("effective config"),
            threads,
            config_hash: config_hash(&config)?,
            config,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        json.push('\n');
        std::fs::write(&path, json)?;
        Ok(path)
    }
}

/// Load a run configuration from a TOML file, or recover one from a run
/// manifest (.json). The result is always effective: defaults filled and
/// tables inlined.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let is_json = path.extension().is_some_and(|e| e == "json");
    let raw: RunConfig = if is_json {
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        manifest.config
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    raw.effective(&base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    const MINIMAL: &str = r#"
        [model]
        dimension = 1
        suite = "gaussian"

        [scheme]
        t_horizon = 1.0
        x0 = [0.0]
    "#;

    fn parse(text: &str) -> Result<RunConfig> {
        let raw: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.effective(Path::new("."))
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.scheme.dt, Some(1e-3));
        assert_eq!(cfg.scheme.seed, Some(0));
        assert_eq!(cfg.scheme.n_paths, Some(1));
        assert_eq!(cfg.epsilons(), &[0.1]);
        assert_relative_eq!(cfg.law().exponent, 0.5);
        assert_eq!(cfg.rate.max_iters, Some(2000));
        assert_eq!(cfg.mc.n_paths, Some(10_000));
        assert_eq!(cfg.out_dir(), Path::new("out"));
        assert!(cfg.wants("csv") && cfg.wants("json"));
        let (field, nu) = cfg.build_model().unwrap();
        assert_eq!(field.dimension, 1);
        assert_eq!(nu.n_atoms(), 0);
    }

    #[test]
    fn effective_is_idempotent() {
        let cfg = parse(MINIMAL).unwrap();
        let json_once = serde_json::to_string(&cfg).unwrap();
        let again = cfg.effective(Path::new(".")).unwrap();
        assert_eq!(json_once, serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let with_typo = r#"
            [model]
            dimension = 1
            suite = "gaussian"
            amplitud = 0.3

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]
        "#;
        match toml::from_str::<RunConfig>(with_typo) {
            Err(e) => assert!(e.to_string().contains("amplitud"), "{e}"),
            Ok(_) => panic!("typo key should fail parsing"),
        }
        let bad_section = format!("{MINIMAL}\n[extra]\nx = 1\n");
        assert!(toml::from_str::<RunConfig>(&bad_section).is_err());
    }

    #[test]
    fn dimension_mismatches_are_config_errors() {
        let text = r#"
            [model]
            dimension = 2
            suite = "gaussian"

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]
        "#;
        match parse(text) {
            Err(Error::Config(msg)) => assert!(msg.contains("x0"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn custom_fields_build() {
        let text = r#"
            [model]
            dimension = 2
            suite = "custom"

            [model.fields]
            sigma = [
                [{ kind = "constant", value = 2.0 }, { kind = "constant", value = 0.0 }],
                [{ kind = "constant", value = 0.0 }, { kind = "constant", value = 1.0 }],
            ]
            c = [
                { kind = "sinusoid", offset = 0.0, amplitude = 1.0, frequency = [1, 0], phase = 0.0 },
                { kind = "constant", value = 0.5 },
            ]

            [scheme]
            t_horizon = 1.0
            x0 = [0.0, 0.0]
        "#;
        let cfg = parse(text).unwrap();
        let (field, _) = cfg.build_model().unwrap();
        let c = field.c_at(&dvector![0.25, 0.0]).unwrap();
        assert_relative_eq!(c[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(c[1], 0.5, max_relative = 1e-12);
        let s = field.sigma_at(&dvector![0.9, 0.9]).unwrap();
        assert_relative_eq!(s[(0, 0)], 2.0);
    }

    #[test]
    fn csv_table_inlines_into_the_effective_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("c1.csv"),
            "x1,value\n0.0,1.0\n0.25,2.0\n0.5,3.0\n0.75,2.0\n",
        )
        .unwrap();
        let text = r#"
            [model]
            dimension = 1
            suite = "custom"

            [model.fields]
            sigma = [[{ kind = "constant", value = 1.0 }]]
            c = [{ path = "c1.csv" }]

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]
        "#;
        let raw: RunConfig = toml::from_str(text).unwrap();
        let cfg = raw.effective(dir.path()).unwrap();
        // The effective config no longer references the file.
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(!json.contains("c1.csv"));
        let (field, _) = cfg.build_model().unwrap();
        let c = field.c_at(&dvector![0.25]).unwrap();
        assert_relative_eq!(c[0], 2.0, max_relative = 1e-12);
        // Interpolation between nodes, and periodic wraparound.
        let mid = field.c_at(&dvector![0.125]).unwrap();
        assert_relative_eq!(mid[0], 1.5, max_relative = 1e-12);
        let wrap = field.c_at(&dvector![0.875]).unwrap();
        assert_relative_eq!(wrap[0], 1.5, max_relative = 1e-12);
    }

    #[test]
    fn off_grid_table_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,value\n0.0,1.0\n0.3,2.0\n").unwrap();
        match load_table_csv(&path) {
            Err(Error::Config(msg)) => assert!(msg.contains("uniform grid"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_round_trips_through_load_config() {
        let cfg = parse(MINIMAL).unwrap();
        let manifest = Manifest::new("simulate", Some(4), cfg.clone()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = manifest.write(dir.path()).unwrap();
        let reloaded = load_config(&path).unwrap();
        assert_eq!(
            serde_json::to_string(&cfg).unwrap(),
            serde_json::to_string(&reloaded).unwrap()
        );
        assert_eq!(config_hash(&cfg).unwrap(), config_hash(&reloaded).unwrap());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse(MINIMAL).unwrap();
        let mut b = a.clone();
        b.scheme.seed = Some(1);
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }

    #[test]
    fn jump_kernel_without_atoms_is_rejected() {
        let text = r#"
            [model]
            dimension = 1
            suite = "gaussian"
            jump = { kind = "mark" }

            [scheme]
            t_horizon = 1.0
            x0 = [0.0]
        "#;
        let cfg = parse(text).unwrap();
        match cfg.build_model() {
            Err(Error::Config(msg)) => assert!(msg.contains("atoms"), "{msg}"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn event_section_parses_and_validates() {
        let good = format!(
            "{MINIMAL}\n[event]\nkind = \"ball\"\ncenter = [1.5]\nradius = 0.5\n"
        );
        let cfg = parse(&good).unwrap();
        assert!(matches!(cfg.event, Some(EventSet::Ball { .. })));
        let bad = format!(
            "{MINIMAL}\n[event]\nkind = \"ball\"\ncenter = [1.5, 0.0]\nradius = 0.5\n"
        );
        assert!(matches!(parse(&bad), Err(Error::Config(_))));
    }
}
