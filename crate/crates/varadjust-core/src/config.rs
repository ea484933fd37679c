//! File formats: model description JSON, observation series CSV, and
//! adjustment output JSON.
//!
//! A model file carries the first- and second-order prior (r, p, F, G, μ0,
//! Σ, V, W), optionally the fourth-order beliefs (each moment matrix given
//! as an exchangeable pattern, an explicit matrix, or `"gaussian"` for the
//! disturbance moments), and optionally a two-point mixture block for
//! simulation. Matrices are row-major nested arrays. All floating-point
//! output is rendered in a fixed scientific notation so that repeated runs
//! are byte identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use serde::Serialize as _;
use serde_json::{json, Value};

use crate::beliefs::{expand_pattern, gaussian_fourth_moments, ExchangeablePattern, FourthOrderBeliefs};
use crate::model::ModelSpec;
use crate::simulate::ResidualGenerator;

/// Errors raised while reading or interpreting configuration and data
/// files, distinct from domain errors about the model itself.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    /// The file could not be read or written.
    #[error("cannot access {path}: {source}")]
    Io {
        /// Offending path.
        path: String,
        /// Underlying I/O error.
        #[source]
        source: std::io::Error,
    },
    /// The file content is not valid JSON or CSV.
    #[error("cannot parse {path}: {message}")]
    Parse {
        /// Offending path.
        path: String,
        /// What failed to parse.
        message: String,
    },
    /// The file parsed but its content does not fit the expected schema.
    #[error("{path}: {message}")]
    Structure {
        /// Offending path.
        path: String,
        /// What is wrong with the structure.
        message: String,
    },
}

/// One fourth-order moment matrix in a model file.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FourthSpecFile {
    /// The string `"gaussian"`, valid for the disturbance moments only:
    /// the matrix is the Gaussian fourth-moment map of the corresponding
    /// prior mean covariance.
    Named(String),
    /// An exchangeable pattern.
    Pattern {
        /// The pattern values.
        pattern: PatternFile,
    },
    /// An explicit moment matrix, row-major.
    Matrix {
        /// The matrix entries.
        matrix: Vec<Vec<f64>>,
    },
}

/// Exchangeable pattern values as found in a model file.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct PatternFile {
    /// All four indices equal.
    pub iiii: f64,
    /// Matching index pairs.
    pub ijij: f64,
    /// Distinct diagonal positions; defaults to zero.
    #[serde(default)]
    pub iijj: f64,
}

/// The fourth-order block of a model file.
#[derive(Debug, Clone, Deserialize)]
pub struct FourthOrderFile {
    /// Var(vec V^ω).
    pub var_vec_v_omega: FourthSpecFile,
    /// Var(vec V^ν).
    pub var_vec_v_nu: FourthSpecFile,
    /// Var(vec S^ω).
    pub var_vec_s_omega: FourthSpecFile,
    /// Var(vec S^ν).
    pub var_vec_s_nu: FourthSpecFile,
}

/// The mixture block of a model file. The first component is derived so
/// the mixture mean equals the model's prior covariance:
/// V₁ = (V − (1−q) V₂)/q and likewise for W.
#[derive(Debug, Clone, Deserialize)]
pub struct MixtureFile {
    /// Probability of the first component.
    pub weight: f64,
    /// Second observation component.
    pub v2: Vec<Vec<f64>>,
    /// Second evolution component.
    pub w2: Vec<Vec<f64>>,
}

/// A parsed model file, shape-checked but not yet validated as a model.
#[derive(Debug, Clone, Deserialize)]
pub struct ModelFile {
    /// Observation dimension.
    pub r: usize,
    /// State dimension.
    pub p: usize,
    /// Design matrix, p×r row-major.
    #[serde(rename = "F")]
    pub f: Vec<Vec<f64>>,
    /// Evolution matrix, p×p row-major.
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    /// Prior state mean, length p.
    pub mu0: Vec<f64>,
    /// Prior state covariance, p×p.
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    /// Prior observation residual covariance, r×r.
    #[serde(rename = "V")]
    pub v: Vec<Vec<f64>>,
    /// Prior evolution residual covariance, p×p.
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    /// Optional fourth-order beliefs.
    #[serde(default)]
    pub fourth_order: Option<FourthOrderFile>,
    /// Optional mixture block for simulation.
    #[serde(default)]
    pub mixture: Option<MixtureFile>,
}

fn structure(path: &Path, message: impl Into<String>) -> ConfigError {
    ConfigError::Structure { path: path.display().to_string(), message: message.into() }
}

fn check_rows(path: &Path, name: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<(), ConfigError> {
    if rows.len() != nrows || rows.iter().any(|row| row.len() != ncols) {
        return Err(structure(path, format!("{name} must be a {nrows}×{ncols} row-major array")));
    }
    Ok(())
}

fn check_fourth_spec(
    path: &Path,
    name: &str,
    spec: &FourthSpecFile,
    dim: usize,
    gaussian_allowed: bool,
) -> Result<(), ConfigError> {
    match spec {
        FourthSpecFile::Named(word) => {
            if word != "gaussian" {
                return Err(structure(path, format!("{name}: unknown shorthand {word:?}")));
            }
            if !gaussian_allowed {
                return Err(structure(
                    path,
                    format!("{name}: the gaussian shorthand applies to the disturbance moments only"),
                ));
            }
            Ok(())
        }
        FourthSpecFile::Pattern { .. } => Ok(()),
        FourthSpecFile::Matrix { matrix } => check_rows(path, name, matrix, dim * dim, dim * dim),
    }
}

/// Reads and shape-checks a model file.
pub fn load_model_file(path: &Path) -> Result<ModelFile, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|err| ConfigError::Parse {
        path: path.display().to_string(),
        message: err.to_string(),
    })?;

    if file.r == 0 || file.p == 0 {
        return Err(structure(path, "dimensions r and p must be at least 1"));
    }
    check_rows(path, "F", &file.f, file.p, file.r)?;
    check_rows(path, "G", &file.g, file.p, file.p)?;
    if file.mu0.len() != file.p {
        return Err(structure(path, format!("mu0 must have length {}", file.p)));
    }
    check_rows(path, "Sigma", &file.sigma, file.p, file.p)?;
    check_rows(path, "V", &file.v, file.r, file.r)?;
    check_rows(path, "W", &file.w, file.p, file.p)?;
    if let Some(fourth) = &file.fourth_order {
        check_fourth_spec(path, "var_vec_v_omega", &fourth.var_vec_v_omega, file.p, false)?;
        check_fourth_spec(path, "var_vec_v_nu", &fourth.var_vec_v_nu, file.r, false)?;
        check_fourth_spec(path, "var_vec_s_omega", &fourth.var_vec_s_omega, file.p, true)?;
        check_fourth_spec(path, "var_vec_s_nu", &fourth.var_vec_s_nu, file.r, true)?;
    }
    if let Some(mixture) = &file.mixture {
        check_rows(path, "mixture.v2", &mixture.v2, file.r, file.r)?;
        check_rows(path, "mixture.w2", &mixture.w2, file.p, file.p)?;
        if !mixture.weight.is_finite() {
            return Err(structure(path, "mixture.weight must be finite"));
        }
    }
    Ok(file)
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j])
}

/// Builds the model prior from a shape-checked file.
pub fn model_from_file(file: &ModelFile) -> crate::error::Result<ModelSpec> {
    ModelSpec::new(
        matrix_from_rows(&file.f),
        matrix_from_rows(&file.g),
        DVector::from_vec(file.mu0.clone()),
        matrix_from_rows(&file.sigma),
        matrix_from_rows(&file.v),
        matrix_from_rows(&file.w),
    )
}

fn fourth_matrix(
    spec_file: &FourthSpecFile,
    dim: usize,
    mean_for_gaussian: &DMatrix<f64>,
) -> crate::error::Result<DMatrix<f64>> {
    match spec_file {
        FourthSpecFile::Named(_) => Ok(gaussian_fourth_moments(mean_for_gaussian)),
        FourthSpecFile::Pattern { pattern } => expand_pattern(
            &ExchangeablePattern { iiii: pattern.iiii, ijij: pattern.ijij, iijj: pattern.iijj },
            dim,
        ),
        FourthSpecFile::Matrix { matrix } => Ok(matrix_from_rows(matrix)),
    }
}

/// Builds the fourth-order beliefs declared in a file, if any.
pub fn beliefs_from_file(
    file: &ModelFile,
    spec: &ModelSpec,
) -> crate::error::Result<Option<FourthOrderBeliefs>> {
    let Some(fourth) = &file.fourth_order else { return Ok(None) };
    let beliefs = FourthOrderBeliefs::new(
        spec.state_dim(),
        spec.obs_dim(),
        fourth_matrix(&fourth.var_vec_v_omega, spec.state_dim(), &spec.w)?,
        fourth_matrix(&fourth.var_vec_v_nu, spec.obs_dim(), &spec.v)?,
        fourth_matrix(&fourth.var_vec_s_omega, spec.state_dim(), &spec.w)?,
        fourth_matrix(&fourth.var_vec_s_nu, spec.obs_dim(), &spec.v)?,
    )?;
    Ok(Some(beliefs))
}

/// Builds the mixture generator declared in a file, if any, deriving the
/// first component so the mixture mean equals the model's prior
/// covariances. The derived component must itself be positive
/// semidefinite.
pub fn mixture_from_file(
    file: &ModelFile,
    spec: &ModelSpec,
) -> crate::error::Result<Option<ResidualGenerator>> {
    let Some(mixture) = &file.mixture else { return Ok(None) };
    let q = mixture.weight;
    let v2 = matrix_from_rows(&mixture.v2);
    let w2 = matrix_from_rows(&mixture.w2);
    if !(q > 0.0 && q < 1.0) {
        return Err(crate::error::Error::OutOfRange {
            name: "mixture weight",
            value: q,
            range: "(0, 1)",
        });
    }
    let v1 = (&spec.v - (1.0 - q) * &v2) / q;
    let w1 = (&spec.w - (1.0 - q) * &w2) / q;
    let generator = ResidualGenerator::TwoPointMixture { weight: q, v1, w1, v2, w2 };
    generator.validate(spec)?;
    Ok(Some(generator))
}

/// JSON formatter writing every float as seventeen-significant-digit
/// scientific notation, keeping serialized output byte identical across
/// runs.
#[derive(Debug, Default)]
pub struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Serializes a JSON value with the fixed float formatting.
pub fn to_json_string(value: &Value) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SciFormatter);
    value.serialize(&mut ser).expect("serializing an in-memory JSON value cannot fail");
    String::from_utf8(out).expect("serialized JSON is UTF-8")
}

fn matrix_to_value(matrix: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..matrix.nrows())
            .map(|i| Value::Array((0..matrix.ncols()).map(|j| json!(matrix[(i, j)])).collect()))
            .collect(),
    )
}

fn matrix_from_value(path: &Path, name: &str, value: &Value) -> Result<DMatrix<f64>, ConfigError> {
    let rows = value
        .as_array()
        .ok_or_else(|| structure(path, format!("{name} must be an array of rows")))?;
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| structure(path, format!("{name} rows must be arrays")))?;
        let mut out = Vec::with_capacity(row.len());
        for entry in row {
            out.push(
                entry
                    .as_f64()
                    .ok_or_else(|| structure(path, format!("{name} entries must be numbers")))?,
            );
        }
        data.push(out);
    }
    if data.is_empty() || data.iter().any(|row| row.len() != data[0].len()) {
        return Err(structure(path, format!("{name} must be a nonempty rectangular array")));
    }
    Ok(matrix_from_rows(&data))
}

/// One serialized adjusted target.
#[derive(Debug, Clone)]
pub struct TargetOutput {
    /// Target key, e.g. `observation_cov`.
    pub key: String,
    /// The adjusted moment after the PSD policy.
    pub adjusted: DMatrix<f64>,
    /// Projection coefficients, constants first.
    pub coefficients: Vec<f64>,
    /// Fraction of target variation explained.
    pub resolution: f64,
    /// Gram eigenvalues kept by the solver.
    pub effective_rank: usize,
    /// Whether the Gram system was numerically rank deficient.
    pub ill_conditioned: bool,
    /// Spectrum of the raw adjusted moment, descending.
    pub eigenvalues: Vec<f64>,
    /// Smallest raw eigenvalue.
    pub min_eigenvalue: f64,
    /// Whether the PSD policy changed the matrix.
    pub modified: bool,
}

/// The serializable result of an adjustment run.
#[derive(Debug, Clone)]
pub struct AdjustmentOutput {
    /// Horizon the projection space drew on.
    pub n: usize,
    /// PSD policy key.
    pub psd_policy: String,
    /// Per-target outputs.
    pub targets: Vec<TargetOutput>,
}

/// Renders an adjustment result as deterministic JSON.
pub fn adjustment_to_json(output: &AdjustmentOutput) -> String {
    let mut targets = serde_json::Map::new();
    for target in &output.targets {
        targets.insert(
            target.key.clone(),
            json!({
                "adjusted": matrix_to_value(&target.adjusted),
                "coefficients": target.coefficients,
                "resolution": target.resolution,
                "effective_rank": target.effective_rank,
                "ill_conditioned": target.ill_conditioned,
                "eigenvalues": target.eigenvalues,
                "min_eigenvalue": target.min_eigenvalue,
                "modified": target.modified,
            }),
        );
    }
    let value = json!({
        "n": output.n,
        "psd_policy": output.psd_policy,
        "targets": Value::Object(targets),
    });
    let mut text = to_json_string(&value);
    text.push('\n');
    text
}

/// Reads the adjusted moment matrices back from an adjustment JSON file,
/// keyed by target.
pub fn read_adjusted_targets(path: &Path) -> Result<BTreeMap<String, DMatrix<f64>>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let value: Value = serde_json::from_str(&text).map_err(|err| ConfigError::Parse {
        path: path.display().to_string(),
        message: err.to_string(),
    })?;
    let targets = value
        .get("targets")
        .and_then(Value::as_object)
        .ok_or_else(|| structure(path, "adjustment file must hold a targets object"))?;
    let mut out = BTreeMap::new();
    for (key, entry) in targets {
        let adjusted = entry
            .get("adjusted")
            .ok_or_else(|| structure(path, format!("target {key} lacks an adjusted matrix")))?;
        out.insert(key.clone(), matrix_from_value(path, &format!("targets.{key}.adjusted"), adjusted)?);
    }
    Ok(out)
}

/// Renders an observation series as CSV with a `t,x1,…,xr` header and
/// seventeen-significant-digit floats.
pub fn series_to_csv(series: &[DVector<f64>]) -> String {
    let r = series.first().map_or(0, |x| x.len());
    let mut out = String::from("t");
    for i in 1..=r {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (t, x) in series.iter().enumerate() {
        let _ = write!(out, "{}", t + 1);
        for value in x.iter() {
            let _ = write!(out, ",{value:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Renders per-step filter diagnostics as CSV.
pub fn diagnostics_to_csv(diagnostics: &[crate::forecast::StepDiagnostic]) -> String {
    let r = diagnostics.first().map_or(0, |d| d.error.len());
    let mut out = String::from("t");
    for i in 1..=r {
        let _ = write!(out, ",e{i}");
    }
    out.push_str(",standardized_size,size_ratio\n");
    for diagnostic in diagnostics {
        let _ = write!(out, "{}", diagnostic.step);
        for value in diagnostic.error.iter() {
            let _ = write!(out, ",{value:.16e}");
        }
        let _ = writeln!(
            out,
            ",{:.16e},{:.16e}",
            diagnostic.standardized_size, diagnostic.size_ratio
        );
    }
    out
}

/// Parses an observation series from CSV text. A header row is optional;
/// when present and its first column is `t`, the first column of every row
/// is treated as the time index and dropped.
pub fn parse_series_csv(path: &Path, text: &str) -> Result<Vec<DVector<f64>>, ConfigError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|err| ConfigError::Parse {
            path: path.display().to_string(),
            message: err.to_string(),
        })?;
        let fields: Vec<String> = record.iter().map(str::to_owned).collect();
        if !fields.is_empty() && !(fields.len() == 1 && fields[0].is_empty()) {
            records.push(fields);
        }
    }
    if records.is_empty() {
        return Err(structure(path, "data file holds no rows"));
    }

    let header = records[0].iter().any(|field| field.parse::<f64>().is_err());
    let drop_time_column = header && records[0][0] == "t";
    let rows = if header { &records[1..] } else { &records[..] };
    if rows.is_empty() {
        return Err(structure(path, "data file holds a header but no rows"));
    }

    let width = rows[0].len();
    let mut series = Vec::with_capacity(rows.len());
    for (index, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(structure(
                path,
                format!("row {} has {} columns, expected {width}", index + 1, row.len()),
            ));
        }
        let start = usize::from(drop_time_column);
        let mut values = Vec::with_capacity(width - start);
        for field in &row[start..] {
            values.push(field.parse::<f64>().map_err(|_| ConfigError::Parse {
                path: path.display().to_string(),
                message: format!("row {}: {field:?} is not a number", index + 1),
            })?);
        }
        if values.is_empty() {
            return Err(structure(path, format!("row {} holds no data columns", index + 1)));
        }
        series.push(DVector::from_vec(values));
    }
    Ok(series)
}

/// Reads an observation series from a CSV file.
pub fn read_series_csv(path: &Path) -> Result<Vec<DVector<f64>>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_series_csv(path, &text)
}

/// Writes text to a file, mapping failures to [`ConfigError::Io`].
pub fn write_text(path: &Path, text: &str) -> Result<(), ConfigError> {
    std::fs::write(path, text)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadratic::ResidualKind;

    fn demo_model_json() -> String {
        r#"{
            "r": 2, "p": 2,
            "F": [[1.0, 0.0], [0.0, 1.0]],
            "G": [[1.0, 0.0], [0.0, 1.0]],
            "mu0": [10.0, 9.0],
            "Sigma": [[9.0, 3.0], [3.0, 9.0]],
            "V": [[36.0, -4.0], [-4.0, 36.0]],
            "W": [[4.0, 1.0], [1.0, 4.0]],
            "fourth_order": {
                "var_vec_v_omega": {"pattern": {"iiii": 2.25, "ijij": 0.5625, "iijj": 0.2}},
                "var_vec_v_nu": {"pattern": {"iiii": 25.0, "ijij": 1.0, "iijj": 4.0}},
                "var_vec_s_omega": {"pattern": {"iiii": 30.0, "ijij": 15.0}},
                "var_vec_s_nu": "gaussian"
            },
            "mixture": {
                "weight": 0.5,
                "v2": [[18.0, -2.0], [-2.0, 18.0]],
                "w2": [[2.0, 0.5], [0.5, 2.0]]
            }
        }"#
        .to_owned()
    }

    fn load_demo() -> ModelFile {
        let dir = std::env::temp_dir().join("varadjust-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("demo-model.json");
        std::fs::write(&path, demo_model_json()).unwrap();
        load_model_file(&path).unwrap()
    }

    #[test]
    fn model_file_round_trips_into_model_and_beliefs() {
        let file = load_demo();
        let spec = model_from_file(&file).unwrap();
        assert_eq!(spec.obs_dim(), 2);
        assert_eq!(spec.v[(0, 1)], -4.0);

        let beliefs = beliefs_from_file(&file, &spec).unwrap().unwrap();
        assert_eq!(beliefs.var_vec_v(ResidualKind::Observation)[(0, 0)], 25.0);
        let gaussian = gaussian_fourth_moments(&spec.v);
        assert_eq!(
            beliefs.var_vec_s(ResidualKind::Observation),
            &gaussian,
            "the gaussian shorthand must expand to the moments of the prior mean"
        );

        let generator = mixture_from_file(&file, &spec).unwrap().unwrap();
        let mean = generator.mean_cov(ResidualKind::Observation);
        assert_eq!(mean, spec.v, "mixture mean must reproduce the prior covariance");
    }

    #[test]
    fn gaussian_shorthand_is_rejected_for_realized_covariance_moments() {
        let dir = std::env::temp_dir().join("varadjust-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-fourth.json");
        let text = demo_model_json().replace(
            r#""var_vec_v_omega": {"pattern": {"iiii": 2.25, "ijij": 0.5625, "iijj": 0.2}}"#,
            r#""var_vec_v_omega": "gaussian""#,
        );
        std::fs::write(&path, text).unwrap();
        let err = load_model_file(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Structure { .. }), "got {err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let dir = std::env::temp_dir().join("varadjust-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("malformed.json");
        std::fs::write(&path, "{ not json").unwrap();
        assert!(matches!(load_model_file(&path), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn wrong_shape_is_a_structure_error() {
        let dir = std::env::temp_dir().join("varadjust-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad-shape.json");
        std::fs::write(&path, demo_model_json().replace("\"mu0\": [10.0, 9.0]", "\"mu0\": [10.0]"))
            .unwrap();
        let err = load_model_file(&path).unwrap_err();
        assert!(matches!(err, ConfigError::Structure { .. }), "got {err}");
    }

    #[test]
    fn series_csv_round_trips_bytewise() {
        let series = vec![
            DVector::from_vec(vec![1.5, -2.25]),
            DVector::from_vec(vec![0.125, 3.0e-7]),
        ];
        let text = series_to_csv(&series);
        assert!(text.starts_with("t,x1,x2\n"));
        let parsed = parse_series_csv(Path::new("inline"), &text).unwrap();
        assert_eq!(parsed.len(), 2);
        for (a, b) in series.iter().zip(&parsed) {
            assert_eq!(a, b, "series CSV round trip must be exact");
        }
        let again = series_to_csv(&parsed);
        assert_eq!(text, again, "re-serialization must be byte identical");
    }

    #[test]
    fn headerless_csv_is_accepted_verbatim() {
        let parsed = parse_series_csv(Path::new("inline"), "1.0,2.0\n3.0,4.0\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0], DVector::from_vec(vec![1.0, 2.0]));
    }

    #[test]
    fn non_numeric_data_is_a_parse_error() {
        let err = parse_series_csv(Path::new("inline"), "t,x1\n1,abc\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }));
    }

    #[test]
    fn adjustment_json_round_trips_and_is_deterministic() {
        let output = AdjustmentOutput {
            n: 17,
            psd_policy: "clip".to_owned(),
            targets: vec![TargetOutput {
                key: "observation_cov".to_owned(),
                adjusted: DMatrix::from_row_slice(2, 2, &[36.0, -4.0, -4.0, 36.0]),
                coefficients: vec![0.5, 0.25],
                resolution: 0.75,
                effective_rank: 2,
                ill_conditioned: false,
                eigenvalues: vec![40.0, 32.0],
                min_eigenvalue: 32.0,
                modified: false,
            }],
        };
        let text = adjustment_to_json(&output);
        assert_eq!(text, adjustment_to_json(&output), "serialization must be deterministic");
        assert!(text.contains("3.6000000000000000e1"), "floats use fixed scientific notation");

        let dir = std::env::temp_dir().join("varadjust-config-tests");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("adjustment.json");
        std::fs::write(&path, &text).unwrap();
        let targets = read_adjusted_targets(&path).unwrap();
        assert_eq!(targets["observation_cov"][(0, 1)], -4.0);
    }
}
