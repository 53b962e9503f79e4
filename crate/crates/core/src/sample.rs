//! ENRT data model: recruited egos and alters, observed ego-networks,
//! treatments, outcomes and covariates.
//!
//! The observed network is a disjoint union of stars: every alter hangs
//! off exactly one recruiting ego. Units keep their file order; egos and
//! alters are additionally given dense positions (`0..n_e`, `0..n_a`) in
//! that order, which is what every estimator indexes by.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ego,
    Alter,
}

/// One recruited unit as it appears in the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit<T> {
    pub unit_id: String,
    pub role: Role,
    /// Recruiting ego. For egos this is the unit's own id (or empty).
    pub ego_id: String,
    /// Raw treatment value; egos must carry 0/1, alters nothing.
    pub treatment: Option<i64>,
    pub outcome: T,
    pub covariates: Vec<T>,
}

impl<T> Unit<T> {
    pub fn ego(id: impl Into<String>, treatment: bool, outcome: T, covariates: Vec<T>) -> Self {
        let id = id.into();
        Self {
            ego_id: id.clone(),
            unit_id: id,
            role: Role::Ego,
            treatment: Some(treatment as i64),
            outcome,
            covariates,
        }
    }

    pub fn alter(
        id: impl Into<String>,
        ego_id: impl Into<String>,
        outcome: T,
        covariates: Vec<T>,
    ) -> Self {
        Self {
            unit_id: id.into(),
            role: Role::Alter,
            ego_id: ego_id.into(),
            treatment: None,
            outcome,
            covariates,
        }
    }
}

/// A single invariant violation. `row` is the input line number when the
/// sample came from a file, otherwise the 1-based unit position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub row: Option<usize>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, row: Option<usize>, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            row,
            field: field.to_string(),
            message: message.into(),
        });
    }

    /// One JSON object `{row, field, message}` per line.
    pub fn to_json_lines(&self) -> String {
        self.violations
            .iter()
            .map(|v| serde_json::to_string(v).expect("violation serializes") + "\n")
            .collect()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.violations.first() {
            None => write!(f, "no violations"),
            Some(v) => {
                match v.row {
                    Some(r) => write!(f, "row {r}, {}: {}", v.field, v.message)?,
                    None => write!(f, "{}: {}", v.field, v.message)?,
                }
                if self.violations.len() > 1 {
                    write!(f, " (and {} more)", self.violations.len() - 1)?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("cannot open {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("invalid sample: {0}")]
    Invalid(ValidationReport),
    #[error("{what}: expected length {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug)]
struct Layout<T> {
    unit_ids: Vec<String>,
    roles: Vec<Role>,
    egos: Vec<usize>,
    alters: Vec<usize>,
    alter_ego: Vec<usize>,
    networks: Vec<Vec<usize>>,
    ego_covariates: Vec<Vec<T>>,
    alter_covariates: Vec<Vec<T>>,
    covariate_names: Vec<String>,
}

/// A validated egocentric sample.
///
/// The structural part (ids, roles, ego-networks, covariates) is shared
/// behind an `Arc`, so re-assigning treatments and outcomes for a new
/// randomization is cheap.
#[derive(Debug, Clone)]
pub struct EgocentricSample<T> {
    layout: Arc<Layout<T>>,
    p_z: T,
    ego_treatment: Vec<bool>,
    ego_outcome: Vec<T>,
    alter_outcome: Vec<T>,
}

impl<T: Real> EgocentricSample<T> {
    /// Validates `units` and builds the sample.
    pub fn from_units(units: Vec<Unit<T>>, p_z: T) -> Result<Self, SampleError> {
        let report = validate_units(&units, p_z);
        if !report.is_empty() {
            return Err(SampleError::Invalid(report));
        }
        Ok(Self::build(units, p_z, Vec::new()))
    }

    /// As [`from_units`](Self::from_units), naming the covariate columns.
    pub fn from_units_named(
        units: Vec<Unit<T>>,
        p_z: T,
        covariate_names: Vec<String>,
    ) -> Result<Self, SampleError> {
        let mut s = Self::from_units(units, p_z)?;
        Arc::get_mut(&mut s.layout)
            .expect("fresh layout is unshared")
            .covariate_names = covariate_names;
        Ok(s)
    }

    fn build(units: Vec<Unit<T>>, p_z: T, covariate_names: Vec<String>) -> Self {
        let mut ego_pos: HashMap<&str, usize> = HashMap::new();
        let mut egos = Vec::new();
        for (k, u) in units.iter().enumerate() {
            if u.role == Role::Ego {
                ego_pos.insert(u.unit_id.as_str(), egos.len());
                egos.push(k);
            }
        }
        let mut alters = Vec::new();
        let mut alter_ego = Vec::new();
        let mut networks = vec![Vec::new(); egos.len()];
        for (k, u) in units.iter().enumerate() {
            if u.role == Role::Alter {
                let e = ego_pos[u.ego_id.as_str()];
                networks[e].push(alters.len());
                alter_ego.push(e);
                alters.push(k);
            }
        }
        let ego_treatment = egos
            .iter()
            .map(|&k| units[k].treatment == Some(1))
            .collect();
        let ego_outcome = egos.iter().map(|&k| units[k].outcome).collect();
        let alter_outcome = alters.iter().map(|&k| units[k].outcome).collect();
        let ego_covariates = egos.iter().map(|&k| units[k].covariates.clone()).collect();
        let alter_covariates = alters
            .iter()
            .map(|&k| units[k].covariates.clone())
            .collect();
        let layout = Layout {
            unit_ids: units.iter().map(|u| u.unit_id.clone()).collect(),
            roles: units.iter().map(|u| u.role).collect(),
            egos,
            alters,
            alter_ego,
            networks,
            ego_covariates,
            alter_covariates,
            covariate_names,
        };
        Self {
            layout: Arc::new(layout),
            p_z,
            ego_treatment,
            ego_outcome,
            alter_outcome,
        }
    }

    /// Same structure with new ego treatments and observed outcomes.
    pub fn with_assignment(
        &self,
        ego_treatment: Vec<bool>,
        ego_outcome: Vec<T>,
        alter_outcome: Vec<T>,
    ) -> Result<Self, SampleError> {
        check_len("ego treatments", self.n_e(), ego_treatment.len())?;
        check_len("ego outcomes", self.n_e(), ego_outcome.len())?;
        check_len("alter outcomes", self.n_a(), alter_outcome.len())?;
        Ok(Self {
            layout: Arc::clone(&self.layout),
            p_z: self.p_z,
            ego_treatment,
            ego_outcome,
            alter_outcome,
        })
    }

    /// Same structure and data with outcomes replaced.
    pub fn with_outcomes(
        &self,
        ego_outcome: Vec<T>,
        alter_outcome: Vec<T>,
    ) -> Result<Self, SampleError> {
        self.with_assignment(self.ego_treatment.clone(), ego_outcome, alter_outcome)
    }

    pub fn n_e(&self) -> usize {
        self.layout.egos.len()
    }

    pub fn n_a(&self) -> usize {
        self.layout.alters.len()
    }

    pub fn len(&self) -> usize {
        self.layout.unit_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn p_z(&self) -> T {
        self.p_z
    }

    pub fn ego_treatments(&self) -> &[bool] {
        &self.ego_treatment
    }

    pub fn ego_outcomes(&self) -> &[T] {
        &self.ego_outcome
    }

    pub fn alter_outcomes(&self) -> &[T] {
        &self.alter_outcome
    }

    /// Ego position of each alter's recruiting ego.
    pub fn alter_ego(&self) -> &[usize] {
        &self.layout.alter_ego
    }

    /// Alter positions in the ego-network of ego `e`.
    pub fn network(&self, e: usize) -> &[usize] {
        &self.layout.networks[e]
    }

    pub fn networks(&self) -> &[Vec<usize>] {
        &self.layout.networks
    }

    pub fn ego_covariates(&self, e: usize) -> &[T] {
        &self.layout.ego_covariates[e]
    }

    pub fn alter_covariates(&self, a: usize) -> &[T] {
        &self.layout.alter_covariates[a]
    }

    pub fn covariate_dim(&self) -> usize {
        self.layout
            .ego_covariates
            .first()
            .map(Vec::len)
            .unwrap_or_default()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.layout.covariate_names
    }

    pub fn ego_id(&self, e: usize) -> &str {
        &self.layout.unit_ids[self.layout.egos[e]]
    }

    pub fn alter_id(&self, a: usize) -> &str {
        &self.layout.unit_ids[self.layout.alters[a]]
    }

    /// Reconstructs the units in input order.
    pub fn units(&self) -> Vec<Unit<T>> {
        let l = &self.layout;
        let mut out = Vec::with_capacity(self.len());
        let (mut e, mut a) = (0, 0);
        for (k, id) in l.unit_ids.iter().enumerate() {
            match l.roles[k] {
                Role::Ego => {
                    out.push(Unit::ego(
                        id.clone(),
                        self.ego_treatment[e],
                        self.ego_outcome[e],
                        l.ego_covariates[e].clone(),
                    ));
                    e += 1;
                }
                Role::Alter => {
                    out.push(Unit::alter(
                        id.clone(),
                        self.ego_id(l.alter_ego[a]).to_string(),
                        self.alter_outcome[a],
                        l.alter_covariates[a].clone(),
                    ));
                    a += 1;
                }
            }
        }
        out
    }

    /// Re-checks every unit and sample invariant.
    pub fn validate(&self) -> ValidationReport {
        validate_units(&self.units(), self.p_z)
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), SampleError> {
    if expected == got {
        Ok(())
    } else {
        Err(SampleError::Shape {
            what,
            expected,
            got,
        })
    }
}

/// Checks all unit and sample invariants. Empty report iff valid.
pub fn validate_units<T: Real>(units: &[Unit<T>], p_z: T) -> ValidationReport {
    let rows: Vec<usize> = (1..=units.len()).collect();
    validate_rows(units, p_z, &rows)
}

fn validate_rows<T: Real>(units: &[Unit<T>], p_z: T, rows: &[usize]) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !(p_z > T::zero() && p_z < T::one()) {
        report.push(
            None,
            "p_z",
            format!("treatment probability {p_z} not in (0, 1)"),
        );
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut roles: HashMap<&str, Role> = HashMap::new();
    for (u, &row) in units.iter().zip(rows) {
        if let Some(first) = seen.insert(u.unit_id.as_str(), row) {
            report.push(
                Some(row),
                "unit_id",
                format!("duplicate unit_id `{}` (first at row {first})", u.unit_id),
            );
        } else {
            roles.insert(u.unit_id.as_str(), u.role);
        }
    }
    if !units.iter().any(|u| u.role == Role::Ego) {
        report.push(None, "role", "sample has no egos");
    }
    let dim = units.first().map(|u| u.covariates.len());
    for (u, &row) in units.iter().zip(rows) {
        let row = Some(row);
        if u.unit_id.is_empty() {
            report.push(row, "unit_id", "empty unit_id");
        }
        match u.role {
            Role::Ego => {
                match u.treatment {
                    None => report.push(row, "z", format!("ego `{}` has no treatment", u.unit_id)),
                    Some(0) | Some(1) => {}
                    Some(z) => report.push(row, "z", format!("non-binary treatment {z}")),
                }
                if !u.ego_id.is_empty() && u.ego_id != u.unit_id {
                    report.push(
                        row,
                        "ego_id",
                        format!(
                            "ego `{}` lists a different ego_id `{}`",
                            u.unit_id, u.ego_id
                        ),
                    );
                }
            }
            Role::Alter => {
                if u.treatment.is_some() {
                    report.push(
                        row,
                        "z",
                        format!("alter carries treatment (`{}`)", u.unit_id),
                    );
                }
                match roles.get(u.ego_id.as_str()) {
                    Some(Role::Ego) => {}
                    Some(Role::Alter) => report.push(
                        row,
                        "ego_id",
                        format!("alter `{}` references alter `{}`", u.unit_id, u.ego_id),
                    ),
                    None => report.push(
                        row,
                        "ego_id",
                        format!(
                            "alter `{}` references unknown ego `{}`",
                            u.unit_id, u.ego_id
                        ),
                    ),
                }
            }
        }
        if !u.outcome.is_finite() {
            report.push(row, "y", "outcome is not finite");
        }
        if Some(u.covariates.len()) != dim {
            report.push(
                row,
                "x",
                format!(
                    "covariate dimension {} differs from {}",
                    u.covariates.len(),
                    dim.unwrap_or_default()
                ),
            );
        } else if u.covariates.iter().any(|x| !x.is_finite()) {
            report.push(row, "x", "covariate is not finite");
        }
    }
    report
}

/// Per-unit observed exposures on the observed (star) network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservedExposures {
    /// Always `false`: egos are only linked to their own alters.
    pub ego: Vec<bool>,
    /// Treatment of the recruiting ego.
    pub alter: Vec<bool>,
}

impl ObservedExposures {
    pub fn alter_exposed_count(&self) -> usize {
        self.alter.iter().filter(|&&f| f).count()
    }
}

pub fn observed_exposures<T: Real>(s: &EgocentricSample<T>) -> ObservedExposures {
    ObservedExposures {
        ego: vec![false; s.n_e()],
        alter: s
            .alter_ego()
            .iter()
            .map(|&e| s.ego_treatments()[e])
            .collect(),
    }
}

/// Column names for the units CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemaOptions {
    pub unit_id: String,
    pub role: String,
    pub ego_id: String,
    pub treatment: String,
    pub outcome: String,
    /// Explicit covariate columns, in order. `None` picks every column
    /// starting with `covariate_prefix`.
    pub covariates: Option<Vec<String>>,
    pub covariate_prefix: String,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            unit_id: "unit_id".into(),
            role: "role".into(),
            ego_id: "ego_id".into(),
            treatment: "z".into(),
            outcome: "y".into(),
            covariates: None,
            covariate_prefix: "x_".into(),
        }
    }
}

/// Reads and validates a units CSV file.
pub fn load_sample<T: Real>(
    path: impl AsRef<Path>,
    schema: &SchemaOptions,
    p_z: T,
) -> Result<EgocentricSample<T>, SampleError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SampleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_sample(file, schema, p_z)
}

/// Reads and validates units CSV from any reader.
pub fn read_sample<T: Real, R: Read>(
    reader: R,
    schema: &SchemaOptions,
    p_z: T,
) -> Result<EgocentricSample<T>, SampleError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SampleError::MissingColumn(name.to_string()))
    };
    let c_id = col(&schema.unit_id)?;
    let c_role = col(&schema.role)?;
    let c_ego = col(&schema.ego_id)?;
    let c_z = col(&schema.treatment)?;
    let c_y = col(&schema.outcome)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .filter(|h| h.starts_with(&schema.covariate_prefix))
            .map(str::to_string)
            .collect(),
    };
    let cov_cols = cov_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut report = ValidationReport::default();
    let mut units = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize);
        if record.len() != headers.len() {
            report.push(
                row,
                "record",
                format!(
                    "malformed row: {} fields, header has {}",
                    record.len(),
                    headers.len()
                ),
            );
            continue;
        }
        let role = match record[c_role].to_ascii_lowercase().as_str() {
            "ego" => Role::Ego,
            "alter" => Role::Alter,
            other => {
                report.push(row, &schema.role, format!("unknown role `{other}`"));
                continue;
            }
        };
        let z = record[c_z].trim();
        let treatment = if z.is_empty() {
            None
        } else {
            match z.parse::<i64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    report.push(
                        row,
                        &schema.treatment,
                        format!("non-binary treatment `{z}`"),
                    );
                    continue;
                }
            }
        };
        let parse = |c: usize, field: &str, report: &mut ValidationReport| -> Option<T> {
            match record[c].parse::<f64>() {
                Ok(v) => Some(T::lit(v)),
                Err(_) => {
                    report.push(row, field, format!("not a number: `{}`", &record[c]));
                    None
                }
            }
        };
        let Some(outcome) = parse(c_y, &schema.outcome, &mut report) else {
            continue;
        };
        let covs: Vec<Option<T>> = cov_cols
            .iter()
            .zip(&cov_names)
            .map(|(&c, n)| parse(c, n, &mut report))
            .collect();
        if covs.iter().any(Option::is_none) {
            continue;
        }
        units.push(Unit {
            unit_id: record[c_id].to_string(),
            role,
            ego_id: record[c_ego].to_string(),
            treatment,
            outcome,
            covariates: covs.into_iter().flatten().collect(),
        });
        rows.push(row.unwrap_or(units.len()));
    }
    let structural = validate_rows(&units, p_z, &rows);
    report.violations.extend(structural.violations);
    if !report.is_empty() {
        report.violations.sort_by_key(|v| v.row.unwrap_or(0));
        return Err(SampleError::Invalid(report));
    }
    Ok(EgocentricSample::build(units, p_z, cov_names))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const FIG1: &str = "unit_id,role,ego_id,z,y,x_age
1,ego,1,1,0.5,30
2,ego,2,0,0.1,40
5,alter,1,,1.0,25
6,alter,2,,0.0,33
7,alter,2,,1.0,51
";

    fn read(csv: &str) -> Result<EgocentricSample<f64>, SampleError> {
        read_sample(csv.as_bytes(), &SchemaOptions::default(), 0.5)
    }

    fn violations(err: SampleError) -> Vec<Violation> {
        match err {
            SampleError::Invalid(r) => r.violations,
            other => panic!("expected validation failure, got {other}"),
        }
    }

    #[test]
    fn loads_two_stars() {
        let s = read(FIG1).unwrap();
        assert_eq!((s.n_e(), s.n_a()), (2, 3));
        assert_eq!(s.n_e() + s.n_a(), s.len());
        assert_eq!(s.covariate_names(), ["x_age"]);
        assert_eq!(s.network(1), &[1, 2]);
        assert_eq!(s.alter_covariates(2), &[51.0]);
        assert!(s.validate().is_empty());
    }

    #[test]
    fn single_ego_without_alters_is_valid() {
        let s = read("unit_id,role,ego_id,z,y\ne,ego,e,0,1.5\n").unwrap();
        assert_eq!((s.n_e(), s.n_a()), (1, 0));
        assert_eq!(s.covariate_dim(), 0);
    }

    #[test]
    fn alter_with_treatment_is_rejected_with_row() {
        let bad = FIG1.replace("5,alter,1,,1.0", "5,alter,1,1,1.0");
        let v = violations(read(&bad).unwrap_err());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].row, Some(4));
        assert!(v[0].message.contains("alter carries treatment"));
    }

    #[test]
    fn schema_errors_are_each_reported() {
        let bad = "unit_id,role,ego_id,z,y
1,ego,1,2,0
2,ego,2,,0
2,ego,2,1,0
3,alter,9,,1
4,alter,1,,1,7
5,friend,1,,1
";
        let v = violations(read(bad).unwrap_err());
        let msgs: Vec<&str> = v.iter().map(|v| v.message.as_str()).collect();
        assert!(msgs.iter().any(|m| m.contains("non-binary")), "{msgs:?}");
        assert!(
            msgs.iter().any(|m| m.contains("has no treatment")),
            "{msgs:?}"
        );
        assert!(
            msgs.iter().any(|m| m.contains("duplicate unit_id")),
            "{msgs:?}"
        );
        assert!(msgs.iter().any(|m| m.contains("unknown ego")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("malformed row")), "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("unknown role")), "{msgs:?}");
        assert!(v.iter().all(|v| v.row.is_some()));
    }

    #[test]
    fn explicit_covariates_keep_declared_order() {
        let csv = "unit_id,role,ego_id,z,y,b,a\n1,ego,1,1,0,2,3\n";
        let schema = SchemaOptions {
            covariates: Some(vec!["a".into(), "b".into()]),
            ..Default::default()
        };
        let s: EgocentricSample<f64> = read_sample(csv.as_bytes(), &schema, 0.5).unwrap();
        assert_eq!(s.ego_covariates(0), &[3.0, 2.0]);
    }

    #[test]
    fn validate_reports_missing_ego_and_dimension_mismatch() {
        let ok = vec![
            Unit::ego("e", true, 1.0, vec![0.0]),
            Unit::alter("a", "e", 1.0, vec![1.0]),
        ];
        assert!(validate_units(&ok, 0.5).is_empty());

        let orphan = vec![
            Unit::ego("e", true, 1.0, vec![0.0]),
            Unit::alter("a", "ghost", 1.0, vec![1.0]),
        ];
        let r = validate_units(&orphan, 0.5);
        assert_eq!(r.len(), 1);
        assert!(r.violations[0].message.contains("`a`"));

        let ragged = vec![
            Unit::ego("e", true, 1.0, vec![0.0]),
            Unit::alter("a", "e", 1.0, vec![1.0, 2.0]),
        ];
        assert_eq!(validate_units(&ragged, 0.5).len(), 1);
        assert_eq!(validate_units(&ok, 1.0).len(), 1);
    }

    #[test]
    fn report_serializes_as_json_lines() {
        let r = validate_units(&[Unit::alter("a", "x", 0.0_f64, vec![])], 0.5);
        let lines = r.to_json_lines();
        for line in lines.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(
                v.get("row").is_some() && v.get("field").is_some() && v.get("message").is_some()
            );
        }
    }

    #[test]
    fn exposures_follow_the_recruiting_ego() {
        let s = read(FIG1).unwrap();
        let f = observed_exposures(&s);
        assert_eq!(f.ego, vec![false, false]);
        // only ego 1 treated: alter 6 (recruited by ego 2) is observed unexposed
        assert_eq!(f.alter, vec![true, false, false]);

        let none = s
            .with_assignment(
                vec![false, false],
                s.ego_outcomes().to_vec(),
                s.alter_outcomes().to_vec(),
            )
            .unwrap();
        assert!(observed_exposures(&none).alter.iter().all(|&x| !x));
        assert_eq!(observed_exposures(&s), observed_exposures(&s));
    }

    #[test]
    fn exposed_alter_count_matches_treated_network_sizes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut units = Vec::new();
        for e in 0..20 {
            units.push(Unit::ego(
                format!("e{e}"),
                rng.random_bool(0.5),
                0.0,
                vec![],
            ));
            for a in 0..rng.random_range(0..5) {
                units.push(Unit::alter(
                    format!("a{e}_{a}"),
                    format!("e{e}"),
                    0.0,
                    vec![],
                ));
            }
        }
        let s = EgocentricSample::from_units(units, 0.5_f64).unwrap();
        let expected: usize = (0..s.n_e())
            .filter(|&e| s.ego_treatments()[e])
            .map(|e| s.network(e).len())
            .sum();
        assert_eq!(observed_exposures(&s).alter_exposed_count(), expected);
    }

    #[test]
    fn alter_exposure_frequency_converges_to_p_z() {
        let s = read(FIG1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let p = 0.3;
        let mut hits = vec![0usize; s.n_a()];
        for _ in 0..draws {
            let z: Vec<bool> = (0..s.n_e()).map(|_| rng.random_bool(p)).collect();
            let t = s
                .with_assignment(z, s.ego_outcomes().to_vec(), s.alter_outcomes().to_vec())
                .unwrap();
            for (h, f) in hits.iter_mut().zip(observed_exposures(&t).alter) {
                *h += f as usize;
            }
        }
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for h in hits {
            assert!((h as f64 / draws as f64 - p).abs() < 3.0 * se);
        }
    }

    #[test]
    fn single_precision_samples_load() {
        let s: EgocentricSample<f32> =
            read_sample(FIG1.as_bytes(), &SchemaOptions::default(), 0.5).unwrap();
        assert_eq!(s.alter_outcomes(), &[1.0_f32, 0.0, 1.0]);
    }
}
