//! JSON problem files and result reports, plus headerless CSV matrices.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certify::FlatTruncationReport;
use crate::driver::{Minimizer, OrderLog, OwpResult, OwpStatus};
use crate::mop::{ConstraintStructure, MopError, MopProblem, IDENTITY_TOL};
use crate::poly::{PolyError, PolyMatrix, Polynomial, TermRecord};
use crate::representation::{build_p_matrix, q_matrix, RepKind};

pub const PROBLEM_VERSION: &str = "owp-problem/1";
pub const RESULT_VERSION: &str = "owp-result/1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("parse error at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("{field}: {msg}")]
    Schema { field: String, msg: String },
    #[error("{field}: {source}")]
    Poly {
        field: String,
        #[source]
        source: PolyError,
    },
    #[error(transparent)]
    Problem(#[from] MopError),
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {msg}")]
    Csv { path: String, msg: String },
}

fn schema(field: impl Into<String>, msg: impl Into<String>) -> IoError {
    IoError::Schema {
        field: field.into(),
        msg: msg.into(),
    }
}

type PolyRecord = Vec<TermRecord>;

/// Constraint-structure descriptor, tagged by `type`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum StructureFile {
    Box {
        a: Vec<f64>,
    },
    Polyhedral {
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
    },
    Triangular {
        alpha: Vec<f64>,
        q: Vec<PolyRecord>,
    },
    Ball,
    NonnegOrthant,
    Free,
    /// Constraints come from the top-level `constraints` list.
    Custom {
        cprime1: Vec<Vec<PolyRecord>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cprime2: Option<Vec<Vec<PolyRecord>>>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub version: String,
    pub nvars: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub names: Option<Vec<String>>,
    pub preference: PolyRecord,
    pub objectives: Vec<PolyRecord>,
    /// Required for `custom`; for the other structures, when present, it
    /// must equal the induced constraints.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constraints: Vec<PolyRecord>,
    pub structure: StructureFile,
    /// The author asserts every objective and `-c_i` is convex.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convex: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qprime: Option<Vec<Vec<PolyRecord>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pprime: Option<Vec<Vec<PolyRecord>>>,
}

fn poly_from(n: usize, rec: &PolyRecord, field: &str) -> Result<Polynomial, IoError> {
    Polynomial::from_records(n, rec).map_err(|source| IoError::Poly {
        field: field.to_string(),
        source,
    })
}

fn matrix_from(n: usize, rows: &[Vec<PolyRecord>], field: &str) -> Result<PolyMatrix, IoError> {
    let rows = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, p)| poly_from(n, p, &format!("{field}[{i}][{j}]")))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    PolyMatrix::from_rows(n, rows).map_err(|source| IoError::Poly {
        field: field.to_string(),
        source,
    })
}

fn matrix_to(m: &PolyMatrix) -> Vec<Vec<PolyRecord>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j).to_records()).collect())
        .collect()
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| IoError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn from_problem(p: &MopProblem) -> Self {
        let structure = match &p.structure {
            ConstraintStructure::Box { a } => StructureFile::Box { a: a.clone() },
            ConstraintStructure::Polyhedral { a, b } => StructureFile::Polyhedral {
                a: a.clone(),
                b: b.clone(),
            },
            ConstraintStructure::Triangular { alpha, q } => StructureFile::Triangular {
                alpha: alpha.clone(),
                q: q.iter().map(|p| p.to_records()).collect(),
            },
            ConstraintStructure::Ball => StructureFile::Ball,
            ConstraintStructure::NonnegOrthant => StructureFile::NonnegOrthant,
            ConstraintStructure::Free => StructureFile::Free,
            ConstraintStructure::Custom {
                cprime1, cprime2, ..
            } => StructureFile::Custom {
                cprime1: matrix_to(cprime1),
                cprime2: cprime2.as_ref().map(matrix_to),
            },
        };
        let constraints = match &p.structure {
            ConstraintStructure::Custom { constraints, .. } => {
                constraints.iter().map(|c| c.to_records()).collect()
            }
            _ => Vec::new(),
        };
        ProblemFile {
            version: PROBLEM_VERSION.to_string(),
            nvars: p.n,
            names: Some(p.var_names.clone()),
            preference: p.preference.to_records(),
            objectives: p.objectives.iter().map(|f| f.to_records()).collect(),
            constraints,
            structure,
            convex: None,
            qprime: p.qprime.as_ref().map(matrix_to),
            pprime: p.pprime.as_ref().map(matrix_to),
        }
    }

    /// Validates the document and builds the problem. Supplied inverse
    /// matrices are checked symbolically.
    pub fn to_problem(&self) -> Result<MopProblem, IoError> {
        if self.version != PROBLEM_VERSION {
            return Err(schema(
                "version",
                format!("expected \"{PROBLEM_VERSION}\", got \"{}\"", self.version),
            ));
        }
        let n = self.nvars;
        if n == 0 {
            return Err(schema("nvars", "must be at least 1"));
        }
        if self.objectives.is_empty() {
            return Err(schema("objectives", "at least one objective is required"));
        }
        let preference = poly_from(n, &self.preference, "preference")?;
        let objectives = self
            .objectives
            .iter()
            .enumerate()
            .map(|(i, f)| poly_from(n, f, &format!("objectives[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| poly_from(n, c, &format!("constraints[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let structure = match &self.structure {
            StructureFile::Box { a } => ConstraintStructure::Box { a: a.clone() },
            StructureFile::Polyhedral { a, b } => ConstraintStructure::Polyhedral {
                a: a.clone(),
                b: b.clone(),
            },
            StructureFile::Triangular { alpha, q } => ConstraintStructure::Triangular {
                alpha: alpha.clone(),
                q: q.iter()
                    .enumerate()
                    .map(|(i, p)| poly_from(n, p, &format!("structure.q[{i}]")))
                    .collect::<Result<_, _>>()?,
            },
            StructureFile::Ball => ConstraintStructure::Ball,
            StructureFile::NonnegOrthant => ConstraintStructure::NonnegOrthant,
            StructureFile::Free => ConstraintStructure::Free,
            StructureFile::Custom { cprime1, cprime2 } => {
                if constraints.is_empty() {
                    return Err(schema("constraints", "custom structure needs constraints"));
                }
                ConstraintStructure::Custom {
                    constraints: constraints.clone(),
                    cprime1: matrix_from(n, cprime1, "structure.cprime1")?,
                    cprime2: cprime2
                        .as_ref()
                        .map(|m| matrix_from(n, m, "structure.cprime2"))
                        .transpose()?,
                }
            }
        };
        if !matches!(structure, ConstraintStructure::Custom { .. }) && !constraints.is_empty() {
            let induced = structure.constraints(n);
            let same = induced.len() == constraints.len()
                && induced
                    .iter()
                    .zip(&constraints)
                    .all(|(a, b)| a.approx_eq(b, 1e-12));
            if !same {
                return Err(schema(
                    "constraints",
                    format!("do not match the {} structure", structure.tag()),
                ));
            }
        }
        let mut prob = MopProblem::new(preference, objectives, structure)?;
        if let Some(names) = &self.names {
            if names.len() != n {
                return Err(schema("names", format!("expected {n} names, got {}", names.len())));
            }
            prob = prob.with_names(names.clone());
        }
        if let Some(q) = &self.qprime {
            let q = matrix_from(n, q, "qprime")?;
            let defect = product_defect(&q, &q_matrix(&prob), "qprime")?;
            if defect > IDENTITY_TOL {
                return Err(schema("qprime", format!("Q'Q = I fails by {defect:.3e}")));
            }
            prob.qprime = Some(q);
        }
        if let Some(p) = &self.pprime {
            let p = matrix_from(n, p, "pprime")?;
            let defect = product_defect(&p, &build_p_matrix(&prob), "pprime")?;
            if defect > IDENTITY_TOL {
                return Err(schema("pprime", format!("P'P = I fails by {defect:.3e}")));
            }
            prob.pprime = Some(p);
        }
        Ok(prob)
    }
}

fn product_defect(left: &PolyMatrix, right: &PolyMatrix, field: &str) -> Result<f64, IoError> {
    left.checked_mul(right)
        .map(|m| m.identity_defect())
        .map_err(|source| IoError::Poly {
            field: field.to_string(),
            source,
        })
}

pub fn parse_problem(text: &str) -> Result<MopProblem, IoError> {
    ProblemFile::from_json(text)?.to_problem()
}

pub fn serialize_problem(p: &MopProblem) -> String {
    ProblemFile::from_problem(p).to_json()
}

pub fn read_problem(path: &Path) -> Result<(ProblemFile, MopProblem), IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let file = ProblemFile::from_json(&text)?;
    let prob = file.to_problem()?;
    Ok((file, prob))
}

/// Reads a headerless, comma-separated, row-major matrix.
pub fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>, IoError> {
    let shown = path.display().to_string();
    let err = |msg: String| IoError::Csv {
        path: shown.clone(),
        msg,
    };
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| {
                s.parse::<f64>()
                    .map_err(|e| err(format!("row {}, column {}: {e}", i + 1, j + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_csv_matrix(path: &Path, m: &[Vec<f64>]) -> Result<(), IoError> {
    let shown = path.display().to_string();
    let err = |msg: String| IoError::Csv {
        path: shown.clone(),
        msg,
    };
    let mut wr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| err(e.to_string()))?;
    for row in m {
        wr.write_record(row.iter().map(|v| format!("{v:e}")))
            .map_err(|e| err(e.to_string()))?;
    }
    wr.flush().map_err(|e| err(e.to_string()))
}

/// JSON view of a run. `fmin` is absent when the weakly Pareto set is empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultReport {
    pub version: String,
    pub status: OwpStatus,
    pub fmin: Option<f64>,
    pub lower_bound: Option<f64>,
    pub minimizers: Vec<Minimizer>,
    pub certificate: Option<FlatTruncationReport>,
    pub order_used: u32,
    pub representation: RepKind,
    pub variables: Vec<String>,
    pub history: Vec<OrderLog>,
    pub total_seconds: f64,
    pub total_iterations: usize,
}

impl ResultReport {
    pub fn new(r: &OwpResult, total_seconds: f64) -> Self {
        ResultReport {
            version: RESULT_VERSION.to_string(),
            status: r.status,
            fmin: r.fmin.is_finite().then_some(r.fmin),
            lower_bound: r.lower_bound,
            minimizers: r.minimizers.clone(),
            certificate: r.certificate.clone(),
            order_used: r.order_used,
            representation: r.representation,
            variables: r.variables.clone(),
            history: r.history.clone(),
            total_seconds,
            total_iterations: r.history.iter().map(|h| h.iterations).sum(),
        }
    }

    pub fn to_result(&self) -> OwpResult {
        OwpResult {
            status: self.status,
            fmin: self.fmin.unwrap_or(f64::INFINITY),
            lower_bound: self.lower_bound,
            minimizers: self.minimizers.clone(),
            certificate: self.certificate.clone(),
            order_used: self.order_used,
            representation: self.representation,
            variables: self.variables.clone(),
            history: self.history.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        serde_json::from_str(text).map_err(|e| IoError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"{
      "version": "owp-problem/1",
      "nvars": 2,
      "preference": [{"exp": [2, 0], "coef": 1.0}, {"exp": [0, 1], "coef": 1.0}],
      "objectives": [
        [{"exp": [2, 0], "coef": 1.0}, {"exp": [0, 2], "coef": 1.0},
         {"exp": [1, 0], "coef": 1.0}, {"exp": [0, 1], "coef": -2.0}],
        [{"exp": [2, 0], "coef": 1.0}, {"exp": [0, 2], "coef": 1.0},
         {"exp": [1, 0], "coef": 2.0}, {"exp": [0, 1], "coef": -2.0}]
      ],
      "constraints": [
        [{"exp": [0, 0], "coef": 1.0}, {"exp": [2, 0], "coef": -1.0}, {"exp": [0, 1], "coef": -1.0}]
      ],
      "structure": {"type": "custom", "cprime1": [[[], [{"exp": [0, 0], "coef": -1.0}]]]}
    }"#;

    #[test]
    fn parses_custom() {
        let p = parse_problem(EXAMPLE).unwrap();
        assert_eq!((p.n, p.m(), p.l()), (2, 2, 1));
        assert!(p.cprime_defect().unwrap() < 1e-12);
    }

    #[test]
    fn bad_inverse_is_rejected() {
        let bad = EXAMPLE.replace(r#""coef": -1.0}]]]"#, r#""coef": 1.0}]]]"#);
        assert!(matches!(parse_problem(&bad), Err(IoError::Problem(MopError::IdentityFailed(_)))));
    }

    #[test]
    fn empty_objectives_rejected() {
        let text = r#"{"version": "owp-problem/1", "nvars": 1, "preference": [],
                       "objectives": [], "structure": {"type": "free"}}"#;
        let err = parse_problem(text).unwrap_err();
        assert!(err.to_string().starts_with("objectives"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_problem("{\n  \"version\": ").unwrap_err();
        assert!(matches!(err, IoError::Syntax { line: 2, .. }), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = EXAMPLE.replacen("\"nvars\"", "\"nvar\": 2, \"nvars\"", 1);
        assert!(parse_problem(&text).is_err());
    }

    #[test]
    fn round_trip_box() {
        let n = 3;
        let f = Polynomial::var(n, 0).pow(2);
        let p = MopProblem::new(
            Polynomial::var(n, 1),
            vec![f.clone(), &f + &Polynomial::var(n, 2).scale(0.1)],
            ConstraintStructure::Box {
                a: vec![1.0, 2.0, 0.5],
            },
        )
        .unwrap();
        let back = parse_problem(&serialize_problem(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn induced_constraints_checked() {
        let text = r#"{"version": "owp-problem/1", "nvars": 1,
            "preference": [{"exp": [1], "coef": 1.0}],
            "objectives": [[{"exp": [2], "coef": 1.0}]],
            "constraints": [[{"exp": [1], "coef": 2.0}]],
            "structure": {"type": "nonneg_orthant"}}"#;
        assert!(parse_problem(text).is_err());
        let ok = text.replace("2.0}]]", "1.0}]]");
        assert!(parse_problem(&ok).is_ok());
    }
}
