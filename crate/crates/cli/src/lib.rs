//! Command dispatch and result files for the `stochdp` binary.

pub mod commands;
pub mod render;
pub mod schema;

use std::time::Instant;

use serde_json::{json, Map, Value};
use thiserror::Error;

use stochdp::polyhedra::PolyError;
use stochdp::quad::QuadError;
use stochdp::DpError;

pub use commands::Command;
use schema::{CheckLevel, DualIndexOpt};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_LINEARITY: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SCHEMA: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("{0}")]
    Io(String),
}

impl From<PolyError> for CliError {
    fn from(e: PolyError) -> CliError {
        CliError::Dp(DpError::Poly(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Dp(DpError::LinearityViolated { .. }) => EXIT_LINEARITY,
            CliError::Dp(DpError::Infeasible) => EXIT_INFEASIBLE,
            CliError::Dp(DpError::Spec(_) | DpError::Tree(_)) => EXIT_SCHEMA,
            CliError::Quad(QuadError::MissingData(_) | QuadError::DimensionMismatch { .. }) => EXIT_SCHEMA,
            _ => EXIT_OTHER,
        }
    }

    /// JSON error object with a machine-readable kind.
    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        let kind = match self {
            CliError::Schema(_) | CliError::Dp(DpError::Spec(_) | DpError::Tree(_)) => "SchemaError",
            CliError::Dp(DpError::LinearityViolated { node, witness }) => {
                obj.insert("node".into(), json!(node));
                obj.insert("witness".into(), render::vector(witness));
                "LinearityViolated"
            }
            CliError::Dp(DpError::Infeasible) => "Infeasible",
            CliError::Dp(DpError::UnboundedBelow { node, ray }) => {
                obj.insert("node".into(), json!(node));
                obj.insert("ray".into(), render::vector(ray));
                "UnboundedBelow"
            }
            CliError::Dp(DpError::LowerBoundViolated { node }) => {
                obj.insert("node".into(), json!(node));
                "LowerBoundViolated"
            }
            CliError::Dp(DpError::Poly(PolyError::RowCapExceeded { cap })) => {
                obj.insert("cap".into(), json!(cap));
                "RowCapExceeded"
            }
            CliError::Dp(DpError::Poly(PolyError::DimensionBudgetExceeded { .. })) => "DimensionBudgetExceeded",
            CliError::Dp(DpError::Poly(_)) => "PolyhedralError",
            CliError::Quad(QuadError::MissingData(_) | QuadError::DimensionMismatch { .. }) => "SchemaError",
            CliError::Quad(_) => "QuadraticError",
            CliError::Io(_) => "IoError",
        };
        obj.insert("kind".into(), json!(kind));
        obj.insert("message".into(), json!(self.to_string()));
        Value::Object(obj)
    }
}

/// Flags that override the instance file's `options`.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub check_level: Option<CheckLevel>,
    pub dual_index: Option<DualIndexOpt>,
}

/// A finished command: the result document and the process exit code.
pub struct Outcome {
    pub exit_code: i32,
    pub result: Value,
}

fn envelope(cmd: Command, model: Option<&str>, seconds: f64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("schema".into(), json!(schema::SCHEMA_VERSION));
    m.insert("command".into(), json!(cmd.name()));
    if let Some(model) = model {
        m.insert("model".into(), json!(model));
    }
    m.insert("timing".into(), json!({ "seconds": seconds }));
    m
}

/// Parses `text` as an instance file and runs `cmd` on it.
pub fn run(cmd: Command, text: &str, flags: &Flags) -> Outcome {
    let start = Instant::now();
    let parsed = schema::parse_instance(text).and_then(schema::Instance::new);
    let model = parsed.as_ref().ok().map(|i| i.file.model.kind());
    let result = parsed.and_then(|inst| {
        let opts = commands::Options::resolve(&inst.file.options, flags);
        commands::execute(cmd, &inst, &opts)
    });
    let mut doc = envelope(cmd, model, start.elapsed().as_secs_f64());
    let exit_code = match result {
        Ok(report) => {
            doc.insert("status".into(), json!("ok"));
            doc.extend(report.body);
            match report.failure {
                Some(err) => {
                    doc.insert("status".into(), json!("error"));
                    doc.insert("error".into(), err.to_json());
                    err.exit_code()
                }
                None => EXIT_OK,
            }
        }
        Err(err) => {
            doc.insert("status".into(), json!("error"));
            doc.insert("error".into(), err.to_json());
            err.exit_code()
        }
    };
    Outcome {
        exit_code,
        result: Value::Object(doc),
    }
}

/// An error without an instance, e.g. an unreadable file.
pub fn failure(cmd: Command, err: &CliError) -> Outcome {
    let mut doc = envelope(cmd, None, 0.0);
    doc.insert("status".into(), json!("error"));
    doc.insert("error".into(), err.to_json());
    Outcome {
        exit_code: err.exit_code(),
        result: Value::Object(doc),
    }
}
